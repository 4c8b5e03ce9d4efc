"""Integer inference with every dense/conv product routed through a LUT multiplier.

A :class:`QuantModel` is a chain of layers over signed sign-magnitude codes.
Compute layers accumulate exactly in ``int64``, add an accumulator-precision
bias, then requantize to the activation width with a static per-layer scale.
ReLU and pooling act on codes directly. The final compute layer's
accumulators are the class scores.
"""
from __future__ import annotations

import copy
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from lutna import lutcore, nn
from lutna.fixedpoint import QuantParams, calibrate_scale, quantize_array, requantize
from lutna.lutcore import MultiplierConfig, Scheme

COMPUTE_KINDS = ("dense", "conv2d")


def width_for(n_bits: int) -> int:
    """Smallest multiplier width that holds an ``n_bits`` magnitude."""
    for w in lutcore.SUPPORTED_WIDTHS:
        if n_bits <= w:
            return w
    raise ValueError(f"no multiplier width holds {n_bits} bits")


@dataclass
class QLayer:
    kind: str
    # compute layers
    weight: np.ndarray | None = None
    weight_params: QuantParams | None = None
    bias: np.ndarray | None = None
    mask: np.ndarray | None = None
    out_params: QuantParams | None = None
    config: MultiplierConfig | None = None
    k: int = 0
    pad: int = 0
    real_weight: np.ndarray | None = None
    real_bias: np.ndarray | None = None
    # residual
    body: list = field(default_factory=list)

    @property
    def is_compute(self) -> bool:
        return self.kind in COMPUTE_KINDS

    def compute_layers(self) -> list["QLayer"]:
        if self.is_compute:
            return [self]
        return [c for b in self.body for c in b.compute_layers()]


@dataclass
class QuantModel:
    layers: list[QLayer]
    input_shape: tuple[int, ...]
    input_params: QuantParams
    n_classes: int
    meta: dict = field(default_factory=dict)

    def compute_layers(self) -> list[QLayer]:
        return [c for layer in self.layers for c in layer.compute_layers()]

    @property
    def act_bits(self) -> int:
        return self.input_params.n_bits

    def plan(self) -> list[MultiplierConfig]:
        return [c.config for c in self.compute_layers()]

    def with_plan(self, plan) -> "QuantModel":
        plan = list(plan)
        m = copy.deepcopy(self)
        layers = m.compute_layers()
        if len(plan) != len(layers):
            raise ValueError(f"plan has {len(plan)} entries for {len(layers)} compute layers")
        for layer, cfg in zip(layers, plan):
            layer.config = cfg
        return m

    def mac_counts(self) -> list[int]:
        """Surviving MACs per compute layer for one input sample."""
        out = []

        def walk(layers, shape):
            for layer in layers:
                if layer.kind == "dense":
                    out.append(int(layer.mask.sum()))
                    shape = (layer.weight.shape[0],)
                elif layer.kind == "conv2d":
                    _, h, w = shape
                    ho, wo = h + 2 * layer.pad - layer.k + 1, w + 2 * layer.pad - layer.k + 1
                    out.append(int(layer.mask.sum()) * ho * wo)
                    shape = (layer.weight.shape[0], ho, wo)
                elif layer.kind in ("maxpool", "avgpool"):
                    c, h, w = shape
                    shape = (c, h // layer.k, w // layer.k)
                elif layer.kind == "flatten":
                    shape = (int(np.prod(shape)),)
                elif layer.kind == "residual":
                    walk(layer.body, shape)
            return shape

        walk(self.layers, self.input_shape)
        return out

    def sparsity(self) -> float:
        cl = self.compute_layers()
        total = sum(c.mask.size for c in cl)
        return 1.0 - sum(int(c.mask.sum()) for c in cl) / total if total else 0.0


@dataclass
class ForwardResult:
    scores: np.ndarray
    activations: list[np.ndarray]
    params: list[QuantParams]


# ------------------------------------------------------------ quantization


def _calibrate_act(x: np.ndarray, n_bits: int, relu_next: bool) -> QuantParams:
    return calibrate_scale(np.maximum(x, 0.0) if relu_next else x, n_bits)


def _round_bias(b: np.ndarray, scale: float) -> np.ndarray:
    v = np.asarray(b, dtype=np.float64) * scale
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.int64)


def _quantize_layers(layers, x, in_params, act_bits, weight_bits, config):
    out = []
    params = in_params
    for idx, layer in enumerate(layers):
        relu_next = idx + 1 < len(layers) and isinstance(layers[idx + 1], nn.ReLU)
        y = layer.forward(x)
        if isinstance(layer, (nn.Dense, nn.Conv2d)):
            w = layer.W * layer.mask
            wp = calibrate_scale(w, weight_bits)
            op = _calibrate_act(y, act_bits, relu_next)
            q = QLayer(
                kind=layer.kind,
                weight=quantize_array(w, wp) * layer.mask,
                weight_params=wp,
                bias=_round_bias(layer.b, wp.scale * params.scale),
                mask=layer.mask.copy(),
                out_params=op,
                config=config,
                k=getattr(layer, "k", 0),
                pad=getattr(layer, "pad", 0),
                real_weight=w.copy(),
                real_bias=layer.b.copy(),
            )
            params = op
        elif isinstance(layer, nn.Residual):
            body, body_params, _ = _quantize_layers(layer.body, x, params, act_bits, weight_bits, config)
            op = _calibrate_act(y, act_bits, relu_next)
            q = QLayer(kind="residual", body=body, out_params=op)
            params = op
        else:
            q = QLayer(kind=layer.kind, k=getattr(layer, "k", 0))
        out.append(q)
        x = y
    return out, params, x


def quantize_network(net: nn.Network, calib_x: np.ndarray, act_bits: int = 8, weight_bits: int = 8,
                     config: MultiplierConfig | None = None, n_classes: int | None = None,
                     meta: dict | None = None) -> QuantModel:
    """Post-training quantization with max-abs static scales from ``calib_x``."""
    if config is None:
        config = MultiplierConfig(Scheme.DNC_EXACT, width_for(act_bits), width_for(weight_bits))
    calib_x = np.asarray(calib_x, dtype=np.float64)
    in_params = calibrate_scale(calib_x, act_bits)
    layers, _, _ = _quantize_layers(net.layers, calib_x, in_params, act_bits, weight_bits, config)
    n_classes = n_classes if n_classes is not None else int(net.output_shape[0])
    return QuantModel(layers, tuple(net.input_shape), in_params, n_classes, dict(meta or {}))


def to_network(model: QuantModel) -> nn.Network:
    """Rebuild the real-valued network from the stored real weights."""

    def build(qlayers):
        layers = []
        for q in qlayers:
            if q.kind in COMPUTE_KINDS:
                if q.real_weight is None:
                    raise ValueError("model carries no real-valued weights")
                if q.kind == "dense":
                    layer = nn.Dense(q.weight.shape[1], q.weight.shape[0])
                else:
                    o, c, k, _ = q.weight.shape
                    layer = nn.Conv2d(c, o, k, q.pad)
                layer.W = q.real_weight.copy()
                layer.b = q.real_bias.copy()
                layer.mask = q.mask.copy()
            elif q.kind == "residual":
                layer = nn.Residual(build(q.body))
            else:
                layer = {"relu": nn.ReLU, "flatten": nn.Flatten}.get(q.kind)
                layer = layer() if layer else {"maxpool": nn.MaxPool, "avgpool": nn.AvgPool}[q.kind](q.k)
            layers.append(layer)
        return layers

    return nn.Network(build(model.layers), model.input_shape)


# ------------------------------------------------------------------ forward


def _avgpool_codes(x: np.ndarray, k: int) -> np.ndarray:
    n, c, h, w = x.shape
    s = x[:, :, : h // k * k, : w // k * k].reshape(n, c, h // k, k, w // k, k).sum(axis=(3, 5))
    kk = k * k
    return np.sign(s) * ((2 * np.abs(s) + kk) // (2 * kk))


def _maxpool_codes(x: np.ndarray, k: int) -> np.ndarray:
    n, c, h, w = x.shape
    return x[:, :, : h // k * k, : w // k * k].reshape(n, c, h // k, k, w // k, k).max(axis=(3, 5))


def _accumulate(layer: QLayer, x: np.ndarray, params: QuantParams, cfg: MultiplierConfig) -> np.ndarray:
    if cfg is None:
        raise ValueError(f"{layer.kind} layer has no multiplier scheme assigned")
    if params.n_bits > cfg.data_bits or layer.weight_params.n_bits > cfg.weight_bits:
        raise lutcore.WidthError(
            f"{cfg.label} cannot take {params.n_bits}b activations x {layer.weight_params.n_bits}b weights"
        )
    if layer.kind == "dense":
        if x.ndim != 2 or x.shape[1] != layer.weight.shape[1]:
            raise ValueError(f"dense layer expects (N, {layer.weight.shape[1]}), got {x.shape}")
        return lutcore.matmul(layer.weight, x, cfg) + layer.bias
    o = layer.weight.shape[0]
    if x.ndim != 4 or x.shape[1] != layer.weight.shape[1]:
        raise ValueError(f"conv2d layer expects (N, {layer.weight.shape[1]}, H, W), got {x.shape}")
    cols, ho, wo = nn.im2col(x, layer.k, layer.pad)
    acc = lutcore.matmul(layer.weight.reshape(o, -1), cols, cfg) + layer.bias
    return acc.reshape(x.shape[0], ho, wo, o).transpose(0, 3, 1, 2)


def _run(layers, x, params, plan_iter, acts, record, is_top):
    last = len(layers) - 1
    scores_acc = None
    for idx, layer in enumerate(layers):
        if layer.is_compute:
            cfg = next(plan_iter)
            acc = _accumulate(layer, x, params, cfg)
            in_scale = layer.weight_params.scale * params.scale
            if is_top and idx == last:
                scores_acc = acc / in_scale
            x = requantize(acc, layer.out_params.scale / in_scale, layer.out_params.n_bits)
            params = layer.out_params
        elif layer.kind == "relu":
            x = np.maximum(x, 0)
        elif layer.kind == "maxpool":
            x = _maxpool_codes(x, layer.k)
        elif layer.kind == "avgpool":
            x = _avgpool_codes(x, layer.k)
        elif layer.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif layer.kind == "residual":
            y, y_params, _ = _run(layer.body, x, params, plan_iter, None, False, False)
            op = layer.out_params
            real = y.astype(np.float64) / y_params.scale + x.astype(np.float64) / params.scale
            x = requantize(real, op.scale, op.n_bits)
            params = op
        else:
            raise ValueError(f"unknown layer kind {layer.kind!r}")
        if record:
            acts.append(x)
    return x, params, scores_acc


def forward(model: QuantModel, inputs, plan=None, *, quantized_input: bool = False) -> ForwardResult:
    """Run the integer pipeline.

    ``inputs`` are real values quantized with ``model.input_params`` unless
    ``quantized_input`` is set. ``plan`` overrides each compute layer's
    multiplier config.
    """
    x = np.asarray(inputs)
    if tuple(x.shape[1:]) != tuple(model.input_shape):
        raise ValueError(f"input shape {x.shape[1:]} does not match model input {model.input_shape}")
    codes = x.astype(np.int64) if quantized_input else quantize_array(x, model.input_params)
    configs = list(plan) if plan is not None else model.plan()
    if len(configs) != len(model.compute_layers()):
        raise ValueError(f"plan has {len(configs)} entries for {len(model.compute_layers())} compute layers")
    acts: list[np.ndarray] = []
    out, params, scores_acc = _run(model.layers, codes, model.input_params, iter(configs), acts, True, True)
    scores = scores_acc if scores_acc is not None else out.astype(np.float64) / params.scale
    return ForwardResult(scores.reshape(len(codes), -1), acts, [])


def predict(model: QuantModel, x, plan=None, batch: int = 256, workers: int = 1) -> np.ndarray:
    chunks = [x[i:i + batch] for i in range(0, len(x), batch)]

    def one(c):
        return forward(model, c, plan).scores.argmax(1)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(one, chunks))
    else:
        parts = [one(c) for c in chunks]
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)


def evaluate(model: QuantModel, dataset, plan=None, batch: int = 256, workers: int = 1) -> float:
    """Top-1 accuracy."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return float(np.mean(predict(model, dataset.x, plan, batch, workers) == dataset.y))


# ------------------------------------------------------------- statistics


@dataclass
class ActivationHistogram:
    n_bits: int
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (1 << self.n_bits,):
            raise ValueError(f"histogram for {self.n_bits} bits needs {1 << self.n_bits} bins")
        if (self.counts < 0).any():
            raise ValueError("negative histogram count")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            raise ValueError("empty histogram")
        return self.counts / self.total


def _rescale_mags(mags: np.ndarray, from_bits: int, to_bits: int) -> np.ndarray:
    if from_bits == to_bits:
        return mags
    return requantize(mags, ((1 << to_bits) - 1) / ((1 << from_bits) - 1), to_bits)


def _settled(layers) -> list[int]:
    # layer outputs not immediately overwritten by a following relu
    return [i for i in range(len(layers)) if not (i + 1 < len(layers) and layers[i + 1].kind == "relu")]


def activation_histogram(model: QuantModel, dataset, n_bits: int | None = None, batch: int = 256) -> ActivationHistogram:
    """Histogram of settled per-layer activation magnitudes over ``dataset``."""
    n_bits = n_bits or model.act_bits
    counts = np.zeros(1 << n_bits, dtype=np.int64)
    keep = _settled(model.layers)
    for i in range(0, len(dataset), batch):
        res = forward(model, dataset.x[i:i + batch])
        params = _layer_out_bits(model)
        for j in keep:
            mags = np.abs(res.activations[j]).ravel()
            mags = _rescale_mags(mags, params[j], n_bits)
            counts += np.bincount(mags, minlength=1 << n_bits)
    return ActivationHistogram(n_bits, counts)


def _layer_out_bits(model: QuantModel) -> list[int]:
    bits = []
    cur = model.input_params.n_bits
    for layer in model.layers:
        if layer.out_params is not None:
            cur = layer.out_params.n_bits
        bits.append(cur)
    return bits


def weight_histogram(model: QuantModel, n_bits: int | None = None) -> ActivationHistogram:
    """Histogram of unpruned weight magnitudes, rescaled to ``n_bits`` if given."""
    layers = model.compute_layers()
    n_bits = n_bits or max(c.weight_params.n_bits for c in layers)
    counts = np.zeros(1 << n_bits, dtype=np.int64)
    for c in layers:
        mags = np.abs(c.weight[c.mask])
        counts += np.bincount(_rescale_mags(mags, c.weight_params.n_bits, n_bits), minlength=1 << n_bits)
    return ActivationHistogram(n_bits, counts)


def lsb_product_distribution(hist: ActivationHistogram, weight_hist: ActivationHistogram) -> np.ndarray:
    """Exact distribution of ``w * chunk`` where ``chunk`` is the low 2 bits of an
    activation code from ``hist`` and ``w`` a weight magnitude from ``weight_hist``.

    Index ``v`` of the result is ``P(product == v)``, ``v`` in ``0 .. 3*(2**n_w - 1)``.
    """
    p_code = hist.probabilities()
    p_w = weight_hist.probabilities()
    p_chunk = np.zeros(4)
    np.add.at(p_chunk, np.arange(p_code.size) & 3, p_code)
    out = np.zeros(3 * (p_w.size - 1) + 1)
    for c in range(4):
        for w in range(p_w.size):
            out[w * c] += p_w[w] * p_chunk[c]
    return out
