"""Small real-valued network with manual backprop, used for training.

Only what the desk-scale experiments need: dense, conv2d (stride 1, zero
padding), relu, non-overlapping max/avg pooling, flatten and a residual
wrapper whose body preserves shape. Every weight tensor carries a boolean
keep-mask; masked weights and their gradients are held at exactly zero.
"""
from __future__ import annotations

import numpy as np


def xavier_init(shape, rng: np.random.Generator) -> np.ndarray:
    """Glorot-uniform sample: ``U(-a, a)`` with ``a = sqrt(6 / (fan_in + fan_out))``."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ValueError("cannot derive fan-in/fan-out from a scalar shape")
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    else:
        receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
        fan_out, fan_in = shape[0] * receptive, shape[1] * receptive
    if fan_in == 0 or fan_out == 0:
        raise ValueError(f"zero fan for shape {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def im2col(x: np.ndarray, k: int, pad: int) -> tuple[np.ndarray, int, int]:
    """(N, C, H, W) -> (N*Ho*Wo, C*k*k) patches for a stride-1 ``k x k`` window."""
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    n, c, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))  # N,C,Ho,Wo,k,k
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    return np.ascontiguousarray(cols), ho, wo


def col2im(cols: np.ndarray, x_shape, k: int, pad: int) -> np.ndarray:
    n, c, h, w = x_shape
    hp, wp = h + 2 * pad, w + 2 * pad
    ho, wo = hp - k + 1, wp - k + 1
    cols = cols.reshape(n, ho, wo, c, k, k)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i:i + ho, j:j + wo] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, pad:pad + h, pad:pad + w] if pad else out


class Layer:
    kind = "layer"
    has_weights = False

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError

    def compute_layers(self):
        return [self] if self.has_weights else []


class Dense(Layer):
    kind = "dense"
    has_weights = True

    def __init__(self, n_in: int, n_out: int):
        self.W = np.zeros((n_out, n_in))
        self.b = np.zeros(n_out)
        self.mask = np.ones_like(self.W, dtype=bool)

    def out_shape(self, in_shape):
        if in_shape != (self.W.shape[1],):
            raise ValueError(f"dense expects input {(self.W.shape[1],)}, got {in_shape}")
        return (self.W.shape[0],)

    def forward(self, x, train=False):
        self._x = x
        return x @ self.W.T + self.b

    def backward(self, g):
        self.gW = (g.T @ self._x) * self.mask
        self.gb = g.sum(0)
        return g @ self.W


class Conv2d(Layer):
    kind = "conv2d"
    has_weights = True

    def __init__(self, c_in: int, c_out: int, k: int, pad: int = 0):
        self.W = np.zeros((c_out, c_in, k, k))
        self.b = np.zeros(c_out)
        self.mask = np.ones_like(self.W, dtype=bool)
        self.k, self.pad = k, pad

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.W.shape[1]:
            raise ValueError(f"conv2d expects {self.W.shape[1]} channels, got {c}")
        return (self.W.shape[0], h + 2 * self.pad - self.k + 1, w + 2 * self.pad - self.k + 1)

    def forward(self, x, train=False):
        cols, ho, wo = im2col(x, self.k, self.pad)
        self._cols, self._xshape = cols, x.shape
        out = cols @ self.W.reshape(self.W.shape[0], -1).T + self.b
        return out.reshape(x.shape[0], ho, wo, -1).transpose(0, 3, 1, 2)

    def backward(self, g):
        o = self.W.shape[0]
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        self.gW = (g2.T @ self._cols).reshape(self.W.shape) * self.mask
        self.gb = g2.sum(0)
        dcols = g2 @ self.W.reshape(o, -1)
        return col2im(dcols, self._xshape, self.k, self.pad)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False):
        self._pos = x > 0
        return np.where(self._pos, x, 0.0)

    def backward(self, g):
        return g * self._pos


class MaxPool(Layer):
    kind = "maxpool"

    def __init__(self, k: int = 2):
        self.k = k

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h // self.k, w // self.k)

    def forward(self, x, train=False):
        k = self.k
        n, c, h, w = x.shape
        x = x[:, :, : h // k * k, : w // k * k]
        blocks = x.reshape(n, c, h // k, k, w // k, k)
        out = blocks.max(axis=(3, 5))
        self._shape = (n, c, h, w)
        self._arg = blocks == out[:, :, :, None, :, None]
        return out

    def backward(self, g):
        n, c, h, w = self._shape
        k = self.k
        # route to the first maximal element of each window
        arg = self._arg.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // k, w // k, k * k)
        first = np.zeros_like(arg)
        idx = arg.argmax(-1)
        np.put_along_axis(first, idx[..., None], True, axis=-1)
        gb = first * g[..., None]
        gb = gb.reshape(n, c, h // k, w // k, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // k * k, w // k * k)
        out = np.zeros((n, c, h, w))
        out[:, :, : h // k * k, : w // k * k] = gb
        return out


class AvgPool(Layer):
    kind = "avgpool"

    def __init__(self, k: int = 2):
        self.k = k

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, h // self.k, w // self.k)

    def forward(self, x, train=False):
        k = self.k
        n, c, h, w = x.shape
        self._shape = x.shape
        x = x[:, :, : h // k * k, : w // k * k]
        return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))

    def backward(self, g):
        n, c, h, w = self._shape
        k = self.k
        up = np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k)
        out = np.zeros((n, c, h, w))
        out[:, :, : h // k * k, : w // k * k] = up
        return out


class Flatten(Layer):
    kind = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._shape)


class Residual(Layer):
    """``x + body(x)``; the body must preserve shape."""

    kind = "residual"

    def __init__(self, body: list[Layer]):
        self.body = body

    def out_shape(self, in_shape):
        s = in_shape
        for layer in self.body:
            s = layer.out_shape(s)
        if s != in_shape:
            raise ValueError(f"residual body changes shape {in_shape} -> {s}")
        return s

    def forward(self, x, train=False):
        y = x
        for layer in self.body:
            y = layer.forward(y, train)
        return x + y

    def backward(self, g):
        gy = g
        for layer in reversed(self.body):
            gy = layer.backward(gy)
        return g + gy

    def compute_layers(self):
        return [c for layer in self.body for c in layer.compute_layers()]


class Network:
    def __init__(self, layers: list[Layer], input_shape: tuple[int, ...]):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        s = self.input_shape
        for layer in layers:
            s = layer.out_shape(s)
        self.output_shape = s

    def compute_layers(self) -> list[Layer]:
        return [c for layer in self.layers for c in layer.compute_layers()]

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def predict(self, x, batch: int = 1024) -> np.ndarray:
        return np.concatenate([self.forward(x[i:i + batch]).argmax(1) for i in range(0, len(x), batch)]) \
            if len(x) else np.zeros(0, dtype=np.int64)

    def accuracy(self, x, y) -> float:
        if len(y) == 0:
            raise ValueError("empty dataset")
        return float(np.mean(self.predict(x) == y))

    def weights(self) -> list[np.ndarray]:
        return [c.W for c in self.compute_layers()]

    def n_weights(self) -> int:
        return sum(c.W.size for c in self.compute_layers())

    def sparsity(self) -> float:
        total = self.n_weights()
        kept = sum(int(c.mask.sum()) for c in self.compute_layers())
        return 1.0 - kept / total


def build_layers(spec: list, input_shape, n_classes: int) -> list[Layer]:
    """Turn ``[("conv", 8, 3), ("relu",), ("maxpool", 2), ("flatten",), ("dense", n)]``
    into layers, inferring input sizes. ``("dense", "classes")`` uses ``n_classes``;
    ``("residual", [...])`` nests a body.
    """
    layers: list[Layer] = []
    shape = tuple(input_shape)
    for item in spec:
        kind, *args = item
        if kind == "dense":
            n_out = n_classes if args[0] == "classes" else int(args[0])
            if len(shape) != 1:
                raise ValueError(f"dense layer needs a flat input, got {shape}")
            layer = Dense(shape[0], n_out)
        elif kind == "conv":
            pad = int(args[2]) if len(args) > 2 else 0
            layer = Conv2d(shape[0], int(args[0]), int(args[1]), pad)
        elif kind == "relu":
            layer = ReLU()
        elif kind == "maxpool":
            layer = MaxPool(int(args[0]) if args else 2)
        elif kind == "avgpool":
            layer = AvgPool(int(args[0]) if args else 2)
        elif kind == "flatten":
            layer = Flatten()
        elif kind == "residual":
            layer = Residual(build_layers(args[0], shape, n_classes))
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        shape = layer.out_shape(shape)
        layers.append(layer)
    return layers


ARCHS = {
    "mlp": [("dense", 32), ("relu",), ("dense", 32), ("relu",), ("dense", "classes")],
    "cnn": [("conv", 8, 3, 1), ("relu",), ("maxpool", 2), ("conv", 16, 3, 1), ("relu",), ("maxpool", 2),
            ("flatten",), ("dense", 32), ("relu",), ("dense", "classes")],
    "resnet": [("conv", 8, 3, 1), ("relu",),
               ("residual", [("conv", 8, 3, 1), ("relu",), ("conv", 8, 3, 1)]), ("relu",),
               ("maxpool", 2), ("flatten",), ("dense", "classes")],
}


def build_network(arch, input_shape, n_classes: int, rng: np.random.Generator) -> Network:
    spec = ARCHS[arch] if isinstance(arch, str) else arch
    if isinstance(arch, str) and arch == "mlp" and len(input_shape) != 1:
        spec = [("flatten",)] + spec
    net = Network(build_layers(spec, input_shape, n_classes), input_shape)
    for c in net.compute_layers():
        c.W = xavier_init(c.W.shape, rng)
    return net


def softmax_xent(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    z = logits - logits.max(1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(1, keepdims=True)
    n = len(y)
    loss = float(-np.log(p[np.arange(n), y] + 1e-300).mean())
    p[np.arange(n), y] -= 1.0
    return loss, p / n
