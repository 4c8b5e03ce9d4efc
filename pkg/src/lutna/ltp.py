"""Lottery-ticket pruning with a small deterministic SGD trainer."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from lutna import nn, netsim
from lutna.datasets import Dataset


class DivergenceError(RuntimeError):
    pass


class PruneError(ValueError):
    pass


@dataclass(frozen=True)
class LtpConfig:
    prune_percent: float = 0.2
    max_rounds: int = 10
    epochs_per_round: int = 20
    accuracy_drop_limit: float = 0.01
    seed: int = 0
    scope: str = "global"       # or "layer"
    reinit: str = "rewind"      # or "random"
    lr: float = 0.1
    batch_size: int = 32
    val_fraction: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.prune_percent < 1.0:
            raise ValueError("prune_percent must be in (0, 1)")
        if self.max_rounds < 0 or self.epochs_per_round < 1:
            raise ValueError("max_rounds must be >= 0 and epochs_per_round >= 1")
        if self.accuracy_drop_limit < 0:
            raise ValueError("accuracy_drop_limit must be >= 0")
        if self.scope not in ("global", "layer"):
            raise ValueError(f"unknown prune scope {self.scope!r}")
        if self.reinit not in ("rewind", "random"):
            raise ValueError(f"unknown reinit mode {self.reinit!r}")


@dataclass
class RoundRecord:
    round: int
    sparsity: float
    train_acc: float
    val_acc: float


@dataclass
class TrainState:
    net: nn.Network
    theta_initial: list[np.ndarray]
    rng: np.random.Generator
    round: int = 0
    log: list[RoundRecord] = field(default_factory=list)
    epochs_done: int = 0

    @classmethod
    def create(cls, net: nn.Network, seed: int) -> "TrainState":
        return cls(net, [c.W.copy() for c in net.compute_layers()], np.random.default_rng(seed))

    @property
    def masks(self) -> list[np.ndarray]:
        return [c.mask for c in self.net.compute_layers()]

    def sparsity(self) -> float:
        return self.net.sparsity()


def lr_at(epoch: int, epochs: int, base: float = 0.1) -> float:
    """Halve the rate after each third of the run."""
    return base * 0.5 ** min(2, (3 * epoch) // max(epochs, 1))


def train(state: TrainState, data: Dataset, epochs: int, lr: float = 0.1, batch_size: int = 32) -> TrainState:
    """Plain minibatch SGD on softmax cross-entropy; pruned weights stay zero."""
    layers = state.net.compute_layers()
    for epoch in range(epochs):
        rate = lr_at(epoch, epochs, lr)
        order = state.rng.permutation(len(data))
        for i in range(0, len(order), batch_size):
            idx = order[i:i + batch_size]
            loss, g = nn.softmax_xent(state.net.forward(data.x[idx], train=True), data.y[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss in round {state.round}, epoch {epoch}")
            state.net.backward(g)
            for c in layers:
                c.W -= rate * c.gW
                c.W *= c.mask
                c.b -= rate * c.gb
        state.epochs_done += 1
    return state


def _prune_indices(mags: np.ndarray, alive: np.ndarray, p: float) -> np.ndarray:
    surv = np.flatnonzero(alive)
    n_prune = int(math.floor(p * surv.size + 0.5))
    if n_prune >= surv.size:
        raise PruneError(f"pruning {p:.0%} would remove all {surv.size} surviving weights")
    order = np.argsort(mags[surv], kind="stable")
    return surv[order[:n_prune]]


def prune_round(state: TrainState, p: float, scope: str = "global", reinit: str = "rewind") -> TrainState:
    """Mask the smallest-magnitude ``p`` fraction of surviving weights, then reset
    the survivors (to their initial values, or to a fresh draw with ``reinit="random"``)."""
    layers = state.net.compute_layers()
    if scope == "global":
        mags = np.concatenate([np.abs(c.W).ravel() for c in layers])
        alive = np.concatenate([c.mask.ravel() for c in layers])
        cut = _prune_indices(mags, alive, p)
        flat = alive.copy()
        flat[cut] = False
        off = 0
        for c in layers:
            c.mask = flat[off:off + c.mask.size].reshape(c.mask.shape)
            off += c.mask.size
    else:
        for c in layers:
            flat = c.mask.ravel().copy()
            flat[_prune_indices(np.abs(c.W).ravel(), flat, p)] = False
            c.mask = flat.reshape(c.mask.shape)
    if reinit == "random":
        state.theta_initial = [nn.xavier_init(c.W.shape, state.rng) for c in layers]
    for c, w0 in zip(layers, state.theta_initial):
        c.W = w0 * c.mask
    state.round += 1
    return state


@dataclass
class LtpResult:
    model: netsim.QuantModel
    net: nn.Network
    log: list[RoundRecord]
    baseline_acc: float
    final_val_acc: float
    final_train_acc: float


def ltp_run(arch, data: Dataset, cfg: LtpConfig, act_bits: int = 8, weight_bits: int = 8,
            val: Dataset | None = None) -> LtpResult:
    """Iterate train / prune / rewind and quantize the final sparse network.

    Each round trains for ``epochs_per_round`` epochs and measures validation
    accuracy against the first (unpruned) round. Pruning continues while
    fewer than ``max_rounds`` prunes were made and the drop is at most
    ``accuracy_drop_limit``. The training after the last rewind is the final
    training of the sparse network, so the last log row describes the
    returned network.
    """
    if val is None:
        data, val = data.split(cfg.val_fraction, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    net = nn.build_network(arch, data.input_shape, data.n_classes, rng)
    state = TrainState.create(net, cfg.seed + 1)
    baseline = None
    while True:
        train(state, data, cfg.epochs_per_round, cfg.lr, cfg.batch_size)
        tr, va = state.net.accuracy(data.x, data.y), state.net.accuracy(val.x, val.y)
        state.log.append(RoundRecord(state.round, state.sparsity(), tr, va))
        if baseline is None:
            baseline = va
        if state.round >= cfg.max_rounds or baseline - va > cfg.accuracy_drop_limit:
            break
        prune_round(state, cfg.prune_percent, cfg.scope, cfg.reinit)
    model = netsim.quantize_network(
        state.net, data.x, act_bits, weight_bits,
        meta={"seed": cfg.seed, "arch": arch if isinstance(arch, str) else "custom",
              "rounds": state.round, "sparsity": state.sparsity()},
    )
    return LtpResult(model, state.net, state.log, baseline, va, tr)


LOG_HEADER = ("round", "sparsity", "train_acc", "val_acc")


def log_csv(log: list[RoundRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for r in log:
        w.writerow((r.round, repr(r.sparsity), repr(r.train_acc), repr(r.val_acc)))
    return buf.getvalue()
