"""Cumulative MAC profiles and the exact/approximate boundary-layer search."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

from lutna import hwcost, netsim
from lutna.lutcore import MultiplierConfig, Scheme

APPROX_FIRST = "approx_first"
EXACT_FIRST = "exact_first"
POLICIES = (APPROX_FIRST, EXACT_FIRST)

# Boundaries chosen for five ImageNet-class CNNs in the published study.
# Kept as reference values only; nothing here reproduces them.
REFERENCE_BOUNDARIES = (
    ("ResNet18", EXACT_FIRST, 36),
    ("ResNet34", EXACT_FIRST, 48),
    ("VGG11", APPROX_FIRST, 1),
    ("VGG19", APPROX_FIRST, 4),
    ("GoogleNet", APPROX_FIRST, 69),
)


class InfeasibleBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class MacProfile:
    macs: tuple[int, ...]

    def __post_init__(self):
        if any(m < 0 for m in self.macs):
            raise ValueError("MAC counts must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.macs)

    def cumulative(self) -> tuple[int, ...]:
        out, run = [], 0
        for m in self.macs:
            run += m
            out.append(run)
        return tuple(out)

    def cumulative_percent(self) -> tuple[float, ...]:
        t = self.total
        return tuple(100.0 * c / t if t else 100.0 for c in self.cumulative())


def cumulative_mac_profile(model) -> MacProfile:
    """``model`` is a :class:`QuantModel` or a sequence of per-layer MAC counts."""
    macs = model.mac_counts() if hasattr(model, "mac_counts") else list(model)
    return MacProfile(tuple(int(m) for m in macs))


def _midpoint_fraction(cum: tuple, total) -> Fraction:
    # cumulative share at layer L/2, interpolating linearly for odd L
    n = len(cum)
    if n == 0:
        raise ValueError("empty MAC profile")
    pts = (0,) + tuple(cum)
    half = Fraction(n, 2)
    lo = int(half)
    v = pts[lo] if half == lo else pts[lo] + (pts[lo + 1] - pts[lo]) * (half - lo)
    return Fraction(v) / Fraction(total)


def choose_policy(profile: MacProfile | tuple | list) -> str:
    """``approx_first`` iff at least half the MACs sit in the first half of the layers.

    A bare sequence is read as cumulative percentages.
    """
    if isinstance(profile, MacProfile):
        cum, total = profile.cumulative(), profile.total
        if total == 0:
            return APPROX_FIRST
    else:
        cum = tuple(Fraction(str(c)) for c in profile)
        total = cum[-1] if cum else 1
    return APPROX_FIRST if _midpoint_fraction(cum, total) >= Fraction(1, 2) else EXACT_FIRST


@dataclass(frozen=True)
class MixedPlan:
    policy: str
    n: int
    n_layers: int
    exact: MultiplierConfig = MultiplierConfig(Scheme.DNC_EXACT)
    approx: MultiplierConfig = MultiplierConfig(Scheme.DNC_APPROX)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if not 0 <= self.n <= self.n_layers:
            raise ValueError(f"boundary {self.n} outside [0, {self.n_layers}]")

    def configs(self) -> list[MultiplierConfig]:
        head, tail = (self.approx, self.exact) if self.policy == APPROX_FIRST else (self.exact, self.approx)
        return [head if i < self.n else tail for i in range(self.n_layers)]


@dataclass(frozen=True)
class SweepPoint:
    plan: MixedPlan
    accuracy: float
    energy: float
    area: float

    @property
    def n(self) -> int:
        return self.plan.n


def schemes_for(model: netsim.QuantModel, act_bits: int | None = None,
                weight_bits: int | None = None) -> tuple[MultiplierConfig, MultiplierConfig]:
    a = netsim.width_for(act_bits or model.act_bits)
    w = netsim.width_for(weight_bits or max(c.weight_params.n_bits for c in model.compute_layers()))
    return MultiplierConfig(Scheme.DNC_EXACT, a, w), MultiplierConfig(Scheme.DNC_APPROX, a, w)


def plan_cost(macs, configs, costs: hwcost.UnitCosts) -> tuple[float, float]:
    rep = hwcost.energy_per_inference(macs, configs, costs)
    return rep.energy_per_inference_units, rep.area_units


def boundary_sweep(model: netsim.QuantModel, dataset, policy: str, costs: hwcost.UnitCosts,
                   workers: int = 1) -> list[SweepPoint]:
    """Accuracy, energy per inference and area for every boundary ``0..L``."""
    exact, approx = schemes_for(model)
    macs = model.mac_counts()
    out = []
    for n in range(len(macs) + 1):
        plan = MixedPlan(policy, n, len(macs), exact, approx)
        cfgs = plan.configs()
        acc = netsim.evaluate(model, dataset, cfgs, workers=workers)
        energy, area = plan_cost(macs, cfgs, costs)
        out.append(SweepPoint(plan, acc, energy, area))
    return out


def select_boundary(sweep: list[SweepPoint], baseline: float, max_loss: float = 0.01,
                    eps: float = 1e-12) -> SweepPoint:
    """Minimum-energy point with ``accuracy >= baseline - max_loss``; ties go to
    smaller area, then smaller ``n``."""
    if not sweep:
        raise ValueError("empty sweep")
    feasible = [p for p in sweep if p.accuracy >= baseline - max_loss - eps]
    if not feasible:
        best = max(p.accuracy for p in sweep)
        raise InfeasibleBudgetError(
            f"no plan within loss {max_loss:.4f}; best achievable loss {baseline - best:.4f}"
        )
    return min(feasible, key=lambda p: (p.energy, p.area, p.n))


SWEEP_HEADER = ("policy", "n", "accuracy", "energy_units", "area_units")


def sweep_csv(sweep: list[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for p in sweep:
        w.writerow((p.plan.policy, p.n, repr(p.accuracy), repr(p.energy), repr(p.area)))
    return buf.getvalue()


def profile_csv(profile: MacProfile) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("layer", "macs", "cumulative_macs", "cumulative_percent"))
    for i, (m, c, pct) in enumerate(zip(profile.macs, profile.cumulative(), profile.cumulative_percent()), 1):
        w.writerow((i, m, c, repr(pct)))
    return buf.getvalue()
