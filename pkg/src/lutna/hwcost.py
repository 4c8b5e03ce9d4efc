"""Component counts, area and energy for every multiplier configuration.

Counting rules (``e = weight_bits + 2`` is the width of one stored product):

* ``dnc-exact`` (storage optimized, default): one shared bank of
  ``2*weight_bits + 1`` stored cells plus a fixed 3-cell overhead, one shared
  ``4:1 x e`` mux (``3e`` 2:1 muxes) per pair of 2-bit chunks, and the
  shift-add chain read off a gate netlist. At 4b this is 12/18/3/3.
* ``dnc-exact-unopt``: four full ``e``-bit entries and a ``3e`` mux per chunk.
* ``dnc-approx``: same bank (1-cell overhead), the mux and adders of one
  half-width exact datapath; no final adder. At 4b this is 10/18/0/0.
* ``tlut``: ``2**data_bits`` entries of ``data_bits + weight_bits`` cells and
  a full mux tree.
* ``array`` / ``wallace``: counted from gate netlists in :mod:`lutna.gates`.

Every scheme carries one sign XOR.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from lutna import gates
from lutna.lutcore import MultiplierConfig, Scheme

FIELDS = ("sram_cells", "mux2x1_1b", "half_adders", "full_adders", "xor_gates", "and_gates")

EXACT_CELL_OVERHEAD = 3
APPROX_CELL_OVERHEAD = 1

# Published 45nm synthesis ratios. Reference values
# only; nothing in this package derives them.
PUBLISHED_REFERENCE_RATIOS = (
    ("lut-na-8b vs tlut-8b", "area", 29.54),
    ("lut-na-8b vs tlut-8b", "energy_per_inference", 3.34),
    ("lut-na-8b vs digital (wallace/array) 8b", "area", 1.23),
    ("lut-na-8b vs digital (wallace/array) 8b", "energy_per_inference", 1.80),
    ("a-lut-na-8b vs digital (wallace/array) 8b", "area", 2.64),
    ("a-lut-na-8b vs digital (wallace/array) 8b", "energy_per_inference", 4.38),
    ("a-lut-na-8b vs tlut-8b", "area", 62.85),
    ("a-lut-na-8b vs tlut-8b", "energy_per_inference", 8.1),
)
REFERENCE_NOTE = "external reference (45nm synthesis); not independently derived"


@dataclass(frozen=True)
class ComponentCount:
    sram_cells: int = 0
    mux2x1_1b: int = 0
    half_adders: int = 0
    full_adders: int = 0
    xor_gates: int = 0
    and_gates: int = 0

    def __post_init__(self):
        for f in FIELDS:
            if getattr(self, f) < 0:
                raise ValueError(f"{f} must be non-negative")

    def __add__(self, other: "ComponentCount") -> "ComponentCount":
        return ComponentCount(*(getattr(self, f) + getattr(other, f) for f in FIELDS))

    def scaled(self, k: int) -> "ComponentCount":
        return ComponentCount(*(getattr(self, f) * k for f in FIELDS))

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, f) for f in FIELDS)

    def dominates(self, other: "ComponentCount") -> bool:
        """Component-wise ``>=``."""
        return all(a >= b for a, b in zip(self.as_tuple(), other.as_tuple()))


@dataclass(frozen=True)
class UnitCosts:
    area: dict
    energy: dict

    def __post_init__(self):
        for table in (self.area, self.energy):
            missing = set(FIELDS) - set(table)
            if missing:
                raise ValueError(f"unit costs missing {sorted(missing)}")
            for k, v in table.items():
                if k not in FIELDS:
                    raise ValueError(f"unknown component {k!r}")
                if not v > 0:
                    raise ValueError(f"unit cost for {k} must be strictly positive, got {v}")

    @classmethod
    def uniform(cls, value: float = 1.0) -> "UnitCosts":
        return cls({f: value for f in FIELDS}, {f: value for f in FIELDS})


def parse_unit_costs(text: str) -> UnitCosts:
    """Parse ``<component>.<area|energy> = <value>`` lines; ``#`` comments."""
    area, energy = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        comp, dot, kind = key.strip().rpartition(".")
        if not sep or not dot or kind not in ("area", "energy"):
            raise ValueError(f"unit costs line {lineno}: expected '<component>.<area|energy> = <value>'")
        try:
            v = float(value)
        except ValueError:
            raise ValueError(f"unit costs line {lineno}: bad number {value.strip()!r}") from None
        (area if kind == "area" else energy)[comp] = v
    return UnitCosts(area, energy)


def load_unit_costs(path: str | Path | None = None) -> UnitCosts:
    if path is None:
        text = resources.files("lutna").joinpath("data/unit_costs.txt").read_text()
    else:
        text = Path(path).read_text()
    return parse_unit_costs(text)


# -------------------------------------------------------------- counting


@functools.lru_cache(maxsize=None)
def _netlist_counts(kind: str, n: int) -> ComponentCount:
    builder = gates.array_multiplier if kind == "array" else gates.wallace_multiplier
    c = builder(n)[0].counts()
    return ComponentCount(half_adders=c["ha"], full_adders=c["fa"], and_gates=c["and"], xor_gates=1)


@functools.lru_cache(maxsize=None)
def _chain(n_products: int, entry_bits: int) -> tuple[int, int]:
    return gates.adder_chain_counts(n_products, entry_bits)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def component_count(cfg: MultiplierConfig) -> ComponentCount:
    n_w, n_d = cfg.weight_bits, cfg.data_bits
    e = n_w + 2
    if cfg.scheme is Scheme.TLUT:
        width = n_d + n_w
        return ComponentCount(sram_cells=(1 << n_d) * width, mux2x1_1b=((1 << n_d) - 1) * width, xor_gates=1)
    if cfg.scheme in (Scheme.ARRAY, Scheme.WALLACE):
        return _netlist_counts("array" if cfg.scheme is Scheme.ARRAY else "wallace", max(n_d, n_w))
    if cfg.scheme is Scheme.DNC_EXACT:
        chunks = n_d // 2
        ha, fa = _chain(chunks, e)
        if not cfg.storage_optimized:
            return ComponentCount(chunks * 4 * e, chunks * 3 * e, ha, fa, 1)
        return ComponentCount(2 * n_w + 1 + EXACT_CELL_OVERHEAD, 3 * e * _ceil_div(chunks, 2), ha, fa, 1)
    # approximate: a single half-width exact datapath serves both branches
    half_chunks = max(cfg.split, n_d - cfg.split) // 2
    ha, fa = _chain(half_chunks, e)
    return ComponentCount(2 * n_w + 1 + APPROX_CELL_OVERHEAD, 3 * e * _ceil_div(half_chunks, 2), ha, fa, 1)


def active_count(cfg: MultiplierConfig) -> ComponentCount:
    """Components switched during one MAC.

    Identical to :func:`component_count` except that a mux shared between
    chunk lookups is charged once per lookup.
    """
    c = component_count(cfg)
    if cfg.scheme is Scheme.DNC_EXACT and cfg.storage_optimized:
        lookups = cfg.data_bits // 2
    elif cfg.scheme is Scheme.DNC_APPROX:
        lookups = max(cfg.split, cfg.data_bits - cfg.split) // 2
    else:
        return c
    return dataclasses.replace(c, mux2x1_1b=lookups * 3 * (cfg.weight_bits + 2))


def weighted(count: ComponentCount, table: dict) -> float:
    return float(sum(getattr(count, f) * table[f] for f in FIELDS))


def area(cfg: MultiplierConfig | ComponentCount, costs: UnitCosts) -> float:
    count = cfg if isinstance(cfg, ComponentCount) else component_count(cfg)
    return weighted(count, costs.area)


def energy_per_mac(cfg: MultiplierConfig | ComponentCount, costs: UnitCosts) -> float:
    count = cfg if isinstance(cfg, ComponentCount) else active_count(cfg)
    return weighted(count, costs.energy)


# ------------------------------------------------------------- reports


@dataclass
class CostReport:
    config: str
    counts: ComponentCount | None
    area_units: float
    energy_per_mac_units: float | None
    total_macs: int | None = None
    energy_per_inference_units: float | None = None
    layer_macs: tuple[int, ...] = ()
    layer_configs: tuple[str, ...] = ()


def config_report(cfg: MultiplierConfig, costs: UnitCosts) -> CostReport:
    return CostReport(cfg.label, component_count(cfg), area(cfg, costs), energy_per_mac(cfg, costs))


def energy_per_inference(model, plan: Sequence[MultiplierConfig], costs: UnitCosts) -> CostReport:
    """Sum of surviving MACs times per-MAC energy, layer by layer.

    ``model`` is anything with ``mac_counts()`` (one entry per compute layer)
    or a plain sequence of MAC counts.
    """
    macs = list(model.mac_counts()) if hasattr(model, "mac_counts") else [int(m) for m in model]
    plan = list(plan)
    if len(plan) != len(macs):
        raise ValueError(f"plan has {len(plan)} entries but model has {len(macs)} compute layers")
    energy = sum(m * energy_per_mac(cfg, costs) for m, cfg in zip(macs, plan))
    total = sum(macs)
    return CostReport(
        config="+".join(sorted({c.label for c in plan})) or "empty",
        counts=None,
        area_units=plan_area(macs, plan, costs),
        energy_per_mac_units=(energy / total) if total else None,
        total_macs=total,
        energy_per_inference_units=float(energy),
        layer_macs=tuple(macs),
        layer_configs=tuple(c.label for c in plan),
    )


def plan_area(macs: Sequence[int], plan: Sequence[MultiplierConfig], costs: UnitCosts) -> float:
    """Area per processing element when PEs are allotted to layers in
    proportion to their MAC share (a spatial, layer-pipelined mapping)."""
    total = sum(macs)
    if total == 0:
        return float(max((area(c, costs) for c in plan), default=0.0))
    return float(sum(m * area(c, costs) for m, c in zip(macs, plan)) / total)


REPORT_HEADER = (
    "config", "sram", "mux", "ha", "fa", "xor", "and",
    "area", "energy_per_mac", "ratio_to_baseline", "energy_ratio_to_baseline",
)


def compare_report(cfgs: Iterable[MultiplierConfig], costs: UnitCosts,
                   baseline: MultiplierConfig | None = None) -> list[dict]:
    """Rows in input order; ratios are ``config / baseline`` for area and energy.

    ``baseline`` defaults to the first config and must be one of ``cfgs``.
    """
    cfgs = list(cfgs)
    if not cfgs:
        raise ValueError("no configurations to compare")
    base = cfgs[0] if baseline is None else baseline
    if base not in cfgs:
        raise ValueError(f"baseline {base.label} is not among the compared configs")
    base_area, base_energy = area(base, costs), energy_per_mac(base, costs)
    rows = []
    for cfg in cfgs:
        c = component_count(cfg)
        a, en = area(cfg, costs), energy_per_mac(cfg, costs)
        rows.append({
            "config": cfg.label,
            "sram": c.sram_cells, "mux": c.mux2x1_1b, "ha": c.half_adders,
            "fa": c.full_adders, "xor": c.xor_gates, "and": c.and_gates,
            "area": a, "energy_per_mac": en,
            "ratio_to_baseline": a / base_area,
            "energy_ratio_to_baseline": en / base_energy,
        })
    return rows


def report_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_HEADER, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _reference_subject(name: str, n: int = 8) -> list[MultiplierConfig]:
    return {
        "lut-na": [MultiplierConfig(Scheme.DNC_EXACT, n, n)],
        "a-lut-na": [MultiplierConfig(Scheme.DNC_APPROX, n, n)],
        "tlut": [MultiplierConfig(Scheme.TLUT, n, n)],
        "digital": [MultiplierConfig(Scheme.WALLACE, n, n), MultiplierConfig(Scheme.ARRAY, n, n)],
    }[name]


def computed_reference_ratios(costs: UnitCosts) -> list[tuple[str, str, float, float]]:
    """Count-based improvement factors (``baseline / lut-na``) for each published
    comparison, as ``(comparison, metric, computed, published)``.

    Against the digital pair the cheaper of Wallace and array is the baseline.
    Per-inference energy ratios equal per-MAC ratios for a fixed MAC count.
    """
    out = []
    for comp, metric, published in PUBLISHED_REFERENCE_RATIOS:
        subject, _, base = comp.partition(" vs ")
        subject, base = subject.rsplit("-", 1)[0], base.split(" ")[0].split("-")[0]
        measure = area if metric == "area" else energy_per_mac
        num = min(measure(c, costs) for c in _reference_subject(base))
        den = min(measure(c, costs) for c in _reference_subject(subject))
        out.append((comp, metric, num / den, published))
    return out


def reference_csv(costs: UnitCosts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("comparison", "metric", "computed_ratio", "published_ratio", "status"))
    for comp, metric, computed, published in computed_reference_ratios(costs):
        w.writerow((comp, metric, repr(computed), repr(published), REFERENCE_NOTE))
    return buf.getvalue()
