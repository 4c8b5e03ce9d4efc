"""``lutna`` command-line front end.

Every command prints its resolved configuration as one JSON line, writes CSV
files under ``--out-dir`` and exits 0. Runtime failures print one JSON line
``{"error": <type>, "message": <text>}`` on stderr and exit 1; bad flags exit 2.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path


from lutna import hwcost, ltp, mixedprec, modelio, netsim, verify
from lutna.datasets import Dataset, load_dataset
from lutna.lutcore import MultiplierConfig, parse_config

DEFAULT_DATASET = "synthetic:blobs:seed=3:n=600"
DEFAULT_SCHEMES = "tlut-8,dnc-exact-8,dnc-approx-8,wallace-8,array-8"


class CliError(RuntimeError):
    pass


# ----------------------------------------------------------------- helpers


def _int_range(text: str) -> list[int]:
    """``2..8``, ``4`` or ``2,4,8``."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            vals = list(range(int(lo), int(hi) + 1))
        else:
            vals = [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer range {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return vals


def _labels(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    p = out_dir / name
    p.write_text(text)
    return p


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _costs(args) -> hwcost.UnitCosts:
    return hwcost.load_unit_costs(args.unit_costs)


def _need_model(args) -> netsim.QuantModel:
    if not args.model:
        raise CliError(f"{args.command} needs --model")
    return modelio.load_model(args.model)


def _splits(args, model: netsim.QuantModel | None = None) -> tuple[Dataset, Dataset]:
    """(calibration/train split, evaluation split) for the given or recorded dataset."""
    meta = model.meta if model is not None else {}
    spec = args.dataset or meta.get("dataset") or DEFAULT_DATASET
    data = load_dataset(spec)
    frac = float(meta.get("val_fraction", getattr(args, "val_fraction", 0.25)))
    seed = int(meta.get("seed", args.seed))
    return data.split(frac, seed)


def _scheme_configs(labels: list[str], model: netsim.QuantModel) -> list[MultiplierConfig]:
    """Labels may omit the width (``dnc-exact``) to take the model's width."""
    exact, _ = mixedprec.schemes_for(model)
    out = []
    for label in labels:
        if label[-1].isdigit():
            out.append(parse_config(label))
        else:
            out.append(parse_config(f"{label}-{exact.data_bits}x{exact.weight_bits}"))
    return out


# ---------------------------------------------------------------- commands


def cmd_mul_verify(args) -> list[Path]:
    rows = []
    cases = mismatches = violations = 0
    for bits in args.bits:
        schemes = ([parse_config(f"{s}-{bits}").scheme for s in _labels(args.schemes)]
                   if args.schemes else verify.default_exact_schemes(bits))
        for scheme in schemes:
            r = verify.check_exact(scheme, bits)
            rows.append((bits, r.label, "exact", r.cases, r.failures, r.detail))
            cases += r.cases
            mismatches += r.failures
            print(f"{r.label}: {r.cases} cases, {r.failures} mismatches")
        if args.approx and bits <= 8:
            r = verify.check_approx(bits, args.approx_split)
            rows.append((bits, r.label, "approx_bounds", r.cases, r.failures, r.detail))
            violations += r.failures
            print(f"{r.label}: {r.cases} cases, {r.failures} bound violations ({r.detail})")
    print(f"{cases} cases, {mismatches} mismatches")
    path = _write(args.out_dir, "mul_verify.csv",
                  _csv(("bits", "config", "check", "cases", "failures", "detail"), rows))
    if mismatches or violations:
        raise CliError(f"{mismatches} mismatches, {violations} bound violations")
    return [path]


def cmd_cost_report(args) -> list[Path]:
    costs = _costs(args)
    cfgs = [parse_config(s) for s in _labels(args.schemes)]
    base = parse_config(args.baseline) if args.baseline else None
    rows = hwcost.compare_report(cfgs, costs, base)
    for r in rows:
        print(f"{r['config']}: sram={r['sram']} mux={r['mux']} ha={r['ha']} fa={r['fa']} "
              f"area={r['area']:.6g} energy_per_mac={r['energy_per_mac']:.6g}")
    return [
        _write(args.out_dir, "cost_report.csv", hwcost.report_csv(rows)),
        _write(args.out_dir, "reference_ratios.csv", hwcost.reference_csv(costs)),
    ]


def cmd_ltp(args) -> list[Path]:
    data = load_dataset(args.dataset or DEFAULT_DATASET)
    train_set, val_set = data.split(args.val_fraction, args.seed)
    cfg = ltp.LtpConfig(args.prune_percent, args.rounds, args.epochs, args.drop_limit, args.seed,
                        args.scope, args.reinit, args.lr, args.batch_size, args.val_fraction)
    res = ltp.ltp_run(args.arch, train_set, cfg, args.act_bits, args.weight_bits, val=val_set)
    res.model.meta.update(dataset=args.dataset or DEFAULT_DATASET, val_fraction=args.val_fraction)
    q_acc = netsim.evaluate(res.model, val_set)
    last = res.log[-1]
    print(f"rounds={last.round} sparsity={last.sparsity:.4f} baseline_val={res.baseline_acc:.4f} "
          f"final_val={res.final_val_acc:.4f} quantized_val={q_acc:.4f}")
    paths = [_write(args.out_dir, "ltp_log.csv", ltp.log_csv(res.log))]
    paths += list(modelio.save_model(res.model, args.out_dir / args.model_name))
    return paths


def cmd_bit_sweep(args) -> list[Path]:
    model = _need_model(args)
    calib, evalset = _splits(args, model)
    net = netsim.to_network(model)
    real = net.accuracy(evalset.x, evalset.y)
    rows = []
    for a in args.act_bits:
        for w in args.weight_bits:
            m = netsim.quantize_network(net, calib.x, a, w, n_classes=model.n_classes)
            acc = netsim.evaluate(m, evalset, workers=args.workers)
            rows.append((a, w, acc, real))
    best = max(rows, key=lambda r: (r[0], r[1]))
    print(f"grid {len(args.act_bits)}x{len(args.weight_bits)}; real={real:.4f} "
          f"max-bits ({best[0]},{best[1]})={best[2]:.4f}")
    return [_write(args.out_dir, "bit_sweep.csv",
                   _csv(("act_bits", "weight_bits", "accuracy", "real_accuracy"), rows))]


def cmd_act_stats(args) -> list[Path]:
    model = _need_model(args)
    _, evalset = _splits(args, model)
    hist = netsim.activation_histogram(model, evalset, args.bits)
    whist = netsim.weight_histogram(model, args.weight_bits)
    dist = netsim.lsb_product_distribution(hist, whist)
    print(f"activation mode={int(hist.counts.argmax())} lsb-product argmax={int(dist.argmax())} "
          f"P(0)={dist[0]:.6f}")
    return [
        _write(args.out_dir, "act_histogram.csv", modelio.histogram_csv(hist)),
        _write(args.out_dir, "weight_histogram.csv", modelio.histogram_csv(whist)),
        _write(args.out_dir, "lsb_products.csv",
               _csv(("product", "probability"), [(i, float(p)) for i, p in enumerate(dist)])),
    ]


def cmd_simulate(args) -> list[Path]:
    model = _need_model(args)
    _, evalset = _splits(args, model)
    costs = _costs(args)
    real = netsim.to_network(model).accuracy(evalset.x, evalset.y) if _has_real(model) else float("nan")
    macs = model.mac_counts()
    rows = []
    for cfg in _scheme_configs(_labels(args.schemes), model):
        plan = [cfg] * len(macs)
        acc = netsim.evaluate(model, evalset, plan, workers=args.workers)
        rep = hwcost.energy_per_inference(macs, plan, costs)
        rows.append((cfg.label, acc, real, rep.total_macs, rep.energy_per_inference_units, rep.area_units))
        print(f"{cfg.label}: accuracy={acc:.4f} energy={rep.energy_per_inference_units:.6g}")
    return [_write(args.out_dir, "simulate.csv", _csv(
        ("config", "accuracy", "real_accuracy", "total_macs", "energy_units", "area_units"), rows))]


def _has_real(model) -> bool:
    return all(c.real_weight is not None for c in model.compute_layers())


def cmd_mixed_search(args) -> list[Path]:
    model = _need_model(args)
    _, evalset = _splits(args, model)
    costs = _costs(args)
    profile = mixedprec.cumulative_mac_profile(model)
    policies = {"auto": [mixedprec.choose_policy(profile)], "both": list(mixedprec.POLICIES)}.get(
        args.policy, [args.policy])
    exact, _ = mixedprec.schemes_for(model)
    all_exact = [exact] * len(profile.macs)
    baseline = netsim.evaluate(model, evalset, all_exact, workers=args.workers)
    exact_energy, _ = mixedprec.plan_cost(profile.macs, all_exact, costs)
    sweep, choices = [], []
    for pol in policies:
        pts = mixedprec.boundary_sweep(model, evalset, pol, costs, workers=args.workers)
        sweep += pts
        pick = mixedprec.select_boundary(pts, baseline, args.max_loss)
        choices.append((pol, pick.n, pick.accuracy, baseline, baseline - pick.accuracy, pick.energy,
                        pick.area, pick.energy / exact_energy))
        print(f"{pol}: boundary n={pick.n} accuracy={pick.accuracy:.4f} loss={baseline - pick.accuracy:.4f} "
              f"energy/all-exact={pick.energy / exact_energy:.4f}")
    return [
        _write(args.out_dir, "mac_profile.csv", mixedprec.profile_csv(profile)),
        _write(args.out_dir, "mixed_sweep.csv", mixedprec.sweep_csv(sweep)),
        _write(args.out_dir, "mixed_choice.csv", _csv(
            ("policy", "n", "accuracy", "baseline_accuracy", "loss", "energy_units", "area_units",
             "energy_ratio_to_all_exact"), choices)),
        _write(args.out_dir, "reference_boundaries.csv", _csv(
            ("network", "policy", "boundary", "status"),
            [(*r, "external reference; not reproduced") for r in mixedprec.REFERENCE_BOUNDARIES])),
    ]


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out-dir", type=Path, default=Path("lutna-out"))
    common.add_argument("--unit-costs", default=None, help="unit-cost table (default: bundled)")
    common.add_argument("--model", default=None, help="model manifest written by `ltp`")
    common.add_argument("--dataset", default=None,
                        help="synthetic:<gen>[:seed=S][:n=N][:classes=K] | csv:<path> | idx:<imgs>,<labels>")
    common.add_argument("--workers", type=int, default=1, help="evaluation threads")

    p = argparse.ArgumentParser(prog="lutna", description="LUT multiplier simulation and analysis")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mul-verify", parents=[common], help="exhaustive multiplier checks")
    s.add_argument("--bits", type=_int_range, default=[8])
    s.add_argument("--schemes", default=None, help="comma list of scheme slugs (default: all exact)")
    s.add_argument("--approx-split", type=int, default=None)
    s.add_argument("--no-approx", dest="approx", action="store_false")
    s.set_defaults(func=cmd_mul_verify)

    s = sub.add_parser("cost-report", parents=[common], help="component counts, area and energy")
    s.add_argument("--schemes", default=DEFAULT_SCHEMES)
    s.add_argument("--baseline", default=None)
    s.set_defaults(func=cmd_cost_report)

    s = sub.add_parser("ltp", parents=[common], help="lottery-ticket pruning and quantization")
    s.add_argument("--arch", choices=("mlp", "cnn", "resnet"), default="mlp")
    s.add_argument("--prune-percent", type=float, default=0.2)
    s.add_argument("--rounds", type=int, default=10)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--drop-limit", type=float, default=0.01)
    s.add_argument("--scope", choices=("global", "layer"), default="global")
    s.add_argument("--reinit", choices=("rewind", "random"), default="rewind")
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--batch-size", type=int, default=32)
    s.add_argument("--val-fraction", type=float, default=0.25)
    s.add_argument("--act-bits", type=int, default=8)
    s.add_argument("--weight-bits", type=int, default=8)
    s.add_argument("--model-name", default="model")
    s.set_defaults(func=cmd_ltp)

    s = sub.add_parser("bit-sweep", parents=[common], help="accuracy over activation x weight bits")
    s.add_argument("--act-bits", type=_int_range, default=_int_range("2..8"))
    s.add_argument("--weight-bits", type=_int_range, default=_int_range("2..8"))
    s.set_defaults(func=cmd_bit_sweep)

    s = sub.add_parser("act-stats", parents=[common], help="activation and LSB product statistics")
    s.add_argument("--bits", type=int, default=None)
    s.add_argument("--weight-bits", type=int, default=4)
    s.set_defaults(func=cmd_act_stats)

    s = sub.add_parser("simulate", parents=[common], help="accuracy and energy per uniform scheme")
    s.add_argument("--schemes", default="dnc-exact,dnc-approx,tlut,wallace,array")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("mixed-search", parents=[common], help="exact/approximate boundary search")
    s.add_argument("--policy", choices=("auto", "both") + mixedprec.POLICIES, default="auto")
    s.add_argument("--max-loss", type=float, default=0.01)
    s.set_defaults(func=cmd_mixed_search)
    return p


def _resolved(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    print(json.dumps(_resolved(args), sort_keys=True))
    try:
        paths = args.func(args)
    except (CliError, ValueError, RuntimeError, OSError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(json.dumps({"error": type(exc).__name__, "message": msg}), file=sys.stderr)
        return 1
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
