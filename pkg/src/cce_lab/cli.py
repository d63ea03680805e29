"""``cce-lab`` command line: generate-bath, run, sweep, plot.

Exit codes: 0 success, 2 configuration error, 3 numerical breakdown
(near-zero divisor or unstable integrator step), 4 exact-solver dimension cap.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .cce import CoherenceCurve, cce_coherence
from .config import (FIELD_KEYS, ConfigError, build_bath, build_model, build_state, canonical, cce_config,
                     ensemble_of, load_config, parse_value, resolve_config, resolved_hash, sequence_of,
                     sweep_fields, time_grid)
from .ensemble import ensemble_average, extract_t2, field_sweep
from .exact import DimensionCapError, StabilityError, exact_coherence
from .hamiltonians import overhauser_of_state
from .plotting import plot_csv_files

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CAP = 0, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (must carry a version field)")
    p.add_argument("--scenario", choices=["nv", "dqd", "driven"])
    p.add_argument("--seed", type=int, help="bath seed (nv/driven)")
    p.add_argument("--seeds", type=int, nargs=2, metavar=("S1", "S2"), help="bath seeds of the two dots")
    p.add_argument("--bath", dest="bath_file", help="bath JSON file instead of generating one")
    p.add_argument("--N", type=int, dest="nearest", help="keep only the N nearest nuclei")
    p.add_argument("--outdir", help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key, e.g. --set bath.radius=4 (repeatable)")


def _physics(p: argparse.ArgumentParser) -> None:
    p.add_argument("--B", type=float, help="field: gauss for nv, tesla for dqd")
    p.add_argument("--seq", choices=["fid", "hahn", "rotary"])
    p.add_argument("--K", type=int, help="CCE truncation order")
    p.add_argument("--mode", choices=["modified", "original"])
    p.add_argument("--workers", type=int, help="worker threads (CCE_LAB_THREADS is used when unset)")
    p.add_argument("--state-seed", type=int, help="bath-state seed")
    p.add_argument("--t-max", type=float, help="end of the time window (ms)")
    p.add_argument("--nt", type=int, help="number of time points")
    p.add_argument("--ensemble", action="store_true", default=None, help="average over near-spin states")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cce-lab", description="Central-spin decoherence by cluster-correlation expansion")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("generate-bath", help="generate a nuclear-spin bath and write it as JSON")
    _common(g)
    g.add_argument("--out", help="bath file (default <outdir>/bath.json)")
    r = sub.add_parser("run", help="coherence curve for one state or an ensemble")
    _common(r)
    _physics(r)
    r.add_argument("--compare-exact", action="store_true", default=None, help="also run the exact solver")
    s = sub.add_parser("sweep", help="T2 versus field")
    _common(s)
    _physics(s)
    s.add_argument("--fields", type=float, nargs="*", help="explicit field grid")
    s.add_argument("--t2-method", choices=["crossing", "fit"])
    s.add_argument("--keep-curves", action="store_true", default=None)
    pl = sub.add_parser("plot", help="SVG line plot of curve or sweep CSV files")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("-o", "--out", required=True, help="output SVG")
    pl.add_argument("--x", help="x column")
    pl.add_argument("--y", help="y column")
    pl.add_argument("--title", default="")
    return parser


def _overrides(args: argparse.Namespace, scenario: str | None) -> dict[str, Any]:
    ov: dict[str, Any] = {}
    get = lambda name: getattr(args, name, None)  # noqa: E731
    if get("scenario"):
        ov["scenario"] = args.scenario
    for name, key in (("seed", "bath.seed"), ("bath_file", "bath.file"), ("nearest", "bath.nearest"),
                      ("outdir", "outdir"), ("seq", "sequence.kind"), ("K", "cce.max_order"),
                      ("mode", "cce.mode"), ("workers", "cce.workers"), ("state_seed", "state.seed"),
                      ("t_max", "times.stop"), ("nt", "times.num"), ("ensemble", "ensemble.enabled"),
                      ("compare_exact", "exact.compare"), ("t2_method", "sweep.t2_method"),
                      ("keep_curves", "sweep.keep_curves")):
        if get(name) is not None:
            ov[key] = get(name)
    if get("seeds") is not None:
        ov["bath.seeds"] = list(args.seeds)
    if get("fields") is not None:
        ov["sweep.values"] = list(args.fields)
    if get("B") is not None:
        ov["model." + ("B_tesla" if scenario == "dqd" else "B_gauss")] = args.B
    for item in get("set") or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        ov[key.strip()] = parse_value(value)
    return ov


def _resolve(args: argparse.Namespace) -> dict:
    raw = load_config(args.config) if args.config else {}
    scenario = args.scenario or raw.get("scenario", "nv")
    return resolve_config(raw, _overrides(args, scenario))


def _prepare_outdir(doc: dict) -> tuple[Path, str]:
    out = Path(doc["outdir"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.json").write_text(canonical(doc))
    return out, resolved_hash(doc)


def _stamp(curve: CoherenceCurve, doc: dict, digest: str, **extra) -> CoherenceCurve:
    curve.metadata.update(run_config_hash=digest, resolved_config=doc, **extra)
    return curve


def cmd_generate_bath(args: argparse.Namespace) -> int:
    doc = _resolve(args)
    out, digest = _prepare_outdir(doc)
    bath = build_bath(doc)
    path = Path(args.out) if args.out else out / "bath.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    bath.save(path)
    d = bath.distances
    a1 = float(np.linalg.norm(bath.hyperfine[0])) if len(bath) else 0.0
    print(f"wrote {path} (config {digest})")
    print(f"N = {len(bath)}")
    print(f"nearest-site distance = {float(d[0]):.4f} nm, |A_1| = {a1:.2f} kHz")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    doc = _resolve(args)
    out, digest = _prepare_outdir(doc)
    bath = build_bath(doc)
    model = build_model(doc, bath)
    seq, cfg, times = sequence_of(doc), cce_config(doc), time_grid(doc)
    extra = {"model_resolved": model.describe()}
    if doc["ensemble"]["enabled"]:
        curve = ensemble_average(bath, ensemble_of(doc), model, seq, times, cfg)
        _stamp(curve, doc, digest, **extra).save(out / "coherence")
        print(f"ensemble coherence over {curve.metadata['n_states']} states -> {out / 'coherence.csv'}")
        return EXIT_OK
    M = build_state(doc, bath, model)
    h = overhauser_of_state(bath, M, model.projection)
    curve, orders = cce_coherence(bath, M, model, seq, cfg, times, return_orders=True)
    _stamp(curve, doc, digest, overhauser_khz=h, **extra).save(out / "coherence")
    print(f"N = {len(bath)}, state {M.state_id}, h = {h:.4f} kHz, T2 = {extract_t2(curve).t2:.4g} ms")
    print(f"CCE-{cfg.max_order} ({cfg.mode}) -> {out / 'coherence.csv'}")
    for k in range(2, cfg.max_order + 1):
        print(f"max |L({k}) - L({k - 1})| = {np.abs(orders[k] - orders[k - 1]).max():.3e}")
    if doc["exact"]["compare"]:
        ex = exact_coherence(bath, M, model, seq, times, method=doc["exact"]["method"])
        _stamp(ex, doc, digest, **extra).save(out / "exact")
        dev = float(np.abs(curve.values - ex.values).max())
        (out / "deviation.txt").write_text(f"max_abs_deviation {dev!r}\n")
        print(f"exact -> {out / 'exact.csv'}")
        print(f"max |L_cce - L_exact| = {dev:.3e}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    doc = _resolve(args)
    fields = sweep_fields(doc)
    out, digest = _prepare_outdir(doc)
    bath = build_bath(doc)
    key = FIELD_KEYS[doc["scenario"]]
    base = build_model(doc, bath)
    frozen = {"frozen_overhauser_khz": base.frozen_overhauser_khz} if doc["scenario"] == "dqd" else {}

    def factory(b: float):
        return build_model(doc, bath, **frozen, **{key: b})

    seq, cfg, times = sequence_of(doc), cce_config(doc), time_grid(doc)
    target = ensemble_of(doc) if doc["ensemble"]["enabled"] else build_state(doc, bath, base)
    res = field_sweep(bath, target, factory, seq, fields, times, cfg, doc["sweep"]["t2_method"],
                      keep_curves=bool(doc["sweep"]["keep_curves"]))
    (out / "sweep.csv").write_text(res.to_csv())
    payload = dict(res.to_json(), field_key=key, run_config_hash=digest, resolved_config=doc)
    if res.overhauser_khz is not None and doc["scenario"] == "nv":
        payload["clock_field_gauss"] = base.clock_field(res.overhauser_khz)
    (out / "sweep.json").write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    hist = res.histogram
    lines = ["h_lo_khz,h_hi_khz,count"]
    lines += [f"{lo!r},{hi!r},{c}" for lo, hi, c in zip(hist["edges_khz"][:-1], hist["edges_khz"][1:], hist["counts"])]
    (out / "histogram.csv").write_text("\n".join(lines) + "\n")
    if res.curves:
        cdir = out / "curves"
        cdir.mkdir(exist_ok=True)
        for i, c in enumerate(res.curves):
            _stamp(c, doc, digest, **{key: float(fields[i])}).save(cdir / f"curve_{i:04d}")
    b, t2 = res.peak()
    print(f"{len(fields)} fields -> {out / 'sweep.csv'}; peak T2 = {t2:.4g} ms at {key} = {b:.6g}")
    if "clock_field_gauss" in payload:
        print(f"clock-transition field h/gamma_e = {payload['clock_field_gauss']:.6g} G")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    svg = plot_csv_files(args.csv, args.x, args.y, args.title)
    Path(args.out).write_text(svg)
    print(f"wrote {args.out}")
    return EXIT_OK


COMMANDS = {"generate-bath": cmd_generate_bath, "run": cmd_run, "sweep": cmd_sweep, "plot": cmd_plot}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ArithmeticError, StabilityError) as exc:
        # near-zero divisor, undefined expansion or unstable integrator step
        print(f"error: numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DimensionCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
