"""Command-line entry point: ``dgmvp run|verify-identities|enumerate|fit|replay``."""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .encoding import (
    EncodingSpec,
    bits_to_str,
    enumerate_feasible,
    feasible_count,
    lots_of,
    unconstrained_count,
)
from .experiments import (
    PRESETS,
    ExperimentConfig,
    ExperimentError,
    formatted,
    load_config,
    preset_config,
    read_rows,
    replay,
    run_preset,
)
from .metrics import fit_power_law
from .pauli import identity_report_json, verify_identities


def _cmd_run(args) -> int:
    config = load_config(args.config, args.preset) if args.config else preset_config(args.preset)
    out = Path(args.out) if args.out else Path("results") / args.preset
    result = run_preset(config, args.seed, out, args.workers)
    summary = result.summary
    print(f"{config.preset}: {summary['units']} units, {len(result.records)} records -> {out}")
    print(f"config hash {summary['config_hash']}, function accesses {summary['total_function_accesses']}, "
          f"{summary['wall_time_s']:.1f}s")
    return 0 if result.ok else 1


def _cmd_identities(args) -> int:
    results = verify_identities()
    if args.json:
        print(identity_report_json(results))
    else:
        width = max(len(r.name) for r in results)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.max_error:.2e}")
        print(f"{sum(r.passed for r in results)}/{len(results)} passed")
    return 0 if all(r.passed for r in results) else 1


def _cmd_enumerate(args) -> int:
    spec = EncodingSpec(args.n, args.l)
    print(f"n={args.n} l={args.l} qubits={spec.num_qubits} feasible={feasible_count(args.n, args.l)} "
          f"unconstrained={unconstrained_count(args.n, args.l)}")
    if args.list:
        for i, bits in enumerate(enumerate_feasible(spec)):
            if args.limit and i >= args.limit:
                print("...")
                break
            print(bits_to_str(bits), " ".join(map(str, lots_of(spec, bits))))
    return 0


def _cmd_fit(args) -> int:
    rows = read_rows(args.input)
    if args.group is not None:
        rows = [r for r in rows if r.get("group") == args.group]
    missing = [c for c in (args.x, args.y) if rows and c not in rows[0]]
    if missing:
        print(f"missing column(s): {', '.join(missing)}", file=sys.stderr)
        return 2
    pts = [(float(r[args.x]), float(r[args.y])) for r in rows]
    pts = [(x, y) for x, y in pts if math.isfinite(y) and y > 0]
    if len(pts) < 3:
        print("need at least 3 finite positive points", file=sys.stderr)
        return 2
    fit = fit_power_law([p[0] for p in pts], [p[1] for p in pts])
    print(json.dumps({"a": fit.a, "b": fit.b, "b_stderr": fit.b_stderr, "points": fit.points}))
    return 0


def _cmd_replay(args) -> int:
    out = Path(args.dir)
    summary = json.loads((out / "summary.json").read_text())
    config = ExperimentConfig.from_dict(summary["config"])
    stored = [r for r in read_rows(out / "records.csv") if int(r["unit"]) == args.unit]
    if not stored:
        print(f"no records for unit {args.unit}", file=sys.stderr)
        return 2
    fresh = [formatted(r) for r in replay(stored[0], config)]
    same = fresh == stored
    print(f"unit {args.unit}: {'identical' if same else 'DIFFERENT'} ({len(fresh)} rows)")
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgmvp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment preset")
    run.add_argument("preset", choices=PRESETS)
    run.add_argument("--config", help="JSON config overriding the preset defaults")
    run.add_argument("--seed", type=int, default=0, help="root seed (unsigned 64-bit)")
    run.add_argument("--out", help="output directory (default results/<preset>)")
    run.add_argument("--workers", type=int, default=None, help="process count (default $DGMVP_WORKERS or 1)")
    run.set_defaults(func=_cmd_run)

    ident = sub.add_parser("verify-identities", help="check the operator identity catalogue")
    ident.add_argument("--json", action="store_true")
    ident.set_defaults(func=_cmd_identities)

    enum = sub.add_parser("enumerate", help="count (and optionally list) feasible bitstrings")
    enum.add_argument("--n", type=int, required=True)
    enum.add_argument("--l", type=int, required=True)
    enum.add_argument("--list", action="store_true")
    enum.add_argument("--limit", type=int, default=0)
    enum.set_defaults(func=_cmd_enumerate)

    fit = sub.add_parser("fit", help="power-law fit of y against B from a CSV")
    fit.add_argument("--in", dest="input", required=True)
    fit.add_argument("--x", default="B")
    fit.add_argument("--y", default="y")
    fit.add_argument("--group", default=None, help="keep only rows whose group column matches")
    fit.set_defaults(func=_cmd_fit)

    rep = sub.add_parser("replay", help="re-run one unit of a finished run and compare")
    rep.add_argument("dir")
    rep.add_argument("--unit", type=int, default=0)
    rep.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ExperimentError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
