"""Command line entry point ``opcalc``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import OpcalcError
from .io import load_moi_request, load_operator, moi_result_to_json, save_operator, write_json
from .moi import moi_fourier, moi_spectral
from .scenario import (
    ScenarioConfig,
    emit_curves,
    generate_instance,
    parse_grid,
    run_suite,
    write_flow_csv,
    write_xi_csv,
)


def _parse_dims(text: str) -> list:
    """``"3:1.0,2:0.5"`` to ``[(3, 1.0), (2, 0.5)]``."""
    out = []
    for part in text.split(","):
        d, _, w = part.partition(":")
        out.append((int(d), float(w) if w else 1.0))
    return out


def cmd_gen(args) -> int:
    H, V = generate_instance(args.seed, _parse_dims(args.dims))
    save_operator(args.out_h, H)
    save_operator(args.out_v, V)
    return 0


def cmd_moi(args) -> int:
    req = load_moi_request(args.request)
    result = moi_spectral(req) if args.path == "spectral" else moi_fourier(req)
    write_json(args.out, moi_result_to_json(result))
    return 0


def cmd_calculus(args) -> int:
    cfg = ScenarioConfig.load(args.corpus)
    cfg.checks = [args.check]
    _, status = run_suite(cfg, args.report)
    return status


def cmd_shift(args) -> int:
    H, V = load_operator(args.H), load_operator(args.V)
    write_xi_csv(args.out, H, V, parse_grid(args.grid), with_average=args.avg)
    return 0


def cmd_flow(args) -> int:
    D0, V = load_operator(args.D0), load_operator(args.V)
    write_flow_csv(args.out, D0, V, parse_grid(args.mu_grid), args.epsilon)
    return 0


def cmd_verify(args) -> int:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig.default()
    report, status = run_suite(cfg, args.report)
    if args.curves:
        emit_curves(cfg, args.curves)
    failed = [r for r in report["results"] if not r["pass"]]
    print(f"{len(report['results']) - len(failed)}/{len(report['results'])} checks passed")
    for r in failed:
        print(f"FAIL {r['check']} {r['instance']}: residual {r['residual']:.3g} > {r['tolerance']:.3g}")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opcalc", description="Operator calculus on block algebras with weighted traces.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a seeded (H, V) pair")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--dims", default="3:1.0", help="blocks as dim:weight, comma separated")
    g.add_argument("--out-h", type=Path, required=True)
    g.add_argument("--out-v", type=Path, required=True)
    g.set_defaults(func=cmd_gen)

    m = sub.add_parser("moi", help="evaluate a multiple operator integral")
    m.add_argument("--request", type=Path, required=True)
    m.add_argument("--path", choices=["spectral", "fourier"], default="spectral")
    m.add_argument("--out", type=Path, required=True)
    m.set_defaults(func=cmd_moi)

    c = sub.add_parser("calculus", help="run one calculus check over a seeded corpus")
    c.add_argument("--check", choices=["dk", "frechet", "taylor", "duhamel"], required=True)
    c.add_argument("--corpus", type=Path, required=True)
    c.add_argument("--report", type=Path, required=True)
    c.set_defaults(func=cmd_calculus)

    s = sub.add_parser("shift", help="tabulate the spectral shift function")
    s.add_argument("--H", type=Path, required=True)
    s.add_argument("--V", type=Path, required=True)
    s.add_argument("--grid", required=True, help="a:b:n")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--avg", action="store_true", help="add the averaged measure per grid interval")
    s.set_defaults(func=cmd_shift)

    f = sub.add_parser("flow", help="tabulate spectral flow against the level")
    f.add_argument("--D0", type=Path, required=True)
    f.add_argument("--V", type=Path, required=True)
    f.add_argument("--mu-grid", required=True, help="a:b:n")
    f.add_argument("--epsilon", type=float, default=1.0)
    f.add_argument("--out", type=Path, required=True)
    f.set_defaults(func=cmd_flow)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("--config", type=Path, help="scenario config (default: the shipped one)")
    v.add_argument("--report", type=Path)
    v.add_argument("--curves", type=Path, help="directory for xi.csv and flow.csv")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OpcalcError, FileNotFoundError) as exc:
        print(f"opcalc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
