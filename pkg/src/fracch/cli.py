"""Command-line entry point.

Exit status: 0 success, 1 a checked property failed, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .asymptotics import continuous_dependence_experiment, sweep_lambda, sweep_sigma
from .checks import SUITES, run_suite
from .configio import RunManifest, load_config, persist_run
from .solver import LIMIT, ConfigError, StepFailure, run
from .spectral import SpectralError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fracch", description="Fractional Cahn-Hilliard experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_io(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", required=True, type=Path)
        return sp

    sp = with_io("simulate", "run one trajectory in the configured mode")
    sp.add_argument("--dump-fields", action="store_true")
    sp = with_io("limit", "run one trajectory of the limit problem")
    sp.add_argument("--dump-fields", action="store_true")
    sp = with_io("sweep-sigma", "viscous runs against the limit run")
    sp.add_argument("--sigmas", required=True, type=_float_list)
    sp = with_io("sweep-lambda", "Yosida-parameter sweep")
    sp.add_argument("--lambdas", required=True, type=_float_list)
    sp = with_io("contdep", "continuous-dependence experiment on the limit problem")
    sp.add_argument("--pairs", type=int, default=10)
    sp.add_argument("--amplitude", type=float, default=0.5)
    sp = sub.add_parser("verify", help="run property suites")
    sp.add_argument("--suite", default="all", choices=[*SUITES, "all"])
    return p


def _simulate(args, limit: bool) -> int:
    sc = load_config(args.config)
    cfg = sc.config.replace(mode=LIMIT) if limit else sc.config
    t0 = time.perf_counter()
    traj = run(cfg, sc.phi0, sc.forcing)
    manifest = RunManifest.from_config(cfg, time.perf_counter() - t0)
    paths = persist_run(traj, manifest, args.out, dump_fields=args.dump_fields)
    print(f"wrote {paths['trajectory']}")
    return EXIT_OK


def _write_report(rep, out: Path, stem: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_text(rep.to_csv(), encoding="utf-8")
    (out / f"{stem}.json").write_text(rep.to_json(), encoding="utf-8")
    print(rep.to_csv(), end="")


def _sweep_sigma(args) -> int:
    sc = load_config(args.config)
    rep = sweep_sigma(sc.config, sc.phi0, lambda s: sc.forcing, args.sigmas)
    _write_report(rep, args.out, "sweep_sigma")
    ok = rep.complete and rep.flags["l2q_decreasing"] and rep.flags["zeta_decreasing"]
    return EXIT_OK if ok else EXIT_FAIL


def _sweep_lambda(args) -> int:
    sc = load_config(args.config)
    rep = sweep_lambda(sc.config, sc.phi0, sc.forcing, args.lambdas)
    _write_report(rep, args.out, "sweep_lambda")
    ok = rep.complete and rep.flags["cauchy_decreasing"] and rep.flags["violation_nonincreasing"]
    return EXIT_OK if ok else EXIT_FAIL


def _contdep(args) -> int:
    sc = load_config(args.config)
    cfg = sc.config.replace(mode=LIMIT)
    op = cfg.op_a
    rng = np.random.default_rng(sc.seed)
    base = sc.forcing
    zero = np.zeros(op.n_nodes)

    def base_at(t):
        if base is None:
            return zero
        return base(t) if callable(base) else base

    rows = []
    for _ in range(args.pairs):
        amp = args.amplitude * rng.uniform(-1, 1, (3, op.n_nodes))
        freq = rng.uniform(0, 2 * np.pi, 3)

        def pert(t, amp=amp, freq=freq):
            return base_at(t) + np.cos(freq * t) @ amp

        rec = continuous_dependence_experiment(cfg, sc.phi0, base, pert)
        rows.append({"ratio": rec.ratio, "bound": rec.bound, "degenerate": rec.degenerate, "passed": rec.passed})
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "contdep.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    for r in rows:
        print(f"ratio={r['ratio']:.6g} bound={r['bound']:.6g} {'ok' if r['passed'] else 'FAIL'}")
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_FAIL


def _verify(args) -> int:
    results = run_suite(args.suite)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_FAIL


COMMANDS = {
    "simulate": lambda a: _simulate(a, False),
    "limit": lambda a: _simulate(a, True),
    "sweep-sigma": _sweep_sigma,
    "sweep-lambda": _sweep_lambda,
    "contdep": _contdep,
    "verify": _verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, SpectralError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StepFailure as exc:
        print(f"step failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
