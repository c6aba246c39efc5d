"""Command line: ``sandpile {stabilize,sweep,verify,replay} [flags]``.

Exit codes: 0 success, 1 a verification failed, 2 usage error, 3 I/O
error, 4 toppling budget exhausted. A JSON summary goes to stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, fields

from . import experiments as ex
from .emit import emit_odometer_csv, emit_pgm
from .engine import DEFAULT_BUDGET, Strategy, replay_schedule, stabilize, staged_square_schedule
from .geometry import match_square, radius, toppled_cluster
from .grid import make_point_source, make_square_config

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO, EXIT_BUDGET = 0, 1, 2, 3, 4
COMMANDS = ("stabilize", "sweep", "verify", "replay")
SUITES = ("abelian", "monotonic", "lemma1", "lemma2", "lemma2-stages",
          "theorem1-square", "theorem2", "theorem2-stages", "scaling")


@dataclass
class RunSpec:
    command: str
    n: list[int] | None = None
    ground: int = 2
    dim: int = 2
    strategy: str = "multiscale"
    budget: int = DEFAULT_BUDGET
    seed: int = 0
    epsilon: float | None = None
    suite: str | None = None
    rmax: int = 10
    r1: int = 2
    r2: int = 4
    trials: int = 5
    out: str | None = None
    odometer: str | None = None
    csv: str | None = None


def _count(text: str) -> int:
    """Integer that may be written as 1e6."""
    try:
        return int(text)
    except ValueError:
        val = float(text)
        if not val.is_integer():
            raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
        return int(val)


def _count_list(text: str) -> list[int]:
    try:
        return [_count(t) for t in text.split(",") if t.strip()]
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _strategy(text: str) -> str:
    try:
        return str(Strategy.parse(text))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", "--n-list", dest="n", type=_count_list,
                        help="particle count(s), comma separated; 1e5 notation allowed")
    common.add_argument("--ground", type=int, default=2, help="background height h")
    common.add_argument("--dim", type=int, default=2)
    common.add_argument("--strategy", type=_strategy, default="multiscale",
                        help="fifo, lifo, bulk-fifo, random:SEED, tiled-parallel:SIDE, multiscale")
    common.add_argument("--budget", type=_count, default=DEFAULT_BUDGET)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--suite", choices=SUITES)
    common.add_argument("--rmax", type=int, default=10)
    common.add_argument("--r1", type=int, default=2)
    common.add_argument("--r2", type=int, default=4)
    common.add_argument("--trials", type=int, default=5)
    common.add_argument("--out")
    common.add_argument("--odometer")
    common.add_argument("--csv")
    parser = argparse.ArgumentParser(prog="sandpile", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def parse_args(argv) -> RunSpec:
    """Validated RunSpec; usage errors exit with status 2."""
    parser = build_parser()
    ns = parser.parse_args(list(argv))
    spec = RunSpec(**{f.name: getattr(ns, f.name) for f in fields(RunSpec)
                      if getattr(ns, f.name, None) is not None})
    if spec.command == "verify" and spec.suite is None:
        parser.error("verify needs --suite")
    if spec.dim < 1 or spec.ground < 0 or spec.budget < 0 or spec.trials < 0:
        parser.error("dimension, ground, budget and trials must be non-negative")
    if spec.n is not None and (not spec.n or any(n < 0 for n in spec.n)):
        parser.error("--n needs non-negative counts")
    return spec


def render(spec: RunSpec) -> list[str]:
    """argv that parses back to ``spec``."""
    argv = [spec.command]
    if spec.n is not None:
        argv += ["--n", ",".join(str(n) for n in spec.n)]
    defaults = RunSpec(spec.command)
    for f in fields(RunSpec):
        if f.name in ("command", "n"):
            continue
        val = getattr(spec, f.name)
        if val is None or val == getattr(defaults, f.name):
            continue
        argv += [f"--{f.name}", str(val)]
    return argv


# -- commands ---------------------------------------------------------------------

def _cmd_stabilize(spec: RunSpec) -> tuple[int, dict]:
    n = spec.n[0] if spec.n else 1000
    t0 = time.perf_counter()
    res = stabilize(make_point_source(n, spec.ground, spec.dim), spec.strategy, spec.budget)
    top = toppled_cluster(res)
    summary = {"n": n, "h": spec.ground, "d": spec.dim, "strategy": res.strategy,
               "radius": radius(top), "square_r": match_square(top),
               "total_topplings": res.total_topplings,
               "budget_exhausted": res.budget_exhausted,
               "wall_time_s": round(time.perf_counter() - t0, 3)}
    if spec.out:
        emit_pgm(res.final, spec.out, res.odometer)
    if spec.odometer:
        emit_odometer_csv(res.odometer, spec.odometer)
    return (EXIT_BUDGET if res.budget_exhausted else EXIT_OK), summary


def _cmd_sweep(spec: RunSpec) -> tuple[int, dict]:
    ns = spec.n or ex.log_spaced(10**3, 10**5, 7)
    records, fit = ex.sweep(ns, spec.ground, spec.dim, spec.strategy, spec.budget)
    if spec.csv:
        with open(spec.csv, "w") as fh:
            fh.write(ex.sweep_csv(records))
    return EXIT_OK, {"fit": asdict(fit) if fit else None, "records": [asdict(r) for r in records]}


def _cmd_replay(spec: RunSpec) -> tuple[int, dict]:
    config = make_square_config(spec.r1, spec.r2, spec.ground, spec.dim)
    final, rep = replay_schedule(config, staged_square_schedule(spec.r1, spec.r2, spec.dim))
    summary = {"r1": spec.r1, "r2": spec.r2, "legal": rep.legal,
               "rounds_completed": rep.rounds_completed,
               "stuck_round": rep.stuck_round, "stuck_cell": rep.stuck_cell,
               "topplings": rep.odometer.total() if rep.odometer is not None else 0}
    if spec.out:
        emit_pgm(final, spec.out, rep.odometer)
    return (EXIT_OK if rep.legal else EXIT_FAIL), summary


def _default_n(spec: RunSpec, fallback: list[int]) -> list[int]:
    return spec.n if spec.n else fallback


def verify_reports(spec: RunSpec) -> list[ex.Report]:
    suite = spec.suite
    if suite == "abelian":
        rng_seeds = [spec.seed * 1000 + i for i in range(20)]
        configs = [ex.random_config(s) for s in rng_seeds]
        configs += [make_point_source(4, 2), make_point_source(100, 0), make_point_source(1000, 2)]
        return [ex.abelian_check(c, spec.trials, spec.seed + i) for i, c in enumerate(configs)]
    if suite == "monotonic":
        reps = [ex.monotonicity_check(*ex.random_leq_pair(spec.seed * 1000 + i))
                for i in range(max(spec.trials, 1) * 4)]
        for n in _default_n(spec, [100, 1000]):
            reps.append(ex.monotonicity_check(make_point_source(n, spec.ground),
                                              make_point_source(n + 1, spec.ground)))
        return reps
    if suite == "lemma1":
        return [ex.lemma1_check(n, spec.epsilon, spec.strategy) for n in _default_n(spec, [10**4])]
    if suite == "lemma2":
        return [ex.lemma2_check(r1, r2) for r2 in range(spec.rmax + 1) for r1 in range(r2 + 1)]
    if suite == "lemma2-stages":
        return [ex.lemma2_stage_check(r1, r2)
                for r2 in range(1, spec.rmax + 1) for r1 in range(1, r2 + 1)]
    if suite == "theorem1-square":
        return [ex.theorem1_square(n, spec.ground, 2, spec.strategy)
                for n in _default_n(spec, [4, 10, 100, 1000, 10**4])]
    if suite == "theorem2":
        return [ex.theorem2_bounds(n, spec.epsilon or ex.DEFAULT_EPSILON, spec.strategy)
                for n in _default_n(spec, [10**4])]
    if suite == "theorem2-stages":
        return [ex.theorem2_stages(n, spec.epsilon or ex.DEFAULT_EPSILON, spec.strategy)[1]
                for n in _default_n(spec, [10**3, 10**4])]
    if suite == "scaling":
        ns = spec.n or ex.log_spaced(10**3, 10**5, 7)
        records, fit = ex.sweep(ns, spec.ground, spec.dim, spec.strategy, spec.budget)
        target = 1 / spec.dim
        if fit is None:
            return [ex.Report("scaling", False, {"n_list": ns}, "too few points for a fit")]
        ok = abs(fit.alpha - target) <= 0.04
        return [ex.Report("scaling", ok, {"fit": asdict(fit), "target_alpha": target},
                          None if ok else f"alpha {fit.alpha:.3f} outside {target:.3f} +- 0.04")]
    raise ValueError(f"unknown suite {suite!r}")


def _cmd_verify(spec: RunSpec) -> tuple[int, dict]:
    reports = verify_reports(spec)
    for rep in reports:
        print(rep.line(), file=sys.stderr)
    passed = all(r.passed for r in reports)
    return (EXIT_OK if passed else EXIT_FAIL), {
        "suite": spec.suite, "passed": passed, "count": len(reports),
        "failures": [r.to_dict() for r in reports if not r.passed]}


def run(spec: RunSpec) -> int:
    handlers = {"stabilize": _cmd_stabilize, "sweep": _cmd_sweep,
                "verify": _cmd_verify, "replay": _cmd_replay}
    try:
        code, summary = handlers[spec.command](spec)
    except ex.BudgetExhausted as exc:
        code, summary = EXIT_BUDGET, {"error": str(exc)}
    except OSError as exc:
        code, summary = EXIT_IO, {"error": f"I/O failure: {exc}"}
    except ValueError as exc:
        code, summary = EXIT_USAGE, {"error": str(exc)}
    summary = {"command": spec.command, "exit_code": code, **summary}
    print(json.dumps(ex._jsonable(summary), sort_keys=True, default=str))
    return code


def main(argv=None) -> int:
    spec = parse_args(sys.argv[1:] if argv is None else argv)
    return run(spec)


if __name__ == "__main__":
    sys.exit(main())
