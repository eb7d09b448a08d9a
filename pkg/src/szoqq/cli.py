"""Command-line front end.

    szoqq list-benchmarks
    szoqq check CONFIG
    szoqq run [CONFIG ...] [--benchmark NAME] [--method szoqq|lbm-baseline] [overrides]

A config is a TOML file::

    benchmark = "qcqp_2d"          # example1 | qcqp_2d | random_qcqp | ocp
    method = "szoqq"               # szoqq | lbm-baseline
    max_iters = 2000
    seed = 0                       # random_qcqp only

    [constants]                    # scalars or one value per constraint
    L = 5.0
    M = 3.0

    [driver]
    mu = 1e-3
    xi = 0.0
    subsolver_tol = 1e-8
    escalation = true

    [params]                       # benchmark parameters
    # random_qcqp: d, m    ocp: horizon, state_bound, input_bound, disturbance

    [output]
    trace = "trace.csv"
    summary = "summary.json"
    ledger = "ledger.csv"

Anything left out takes the benchmark's defaults. Exit status: 0 success,
1 usage error, 2 a constraint violation was recorded, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from types import SimpleNamespace
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bench import BENCHMARKS, OcpSpec, ocp_cost
from .driver import DriverConfig, run_lbm_baseline, run_szoqq
from .errors import BenchmarkUnavailable, ContractViolation, InfeasibleAnchorError, SZOQQError
from .problem import SafetyLedger, SmoothnessConstants

METHODS = ("szoqq", "lbm-baseline")
EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, EXIT_FAILURE = 0, 1, 2, 3

logger = logging.getLogger("szoqq")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    benchmark: str = "qcqp_2d"
    method: str = "szoqq"
    L: Optional[object] = None
    M: Optional[object] = None
    mu: Optional[float] = None
    xi: Optional[float] = None
    max_iters: Optional[int] = None
    subsolver_tol: Optional[float] = None
    escalation: bool = True
    trace: Optional[str] = None
    summary: Optional[str] = None
    ledger: Optional[str] = None
    seed: int = 0
    params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.benchmark not in BENCHMARKS:
            raise UsageError(f"unknown benchmark {self.benchmark!r}; choose from {', '.join(BENCHMARKS)}")
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        for name in ("L", "M"):
            v = getattr(self, name)
            if v is not None and np.any(np.asarray(v, dtype=float) <= 0):
                raise UsageError(f"{name} must be strictly positive")
        if self.mu is not None and not self.mu > 0:
            raise UsageError("mu must be positive")
        if self.xi is not None and not self.xi >= 0:
            raise UsageError("xi must be nonnegative")
        if self.max_iters is not None and self.max_iters < 1:
            raise UsageError("max_iters must be positive")
        if self.subsolver_tol is not None and not self.subsolver_tol > 0:
            raise UsageError("subsolver_tol must be positive")
        allowed = {"random_qcqp": {"d", "m"}, "ocp": {"horizon", "state_bound", "input_bound", "disturbance"}}
        extra = set(self.params) - allowed.get(self.benchmark, set())
        if extra:
            raise UsageError(f"unknown parameters for {self.benchmark}: {', '.join(sorted(extra))}")
        return self


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"cannot parse {path}: {exc}") from None
    raw = dict(raw)
    known_sections = {"constants", "driver", "output", "params"}
    known_top = {"benchmark", "method", "max_iters", "seed"}
    unknown = set(raw) - known_sections - known_top
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cfg = RunConfig(**{k: raw[k] for k in known_top if k in raw})
    consts = raw.get("constants", {})
    drv = raw.get("driver", {})
    out = raw.get("output", {})
    for section, keys in ((consts, {"L", "M"}), (drv, {"mu", "xi", "subsolver_tol", "escalation"}), (out, {"trace", "summary", "ledger"})):
        bad = set(section) - keys
        if bad:
            raise UsageError(f"unknown config keys: {', '.join(sorted(bad))}")
    cfg = replace(cfg, **consts, **drv, **out, params=dict(raw.get("params", {})))
    return cfg


def _instantiate(cfg: RunConfig):
    if cfg.benchmark == "random_qcqp":
        return BENCHMARKS["random_qcqp"](d=int(cfg.params.get("d", 2)), m=int(cfg.params.get("m", 3)), seed=cfg.seed)
    if cfg.benchmark == "ocp":
        p = cfg.params
        spec = OcpSpec(
            horizon=int(p.get("horizon", 6)),
            state_bound=float(p.get("state_bound", 0.7)),
            input_bound=float(p.get("input_bound", 1.5)),
            disturbance_coeff=float(p.get("disturbance", 0.1)),
        )
        return BENCHMARKS["ocp"](spec)
    return BENCHMARKS[cfg.benchmark]()


def _constants(cfg: RunConfig, meta, m: int) -> SmoothnessConstants:
    base = meta.default_constants
    L = base.L if cfg.L is None else np.broadcast_to(np.asarray(cfg.L, dtype=float), (m,))
    M = base.M if cfg.M is None else np.broadcast_to(np.asarray(cfg.M, dtype=float), (m,))
    return SmoothnessConstants(L, M, base.M0)


def _driver_config(cfg: RunConfig, meta) -> DriverConfig:
    kw = dict(meta.default_config)
    for name in ("mu", "xi", "max_iters", "subsolver_tol"):
        v = getattr(cfg, name)
        if v is not None:
            kw[name] = v
    kw["escalation_enabled"] = bool(cfg.escalation)
    return DriverConfig(**kw)


def execute(cfg: RunConfig) -> int:
    """Run one configuration; returns the exit status."""
    try:
        cfg.validate()
        problem, meta = _instantiate(cfg)
        constants = _constants(cfg, meta, problem.num_constraints)
        dcfg = _driver_config(cfg, meta)
    except (UsageError, ContractViolation, TypeError, ValueError) as exc:
        print(f"szoqq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BenchmarkUnavailable as exc:
        print(f"szoqq: error: benchmark unavailable: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    runner = run_szoqq if cfg.method == "szoqq" else run_lbm_baseline
    header = {"benchmark": cfg.benchmark, "problem": problem.name, "mu": dcfg.mu, "xi": dcfg.xi}
    sink = open(cfg.ledger, "w", newline="") if cfg.ledger else None
    ledger = SafetyLedger(keep_points=False, sink=sink)
    try:
        try:
            trace = runner(problem, constants, dcfg, f0_inf=meta.known_optimum_value, ledger=ledger)
        except SZOQQError as exc:
            status = EXIT_VIOLATION if ledger.violation_count else EXIT_FAILURE
            msg = str(exc)
            if isinstance(exc, InfeasibleAnchorError):
                msg = f"constraint {exc.constraint} violated (value {exc.value!r}): {exc}"
            logger.error("%s run on %s failed: %s", cfg.method, cfg.benchmark, msg)
            for k, c, v in ledger.violations()[:5]:
                logger.error("  violation at eval %d: constraint %d returned %r", k, c, v)
            if cfg.summary:
                with open(cfg.summary, "w") as fh:
                    json.dump({**header, "status": "error", "error": msg,
                               "violation_count": ledger.violation_count, "total_evals": ledger.total_evals}, fh, indent=2)
                    fh.write("\n")
            return status
    finally:
        if sink is not None:
            sink.close()

    extra = dict(header, status="ok")
    if cfg.benchmark == "ocp":
        spec = meta.extra["spec"]
        extra["final_true_cost"] = ocp_cost(spec, trace.final_point[: spec.dim])
        extra["initial_true_cost"] = meta.extra["initial_cost"]
    if cfg.trace:
        trace.write_csv(cfg.trace)
    if cfg.summary:
        trace.write_summary(cfg.summary, **extra)
    s = trace.summary()
    logger.info(
        "%s on %s: %d iterations, final objective %.6g, %d evaluations, %d violations",
        cfg.method, cfg.benchmark, s["iterations"], s["final_objective"], s["total_evals"], s["violation_count"],
    )
    if trace.violation_count:
        for k, c, v in ledger.violations()[:5]:
            logger.error("violation at eval %d: constraint %d returned %r", k, c, v)
        return EXIT_VIOLATION
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    vals = [float(v) for v in text.split(",")]
    return vals[0] if len(vals) == 1 else vals


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="szoqq", description="Safe zeroth-order optimization benchmarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("list-benchmarks", help="list built-in benchmarks")
    for name, helptext in (("run", "run one or more configurations"), ("check", "validate configurations only")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        p.add_argument("configs", nargs="*", help="TOML run configs")
        p.add_argument("--benchmark")
        p.add_argument("--method")
        p.add_argument("--L", type=_floats, help="scalar or comma-separated list")
        p.add_argument("--M", type=_floats, help="scalar or comma-separated list")
        p.add_argument("--mu", type=float)
        p.add_argument("--xi", type=float)
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--subsolver-tol", type=float, dest="subsolver_tol")
        p.add_argument("--no-escalation", action="store_false", dest="escalation", default=None)
        p.add_argument("--seed", type=int)
        p.add_argument("--trace")
        p.add_argument("--summary")
        p.add_argument("--ledger", help="stream every oracle query to this CSV")
        p.add_argument("--jobs", type=int, default=1, help="run configs in parallel processes")
    return parser


def _configs_from_args(args) -> list[RunConfig]:
    cfgs = [load_config(p) for p in args.configs] or [RunConfig()]
    overrides = {
        k: getattr(args, k)
        for k in ("benchmark", "method", "L", "M", "mu", "xi", "max_iters", "subsolver_tol",
                  "escalation", "seed", "trace", "summary", "ledger")
        if getattr(args, k) is not None
    }
    return [replace(c, **overrides).validate() for c in cfgs]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "list-benchmarks":
        for name, factory in BENCHMARKS.items():
            doc = (factory.__doc__ or "").strip().splitlines()[0]
            print(f"{name:12s} {doc}")
        return EXIT_OK
    try:
        cfgs = _configs_from_args(args)
        if args.command == "check":
            for c in cfgs:
                _driver_config(c, SimpleNamespace(default_config={}))
            print(f"{len(cfgs)} configuration(s) OK")
            return EXIT_OK
    except (UsageError, ContractViolation, TypeError) as exc:
        print(f"szoqq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            statuses = list(pool.map(execute, cfgs))
    else:
        statuses = [execute(c) for c in cfgs]
    return max(statuses)


if __name__ == "__main__":
    sys.exit(main())
