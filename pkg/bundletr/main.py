import argparse
import dataclasses
import logging
import sys
from typing import List, Optional

import yaml

from .axioms import check_oracle_axioms
from .config import ORACLE_KINDS, RunConfig, load_config
from .driver import SolveStatus, TrustRegionBundle
from .errors import BundleError
from .oracles import DownshiftParams, make_oracle
from .problems import get_problem, list_problems
from .reporting import summary_record, write_summary, write_trace

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CAP = 2


def setup_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bundletr", description="Nonsmooth trust-region bundle solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="Run the solver on a named problem")
    p_solve.add_argument("--problem", default="", help="Problem spec, e.g. l1_quadratic:b=2,r=1")
    p_solve.add_argument("--config", default="", help="Path to a YAML run configuration")
    p_solve.add_argument("--trace", default=None, help="CSV trace output path")
    p_solve.add_argument("--summary", default=None, help="YAML summary output path")
    p_solve.add_argument("--seed", type=int, default=None, help="Seed for randomized problems")

    p_check = sub.add_parser("check-oracle", help="Check the oracle axioms numerically")
    p_check.add_argument("--problem", required=True, help="Problem spec")
    p_check.add_argument("--oracle", default="downshift", choices=list(ORACLE_KINDS))
    p_check.add_argument("--samples", type=int, default=1000, help="Random (z, x) pairs for the exactness check")
    p_check.add_argument("--seed", type=int, default=0)

    sub.add_parser("list-problems", help="List the problem library")
    return parser


def _solve(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    setup_logging(cfg.logging.level)
    if args.trace is not None:
        cfg.output.trace = args.trace
    if args.summary is not None:
        cfg.output.summary = args.summary
    if args.seed is not None:
        cfg.seed = args.seed
    spec = args.problem or cfg.problem
    if not spec:
        raise BundleError("no problem given (use --problem or the config's 'problem' key)")

    named = get_problem(spec, seed=cfg.seed)
    solver_cfg = cfg.solver
    if solver_cfg.prox_r is None and named.prox_r is not None:
        solver_cfg = dataclasses.replace(solver_cfg, prox_r=named.prox_r)
    logging.info("solving %s from x0=%s", spec, named.x0.tolist())

    solver = TrustRegionBundle(named.problem, named.C, solver_cfg)
    try:
        result = solver.solve(named.x0)
    finally:
        # partial traces are kept when the solve raises
        if cfg.output.trace:
            write_trace(cfg.output.trace, solver.trace)
    if cfg.output.summary:
        write_summary(cfg.output.summary, result, problem=spec, seed=cfg.seed)
    sys.stdout.write(yaml.safe_dump(summary_record(result, spec, cfg.seed), sort_keys=False))
    return EXIT_OK if result.status == SolveStatus.CRITICAL else EXIT_CAP


def _check_oracle(args) -> int:
    setup_logging("INFO")
    named = get_problem(args.problem, seed=args.seed)
    oracle = make_oracle(args.oracle, named.problem, DownshiftParams())
    report = check_oracle_axioms(oracle, named.problem, named.x0, sample_count=args.samples,
                                 lower=named.C.lower, upper=named.C.upper, seed=args.seed)
    record = {"problem": args.problem, "oracle": args.oracle}
    record.update(report.as_dict())
    sys.stdout.write(yaml.safe_dump(record, sort_keys=False))
    return EXIT_OK


def run(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "list-problems":
            sys.stdout.write("\n".join(list_problems()) + "\n")
            return EXIT_OK
        if args.command == "check-oracle":
            return _check_oracle(args)
        return _solve(args)
    except BundleError as e:
        setup_logging("INFO")
        logging.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
    except Exception as e:
        setup_logging("INFO")
        logging.exception("Fatal error: %s", e)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(run())
