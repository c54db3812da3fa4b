"""Command-line entry points.

Every subcommand reads one config document, runs its engine, and writes a
JSON record (always) plus a delimited table when format=table. Exit codes:
0 success, 2 configuration error, 3 runtime or numeric error. Errors also
emit a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .comparators import simon_search, two_stage_error_rates
from .config import ConfigError, RunConfig, parse_config
from .config import (
    resolve_analyze,
    resolve_calibrate,
    resolve_correlations,
    resolve_design_simon,
    resolve_simulate,
)
from .mcmc import muce_fit
from .model import prior_correlation
from .reports import (
    atomic_write,
    calibration_table,
    correlations_table,
    oc_report_table,
    oc_report_to_dict,
    posterior_report_table,
    posterior_report_to_dict,
    simon_design_table,
    write_record,
)
from .trial import calibrate_phi1, calibrate_phi2, simulate_oc

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _out_path(cfg: RunConfig, name: str) -> str:
    return os.path.join(cfg.out_dir, name)


def _emit(cfg: RunConfig, stem: str, kind: str, body: dict, table: str | None):
    write_record(_out_path(cfg, f"{stem}.json"), kind, body,
                 config_echo=cfg.to_dict(), seed=cfg.seed)
    if cfg.format == "table" and table is not None:
        atomic_write(_out_path(cfg, f"{stem}.csv"), table)


def _cmd_analyze(cfg: RunConfig) -> int:
    layout, hyper, mcmc, data, phi2, estimator = resolve_analyze(cfg)
    report = muce_fit(data, layout, hyper, mcmc, rate_estimator=estimator)
    body = posterior_report_to_dict(report)
    if phi2 is not None:
        body["phi2"] = phi2
        body["promising"] = (report.pr_h1 > phi2).tolist()
    _emit(cfg, "analyze_report", "posterior_report", body,
          posterior_report_table(report, phi2))
    return EXIT_OK


def _cmd_simulate(cfg: RunConfig) -> int:
    design, scenario, n_reps, seed = resolve_simulate(cfg)
    oc = simulate_oc(design, scenario, n_reps, seed, jobs=cfg.jobs)
    _emit(cfg, "oc_report", "oc_report", oc_report_to_dict(oc),
          oc_report_table(oc))
    return EXIT_OK


def _cmd_calibrate(cfg: RunConfig) -> int:
    quantity, target, design, scenario, n_reps, seed = resolve_calibrate(cfg)
    if quantity == "phi2":
        result = calibrate_phi2(design, scenario, target, n_reps, seed,
                                jobs=cfg.jobs)
    else:
        result = calibrate_phi1(design, scenario, target, n_reps, seed,
                                jobs=cfg.jobs)
    body = {"quantity": quantity, "threshold": result.phi,
            "achieved": result.achieved, "target": result.target,
            "n_reps": result.n_reps, "seed": result.seed}
    _emit(cfg, "calibration", "calibration", body,
          calibration_table(result, quantity))
    return EXIT_OK


def _cmd_design_simon(cfg: RunConfig) -> int:
    p0, p1, alpha, beta, criterion, n_max = resolve_design_simon(cfg)
    design = simon_search(p0, p1, alpha, beta, criterion, n_max)
    at_p0 = two_stage_error_rates(design, p0)
    at_p1 = two_stage_error_rates(design, p1)
    body = {"criterion": criterion,
            "design": {"r1": design.r1, "n1": design.n1,
                       "r": design.r, "N": design.N},
            "type_i_error": at_p0.reject_prob, "power": at_p1.reject_prob,
            "pet_p0": at_p0.pet, "expected_n_p0": at_p0.expected_n}
    _emit(cfg, "simon_design", "simon_design", body,
          simon_design_table(design, at_p0, at_p1))
    return EXIT_OK


def _cmd_correlations(cfg: RunConfig) -> int:
    hyper = resolve_correlations(cfg)
    values = {case: prior_correlation(hyper, case)
              for case in ("same_indication", "same_dose", "neither")}
    _emit(cfg, "correlations", "correlations",
          {"hyper": vars(hyper).copy(), "correlations": values},
          correlations_table(values))
    return EXIT_OK


_COMMANDS = {
    "analyze": _cmd_analyze,
    "simulate": _cmd_simulate,
    "calibrate": _cmd_calibrate,
    "design-simon": _cmd_design_simon,
    "correlations": _cmd_correlations,
}


def run_subcommand(name: str, cfg: RunConfig) -> int:
    """Dispatch one validated config to its engine; returns the exit code."""
    if name not in _COMMANDS:
        raise ConfigError("", f"unknown subcommand {name!r}")
    return _COMMANDS[name](cfg)


def _error_record(exc: Exception, code: int) -> str:
    record = {"error": {"type": type(exc).__name__, "message": str(exc),
                        "exit_code": code}}
    if isinstance(exc, ConfigError):
        record["error"]["path"] = exc.path
    return json.dumps(record)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muce",
        description="Bayesian multi-dose multi-indication expansion-cohort "
                    "trial engine and comparator designs")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the run document")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's master seed")
        p.add_argument("--reps", type=int, default=None,
                       help="override the replication count")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("table", "records"), default=None)
        p.add_argument("--jobs", type=int, default=None,
                       help="replication worker processes")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        cfg = cfg.with_overrides(seed=args.seed, reps=args.reps,
                                 out_dir=args.out, fmt=args.format,
                                 jobs=args.jobs)
        return run_subcommand(args.command, cfg)
    except ConfigError as exc:
        print(_error_record(exc, EXIT_CONFIG), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001  (CLI boundary)
        print(_error_record(exc, EXIT_RUNTIME), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
