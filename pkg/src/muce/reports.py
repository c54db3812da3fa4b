"""Result persistence: delimited tables, lossless structured records, and
long-format plot data.

Every run writes one self-describing JSON record embedding the exact run
configuration, master seed and code version; the delimited table is an
additional view when requested. Files are written atomically (temp file then
rename) and numeric table fields use 6 significant digits with a fixed
decimal point and separator, independent of locale.
"""

from __future__ import annotations

import json
import os
import tempfile
from typing import Iterable

import numpy as np

from . import __version__
from .comparators import SimonDesign, TwoStageOperatingPoint
from .mcmc import PosteriorReport
from .model import Hyperparameters, McmcConfig
from .trial import CalibrationResult, OCReport


def atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    if isinstance(x, float) and np.isnan(x):
        return "nan"
    return format(float(x), ".6g")


def render_table(header: list[str], rows: Iterable[Iterable]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row))
    return "\n".join(lines) + "\n"


def posterior_report_table(report: PosteriorReport,
                           phi2: float | None = None) -> str:
    """One row per arm: indication, dose, n, y, raw_rate, est_p, pr_h1, decision."""
    I, J = report.n.shape
    rows = []
    for i in range(I):
        for j in range(J):
            n = int(report.n[i, j])
            raw = report.y[i, j] / n if n else float("nan")
            decision = ""
            if phi2 is not None:
                decision = ("promising" if report.pr_h1[i, j] > phi2
                            else "not_promising")
            rows.append([i + 1, j + 1, n, int(report.y[i, j]), raw,
                         report.est_p[i, j], report.pr_h1[i, j], decision])
    return render_table(
        ["indication", "dose", "n", "y", "raw_rate", "est_p", "pr_h1", "decision"],
        rows)


def oc_report_table(report: OCReport) -> str:
    """One row per arm plus a summary row carrying FWER and total enrollment."""
    _, I, J = report.promising.shape
    n_interims = report.early_stop_rate.shape[0]
    header = (["row", "indication", "dose", "null", "reject_rate", "avg_n"]
              + [f"early_stop_rate_{l + 1}" for l in range(n_interims)])
    rows = []
    for i in range(I):
        for j in range(J):
            rows.append(["arm", i + 1, j + 1, bool(report.null_mask[i, j]),
                         report.reject_rate[i, j], report.avg_n[i, j]]
                        + [report.early_stop_rate[l, i, j]
                           for l in range(n_interims)])
    summary = ["summary", "", "", "", f"fwer={_fmt(report.fwer)}",
               f"total_avg_n={_fmt(report.total_avg_n)}"] + [""] * n_interims
    return render_table(header, rows + [summary])


def simon_design_table(design: SimonDesign, at_p0: TwoStageOperatingPoint,
                       at_p1: TwoStageOperatingPoint) -> str:
    return render_table(
        ["r1", "n1", "r", "N", "type_i", "power", "pet_p0", "expected_n_p0"],
        [[design.r1, design.n1, design.r, design.N, at_p0.reject_prob,
          at_p1.reject_prob, at_p0.pet, at_p0.expected_n]])


def correlations_table(values: dict[str, float]) -> str:
    return render_table(["case", "correlation"],
                        [[k, v] for k, v in values.items()])


def calibration_table(result: CalibrationResult, quantity: str) -> str:
    return render_table(
        ["quantity", "threshold", "achieved", "target", "n_reps", "seed"],
        [[quantity, result.phi, result.achieved, result.target,
          result.n_reps, result.seed]])


def plot_data_table(rows: Iterable[tuple[str, str, str, str, float]]) -> str:
    """Long format (design, scenario, arm, metric, value) for plotting tools."""
    return render_table(["design", "scenario", "arm", "metric", "value"],
                        [list(r) for r in rows])


def oc_plot_rows(design_label: str, report: OCReport):
    """Flatten one OC report into long-format rows for design comparisons.

    Per arm: rejection rate (power or type I depending on the arm's truth)
    and average enrollment; one trial-level FWER row. Arms are labeled
    "indication/dose".
    """
    rows = []
    _, I, J = report.promising.shape
    for i in range(I):
        for j in range(J):
            arm = f"{i + 1}/{j + 1}"
            metric = "type_i_error" if report.null_mask[i, j] else "power"
            rows.append((design_label, report.scenario_label, arm, metric,
                         float(report.reject_rate[i, j])))
            rows.append((design_label, report.scenario_label, arm, "avg_n",
                         float(report.avg_n[i, j])))
    rows.append((design_label, report.scenario_label, "all", "fwer",
                 report.fwer))
    return rows


def _arr(a: np.ndarray):
    return np.asarray(a).tolist()


def posterior_report_to_dict(report: PosteriorReport) -> dict:
    return {
        "pr_h1": _arr(report.pr_h1),
        "est_p": _arr(report.est_p),
        "ess": _arr(report.ess),
        "acceptance": _arr(report.acceptance),
        "n": _arr(report.n),
        "y": _arr(report.y),
        "pi0": list(report.pi0),
        "hyper": vars(report.hyper).copy(),
        "mcmc": vars(report.mcmc).copy(),
    }


def posterior_report_from_dict(d: dict) -> PosteriorReport:
    return PosteriorReport(
        pr_h1=np.asarray(d["pr_h1"], dtype=float),
        est_p=np.asarray(d["est_p"], dtype=float),
        ess=np.asarray(d["ess"], dtype=float),
        acceptance=np.asarray(d["acceptance"], dtype=float),
        n=np.asarray(d["n"], dtype=np.int64),
        y=np.asarray(d["y"], dtype=np.int64),
        pi0=tuple(d["pi0"]),
        hyper=Hyperparameters(**d["hyper"]),
        mcmc=McmcConfig(**d["mcmc"]),
    )


def oc_report_to_dict(report: OCReport) -> dict:
    return {
        "scenario_label": report.scenario_label,
        "n_reps": report.n_reps,
        "seed": report.seed,
        "rep_indices": _arr(report.rep_indices),
        "null_mask": _arr(report.null_mask),
        "promising": _arr(report.promising),
        "sample_sizes": _arr(report.sample_sizes),
        "stop_stages": _arr(report.stop_stages),
        "probs": _arr(report.probs),
        # derived values repeated for human consumption; ignored on ingest
        "summary": {
            "reject_rate": _arr(report.reject_rate),
            "fwer": report.fwer,
            "avg_n": _arr(report.avg_n),
            "total_avg_n": report.total_avg_n,
            "early_stop_rate": _arr(report.early_stop_rate),
        },
    }


def oc_report_from_dict(d: dict) -> OCReport:
    return OCReport(
        scenario_label=d["scenario_label"],
        n_reps=int(d["n_reps"]),
        seed=int(d["seed"]),
        rep_indices=np.asarray(d["rep_indices"], dtype=np.int64),
        null_mask=np.asarray(d["null_mask"], dtype=bool),
        promising=np.asarray(d["promising"], dtype=bool),
        sample_sizes=np.asarray(d["sample_sizes"], dtype=np.int64),
        stop_stages=np.asarray(d["stop_stages"], dtype=np.int64),
        probs=np.asarray(d["probs"], dtype=float),
    )


def oc_reports_equal(a: OCReport, b: OCReport) -> bool:
    return (a.scenario_label == b.scenario_label
            and a.n_reps == b.n_reps and a.seed == b.seed
            and np.array_equal(a.rep_indices, b.rep_indices)
            and np.array_equal(a.null_mask, b.null_mask)
            and np.array_equal(a.promising, b.promising)
            and np.array_equal(a.sample_sizes, b.sample_sizes)
            and np.array_equal(a.stop_stages, b.stop_stages)
            and np.array_equal(a.probs, b.probs, equal_nan=True))


def write_record(path: str, kind: str, body: dict, config_echo: dict,
                 seed: int | None):
    """One self-describing JSON document per run; floats survive round trips."""
    record = {
        "kind": kind,
        "version": __version__,
        "seed": seed,
        "config": config_echo,
        "body": body,
    }
    atomic_write(path, json.dumps(record, indent=2, allow_nan=True) + "\n")


def read_record(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
