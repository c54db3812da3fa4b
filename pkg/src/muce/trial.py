"""Trial conduct, replicated operating characteristics and threshold tuning.

A trial walks the per-arm enrollment schedule, analyzes all arms jointly at
every interim, permanently closes accrual in arms whose decision probability
drops below phi1 (their accumulated data still enter later fits), and
declares still-active arms promising at the final analysis when the decision
probability exceeds phi2. Simon-method arms instead follow their own
two-stage rule independently. Replications use independent child streams of
the master seed keyed by replication index, so results are reproducible and
mergeable across disjoint replication ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .comparators import (
    BbhmHyper,
    ComparatorHyper,
    ExnexHyper,
    SimonDesign,
    bbhm_fit,
    exnex_fit,
)
from .mcmc import muce_fit
from .model import Hyperparameters, McmcConfig, TrialDataset, TrialLayout

Method = Literal["muce", "bbhm", "exnex", "simon"]

# Simulation studies default to a shorter chain than reporting analyses;
# acceptance tolerances account for the extra Monte Carlo noise.
SIMULATION_MCMC = McmcConfig(burn_in=1000, n_keep=4000)


@dataclass(frozen=True)
class DesignSpec:
    """Everything needed to conduct one trial under a named method."""

    method: str
    layout: TrialLayout
    phi1: float = 0.0
    phi2: float = 1.0
    hyper: Hyperparameters | ComparatorHyper | None = None
    mcmc: McmcConfig = SIMULATION_MCMC
    simon: SimonDesign | None = None
    pi1: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.method not in ("muce", "bbhm", "exnex", "simon"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.pi1 is not None:
            object.__setattr__(self, "pi1", tuple(float(p) for p in self.pi1))
            if len(self.pi1) != self.layout.n_indications:
                raise ValueError("pi1 must give one target rate per indication")
        if self.method == "simon":
            if self.simon is None:
                raise ValueError("simon method needs a SimonDesign")
            if self.simon.N != self.layout.max_n:
                raise ValueError("layout.max_n must equal the Simon design's N")
            return
        if not 0.0 <= self.phi1 < self.phi2 <= 1.0:
            raise ValueError("need 0 <= phi1 < phi2 <= 1")
        hyper = self.hyper
        if self.method == "muce":
            if hyper is None:
                object.__setattr__(self, "hyper", Hyperparameters())
            elif not isinstance(hyper, Hyperparameters):
                raise ValueError("muce method needs Hyperparameters")
        elif self.method == "bbhm":
            if hyper is None:
                object.__setattr__(self, "hyper", BbhmHyper())
            elif not isinstance(hyper, BbhmHyper):
                raise ValueError("bbhm method needs BbhmHyper")
        elif self.method == "exnex":
            if hyper is None:
                object.__setattr__(self, "hyper", ExnexHyper())
            elif not isinstance(hyper, ExnexHyper):
                raise ValueError("exnex method needs ExnexHyper")
        if (self.method in ("bbhm", "exnex") and self.layout.interim_schedule
                and self.pi1 is None):
            raise ValueError(f"{self.method} with interim looks needs pi1 for "
                             "the midpoint futility rule")

    @property
    def n_interims(self) -> int:
        return 1 if self.method == "simon" else len(self.layout.interim_schedule)


@dataclass
class Scenario:
    """True response rates that generate patient outcomes."""

    true_p: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.true_p = np.asarray(self.true_p, dtype=float)
        if self.true_p.ndim != 2:
            raise ValueError("true_p must be an I x J matrix")
        if ((self.true_p <= 0.0) | (self.true_p >= 1.0)).any():
            raise ValueError("true response rates must lie strictly in (0, 1)")

    def null_mask(self, layout: TrialLayout) -> np.ndarray:
        """Arms whose truth satisfies the null (true_p <= pi_i0)."""
        pi0 = np.asarray(layout.pi0)[:, None]
        return self.true_p <= pi0


@dataclass
class TrialResult:
    n: np.ndarray            # (I, J) final enrolled counts
    y: np.ndarray            # (I, J) final responder counts
    promising: np.ndarray    # (I, J) bool, final decision
    stop_stage: np.ndarray   # (I, J) interim index of futility stop, -1 if none
    probs: np.ndarray        # (n_analyses, I, J) decision probabilities
    early_terminated: bool   # every arm stopped before the final analysis


def _analysis_probs(design: DesignSpec, dataset: TrialDataset,
                    seedseq: np.random.SeedSequence):
    """(interim-rule probs, final-rule probs) for all arms on current data."""
    layout = design.layout
    if design.method == "muce":
        report = muce_fit(dataset, layout, design.hyper, design.mcmc,
                          _seed_sequence=seedseq)
        return report.pr_h1, report.pr_h1
    I, J = layout.n_indications, layout.n_doses
    pi0 = np.repeat(layout.pi0, J)
    pi1 = np.repeat(design.pi1, J) if design.pi1 is not None else None
    fit = bbhm_fit if design.method == "bbhm" else exnex_fit
    rep = fit(dataset.n.ravel(), dataset.y.ravel(), pi0, pi1,
              design.hyper, design.mcmc, _seed_sequence=seedseq)
    return rep.pr_interim.reshape(I, J), rep.pr_final.reshape(I, J)


def _conduct_simon(design: DesignSpec, cum: np.ndarray) -> TrialResult:
    sd = design.simon
    y1 = cum[:, :, sd.n1 - 1]
    stopped = y1 <= sd.r1
    n = np.where(stopped, sd.n1, sd.N)
    y = np.where(stopped, y1, cum[:, :, sd.N - 1])
    promising = ~stopped & (y > sd.r)
    stop_stage = np.where(stopped, 0, -1)
    probs = np.full((2,) + stopped.shape, np.nan)
    return TrialResult(n=n, y=y, promising=promising, stop_stage=stop_stage,
                       probs=probs, early_terminated=bool(stopped.all()))


def conduct_trial(design: DesignSpec, scenario: Scenario,
                  rep_seed: int | np.random.SeedSequence,
                  responses: np.ndarray | None = None) -> TrialResult:
    """Run one trial: simulate responses, apply interim stops, decide arms.

    Per-arm responses are Bernoulli(true_p) trajectories generated up front;
    an explicit ``responses`` array (I, J, max_n) replays a fixed trial
    instead. An arm is stopped at an interim iff its decision probability is
    strictly below phi1, contributes its frozen data to every later fit, and
    is declared promising at the final analysis iff still active and its
    probability strictly exceeds phi2. The trial ends early once every arm
    has stopped.
    """
    layout = design.layout
    I, J = layout.n_indications, layout.n_doses
    if scenario.true_p.shape != (I, J):
        raise ValueError("scenario shape does not match layout")

    seedseq = (rep_seed if isinstance(rep_seed, np.random.SeedSequence)
               else np.random.SeedSequence(rep_seed))
    n_analyses = len(layout.interim_schedule) + 1
    children = seedseq.spawn(1 + n_analyses)

    if responses is None:
        rng = np.random.default_rng(children[0])
        responses = rng.random((I, J, layout.max_n)) < scenario.true_p[:, :, None]
    else:
        responses = np.asarray(responses, dtype=bool)
        if responses.shape != (I, J, layout.max_n):
            raise ValueError("responses must have shape (I, J, max_n)")
    cum = np.cumsum(responses, axis=2)

    if design.method == "simon":
        return _conduct_simon(design, cum)

    active = np.ones((I, J), dtype=bool)
    stop_stage = np.full((I, J), -1, dtype=np.int64)
    n_cur = np.zeros((I, J), dtype=np.int64)
    probs = np.full((n_analyses, I, J), np.nan)

    for l, n_l in enumerate(layout.interim_schedule):
        n_cur = np.where(active, n_l, n_cur)
        y_cur = np.take_along_axis(cum, np.maximum(n_cur[:, :, None], 1) - 1,
                                   axis=2)[:, :, 0]
        y_cur = np.where(n_cur > 0, y_cur, 0)
        dataset = TrialDataset(n=n_cur, y=y_cur, active=active)
        interim_probs, _ = _analysis_probs(design, dataset, children[1 + l])
        probs[l] = interim_probs
        newly_stopped = active & (interim_probs < design.phi1)
        stop_stage[newly_stopped] = l
        active &= ~newly_stopped
        if not active.any():
            y_final = y_cur
            return TrialResult(n=n_cur, y=y_final,
                               promising=np.zeros((I, J), dtype=bool),
                               stop_stage=stop_stage, probs=probs,
                               early_terminated=True)

    n_cur = np.where(active, layout.max_n, n_cur)
    y_cur = np.take_along_axis(cum, np.maximum(n_cur[:, :, None], 1) - 1,
                               axis=2)[:, :, 0]
    y_cur = np.where(n_cur > 0, y_cur, 0)
    dataset = TrialDataset(n=n_cur, y=y_cur, active=active)
    _, final_probs = _analysis_probs(design, dataset, children[n_analyses])
    probs[-1] = np.where(active, final_probs, np.nan)
    promising = active & (final_probs > design.phi2)
    return TrialResult(n=n_cur, y=y_cur, promising=promising,
                       stop_stage=stop_stage, probs=probs,
                       early_terminated=False)


@dataclass
class OCReport:
    """Operating characteristics over replications, with per-rep detail.

    Aggregates are plain functions of the per-replication arrays (stored in
    replication-index order), so merging two reports over disjoint index
    ranges reproduces a single larger run bit for bit.
    """

    scenario_label: str
    n_reps: int
    seed: int
    rep_indices: np.ndarray      # (n_reps,)
    null_mask: np.ndarray        # (I, J)
    promising: np.ndarray        # (n_reps, I, J) bool
    sample_sizes: np.ndarray     # (n_reps, I, J)
    stop_stages: np.ndarray      # (n_reps, I, J)
    probs: np.ndarray            # (n_reps, n_analyses, I, J)
    reject_rate: np.ndarray = field(init=False)
    fwer: float = field(init=False)
    avg_n: np.ndarray = field(init=False)
    total_avg_n: float = field(init=False)
    early_stop_rate: np.ndarray = field(init=False)

    def __post_init__(self):
        self.reject_rate = self.promising.mean(axis=0)
        false_pos = (self.promising & self.null_mask[None, :, :]).any(axis=(1, 2))
        self.fwer = float(false_pos.mean())
        self.avg_n = self.sample_sizes.mean(axis=0)
        self.total_avg_n = float(self.sample_sizes.sum(axis=(1, 2)).mean())
        n_interims = self.probs.shape[1] - 1
        self.early_stop_rate = np.stack([
            (self.stop_stages == l).mean(axis=0) for l in range(max(n_interims, 1))
        ])

    @property
    def per_arm_avg_n(self) -> float:
        return float(self.sample_sizes.mean())


def rep_seed_sequence(master_seed: int, rep_index: int) -> np.random.SeedSequence:
    """Child stream for one replication; depends only on (seed, index)."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(rep_index,))


def simulate_oc(design: DesignSpec, scenario: Scenario, n_reps: int, seed: int,
                rep_offset: int = 0, jobs: int = 1) -> OCReport:
    """Replicate conduct_trial and aggregate operating characteristics.

    Replication i uses the child stream keyed by its absolute index
    (rep_offset + i), so a run over [0, a+b) equals the merge of runs over
    [0, a) and [a, a+b) with the same master seed, bit for bit. FWER counts
    replications in which any truly-null arm (true_p <= pi_i0) is declared
    promising.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    rep_indices = np.arange(rep_offset, rep_offset + n_reps)
    if jobs > 1:
        results = _run_reps_parallel(design, scenario, seed, rep_indices, jobs)
    else:
        results = [conduct_trial(design, scenario, rep_seed_sequence(seed, int(r)))
                   for r in rep_indices]

    return OCReport(
        scenario_label=scenario.label,
        n_reps=n_reps,
        seed=seed,
        rep_indices=rep_indices,
        null_mask=scenario.null_mask(design.layout),
        promising=np.stack([res.promising for res in results]),
        sample_sizes=np.stack([res.n for res in results]),
        stop_stages=np.stack([res.stop_stage for res in results]),
        probs=np.stack([res.probs for res in results]),
    )


def _run_chunk(args):
    design, scenario, seed, indices = args
    return [conduct_trial(design, scenario, rep_seed_sequence(seed, int(r)))
            for r in indices]


def _run_reps_parallel(design, scenario, seed, rep_indices, jobs):
    from multiprocessing import Pool

    chunks = np.array_split(rep_indices, jobs * 4)
    chunks = [c for c in chunks if c.size]
    with Pool(processes=jobs) as pool:
        parts = pool.map(_run_chunk, [(design, scenario, seed, c) for c in chunks])
    return [res for part in parts for res in part]


def merge_oc_reports(a: OCReport, b: OCReport) -> OCReport:
    """Combine runs with the same master seed over disjoint index ranges."""
    if a.seed != b.seed:
        raise ValueError("reports must share the master seed")
    if a.scenario_label != b.scenario_label:
        raise ValueError("reports must come from the same scenario")
    if np.intersect1d(a.rep_indices, b.rep_indices).size:
        raise ValueError("replication index ranges overlap")
    order = np.argsort(np.concatenate([a.rep_indices, b.rep_indices]),
                       kind="stable")

    def cat(x, y):
        return np.concatenate([x, y])[order]

    return OCReport(
        scenario_label=a.scenario_label,
        n_reps=a.n_reps + b.n_reps,
        seed=a.seed,
        rep_indices=cat(a.rep_indices, b.rep_indices),
        null_mask=a.null_mask,
        promising=cat(a.promising, b.promising),
        sample_sizes=cat(a.sample_sizes, b.sample_sizes),
        stop_stages=cat(a.stop_stages, b.stop_stages),
        probs=cat(a.probs, b.probs),
    )


PHI_GRID_STEP = 0.001


@dataclass(frozen=True)
class CalibrationResult:
    phi: float
    achieved: float
    target: float
    n_reps: int
    seed: int


def _phi_grid() -> np.ndarray:
    return np.round(np.arange(0, 1001) * PHI_GRID_STEP, 3)


def _require_null_scenario(layout: TrialLayout, scenario: Scenario):
    pi0 = np.asarray(layout.pi0)[:, None]
    if not np.allclose(scenario.true_p, np.broadcast_to(pi0, scenario.true_p.shape)):
        raise ValueError("calibration needs the global null scenario "
                         "(every arm at its reference rate)")


def calibrate_phi2(design: DesignSpec, null_scenario: Scenario,
                   target_fwer: float, n_reps: int, seed: int,
                   jobs: int = 1) -> CalibrationResult:
    """Smallest grid threshold whose re-thresholded null FWER meets target.

    Replications run once (with the design's futility rule as configured);
    the stored final decision probabilities are then re-thresholded over a
    0.001-step grid, which is deterministic and equivalent to re-simulating
    per grid point. Stopped arms carry no final probability and can never be
    declared promising.
    """
    if design.method == "simon":
        raise ValueError("the two-stage design has no posterior threshold "
                         "to calibrate")
    if not 0.0 <= target_fwer <= 1.0:
        raise ValueError("target_fwer must lie in [0, 1]")
    _require_null_scenario(design.layout, null_scenario)
    oc = simulate_oc(design, null_scenario, n_reps, seed, jobs=jobs)

    final_probs = oc.probs[:, -1, :, :]
    null_probs = np.where(oc.null_mask[None, :, :], final_probs, np.nan)
    all_nan = np.isnan(null_probs.reshape(n_reps, -1)).all(axis=1)
    with np.errstate(all="ignore"):
        rep_max = np.where(
            all_nan, -np.inf,
            np.nanmax(np.nan_to_num(null_probs.reshape(n_reps, -1),
                                    nan=-np.inf), axis=1))

    grid = _phi_grid()
    fwer = (rep_max[:, None] > grid[None, :]).mean(axis=0)
    feasible = np.nonzero(fwer <= target_fwer)[0]
    if feasible.size == 0:
        raise ValueError("target FWER unreachable on the threshold grid")
    k = int(feasible[0])
    return CalibrationResult(phi=float(grid[k]), achieved=float(fwer[k]),
                             target=target_fwer, n_reps=n_reps, seed=seed)


def calibrate_phi1(design: DesignSpec, null_scenario: Scenario,
                   target_avg_n: float, n_reps: int, seed: int,
                   jobs: int = 1) -> CalibrationResult:
    """Grid futility threshold whose implied per-arm average enrollment is
    closest to target (ties toward the smaller threshold).

    Replications run once with futility disabled, storing every interim
    decision probability; each grid value is then applied as a deterministic
    stopping rule to those stored probabilities. The implied enrollment of an
    arm is the schedule value at its first sub-threshold interim, or the
    maximum sample size if it never crosses.
    """
    if design.method == "simon":
        raise ValueError("the two-stage design has no posterior threshold "
                         "to calibrate")
    if not design.layout.interim_schedule:
        raise ValueError("calibrating the futility threshold needs interims")
    _require_null_scenario(design.layout, null_scenario)
    no_stop = replace(design, phi1=0.0)
    oc = simulate_oc(no_stop, null_scenario, n_reps, seed, jobs=jobs)

    interim_probs = oc.probs[:, :-1, :, :]           # (reps, L, I, J)
    schedule = np.asarray(design.layout.interim_schedule)
    grid = _phi_grid()
    best_k = 0
    best_err = math.inf
    achieved_at_best = math.nan
    for k, t in enumerate(grid):
        below = interim_probs < t
        any_stop = below.any(axis=1)
        first = below.argmax(axis=1)
        implied_n = np.where(any_stop, schedule[first], design.layout.max_n)
        avg = float(implied_n.mean())
        err = abs(avg - target_avg_n)
        if err < best_err:
            best_err = err
            best_k = k
            achieved_at_best = avg
    return CalibrationResult(phi=float(grid[best_k]), achieved=achieved_at_best,
                             target=target_avg_n, n_reps=n_reps, seed=seed)


# Truth scenario catalogs: 4 indications x 1 dose for the single-dose study
# and 4 indications x 3 doses for the dose-by-indication study.
def _scen(label: str, rows) -> Scenario:
    return Scenario(true_p=np.asarray(rows, dtype=float), label=label)


SCENARIOS: dict[str, Scenario] = {
    "table3-scenario1": _scen("table3-scenario1", [[0.2], [0.2], [0.2], [0.2]]),
    "table3-scenario2": _scen("table3-scenario2", [[0.35], [0.35], [0.35], [0.35]]),
    "table3-scenario3": _scen("table3-scenario3", [[0.2], [0.2], [0.35], [0.45]]),
    "table3-scenario4": _scen("table3-scenario4", [[0.2], [0.35], [0.35], [0.45]]),
    "table3-scenario5": _scen("table3-scenario5", [[0.2], [0.2], [0.2], [0.35]]),
    # rows: indications, columns: dose levels 1..3
    "table4-scenario1": _scen("table4-scenario1", [[0.2] * 3] * 4),
    "table4-scenario2": _scen("table4-scenario2", [[0.5] * 3] * 4),
    "table4-scenario3": _scen("table4-scenario3", [[0.3, 0.4, 0.5]] * 4),
    "table4-scenario4": _scen("table4-scenario4",
                              [[0.5] * 3, [0.5] * 3, [0.2] * 3, [0.2] * 3]),
    "table4-scenario5": _scen("table4-scenario5",
                              [[0.3, 0.4, 0.5], [0.3, 0.4, 0.5],
                               [0.2] * 3, [0.2] * 3]),
    "table4-scenario6": _scen("table4-scenario6",
                              [[0.2, 0.2, 0.5], [0.2, 0.2, 0.5],
                               [0.2] * 3, [0.2] * 3]),
}


def scenario_by_name(name: str) -> Scenario:
    key = name.lower().strip()
    if key not in SCENARIOS:
        known = ", ".join(sorted(SCENARIOS))
        raise ValueError(f"unknown scenario {name!r}; known: {known}")
    s = SCENARIOS[key]
    return Scenario(true_p=s.true_p.copy(), label=s.label)
