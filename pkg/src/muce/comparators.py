"""Reference designs benchmarked against the borrowing design.

Simon's two-stage design with exact binomial operating characteristics and
exhaustive design search, plus the Bayesian comparators: BBHM (one common
normal shrinkage level with an inverse-gamma variance) and EXNEX (mixture of
exchangeable components and a nonexchangeable fallback). Both Bayesian fits
report the interval-rule tail probabilities used for interim futility and
final efficacy decisions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from . import _kernels
from .model import McmcConfig, clamped_logit, logit


@dataclass(frozen=True)
class SimonDesign:
    """Two-stage tuple: stop after stage 1 iff y1 <= r1 (n1 patients);
    otherwise enroll to N and declare promising iff total responders > r."""

    r1: int
    n1: int
    r: int
    N: int

    def __post_init__(self):
        if not 0 <= self.r1 < self.n1 <= self.N:
            raise ValueError("need 0 <= r1 < n1 <= N")
        if not self.r1 <= self.r <= self.N:
            raise ValueError("need r1 <= r <= N")


@dataclass(frozen=True)
class TwoStageOperatingPoint:
    reject_prob: float
    pet: float          # probability of early termination after stage 1
    expected_n: float


def two_stage_error_rates(design: SimonDesign, p: float) -> TwoStageOperatingPoint:
    """Exact operating characteristics of a two-stage design at true rate p.

    reject_prob convolves the stage-1 binomial with the stage-2 survival
    function; no simulation involved. scipy's binomial tails are evaluated in
    log space, so N up to a few hundred is safe.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    r1, n1, r, N = design.r1, design.n1, design.r, design.N
    n2 = N - n1
    pet = float(binom.cdf(r1, n1, p))
    y1 = np.arange(r1 + 1, n1 + 1)
    # P(Y2 > r - y1); sf handles negative arguments as 1 and >= n2 as 0
    reject = float(np.sum(binom.pmf(y1, n1, p) * binom.sf(r - y1, n2, p)))
    return TwoStageOperatingPoint(reject_prob=reject, pet=pet,
                                  expected_n=n1 + (1.0 - pet) * n2)


def _stage_tables(N: int, n1: int, p: float):
    """A[r1, r] = P(Y1 > r1, Y1 + Y2 > r) for r1 in 0..n1-1, r in 0..N."""
    n2 = N - n1
    pmf1 = binom.pmf(np.arange(n1 + 1), n1, p)          # (n1+1,)
    r_grid = np.arange(N + 1)
    sf2 = binom.sf(r_grid[None, :] - np.arange(n1 + 1)[:, None], n2, p)
    T = pmf1[:, None] * sf2                              # (n1+1, N+1)
    tail = np.cumsum(T[::-1], axis=0)[::-1]              # tail[y1] = sum_{>=y1}
    return tail[1:n1 + 1]                                # row r1 -> sum_{y1 > r1}


def simon_search(p0: float, p1: float, alpha: float, beta: float,
                 criterion: str = "optimal", n_max: int = 100) -> SimonDesign:
    """Exhaustive search for the two-stage design meeting both error bounds.

    "optimal" minimizes the expected sample size under p0; "minimax"
    minimizes N first, then the expected size. For every candidate (N, n1,
    r1) the smallest r controlling type I is taken, which maximizes power.
    Ties break deterministically toward smaller N, then n1, then r1.
    """
    if not 0.0 < p0 < 1.0 or not 0.0 < p1 < 1.0:
        raise ValueError("p0 and p1 must lie in (0, 1)")
    if p0 >= p1:
        raise ValueError("infeasible: need p0 < p1")
    if not 0.0 < alpha < 1.0 or not 0.0 < beta < 1.0:
        raise ValueError("alpha and beta must lie in (0, 1)")
    if criterion not in ("optimal", "minimax"):
        raise ValueError(f"criterion must be 'optimal' or 'minimax', got {criterion!r}")

    best = None  # (expected_n, design)
    for N in range(2, n_max + 1):
        found_for_N = False
        for n1 in range(1, N):
            A0 = _stage_tables(N, n1, p0)
            A1 = _stage_tables(N, n1, p1)
            r1s = np.arange(n1)
            ok0 = A0 <= alpha                            # monotone in r
            has_r = ok0.any(axis=1)
            r_first = ok0.argmax(axis=1)
            r_cand = np.maximum(r_first, r1s)
            power = A1[r1s, r_cand]
            alpha_at = A0[r1s, r_cand]
            feasible = has_r & (power >= 1.0 - beta) & (alpha_at <= alpha)
            if not feasible.any():
                continue
            pet0 = binom.cdf(r1s, n1, p0)
            en = n1 + (1.0 - pet0) * (N - n1)
            en = np.where(feasible, en, np.inf)
            idx = int(np.argmin(en))                     # first minimum: smallest r1
            cand = (float(en[idx]),
                    SimonDesign(r1=int(r1s[idx]), n1=n1, r=int(r_cand[idx]), N=N))
            found_for_N = True
            if best is None or cand[0] < best[0]:
                best = cand
        if criterion == "minimax" and found_for_N:
            return best[1]
    if best is None:
        raise ValueError(f"no feasible two-stage design with N <= {n_max}")
    return best[1]


def fwer_independent(alpha: float, K: int) -> float:
    """Family-wise error 1 - (1 - alpha)^K for K independent tests."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if K < 1:
        raise ValueError("K must be >= 1")
    return 1.0 - (1.0 - alpha) ** K


@dataclass(frozen=True)
class BbhmHyper:
    """Priors for the common-mean shrinkage model.

    The inverse-gamma defaults are the near-log-uniform dispersion prior of
    the original basket-trial formulation; it drives the strong pooling
    (highest power under a global alternative, largest type I inflation in
    mixed scenarios) this design is benchmarked for. sigma2_fixed pins the
    between-arm variance instead, for sensitivity runs and the pure-EX
    mixture cross-check.
    """

    theta0_mean: float = 0.0
    theta0_var: float = 100.0
    ig_shape: float = 0.0005
    ig_rate: float = 0.000005
    sigma2_fixed: float | None = None

    def __post_init__(self):
        if self.theta0_var <= 0 or self.ig_shape <= 0 or self.ig_rate <= 0:
            raise ValueError("variance and inverse-gamma parameters must be > 0")
        if self.sigma2_fixed is not None and self.sigma2_fixed <= 0:
            raise ValueError("sigma2_fixed must be > 0 when given")


@dataclass(frozen=True)
class ExnexHyper:
    """Mixture prior: C exchangeable components plus one fixed fallback.

    weights has C+1 entries (EX components first, nonexchangeable last).
    Each EX component's location gets a normal prior (ex_loc, ex_loc_var)
    and a fixed within-component variance ex_sigma_sq. nex_mean defaults to
    the null point on the offset scale when left as None.
    """

    weights: tuple[float, ...] = (0.5, 0.5)
    ex_loc: tuple[float, ...] = (0.0,)
    ex_loc_var: tuple[float, ...] = (100.0,)
    ex_sigma_sq: tuple[float, ...] = (1.0,)
    nex_mean: float | None = None
    nex_sigma_sq: float = 100.0

    def __post_init__(self):
        C = len(self.ex_loc)
        if not (len(self.ex_loc_var) == len(self.ex_sigma_sq) == C):
            raise ValueError("EX component parameter tuples must share a length")
        if len(self.weights) != C + 1:
            raise ValueError("weights must have one entry per EX component plus NEX")
        w = np.asarray(self.weights, dtype=float)
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a simplex over C+1 entries")
        if any(v <= 0 for v in self.ex_loc_var) or any(v <= 0 for v in self.ex_sigma_sq):
            raise ValueError("EX variances must be > 0")
        if self.nex_sigma_sq <= 0:
            raise ValueError("nex_sigma_sq must be > 0")

    @property
    def n_components(self) -> int:
        return len(self.ex_loc)


ComparatorHyper = BbhmHyper | ExnexHyper


@dataclass
class ComparatorReport:
    """Tail probabilities driving the interval decision rules, per arm."""

    pr_final: np.ndarray     # Pr(p_k > pi_k0 | data)
    pr_interim: np.ndarray   # Pr(p_k > (pi_k0 + pi_k1)/2 | data); nan without pi1
    est_p: np.ndarray
    acceptance: np.ndarray
    seed: int


def _as_rate_vector(value, K: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(K, float(arr))
    if arr.shape != (K,):
        raise ValueError(f"{name} must be scalar or length {K}")
    return arr


def _prepare_arms(n, y, pi0, pi1):
    n = np.asarray(n, dtype=np.int64).ravel()
    y = np.asarray(y, dtype=np.int64).ravel()
    if n.shape != y.shape:
        raise ValueError("n and y must have matching length")
    if ((y < 0) | (y > n)).any():
        raise ValueError("responder counts must satisfy 0 <= y <= n")
    K = n.size
    pi0 = _as_rate_vector(pi0, K, "pi0")
    if pi1 is not None:
        pi1 = _as_rate_vector(pi1, K, "pi1")
        offset = np.array([logit(p) for p in pi1])
    else:
        offset = np.array([logit(p) for p in pi0])
    return n, y, K, pi0, pi1, offset


def _tail_probabilities(theta, offset, pi0, pi1):
    K = offset.size
    p_scale = theta + offset[None, :]
    cut_final = np.array([logit(p) for p in pi0])
    pr_final = (p_scale > cut_final[None, :]).mean(axis=0)
    if pi1 is not None:
        cut_mid = np.array([logit((a + b) / 2.0) for a, b in zip(pi0, pi1)])
        pr_interim = (p_scale > cut_mid[None, :]).mean(axis=0)
    else:
        pr_interim = np.full(K, np.nan)
    est_p = 1.0 / (1.0 + np.exp(-(theta.mean(axis=0) + offset)))
    return pr_final, pr_interim, est_p


def bbhm_fit(n, y, pi0, pi1, hyper: BbhmHyper, cfg: McmcConfig,
             _seed_sequence: np.random.SeedSequence | None = None) -> ComparatorReport:
    """Posterior tail probabilities under the common-mean shrinkage model.

    theta_k is the arm's log odds offset by logit(pi_k1) (or logit(pi_k0)
    when no target rate applies, e.g. designs without interim looks), shrunk
    toward an unknown common mean; Metropolis on theta_k, conjugate Gibbs on
    the mean and variance. Deterministic given cfg.seed.
    """
    n, y, K, pi0, pi1, offset = _prepare_arms(n, y, pi0, pi1)
    if _seed_sequence is None:
        _seed_sequence = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(_seed_sequence)
    total = cfg.n_iterations

    norm_theta = rng.standard_normal((total, K))
    unif_theta = rng.random((total, K))
    norm_mu = rng.standard_normal(total)
    # fixed shape, so one unit-scale gamma per iteration regardless of state
    gamma_sig = rng.standard_gamma(hyper.ig_shape + 0.5 * K, total)

    theta_init = np.array([clamped_logit((y_k + 0.5) / (n_k + 1.0)) if n_k else 0.0
                           for y_k, n_k in zip(y, n)]) - offset
    sigma2_fixed = -1.0 if hyper.sigma2_fixed is None else hyper.sigma2_fixed

    theta, mu, sig2, accept, _ = _kernels.bbhm_chain(
        y, n, offset, hyper.theta0_mean, hyper.theta0_var, sigma2_fixed,
        hyper.ig_shape, hyper.ig_rate,
        cfg.burn_in, cfg.n_keep, cfg.thin, cfg.adapt, cfg.proposal_scale,
        norm_theta, unif_theta, norm_mu, gamma_sig, theta_init)

    pr_final, pr_interim, est_p = _tail_probabilities(theta, offset, pi0, pi1)
    return ComparatorReport(pr_final=pr_final, pr_interim=pr_interim,
                            est_p=est_p,
                            acceptance=accept / float(cfg.n_keep * cfg.thin),
                            seed=cfg.seed)


def exnex_fit(n, y, pi0, pi1, hyper: ExnexHyper, cfg: McmcConfig,
              _seed_sequence: np.random.SeedSequence | None = None) -> ComparatorReport:
    """Posterior tail probabilities under the mixture-membership model.

    Gibbs over per-arm membership indicators, conjugate updates of the EX
    component locations, Metropolis on each theta_k under its current
    component. Same decision quantities and determinism contract as
    ``bbhm_fit``.
    """
    n, y, K, pi0, pi1, offset = _prepare_arms(n, y, pi0, pi1)
    C = hyper.n_components
    if _seed_sequence is None:
        _seed_sequence = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(_seed_sequence)
    total = cfg.n_iterations

    unif_member = rng.random((total, K))
    norm_ex = rng.standard_normal((total, C))
    norm_theta = rng.standard_normal((total, K))
    unif_theta = rng.random((total, K))

    if hyper.nex_mean is None:
        # center the fallback at the null point of the offset scale
        nex_mean = float(np.mean([logit(p) for p in pi0]) - np.mean(offset))
    else:
        nex_mean = hyper.nex_mean

    theta_init = np.array([clamped_logit((y_k + 0.5) / (n_k + 1.0)) if n_k else 0.0
                           for y_k, n_k in zip(y, n)]) - offset

    theta, member, accept, _ = _kernels.exnex_chain(
        y, n, offset, np.asarray(hyper.weights, dtype=float),
        np.asarray(hyper.ex_loc, dtype=float),
        np.asarray(hyper.ex_loc_var, dtype=float),
        np.asarray(hyper.ex_sigma_sq, dtype=float),
        nex_mean, hyper.nex_sigma_sq,
        cfg.burn_in, cfg.n_keep, cfg.thin, cfg.adapt, cfg.proposal_scale,
        unif_member, norm_ex, norm_theta, unif_theta, theta_init)

    pr_final, pr_interim, est_p = _tail_probabilities(theta, offset, pi0, pi1)
    return ComparatorReport(pr_final=pr_final, pr_interim=pr_interim,
                            est_p=est_p,
                            acceptance=accept / float(cfg.n_keep * cfg.thin),
                            seed=cfg.seed)
