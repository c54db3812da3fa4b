"""Posterior simulation for the latent-probit borrowing model.

The full sampler lives in a compiled kernel (see _kernels.py); this module
owns the public single-step updates, the fit entry point and chain
diagnostics. The single-step functions are the reference implementations of
the kernel's moves and are pinned to it by an equivalence test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import expit

from . import _kernels
from .model import (
    Hyperparameters,
    McmcConfig,
    TrialDataset,
    TrialLayout,
    trunc_cauchy_logpdf,
)

TruncSide = Literal["nonneg", "neg"]


def sample_trunc_normal(mean: float, sd: float, side: TruncSide,
                        rng: np.random.Generator) -> float:
    """Draw from N(mean, sd^2) conditioned on [0, inf) or (-inf, 0).

    Inverse-CDF method parameterized through the tail containing the
    support: for side="nonneg" the draw is mean - sd * ndtri(u * Phi(mean/sd)),
    and symmetrically for "neg". Working on the support's own tail keeps the
    transform finite and accurate when the support is far out, i.e. for
    |mean|/sd well beyond 6, where the naive cdf-interpolation form would
    collapse to the boundary.
    """
    if sd <= 0:
        raise ValueError("sd must be > 0")
    if side not in ("nonneg", "neg"):
        raise ValueError(f"side must be 'nonneg' or 'neg', got {side!r}")
    u = rng.random()
    return _kernels.trunc_normal_transform(mean, sd, side == "nonneg", u)


def update_z(theta_ij: float, theta_i0: float, xi_i: float, eta_j: float,
             sigma0_sq: float, rng: np.random.Generator) -> float:
    """Gibbs draw of the latent score given the current response-rate state.

    The truncation side is forced by theta: above the null boundary the
    score must be nonnegative, otherwise negative, which is exactly the
    sign-consistency invariant of the retained draws.
    """
    side: TruncSide = "nonneg" if theta_ij > theta_i0 else "neg"
    return sample_trunc_normal(xi_i + eta_j, math.sqrt(sigma0_sq), side, rng)


def _theta_log_target(theta: float, y: int, n: int, theta_i0: float,
                      hyper: Hyperparameters, lw_alt: float,
                      lw_null: float) -> float:
    from .model import binomial_loglik  # local to keep module import light

    side = "alt" if theta > theta_i0 else "null"
    lw = lw_alt if side == "alt" else lw_null
    return (binomial_loglik(y, n, theta)
            + trunc_cauchy_logpdf(theta, theta_i0, hyper.gamma, side)
            + lw)


def update_theta(theta: float, y: int, n: int, theta_i0: float, xi_i: float,
                 eta_j: float, hyper: Hyperparameters, proposal_scale: float,
                 rng: np.random.Generator) -> float:
    """One random-walk Metropolis step on an arm's log odds.

    The latent score is integrated out, leaving the two-sided truncated
    Cauchy mixture weighted by w = Phi((xi_i + eta_j) / sigma0); a step
    conditional on the score could never cross the null boundary. Returns
    the current value on rejection. Always consumes one standard normal and
    one uniform from rng, accepted or not.
    """
    sd0 = math.sqrt(hyper.sigma0_sq)
    m = (xi_i + eta_j) / sd0
    lw_alt = _kernels.log_norm_cdf(m)   # log w, stable for extreme effects
    lw_null = _kernels.log_norm_cdf(-m)
    prop = theta + proposal_scale * rng.standard_normal()
    u = rng.random()
    log_ratio = (_theta_log_target(prop, y, n, theta_i0, hyper, lw_alt, lw_null)
                 - _theta_log_target(theta, y, n, theta_i0, hyper, lw_alt, lw_null))
    if log_ratio >= 0 or u < math.exp(log_ratio):
        return prop
    return theta


def update_effects(z: np.ndarray, xi: np.ndarray, eta: np.ndarray,
                   xi0: float, eta0: float, hyper: Hyperparameters,
                   rng: np.random.Generator):
    """One conjugate Gibbs sweep over (xi, eta, xi0, eta0) given Z.

    Every full conditional is Gaussian with a precision-weighted mean
    (normal-normal conjugacy); the sweep updates xi first, then eta against
    the fresh xi, then the two global levels. Consumes I + J + 2 standard
    normals from rng. Returns new arrays; inputs are not mutated.
    """
    I, J = z.shape
    s0, s_xi, s_eta = hyper.sigma0_sq, hyper.sigma_xi_sq, hyper.sigma_eta_sq
    xi = xi.copy()
    eta = eta.copy()

    # Scalar accumulation in fixed index order, matching the compiled kernel
    # bit for bit.
    for i in range(I):
        prec = J / s0 + 1.0 / s_xi
        acc = 0.0
        for j in range(J):
            acc += z[i, j] - eta[j]
        mean = (acc / s0 + xi0 / s_xi) / prec
        xi[i] = mean + rng.standard_normal() / math.sqrt(prec)

    for j in range(J):
        prec = I / s0 + 1.0 / s_eta
        acc = 0.0
        for i in range(I):
            acc += z[i, j] - xi[i]
        mean = (acc / s0 + eta0 / s_eta) / prec
        eta[j] = mean + rng.standard_normal() / math.sqrt(prec)

    prec = I / s_xi + 1.0 / hyper.sigma_xi0_sq
    acc = 0.0
    for i in range(I):
        acc += xi[i]
    mean = (acc / s_xi + hyper.mu_xi0 / hyper.sigma_xi0_sq) / prec
    xi0 = mean + rng.standard_normal() / math.sqrt(prec)

    prec = J / s_eta + 1.0 / hyper.sigma_eta0_sq
    acc = 0.0
    for j in range(J):
        acc += eta[j]
    mean = (acc / s_eta + hyper.mu_eta0 / hyper.sigma_eta0_sq) / prec
    eta0 = mean + rng.standard_normal() / math.sqrt(prec)

    return xi, eta, xi0, eta0


@dataclass
class PosteriorDraws:
    """Retained chain states; immutable by convention once returned."""

    theta: np.ndarray   # (R, I, J)
    z: np.ndarray       # (R, I, J)
    xi: np.ndarray      # (R, I)
    eta: np.ndarray     # (R, J)
    xi0: np.ndarray     # (R,)
    eta0: np.ndarray    # (R,)
    acceptance: np.ndarray  # (I, J) post-burn-in acceptance fraction

    @property
    def n_draws(self) -> int:
        return self.theta.shape[0]


@dataclass
class PosteriorReport:
    """Per-arm posterior summaries plus enough echo to reproduce the run."""

    pr_h1: np.ndarray
    est_p: np.ndarray
    ess: np.ndarray
    acceptance: np.ndarray
    n: np.ndarray
    y: np.ndarray
    pi0: tuple[float, ...]
    hyper: Hyperparameters
    mcmc: McmcConfig

    def __eq__(self, other):
        if not isinstance(other, PosteriorReport):
            return NotImplemented
        arrays = ("pr_h1", "est_p", "ess", "acceptance", "n", "y")
        return (all(np.array_equal(getattr(self, a), getattr(other, a))
                    for a in arrays)
                and self.pi0 == other.pi0
                and self.hyper == other.hyper
                and self.mcmc == other.mcmc)

    @property
    def seed(self) -> int:
        return self.mcmc.seed


def _pregenerate(rng: np.random.Generator, total: int, I: int, J: int):
    # Consumption order is part of the reproducibility contract; the
    # reference-equivalence test mirrors it exactly.
    return (rng.standard_normal((total, I, J)),   # theta proposals
            rng.random((total, I, J)),            # theta accept uniforms
            rng.random((total, I, J)),            # Z inverse-CDF uniforms
            rng.standard_normal((total, I)),      # xi
            rng.standard_normal((total, J)),      # eta
            rng.standard_normal(total),           # xi0
            rng.standard_normal(total))           # eta0


def initial_theta(dataset: TrialDataset) -> np.ndarray:
    """Empirical log odds with a half-success continuity push."""
    p = (dataset.y + 0.5) / (dataset.n + 1.0)
    return np.log(p / (1.0 - p))


def muce_fit(dataset: TrialDataset, layout: TrialLayout,
             hyper: Hyperparameters, cfg: McmcConfig,
             return_draws: bool = False,
             rate_estimator: str = "logit_mean",
             _seed_sequence: np.random.SeedSequence | None = None):
    """Fit the borrowing model and report per-arm posterior quantities.

    pr_h1[i, j] is the fraction of retained latent scores at or above zero,
    which by sign consistency equals the fraction of theta draws above the
    arm's null boundary. est_p summarizes the response-rate posterior; the
    convention is configurable (see ``estimate_response_rates``) and defaults
    to the inverse logit of the posterior mean log odds. Deterministic given
    cfg.seed.
    """
    I, J = layout.n_indications, layout.n_doses
    if dataset.shape != (I, J):
        raise ValueError(f"dataset shape {dataset.shape} does not match "
                         f"layout ({I}, {J})")

    if _seed_sequence is None:
        _seed_sequence = np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(_seed_sequence)
    total = cfg.n_iterations
    rand = _pregenerate(rng, total, I, J)

    out = _kernels.muce_chain(
        dataset.y.astype(np.int64), dataset.n.astype(np.int64),
        layout.theta0(), hyper.gamma, hyper.mu_xi0, hyper.mu_eta0,
        hyper.sigma0_sq, hyper.sigma_xi_sq, hyper.sigma_eta_sq,
        hyper.sigma_xi0_sq, hyper.sigma_eta0_sq,
        cfg.burn_in, cfg.n_keep, cfg.thin, cfg.adapt, cfg.proposal_scale,
        *rand, initial_theta(dataset))
    theta, z, xi, eta, xi0, eta0, accept_count, _scales = out

    acceptance = accept_count / float(cfg.n_keep * cfg.thin)
    draws = PosteriorDraws(theta, z, xi, eta, xi0, eta0, acceptance)

    pr_h1 = (z >= 0.0).mean(axis=0)
    est_p = estimate_response_rates(theta, rate_estimator)
    ess = np.empty((I, J))
    for i in range(I):
        for j in range(J):
            ess[i, j] = effective_sample_size(theta[:, i, j])

    report = PosteriorReport(pr_h1=pr_h1, est_p=est_p, ess=ess,
                             acceptance=acceptance,
                             n=dataset.n.copy(), y=dataset.y.copy(),
                             pi0=layout.pi0, hyper=hyper, mcmc=cfg)
    if return_draws:
        return report, draws
    return report


def estimate_response_rates(theta_draws: np.ndarray,
                            estimator: str = "logit_mean") -> np.ndarray:
    """Point estimate of each arm's response rate from logit-scale draws.

    "logit_mean" transforms the posterior mean log odds (the default: it is
    what reproduces the published worked examples), "mean" averages the
    inverse-logit draws, "median" takes their posterior median.
    """
    if estimator == "logit_mean":
        return expit(theta_draws.mean(axis=0))
    if estimator == "mean":
        return expit(theta_draws).mean(axis=0)
    if estimator == "median":
        return np.median(expit(theta_draws), axis=0)
    raise ValueError(f"unknown rate estimator {estimator!r}")


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS from the initial positive sequence of paired autocorrelations.

    Sums rho_{2m} + rho_{2m+1} while the pair sums stay positive, then
    ESS = R / (2 * sum - 1), capped at R.
    """
    x = np.asarray(chain, dtype=float)
    R = x.size
    x = x - x.mean()
    var = np.dot(x, x) / R
    if var == 0.0 or not np.isfinite(var):
        return math.nan
    nfft = 1 << (2 * R - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:R] / R
    rho = acov / acov[0]

    pair_sum = 0.0
    m = 0
    while 2 * m + 1 < R:
        gamma = rho[2 * m] + rho[2 * m + 1]
        if gamma <= 0.0:
            break
        pair_sum += gamma
        m += 1
    tau = max(2.0 * pair_sum - 1.0, 1.0)
    return min(R / tau, float(R))


def split_chain_ratio(chain: np.ndarray) -> float:
    """Variance ratio first half / second half; nan if either is degenerate."""
    x = np.asarray(chain, dtype=float)
    half = x.size // 2
    v1 = float(np.var(x[:half], ddof=1))
    v2 = float(np.var(x[x.size - half:], ddof=1))
    if v1 <= 0.0 or v2 <= 0.0:
        return math.nan
    return v1 / v2


@dataclass
class ChainDiagnostics:
    ess: np.ndarray
    acceptance: np.ndarray
    split_chain_ratio: np.ndarray
    flagged: np.ndarray  # ratio degenerate or outside [0.5, 2]


def diagnostics(draws: PosteriorDraws) -> ChainDiagnostics:
    """Per-arm mixing summary computed from the retained theta chains."""
    if draws.n_draws < 100:
        raise ValueError("diagnostics need at least 100 retained draws")
    _, I, J = draws.theta.shape
    ess = np.empty((I, J))
    ratio = np.empty((I, J))
    for i in range(I):
        for j in range(J):
            chain = draws.theta[:, i, j]
            ess[i, j] = effective_sample_size(chain)
            ratio[i, j] = split_chain_ratio(chain)
    flagged = ~((ratio >= 0.5) & (ratio <= 2.0))  # nan ratios flag too
    return ChainDiagnostics(ess=ess, acceptance=draws.acceptance.copy(),
                            split_chain_ratio=ratio, flagged=flagged)
