"""Core probability model for multi-dose, multi-indication expansion cohorts.

Each arm (i, j) pairs indication i with dose j. Responses are binomial with
rate p_ij, tested as H0: p_ij <= pi_i0 versus H1: p_ij > pi_i0 on the logit
scale. A latent Gaussian score Z_ij with additive indication and dose effects
decides which hypothesis holds (lambda_ij = 1 iff Z_ij >= 0), and the
response-rate prior is a half-line truncated Cauchy on either side of
logit(pi_i0). The functions here are pure and shared by the samplers, the
trial engine and the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np
from scipy.special import ndtr

Side = Literal["null", "alt"]
CorrelationCase = Literal["same_indication", "same_dose", "neither"]

LOG_TWO_OVER_PI = math.log(2.0 / math.pi)


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed constants of the hierarchical borrowing prior.

    gamma is the Cauchy scale of the response-rate prior; mu_xi0 / mu_eta0
    shift the prior probability of H1 (more negative means more conservative);
    the five variances control how strongly arms borrow from each other.
    """

    gamma: float = 2.5
    mu_xi0: float = 0.0
    mu_eta0: float = 0.0
    sigma0_sq: float = 1.0
    sigma_xi_sq: float = 1.0
    sigma_eta_sq: float = 1.0
    sigma_xi0_sq: float = 1.0
    sigma_eta0_sq: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        for name in ("sigma0_sq", "sigma_xi_sq", "sigma_eta_sq",
                     "sigma_xi0_sq", "sigma_eta0_sq"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")

    @property
    def total_z_variance(self) -> float:
        """Marginal prior variance of a latent score Z_ij."""
        return (self.sigma0_sq + self.sigma_xi_sq + self.sigma_eta_sq
                + self.sigma_xi0_sq + self.sigma_eta0_sq)

    @property
    def marginal_z_mean(self) -> float:
        return self.mu_xi0 + self.mu_eta0

    def prior_h1_probability(self) -> float:
        """Marginal prior Pr(lambda_ij = 1) before any data."""
        return float(ndtr(self.marginal_z_mean / math.sqrt(self.total_z_variance)))


# Named presets. Setting 1 is the default; 2 strengthens borrowing across all
# arms, 3 adds strong multiplicity control, 4 weakens cross-arm borrowing,
# 5 is a milder multiplicity-control variant of 3.
HYPER_SETTINGS: dict[str, Hyperparameters] = {
    "setting1": Hyperparameters(),
    "setting2": replace(Hyperparameters(), sigma_xi0_sq=9.0, sigma_eta0_sq=9.0),
    "setting3": replace(Hyperparameters(), mu_xi0=-3.0, mu_eta0=-3.0),
    "setting4": replace(Hyperparameters(), sigma_xi0_sq=0.01, sigma_eta0_sq=0.01),
    "setting5": replace(Hyperparameters(), mu_xi0=-3.0),
}


def hyper_setting(name: str) -> Hyperparameters:
    key = name.lower().replace("-", "").replace("_", "").replace(" ", "")
    if key not in HYPER_SETTINGS:
        known = ", ".join(sorted(HYPER_SETTINGS))
        raise ValueError(f"unknown hyperparameter setting {name!r}; known: {known}")
    return HYPER_SETTINGS[key]


@dataclass(frozen=True)
class TrialLayout:
    """Arm grid plus reference rates and the enrollment schedule."""

    n_indications: int
    n_doses: int
    pi0: tuple[float, ...]
    max_n: int
    interim_schedule: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pi0", tuple(float(p) for p in self.pi0))
        object.__setattr__(self, "interim_schedule",
                           tuple(int(n) for n in self.interim_schedule))
        if self.n_indications < 1 or self.n_doses < 1:
            raise ValueError("need at least one indication and one dose")
        if len(self.pi0) != self.n_indications:
            raise ValueError("pi0 must give one reference rate per indication")
        if any(not 0.0 < p < 1.0 for p in self.pi0):
            raise ValueError("reference rates pi0 must lie strictly in (0, 1)")
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")
        sched = self.interim_schedule
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("interim schedule must be strictly increasing")
        if any(not 0 < n < self.max_n for n in sched):
            raise ValueError("interim looks must fall strictly between 0 and max_n")

    @property
    def n_arms(self) -> int:
        return self.n_indications * self.n_doses

    def theta0(self) -> np.ndarray:
        """logit(pi_i0) per indication."""
        return np.array([logit(p) for p in self.pi0])


@dataclass
class TrialDataset:
    """Per-arm enrolled counts, responder counts and accrual state."""

    n: np.ndarray
    y: np.ndarray
    active: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.n.ndim != 2 or self.y.shape != self.n.shape:
            raise ValueError("n and y must be matching I x J matrices")
        if self.active is None:
            self.active = np.ones(self.n.shape, dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool)
            if self.active.shape != self.n.shape:
                raise ValueError("active must match the arm grid")
        if (self.n < 0).any():
            raise ValueError("enrollment counts must be nonnegative")
        if ((self.y < 0) | (self.y > self.n)).any():
            raise ValueError("responder counts must satisfy 0 <= y <= n")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n.shape

    def raw_rates(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.n > 0, self.y / np.maximum(self.n, 1), np.nan)


@dataclass(frozen=True)
class McmcConfig:
    """Chain length, seeding and proposal tuning for the samplers."""

    burn_in: int = 2000
    n_keep: int = 8000
    thin: int = 1
    seed: int = 0
    proposal_scale: float = 1.0
    adapt: bool = True

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.n_keep < 1:
            raise ValueError("n_keep must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.proposal_scale <= 0:
            raise ValueError("proposal_scale must be > 0")

    @property
    def n_iterations(self) -> int:
        return self.burn_in + self.n_keep * self.thin


def logit(p: float) -> float:
    """log(p / (1 - p)); domain error outside the open unit interval."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"logit requires 0 < p < 1, got {p}")
    return math.log(p / (1.0 - p))


def inv_logit(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def clamped_logit(p: float, eps: float = 1e-12) -> float:
    # Reporting-path guard only; inference always works on the logit scale.
    return logit(min(max(p, eps), 1.0 - eps))


def log1pexp(x: float) -> float:
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def binomial_loglik(y: int, n: int, theta: float) -> float:
    """Binomial log likelihood on the logit scale, y*theta - n*log(1+e^theta).

    The binomial coefficient is dropped: it depends on the data only and
    cancels in every Metropolis ratio and posterior normalization used here.
    Stable for |theta| up to a few hundred.
    """
    if n < 0 or y < 0 or y > n:
        raise ValueError("need 0 <= y <= n")
    if n == 0:
        return 0.0
    return y * theta - n * log1pexp(theta)


def trunc_cauchy_logpdf(theta: float, loc: float, scale: float, side: Side) -> float:
    """Log density of a Cauchy(loc, scale) restricted to one half line.

    side="null" keeps (-inf, loc] (the H0 region), side="alt" keeps
    (loc, inf). Either half carries exactly half the Cauchy mass, so the
    normalization constant is 2. Returns -inf outside the requested side.
    """
    if scale <= 0:
        raise ValueError("scale must be > 0")
    if side == "null":
        if theta > loc:
            return -math.inf
    elif side == "alt":
        if theta <= loc:
            return -math.inf
    else:
        raise ValueError(f"side must be 'null' or 'alt', got {side!r}")
    z = (theta - loc) / scale
    return LOG_TWO_OVER_PI - math.log(scale) - math.log1p(z * z)


def prior_mixture_weight(xi: float, eta: float, sigma0_sq: float) -> float:
    """Pr(lambda_ij = 1 | xi_i, eta_j) = Phi((xi + eta) / sigma0)."""
    if sigma0_sq <= 0:
        raise ValueError("sigma0_sq must be > 0")
    return float(ndtr((xi + eta) / math.sqrt(sigma0_sq)))


def prior_correlation(hyper: Hyperparameters, case: CorrelationCase) -> float:
    """Prior correlation of latent scores for two distinct arms.

    Two arms always share the global levels (xi0, eta0); arms in the same
    indication additionally share xi_i, arms at the same dose share eta_j.
    """
    shared = hyper.sigma_xi0_sq + hyper.sigma_eta0_sq
    if case == "same_indication":
        shared += hyper.sigma_xi_sq
    elif case == "same_dose":
        shared += hyper.sigma_eta_sq
    elif case != "neither":
        raise ValueError(f"unknown correlation case {case!r}")
    return shared / hyper.total_z_variance
