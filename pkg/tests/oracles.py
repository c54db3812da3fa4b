"""Independent oracles the test suite checks the engines against.

Everything here deliberately avoids the package's inference code paths:
quadrature instead of MCMC, enumeration instead of search, closed forms
instead of samplers. The truncated-Cauchy side integrals substitute
v = arctan((theta - theta0) / gamma), which turns the Cauchy measure into a
uniform on a bounded interval and keeps sharp binomial likelihood peaks
inside a short quadrature range.
"""

import itertools
import math
from fractions import Fraction

import numpy as np
from scipy import integrate
from scipy.special import expit, ndtr

from muce.model import Hyperparameters, logit


def _side_integrals(n, y, pi0, gamma, with_theta_mean=False):
    th0 = logit(pi0)
    that = logit((y + 0.5) / (n + 1.0))

    def loglik(th):
        return y * th - n * np.logaddexp(0.0, th)

    shift = loglik(that)

    def f(v, g=None):
        th = th0 + gamma * np.tan(v)
        val = np.exp(loglik(th) - shift)
        return val if g is None else val * g(th)

    vhat = math.atan((that - th0) / gamma)
    pts0 = sorted({max(-1.57075, min(vhat, -1e-9)), -0.7854, -0.05})
    pts1 = sorted({min(1.57075, max(vhat, 1e-9)), 0.7854, 0.05})

    def q(g, lo, hi, pts):
        val, _ = integrate.quad(g, lo, hi, points=pts, limit=500)
        return val

    m0 = q(f, -math.pi / 2, 0.0, pts0)
    m1 = q(f, 0.0, math.pi / 2, pts1)
    ep0 = q(lambda v: f(v, expit), -math.pi / 2, 0.0, pts0) / m0
    ep1 = q(lambda v: f(v, expit), 0.0, math.pi / 2, pts1) / m1
    if not with_theta_mean:
        return (m0, m1), (ep0, ep1), None
    et0 = (-math.inf if y == 0
           else q(lambda v: f(v, lambda t: t), -math.pi / 2, 0.0, pts0) / m0)
    et1 = (math.inf if y == n
           else q(lambda v: f(v, lambda t: t), 0.0, math.pi / 2, pts1) / m1)
    return (m0, m1), (ep0, ep1), (et0, et1)


def single_arm_posterior(n: int, y: int, pi0: float, hyper: Hyperparameters):
    """1-D quadrature posterior for one arm with the hierarchy integrated out.

    The latent score's marginal prior weight is
    Phi(marginal mean / marginal sd); the theta posterior is the two-sided
    truncated Cauchy mixture times the binomial likelihood. Returns
    (pr_h1, mean response rate).
    """
    w = float(ndtr(hyper.marginal_z_mean / math.sqrt(hyper.total_z_variance)))
    (m0, m1), (ep0, ep1), _ = _side_integrals(n, y, pi0, hyper.gamma)
    denom = w * m1 + (1.0 - w) * m0
    pr_h1 = w * m1 / denom
    est_p = (w * m1 * ep1 + (1.0 - w) * m0 * ep0) / denom
    return pr_h1, est_p


def sign_enumeration_posterior(ns, ys, pi0: float, hyper: Hyperparameters,
                               rate_estimator: str = "logit_mean"):
    """Exact posterior for I arms of a single dose via sign enumeration.

    With one dose, all arms share g = xi0 + eta_1, whose prior is
    N(mu_xi0 + mu_eta0, sigma_xi0^2 + sigma_eta^2 + sigma_eta0^2); given g
    the latent scores are independent with Pr(Z_i >= 0 | g) =
    Phi(g / sqrt(sigma0^2 + sigma_xi^2)). Posterior sign-configuration
    weights then need one 1-D integral over g each, and per-arm quantities
    are mixture sums over the 2^I configurations.
    """
    I = len(ns)
    v_g = hyper.sigma_xi0_sq + hyper.sigma_eta_sq + hyper.sigma_eta0_sq
    mu_g = hyper.mu_xi0 + hyper.mu_eta0
    denom_sd = math.sqrt(hyper.sigma0_sq + hyper.sigma_xi_sq)

    with_theta = rate_estimator == "logit_mean"
    stats = [_side_integrals(n_i, y_i, pi0, hyper.gamma, with_theta)
             for n_i, y_i in zip(ns, ys)]

    gs = np.linspace(mu_g - 14 * math.sqrt(v_g), mu_g + 14 * math.sqrt(v_g), 8001)
    log_wg = -0.5 * (gs - mu_g) ** 2 / v_g
    with np.errstate(divide="ignore"):
        lphi1 = np.log(ndtr(gs / denom_sd))
        lphi0 = np.log(ndtr(-gs / denom_sd))

    log_post = {}
    best = -math.inf
    for s in itertools.product((0, 1), repeat=I):
        lg = log_wg.copy()
        lm = 0.0
        for i, s_i in enumerate(s):
            lg = lg + (lphi1 if s_i else lphi0)
            lm += math.log(stats[i][0][s_i])
        peak = lg.max()
        val = np.trapezoid(np.exp(lg - peak), gs)
        lp = peak + math.log(val) + lm
        log_post[s] = lp
        best = max(best, lp)

    total = sum(math.exp(lp - best) for lp in log_post.values())
    pr_h1 = np.zeros(I)
    est_acc = np.zeros(I)
    for s, lp in log_post.items():
        w = math.exp(lp - best) / total
        for i, s_i in enumerate(s):
            if s_i:
                pr_h1[i] += w
            if with_theta:
                est_acc[i] += w * stats[i][2][s_i]
            else:
                est_acc[i] += w * stats[i][1][s_i]
    est_p = expit(est_acc) if with_theta else est_acc
    return pr_h1, est_p


def trunc_normal_mean(mean: float, sd: float, side: str) -> float:
    """Closed-form mean of a one-side-truncated normal."""
    from scipy.stats import norm

    if side == "nonneg":
        a = -mean / sd
        return mean + sd * norm.pdf(a) / norm.sf(a)
    b = -mean / sd
    return mean - sd * norm.pdf(b) / norm.cdf(b)


def two_stage_exact_fraction(r1: int, n1: int, r: int, N: int, p: Fraction):
    """Exact rational two-stage rejection probability and PET."""
    q = 1 - p
    n2 = N - n1

    def pmf(k, n):
        return Fraction(math.comb(n, k)) * p ** k * q ** (n - k)

    pet = sum(pmf(k, n1) for k in range(0, r1 + 1))
    reject = Fraction(0)
    for y1 in range(r1 + 1, n1 + 1):
        tail2 = sum(pmf(k, n2) for k in range(max(r - y1 + 1, 0), n2 + 1))
        reject += pmf(y1, n1) * tail2
    return reject, pet


def simon_bruteforce(p0, p1, alpha, beta, criterion, n_max):
    """Slow second implementation of the design search, scipy-based."""
    from scipy.stats import binom

    best = None
    for N in range(2, n_max + 1):
        best_for_N = None
        for n1 in range(1, N):
            n2 = N - n1
            for r1 in range(0, n1):
                pet0 = binom.cdf(r1, n1, p0)
                en = n1 + (1 - pet0) * n2
                y1 = np.arange(r1 + 1, n1 + 1)
                pmf0 = binom.pmf(y1, n1, p0)
                pmf1 = binom.pmf(y1, n1, p1)
                for r in range(r1, N + 1):
                    a = float(np.sum(pmf0 * binom.sf(r - y1, n2, p0)))
                    if a > alpha:
                        continue
                    pw = float(np.sum(pmf1 * binom.sf(r - y1, n2, p1)))
                    if pw < 1 - beta:
                        break  # power only shrinks as r grows
                    cand = (en, N, n1, r1, r)
                    if best_for_N is None or cand < best_for_N:
                        best_for_N = cand
                    break  # smallest feasible r found
        if best_for_N is not None:
            if best is None or best_for_N < best:
                best = best_for_N
            if criterion == "minimax":
                return best_for_N[1:]  # (N, n1, r1, r)
    if best is None:
        raise ValueError("no feasible design")
    return best[1:]


def bbhm_grid_posterior(n, y, pi0, pi1, theta0_mean, theta0_var,
                        ig_shape, ig_rate):
    """3-D grid quadrature over (theta_1, mu, sigma^2) for a single arm."""
    c = logit(pi1)
    th = np.linspace(-12.0, 8.0, 801)        # theta_1 on the offset scale
    mu = np.linspace(theta0_mean - 6 * math.sqrt(theta0_var),
                     theta0_mean + 6 * math.sqrt(theta0_var), 601)
    ls = np.linspace(-7.0, 8.0, 401)         # log sigma^2
    sig2 = np.exp(ls)

    loglik = y * (th + c) - n * np.logaddexp(0.0, th + c)
    lik = np.exp(loglik - loglik.max())
    mu_prior = np.exp(-0.5 * (mu - theta0_mean) ** 2 / theta0_var)
    # inverse-gamma in sigma^2 with the log-grid jacobian (d sigma2 = sigma2 d ls)
    s_prior = sig2 ** (-ig_shape) * np.exp(-ig_rate / sig2)

    dens_th = np.zeros_like(th)
    for s_val, s_w in zip(sig2, s_prior):
        kern = np.exp(-0.5 * (th[:, None] - mu[None, :]) ** 2 / s_val)
        dens_th += s_w / math.sqrt(s_val) * kern @ mu_prior
    dens_th *= lik

    z = np.trapezoid(dens_th, th)
    cut = logit(pi0) - c
    pr_final = np.trapezoid(np.where(th > cut, dens_th, 0.0), th) / z
    cut_mid = logit((pi0 + pi1) / 2.0) - c
    pr_interim = np.trapezoid(np.where(th > cut_mid, dens_th, 0.0), th) / z
    est_p = np.trapezoid(expit(th + c) * dens_th, th) / z
    return pr_final, pr_interim, est_p


def exnex_enumeration_posterior(n, y, pi0, pi1, weights, ex_loc, ex_loc_var,
                                ex_sigma_sq, nex_mean, nex_sigma_sq):
    """Membership-enumeration oracle for K arms and one EX component.

    For every configuration in {EX, NEX}^K the evidence factorizes: NEX arms
    integrate independently, EX arms share the component location, which is
    integrated on a grid. Tail probabilities mix over configurations.
    """
    K = len(n)
    c = logit(pi1)
    cut = logit(pi0) - c
    th = np.linspace(-14.0, 10.0, 2401)
    t_grid = np.linspace(ex_loc - 8 * math.sqrt(ex_loc_var + ex_sigma_sq),
                         ex_loc + 8 * math.sqrt(ex_loc_var + ex_sigma_sq), 1601)

    lik = []
    for k in range(K):
        ll = y[k] * (th + c) - n[k] * np.logaddexp(0.0, th + c)
        lik.append(np.exp(ll - ll.max()))

    # per-arm NEX evidence and tail
    nex_dens = [lik[k] * np.exp(-0.5 * (th - nex_mean) ** 2 / nex_sigma_sq)
                / math.sqrt(nex_sigma_sq) for k in range(K)]
    nex_m = [np.trapezoid(d, th) for d in nex_dens]
    nex_tail = [np.trapezoid(np.where(th > cut, d, 0.0), th) / m
                for d, m in zip(nex_dens, nex_m)]

    # per-arm EX evidence and tail as functions of the component location t
    ex_m = []
    ex_tail = []
    for k in range(K):
        kern = np.exp(-0.5 * (th[:, None] - t_grid[None, :]) ** 2 / ex_sigma_sq)
        d = lik[k][:, None] * kern / math.sqrt(ex_sigma_sq)
        m_t = np.trapezoid(d, th, axis=0)
        tail_t = np.trapezoid(np.where(th[:, None] > cut, d, 0.0), th, axis=0)
        ex_m.append(m_t)
        ex_tail.append(tail_t / np.maximum(m_t, 1e-300))

    t_prior = np.exp(-0.5 * (t_grid - ex_loc) ** 2 / ex_loc_var)
    w_ex, w_nex = weights
    post_w = {}
    tails = {}
    for conf in itertools.product((0, 1), repeat=K):  # 0 = EX, 1 = NEX
        prior_w = math.prod(w_nex if c_k else w_ex for c_k in conf)
        if prior_w == 0.0:
            continue
        ex_arms = [k for k in range(K) if conf[k] == 0]
        nex_arms = [k for k in range(K) if conf[k] == 1]
        integ = t_prior.copy()
        for k in ex_arms:
            integ = integ * ex_m[k]
        evidence = np.trapezoid(integ, t_grid)
        for k in nex_arms:
            evidence *= nex_m[k]
        post_w[conf] = prior_w * evidence
        conf_tails = np.empty(K)
        for k in nex_arms:
            conf_tails[k] = nex_tail[k]
        for k in ex_arms:
            conf_tails[k] = (np.trapezoid(integ * ex_tail[k], t_grid)
                             / np.trapezoid(integ, t_grid))
        tails[conf] = conf_tails

    total = sum(post_w.values())
    pr_final = np.zeros(K)
    for conf, w in post_w.items():
        pr_final += (w / total) * tails[conf]
    return pr_final


def effects_joint_gaussian(z, hyper: Hyperparameters):
    """Exact joint normal for (xi, eta, xi0, eta0) given a fixed score matrix.

    Assembles the quadratic form of the linear-Gaussian hierarchy and returns
    (mean, covariance) with parameter order xi_1..xi_I, eta_1..eta_J, xi0,
    eta0.
    """
    I, J = z.shape
    d = I + J + 2
    lam = np.zeros((d, d))
    b = np.zeros(d)
    s0, s_xi, s_eta = hyper.sigma0_sq, hyper.sigma_xi_sq, hyper.sigma_eta_sq
    ix_xi0, ix_eta0 = I + J, I + J + 1

    for i in range(I):
        for j in range(J):
            # (z_ij - xi_i - eta_j)^2 / s0
            lam[i, i] += 1 / s0
            lam[I + j, I + j] += 1 / s0
            lam[i, I + j] += 1 / s0
            lam[I + j, i] += 1 / s0
            b[i] += z[i, j] / s0
            b[I + j] += z[i, j] / s0
    for i in range(I):
        lam[i, i] += 1 / s_xi
        lam[ix_xi0, ix_xi0] += 1 / s_xi
        lam[i, ix_xi0] -= 1 / s_xi
        lam[ix_xi0, i] -= 1 / s_xi
    for j in range(J):
        lam[I + j, I + j] += 1 / s_eta
        lam[ix_eta0, ix_eta0] += 1 / s_eta
        lam[I + j, ix_eta0] -= 1 / s_eta
        lam[ix_eta0, I + j] -= 1 / s_eta
    lam[ix_xi0, ix_xi0] += 1 / hyper.sigma_xi0_sq
    b[ix_xi0] += hyper.mu_xi0 / hyper.sigma_xi0_sq
    lam[ix_eta0, ix_eta0] += 1 / hyper.sigma_eta0_sq
    b[ix_eta0] += hyper.mu_eta0 / hyper.sigma_eta0_sq

    cov = np.linalg.inv(lam)
    return cov @ b, cov
