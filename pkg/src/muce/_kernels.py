"""Jit-compiled chain kernels.

Every sampler step here is a deterministic transform of pre-generated
uniforms, normals and unit-scale gammas, so a whole chain is a pure function
of (data, hyperparameters, random arrays). That keeps runs bit-reproducible,
keeps RNG state out of compiled code, and makes the kernels testable against
the plain-Python reference updates in mcmc.py.

Random-array layout consumed per iteration t (row-major over arms):
    MUCE:  norm_theta[t], unif_theta[t], unif_z[t], norm_xi[t], norm_eta[t],
           norm_xi0[t], norm_eta0[t]
    BBHM:  norm_theta[t], unif_theta[t], norm_mu[t], gamma_sig[t]
    EXNEX: unif_member[t], norm_ex[t], norm_theta[t], unif_theta[t]
"""

import math

import numpy as np
from numba import njit

# Robbins-Monro step-size decay and target acceptance for the random-walk
# updates; adaptation runs during burn-in only, so detailed balance holds for
# every retained draw.
_RM_TARGET = 0.35
_RM_DECAY = 0.66

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@njit(cache=True)
def ndtri(p):
    """Inverse standard-normal CDF (Wichura's PPND16 rational fits)."""
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    if q < 0.0:
        return -val
    return val


@njit(cache=True)
def norm_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@njit(cache=True)
def log_norm_cdf(x):
    # erfc underflows near x = -37.5; switch to the Mills-ratio asymptote.
    if x < -37.0:
        return -0.5 * x * x - math.log(-x) - _LOG_SQRT_2PI
    return math.log(0.5 * math.erfc(-x / _SQRT2))


@njit(cache=True)
def log1pexp(x):
    if x > 0.0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(cache=True)
def binom_loglik(y, n, theta):
    if n == 0:
        return 0.0
    return y * theta - n * log1pexp(theta)


@njit(cache=True)
def trunc_normal_transform(mean, sd, nonneg, u):
    """Inverse-CDF draw from N(mean, sd^2) restricted to one side of zero.

    Parameterized through the tail that contains the support, so it stays
    finite even when the support sits many standard deviations into the tail
    (e.g. mean/sd = 8 with the negative side requested).
    """
    if u < 1e-300:
        u = 1e-300
    elif u > 1.0 - 1e-16:
        u = 1.0 - 1e-16
    if nonneg:
        tail = norm_cdf(mean / sd)       # Pr(X >= 0)
        return mean - sd * ndtri(u * tail)
    tail = norm_cdf(-mean / sd)          # Pr(X < 0)
    return mean + sd * ndtri(u * tail)


@njit(cache=True)
def _theta_log_target(theta, y, n, theta0, log_gamma, gamma, lw_alt, lw_null):
    z = (theta - theta0) / gamma
    lp = binom_loglik(y, n, theta) - log_gamma - math.log1p(z * z)
    if theta > theta0:
        return lp + lw_alt
    return lp + lw_null


@njit(cache=True)
def muce_chain(y, n, theta0_row, gamma, mu_xi0, mu_eta0,
               s0, s_xi, s_eta, s_xi0, s_eta0,
               burn_in, n_keep, thin, adapt, init_scale,
               norm_theta, unif_theta, unif_z,
               norm_xi, norm_eta, norm_xi0, norm_eta0,
               theta_init):
    """Metropolis-within-Gibbs chain for the latent-probit borrowing model.

    Per iteration: (1) random-walk update of each theta_ij against the
    Z-marginalized mixture target, so an arm can cross its null boundary;
    (2) exact truncated-normal regeneration of Z_ij on the side implied by
    theta_ij; (3) exact Gaussian conjugate sweeps for xi, eta, xi0, eta0.
    """
    I, J = y.shape
    total = burn_in + n_keep * thin
    sd0 = math.sqrt(s0)
    log_gamma = math.log(gamma)

    theta = theta_init.copy()
    z = np.zeros((I, J))
    xi = np.full(I, mu_xi0)
    eta = np.full(J, mu_eta0)
    xi0 = mu_xi0
    eta0 = mu_eta0

    scales = np.full((I, J), init_scale)
    accept_count = np.zeros((I, J), dtype=np.int64)

    theta_out = np.empty((n_keep, I, J))
    z_out = np.empty((n_keep, I, J))
    xi_out = np.empty((n_keep, I))
    eta_out = np.empty((n_keep, J))
    xi0_out = np.empty(n_keep)
    eta0_out = np.empty(n_keep)

    kept = 0
    for t in range(total):
        # theta: MH against the mixture with Z integrated out
        for i in range(I):
            for j in range(J):
                m = xi[i] + eta[j]
                lw_alt = log_norm_cdf(m / sd0)
                lw_null = log_norm_cdf(-m / sd0)
                cur = theta[i, j]
                prop = cur + scales[i, j] * norm_theta[t, i, j]
                lr = (_theta_log_target(prop, y[i, j], n[i, j], theta0_row[i],
                                        log_gamma, gamma, lw_alt, lw_null)
                      - _theta_log_target(cur, y[i, j], n[i, j], theta0_row[i],
                                          log_gamma, gamma, lw_alt, lw_null))
                if lr >= 0.0:
                    acc_prob = 1.0
                else:
                    acc_prob = math.exp(lr)
                if unif_theta[t, i, j] < acc_prob:
                    theta[i, j] = prop
                    if t >= burn_in:
                        accept_count[i, j] += 1
                if adapt and t < burn_in:
                    step = 1.0 / (1.0 + t) ** _RM_DECAY
                    scales[i, j] *= math.exp(step * (acc_prob - _RM_TARGET))

        # Z: truncated normal on the side implied by theta
        for i in range(I):
            for j in range(J):
                nonneg = theta[i, j] > theta0_row[i]
                z[i, j] = trunc_normal_transform(xi[i] + eta[j], sd0, nonneg,
                                                 unif_z[t, i, j])

        # xi | Z, eta, xi0
        for i in range(I):
            prec = J / s0 + 1.0 / s_xi
            acc = 0.0
            for j in range(J):
                acc += z[i, j] - eta[j]
            mean = (acc / s0 + xi0 / s_xi) / prec
            xi[i] = mean + norm_xi[t, i] / math.sqrt(prec)

        # eta | Z, xi, eta0
        for j in range(J):
            prec = I / s0 + 1.0 / s_eta
            acc = 0.0
            for i in range(I):
                acc += z[i, j] - xi[i]
            mean = (acc / s0 + eta0 / s_eta) / prec
            eta[j] = mean + norm_eta[t, j] / math.sqrt(prec)

        # global levels
        prec = I / s_xi + 1.0 / s_xi0
        acc = 0.0
        for i in range(I):
            acc += xi[i]
        mean = (acc / s_xi + mu_xi0 / s_xi0) / prec
        xi0 = mean + norm_xi0[t] / math.sqrt(prec)

        prec = J / s_eta + 1.0 / s_eta0
        acc = 0.0
        for j in range(J):
            acc += eta[j]
        mean = (acc / s_eta + mu_eta0 / s_eta0) / prec
        eta0 = mean + norm_eta0[t] / math.sqrt(prec)

        if t >= burn_in and (t - burn_in) % thin == 0:
            theta_out[kept] = theta
            z_out[kept] = z
            xi_out[kept] = xi
            eta_out[kept] = eta
            xi0_out[kept] = xi0
            eta0_out[kept] = eta0
            kept += 1

    return theta_out, z_out, xi_out, eta_out, xi0_out, eta0_out, accept_count, scales


@njit(cache=True)
def bbhm_chain(y, n, offset, theta0_mean, theta0_var, sigma2_fixed,
               ig_shape, ig_rate,
               burn_in, n_keep, thin, adapt, init_scale,
               norm_theta, unif_theta, norm_mu, gamma_sig, theta_init):
    """One-level normal shrinkage chain (common mean, shared variance).

    theta_k is the arm's log odds minus offset_k; theta_k ~ N(mu, sig2) with
    a conjugate normal prior on mu and, unless sigma2_fixed > 0, an
    inverse-gamma prior on sig2 (sampled as rate / Gamma(shape, 1)).
    """
    K = y.shape[0]
    total = burn_in + n_keep * thin

    theta = theta_init.copy()
    mu = theta0_mean
    sig2 = sigma2_fixed if sigma2_fixed > 0.0 else 1.0

    scales = np.full(K, init_scale)
    accept_count = np.zeros(K, dtype=np.int64)
    theta_out = np.empty((n_keep, K))
    mu_out = np.empty(n_keep)
    sig2_out = np.empty(n_keep)

    kept = 0
    for t in range(total):
        for k in range(K):
            cur = theta[k]
            prop = cur + scales[k] * norm_theta[t, k]
            lr = (binom_loglik(y[k], n[k], prop + offset[k])
                  - binom_loglik(y[k], n[k], cur + offset[k])
                  - 0.5 * ((prop - mu) ** 2 - (cur - mu) ** 2) / sig2)
            acc_prob = 1.0 if lr >= 0.0 else math.exp(lr)
            if unif_theta[t, k] < acc_prob:
                theta[k] = prop
                if t >= burn_in:
                    accept_count[k] += 1
            if adapt and t < burn_in:
                step = 1.0 / (1.0 + t) ** _RM_DECAY
                scales[k] *= math.exp(step * (acc_prob - _RM_TARGET))

        prec = K / sig2 + 1.0 / theta0_var
        mean = (theta.sum() / sig2 + theta0_mean / theta0_var) / prec
        mu = mean + norm_mu[t] / math.sqrt(prec)

        if sigma2_fixed <= 0.0:
            rate = ig_rate
            for k in range(K):
                rate += 0.5 * (theta[k] - mu) ** 2
            sig2 = rate / gamma_sig[t]

        if t >= burn_in and (t - burn_in) % thin == 0:
            theta_out[kept] = theta
            mu_out[kept] = mu
            sig2_out[kept] = sig2
            kept += 1

    return theta_out, mu_out, sig2_out, accept_count, scales


@njit(cache=True)
def exnex_chain(y, n, offset, weights, ex_loc, ex_loc_var, ex_sig2,
                nex_mean, nex_sig2,
                burn_in, n_keep, thin, adapt, init_scale,
                unif_member, norm_ex, norm_theta, unif_theta, theta_init):
    """Mixture-membership chain: EX components with unknown shared locations
    plus one fixed nonexchangeable component.

    weights has length C+1 (EX components first, NEX last) and is consumed
    via inverse-CDF on one uniform per arm, so zero-weight components are
    simply never selected.
    """
    K = y.shape[0]
    C = ex_loc.shape[0]
    total = burn_in + n_keep * thin

    theta = theta_init.copy()
    theta_ex = ex_loc.copy()
    member = np.zeros(K, dtype=np.int64)  # 0..C-1 = EX component, C = NEX

    scales = np.full(K, init_scale)
    accept_count = np.zeros(K, dtype=np.int64)
    theta_out = np.empty((n_keep, K))
    member_out = np.empty((n_keep, K), dtype=np.int64)

    logw = np.empty(C + 1)
    for c in range(C + 1):
        logw[c] = math.log(weights[c]) if weights[c] > 0.0 else -math.inf

    probs = np.empty(C + 1)
    kept = 0
    for t in range(total):
        # membership | theta, theta_ex
        for k in range(K):
            best = -math.inf
            for c in range(C):
                lp = logw[c]
                if lp > -math.inf:
                    lp += (-0.5 * math.log(ex_sig2[c])
                           - 0.5 * (theta[k] - theta_ex[c]) ** 2 / ex_sig2[c])
                probs[c] = lp
                if lp > best:
                    best = lp
            lp = logw[C]
            if lp > -math.inf:
                lp += (-0.5 * math.log(nex_sig2)
                       - 0.5 * (theta[k] - nex_mean) ** 2 / nex_sig2)
            probs[C] = lp
            if lp > best:
                best = lp
            tot = 0.0
            for c in range(C + 1):
                probs[c] = math.exp(probs[c] - best)
                tot += probs[c]
            u = unif_member[t, k] * tot
            acc = 0.0
            pick = C
            for c in range(C + 1):
                acc += probs[c]
                if u < acc:
                    pick = c
                    break
            member[k] = pick

        # EX component locations | members
        for c in range(C):
            prec = 1.0 / ex_loc_var[c]
            mean_acc = ex_loc[c] / ex_loc_var[c]
            for k in range(K):
                if member[k] == c:
                    prec += 1.0 / ex_sig2[c]
                    mean_acc += theta[k] / ex_sig2[c]
            mean = mean_acc / prec
            theta_ex[c] = mean + norm_ex[t, c] / math.sqrt(prec)

        # theta_k | membership
        for k in range(K):
            if member[k] == C:
                pm = nex_mean
                pv = nex_sig2
            else:
                pm = theta_ex[member[k]]
                pv = ex_sig2[member[k]]
            cur = theta[k]
            prop = cur + scales[k] * norm_theta[t, k]
            lr = (binom_loglik(y[k], n[k], prop + offset[k])
                  - binom_loglik(y[k], n[k], cur + offset[k])
                  - 0.5 * ((prop - pm) ** 2 - (cur - pm) ** 2) / pv)
            acc_prob = 1.0 if lr >= 0.0 else math.exp(lr)
            if unif_theta[t, k] < acc_prob:
                theta[k] = prop
                if t >= burn_in:
                    accept_count[k] += 1
            if adapt and t < burn_in:
                step = 1.0 / (1.0 + t) ** _RM_DECAY
                scales[k] *= math.exp(step * (acc_prob - _RM_TARGET))

        if t >= burn_in and (t - burn_in) % thin == 0:
            theta_out[kept] = theta
            member_out[kept] = member
            kept += 1

    return theta_out, member_out, accept_count, scales
