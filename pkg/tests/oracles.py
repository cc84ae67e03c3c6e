"""Independent pure-Python oracles for the numerical kernels.

Everything here is written as naive scalar loops straight from the model
definitions, deliberately sharing no code with the package internals.
"""

import math


def naive_quantile_path(driver, b0, b1, b2, q1):
    q = [q1]
    for t in range(1, len(driver)):
        q.append(b0 + b1 * driver[t - 1] + b2 * q[t - 1])
    return q


def naive_ar_offsets(r, q, g0, g1, g2, x1):
    x = [x1]
    for t in range(1, len(r)):
        if r[t - 1] <= q[t - 1]:
            x.append(g0 + g1 * (q[t - 1] - r[t - 1]) + g2 * x[t - 1])
        else:
            x.append(x[t - 1])
    return x


def naive_al_loglik(r, q, es, alpha):
    total = 0.0
    for t in range(len(r)):
        if es[t] >= 0:
            return -math.inf
        ind = 1.0 if r[t] <= q[t] else 0.0
        total += math.log((alpha - 1.0) / es[t]) + (r[t] - q[t]) * (alpha - ind) / (alpha * es[t])
    return total


def naive_filter(family, params, r, x, alpha, q1):
    """family in {'escav-ar','escav-exp','reescav-ar','reescav-exp'}; params a dict."""
    realized = family.startswith("reescav")
    driver = [xv for xv in x] if realized else [abs(rv) for rv in r]
    q = naive_quantile_path(driver, params["beta0"], params["beta1"], params["beta2"], q1)
    out = {"q": q}
    if family.endswith("-ar"):
        xs = naive_ar_offsets(r, q, params["gamma0"], params["gamma1"], params["gamma2"],
                              params["gamma0"])
        es = [q[t] - xs[t] for t in range(len(q))]
        out["x"] = xs
    else:
        ratio = 1.0 + math.exp(params["gamma0"])
        xs = [ratio] * len(q)
        es = [ratio * q[t] for t in range(len(q))]
        out["x"] = xs
    out["es"] = es
    if realized:
        eps = [r[t] / q[t] for t in range(len(q))]
        eps2bar = sum(e * e for e in eps) / len(eps)
        u = [
            x[t]
            - params["xi"]
            - params["phi"] * abs(q[t])
            - params["tau1"] * eps[t]
            - params["tau2"] * (eps[t] ** 2 - eps2bar)
            for t in range(len(q))
        ]
        out["eps"] = eps
        out["eps2bar"] = eps2bar
        out["u"] = u
    return out


def naive_composite(family, params, r, x, alpha, q1):
    paths = naive_filter(family, params, r, x, alpha, q1)
    al = naive_al_loglik(r, paths["q"], paths["es"], alpha)
    if not family.startswith("reescav"):
        return al, al, 0.0
    s2 = params["sigma_u"] ** 2
    meas = -0.5 * sum(math.log(2 * math.pi) + math.log(s2) + u * u / s2 for u in paths["u"])
    return al + meas, al, meas


def naive_dgp_recursion(omega, a, b, xi, phi, tau1, tau2, e, u, sh0, x0):
    """Volatility recursion conditional on given shocks; returns (r, x, sqrt_h)."""
    sh_prev, x_prev = sh0, x0
    rs, xs, shs = [], [], []
    for t in range(len(e)):
        sh = omega + a * x_prev + b * sh_prev
        x = xi + phi * sh + tau1 * e[t] + tau2 * (e[t] ** 2 - 1.0) + u[t]
        rs.append(sh * e[t])
        xs.append(x)
        shs.append(sh)
        sh_prev, x_prev = sh, x
    shs.append(omega + a * x_prev + b * sh_prev)
    return rs, xs, shs
