"""Numba kernels for the model recursions and likelihood sums.

Hot paths only: the estimators evaluate these millions of times. Every kernel
has a pure-Python oracle in the test suite that must agree to 1e-12.

Parameter vectors are flat float64 arrays in canonical order:

* es-caviar-ar      (b0, b1, b2, g0, g1, g2)
* es-caviar-exp     (b0, b1, b2, g0)
* re-es-caviar-ar   (b0, b1, b2, xi, phi, tau1, tau2, sigma_u, g0, g1, g2)
* re-es-caviar-exp  (b0, b1, b2, xi, phi, tau1, tau2, sigma_u, g0)

A degenerate quantile (|Q_t| < 1e-8) or a non-negative ES marks the point as
invalid; likelihood kernels return -inf for such points.
"""

import math

import numpy as np
from numba import njit

FAM_ESCAV_AR = 0
FAM_ESCAV_EXP = 1
FAM_REESCAV_AR = 2
FAM_REESCAV_EXP = 3

DEGENERATE_Q = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def quantile_path(driver, b0, b1, b2, q1):
    """Q_t = b0 + b1 * driver_{t-1} + b2 * Q_{t-1}, Q_1 = q1."""
    n = driver.shape[0]
    q = np.empty(n)
    q[0] = q1
    for t in range(1, n):
        q[t] = b0 + b1 * driver[t - 1] + b2 * q[t - 1]
    return q


@njit(cache=True)
def ar_offset_path(r, q, g0, g1, g2, x1):
    """ES offset recursion: updates only after a quantile violation."""
    n = r.shape[0]
    x = np.empty(n)
    x[0] = x1
    for t in range(1, n):
        if r[t - 1] <= q[t - 1]:
            x[t] = g0 + g1 * (q[t - 1] - r[t - 1]) + g2 * x[t - 1]
        else:
            x[t] = x[t - 1]
    return x


@njit(cache=True)
def al_sum(r, q, es, alpha):
    """AL log-likelihood sum; -inf if any ES_t is non-negative."""
    total = 0.0
    log1ma = math.log(1.0 - alpha)
    for t in range(r.shape[0]):
        if es[t] >= 0.0:
            return -np.inf
        hit = 1.0 if r[t] <= q[t] else 0.0
        total += log1ma - math.log(-es[t]) + (r[t] - q[t]) * (alpha - hit) / (alpha * es[t])
    return total


@njit(cache=True)
def check_loss_sum(r, q, alpha):
    """Quantile check loss sum((alpha - I(r<=Q))(r - Q))."""
    total = 0.0
    for t in range(r.shape[0]):
        hit = 1.0 if r[t] <= q[t] else 0.0
        total += (alpha - hit) * (r[t] - q[t])
    return total


@njit(cache=True)
def eps_mean_sq(r, q):
    """Multiplicative errors eps_t = r_t / Q_t and their mean square."""
    n = r.shape[0]
    eps = np.empty(n)
    s = 0.0
    for t in range(n):
        eps[t] = r[t] / q[t]
        s += eps[t] * eps[t]
    return eps, s / n


@njit(cache=True)
def measurement_residuals(x, q, eps, eps2bar, xi, phi, tau1, tau2):
    n = x.shape[0]
    u = np.empty(n)
    for t in range(n):
        u[t] = x[t] - xi - phi * abs(q[t]) - tau1 * eps[t] - tau2 * (eps[t] * eps[t] - eps2bar)
    return u


@njit(cache=True)
def gaussian_sum(u, sigma_u):
    total = 0.0
    s2 = sigma_u * sigma_u
    for t in range(u.shape[0]):
        total += LOG_2PI + math.log(s2) + u[t] * u[t] / s2
    return -0.5 * total


@njit(cache=True)
def _q_degenerate(q):
    for t in range(q.shape[0]):
        if abs(q[t]) < DEGENERATE_Q:
            return True
    return False


@njit(cache=True)
def _es_path(family, theta, r, q, x1):
    """ES path for a given quantile path; x1=nan means offset starts at g0."""
    if family == FAM_ESCAV_AR or family == FAM_REESCAV_AR:
        if family == FAM_ESCAV_AR:
            g0, g1, g2 = theta[3], theta[4], theta[5]
        else:
            g0, g1, g2 = theta[8], theta[9], theta[10]
        start = g0 if math.isnan(x1) else x1
        x = ar_offset_path(r, q, g0, g1, g2, start)
        return q - x
    g0 = theta[3] if family == FAM_ESCAV_EXP else theta[8]
    return (1.0 + math.exp(g0)) * q


@njit(cache=True)
def loglik(family, theta, r, x, alpha, q1, x1):
    """(total, al_part, measurement_part); (-inf, -inf, 0) on invalid points."""
    if family == FAM_ESCAV_AR or family == FAM_ESCAV_EXP:
        driver = np.abs(r)
    else:
        driver = x
    q = quantile_path(driver, theta[0], theta[1], theta[2], q1)
    if _q_degenerate(q):
        return -np.inf, -np.inf, 0.0
    es = _es_path(family, theta, r, q, x1)
    al = al_sum(r, q, es, alpha)
    if al == -np.inf or math.isnan(al):
        return -np.inf, -np.inf, 0.0
    if family == FAM_ESCAV_AR or family == FAM_ESCAV_EXP:
        return al, al, 0.0
    sigma_u = theta[7]
    if sigma_u <= 0.0:
        return -np.inf, -np.inf, 0.0
    eps, eps2bar = eps_mean_sq(r, q)
    u = measurement_residuals(x, q, eps, eps2bar, theta[3], theta[4], theta[5], theta[6])
    meas = gaussian_sum(u, sigma_u)
    if math.isnan(meas):
        return -np.inf, -np.inf, 0.0
    return al + meas, al, meas


@njit(cache=True)
def forecast_next(family, theta, r, x, alpha, q1, x1):
    """One-step-ahead (VaR, ES) from the information set at the last day."""
    if family == FAM_ESCAV_AR or family == FAM_ESCAV_EXP:
        driver = np.abs(r)
    else:
        driver = x
    q = quantile_path(driver, theta[0], theta[1], theta[2], q1)
    n = r.shape[0]
    q_next = theta[0] + theta[1] * driver[n - 1] + theta[2] * q[n - 1]
    if family == FAM_ESCAV_AR or family == FAM_REESCAV_AR:
        if family == FAM_ESCAV_AR:
            g0, g1, g2 = theta[3], theta[4], theta[5]
        else:
            g0, g1, g2 = theta[8], theta[9], theta[10]
        start = g0 if math.isnan(x1) else x1
        xs = ar_offset_path(r, q, g0, g1, g2, start)
        if r[n - 1] <= q[n - 1]:
            x_next = g0 + g1 * (q[n - 1] - r[n - 1]) + g2 * xs[n - 1]
        else:
            x_next = xs[n - 1]
        return q_next, q_next - x_next
    g0 = theta[3] if family == FAM_ESCAV_EXP else theta[8]
    return q_next, (1.0 + math.exp(g0)) * q_next


@njit(cache=True)
def forecast_batch(family, thetas, r, x, alpha, q1, x1):
    m = thetas.shape[0]
    var = np.empty(m)
    es = np.empty(m)
    for i in range(m):
        var[i], es[i] = forecast_next(family, thetas[i], r, x, alpha, q1, x1)
    return var, es
