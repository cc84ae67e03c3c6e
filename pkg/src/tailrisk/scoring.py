"""Forecast evaluation: losses, coverage tests and the model confidence set.

The joint VaR/ES score per day is

    S_t = -log((alpha-1)/ES_t) - (r_t - Q_t)(alpha - I(r_t <= Q_t)) / (alpha ES_t),

a strictly consistent scoring rule minimized by the true (VaR, ES) pair and
exactly the negative of the AL log-likelihood. Coverage tests: unconditional
(likelihood ratio on the violation count), conditional (adds the first-order
Markov independence LR), dynamic quantile regression on lagged hits plus the
contemporaneous VaR, and a quantile-regression Wald test of (intercept,
slope) = (0, 1) with a pairs-bootstrap covariance.

The model confidence set eliminates models while the equivalence hypothesis
is rejected, using moving-block bootstrap variances of the pairwise mean loss
differentials; the R statistic is the largest absolute studentized
differential, SQ the sum of their squares.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy
from scipy.stats import chi2

from . import _kernels as K


def _pair(returns, var_forecasts):
    r = np.asarray(returns, dtype=float)
    v = np.asarray(var_forecasts, dtype=float)
    if r.shape != v.shape or r.ndim != 1 or r.size == 0:
        raise ValueError("returns and forecasts must be equal-length 1-d arrays")
    return r, v


def vrate(returns, var_forecasts) -> float:
    """Proportion of days whose return falls below the VaR forecast."""
    r, v = _pair(returns, var_forecasts)
    return float(np.mean(r < v))


def quantile_loss(returns, var_forecasts, alpha: float) -> float:
    """Check loss sum((alpha - I(r < Q))(r - Q)); minimized by the true quantile."""
    r, v = _pair(returns, var_forecasts)
    hit = (r < v).astype(float)
    return float(np.sum((alpha - hit) * (r - v)))


def joint_loss_series(returns, var_forecasts, es_forecasts, alpha: float) -> np.ndarray:
    """Per-day joint VaR/ES score S_t; requires every ES_t < 0."""
    r, v = _pair(returns, var_forecasts)
    es = np.asarray(es_forecasts, dtype=float)
    if es.shape != r.shape:
        raise ValueError("es_forecasts must match the returns length")
    if np.any(es >= 0):
        raise ValueError("joint score needs ES_t < 0 for every day")
    hit = (r <= v).astype(float)
    return -(np.log(1.0 - alpha) - np.log(-es)) - (r - v) * (alpha - hit) / (alpha * es)


def al_log_score(returns, var_forecasts, es_forecasts, alpha: float) -> float:
    """Total joint score; identical to -al_loglik on the same inputs."""
    return float(np.sum(joint_loss_series(returns, var_forecasts, es_forecasts, alpha)))


@dataclass(frozen=True)
class TestResult:
    stat: float
    pvalue: float

    @property
    def reject_5pct(self) -> bool:
        return bool(self.pvalue < 0.05)

    def to_dict(self) -> dict:
        return {"stat": self.stat, "pvalue": self.pvalue, "reject_5pct": self.reject_5pct}


def uc_test(n_violations: int, m: int, alpha: float) -> TestResult:
    """Unconditional coverage LR test of the violation count, chi2(1)."""
    x = int(n_violations)
    if not 0 <= x <= m or m < 1:
        raise ValueError("need 0 <= violations <= m")
    ll0 = xlogy(m - x, 1.0 - alpha) + xlogy(x, alpha)
    phat = x / m
    ll1 = xlogy(m - x, 1.0 - phat) + xlogy(x, phat)
    lr = max(float(-2.0 * (ll0 - ll1)), 0.0)
    return TestResult(lr, float(chi2.sf(lr, 1)))


def cc_test(hits, alpha: float) -> tuple[TestResult, bool]:
    """Conditional coverage: UC plus Markov independence LR, chi2(2).

    Returns (result, degenerate); a hit sequence without both states of the
    transition table gets LR_ind = 0 and the degenerate flag.
    """
    h = np.asarray(hits).astype(bool)
    m = h.size
    if m < 2:
        raise ValueError("need at least 2 observations")
    lr_uc = uc_test(int(h.sum()), m, alpha).stat
    prev, cur = h[:-1], h[1:]
    n00 = int(np.sum(~prev & ~cur))
    n01 = int(np.sum(~prev & cur))
    n10 = int(np.sum(prev & ~cur))
    n11 = int(np.sum(prev & cur))
    degenerate = (n00 + n01 == 0) or (n10 + n11 == 0) or (n01 + n11 == 0) or (n00 + n10 == 0)
    if degenerate:
        lr_ind = 0.0
    else:
        pi0 = n01 / (n00 + n01)
        pi1 = n11 / (n10 + n11)
        pi = (n01 + n11) / (m - 1)
        ll_alt = xlogy(n00, 1 - pi0) + xlogy(n01, pi0) + xlogy(n10, 1 - pi1) + xlogy(n11, pi1)
        ll_null = xlogy(n00 + n10, 1 - pi) + xlogy(n01 + n11, pi)
        lr_ind = max(float(2.0 * (ll_alt - ll_null)), 0.0)
    stat = lr_uc + lr_ind
    return TestResult(stat, float(chi2.sf(stat, 2))), degenerate


def dq_test(returns, var_forecasts, alpha: float, lags: int = 1) -> TestResult:
    """Dynamic quantile test: demeaned hits on lagged hits and the VaR, chi2(lags+2)."""
    r, v = _pair(returns, var_forecasts)
    m = r.size
    if lags < 1:
        raise ValueError("need at least one lag")
    if m <= lags + 3:
        raise ValueError("too few observations for the requested lags")
    hit = (r < v).astype(float) - alpha
    y = hit[lags:]
    cols = [np.ones(m - lags)]
    for j in range(1, lags + 1):
        cols.append(hit[lags - j : m - j])
    cols.append(v[lags:])
    x = np.column_stack(cols)
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise np.linalg.LinAlgError("singular design matrix in the dynamic quantile test")
    xty = x.T @ y
    stat = float(xty @ np.linalg.solve(x.T @ x, xty) / (alpha * (1.0 - alpha)))
    df = lags + 2
    return TestResult(stat, float(chi2.sf(stat, df)))


def _quantile_regression(y: np.ndarray, x: np.ndarray, alpha: float) -> np.ndarray:
    from statsmodels.regression.quantile_regression import QuantReg

    design = np.column_stack([np.ones(y.size), x])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = QuantReg(y, design).fit(q=alpha, max_iter=1000)
    return np.asarray(res.params, dtype=float)


def vqr_test(returns, var_forecasts, alpha: float, n_boot: int = 1000, seed: int = 0) -> TestResult:
    """Wald test of (0, 1) in the quantile regression of returns on the VaR.

    The coefficient covariance comes from a pairs bootstrap of the design.
    Constant VaR series and perfect fits are degenerate and raise ValueError.
    """
    r, v = _pair(returns, var_forecasts)
    if np.std(v) == 0.0:
        raise ValueError("degenerate VaR series (constant)")
    theta = _quantile_regression(r, v, alpha)
    resid = r - theta[0] - theta[1] * v
    if np.max(np.abs(resid)) < 1e-10 * max(1.0, float(np.max(np.abs(r)))):
        raise ValueError("degenerate VaR series (perfect fit)")
    rng = np.random.default_rng(seed)
    boot = np.empty((n_boot, 2))
    m = r.size
    for b in range(n_boot):
        idx = rng.integers(0, m, size=m)
        boot[b] = _quantile_regression(r[idx], v[idx], alpha)
    cov = np.cov(boot, rowvar=False)
    delta = theta - np.array([0.0, 1.0])
    try:
        w = float(delta @ np.linalg.solve(cov, delta))
    except np.linalg.LinAlgError:
        raise ValueError("degenerate bootstrap covariance in the VQR test")
    if not math.isfinite(w) or w < 0:
        raise ValueError("degenerate bootstrap covariance in the VQR test")
    return TestResult(w, float(chi2.sf(w, 2)))


@dataclass(frozen=True)
class BacktestReport:
    alpha: float
    m: int
    vrate: float
    n_violations: int
    quantile_loss: float
    joint_loss: float
    uc: TestResult | None
    cc: TestResult | None
    dq1: TestResult | None
    dq4: TestResult | None
    vqr: TestResult | None
    flags: tuple[str, ...]

    def to_dict(self) -> dict:
        def test(t):
            return t.to_dict() if t is not None else None

        return {
            "alpha": self.alpha,
            "m": self.m,
            "vrate": self.vrate,
            "n_violations": self.n_violations,
            "quantile_loss": self.quantile_loss,
            "joint_loss": self.joint_loss,
            "uc": test(self.uc),
            "cc": test(self.cc),
            "dq1": test(self.dq1),
            "dq4": test(self.dq4),
            "vqr": test(self.vqr),
            "flags": list(self.flags),
        }


def backtest(returns, var_forecasts, es_forecasts, alpha: float,
             vqr_boot: int = 1000, seed: int = 0) -> BacktestReport:
    """Run the full evaluation battery; degenerate tests are flagged, not fatal."""
    r, v = _pair(returns, var_forecasts)
    es = np.asarray(es_forecasts, dtype=float)
    hits = r < v
    n_viol = int(hits.sum())
    flags: list[str] = []

    uc = uc_test(n_viol, r.size, alpha)
    cc, cc_degenerate = cc_test(hits, alpha)
    if cc_degenerate:
        flags.append("cc_degenerate")

    results: dict[str, TestResult | None] = {}
    for name, fn in (
        ("dq1", lambda: dq_test(r, v, alpha, lags=1)),
        ("dq4", lambda: dq_test(r, v, alpha, lags=4)),
        ("vqr", lambda: vqr_test(r, v, alpha, n_boot=vqr_boot, seed=seed)),
    ):
        try:
            results[name] = fn()
        except (ValueError, np.linalg.LinAlgError):
            results[name] = None
            flags.append(f"{name}_degenerate")

    return BacktestReport(
        alpha=alpha,
        m=int(r.size),
        vrate=vrate(r, v),
        n_violations=n_viol,
        quantile_loss=quantile_loss(r, v, alpha),
        joint_loss=al_log_score(r, v, es, alpha),
        uc=uc,
        cc=cc,
        dq1=results["dq1"],
        dq4=results["dq4"],
        vqr=results["vqr"],
        flags=tuple(flags),
    )


def align_forecasts(data_records, forecast_records):
    """Inner-join ok forecasts with daily records on date.

    Returns (returns, var, es, dates); forecast dates absent from the data
    are an error, failed forecasts are skipped.
    """
    by_date = {rec.date: rec.ret for rec in data_records}
    rets, var, es, dates = [], [], [], []
    for f in forecast_records:
        if not f.ok:
            continue
        if f.date not in by_date:
            raise ValueError(f"forecast date {f.date} not present in the daily data")
        dates.append(f.date)
        rets.append(by_date[f.date])
        var.append(f.var)
        es.append(f.es)
    return np.array(rets), np.array(var), np.array(es), dates


# --- model confidence set -------------------------------------------------


@dataclass(frozen=True)
class McsResult:
    method: str
    level: float
    survivors: tuple[str, ...]
    eliminations: tuple[tuple[str, float], ...]
    pvalues: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "level": self.level,
            "survivors": list(self.survivors),
            "eliminations": [{"model": m, "pvalue": p} for m, p in self.eliminations],
        }


def moving_block_indices(rng: np.random.Generator, m: int, block_length: int,
                         n_boot: int) -> np.ndarray:
    """(n_boot, m) index matrix of concatenated moving blocks."""
    block_length = min(max(block_length, 1), m)
    n_blocks = math.ceil(m / block_length)
    starts = rng.integers(0, m - block_length + 1, size=(n_boot, n_blocks))
    idx = starts[:, :, None] + np.arange(block_length)[None, None, :]
    return idx.reshape(n_boot, -1)[:, :m]


def _studentize(num, se) -> np.ndarray:
    """num/se with 0/0 -> 0 and x/0 -> signed inf (constant differentials)."""
    num, se = np.broadcast_arrays(num, se)
    nonzero = se > 0
    with np.errstate(invalid="ignore"):
        out = np.where(nonzero, num / np.where(nonzero, se, 1.0), 0.0)
        return np.where(~nonzero & (num != 0), np.sign(num) * np.inf, out)


def mcs(
    losses: dict[str, np.ndarray],
    method: str = "R",
    level: float = 0.90,
    n_boot: int = 1000,
    block_length: int | None = None,
    seed: int = 0,
) -> McsResult:
    """Model confidence set by iterative elimination.

    ``losses`` maps model ids to equal-length per-day loss series. Returns the
    survivors at the given confidence level, the full elimination ladder with
    monotonized p-values, and the per-model MCS p-values (last survivor gets
    p = 1).
    """
    names = list(losses)
    if len(names) < 2:
        raise ValueError("need at least 2 models")
    mat = np.column_stack([np.asarray(losses[n], dtype=float) for n in names])
    m, k = mat.shape
    if m < 2:
        raise ValueError("need at least 2 loss observations")
    if method not in ("R", "SQ"):
        raise ValueError("method must be 'R' or 'SQ'")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    alpha = 1.0 - level
    block = block_length or math.ceil(m ** (1.0 / 3.0))
    rng = np.random.default_rng(seed)
    idx = moving_block_indices(rng, m, block, n_boot)
    lbar = mat.mean(axis=0)
    lstar = np.stack([mat[:, j][idx].mean(axis=1) for j in range(k)], axis=1)  # (B, k)

    in_set = list(range(k))
    ladder: list[tuple[str, float]] = []
    while len(in_set) > 1:
        s = np.array(in_set)
        nb = s.size
        bbar = lbar[s]
        bstar = lstar[:, s]
        d = bbar[:, None] - bbar[None, :]
        dev = (bstar[:, :, None] - bstar[:, None, :]) - d[None]
        se = np.sqrt((dev**2).mean(axis=0))
        t_obs = _studentize(d, se)
        t_star = _studentize(dev, se[None])
        iu = np.triu_indices(nb, 1)
        if method == "R":
            t_stat = float(np.max(np.abs(t_obs[iu])))
            t_boot = np.abs(t_star[:, iu[0], iu[1]]).max(axis=1)
        else:
            t_stat = float(np.sum(t_obs[iu] ** 2))
            t_boot = np.sum(t_star[:, iu[0], iu[1]] ** 2, axis=1)
        pval = float(np.mean(t_boot >= t_stat))

        d_dot = (bbar * nb - bbar.sum()) / (nb - 1)
        dev_dot = (bstar * nb - bstar.sum(axis=1, keepdims=True)) / (nb - 1) - d_dot[None]
        se_dot = np.sqrt((dev_dot**2).mean(axis=0))
        t_dot = _studentize(d_dot, se_dot)
        worst = int(np.argmax(t_dot))
        ladder.append((names[s[worst]], pval))
        in_set.remove(int(s[worst]))

    pvalues: dict[str, float] = {}
    running = 0.0
    eliminations = []
    for name, p in ladder:
        running = max(running, p)
        pvalues[name] = running
        eliminations.append((name, running))
    pvalues[names[in_set[0]]] = 1.0
    survivors = tuple(n for n in names if pvalues[n] >= alpha)
    return McsResult(
        method=method,
        level=level,
        survivors=survivors,
        eliminations=tuple(eliminations),
        pvalues=pvalues,
    )
