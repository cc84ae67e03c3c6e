"""Simulation ground truth: data generation, truth mapping, recovery studies.

The generating process is an absolute-value realized GARCH,

    r_t      = sqrt(h_t) * e_t,                     e_t ~ N(0, 1)
    sqrt(h_t) = omega + a * X_{t-1} + b * sqrt(h_{t-1})
    X_t      = xi + phi * sqrt(h_t) + tau1 * e_t + tau2 * (e_t^2 - 1) + u_t,
               u_t ~ N(0, sigma_u^2),

with (e_t, u_t) redrawn jointly until X_t > 0, since X_t plays the realized
measure. Substituting Q_t = sqrt(h_t) * z_alpha maps the process onto the
realized quantile-regression families in closed form, so true parameters and
true VaR/ES paths are available exactly:

    VaR_t = sqrt(h_t) * z_alpha,   ES_t = -sqrt(h_t) * pdf(z_alpha) / alpha.

The exponential ES ratio has the closed-form gamma0 = log(ES/VaR - 1); the
autoregressive ES component has no closed form and its "true" gammas come
from a random search that maximizes the AL likelihood conditional on the true
quantile path.
"""

from __future__ import annotations

import datetime as dt
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from . import _kernels as K
from . import mle
from .data_io import DailyRecord
from .likelihood import al_loglik
from .mcmc import McmcConfig, run_mcmc
from .models import ModelFamily, ModelSpec, ParamVector, forecast_one


@dataclass(frozen=True)
class DgpSpec:
    """Generating-process parameters; defaults reproduce the study design."""

    omega: float = 0.02
    a: float = 0.10
    b: float = 0.85
    xi: float = 0.1
    phi: float = 0.9
    tau1: float = -0.02
    tau2: float = 0.02
    sigma_u: float = 0.3
    n: int = 1900
    seed: int = 0
    burn_in: int = 200

    def __post_init__(self):
        if self.b + self.a * self.phi >= 1.0:
            raise ValueError("need b + a*phi < 1 for a stationary volatility recursion")
        if self.sigma_u <= 0.0:
            raise ValueError("sigma_u must be positive")
        if self.n < 2:
            raise ValueError("need n >= 2")

    @property
    def fixed_point(self) -> float:
        """Zero-shock resting level of sqrt(h)."""
        return (self.omega + self.a * self.xi) / (1.0 - self.b - self.a * self.phi)


@dataclass(frozen=True)
class SimulatedPath:
    """returns/measures for days 1..n plus sqrt_h for days 1..n+1."""

    returns: np.ndarray
    measures: np.ndarray
    sqrt_h: np.ndarray

    @property
    def n(self) -> int:
        return self.returns.size


def simulate_dgp(spec: DgpSpec, shocks: tuple[np.ndarray, np.ndarray] | None = None) -> SimulatedPath:
    """Simulate one dataset; redraws keep every X_t positive.

    ``shocks`` injects deterministic (e, u) arrays of length n (test hook;
    no redrawing, no burn-in). sqrt_h gets one extra entry, the one-step-ahead
    volatility implied by the final day.
    """
    if shocks is not None:
        e, u = (np.asarray(s, dtype=float) for s in shocks)
        if e.shape != (spec.n,) or u.shape != (spec.n,):
            raise ValueError("shock arrays must have shape (n,)")
        return _recurse(spec, e, u)
    rng = np.random.default_rng(spec.seed)
    total = spec.burn_in + spec.n
    sh = spec.fixed_point
    x_prev = spec.xi + spec.phi * sh
    returns = np.empty(total)
    measures = np.empty(total)
    sqrt_h = np.empty(total + 1)
    for t in range(total):
        sh = spec.omega + spec.a * x_prev + spec.b * sh
        sqrt_h[t] = sh
        while True:
            e = rng.standard_normal()
            u = rng.standard_normal() * spec.sigma_u
            x = spec.xi + spec.phi * sh + spec.tau1 * e + spec.tau2 * (e * e - 1.0) + u
            if x > 0.0:
                break
        returns[t] = sh * e
        measures[t] = x
        x_prev = x
    sqrt_h[total] = spec.omega + spec.a * x_prev + spec.b * sh
    lo = spec.burn_in
    return SimulatedPath(returns[lo:], measures[lo:], sqrt_h[lo:])


def _recurse(spec: DgpSpec, e: np.ndarray, u: np.ndarray) -> SimulatedPath:
    n = e.size
    sh = spec.fixed_point
    x_prev = spec.xi + spec.phi * sh
    returns = np.empty(n)
    measures = np.empty(n)
    sqrt_h = np.empty(n + 1)
    for t in range(n):
        sh = spec.omega + spec.a * x_prev + spec.b * sh
        sqrt_h[t] = sh
        x = spec.xi + spec.phi * sh + spec.tau1 * e[t] + spec.tau2 * (e[t] * e[t] - 1.0) + u[t]
        returns[t] = sh * e[t]
        measures[t] = x
        x_prev = x
    sqrt_h[n] = spec.omega + spec.a * x_prev + spec.b * sh
    return SimulatedPath(returns, measures, sqrt_h)


def to_daily_records(path: SimulatedPath, start: dt.date = dt.date(2000, 1, 3)) -> list[DailyRecord]:
    """Wrap a simulated path as daily records with consecutive dates."""
    return [
        DailyRecord(start + dt.timedelta(days=i), float(path.returns[i]), float(path.measures[i]))
        for i in range(path.n)
    ]


def gaussian_tail(alpha: float) -> tuple[float, float]:
    """(z_alpha, tail mean multiplier pdf(z)/alpha) for the standard normal."""
    z = float(ndtri(alpha))
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return z, pdf / alpha


def es_var_ratio(alpha: float) -> float:
    """Constant ES_t / VaR_t ratio under Gaussian returns."""
    z, mult = gaussian_tail(alpha)
    return mult / abs(z)


def map_truth(spec: DgpSpec, alpha: float, family: ModelFamily = ModelFamily.REESCAV_EXP) -> ParamVector:
    """Closed-form true parameters of the realized families under the DGP.

    The exponential ES ratio gamma0 is exact; the autoregressive gammas have
    no closed form and stay None (see true_gamma_ar).
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must be in (0, 0.5)")
    if not family.uses_measure:
        raise ValueError("the truth mapping targets the realized families")
    z, _ = gaussian_tail(alpha)
    fields = dict(
        beta0=spec.omega * z,
        beta1=spec.a * z,
        beta2=spec.b,
        xi=spec.xi,
        phi=-spec.phi / z,
        tau1=spec.tau1 * z,
        tau2=spec.tau2 * z * z,
        sigma_u=spec.sigma_u,
    )
    if family.es_kind == "exp":
        fields["gamma0"] = math.log(es_var_ratio(alpha) - 1.0)
    return ParamVector(**fields)


def true_paths(sim: SimulatedPath, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact (VaR, ES) paths for days 1..n+1 from the volatility path."""
    z, mult = gaussian_tail(alpha)
    return sim.sqrt_h * z, -sim.sqrt_h * mult


@dataclass(frozen=True)
class GammaSearch:
    gamma0: float
    gamma1: float
    gamma2: float
    loglik: float


def true_gamma_ar(
    returns,
    var_path,
    alpha: float,
    n_trials: int = 50_000,
    seed: int = 0,
    include: tuple[tuple[float, float, float], ...] = (),
) -> GammaSearch:
    """Best (gamma0, gamma1, gamma2) under the AL likelihood at the true quantiles.

    Trials are uniform over [0,1) x [0,1) x [0,1); ``include`` injects extra
    trials into the search.
    """
    r = np.asarray(returns, dtype=float)
    q = np.asarray(var_path, dtype=float)
    if r.shape != q.shape:
        raise ValueError("returns and var_path must have equal length")
    rng = np.random.default_rng(seed)
    trials = rng.uniform(0.0, 1.0, size=(max(n_trials, 0), 3))
    if include:
        trials = np.vstack([trials, np.asarray(include, dtype=float)])
    if trials.shape[0] == 0:
        raise ValueError("need at least one trial")
    best = GammaSearch(math.nan, math.nan, math.nan, -math.inf)
    for g0, g1, g2 in trials:
        x = K.ar_offset_path(r, q, g0, g1, g2, g0)
        ll = float(K.al_sum(r, q, q - x, alpha))
        if ll > best.loglik:
            best = GammaSearch(float(g0), float(g1), float(g2), ll)
    return best


@dataclass(frozen=True)
class TruthRecord:
    """Everything the estimators are judged against on one dataset."""

    params: ParamVector
    var_path: np.ndarray
    es_path: np.ndarray
    var_next: float
    es_next: float
    gamma_ar: GammaSearch | None = None


def truth_record(
    spec: DgpSpec,
    alpha: float,
    sim: SimulatedPath,
    family: ModelFamily = ModelFamily.REESCAV_EXP,
    gamma_trials: int = 0,
    gamma_seed: int = 0,
) -> TruthRecord:
    var_path, es_path = true_paths(sim, alpha)
    params = map_truth(spec, alpha, family)
    gamma_ar = None
    if family.es_kind == "ar" and gamma_trials > 0:
        gamma_ar = true_gamma_ar(
            sim.returns, var_path[:-1], alpha, n_trials=gamma_trials, seed=gamma_seed
        )
        params = replace(
            params, gamma0=gamma_ar.gamma0, gamma1=gamma_ar.gamma1, gamma2=gamma_ar.gamma2
        )
    return TruthRecord(
        params=params,
        var_path=var_path[:-1],
        es_path=es_path[:-1],
        var_next=float(var_path[-1]),
        es_next=float(es_path[-1]),
        gamma_ar=gamma_ar,
    )


@dataclass(frozen=True)
class ReplicationResult:
    """Per-quantity mean and RMSE across replications, against the truth."""

    family: ModelFamily
    estimator: str
    alpha: float
    reps: int
    rows: dict[str, dict[str, float]]  # name -> {true, mean, rmse}
    estimates: dict[str, np.ndarray]
    truths: dict[str, np.ndarray]

    def table_rows(self) -> list[tuple[str, float, float, float]]:
        return [
            (name, row["true"], row["mean"], row["rmse"]) for name, row in self.rows.items()
        ]


def _rep_worker(args) -> tuple[dict[str, float], dict[str, float]]:
    (family_value, alpha, estimator, dgp, rep_seed, mcmc_cfg, ml_candidates, gamma_trials) = args
    family = ModelFamily(family_value)
    spec = ModelSpec(family, alpha)
    sim = simulate_dgp(replace(dgp, seed=rep_seed))
    data = to_daily_records(sim)
    truth = truth_record(
        dgp, alpha, sim, family, gamma_trials=gamma_trials if family.es_kind == "ar" else 0,
        gamma_seed=rep_seed,
    )
    if estimator == "mcmc":
        res = run_mcmc(spec, data, replace(mcmc_cfg, seed=rep_seed))
        est = res.posterior_mean.as_dict(family)
        var_f, es_f = res.forecast
    elif estimator == "ml":
        fit = mle.fit_ml(spec, data, n_candidates=ml_candidates, seed=rep_seed)
        est = fit.params.as_dict(family)
        var_f, es_f = forecast_one(spec, fit.params, data)
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    est["var_next"] = var_f
    est["es_next"] = es_f
    tru = _truth_dict(truth, family)
    return est, tru


def replication_study(
    family: ModelFamily,
    alpha: float,
    estimator: str,
    reps: int,
    seed: int = 0,
    dgp: DgpSpec = DgpSpec(),
    mcmc_cfg: McmcConfig = McmcConfig(),
    ml_candidates: int | None = None,
    gamma_trials: int = 5000,
    workers: int = 1,
) -> ReplicationResult:
    """Bias/RMSE of an estimator against the simulation truth.

    Replications use derived seeds and are independent, so results do not
    depend on the worker count.
    """
    if reps < 1:
        raise ValueError("need at least one replication")
    if callable(estimator):
        est_fn, est_name = estimator, getattr(estimator, "__name__", "custom")
    else:
        est_fn, est_name = None, estimator
    rep_seeds = [int(s % 2**31) for s in np.random.SeedSequence(seed).generate_state(reps)]
    outputs = []
    if est_fn is not None:
        for rs in rep_seeds:
            outputs.append(_custom_rep(family, alpha, dgp, rs, est_fn, gamma_trials))
    else:
        args = [
            (family.value, alpha, est_name, dgp, rs, mcmc_cfg, ml_candidates, gamma_trials)
            for rs in rep_seeds
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outputs = list(pool.map(_rep_worker, args))
        else:
            outputs = [_rep_worker(a) for a in args]

    names = [n for n in outputs[0][0] if n in outputs[0][1]]
    estimates = {n: np.array([o[0][n] for o in outputs]) for n in names}
    truths = {n: np.array([o[1][n] for o in outputs]) for n in names}
    rows = {}
    for n in names:
        err = estimates[n] - truths[n]
        rows[n] = {
            "true": float(truths[n].mean()),
            "mean": float(estimates[n].mean()),
            "rmse": float(np.sqrt(np.mean(err**2))),
        }
    return ReplicationResult(
        family=family,
        estimator=est_name,
        alpha=alpha,
        reps=reps,
        rows=rows,
        estimates=estimates,
        truths=truths,
    )


def _truth_dict(truth: TruthRecord, family: ModelFamily) -> dict[str, float]:
    out = {}
    for name in family.param_names:
        v = getattr(truth.params, name)
        if v is not None and math.isfinite(v):
            out[name] = float(v)
    out["var_next"] = truth.var_next
    out["es_next"] = truth.es_next
    return out


def _custom_rep(family, alpha, dgp, rep_seed, est_fn, gamma_trials):
    spec = ModelSpec(family, alpha)
    sim = simulate_dgp(replace(dgp, seed=rep_seed))
    data = to_daily_records(sim)
    truth = truth_record(
        dgp, alpha, sim, family, gamma_trials=gamma_trials if family.es_kind == "ar" else 0,
        gamma_seed=rep_seed,
    )
    params, (var_f, es_f) = est_fn(spec, data, truth)
    est = params.as_dict(family)
    est["var_next"] = var_f
    est["es_next"] = es_f
    return est, _truth_dict(truth, family)


def simulate_market(
    n: int,
    seed: int = 0,
    omegas: tuple[float, ...] = (0.02, 0.05, 0.015),
    base: DgpSpec = DgpSpec(),
) -> SimulatedPath:
    """Synthetic market with volatility regime shifts.

    The intercept of the volatility recursion jumps between segments of equal
    length while the dynamics stay continuous across boundaries.
    """
    if n < len(omegas):
        raise ValueError("need at least one day per regime")
    rng = np.random.default_rng(seed)
    bounds = np.linspace(0, n, len(omegas) + 1).astype(int)
    spec0 = replace(base, omega=omegas[0], n=n)
    sh = spec0.fixed_point
    x_prev = spec0.xi + spec0.phi * sh
    returns = np.empty(n)
    measures = np.empty(n)
    sqrt_h = np.empty(n + 1)
    for t in range(n):
        seg = int(np.searchsorted(bounds[1:], t, side="right"))
        omega = omegas[seg]
        sh = omega + base.a * x_prev + base.b * sh
        sqrt_h[t] = sh
        while True:
            e = rng.standard_normal()
            u = rng.standard_normal() * base.sigma_u
            x = base.xi + base.phi * sh + base.tau1 * e + base.tau2 * (e * e - 1.0) + u
            if x > 0.0:
                break
        returns[t] = sh * e
        measures[t] = x
        x_prev = x
    sqrt_h[n] = omegas[-1] + base.a * x_prev + base.b * sh
    return SimulatedPath(returns, measures, sqrt_h)
