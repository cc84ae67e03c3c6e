"""Model families and deterministic filtering.

Four joint VaR/ES regression families share the symmetric-absolute-value
quantile recursion Q_t = b0 + b1 * driver_{t-1} + b2 * Q_{t-1}. The driver is
|r_{t-1}| for the return-only families and the realized measure X_{t-1} for
the realized families, which add a contemporaneous measurement equation

    X_t = xi + phi*|Q_t| + tau1*eps_t + tau2*(eps_t^2 - mean(eps^2)) + u_t,

with eps_t = r_t / Q_t. The ES component is either an autoregressive
offset (ES_t = Q_t - x_t, x_t updated after quantile violations) or a fixed
exponential ratio (ES_t = (1 + exp(g0)) * Q_t).

Filtering is deterministic and pure: identical inputs give bitwise-identical
outputs, and many filters may run concurrently over shared data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels as K


class DegenerateQuantileError(ValueError):
    """|Q_t| fell below 1e-8; eps_t = r_t/Q_t would blow up."""


class ModelFamily(str, Enum):
    ESCAV_AR = "es-caviar-ar"
    ESCAV_EXP = "es-caviar-exp"
    REESCAV_AR = "re-es-caviar-ar"
    REESCAV_EXP = "re-es-caviar-exp"

    @property
    def code(self) -> int:
        return _FAMILY_CODE[self]

    @property
    def uses_measure(self) -> bool:
        """True when the quantile driver is the realized measure."""
        return self in (ModelFamily.REESCAV_AR, ModelFamily.REESCAV_EXP)

    @property
    def es_kind(self) -> str:
        return "ar" if self in (ModelFamily.ESCAV_AR, ModelFamily.REESCAV_AR) else "exp"

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self]

    @classmethod
    def parse(cls, s: str) -> "ModelFamily":
        key = s.strip().lower()
        for fam in cls:
            if fam.value == key:
                return fam
        raise ValueError(f"unknown model {s!r}; expected one of {[f.value for f in cls]}")


_FAMILY_CODE = {
    ModelFamily.ESCAV_AR: K.FAM_ESCAV_AR,
    ModelFamily.ESCAV_EXP: K.FAM_ESCAV_EXP,
    ModelFamily.REESCAV_AR: K.FAM_REESCAV_AR,
    ModelFamily.REESCAV_EXP: K.FAM_REESCAV_EXP,
}

_BETA = ("beta0", "beta1", "beta2")
_MEAS = ("xi", "phi", "tau1", "tau2", "sigma_u")
_PARAM_NAMES = {
    ModelFamily.ESCAV_AR: _BETA + ("gamma0", "gamma1", "gamma2"),
    ModelFamily.ESCAV_EXP: _BETA + ("gamma0",),
    ModelFamily.REESCAV_AR: _BETA + _MEAS + ("gamma0", "gamma1", "gamma2"),
    ModelFamily.REESCAV_EXP: _BETA + _MEAS + ("gamma0",),
}


@dataclass(frozen=True)
class ModelSpec:
    family: ModelFamily
    alpha: float = 0.01

    def __post_init__(self):
        if not isinstance(self.family, ModelFamily):
            object.__setattr__(self, "family", ModelFamily.parse(self.family))
        if not 0.0 < self.alpha < 0.5:
            raise ValueError(f"alpha must be in (0, 0.5), got {self.alpha}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return self.family.param_names


@dataclass(frozen=True)
class ParamVector:
    """Named parameters; fields outside the family's set stay None."""

    beta0: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    xi: float | None = None
    phi: float | None = None
    tau1: float | None = None
    tau2: float | None = None
    sigma_u: float | None = None
    gamma0: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None

    def to_array(self, family: ModelFamily) -> np.ndarray:
        vals = []
        for name in family.param_names:
            v = getattr(self, name)
            if v is None:
                raise ValueError(f"{family.value} requires parameter {name}")
            vals.append(float(v))
        return np.array(vals)

    @classmethod
    def from_array(cls, family: ModelFamily, theta) -> "ParamVector":
        theta = np.asarray(theta, dtype=float)
        names = family.param_names
        if theta.shape != (len(names),):
            raise ValueError(f"{family.value} expects {len(names)} parameters, got {theta.shape}")
        return cls(**dict(zip(names, theta.tolist())))

    def as_dict(self, family: ModelFamily | None = None) -> dict[str, float]:
        names = family.param_names if family else [
            n for n in _PARAM_NAMES[ModelFamily.REESCAV_AR] if getattr(self, n) is not None
        ]
        return {n: float(getattr(self, n)) for n in names}


def theta_valid(family: ModelFamily, theta: np.ndarray) -> bool:
    """Constraint region: the flat prior's support and the estimators' feasible set.

    * AR ES component: gamma0, gamma1, gamma2 >= 0 and gamma2 < 1 (offset
      recursion stationary and non-crossing),
    * return-only families: |beta2| < 1,
    * realized families: |beta2 + beta1*phi| < 1 and sigma_u > 0.
    """
    b2 = theta[2]
    if family is ModelFamily.ESCAV_AR:
        g0, g1, g2 = theta[3], theta[4], theta[5]
        return abs(b2) < 1.0 and g0 >= 0.0 and g1 >= 0.0 and 0.0 <= g2 < 1.0
    if family is ModelFamily.ESCAV_EXP:
        return abs(b2) < 1.0
    phi, sigma_u = theta[4], theta[7]
    if sigma_u <= 0.0 or abs(b2 + theta[1] * phi) >= 1.0:
        return False
    if family is ModelFamily.REESCAV_AR:
        g0, g1, g2 = theta[8], theta[9], theta[10]
        return g0 >= 0.0 and g1 >= 0.0 and 0.0 <= g2 < 1.0
    return True


def validate_params(spec: ModelSpec, params: ParamVector) -> None:
    """Raise ValueError when params violate the family's constraint region."""
    theta = params.to_array(spec.family)
    if not np.all(np.isfinite(theta)):
        raise ValueError(f"non-finite parameter in {params}")
    if not theta_valid(spec.family, theta):
        raise ValueError(f"parameters violate the {spec.family.value} constraint region")


@dataclass(frozen=True)
class InitPolicy:
    """Recursion initialization.

    q1 defaults to the empirical alpha-quantile of the in-sample returns
    (numpy linear interpolation); x1 defaults to gamma0 for the AR ES
    families. The mean-square of the multiplicative errors is recomputed over
    the whole sample inside each filter pass, so the likelihood stays a pure
    function of the parameters.
    """

    q1: float | None = None
    x1: float | None = None

    def resolve_q1(self, alpha: float, returns: np.ndarray) -> float:
        if self.q1 is not None:
            return float(self.q1)
        return float(np.quantile(returns, alpha))

    def resolve_x1(self) -> float:
        # nan tells the kernels to start the offset recursion at gamma0
        return float(self.x1) if self.x1 is not None else math.nan


@dataclass(frozen=True)
class FilterOutput:
    """In-sample paths implied by one parameter point."""

    q: np.ndarray
    es: np.ndarray
    x: np.ndarray
    eps: np.ndarray | None = None
    u: np.ndarray | None = None
    eps2bar: float | None = None


def as_arrays(data) -> tuple[np.ndarray, np.ndarray]:
    """(returns, measures) as float arrays from a DailyRecord sequence."""
    r = np.array([rec.ret for rec in data], dtype=float)
    x = np.array([rec.measure for rec in data], dtype=float)
    return r, x


def filter_paths(
    spec: ModelSpec, params: ParamVector, data, init: InitPolicy = InitPolicy()
) -> FilterOutput:
    """Run the deterministic recursions over aligned daily records.

    Returns the implied quantile path, ES path, ES state, and for the
    realized families the multiplicative errors, their mean square and the
    measurement residuals. Raises DegenerateQuantileError when |Q_t| < 1e-8.
    """
    validate_params(spec, params)
    r, x = as_arrays(data)
    if r.size == 0:
        raise ValueError("data must be non-empty")
    fam = spec.family
    theta = params.to_array(fam)
    q1 = init.resolve_q1(spec.alpha, r)
    driver = np.abs(r) if not fam.uses_measure else x
    q = K.quantile_path(driver, theta[0], theta[1], theta[2], q1)
    if np.min(np.abs(q)) < K.DEGENERATE_Q:
        raise DegenerateQuantileError(
            f"min |Q_t| = {np.min(np.abs(q)):.3g} < {K.DEGENERATE_Q:g}"
        )
    if fam.es_kind == "ar":
        g0, g1, g2 = params.gamma0, params.gamma1, params.gamma2
        x1 = init.resolve_x1()
        state = K.ar_offset_path(r, q, g0, g1, g2, g0 if math.isnan(x1) else x1)
        es = q - state
    else:
        state = np.full(r.size, 1.0 + math.exp(params.gamma0))
        es = state * q
    if not fam.uses_measure:
        return FilterOutput(q=q, es=es, x=state)
    eps, eps2bar = K.eps_mean_sq(r, q)
    u = K.measurement_residuals(x, q, eps, eps2bar, params.xi, params.phi, params.tau1, params.tau2)
    return FilterOutput(q=q, es=es, x=state, eps=eps, u=u, eps2bar=float(eps2bar))


def forecast_one(
    spec: ModelSpec, params: ParamVector, data, init: InitPolicy = InitPolicy()
) -> tuple[float, float]:
    """One-step-ahead (VaR, ES) after filtering the full in-sample window."""
    validate_params(spec, params)
    r, x = as_arrays(data)
    if r.size == 0:
        raise ValueError("data must be non-empty")
    theta = params.to_array(spec.family)
    q1 = init.resolve_q1(spec.alpha, r)
    driver = x if spec.family.uses_measure else np.abs(r)
    q = K.quantile_path(driver, theta[0], theta[1], theta[2], q1)
    if np.min(np.abs(q)) < K.DEGENERATE_Q:
        raise DegenerateQuantileError(
            f"min |Q_t| = {np.min(np.abs(q)):.3g} < {K.DEGENERATE_Q:g}"
        )
    var, es = K.forecast_next(spec.family.code, theta, r, x, spec.alpha, q1, init.resolve_x1())
    return float(var), float(es)
