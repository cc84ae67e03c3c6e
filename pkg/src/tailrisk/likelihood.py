"""Likelihood evaluation for the joint VaR/ES regression families.

The asymmetric Laplace part is

    sum_t [ log((alpha-1)/ES_t) + (r_t - Q_t)(alpha - I(r_t <= Q_t)) / (alpha ES_t) ],

computed as log(1-alpha) - log(-ES_t) for the first term to keep precision at
tiny |ES|. The realized families add the Gaussian measurement term
-0.5 * sum_t [log 2pi + log sigma_u^2 + u_t^2 / sigma_u^2].

Invalid parameter points (constraint violations, degenerate quantile path,
non-negative ES, non-positive sigma_u) yield a -inf sentinel rather than an
exception, which keeps accept/reject and penalty logic trivial for the
estimators. The total AL part equals the negative of the joint scoring rule
in :mod:`tailrisk.scoring`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .models import InitPolicy, ModelSpec, ParamVector, as_arrays, theta_valid


@dataclass(frozen=True)
class LogLik:
    total: float
    al_part: float
    measurement_part: float


INVALID = LogLik(-math.inf, -math.inf, 0.0)


def al_loglik(returns, var_path, es_path, alpha: float) -> float:
    """AL log-likelihood of returns given quantile and ES paths.

    Returns -inf when any ES_t is non-negative.
    """
    r = np.asarray(returns, dtype=float)
    q = np.asarray(var_path, dtype=float)
    es = np.asarray(es_path, dtype=float)
    if not (r.shape == q.shape == es.shape):
        raise ValueError("returns, var_path and es_path must have equal length")
    return float(K.al_sum(r, q, es, alpha))


def composite_loglik(
    spec: ModelSpec,
    params: ParamVector,
    data,
    init: InitPolicy = InitPolicy(),
) -> LogLik:
    """Full log-likelihood; AL part plus the Gaussian measurement part.

    The measurement part is identically zero for the return-only families.
    """
    fam = spec.family
    try:
        theta = params.to_array(fam)
    except ValueError:
        return INVALID
    if not np.all(np.isfinite(theta)) or not theta_valid(fam, theta):
        return INVALID
    r, x = as_arrays(data)
    if r.size == 0:
        raise ValueError("data must be non-empty")
    q1 = init.resolve_q1(spec.alpha, r)
    total, al, meas = K.loglik(fam.code, theta, r, x, spec.alpha, q1, init.resolve_x1())
    if total == -math.inf:
        return INVALID
    return LogLik(float(total), float(al), float(meas))


def loglik_fast(family_code: int, theta, r, x, alpha: float, q1: float, x1: float = math.nan) -> float:
    """Raw kernel evaluation for estimator hot loops; no validation."""
    total, _, _ = K.loglik(family_code, theta, r, x, alpha, q1, x1)
    return total
