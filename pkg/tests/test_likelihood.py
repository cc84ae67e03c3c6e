import math

import numpy as np
import pytest

from conftest import make_records, random_valid_params
from oracles import naive_al_loglik, naive_composite
from tailrisk.likelihood import al_loglik, composite_loglik
from tailrisk.models import InitPolicy, ModelFamily, ModelSpec, ParamVector, filter_paths

ALPHA = 0.01


def random_tuples(rng, n):
    """(r, q, es) with es < min(q, 0), the valid region of the AL density."""
    q = -np.abs(rng.normal(1.0, 0.5, n)) - 0.05
    es = q - np.abs(rng.normal(0.3, 0.2, n)) - 0.01
    r = rng.normal(0, 1.0, n)
    return r, q, es


class TestAlLoglik:
    def test_single_observation_frozen(self):
        # hand evaluation: log(0.99/2.5) + (-0.5)(0.01-1)/(0.01*-2.5)
        ll = al_loglik([-2.0], [-1.5], [-2.5], 0.01)
        assert ll == pytest.approx(-20.726341067727653, abs=1e-12)

    def test_r_equal_q_leaves_log_terms(self, rng):
        _, q, es = random_tuples(rng, 50)
        ll = al_loglik(q, q, es, ALPHA)
        expected = np.sum(np.log((ALPHA - 1.0) / es))
        assert ll == pytest.approx(expected, rel=1e-12)

    def test_matches_scalar_oracle(self, rng):
        r, q, es = random_tuples(rng, 500)
        ll = al_loglik(r, q, es, ALPHA)
        assert ll == pytest.approx(naive_al_loglik(r, q, es, ALPHA), abs=1e-10)

    def test_nonnegative_es_invalid(self, rng):
        r, q, es = random_tuples(rng, 20)
        es[7] = 0.0
        assert al_loglik(r, q, es, ALPHA) == -math.inf

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            al_loglik([0.1], [-1.0, -1.0], [-1.5, -1.5], ALPHA)


class TestCompositeLoglik:
    def test_escav_measurement_part_zero(self, rng):
        data = make_records(rng.normal(0, 0.6, 150))
        spec = ModelSpec(ModelFamily.ESCAV_EXP, ALPHA)
        p = ParamVector(beta0=-0.05, beta1=-0.2, beta2=0.8, gamma0=-1.5)
        ll = composite_loglik(spec, p, data)
        assert ll.measurement_part == 0.0
        assert ll.total == ll.al_part

    def test_zero_residuals_at_gaussian_mode(self, rng):
        # tau = phi = 0 and X_t = xi makes every residual vanish
        n = 120
        r = rng.normal(0, 0.6, n)
        data = make_records(r, np.full(n, 0.25))
        spec = ModelSpec(ModelFamily.REESCAV_EXP, ALPHA)
        p = ParamVector(beta0=-0.05, beta1=-0.2, beta2=0.8, xi=0.25, phi=0.0,
                        tau1=0.0, tau2=0.0, sigma_u=1.0, gamma0=-1.5)
        ll = composite_loglik(spec, p, data)
        assert ll.measurement_part == pytest.approx(-n / 2 * math.log(2 * math.pi), rel=1e-14)

    @pytest.mark.parametrize("family", list(ModelFamily), ids=[f.value for f in ModelFamily])
    def test_matches_oracle(self, family, rng):
        spec = ModelSpec(family, ALPHA)
        for _ in range(10):
            n = 150
            r = rng.normal(0, 0.6, n)
            x = np.abs(rng.normal(0.5, 0.15, n)) + 0.01
            data = make_records(r, x)
            params = random_valid_params(family, rng)
            ll = composite_loglik(spec, params, data)
            if ll.total == -math.inf:
                continue
            name = family.value.replace("re-es-caviar", "reescav").replace("es-caviar", "escav")
            total, al, meas = naive_composite(name, params.as_dict(family), r, x, ALPHA,
                                              float(np.quantile(r, ALPHA)))
            assert ll.total == pytest.approx(total, abs=1e-10)
            assert ll.al_part == pytest.approx(al, abs=1e-10)
            assert ll.measurement_part == pytest.approx(meas, abs=1e-10)
            assert ll.total == pytest.approx(ll.al_part + ll.measurement_part, abs=1e-12)

    def test_invalid_point_is_minus_inf(self, rng):
        data = make_records(rng.normal(0, 0.6, 100))
        spec = ModelSpec(ModelFamily.ESCAV_AR, ALPHA)
        p = ParamVector(beta0=-0.05, beta1=-0.2, beta2=0.8, gamma0=-0.2, gamma1=0.1, gamma2=0.1)
        ll = composite_loglik(spec, p, data)
        assert ll.total == -math.inf and ll.al_part == -math.inf and ll.measurement_part == 0.0

    def test_sigma_u_nonpositive_invalid(self, rng):
        n = 100
        data = make_records(rng.normal(0, 0.6, n), np.abs(rng.normal(0.5, 0.1, n)))
        spec = ModelSpec(ModelFamily.REESCAV_EXP, ALPHA)
        p = ParamVector(beta0=-0.05, beta1=-0.2, beta2=0.8, xi=0.1, phi=0.4, tau1=0.0,
                        tau2=0.0, sigma_u=0.0, gamma0=-1.9)
        assert composite_loglik(spec, p, data).total == -math.inf

    def test_constant_es_grid_optimum(self, rng):
        # with Q fixed and ES = -c constant, the AL likelihood peaks at
        # c* = mean((r - Q)(alpha - I)/alpha)
        n = 400
        r = rng.normal(0, 1.0, n)
        q = np.full(n, float(np.quantile(r, ALPHA)))
        a_term = (r - q) * (ALPHA - (r <= q)) / ALPHA
        c_star = a_term.mean()
        grid = np.linspace(0.2 * c_star, 3.0 * c_star, 401)
        vals = [al_loglik(r, q, np.full(n, -c), ALPHA) for c in grid]
        c_hat = grid[int(np.argmax(vals))]
        assert c_hat == pytest.approx(c_star, rel=0.02)

    def test_measurement_gradient_matches_finite_differences(self, rng):
        # smooth in (xi, phi, tau1, tau2, sigma_u) at fixed paths
        n = 300
        r = rng.normal(0, 0.6, n)
        x = np.abs(rng.normal(0.5, 0.15, n)) + 0.01
        data = make_records(r, x)
        spec = ModelSpec(ModelFamily.REESCAV_EXP, ALPHA)
        p = ParamVector(beta0=-0.05, beta1=-0.2, beta2=0.8, xi=0.1, phi=0.4, tau1=0.05,
                        tau2=0.1, sigma_u=0.3, gamma0=-1.9)
        out = filter_paths(spec, p, data)
        u, eps, e2 = out.u, out.eps, out.eps2bar
        s = p.sigma_u
        analytic = {
            "xi": np.sum(u) / s**2,
            "phi": np.sum(u * np.abs(out.q)) / s**2,
            "tau1": np.sum(u * eps) / s**2,
            "tau2": np.sum(u * (eps**2 - e2)) / s**2,
            "sigma_u": -n / s + np.sum(u**2) / s**3,
        }
        h = 1e-6
        for name, grad in analytic.items():
            up = composite_loglik(spec, _bump(p, name, +h), data).measurement_part
            dn = composite_loglik(spec, _bump(p, name, -h), data).measurement_part
            fd = (up - dn) / (2 * h)
            assert fd == pytest.approx(grad, rel=1e-5, abs=1e-7)


def _bump(p: ParamVector, name: str, h: float) -> ParamVector:
    from dataclasses import replace

    return replace(p, **{name: getattr(p, name) + h})
