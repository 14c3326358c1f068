import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from timedelay.errors import ConstraintError, DomainError
from timedelay.localisation import (eval_f, eval_Ff, eval_grad_Rf, eval_Rf, make_profile,
                                    smooth_step, smooth_step_derivative)
from timedelay.quadrature import batch_integrate, trapezoid_weights

radii_pairs = st.tuples(st.floats(0.1, 5.0), st.floats(1.05, 4.0)).map(lambda t: (t[0], t[0] * t[1]))
nonzero = st.floats(0.05, 20.0) | st.floats(-20.0, -0.05)


def quad_Rf(p, x):
    """Direct quadrature of the defining integral, split at the kinks."""
    rho = abs(x)
    f = lambda mu: p.radial(mu * rho)
    chi = lambda mu: 1.0 if mu <= 1.0 else 0.0
    pts = sorted({p.plateau_radius / rho, p.support_radius / rho, 1.0})
    top = max(pts) * 2
    edges = [0.0] + pts + [top]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += quad(lambda mu: (f(mu) - chi(mu)) / mu if mu > 0 else 0.0, a, b,
                          epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return total


def quad_Ff(p, x):
    rho = abs(x)
    b = p.support_radius / rho
    return 2 * quad(lambda mu: float(p.radial(mu * rho)), 0.0, b, epsabs=1e-13, epsrel=1e-13,
                    limit=200)[0]


class TestProfile:
    def test_plateau_and_support(self):
        p = make_profile(1.0, 2.0)
        assert eval_f(p, 0.0) == 1.0
        assert eval_f(p, 1.0) == 1.0
        assert eval_f(p, -2.0) == 0.0
        assert eval_f(p, 5.0) == 0.0
        assert 0.0 < eval_f(p, 1.5) < 1.0

    @pytest.mark.parametrize("a,b", [(2.0, 1.0), (1.0, 1.0), (-1.0, 2.0), (0.0, 1.0), (np.nan, 2.0)])
    def test_invalid_radii(self, a, b):
        with pytest.raises(ConstraintError):
            make_profile(a, b)

    def test_smooth_step_is_monotone_and_symmetric(self):
        u = np.linspace(-0.5, 1.5, 2001)
        s = smooth_step(u)
        assert np.all(np.diff(s) >= 0)
        assert np.allclose(s + smooth_step(1 - u), 1.0, atol=1e-15)
        assert smooth_step(0.5) == pytest.approx(0.5)

    def test_smooth_step_derivative_matches_differences(self):
        u = np.linspace(0.02, 0.98, 97)
        h = 1e-6
        fd = (smooth_step(u + h) - smooth_step(u - h)) / (2 * h)
        assert np.allclose(smooth_step_derivative(u), fd, atol=1e-7)

    @given(radii_pairs, st.floats(0.0, 10.0))
    def test_profile_is_bounded(self, ab, s):
        p = make_profile(*ab)
        v = eval_f(p, s)
        assert 0.0 <= v <= 1.0

    def test_multidimensional_profile_is_radial(self):
        p = make_profile(1.0, 2.0, dimension=3)
        x = np.array([[1.2, 0.5, -0.3]])
        rot = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert eval_f(p, x) == pytest.approx(eval_f(p, x @ rot.T))
        assert eval_Ff(p, x) == pytest.approx(eval_Ff(p, x @ rot.T), rel=1e-12)
        with pytest.raises(DomainError):
            eval_f(p, np.array([1.0, 2.0]))


class TestDerivedFunctions:
    @pytest.mark.parametrize("x", [0.3, 1.0, 1.7, 2.5, -0.8, -4.0])
    def test_Rf_matches_scipy_quad(self, x):
        p = make_profile(1.0, 2.0)
        assert eval_Rf(p, x) == pytest.approx(quad_Rf(p, x), abs=1e-9)

    @pytest.mark.parametrize("x", [0.3, 1.0, 1.7, 2.5, -0.8, -4.0])
    def test_Ff_matches_scipy_quad(self, x):
        p = make_profile(1.0, 2.0)
        assert eval_Ff(p, x) == pytest.approx(quad_Ff(p, x), rel=1e-10)

    def test_Ff_closed_form_for_linear_average(self):
        # int h(|mu|) dmu over R for the symmetric step equals a + b
        p = make_profile(1.0, 2.0)
        assert eval_Ff(p, 1.0) == pytest.approx(3.0, rel=1e-12)
        p = make_profile(0.5, 3.0)
        assert eval_Ff(p, 1.0) == pytest.approx(3.5, rel=1e-12)

    @pytest.mark.parametrize("fn", [eval_Rf, eval_Ff, eval_grad_Rf])
    def test_origin_raises(self, fn):
        with pytest.raises(DomainError):
            fn(make_profile(1.0, 2.0), 0.0)

    @given(radii_pairs, nonzero, st.floats(0.1, 10.0))
    def test_log_scaling(self, ab, x, t):
        p = make_profile(*ab)
        assert eval_Rf(p, t * x) == pytest.approx(eval_Rf(p, x) - np.log(t), abs=1e-8)

    @given(radii_pairs, nonzero, st.floats(0.1, 10.0))
    def test_Ff_homogeneity(self, ab, x, t):
        p = make_profile(*ab)
        assert eval_Ff(p, x) == pytest.approx(t * eval_Ff(p, t * x), rel=1e-10)

    @given(radii_pairs, nonzero)
    def test_gradient_quadrature_agrees_with_closed_form(self, ab, x):
        p = make_profile(*ab)
        closed = eval_grad_Rf(p, x)
        assert x * closed == pytest.approx(-1.0, abs=1e-12)
        assert eval_grad_Rf(p, x, method="quadrature") == pytest.approx(closed, rel=1e-8)

    def test_Rf_is_profile_dependent_but_gradient_is_not(self):
        p1, p2 = make_profile(1.0, 2.0), make_profile(1.0, 3.0)
        assert eval_Rf(p1, 1.0) != pytest.approx(eval_Rf(p2, 1.0))
        assert eval_grad_Rf(p1, 1.3) == eval_grad_Rf(p2, 1.3)

    def test_vectorised_shapes(self):
        p = make_profile(1.0, 2.0)
        x = np.linspace(0.1, 3.0, 12).reshape(3, 4)
        assert eval_Rf(p, x).shape == (3, 4)
        assert eval_Ff(p, x).shape == (3, 4)
        assert np.ndim(eval_Rf(p, 0.5)) == 0


class TestQuadrature:
    def test_batch_integrate_polynomials_and_oscillations(self):
        lo = np.array([0.0, 0.0, -1.0])
        hi = np.array([1.0, np.pi, 2.0])
        k = np.array([0.0, 7.0, 3.0])

        def func(x, rows):
            return np.cos(k[rows, None] * x) + x ** 3

        val, err = batch_integrate(func, lo, hi, tol=1e-13)
        exact = [quad(lambda x, kk=kk: np.cos(kk * x) + x ** 3, a, b, epsabs=1e-14)[0]
                 for a, b, kk in zip(lo, hi, k)]
        assert np.allclose(val, exact, atol=1e-12)
        assert np.all(err <= 1e-13)

    def test_empty_interval(self):
        val, err = batch_integrate(lambda x, rows: np.ones_like(x), [1.0], [1.0])
        assert val[0] == 0.0 and err[0] == 0.0

    def test_trapezoid_weights(self):
        w = trapezoid_weights(5, 0.5)
        assert np.allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])
        assert w @ np.linspace(0, 2, 5) == pytest.approx(2.0)
