import math

import numpy as np
import pytest

from cvthdmr.cut_hdmr import ModelOracle, build_expansion, select_nodes
from cvthdmr.errors import ParameterError, UnsupportedMethodError
from cvthdmr.multi_anchor import CvtHdmrModel
from cvthdmr.parameter_space import ProductDensity
from cvthdmr.problems import quadrature_oracle, quadrature_test
from cvthdmr.quadrature import (error_stats, error_stats_from_responses, halton_uniform, integrate_orders,
                                integrate_surrogate, qmc_points, reference_integral, relative_integral_error,
                                relative_squared_errors)

UNIFORM = ProductDensity.uniform(0, 1)


def truncated_integral(p, r):
    """Closed form for the product test function expanded at the box centre."""
    A, B = 0.5 ** (1 / p), p / (p + 1)
    return (1 + 1 / p) ** p * sum(math.comb(p, s) * A ** (p - s) * (B - A) ** s for s in range(r + 1))


def test_halton_first_points():
    h = halton_uniform(2, 3)
    assert np.allclose(h, [[0.5, 1 / 3], [0.25, 2 / 3], [0.75, 1 / 9]], atol=1e-15)
    assert np.array_equal(halton_uniform(3, 4, start=5), halton_uniform(3, 8)[4:])


def test_qmc_points_read_only_and_cached():
    a = qmc_points(ProductDensity.normal(), 2, 1024)
    assert a is qmc_points(ProductDensity.normal(), 2, 1024)
    assert np.all(np.isfinite(a))
    with pytest.raises(ValueError):
        a[0, 0] = 1.0


def test_constant_surrogate():
    const = lambda X: np.full(X.shape[0], 3.25)  # noqa: E731
    for d in (UNIFORM, ProductDensity.beta_law(0.9, 1.3), ProductDensity.normal()):
        assert integrate_surrogate(const, d, p=3, n_points=4096)[0] == pytest.approx(3.25, rel=1e-15)
    assert reference_integral(const, UNIFORM, 2, n_points=2048).value[0] == pytest.approx(3.25, rel=1e-15)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_truncated_closed_form(r):
    p = 6
    e = build_expansion(quadrature_oracle(p), np.full(p, 0.5), None, r, explicit=True)
    got = integrate_surrogate(e, UNIFORM, n_points=2**16)[0]
    # the x^(1/p) cusp at 0 slows QMC to about n^-0.9; 2^16 points give ~3e-4
    assert got == pytest.approx(truncated_integral(p, r), rel=1e-3)


def test_first_order_centre_value():
    assert truncated_integral(6, 1) == pytest.approx(0.9742, abs=1e-4)
    assert relative_integral_error(1.0, truncated_integral(6, 1)) == pytest.approx(2.58e-2, abs=1e-4)


def test_integrate_orders_cumulative():
    p = 4
    e = build_expansion(quadrature_oracle(p), np.full(p, 0.5), None, 3, explicit=True)
    m = CvtHdmrModel([e])
    parts = integrate_orders(m, UNIFORM, n_points=2**14)
    cum = np.cumsum(parts, axis=0)[:, 0]
    for r in (1, 2, 3):
        assert cum[r] == pytest.approx(truncated_integral(p, r), rel=2e-3)
    assert cum[3] == pytest.approx(integrate_surrogate(m, UNIFORM, n_points=2**14)[0], rel=1e-13)


def test_relative_integral_error():
    assert relative_integral_error(1.0, 1.0) == 0.0
    assert relative_integral_error(1.0, 0.9) == pytest.approx(0.1, abs=1e-15)
    assert relative_integral_error(-2.0, -1.8) == pytest.approx(0.1, abs=1e-15)
    assert relative_integral_error(7.3, 6.1) == pytest.approx(relative_integral_error(7.3e5, 6.1e5), rel=1e-14)
    with pytest.raises(ZeroDivisionError):
        relative_integral_error(0.0, 1.0)


def test_linearity():
    f = lambda X: np.sin(X).sum(axis=1)  # noqa: E731
    g = lambda X: np.prod(X, axis=1) ** 2  # noqa: E731
    I1 = integrate_surrogate(f, UNIFORM, p=3, n_points=8192)
    I2 = integrate_surrogate(g, UNIFORM, p=3, n_points=8192)
    I = integrate_surrogate(lambda X: 2.5 * f(X) - 0.7 * g(X), UNIFORM, p=3, n_points=8192)
    assert np.allclose(I, 2.5 * I1 - 0.7 * I2, rtol=1e-10, atol=0)


def test_per_term_tensor_matches_qmc():
    poly = lambda X: 1 + X[:, 0] * X[:, 1] ** 2 + 3 * X[:, 2] ** 3 - X[:, 0] * X[:, 1] * X[:, 2]  # noqa: E731
    anchor = np.array([0.4, 0.6, 0.3])
    nodes = [select_nodes(0, 1, a, 5, i) for i, a in enumerate(anchor)]
    e = build_expansion(ModelOracle(poly, 3), anchor, nodes, 3)
    tensor = integrate_surrogate(e, UNIFORM, method="per-term-tensor")
    q = integrate_surrogate(e, UNIFORM, n_points=2**16)
    exact = 1 + 1 / 6 + 3 / 4 - 1 / 8
    assert tensor[0] == pytest.approx(exact, rel=1e-12)
    assert q[0] == pytest.approx(tensor[0], rel=1e-3)


def test_per_term_tensor_rejections():
    e = build_expansion(ModelOracle(lambda X: X.sum(axis=1), 4), np.full(4, 0.5),
                        [select_nodes(0, 1, 0.5, 3, i) for i in range(4)], 4)
    with pytest.raises(UnsupportedMethodError):
        integrate_surrogate(e, UNIFORM, method="per-term-tensor")
    e1 = build_expansion(ModelOracle(lambda X: X.sum(axis=1), 2), np.full(2, 0.5),
                         [select_nodes(0, 1, 0.5, 3, i) for i in range(2)], 1)
    with pytest.raises(UnsupportedMethodError):
        integrate_surrogate(e1, ProductDensity.beta_law(2, 2), method="per-term-tensor")
    with pytest.raises(UnsupportedMethodError):
        integrate_surrogate(lambda X: X[:, 0], UNIFORM, method="per-term-tensor", p=2)
    with pytest.raises(ParameterError):
        integrate_surrogate(e1, UNIFORM, method="simpson")
    with pytest.raises(ParameterError):
        integrate_surrogate(lambda X: X[:, 0], UNIFORM)


@pytest.mark.slow
def test_reference_integral_uniform():
    ref = reference_integral(lambda X: quadrature_test(X, 6), UNIFORM, 6)
    assert ref.value[0] == pytest.approx(1.0, abs=2e-4)
    assert ref.discrepancy < 5e-4


def test_reference_integral_validation():
    with pytest.raises(ParameterError):
        reference_integral(lambda X: X[:, 0], UNIFORM, 1, n_points=7)


# -- error statistics ------------------------------------------------------------------


def test_error_stats_exact_surrogate():
    T = np.random.default_rng(0).uniform(0, 1, (200, 3))
    f = lambda X: np.stack([X.sum(axis=1), np.cos(X[:, 0])], axis=1)  # noqa: E731
    rep = error_stats(f, f, T, method="exact")
    assert rep.E == 0.0 and rep.V == 0.0 and rep.n_samples == 200 and rep.method == "exact"


def test_error_stats_constant_offset_unit_norm():
    theta = np.random.default_rng(1).uniform(0, 2 * np.pi, 100)
    truth = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    delta = np.array([0.03, -0.04])
    rep = error_stats_from_responses(truth, truth + delta)
    assert rep.E == pytest.approx(0.05 ** 2, rel=1e-12)
    assert rep.V == pytest.approx(0.0, abs=1e-20)


def test_zero_norm_samples_excluded():
    truth = np.array([[1.0], [0.0], [2.0]])
    rho, excluded = relative_squared_errors(truth, np.array([[1.1], [0.5], [2.0]]))
    assert excluded == 1 and np.allclose(rho, [0.01, 0.0])
    rep = error_stats_from_responses(truth, np.array([[1.1], [0.5], [2.0]]))
    assert rep.excluded == 1 and rep.n_samples == 2
    with pytest.raises(ParameterError):
        error_stats_from_responses(np.zeros((3, 1)), np.ones((3, 1)))


def test_error_stats_properties_and_determinism():
    rng = np.random.default_rng(2)
    truth = rng.normal(size=(500, 4))
    approx = truth + 0.1 * rng.normal(size=(500, 4))
    a = error_stats_from_responses(truth, approx)
    b = error_stats_from_responses(truth.copy(), approx.copy())
    assert (a.E, a.V) == (b.E, b.V)
    rho, _ = relative_squared_errors(truth, approx)
    assert a.E >= 0 and a.V >= 0 and a.E ** 2 <= np.mean(rho ** 2)
    assert a.V == pytest.approx(np.var(rho, ddof=1), rel=1e-14)
