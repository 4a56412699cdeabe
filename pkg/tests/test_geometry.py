import itertools
import math

import numpy as np
import pytest

from hypgraph.errors import InvalidSigma, NonPositiveHeight
from hypgraph.geometry import (
    TOLERANCES,
    CurvatureParams,
    GraphPointData,
    cofactor_matrix,
    det,
    horizontal_curvature,
    matmul,
    metric_and_gamma,
    normalized_sym,
    normalized_sym_gradient,
    operator_derivatives,
    operator_Qbar,
    vertical_curvature,
)


def elementary(k, vals):
    return sum(math.prod(c) for c in itertools.combinations(vals, k)) / math.comb(len(vals), k)


@pytest.mark.parametrize("bad", [0.0, 1.0, 1.2, -0.3])
def test_sigma_range(bad):
    with pytest.raises(InvalidSigma):
        CurvatureParams(2, 0, bad)


def test_l_range():
    with pytest.raises(ValueError):
        CurvatureParams(2, 2, 0.5)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_normalized_sym_matches_eigenvalues(n, rng):
    A = rng.standard_normal((n, n))
    A = A + A.T
    lam = np.linalg.eigvalsh(A)
    for k in range(n + 1):
        assert normalized_sym(k, A.tolist()) == pytest.approx(elementary(k, lam), abs=1e-12)


def test_normalized_sym_gradient_finite_difference(rng):
    n = 3
    A = rng.standard_normal((n, n))
    for k in range(1, n + 1):
        grad = np.array(normalized_sym_gradient(k, A.tolist()))
        fd = np.zeros((n, n))
        h = 1e-6
        for i in range(n):
            for j in range(n):
                E = np.zeros((n, n))
                E[i, j] = h
                fd[i, j] = (normalized_sym(k, (A + E).tolist()) - normalized_sym(k, (A - E).tolist())) / (2 * h)
        assert np.allclose(grad, fd, atol=1e-8)


def test_det_and_cofactor(rng):
    A = rng.standard_normal((4, 4))
    assert det(A.tolist()) == pytest.approx(np.linalg.det(A), rel=1e-12)
    cof = np.array(cofactor_matrix(A.tolist()))
    assert np.allclose(cof, np.linalg.det(A) * np.linalg.inv(A).T)


@pytest.mark.parametrize("n", [2, 3])
def test_gamma_is_square_root_of_metric(n, rng):
    du = rng.standard_normal(n)
    w, up, down = metric_and_gamma(list(du))
    up, down = np.array(up), np.array(down)
    assert w == pytest.approx(math.sqrt(1 + du @ du))
    assert np.abs(up @ down - np.eye(n)).max() < TOLERANCES.gamma_roundtrip
    assert np.allclose(down @ down, np.eye(n) + np.outer(du, du))


def test_horosphere_has_unit_curvatures():
    # x_{n+1} = 0.7 everywhere
    data = GraphPointData(0.7, [0.0, 0.0], [[0.0, 0.0], [0.0, 0.0]], None)
    res = horizontal_curvature(data)
    assert np.allclose(res.kappa, 1.0)


def test_horizontal_relation_between_curvatures(rng):
    grad = list(0.3 * rng.standard_normal(2))
    H = rng.standard_normal((2, 2))
    H = (H + H.T).tolist()
    f = 0.4
    res = horizontal_curvature(GraphPointData(f, grad, H, None))
    w = math.sqrt(1 + sum(g * g for g in grad))
    assert np.allclose(np.sort(res.kappa), np.sort(f * np.array(res.kappa_E) + 1 / w))


def test_horizontal_needs_positive_height():
    with pytest.raises(NonPositiveHeight):
        horizontal_curvature(GraphPointData(0.0, [0.0], [[0.0]], None))


def test_vertical_negative_height():
    with pytest.raises(NonPositiveHeight):
        vertical_curvature(GraphPointData(0.0, [0.0, -1.0], [[0.0, 0.0], [0.0, 0.0]], -0.1), CurvatureParams(2, 0, 0.5))


def test_tilted_plane_curvature_matrix():
    s = 0.6
    p = CurvatureParams(2, 1, s)
    slope = 0.3
    c1 = -s * math.sqrt((1 + slope**2) / (1 - s * s))
    data = GraphPointData(0.0, [slope, c1], [[0.0, 0.0], [0.0, 0.0]], 0.2)
    res = vertical_curvature(data, p)
    assert np.allclose(res.M, -c1 * np.eye(2))
    w = math.sqrt(1 + slope**2 + c1**2)
    assert np.allclose(res.kappa, -c1 / w)
    assert np.allclose(res.kappa, s)
    assert abs(operator_Qbar(data, p)) < 1e-14


def random_data(n, rng, t=0.3):
    grad = list(0.3 * rng.standard_normal(n))
    grad[-1] = -0.8 + 0.1 * rng.standard_normal()
    H = 0.5 * rng.standard_normal((n, n))
    H = ((H + H.T) / 2).tolist()
    return GraphPointData(0.0, grad, H, t)


@pytest.mark.parametrize("n,l", [(2, 0), (2, 1), (3, 0), (3, 1), (3, 2)])
def test_operator_derivatives_match_finite_differences(n, l, rng):
    p = CurvatureParams(n, l, 0.6)
    data = random_data(n, rng)
    Q, dH, dp = operator_derivatives(data, p)
    assert Q == pytest.approx(operator_Qbar(data, p), abs=1e-14)
    h = 1e-6
    for r in range(n):
        g1, g2 = list(data.gradient), list(data.gradient)
        g1[r] += h
        g2[r] -= h
        fd = (operator_Qbar(GraphPointData(0.0, g1, data.hessian, data.height), p) - operator_Qbar(GraphPointData(0.0, g2, data.hessian, data.height), p)) / (2 * h)
        assert dp[r] == pytest.approx(fd, abs=1e-7)
    for i in range(n):
        for j in range(n):
            H1 = np.array(data.hessian, dtype=float)
            H2 = H1.copy()
            H1[i, j] += h
            H2[i, j] -= h
            fd = (operator_Qbar(GraphPointData(0.0, data.gradient, H1.tolist(), data.height), p) - operator_Qbar(GraphPointData(0.0, data.gradient, H2.tolist(), data.height), p)) / (2 * h)
            assert dH[i][j] == pytest.approx(fd, abs=1e-7)


@pytest.mark.parametrize("n,l", [(2, 0), (2, 1), (3, 1)])
def test_time_coefficient_on_flat_plane(n, l):
    s = 0.6
    p = CurvatureParams(n, l, s)
    c1 = -s / math.sqrt(1 - s * s)
    grad = [0.0] * (n - 1) + [c1]
    zero = [[0.0] * n for _ in range(n)]
    _, dH, dp = operator_derivatives(GraphPointData(0.0, grad, zero, 1e-8), p)
    expected = -(n - l) * (1 - s * s) * abs(c1) ** (n - 1)
    assert dp[-1] == pytest.approx(expected, rel=1e-12)
    # second-order coefficients carry an explicit factor t
    _, dH2, _ = operator_derivatives(GraphPointData(0.0, grad, zero, 2e-8), p)
    assert dH2[-1][-1] == pytest.approx(2 * dH[-1][-1], rel=1e-12)


def test_operator_is_vectorized(rng):
    p = CurvatureParams(2, 1, 0.6)
    pts = [random_data(2, rng) for _ in range(4)]
    grad = [np.array([d.gradient[k] for d in pts]) for k in range(2)]
    H = [[np.array([d.hessian[i][j] for d in pts]) for j in range(2)] for i in range(2)]
    vec = operator_Qbar(GraphPointData(0.0, grad, H, 0.3), p)
    assert np.allclose(vec, [operator_Qbar(d, p) for d in pts])


def test_matmul_nested():
    A = [[1.0, 2.0], [3.0, 4.0]]
    assert matmul(A, A) == [[7.0, 10.0], [15.0, 22.0]]
