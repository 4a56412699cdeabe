import math

import numpy as np
import pytest

from hypgraph.barriers import (
    SphereBarrier,
    barrier_derivatives,
    barrier_value,
    horizontal_sphere_derivatives,
    lower_barrier_value,
    perturbed_sphere_problem,
    plane_problem,
    polynomial_problem,
    radius_from_alpha,
    sphere_problem,
    upper_barrier_value,
)
from hypgraph.errors import InvalidSigma, OutsideDomainDisk, OutsideSphere
from hypgraph.geometry import CurvatureParams, GraphPointData, horizontal_curvature, operator_Qbar
from hypgraph.series import TangentialPoly

from conftest import ALPHA, SIGMA, quartic_phi


def test_radius_from_alpha():
    assert radius_from_alpha(0.8, 0.6) == pytest.approx(1.0)
    with pytest.raises(InvalidSigma):
        radius_from_alpha(0.8, 1.0)


def test_barrier_rejects_unknown_kind():
    with pytest.raises(ValueError):
        SphereBarrier("sideways", (0.0,), 0.0, (0.0,), ALPHA, SIGMA)


@pytest.mark.parametrize("kind", ["interior", "exterior"])
def test_horizontal_sphere_has_curvature_sigma(kind, rng):
    b = SphereBarrier(kind, (0.0,), 0.0, (0.0,), ALPHA, SIGMA)
    P = b.center
    if kind == "interior":
        rad = 0.7 * ALPHA * np.sqrt(rng.uniform(size=5))
    else:
        rad = ALPHA + (b.R - ALPHA) * rng.uniform(0.1, 0.8, size=5)
    ang = rng.uniform(0, 2 * np.pi, size=5)
    x = np.array([P[0] + rad * np.cos(ang), P[1] + rad * np.sin(ang)])
    f, grad, hess = horizontal_sphere_derivatives(x, b)
    for k in range(5):
        res = horizontal_curvature(GraphPointData(f[k], list(grad[:, k]), hess[:, :, k].tolist(), None))
        assert np.allclose(res.kappa, SIGMA, atol=1e-12)


def test_horizontal_interior_outside_disk():
    b = SphereBarrier("interior", (0.0,), 0.0, (0.0,), ALPHA, SIGMA)
    with pytest.raises(OutsideDomainDisk):
        horizontal_sphere_derivatives(np.array([[b.center[0] + 1.1 * ALPHA], [b.center[1]]]), b)


@pytest.mark.parametrize("l", [0, 1])
def test_vertical_barriers_solve_the_equation(l):
    p = CurvatureParams(2, l, SIGMA)
    prob = sphere_problem(2, SIGMA, ALPHA)
    y, t = np.meshgrid(np.linspace(-0.3, 0.3, 13), np.linspace(0.02, 0.3, 11), indexing="ij")
    for b in (prob.lower, prob.upper):
        u, g, h = barrier_derivatives([y], t, b)
        q = operator_Qbar(GraphPointData(u, list(g), [list(r) for r in h], t), p)
        assert np.abs(q).max() < 1e-11


def test_barriers_touch_at_tangent_point_and_are_ordered():
    prob = sphere_problem(2, SIGMA, ALPHA)
    assert lower_barrier_value([0.0], 0.0, prob.lower) == pytest.approx(0.0, abs=1e-15)
    assert upper_barrier_value([0.0], 0.0, prob.upper) == pytest.approx(0.0, abs=1e-15)
    y, t = np.meshgrid(np.linspace(-0.3, 0.3, 9), np.linspace(0.0, 0.3, 9), indexing="ij")
    assert np.all(barrier_value([y], t, prob.lower) <= barrier_value([y], t, prob.upper) + 1e-15)


def test_wrong_barrier_kind():
    prob = sphere_problem(2, SIGMA, ALPHA)
    with pytest.raises(ValueError):
        lower_barrier_value([0.0], 0.1, prob.upper)
    with pytest.raises(ValueError):
        upper_barrier_value([0.0], 0.1, prob.lower)


def test_outside_sphere():
    prob = sphere_problem(2, SIGMA, ALPHA)
    with pytest.raises(OutsideSphere):
        barrier_value([0.0], 5.0, prob.lower)


def test_barrier_derivatives_against_finite_differences():
    b = sphere_problem(2, SIGMA, ALPHA).lower
    y0, t0, h = 0.13, 0.21, 1e-5
    u, g, H = barrier_derivatives([y0], t0, b)
    fy = (barrier_value([y0 + h], t0, b) - barrier_value([y0 - h], t0, b)) / (2 * h)
    ft = (barrier_value([y0], t0 + h, b) - barrier_value([y0], t0 - h, b)) / (2 * h)
    assert g[0] == pytest.approx(fy, abs=1e-9)
    assert g[1] == pytest.approx(ft, abs=1e-9)
    fyt = (barrier_derivatives([y0], t0 + h, b)[1][0] - barrier_derivatives([y0], t0 - h, b)[1][0]) / (2 * h)
    assert H[0, 1] == pytest.approx(fyt, abs=1e-8)


def test_barrier_accepts_taylor_arguments():
    b = sphere_problem(2, SIGMA, ALPHA).lower
    Y, T = TangentialPoly.variables((0.1, 0.2), 3)
    poly = barrier_value([Y], T, b)
    u, g, H = barrier_derivatives([0.1], 0.2, b)
    assert poly.coefficient((0, 0)) == pytest.approx(float(u), rel=1e-14)
    assert poly.coefficient((1, 0)) == pytest.approx(float(g[0]), rel=1e-13)
    assert 2 * poly.coefficient((0, 2)) == pytest.approx(float(H[1, 1]), rel=1e-13)


def test_tangent_to_reads_value_and_gradient():
    phi = quartic_phi(2, base=(0.0,))
    prob = polynomial_problem(phi)
    b = SphereBarrier.tangent_to(prob.phi, (0.0,), ALPHA, SIGMA)
    assert b.phi_value == pytest.approx(0.2)
    assert b.boundary_gradient == pytest.approx((0.3,))
    N = b.inner_normal
    assert np.linalg.norm(N) == pytest.approx(1.0)
    # the sphere meets the boundary tangentially at the touching point
    assert barrier_value([0.0], 0.0, b) == pytest.approx(0.2, abs=1e-14)


def test_plane_problem_is_exact(params2):
    prob = plane_problem(2, SIGMA, slope=(0.3,), offset=0.1)
    y, t = np.meshgrid(np.linspace(-0.2, 0.2, 5), np.linspace(0.01, 0.3, 5), indexing="ij")
    u, g, h = prob.derivatives([y], t)
    assert np.allclose(u, 0.1 + 0.3 * y + prob.meta["c1"] * t)
    q = operator_Qbar(GraphPointData(u, list(g), [list(r) for r in h], t), params2)
    assert np.abs(q).max() < 1e-14


def test_perturbed_sphere_data_sit_between_barriers():
    prob = perturbed_sphere_problem(2, SIGMA, ALPHA, 0.2)
    y = np.linspace(-0.3, 0.3, 31)
    t = np.linspace(0.0, 0.3, 31)
    Y, T = np.meshgrid(y, t, indexing="ij")
    data = prob.boundary_value([Y], T)
    assert np.all(data >= barrier_value([Y], T, prob.lower) - 1e-15)
    assert np.all(data <= barrier_value([Y], T, prob.upper) + 1e-15)
    with pytest.raises(ValueError):
        polynomial_problem(quartic_phi(2)).boundary_value([0.0], 0.1)


def test_polynomial_problem_round_trips_taylor():
    phi = quartic_phi(3)
    prob = polynomial_problem(phi)
    again = prob.phi_taylor(phi.base_point, phi.degree)
    assert np.allclose(again.coeffs, phi.coeffs, atol=1e-14)
    assert prob.phi([np.array(0.1), np.array(0.1)]) == pytest.approx(phi.coefficient((0, 0)))


def test_sphere_problem_three_dimensional():
    prob = sphere_problem(3, SIGMA, ALPHA)
    p = CurvatureParams(3, 1, SIGMA)
    y1, y2, t = np.meshgrid(np.linspace(-0.2, 0.2, 4), np.linspace(-0.2, 0.2, 4), np.linspace(0.05, 0.3, 4), indexing="ij")
    u, g, h = prob.derivatives([y1, y2], t)
    q = operator_Qbar(GraphPointData(u, list(g), [list(r) for r in h], t), p)
    assert np.abs(q).max() < 1e-11
    assert math.isclose(prob.lower.R, 1.0)
