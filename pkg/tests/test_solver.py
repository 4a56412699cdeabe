import numpy as np
import pytest

from hypgraph.barriers import plane_problem, polynomial_problem, sphere_problem
from hypgraph.errors import EllipticityLost, MaxIterationsExceeded, NonFiniteValue
from hypgraph.geometry import CurvatureParams
from hypgraph.series import TangentialPoly
from hypgraph.solver import (
    Field,
    Grid,
    assemble_jacobian,
    assemble_residual,
    dirichlet_field,
    ellipticity_check,
    fd_derivatives,
    harmonic_extension,
    interpolate_field,
    newton_solve,
)

from conftest import ALPHA, SIGMA


def exact_field(grid, prob):
    y, t = grid.coordinates()
    return Field(grid, prob.exact(y, t), "exact")


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(0.2, 0.2, 4, 11)
    with pytest.raises(ValueError):
        Grid(0.2, 0.2, 11, 11, n=4)
    g = Grid(0.2, 0.1, 21, 11)
    assert g.h_y == pytest.approx(0.02)
    assert g.h_t == pytest.approx(0.01)
    assert g.axes[0][g.center_index[0]] == 0.0
    assert g.boundary_mask().sum() == 21 * 11 - 19 * 9


def test_fd_derivatives_exact_on_quadratics():
    g = Grid(0.3, 0.2, 9, 7)
    (y,), t = g.coordinates()
    u = 1.0 + 2.0 * y - t + 0.5 * y * y + 3.0 * y * t - 2.0 * t * t
    c, grad, hess = fd_derivatives(u, g)
    inner = g.interior
    assert np.allclose(grad[0], (2.0 + y + 3.0 * t)[inner])
    assert np.allclose(grad[1], (-1.0 + 3.0 * y - 4.0 * t)[inner])
    assert np.allclose(hess[0][0], 1.0)
    assert np.allclose(hess[0][1], 3.0)
    assert np.allclose(hess[1][1], -4.0)


def test_plane_residual_vanishes(params2):
    prob = plane_problem(2, SIGMA, slope=(0.3,), offset=0.1)
    g = Grid(0.2, 0.2, 11, 11)
    res = assemble_residual(exact_field(g, prob), params2)
    assert np.abs(res.values).max() < 1e-13


def test_sphere_residual_is_second_order(params2):
    prob = sphere_problem(2, SIGMA, ALPHA)
    norms = []
    for N in (21, 41, 81):
        g = Grid(0.2, 0.2, N, N)
        norms.append(np.abs(assemble_residual(exact_field(g, prob), params2).values).max())
    rates = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert np.all(rates > 1.8)


def test_residual_rejects_non_finite():
    g = Grid(0.2, 0.2, 7, 7)
    vals = np.zeros(g.shape)
    vals[3, 3] = np.nan
    with pytest.raises(NonFiniteValue):
        assemble_residual(Field(g, vals), CurvatureParams(2, 1, SIGMA))


@pytest.mark.parametrize("n", [2, 3])
def test_jacobian_matches_finite_differences(n, rng):
    p = CurvatureParams(n, 1, SIGMA)
    prob = sphere_problem(n, SIGMA, ALPHA)
    g = Grid(0.2, 0.2, 7, 7, n)
    f = exact_field(g, prob)
    f.values[g.interior] += 1e-3 * rng.standard_normal(f.values[g.interior].shape)
    J = assemble_jacobian(f, p).toarray()
    h = 1e-6
    inner = np.argwhere(np.ones(tuple(s - 2 for s in g.shape), dtype=bool))
    for col in rng.choice(len(inner), size=6, replace=False):
        node = tuple(inner[col] + 1)
        up, down = f.copy(), f.copy()
        up.values[node] += h
        down.values[node] -= h
        fd = (assemble_residual(up, p).values[g.interior].ravel() - assemble_residual(down, p).values[g.interior].ravel()) / (2 * h)
        assert np.allclose(J[:, col], fd, rtol=1e-6, atol=1e-7 * max(1.0, np.abs(fd).max()))


def test_ellipticity_values_on_exact_solutions():
    p = CurvatureParams(2, 1, SIGMA)
    pl = plane_problem(2, SIGMA)
    g = Grid(0.2, 0.2, 9, 9)
    eig = ellipticity_check(exact_field(g, pl), p)
    assert np.allclose(eig, -pl.meta["c1"])
    sph = sphere_problem(2, SIGMA, ALPHA)
    eig = ellipticity_check(exact_field(g, sph), p)
    assert eig.min() > 0.5


def test_harmonic_extension_reproduces_linear_functions():
    g = Grid(0.2, 0.2, 11, 9)
    (y,), t = g.coordinates()
    lin = 0.3 + 2.0 * y - 0.7 * t
    vals = lin.copy()
    vals[g.interior] = 0.0
    assert np.allclose(harmonic_extension(g, vals), lin)


def test_interpolation_of_smooth_fields():
    coarse, fine = Grid(0.2, 0.2, 11, 11), Grid(0.2, 0.2, 21, 21)
    f = lambda y, t: y**3 - 2 * y * t + t**2
    (yc,), tc = coarse.coordinates()
    (yf,), tf = fine.coordinates()
    out = interpolate_field(Field(coarse, f(yc, tc)), fine)
    assert np.allclose(out, f(yf, tf), atol=1e-6)


def test_dirichlet_field_sets_faces():
    prob = sphere_problem(2, SIGMA, ALPHA)
    g = Grid(0.2, 0.2, 9, 9)
    vals = dirichlet_field(g, prob.boundary_value, prob.phi, np.zeros(g.shape))
    (y,), t = g.coordinates()
    exact = prob.exact([y], t)
    mask = g.boundary_mask()
    assert np.allclose(vals[mask], exact[mask])
    assert np.all(vals[g.interior] == 0.0)


def test_plane_start_converges_immediately():
    prob = plane_problem(2, SIGMA, slope=(0.3,))
    g = Grid(0.2, 0.2, 21, 21)
    p = CurvatureParams(2, 1, SIGMA)
    f, rep = newton_solve(g, p, prob.phi, prob.boundary_value, initial="first_order", tol=1e-12)
    assert rep.iterations <= 1
    y, t = g.coordinates()
    assert np.abs(f.values - prob.exact(y, t)).max() < 1e-12


@pytest.mark.parametrize("initial", ["nested", "first_order"])
def test_sphere_solve_monotone_residuals(params2, initial):
    prob = sphere_problem(2, SIGMA, ALPHA)
    g = Grid(0.2, 0.2, 41, 41)
    f, rep = newton_solve(g, params2, prob.phi, prob.boundary_value, initial=initial, tol=1e-10)
    assert rep.converged
    assert np.all(np.diff(rep.residual_norms) < 0)
    assert len(rep.rows()) == rep.iterations + 1
    assert np.all(np.array(rep.min_curvature_eig) > 0)
    y, t = g.coordinates()
    assert np.abs(f.values - prob.exact(y, t)).max() < 5e-5


def test_concave_data_lose_ellipticity():
    (y,) = TangentialPoly.variables((0.0,), 4)
    prob = polynomial_problem(-4.0 * y * y)
    g = Grid(0.2, 0.2, 21, 21)
    p = CurvatureParams(2, 1, SIGMA)
    with pytest.raises(EllipticityLost) as info:
        newton_solve(g, p, prob.phi, lambda yy, t: prob.phi(yy) + 0.0 * t, initial="first_order")
    assert info.value.report.min_curvature_eig[0] <= 0.0


def test_iteration_cap():
    prob = sphere_problem(2, SIGMA, ALPHA)
    g = Grid(0.2, 0.2, 21, 21)
    p = CurvatureParams(2, 0, SIGMA)
    with pytest.raises(MaxIterationsExceeded) as info:
        newton_solve(g, p, prob.phi, prob.boundary_value, initial="first_order", tol=1e-14, max_iter=1)
    assert info.value.field is not None
    assert info.value.report.iterations == 1


def test_three_dimensional_solve():
    prob = sphere_problem(3, SIGMA, ALPHA)
    g = Grid(0.2, 0.2, 11, 11, n=3)
    p = CurvatureParams(3, 1, SIGMA)
    f, rep = newton_solve(g, p, prob.phi, prob.boundary_value, tol=1e-10)
    y, t = g.coordinates()
    assert rep.converged
    assert np.abs(f.values - prob.exact(y, t)).max() < 1e-3
