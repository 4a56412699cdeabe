"""
Explicit sphere solutions used as oracles, barriers and boundary data.

A Euclidean sphere of radius ``R`` centred at height ``-sigma R`` (interior
ball) or ``+sigma R`` (exterior ball) meets the half-space in a
hypersurface of constant hyperbolic principal curvature ``sigma``. Its
trace on the ideal boundary is a ball of radius ``alpha`` with
``alpha^2 + sigma^2 R^2 = R^2``.

Tangent to the boundary curve ``y_n = phi(y')`` at ``Q``, the interior
sphere written as a vertical graph is the lower barrier::

    u_R(y', t) = P_n + sqrt(R^2 - (t + sigma R)^2 - |y' - P'|^2),   P = Q + alpha N

and the exterior one is the upper barrier::

    u^R(y', t) = P_n - sqrt(R^2 - (t - sigma R)^2 - |y' - P'|^2),   P = Q - alpha N

with ``N = (Dphi, -1) / sqrt(1 + |Dphi|^2)`` the inner normal of the
domain ``{y_n < phi(y')}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidSigma, OutsideDomainDisk, OutsideSphere
from .geometry import TOLERANCES
from .series import TangentialPoly, sqrt

__all__ = [
    "SphereBarrier",
    "BoundaryProblem",
    "radius_from_alpha",
    "horizontal_sphere_graph",
    "horizontal_sphere_derivatives",
    "lower_barrier_value",
    "upper_barrier_value",
    "barrier_value",
    "barrier_derivatives",
    "sphere_problem",
    "plane_problem",
    "perturbed_sphere_problem",
    "polynomial_problem",
]


def radius_from_alpha(alpha, sigma):
    if not 0.0 < sigma < 1.0:
        raise InvalidSigma(f"sigma must lie in (0, 1), got {sigma}")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return alpha / math.sqrt(1.0 - sigma * sigma)


@dataclass(frozen=True)
class SphereBarrier:
    kind: str  # "interior" (lower) or "exterior" (upper)
    tangent_point: tuple
    phi_value: float
    boundary_gradient: tuple
    alpha: float
    sigma: float

    def __post_init__(self):
        if self.kind not in ("interior", "exterior"):
            raise ValueError(f"kind must be 'interior' or 'exterior', got {self.kind!r}")
        object.__setattr__(self, "tangent_point", tuple(float(v) for v in np.atleast_1d(self.tangent_point)))
        object.__setattr__(self, "boundary_gradient", tuple(float(v) for v in np.atleast_1d(self.boundary_gradient)))
        if len(self.tangent_point) != len(self.boundary_gradient):
            raise ValueError("tangent point and gradient dimensions differ")
        radius_from_alpha(self.alpha, self.sigma)

    @classmethod
    def tangent_to(cls, phi, y_q, alpha, sigma, kind="interior"):
        """Barrier touching the curve ``y_n = phi(y')`` at ``y_q``.

        ``phi`` is any callable accepting a list of coordinates; its value
        and gradient at ``y_q`` are taken from a degree-1 Taylor expansion.
        """
        y_q = tuple(float(v) for v in np.atleast_1d(y_q))
        poly = phi(TangentialPoly.variables(y_q, 1))
        if not isinstance(poly, TangentialPoly):
            return cls(kind, y_q, float(poly), (0.0,) * len(y_q), alpha, sigma)
        grad = [poly.coefficient(tuple(int(k == a) for k in range(len(y_q)))) for a in range(len(y_q))]
        return cls(kind, y_q, poly.coefficient((0,) * len(y_q)), tuple(grad), alpha, sigma)

    @property
    def R(self):
        return radius_from_alpha(self.alpha, self.sigma)

    @property
    def dim(self):
        """Hypersurface dimension n."""
        return len(self.tangent_point) + 1

    @property
    def inner_normal(self):
        g = np.array(self.boundary_gradient)
        s = math.sqrt(1.0 + g @ g)
        return np.append(g, -1.0) / s

    @property
    def sign(self):
        return 1.0 if self.kind == "interior" else -1.0

    @property
    def center(self):
        """Ideal-boundary centre ``P = (P', P_n)`` of the trace ball."""
        q = np.append(np.array(self.tangent_point), self.phi_value)
        return q + self.sign * self.alpha * self.inner_normal

    @property
    def center_height(self):
        return -self.sign * self.sigma * self.R


def horizontal_sphere_derivatives(x, barrier: SphereBarrier):
    """``(f, Df, D^2f)`` of the sphere written as ``x_{n+1} = f(x)``.

    ``x`` has shape ``(n, ...)``. Interior spheres live over the trace disk
    ``|x - P| <= alpha``; exterior ones over the annulus ``alpha <= |x - P| <= R``.
    """
    x = np.asarray(x, dtype=float)
    P = barrier.center.reshape((-1,) + (1,) * (x.ndim - 1))
    d = x - P
    r2 = (d * d).sum(axis=0)
    R, alpha = barrier.R, barrier.alpha
    tol = 1e-12 * alpha * alpha
    if barrier.kind == "interior":
        if np.any(r2 > alpha * alpha + tol):
            raise OutsideDomainDisk("point outside the trace disk of the interior sphere")
    elif np.any(r2 < alpha * alpha - tol) or np.any(r2 > R * R):
        raise OutsideDomainDisk("point outside the annulus of the exterior sphere")
    rho = np.maximum(R * R - r2, 0.0)
    s = np.sqrt(rho)
    sgn = barrier.sign
    f = sgn * (s - barrier.sigma * R)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = -sgn * d / s
        n = x.shape[0]
        hess = np.empty((n, n) + x.shape[1:])
        for i in range(n):
            for j in range(n):
                hess[i, j] = -sgn * ((1.0 if i == j else 0.0) / s + d[i] * d[j] / (s * rho))
    return f, grad, hess


def horizontal_sphere_graph(x, barrier: SphereBarrier):
    return horizontal_sphere_derivatives(x, barrier)[0]


def _radicand(y, t, barrier):
    P = barrier.center
    h = barrier.center_height
    R = barrier.R
    rho = R * R - (t - h) * (t - h)
    for a, ya in enumerate(y):
        rho = rho - (ya - P[a]) * (ya - P[a])
    return rho


def _clean_radicand(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -TOLERANCES.radicand_floor):
        raise OutsideSphere("point outside the sphere (negative radicand)")
    return np.maximum(rho, 0.0)


def barrier_value(y, t, barrier: SphereBarrier):
    """Vertical-graph value of ``barrier``.

    ``y`` is a sequence of tangential coordinates (floats or arrays). Also
    accepts :class:`TangentialPoly` / jet arguments, in which case the
    result is their Taylor expansion.
    """
    y = list(y) if isinstance(y, (list, tuple, np.ndarray)) else [y]
    rho = _radicand(y, t, barrier)
    if isinstance(rho, (int, float, np.ndarray, np.floating)):
        rho = _clean_radicand(rho)
    return barrier.center[-1] + barrier.sign * sqrt(rho)


def lower_barrier_value(y, t, barrier: SphereBarrier):
    if barrier.kind != "interior":
        raise ValueError("lower barrier needs an interior sphere")
    return barrier_value(y, t, barrier)


def upper_barrier_value(y, t, barrier: SphereBarrier):
    if barrier.kind != "exterior":
        raise ValueError("upper barrier needs an exterior sphere")
    return barrier_value(y, t, barrier)


def barrier_derivatives(y, t, barrier: SphereBarrier):
    """Vectorized ``(u, Du, D^2u)`` of the vertical-graph barrier, ``t`` last."""
    y = [np.asarray(v, dtype=float) for v in (y if isinstance(y, (list, tuple)) else [y])]
    t = np.asarray(t, dtype=float)
    shape = np.broadcast(*y, t).shape
    P = barrier.center
    h = barrier.center_height
    rho = _clean_radicand(_radicand(y, t, barrier))
    s = np.sqrt(rho)
    sgn = barrier.sign
    drho = [-2.0 * (ya - P[a]) for a, ya in enumerate(y)] + [-2.0 * (t - h)]
    n = len(drho)
    u = np.broadcast_to(P[-1] + sgn * s, shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        grad = np.array([np.broadcast_to(sgn * d / (2.0 * s), shape) for d in drho])
        hess = np.empty((n, n) + shape)
        for i in range(n):
            for j in range(n):
                hess[i, j] = sgn * ((-2.0 if i == j else 0.0) / (2.0 * s) - drho[i] * drho[j] / (4.0 * s * rho))
    return u, grad, hess


@dataclass
class BoundaryProblem:
    """Boundary data ``phi`` plus, when known, an exact solution.

    ``phi(y)`` and ``exact(y, t)`` are written with generic arithmetic so
    they accept floats, arrays, :class:`TangentialPoly` and jets.
    ``derivatives(y, t)`` returns vectorized ``(u, Du, D^2u)`` of the exact
    solution.
    """

    name: str
    n: int
    phi: Callable
    exact: Callable | None = None
    derivatives: Callable | None = None
    boundary: Callable | None = None
    lower: SphereBarrier | None = None
    upper: SphereBarrier | None = None
    meta: dict = field(default_factory=dict)

    def boundary_value(self, y, t):
        """Dirichlet data on the slab faces."""
        if self.boundary is not None:
            return self.boundary(y, t)
        if self.exact is None:
            raise ValueError(f"problem {self.name!r} has no lateral boundary data")
        return self.exact(y, t)

    def phi_taylor(self, base_point, degree):
        out = self.phi(TangentialPoly.variables(base_point, degree))
        if not isinstance(out, TangentialPoly):
            out = TangentialPoly.constant(base_point, degree, out)
        return out


def sphere_problem(n=2, sigma=0.6, alpha=0.8, tangent_point=None, phi_value=0.0, boundary_gradient=None):
    """Boundary data equal to the trace of an interior sphere; ``u_R`` solves it exactly."""
    tangent_point = (0.0,) * (n - 1) if tangent_point is None else tangent_point
    boundary_gradient = (0.0,) * (n - 1) if boundary_gradient is None else boundary_gradient
    lower = SphereBarrier("interior", tangent_point, phi_value, boundary_gradient, alpha, sigma)
    upper = SphereBarrier("exterior", tangent_point, phi_value, boundary_gradient, alpha, sigma)
    return BoundaryProblem(
        name="sphere",
        n=n,
        phi=lambda y: barrier_value(y, 0.0, lower),
        exact=lambda y, t: barrier_value(y, t, lower),
        derivatives=lambda y, t: barrier_derivatives(y, t, lower),
        lower=lower,
        upper=upper,
        meta={"alpha": alpha, "sigma": sigma},
    )


def _linear_derivatives(slope, c1, offset=0.0):
    def derivatives(y, t):
        y = [np.asarray(v, dtype=float) for v in y]
        t = np.asarray(t, dtype=float)
        shape = np.broadcast(*y, t).shape
        n = len(y) + 1
        u = sum((s * v for s, v in zip(slope, y)), offset + c1 * t)
        grad = np.array([np.full(shape, s) for s in slope] + [np.full(shape, c1)])
        return np.broadcast_to(u, shape), grad, np.zeros((n, n) + shape)

    return derivatives


def plane_problem(n=2, sigma=0.6, slope=None, offset=0.0, alpha=0.8):
    """Linear data ``phi = offset + slope . y'``; the tilted plane ``phi + c1 t`` is exact."""
    slope = tuple(0.0 for _ in range(n - 1)) if slope is None else tuple(float(s) for s in slope)
    c1 = -sigma * math.sqrt((1.0 + sum(s * s for s in slope)) / (1.0 - sigma * sigma))

    def phi(y):
        return sum((s * v for s, v in zip(slope, y)), 0.0 * y[0]) + offset

    def exact(y, t):
        return phi(y) + c1 * t

    zero = (0.0,) * (n - 1)
    return BoundaryProblem(
        name="plane",
        n=n,
        phi=phi,
        exact=exact,
        derivatives=_linear_derivatives(slope, c1, offset),
        lower=SphereBarrier("interior", zero, offset, slope, alpha, sigma),
        upper=SphereBarrier("exterior", zero, offset, slope, alpha, sigma),
        meta={"c1": c1, "slope": slope},
    )


def perturbed_sphere_problem(n=2, sigma=0.6, alpha=0.8, epsilon=0.2):
    """Sphere data plus ``epsilon |y'|^2`` on every face; no closed-form solution.

    The lower barrier is the unperturbed interior sphere (same value and
    slope at the origin). The data stay below the exterior sphere as long
    as ``epsilon < 1 / alpha``.
    """
    base = sphere_problem(n, sigma, alpha)
    lower, upper = base.lower, base.upper

    def bump(y):
        return epsilon * sum((v * v for v in y[1:]), y[0] * y[0])

    return BoundaryProblem(
        name="perturbed_sphere",
        n=n,
        phi=lambda y: barrier_value(y, 0.0, lower) + bump(y),
        boundary=lambda y, t: barrier_value(y, t, lower) + bump(y),
        lower=lower,
        upper=upper,
        meta={"alpha": alpha, "sigma": sigma, "epsilon": epsilon},
    )


def polynomial_problem(poly: TangentialPoly, n=None):
    """Boundary data given by a tangential polynomial (no exact solution)."""
    n = poly.nvars + 1 if n is None else n
    base = np.array(poly.base_point)

    def phi(y):
        total = 0.0
        for e, c in poly.items():
            if c == 0.0:
                continue
            term = c
            for a, k in enumerate(e):
                if k:
                    term = term * (y[a] - base[a]) ** k
            total = total + term
        return total

    return BoundaryProblem(name="polynomial", n=n, phi=phi, meta={"poly": poly})
