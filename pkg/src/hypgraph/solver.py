"""
Finite-difference damped Newton solver for the Dirichlet problem on a slab.

The slab is ``{|y_a| <= r, 0 <= t <= delta}`` with a uniform grid. Every face
carries Dirichlet data: ``phi`` on ``t = 0`` and either a closed form or the
boundary expansion elsewhere. Unknowns are the interior nodes only.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .errors import EllipticityLost, LineSearchStalled, MaxIterationsExceeded, NonFiniteValue
from .geometry import CurvatureParams, GraphPointData, as_array, curvature_matrix, operator_derivatives, operator_Qbar

__all__ = [
    "Grid",
    "Field",
    "NewtonReport",
    "fd_derivatives",
    "harmonic_extension",
    "assemble_residual",
    "assemble_jacobian",
    "ellipticity_check",
    "dirichlet_field",
    "interpolate_field",
    "newton_solve",
]


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-r, r]^(n-1) x [0, delta]``; ``t`` is the last axis."""

    r: float
    delta: float
    n_y: int
    n_t: int
    n: int = 2

    def __post_init__(self):
        if self.n_y < 5 or self.n_t < 5:
            raise ValueError("grids need at least 5 nodes per axis")
        if self.r <= 0 or self.delta <= 0:
            raise ValueError("r and delta must be positive")
        if self.n not in (2, 3):
            raise ValueError("only n = 2 or 3 is supported")

    @property
    def h_y(self):
        return 2.0 * self.r / (self.n_y - 1)

    @property
    def h_t(self):
        return self.delta / (self.n_t - 1)

    @property
    def spacings(self):
        return (self.h_y,) * (self.n - 1) + (self.h_t,)

    @property
    def shape(self):
        return (self.n_y,) * (self.n - 1) + (self.n_t,)

    @property
    def axes(self):
        y = np.linspace(-self.r, self.r, self.n_y)
        return [y] * (self.n - 1) + [np.linspace(0.0, self.delta, self.n_t)]

    def coordinates(self):
        """``(y_list, t)`` arrays of the full grid shape."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return mesh[:-1], mesh[-1]

    @property
    def interior(self):
        return (slice(1, -1),) * self.n

    def boundary_mask(self):
        mask = np.ones(self.shape, dtype=bool)
        mask[self.interior] = False
        return mask

    @property
    def center_index(self):
        """Index of the tangential origin (the grid uses an odd ``n_y`` for an exact hit)."""
        return (self.n_y // 2,) * (self.n - 1)


@dataclass
class Field:
    grid: Grid
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values have shape {self.values.shape}, grid is {self.grid.shape}")

    def copy(self):
        return Field(self.grid, self.values.copy(), self.source)

    def column(self, index=None):
        """``(t, u)`` along the ``t`` axis at a tangential index (default the centre)."""
        index = self.grid.center_index if index is None else tuple(index)
        return self.grid.axes[-1], self.values[index]


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_norms: list = field(default_factory=list)
    damping: list = field(default_factory=list)
    min_curvature_eig: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def rows(self):
        """``(iter, residual, damping, min_eig)`` per iterate; iterate 0 has damping 0."""
        damp = [0.0] + list(self.damping)
        return [(i, self.residual_norms[i], damp[i], self.min_curvature_eig[i]) for i in range(len(self.residual_norms))]


def _shift(u, offset):
    """View of ``u`` at interior nodes displaced by ``offset``."""
    idx = tuple(slice(1 + o, u.shape[a] - 1 + o) for a, o in enumerate(offset))
    return u[idx]


def _unit(n, a, s=1):
    e = [0] * n
    e[a] = s
    return tuple(e)


def fd_derivatives(u, grid: Grid):
    """Centred second-order ``Du`` and ``D^2u`` at interior nodes (nested lists of arrays)."""
    n = grid.n
    h = grid.spacings
    c = _shift(u, (0,) * n)
    grad = [(_shift(u, _unit(n, a)) - _shift(u, _unit(n, a, -1))) / (2.0 * h[a]) for a in range(n)]
    hess = [[None] * n for _ in range(n)]
    for a in range(n):
        hess[a][a] = (_shift(u, _unit(n, a)) - 2.0 * c + _shift(u, _unit(n, a, -1))) / h[a] ** 2
        for b in range(a + 1, n):
            acc = 0.0
            for sa, sb in itertools.product((1, -1), repeat=2):
                off = [0] * n
                off[a], off[b] = sa, sb
                acc = acc + sa * sb * _shift(u, tuple(off))
            hess[a][b] = hess[b][a] = acc / (4.0 * h[a] * h[b])
    return c, grad, hess


def _interior_data(u, grid):
    c, grad, hess = fd_derivatives(u, grid)
    _, t = grid.coordinates()
    return GraphPointData(c, grad, hess, t[grid.interior])


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{what} contains non-finite entries")


def assemble_residual(field: Field, params: CurvatureParams) -> Field:
    """Pointwise ``Qbar`` at interior nodes, zero on the boundary."""
    grid = field.grid
    _check_finite(field.values, "field")
    q = np.asarray(operator_Qbar(_interior_data(field.values, grid), params))
    _check_finite(q, "residual")
    out = np.zeros(grid.shape)
    out[grid.interior] = q
    return Field(grid, out, "residual")


def _unknown_index(grid):
    idx = -np.ones(grid.shape, dtype=np.int64)
    inner = tuple(s - 2 for s in grid.shape)
    idx[grid.interior] = np.arange(int(np.prod(inner))).reshape(inner)
    return idx


def _stencil(field, params):
    """``{offset: weight array}`` of the linearised residual at interior nodes."""
    grid = field.grid
    n = grid.n
    h = grid.spacings
    _, dH, dp = operator_derivatives(_interior_data(field.values, grid), params)
    zero = (0,) * n
    weights = {}

    def add(offset, w):
        weights[offset] = weights.get(offset, 0.0) + w

    for a in range(n):
        add(_unit(n, a), dp[a] / (2.0 * h[a]) + dH[a][a] / h[a] ** 2)
        add(_unit(n, a, -1), -dp[a] / (2.0 * h[a]) + dH[a][a] / h[a] ** 2)
        add(zero, -2.0 * dH[a][a] / h[a] ** 2)
        for b in range(a + 1, n):
            mixed = (dH[a][b] + dH[b][a]) / (4.0 * h[a] * h[b])
            for sa, sb in itertools.product((1, -1), repeat=2):
                off = [0] * n
                off[a], off[b] = sa, sb
                add(tuple(off), sa * sb * mixed)
    return weights


def assemble_jacobian(field: Field, params: CurvatureParams) -> sp.csc_matrix:
    """Sparse Jacobian of the interior residual with respect to interior values."""
    grid = field.grid
    idx = _unknown_index(grid)
    rows_all = idx[grid.interior].ravel()
    shape = np.broadcast_to(rows_all, rows_all.shape).shape
    rows, cols, vals = [], [], []
    for offset, w in sorted(_stencil(field, params).items()):
        w = np.broadcast_to(np.asarray(w, dtype=float), idx[grid.interior].shape).ravel()
        col = _shift(idx, offset).ravel()
        keep = col >= 0
        rows.append(rows_all[keep])
        cols.append(col[keep])
        vals.append(w[keep])
    vals = np.concatenate(vals)
    _check_finite(vals, "Jacobian")
    N = shape[0]
    return sp.coo_matrix((vals, (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)).tocsc()


def ellipticity_check(field: Field, params: CurvatureParams) -> np.ndarray:
    """Smallest eigenvalue of ``M`` at each interior node."""
    data = _interior_data(field.values, field.grid)
    M = as_array(curvature_matrix(data)[4])
    return np.linalg.eigvalsh(M)[..., 0]


def dirichlet_field(grid: Grid, boundary, phi, initial):
    """Field with ``phi`` on ``t = 0``, ``boundary(y, t)`` on other faces and ``initial`` inside."""
    y, t = grid.coordinates()
    values = np.array(initial, dtype=float, copy=True)
    mask = grid.boundary_mask()
    values[mask] = np.asarray(np.broadcast_to(boundary(y, t), grid.shape))[mask]
    values[..., 0] = np.broadcast_to(phi([v[..., 0] for v in y]), values[..., 0].shape)
    return values


def harmonic_extension(grid: Grid, values):
    """Discrete harmonic function matching ``values`` on the boundary nodes."""
    idx = _unknown_index(grid)
    n = grid.n
    h = grid.spacings
    rows_all = idx[grid.interior].ravel()
    N = rows_all.size
    diag = sum(2.0 / hh**2 for hh in h)
    rows, cols, vals = [rows_all], [rows_all], [np.full(N, diag)]
    rhs = np.zeros(N)
    for a in range(n):
        for s in (1, -1):
            off = _unit(n, a, s)
            col = _shift(idx, off).ravel()
            nb = _shift(values, off).ravel()
            keep = col >= 0
            rows.append(rows_all[keep])
            cols.append(col[keep])
            vals.append(np.full(keep.sum(), -1.0 / h[a] ** 2))
            rhs[~keep] += nb[~keep] / h[a] ** 2
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)).tocsc()
    out = np.array(values, dtype=float, copy=True)
    out[grid.interior] = spla.spsolve(A, rhs).reshape(idx[grid.interior].shape)
    return out


def _coarser(grid, limit):
    """Grid with roughly half the spacing count, or None once at or below ``limit`` nodes."""
    if max(grid.n_y, grid.n_t) <= limit:
        return None
    n_y = (grid.n_y - 1) // 2 + 1 if grid.n_y > limit else grid.n_y
    n_t = (grid.n_t - 1) // 2 + 1 if grid.n_t > limit else grid.n_t
    return Grid(grid.r, grid.delta, n_y, n_t, grid.n)


def interpolate_field(field: Field, grid: Grid):
    """Cubic interpolation of ``field`` onto the nodes of ``grid``."""
    method = "cubic" if min(field.grid.shape) >= 4 else "linear"
    interp = RegularGridInterpolator(field.grid.axes, field.values, method=method)
    y, t = grid.coordinates()
    pts = np.stack([*y, t], axis=-1)
    return interp(pts.reshape(-1, grid.n)).reshape(grid.shape)


def _first_order_guess(grid, phi, params):
    """``phi + c_1 t`` with ``Dphi`` from finite differences of the bottom face."""
    y, t = grid.coordinates()
    base = np.asarray(np.broadcast_to(phi([v[..., 0] for v in y]), grid.shape[:-1]), dtype=float)
    grads = np.gradient(base, grid.h_y, edge_order=2) if grid.n > 2 else [np.gradient(base, grid.h_y, edge_order=2)]
    norm2 = sum(g * g for g in grads)
    s = params.sigma
    c1 = -s * np.sqrt((1.0 + norm2) / (1.0 - s * s))
    return base[..., None] + c1[..., None] * t


def newton_solve(
    grid: Grid,
    params: CurvatureParams,
    phi,
    boundary,
    initial="nested",
    tol: float = 1e-10,
    max_iter: int = 30,
    armijo: float = 1e-4,
    min_damping: float = 2.0**-12,
    source: str = "",
    coarse_nodes: int = 51,
):
    """Damped Newton iteration on the interior nodes.

    ``phi(y)`` and ``boundary(y, t)`` are vectorized callables. ``initial`` is
    ``"nested"`` (solve on successively coarser grids down to ``coarse_nodes``
    and interpolate upward), ``"first_order"`` (``phi + c_1 t`` blended into
    the boundary data), a callable ``(y, t) -> values`` or a :class:`Field`.
    Trial steps that leave the elliptic regime are rejected by backtracking;
    a non-elliptic starting iterate raises :class:`EllipticityLost`.
    """
    if isinstance(initial, Field):
        guess = initial.values
    elif callable(initial):
        y, t = grid.coordinates()
        guess = np.broadcast_to(initial(y, t), grid.shape)
    elif initial == "nested":
        coarse = _coarser(grid, coarse_nodes)
        if coarse is None:
            guess = _first_order_guess(grid, phi, params)
        else:
            sub, _ = newton_solve(coarse, params, phi, boundary, "nested", tol, max_iter, armijo, min_damping, source, coarse_nodes)
            guess = interpolate_field(sub, grid)
            initial = Field(grid, dirichlet_field(grid, boundary, phi, guess), source)
    elif initial == "first_order":
        guess = _first_order_guess(grid, phi, params)
    else:
        raise ValueError(f"unknown initial guess {initial!r}")
    guess = np.asarray(guess, dtype=float)
    values = dirichlet_field(grid, boundary, phi, guess)
    if not isinstance(initial, Field):
        values = guess + harmonic_extension(grid, values - guess)
    u = Field(grid, values, source)
    report = NewtonReport()

    def state(f):
        res = assemble_residual(f, params).values[grid.interior]
        eig = ellipticity_check(f, params)
        return res, float(np.abs(res).max()), float(eig.min())

    try:
        res, norm, min_eig = state(u)
    except NonFiniteValue as exc:
        raise NonFiniteValue(str(exc), report=report, field=u) from None
    report.residual_norms.append(norm)
    report.min_curvature_eig.append(min_eig)
    if min_eig <= 0.0:
        report.message = "initial iterate is not strictly convex"
        raise EllipticityLost(f"min eigenvalue of M is {min_eig:.3e} at the initial iterate", report=report, field=u)

    while norm > tol:
        if report.iterations >= max_iter:
            report.message = "maximum iterations reached"
            raise MaxIterationsExceeded(f"residual {norm:.3e} after {max_iter} iterations", report=report, field=u)
        J = assemble_jacobian(u, params)
        step = spla.spsolve(J, -res.ravel()).reshape(res.shape)
        if not np.all(np.isfinite(step)):
            raise NonFiniteValue("Newton step is not finite", report=report, field=u)
        lam = 1.0
        while True:
            trial = u.copy()
            trial.values[grid.interior] += lam * step
            try:
                t_res, t_norm, t_eig = state(trial)
                ok = t_eig > 0.0 and t_norm <= (1.0 - armijo * lam) * norm
            except NonFiniteValue:
                ok = False
            if ok:
                break
            lam *= 0.5
            if lam < min_damping:
                report.message = "line search stalled"
                raise LineSearchStalled(f"no acceptable step at residual {norm:.3e}", report=report, field=u)
        u, res, norm = trial, t_res, t_norm
        report.iterations += 1
        report.damping.append(lam)
        report.residual_norms.append(norm)
        report.min_curvature_eig.append(t_eig)
    report.converged = True
    report.message = "converged"
    return u, report
