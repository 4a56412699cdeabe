"""
Quantitative checks of the boundary estimates on closed-form and grid solutions.

A *source* is either a :class:`~hypgraph.barriers.BoundaryProblem` with an
exact solution (closed form) or a converged :class:`~hypgraph.solver.Field`.
Decay rates are measured by least-squares fits of ``log |g|`` against
``log t``.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .barriers import BoundaryProblem, SphereBarrier, barrier_value
from .errors import DegenerateSamples, DerivativeOrderTooHigh, OrderNotReady
from .expansion import ExpansionCoefficients, compute_c1, evaluate_expansion
from .geometry import CurvatureParams, GraphPointData, operator_Qbar
from .series import TangentialPoly
from .solver import Field, fd_derivatives

__all__ = [
    "DecayFit",
    "CheckResult",
    "VerificationReport",
    "SupersolutionParams",
    "fit_decay_exponent",
    "truncate_expansion",
    "check_first_order_remainder",
    "check_expansion_remainder",
    "check_barrier_ordering",
    "check_supersolution_sign",
    "supersolution_samples",
    "supersolution_search",
    "check_derivative_bounds",
]

ZERO_FLOOR = 1e-15
MIN_BANDS = 6


@dataclass
class DecayFit:
    exponent: float
    constant: float
    r_squared: float
    window: tuple
    samples: int
    exact: bool = False

    def __post_init__(self):
        if self.samples < 5:
            raise ValueError("a decay fit needs at least 5 samples")


@dataclass
class CheckResult:
    name: str
    measured: float
    threshold: float
    passed: bool
    source: str
    fit: DecayFit | None = None
    detail: dict = field(default_factory=dict)


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)

    def add(self, entry: CheckResult):
        self.entries.append(entry)
        return entry

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def to_text(self):
        lines = []
        for e in self.entries:
            flag = "PASS" if e.passed else "FAIL"
            lines.append(f"{flag}  {e.name}: measured={e.measured!r} threshold={e.threshold!r} source={e.source}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["check", "window_lo", "window_hi", "exponent", "constant", "r2", "pass"])
        for e in self.entries:
            f = e.fit
            if f is None:
                writer.writerow([e.name, "", "", "", "", "", int(e.passed)])
            else:
                writer.writerow([e.name, repr(f.window[0]), repr(f.window[1]), repr(f.exponent), repr(f.constant), repr(f.r_squared), int(e.passed)])
        return buf.getvalue()


@dataclass(frozen=True)
class SupersolutionParams:
    """``psi = A theta^(n+1) - theta^q`` with ``theta = |y'|^2 + t`` on ``|y'| < sqrt(delta), 0 < t < delta``.

    With ``scaled=True`` the second term is multiplied by ``A`` as well.
    """

    A: float
    n: int
    delta: float = 0.25
    q: float | None = None
    scaled: bool = False

    def __post_init__(self):
        q = self.n + 1.5 if self.q is None else self.q
        object.__setattr__(self, "q", float(q))
        if not self.A > 0:
            raise ValueError("A must be positive")
        if not self.n + 1 < self.q < self.n + 2:
            raise ValueError("q must lie strictly between n + 1 and n + 2")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")


def fit_decay_exponent(t, magnitude, log_factor: bool = False) -> DecayFit:
    """Least-squares slope of ``log g`` against ``log t``.

    With ``log_factor`` the magnitudes are divided by ``|log t|`` first.
    Samples below ``1e-15`` are dropped; if none remain the data are
    identically zero and :class:`DegenerateSamples` is raised.
    """
    t = np.asarray(t, dtype=float).ravel()
    g = np.abs(np.asarray(magnitude, dtype=float).ravel())
    if t.size != g.size:
        raise ValueError("t and magnitude must have the same length")
    if t.size < 5:
        raise ValueError("a decay fit needs at least 5 samples")
    if np.any(t <= 0):
        raise ValueError("sample heights must be positive")
    if log_factor:
        g = g / np.abs(np.log(t))
    keep = g > ZERO_FLOOR
    if not keep.any():
        raise DegenerateSamples("all magnitudes are below 1e-15; the remainder is identically zero")
    if keep.sum() < 5:
        raise DegenerateSamples(f"only {int(keep.sum())} samples above 1e-15")
    x, yv = np.log(t[keep]), np.log(g[keep])
    slope, intercept = np.polyfit(x, yv, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((yv - pred) ** 2))
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(slope), float(math.exp(intercept)), float(min(max(r2, 0.0), 1.0)), (float(t[keep].min()), float(t[keep].max())), int(keep.sum()))


def _exact_fit(window, samples):
    return DecayFit(math.inf, 0.0, 1.0, tuple(window), max(samples, 5), exact=True)


def _fit_or_exact(t, g, log_factor=False):
    try:
        return fit_decay_exponent(t, g, log_factor)
    except DegenerateSamples:
        return _exact_fit((float(np.min(t)), float(np.max(t))), len(np.ravel(t)))


def _source_name(source):
    if isinstance(source, Field):
        return f"numerical ({source.source or 'grid'})"
    return f"closed form ({source.name})"


def _as_points(y_points, nv):
    pts = np.asarray(y_points, dtype=float)
    return pts.reshape(-1, nv)


def _first_order_terms(phi, params, y_points, degree=3):
    """Per point ``(phi, c1)`` Taylor polynomials around ``y'``."""
    out = []
    for y in y_points:
        base = tuple(float(v) for v in y)
        poly = phi(TangentialPoly.variables(base, degree))
        if not isinstance(poly, TangentialPoly):
            poly = TangentialPoly.constant(base, degree, poly)
        out.append((poly, compute_c1(poly, params)))
    return out


def _field_columns(field_: Field, y_fraction):
    """Tangential indices of the columns with ``|y_a| <= y_fraction * r``."""
    grid = field_.grid
    ys = grid.axes[0]
    ok = np.nonzero(np.abs(ys) <= y_fraction * grid.r + 1e-12)[0]
    idx = list(itertools.product(ok, repeat=grid.n - 1))
    pts = np.array([[ys[i] for i in ix] for ix in idx])
    return idx, pts


def check_first_order_remainder(
    source,
    phi,
    params: CurvatureParams,
    t_window=(1e-2, 1e-1),
    y_points=None,
    y_fraction: float = 0.5,
    n_samples: int = 20,
    threshold: float = 1.9,
) -> CheckResult:
    """Decay of ``sup_{y'} |u - phi - c_1 t|`` over a ``t``-window; pass if exponent >= 1.9.

    For a grid source the supremum runs over the columns with
    ``|y_a| <= y_fraction * r`` and the window's grid nodes.
    """
    nv = params.n - 1
    lo, hi = t_window
    if isinstance(source, Field):
        idx, pts = _field_columns(source, y_fraction)
        t_all = source.grid.axes[-1]
        tmask = (t_all >= lo * (1 - 1e-12)) & (t_all <= hi * (1 + 1e-12))
        t = t_all[tmask]
        cols = np.array([source.values[ix][tmask] for ix in idx])
    else:
        pts = _as_points(np.zeros(nv) if y_points is None else y_points, nv)
        t = np.geomspace(lo, hi, n_samples)
        cols = np.array([source.exact(list(p), t) for p in pts])
    terms = _first_order_terms(phi, params, pts, degree=1)
    phis = np.array([p.coefficient((0,) * nv) for p, _ in terms])
    c1s = np.array([c.coefficient((0,) * nv) for _, c in terms])
    rem = np.abs(cols - phis[:, None] - c1s[:, None] * t[None, :]).max(axis=0)
    fit = _fit_or_exact(t, rem)
    return CheckResult(
        "first_order_remainder",
        fit.exponent,
        threshold,
        bool(fit.exponent >= threshold),
        _source_name(source),
        fit,
        {"sup": float(rem.max())},
    )


def truncate_expansion(coeffs: ExpansionCoefficients, k: int) -> ExpansionCoefficients:
    """Copy holding only ``u_k`` (for ``k = n + 1``, ``u*``; beyond, the higher log terms)."""
    if k > coeffs.order:
        raise OrderNotReady(f"order {k} exceeds the solved order {coeffs.order}")
    n = coeffs.n
    return ExpansionCoefficients(
        params=coeffs.params,
        phi=coeffs.phi,
        c=list(coeffs.c[: min(k, n)]),
        c_log={key: v for key, v in coeffs.c_log.items() if key[0] <= k},
        order=k,
        residual_orders={key: v for key, v in coeffs.residual_orders.items() if key <= k},
        t_order=coeffs.t_order,
        log_order=coeffs.log_order,
    )


def _closed_form_derivative(problem, y, t, tau, m):
    """``D^tau d_t^m`` of the exact solution via forward-mode Taylor arithmetic."""
    order = sum(tau) + m
    point = tuple(float(v) for v in y) + (float(t),)
    vars_ = TangentialPoly.variables(point, order)
    val = problem.exact(vars_[:-1], vars_[-1])
    if not isinstance(val, TangentialPoly):
        return float(val) if order == 0 else 0.0
    alpha = tuple(tau) + (m,)
    return val.coefficient(alpha) * math.prod(math.factorial(a) for a in alpha)


def _grid_derivative(field_: Field, tau, m):
    """Finite-difference derivative on interior nodes, orders up to 2."""
    n = field_.grid.n
    order = sum(tau) + m
    if order > 2:
        raise DerivativeOrderTooHigh("grid sources support derivative orders up to 2")
    u, grad, hess = fd_derivatives(field_.values, field_.grid)
    axes = [a for a, c in enumerate(tau) for _ in range(c)] + [n - 1] * m
    if not axes:
        return u
    if len(axes) == 1:
        return grad[axes[0]]
    return hess[axes[0]][axes[1]]


def check_expansion_remainder(
    source,
    coeffs: ExpansionCoefficients,
    k: int,
    derivative=((0,), 0),
    t_window=(1e-2, 1e-1),
    n_samples: int = 20,
    threshold: float | None = None,
    log_factor: bool = False,
) -> CheckResult:
    """Decay of ``|D^tau d_t^m (u - u_k)|`` at the base-point column.

    Default thresholds: ``k - m + 0.5``, and ``n + 0.8 - m`` for ``u*`` (``k = n + 1``).
    """
    n = coeffs.n
    tau, m = derivative
    if isinstance(tau, (int, np.integer)):
        tau = (int(tau),) + (0,) * (n - 2)
    tau = tuple(tau)
    uk = truncate_expansion(coeffs, k)
    if threshold is None:
        # u* leaves the free coefficient c_{n+1,0} at zero, so the remainder
        # can only decay like t^(n+1-m) at that order
        threshold = n + 0.8 - m if k == n + 1 else k - m + 0.5
    lo, hi = t_window
    y0 = coeffs.base_point
    if isinstance(source, Field):
        grid = source.grid
        if any(abs(v) > 1e-12 for v in y0):
            raise ValueError("grid sources are compared on the centre column; build the expansion at y' = 0")
        vals = _grid_derivative(source, tau, m)
        t_all = grid.axes[-1][1:-1]
        col = vals[tuple(i - 1 for i in grid.center_index)]
        tmask = (t_all >= lo * (1 - 1e-12)) & (t_all <= hi * (1 + 1e-12))
        t, u = t_all[tmask], col[tmask]
    else:
        t = np.geomspace(lo, hi, n_samples)
        u = np.array([_closed_form_derivative(source, y0, tt, tau, m) for tt in t])
    approx = evaluate_expansion(uk, list(y0), t, derivative=(tau, m))
    rem = np.abs(u - approx)
    fit = _fit_or_exact(t, rem, log_factor)
    return CheckResult(
        f"expansion_remainder[k={k},tau={''.join(map(str, tau))},m={m}]",
        fit.exponent,
        float(threshold),
        bool(fit.exponent >= threshold),
        _source_name(source),
        fit,
        {"k": k, "tau": tau, "m": m},
    )


def check_barrier_ordering(source, lower: SphereBarrier, upper: SphereBarrier, points=None, tol: float = 1e-10) -> CheckResult:
    """``min(u - u_R)`` and ``min(u^R - u)`` over the samples; pass if both >= -tol."""
    if isinstance(source, Field):
        y, t = source.grid.coordinates()
        u = source.values
    else:
        if points is None:
            raise ValueError("closed-form sources need explicit sample points (y_list, t)")
        y, t = points
        u = np.asarray(source.exact(y, t), dtype=float)
    lo = barrier_value(y, t, lower)
    hi = barrier_value(y, t, upper)
    m_lo = float(np.min(u - lo))
    m_hi = float(np.min(hi - u))
    return CheckResult(
        "barrier_ordering",
        min(m_lo, m_hi),
        -tol,
        bool(m_lo >= -tol and m_hi >= -tol),
        _source_name(source),
        detail={"lower_margin": m_lo, "upper_margin": m_hi},
    )


def _psi(sp: SupersolutionParams, y, t):
    """``psi`` with its gradient and Hessian; ``y`` is a list of arrays."""
    n = sp.n
    theta = sum((v * v for v in y), 0.0) + t
    dth = [2.0 * v for v in y] + [np.ones_like(t)]
    p1, q = n + 1, sp.q
    B = sp.A if sp.scaled else 1.0
    f = sp.A * theta**p1 - B * theta**q
    f1 = sp.A * p1 * theta ** (p1 - 1) - B * q * theta ** (q - 1)
    f2 = sp.A * p1 * (p1 - 1) * theta ** (p1 - 2) - B * q * (q - 1) * theta ** (q - 2)
    grad = [f1 * d for d in dth]
    hess = [[f2 * dth[i] * dth[j] + (2.0 * f1 if (i == j and i < n - 1) else 0.0) for j in range(n)] for i in range(n)]
    return f, grad, hess


def supersolution_samples(coeffs: ExpansionCoefficients, delta: float, n_y: int = 21, n_t: int = 21, t_min_fraction: float = 1e-3):
    """Per-node ``(u*, Du*, D^2u*)`` on ``|y'| < sqrt(delta)``, ``0 < t <= delta``.

    ``u*`` is rebuilt around each tangential node so no Taylor truncation in
    ``y'`` enters the values or their derivatives. Only ``n = 2`` grids are
    sampled densely; for ``n = 3`` the same 1-D profile is taken along ``y_1``.
    """
    from .expansion import build_expansion

    n = coeffs.n
    r = math.sqrt(delta)
    ys = np.linspace(-r, r, n_y + 2)[1:-1]
    ts = np.geomspace(t_min_fraction * delta, delta, n_t)
    phi0 = coeffs.phi
    k = coeffs.order
    degree = phi0.degree
    u = np.empty((len(ys), len(ts)))
    grad = np.empty((n, len(ys), len(ts)))
    hess = np.empty((n, n, len(ys), len(ts)))
    for iy, yv in enumerate(ys):
        base = (float(yv),) + (0.0,) * (n - 2)
        shifted = _recentre(phi0, base, degree)
        local = build_expansion(shifted, coeffs.params, k, t_order=coeffs.t_order, log_order=coeffs.log_order)
        pt = list(base)
        u[iy] = evaluate_expansion(local, pt, ts)
        for a in range(n):
            ea = [0] * (n - 1)
            if a < n - 1:
                ea[a] = 1
                grad[a, iy] = evaluate_expansion(local, pt, ts, (tuple(ea), 0))
            else:
                grad[a, iy] = evaluate_expansion(local, pt, ts, ((0,) * (n - 1), 1))
            for b in range(a, n):
                tau = [0] * (n - 1)
                m = 0
                for c in (a, b):
                    if c < n - 1:
                        tau[c] += 1
                    else:
                        m += 1
                hess[a, b, iy] = hess[b, a, iy] = evaluate_expansion(local, pt, ts, (tuple(tau), m))
    return ys, ts, u, grad, hess


def _recentre(poly: TangentialPoly, base, degree):
    """Re-expand ``poly`` around ``base`` (exact for polynomial data, truncated otherwise)."""
    shifted = poly(TangentialPoly.variables(base, degree))
    if not isinstance(shifted, TangentialPoly):
        shifted = TangentialPoly.constant(base, degree, shifted)
    return shifted


def check_supersolution_sign(coeffs: ExpansionCoefficients, sp: SupersolutionParams, samples=None, tol: float = 1e-10) -> CheckResult:
    """Max of ``Qbar(u* + psi)`` over the sampled box; pass if ``<= tol``."""
    if samples is None:
        samples = supersolution_samples(coeffs, sp.delta)
    ys, ts, u, grad, hess = samples
    n = coeffs.n
    Y, T = np.meshgrid(ys, ts, indexing="ij")
    yl = [Y] + [np.zeros_like(Y)] * (n - 2)
    f, g, h = _psi(sp, yl, T)
    data = GraphPointData(
        u + f,
        [grad[a] + g[a] for a in range(n)],
        [[hess[a, b] + h[a][b] for b in range(n)] for a in range(n)],
        T,
    )
    q = np.asarray(operator_Qbar(data, coeffs.params))
    worst = float(q.max())
    return CheckResult(
        "supersolution_sign",
        worst,
        tol,
        bool(worst <= tol),
        "expansion u*",
        detail={"A": sp.A, "q": sp.q, "delta": sp.delta, "scaled": sp.scaled},
    )


def supersolution_search(
    coeffs: ExpansionCoefficients,
    delta: float = 0.25,
    A0: float = 1.0 / 64,
    max_doublings: int = 20,
    samples=None,
    tol: float = 1e-10,
    scaled: bool = False,
):
    """Doubling search for the smallest tested ``A`` with ``Qbar(u* + psi) <= tol``.

    Returns ``(A or None, list of (A, max Qbar))``.
    """
    if samples is None:
        samples = supersolution_samples(coeffs, delta)
    history = []
    A = A0
    for _ in range(max_doublings + 1):
        res = check_supersolution_sign(coeffs, SupersolutionParams(A, coeffs.n, delta, scaled=scaled), samples, tol)
        history.append((A, res.measured))
        if res.passed:
            return A, history
        A *= 2.0
    return None, history


def _band_sups(t, values, t_hi, n_bands, ratio=math.sqrt(2.0)):
    """Sup of ``values`` over bands ``[t_hi ratio^-(j+1), t_hi ratio^-j]``."""
    tops, sups = [], []
    for j in range(n_bands):
        b_hi = t_hi * ratio**-j
        b_lo = b_hi / ratio
        m = (t >= b_lo * (1 - 1e-12)) & (t <= b_hi * (1 + 1e-12))
        if m.any():
            tops.append(b_hi)
            sups.append(float(np.max(values[..., m])))
    return np.array(tops), np.array(sups)


def check_derivative_bounds(
    source,
    phi,
    params: CurvatureParams,
    t_max: float = 0.1,
    t_min: float | None = None,
    y_points=None,
    y_fraction: float = 0.5,
    threshold: float = -0.1,
    n_samples: int = 64,
):
    """Boundedness of ``|Du| + t|D^2u|``, ``|Dv|/t + |D^2v|`` and ``|v|/t^2`` as ``t -> 0``.

    ``v = u - phi - c_1(y') t``. Sups over ``t``-bands of ratio ``sqrt(2)`` (narrower
    if the window holds fewer than 6 such bands) are fitted
    against the band top; a bounded quantity has exponent >= ``threshold``.
    Grid sources use bands above ``5 h_t`` (override with ``t_min``).
    """
    n = params.n
    nv = n - 1
    if isinstance(source, Field):
        grid = source.grid
        t_min = 5.0 * grid.h_t if t_min is None else t_min
        idx, pts = _field_columns(source, y_fraction)
        u, grad, hess = fd_derivatives(source.values, grid)
        t_all = grid.axes[-1][1:-1]
        sel = [tuple(i - 1 for i in ix) for ix in idx]
        u = np.array([u[s] for s in sel])
        grad = np.array([[g[s] for s in sel] for g in grad])
        hess = np.array([[[h[s] for s in sel] for h in row] for row in hess])
        tm = t_all >= t_min * (1 - 1e-12)
        t = t_all[tm]
        u, grad, hess = u[:, tm], grad[..., tm], hess[..., tm]
    else:
        t_min = 1e-4 if t_min is None else t_min
        pts = _as_points(np.zeros(nv) if y_points is None else y_points, nv)
        t = np.geomspace(t_min, t_max, n_samples)
        y = [np.repeat(pts[:, a : a + 1], t.size, axis=1) for a in range(nv)]
        T = np.broadcast_to(t, (len(pts), t.size))
        u, grad, hess = source.derivatives(y, T)
        u, grad, hess = np.asarray(u), np.asarray(grad), np.asarray(hess)

    terms = _first_order_terms(phi, params, pts, degree=3)
    zero = (0,) * nv
    phi0, c10 = [], []
    dphi, dc1 = np.zeros((nv, len(pts))), np.zeros((nv, len(pts)))
    d2phi, d2c1 = np.zeros((nv, nv, len(pts))), np.zeros((nv, nv, len(pts)))
    for i, (p, c) in enumerate(terms):
        phi0.append(p.coefficient(zero))
        c10.append(c.coefficient(zero))
        for a in range(nv):
            ea = tuple(1 if s == a else 0 for s in range(nv))
            dphi[a, i] = p.coefficient(ea)
            dc1[a, i] = c.coefficient(ea)
            for b in range(nv):
                eab = tuple((s == a) + (s == b) for s in range(nv))
                fac = 2.0 if a == b else 1.0
                d2phi[a, b, i] = fac * p.coefficient(eab)
                d2c1[a, b, i] = fac * c.coefficient(eab)
    phi0, c10 = np.array(phi0)[:, None], np.array(c10)[:, None]
    tt = t[None, :]
    v = u - phi0 - c10 * tt
    dv = np.empty_like(grad)
    for a in range(nv):
        dv[a] = grad[a] - dphi[a][:, None] - dc1[a][:, None] * tt
    dv[nv] = grad[nv] - c10
    d2v = hess.copy()
    for a in range(nv):
        for b in range(nv):
            d2v[a, b] = hess[a, b] - d2phi[a, b][:, None] - d2c1[a, b][:, None] * tt
        d2v[a, nv] = hess[a, nv] - dc1[a][:, None]
        d2v[nv, a] = hess[nv, a] - dc1[a][:, None]

    def norm(vec):
        return np.sqrt(np.sum(vec**2, axis=0))

    def mnorm(mat):
        return np.sqrt(np.sum(mat**2, axis=(0, 1)))

    quantities = {
        "Du+tD2u": norm(grad) + tt * mnorm(hess),
        "Dv/t+D2v": norm(dv) / tt + mnorm(d2v),
        "v/t2": np.abs(v) / tt**2,
    }
    # sqrt(2) bands, narrowed on short windows so that at least 6 remain
    ratio = math.sqrt(2.0)
    n_bands = int(math.floor(math.log(t_max / t_min) / math.log(ratio) + 1e-9))
    if n_bands < MIN_BANDS:
        n_bands = MIN_BANDS
        ratio = (t_max / t_min) ** (1.0 / MIN_BANDS)
    results = []
    for name, q in quantities.items():
        tops, sups = _band_sups(t, q, t_max, n_bands, ratio)
        if len(tops) < 5 or np.all(sups <= ZERO_FLOOR):
            exp = math.inf if np.all(sups <= ZERO_FLOOR) else float("nan")
            fit = None
            if len(tops) >= 5 or exp == math.inf:
                fit = _exact_fit((t_min, t_max), len(tops)) if exp == math.inf else None
            results.append(CheckResult(f"derivative_bound[{name}]", exp, threshold, exp == math.inf, _source_name(source), fit, {"sup": float(np.max(q)) if q.size else 0.0}))
            continue
        fit = fit_decay_exponent(tops, sups)
        results.append(
            CheckResult(
                f"derivative_bound[{name}]",
                fit.exponent,
                threshold,
                bool(fit.exponent >= threshold),
                _source_name(source),
                fit,
                {"sup": float(np.max(sups))},
            )
        )
    return results
