"""
Curvature kernel for graphs in the half-space model.

Every routine works on "scalars" that may be floats, numpy arrays (one
entry per grid node) or :class:`~hypgraph.series.PolylogJet` objects.
Matrices are nested lists of such scalars, which keeps determinants and
principal minors exact over jets. Only :func:`vertical_curvature` and
:func:`horizontal_curvature` in numeric mode touch eigenvalues.

For a vertical graph ``y_n = u(y', t)`` the operator is::

    Qbar = det M - sigma^(n-l) w^(n-l) H_l(M),
    M_ij = t gamma^ik u_kl gamma^lj - u_t delta_ij,

with ``w = sqrt(1 + |Du|^2)`` and ``gamma^ij = delta_ij - u_i u_j / (w (1 + w))``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import InvalidSigma, NonPositiveHeight
from .series import PolylogJet, TangentialPoly, sqrt


@dataclass(frozen=True)
class Tolerances:
    gamma_roundtrip: float = 1e-12
    sym_invariance: float = 1e-10
    exact_solution: float = 1e-10
    jet_annihilation: float = 1e-12
    plane_exactness: float = 1e-14
    radicand_floor: float = 1e-14
    singular_recursion: float = 1e-14


TOLERANCES = Tolerances()


@dataclass(frozen=True)
class CurvatureParams:
    """Curvature quotient ``H_n / H_l = sigma^(n-l)``."""

    n: int
    l: int
    sigma: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 0 <= self.l < self.n:
            raise ValueError(f"l must satisfy 0 <= l < n, got l={self.l}")
        if not 0.0 < self.sigma < 1.0:
            raise InvalidSigma(f"sigma must lie in (0, 1), got {self.sigma}")

    @property
    def rhs_power(self):
        return self.sigma ** (self.n - self.l)


@dataclass
class GraphPointData:
    value: Any
    gradient: Sequence[Any]
    hessian: Sequence[Sequence[Any]]
    height: Any


@dataclass
class CurvatureResult:
    w: Any
    gamma_up: list
    gamma_down: list
    M: list
    a_v: list
    kappa: np.ndarray | None = None
    a_E: list | None = None
    kappa_E: np.ndarray | None = None


def _is_symbolic(x):
    return isinstance(x, (PolylogJet, TangentialPoly))


def _any_symbolic(*items):
    for it in items:
        if isinstance(it, (list, tuple)):
            if _any_symbolic(*it):
                return True
        elif _is_symbolic(it):
            return True
    return False


def as_nested(A):
    """Nested-list view of an ``(n, n, ...)`` array or a list of lists."""
    if isinstance(A, np.ndarray):
        return [list(row) for row in A]
    return [list(row) for row in A]


def as_array(A):
    """Stack a nested list of numeric scalars into ``(..., n, n)``."""
    arr = np.array([[np.asarray(x, dtype=float) for x in row] for row in A])
    return np.moveaxis(arr, (0, 1), (-2, -1))


def matmul(A, B):
    n, m, k = len(A), len(B), len(B[0])
    return [[sum((A[i][s] * B[s][j] for s in range(1, m)), A[i][0] * B[0][j]) for j in range(k)] for i in range(n)]


def det(A):
    """Determinant by cofactor expansion along the first row."""
    n = len(A)
    if n == 0:
        return 1.0
    if n == 1:
        return A[0][0]
    if n == 2:
        return A[0][0] * A[1][1] - A[0][1] * A[1][0]
    total = 0.0
    for j in range(n):
        minor = [row[:j] + row[j + 1:] for row in A[1:]]
        term = A[0][j] * det(minor)
        total = total + term if j % 2 == 0 else total - term
    return total


def _submatrix(A, rows, cols):
    return [[A[i][j] for j in cols] for i in rows]


def cofactor_matrix(A):
    """``C_kl = d det A / d A_kl``."""
    n = len(A)
    if n == 1:
        return [[1.0]]
    idx = list(range(n))
    out = []
    for k in range(n):
        row = []
        for l in range(n):
            d = det(_submatrix(A, [i for i in idx if i != k], [j for j in idx if j != l]))
            row.append(d if (k + l) % 2 == 0 else -d)
        out.append(row)
    return out


def normalized_sym(k, A):
    """``H_k`` of the eigenvalues of ``A``: the normalized sum of principal k x k minors."""
    n = len(A)
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, {n}]")
    if k == 0:
        return 1.0
    total = 0.0
    for S in itertools.combinations(range(n), k):
        total = total + det(_submatrix(A, S, S))
    return total / math.comb(n, k)


def normalized_sym_gradient(k, A):
    """``d H_k / d A_kl`` treating all entries as independent."""
    n = len(A)
    zero = 0.0 * A[0][0]
    out = [[zero for _ in range(n)] for _ in range(n)]
    if k == 0:
        return out
    scale = 1.0 / math.comb(n, k)
    for S in itertools.combinations(range(n), k):
        cof = cofactor_matrix(_submatrix(A, S, S))
        for a, i in enumerate(S):
            for b, j in enumerate(S):
                out[i][j] = out[i][j] + scale * cof[a][b]
    return out


def metric_and_gamma(gradient):
    """Return ``(w, gamma_up, gamma_down)`` for the gradient ``Du``.

    ``gamma_up`` is ``delta - u_i u_j / (w (1 + w))`` and its inverse
    ``gamma_down = delta + u_i u_j / (1 + w)`` is the square root of the
    Euclidean induced metric ``delta + u_i u_j``.
    """
    du = list(gradient)
    n = len(du)
    norm2 = sum((g * g for g in du[1:]), du[0] * du[0])
    w = sqrt(1.0 + norm2)
    inv_up = 1.0 / (w * (1.0 + w))
    inv_down = 1.0 / (1.0 + w)
    up = [[(1.0 if i == j else 0.0) - du[i] * du[j] * inv_up for j in range(n)] for i in range(n)]
    down = [[(1.0 if i == j else 0.0) + du[i] * du[j] * inv_down for j in range(n)] for i in range(n)]
    return w, up, down


def _w_power(gradient, power):
    """``(1 + |Du|^2)^(power/2)`` without a square root when ``power`` is even."""
    du = list(gradient)
    w2 = 1.0 + sum((g * g for g in du[1:]), du[0] * du[0])
    if power % 2 == 0:
        return w2 ** (power // 2) if power else 1.0
    return sqrt(w2) * (w2 ** (power // 2) if power > 1 else 1.0)


def _eig(A):
    return np.linalg.eigvalsh(as_array(A))


def _check_height(t, name="t"):
    if not _is_symbolic(t) and np.any(np.asarray(t) < 0):
        raise NonPositiveHeight(f"{name} must be nonnegative")


def curvature_matrix(data: GraphPointData):
    """``(w, gamma_up, gamma_down, m, M)`` for a vertical graph, ``m = t gamma D^2u gamma``."""
    grad = list(data.gradient)
    n = len(grad)
    hess = as_nested(data.hessian)
    t = data.height
    w, up, down = metric_and_gamma(grad)
    g_h_g = matmul(matmul(up, hess), up)
    m = [[t * g_h_g[i][j] for j in range(n)] for i in range(n)]
    u_t = grad[-1]
    M = [[m[i][j] - u_t if i == j else m[i][j] for j in range(n)] for i in range(n)]
    return w, up, down, m, M


def vertical_curvature(data: GraphPointData, params: CurvatureParams) -> CurvatureResult:
    """Hyperbolic second fundamental form ``a^v = M / w`` of ``y_n = u(y', t)``."""
    _check_height(data.height)
    w, up, down, _, M = curvature_matrix(data)
    n = len(M)
    inv_w = 1.0 / w
    a_v = [[M[i][j] * inv_w for j in range(n)] for i in range(n)]
    kappa = None if _any_symbolic(data.height, list(data.gradient)) else _eig(a_v)
    return CurvatureResult(w=w, gamma_up=up, gamma_down=down, M=M, a_v=a_v, kappa=kappa)


def horizontal_curvature(data: GraphPointData, params: CurvatureParams | None = None) -> CurvatureResult:
    """Curvatures of a horizontal graph ``x_{n+1} = f(x)`` (numeric only).

    Returns the Euclidean form ``a^E = gamma D^2f gamma / w`` and the
    hyperbolic ``a^v = (delta + f gamma D^2f gamma) / w``; their eigenvalues
    obey ``kappa = f kappa^E + 1/w``.
    """
    f = data.value
    if np.any(np.asarray(f) <= 0):
        raise NonPositiveHeight("f must be positive")
    grad = list(data.gradient)
    n = len(grad)
    hess = as_nested(data.hessian)
    w, up, down = metric_and_gamma(grad)
    g_h_g = matmul(matmul(up, hess), up)
    a_E = [[g_h_g[i][j] / w for j in range(n)] for i in range(n)]
    M = [[(1.0 if i == j else 0.0) + f * g_h_g[i][j] for j in range(n)] for i in range(n)]
    a_v = [[M[i][j] / w for j in range(n)] for i in range(n)]
    return CurvatureResult(
        w=w, gamma_up=up, gamma_down=down, M=M, a_v=a_v,
        kappa=_eig(a_v), a_E=a_E, kappa_E=_eig(a_E),
    )


def operator_Qbar(data: GraphPointData, params: CurvatureParams):
    """Cleared-denominator curvature operator ``det M - sigma^(n-l) w^(n-l) H_l(M)``."""
    _check_height(data.height)
    _, _, _, _, M = curvature_matrix(data)
    n, l = params.n, params.l
    if len(M) != n:
        raise ValueError(f"gradient has length {len(M)}, expected n={n}")
    lhs = det(M)
    rhs = params.rhs_power * _w_power(data.gradient, n - l) * normalized_sym(l, M)
    return lhs - rhs


def m_gradient_derivative(gradient, hessian, t):
    """``d m_ij / d u_r`` for ``m = t gamma D^2u gamma`` (numeric).

    Returns ``(X, sym)`` where ``X[r][i][j] = m_ik (u_k gamma^rj + u_j gamma^kr / w) / (1 + w)``.
    The exact derivative is ``sym[r] = -(X[r] + X[r]^T)``; contracted with a
    symmetric tensor it equals the compact form ``-2 X[r]``.
    """
    grad = list(gradient)
    n = len(grad)
    w, up, _, m, _ = curvature_matrix(GraphPointData(None, grad, hessian, t))
    X, sym = [], []
    for r in range(n):
        Xr = [[0.0] * n for _ in range(n)]
        for i in range(n):
            for j in range(n):
                acc = 0.0
                for k in range(n):
                    acc = acc + m[i][k] * (grad[k] * up[r][j] + grad[j] * up[k][r] / w)
                Xr[i][j] = acc / (1.0 + w)
        X.append(Xr)
        sym.append([[-(Xr[i][j] + Xr[j][i]) for j in range(n)] for i in range(n)])
    return X, sym


def operator_derivatives(data: GraphPointData, params: CurvatureParams):
    """Value and first derivatives of ``Qbar`` in ``(D^2u, Du)``.

    Returns ``(Q, dQ_dH, dQ_dp)``: ``dQ_dH[i][j]`` treats ``u_ij`` and
    ``u_ji`` as independent slots, and ``dQ_dp[r]`` is ``dQbar/du_r``.
    """
    grad = list(data.gradient)
    n, l = params.n, params.l
    t = data.height
    w, up, _, m, M = curvature_matrix(data)
    wpow = _w_power(grad, n - l)
    Hl = normalized_sym(l, M)
    Q = det(M) - params.rhs_power * wpow * Hl

    cof = cofactor_matrix(M)
    dH = normalized_sym_gradient(l, M)
    phi = [[cof[k][j] - params.rhs_power * wpow * dH[k][j] for j in range(n)] for k in range(n)]

    g_phi_g = matmul(matmul(up, phi), up)
    dQ_dH = [[t * g_phi_g[i][j] for j in range(n)] for i in range(n)]

    _, dm = m_gradient_derivative(grad, data.hessian, t)
    w_factor = (n - l) * params.rhs_power * _w_power(grad, n - l - 2) * Hl if n - l >= 2 else (
        (n - l) * params.rhs_power * Hl / w
    )
    dQ_dp = []
    for r in range(n):
        acc = 0.0
        for i in range(n):
            for j in range(n):
                acc = acc + phi[i][j] * dm[r][i][j]
        if r == n - 1:
            for i in range(n):
                acc = acc - phi[i][i]
        dQ_dp.append(acc - w_factor * grad[r])
    return Q, dQ_dH, dQ_dp
