"""
Formal boundary expansion of solutions near the ideal boundary.

The ansatz is::

    u_k = phi + c_1 t + ... + c_n t^n + sum_{i > n} sum_j c_{i,j} t^i (log t)^j

Each coefficient is found by building the polylog jet of ``Qbar`` with the
unknown set to zero and reading off the lowest surviving coefficient. The
unknown enters that coefficient through the leading linear operator
``K0 (t g'' - n g')`` with ``K0 = (-c_1)^(n-1) (1 - sigma^2) (n - l) / n``, so
for ``g = t^k`` the factor is ``lambda_k = k (k - 1 - n) K0`` and for
``g = t^(n+1) log t`` it is ``(n + 1) K0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DerivativeOrderTooHigh,
    HigherLogCapExceeded,
    IndexOutOfRange,
    InsufficientTangentialDegree,
    InvalidSigma,
    NonPositiveT,
    OrderNotReady,
    SingularRecursion,
)
from .geometry import TOLERANCES, CurvatureParams, GraphPointData, operator_Qbar
from .series import PolylogJet, TangentialPoly, sqrt

__all__ = [
    "ExpansionCoefficients",
    "compute_c1",
    "recursion_coefficient",
    "recursion_factor",
    "log_factor",
    "qbar_jet",
    "solve_coefficient",
    "solve_log_coefficient",
    "build_expansion",
    "evaluate_expansion",
    "trial_response",
]


@dataclass
class ExpansionCoefficients:
    params: CurvatureParams
    phi: TangentialPoly
    c: list = field(default_factory=list)  # c[k-1] holds c_k
    c_log: dict = field(default_factory=dict)  # (i, j) -> poly, i >= n+1
    order: int = 0
    residual_orders: dict = field(default_factory=dict)
    t_order: int = 0
    log_order: int = 1
    provenance: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.params.n

    @property
    def base_point(self):
        return self.phi.base_point

    @property
    def degree(self):
        return self.phi.degree

    @property
    def c1(self):
        if not self.c:
            raise OrderNotReady("c_1 has not been computed")
        return self.c[0]

    def terms(self):
        """``{(i, j): TangentialPoly}`` of every stored term, ``phi`` at ``(0, 0)``."""
        out = {(0, 0): self.phi}
        for k, ck in enumerate(self.c, start=1):
            out[(k, 0)] = ck
        out.update(self.c_log)
        return out

    def coefficient(self, i, j=0):
        try:
            return self.terms()[(i, j)]
        except KeyError:
            raise IndexOutOfRange(f"no coefficient ({i}, {j}) stored") from None

    def jet(self, t_order=None, log_order=None, extra=None):
        """Polylog jet of the stored ansatz (plus optional ``extra`` terms)."""
        terms = self.terms()
        if extra:
            terms.update(extra)
        K = self.t_order if t_order is None else t_order
        J = self.log_order if log_order is None else log_order
        terms = {key: val for key, val in terms.items() if key[0] <= K and key[1] <= J}
        return PolylogJet.from_terms(terms, self.base_point, self.degree, K, J)

    def to_dict(self):
        p = self.params
        coeffs = [{"i": i, "j": j, "poly": poly.to_dict()} for (i, j), poly in sorted(self.terms().items()) if (i, j) != (0, 0)]
        return {
            "params": {"n": p.n, "l": p.l, "sigma": p.sigma},
            "base_point": list(self.base_point),
            "order": self.order,
            "truncation": {"t_order": self.t_order, "log_order": self.log_order, "degree": self.degree},
            "phi": self.phi.to_dict(),
            "coefficients": coeffs,
            "provenance": [{"i": i, "j": j, "how": how} for (i, j), how in sorted(self.provenance.items())],
            "residual_orders": [{"k": k, "max_abs_coeff_below_k": v} for k, v in sorted(self.residual_orders.items())],
        }

    @classmethod
    def from_dict(cls, data):
        p = data["params"]
        params = CurvatureParams(int(p["n"]), int(p["l"]), float(p["sigma"]))
        trunc = data["truncation"]
        out = cls(
            params=params,
            phi=TangentialPoly.from_dict(data["phi"]),
            order=int(data["order"]),
            t_order=int(trunc["t_order"]),
            log_order=int(trunc["log_order"]),
        )
        plain = {}
        for entry in data["coefficients"]:
            i, j = int(entry["i"]), int(entry["j"])
            poly = TangentialPoly.from_dict(entry["poly"])
            if j == 0 and i <= params.n:
                plain[i] = poly
            else:
                out.c_log[(i, j)] = poly
        out.c = [plain[k] for k in sorted(plain)]
        out.provenance = {(int(d["i"]), int(d["j"])): d["how"] for d in data.get("provenance", [])}
        out.residual_orders = {int(d["k"]): float(d["max_abs_coeff_below_k"]) for d in data["residual_orders"]}
        return out

    def __eq__(self, other):
        if not isinstance(other, ExpansionCoefficients):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


def compute_c1(phi: TangentialPoly, params: CurvatureParams) -> TangentialPoly:
    """``c_1 = -sqrt(sigma^2 (1 + |Dphi|^2) / (1 - sigma^2))`` as a Taylor polynomial."""
    s = params.sigma
    if not 0.0 < s < 1.0:
        raise InvalidSigma(f"sigma must lie in (0, 1), got {s}")
    if phi.degree < 1:
        raise InsufficientTangentialDegree("phi needs degree >= 1 to form c_1")
    grad = phi.gradient()
    norm2 = sum(grad[1:], grad[0] * grad[0]) if len(grad) == 1 else sum((g * g for g in grad[1:]), grad[0] * grad[0])
    return -sqrt((1.0 + norm2) * (s * s / (1.0 - s * s)))


def _k0(params, c1):
    n, l, s = params.n, params.l, params.sigma
    return (-c1) ** (n - 1) * ((1.0 - s * s) * (n - l) / n)


def recursion_coefficient(k, params: CurvatureParams, c1_at_base) -> float:
    """``lambda_k = k (-c_1)^(n-1) (1 - sigma^2) ((n - l)/n) (k - 1 - n)``; zero at k = n + 1."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = params.n
    if k - 1 - n == 0:
        return 0.0
    return k * (k - 1 - n) * _k0(params, float(c1_at_base))


def recursion_factor(k, params: CurvatureParams, c1: TangentialPoly) -> TangentialPoly:
    """``lambda_k`` as a function of ``y'`` through ``c_1(y')``."""
    return _k0(params, c1) * float(k * (k - 1 - params.n))


def log_factor(params: CurvatureParams, c1):
    """Coefficient of ``c_{n+1,1}`` in the order-``t^n`` term: ``(n + 1) K0``."""
    return _k0(params, c1) * float(params.n + 1)


def graph_data_from_jet(u: PolylogJet, n: int) -> GraphPointData:
    d = n - 1
    t = u.like({(1, 0): 1.0})
    u_t = u.diff_t()
    grad = [u.diff_y(a) for a in range(d)] + [u_t]
    hess = [[None] * n for _ in range(n)]
    for a in range(d):
        for b in range(a, d):
            hess[a][b] = hess[b][a] = grad[a].diff_y(b)
        hess[a][n - 1] = hess[n - 1][a] = u_t.diff_y(a)
    hess[n - 1][n - 1] = u_t.diff_t()
    return GraphPointData(u, grad, hess, t)


def qbar_jet(u: PolylogJet, params: CurvatureParams) -> PolylogJet:
    """Polylog jet of ``Qbar(u)``; its known ``t``-order is one below that of ``u``."""
    if u.nvars != params.n - 1:
        raise ValueError(f"jet has {u.nvars} tangential variables, expected {params.n - 1}")
    return operator_Qbar(graph_data_from_jet(u, params.n), params)


def _extract(jet, i, j, what):
    try:
        return jet.coefficient(i, j)
    except IndexOutOfRange as exc:
        raise InsufficientTangentialDegree(f"{what}: {exc}; raise the Taylor degree or t-order") from None


def _ensure_t_order(state, k):
    if k > state.t_order:
        raise ValueError(f"order {k} exceeds the jet t-order {state.t_order}")


def solve_coefficient(k: int, state: ExpansionCoefficients) -> TangentialPoly:
    """Solve ``c_k`` (``2 <= k <= n``) so that ``Qbar(u_k) = O(t^k)``."""
    n = state.n
    if k == n + 1:
        raise SingularRecursion("lambda_{n+1} = 0; use solve_log_coefficient")
    if not 2 <= k <= n:
        raise ValueError(f"solve_coefficient handles 2 <= k <= n, got k={k}")
    if len(state.c) < k - 1:
        raise OrderNotReady(f"c_{len(state.c) + 1} must be solved before c_{k}")
    _ensure_t_order(state, k)
    base = ExpansionCoefficients(state.params, state.phi, state.c[: k - 1], t_order=state.t_order, log_order=state.log_order)
    F = _extract(qbar_jet(base.jet(), state.params), k - 1, 0, f"F_{k}")
    lam = recursion_factor(k, state.params, state.c1)
    if abs(lam.coefficient((0,) * lam.nvars)) < TOLERANCES.singular_recursion:
        raise SingularRecursion(f"lambda_{k} vanishes at the base point")
    return -F / lam


def solve_log_coefficient(state: ExpansionCoefficients) -> TangentialPoly:
    """``c_{n+1,1}`` so that ``Qbar(u_n + c_{n+1,1} t^(n+1) log t)`` has no ``t^n`` terms."""
    n = state.n
    if len(state.c) < n:
        raise OrderNotReady(f"c_1 ... c_{n} must be solved first")
    if state.log_order < 1:
        raise HigherLogCapExceeded("the log term needs log_order >= 1")
    _ensure_t_order(state, n + 1)
    base = ExpansionCoefficients(state.params, state.phi, state.c[:n], t_order=state.t_order, log_order=state.log_order)
    F = _extract(qbar_jet(base.jet(), state.params), n, 0, "F_{n+1,1}")
    return -F / log_factor(state.params, state.c1)


def _solve_higher_order(i: int, state: ExpansionCoefficients):
    """Solve every ``c_{i,j}`` at order ``i >= n + 2``, highest log power first."""
    n = state.n
    J = state.log_order
    probe = qbar_jet(state.jet(log_order=J + 1), state.params)
    overflow = _extract(probe, i - 1, J + 1, f"F_{i},{J + 1}")
    if np.abs(overflow.coeffs).max(initial=0.0) > 1e-10:
        raise HigherLogCapExceeded(f"order {i} needs log power {J + 1} > log_order {J}")
    k0 = _k0(state.params, state.c1)
    lam = float(i * (i - 1 - n))
    solved = {}
    for j in range(J, -1, -1):
        rhs = _extract(probe, i - 1, j, f"F_{i},{j}") / k0
        if j + 1 <= J:
            rhs = rhs + solved[j + 1] * float((j + 1) * (2 * i - 1 - n))
        if j + 2 <= J:
            rhs = rhs + solved[j + 2] * float((j + 2) * (j + 1))
        solved[j] = rhs * (-1.0 / lam)
    return solved


def _residual_below(state, k, log_order=None):
    jet = qbar_jet(state.jet(log_order=log_order), state.params)
    if jet.t_order < k - 1:
        raise InsufficientTangentialDegree(f"Qbar jet known only to t-order {jet.t_order}")
    return jet.max_abs(t_below=k)


def build_expansion(
    phi: TangentialPoly,
    params: CurvatureParams,
    order: int,
    with_higher_logs: bool = False,
    t_order: int | None = None,
    log_order: int = 1,
) -> ExpansionCoefficients:
    """Solve the expansion through ``order``.

    ``order <= n`` gives ``u_order``; ``order == n + 1`` gives
    ``u* = u_n + c_{n+1,1} t^(n+1) log t``; larger orders require
    ``with_higher_logs``. ``t_order`` defaults to ``max(n + 2, order)``.
    """
    n = params.n
    if order < 1:
        raise ValueError("order must be >= 1")
    if order > n + 1 and not with_higher_logs:
        raise ValueError(f"order {order} > n + 1 needs with_higher_logs=True")
    K = max(n + 2, order) if t_order is None else int(t_order)
    if order > K:
        raise ValueError(f"order {order} exceeds t_order {K}")
    if phi.nvars != n - 1:
        raise ValueError(f"phi has {phi.nvars} variables, expected {n - 1}")
    if phi.degree < order and order > n:
        raise InsufficientTangentialDegree(f"phi degree {phi.degree} too low for order {order}")
    state = ExpansionCoefficients(params, phi, t_order=K, log_order=log_order)

    c1 = compute_c1(phi, params)
    state.c.append(c1)
    state.order = 1
    state.provenance[(1, 0)] = "closed form"
    state.residual_orders[1] = _residual_below(state, 1)

    for k in range(2, min(order, n) + 1):
        ck = solve_coefficient(k, state)
        state.c.append(ck)
        state.order = k
        state.provenance[(k, 0)] = "jet extraction, -F_k / lambda_k"
        state.residual_orders[k] = _residual_below(state, k)

    if order >= n + 1:
        state.c_log[(n + 1, 1)] = solve_log_coefficient(state)
        state.order = n + 1
        state.provenance[(n + 1, 1)] = "jet extraction, -F / ((n + 1) K0)"
        state.residual_orders[n + 1] = _residual_below(state, n + 1)
        if with_higher_logs:
            state.provenance[(n + 1, 0)] = "free datum, set to 0"

    for i in range(n + 2, order + 1):
        for j, poly in _solve_higher_order(i, state).items():
            state.c_log[(i, j)] = poly
            state.provenance[(i, j)] = "jet extraction, triangular in log power"
        state.order = i
        state.residual_orders[i] = _residual_below(state, i)
    return state


def trial_response(k, state: ExpansionCoefficients, trials=(0.0, 1.0, 2.0)):
    """Constant term of the order-``t^(k-1)`` coefficient of ``Qbar(u_{k-1} + c t^k)``.

    For ``k = n + 1`` the trial term is ``c t^(n+1) log t`` and the order-``t^n``
    coefficient is returned.
    """
    n = state.n
    base = ExpansionCoefficients(state.params, state.phi, state.c[: min(k - 1, n)], t_order=state.t_order, log_order=state.log_order)
    key = (n + 1, 1) if k == n + 1 else (k, 0)
    out = []
    for c in trials:
        jet = qbar_jet(base.jet(extra={key: float(c)}), state.params)
        out.append(jet.constant_terms()[k - 1, 0])
    return np.array(out)


def _dt_monomial(i, j, m):
    """``d^m/dt^m (t^i (log t)^j)`` as ``{(i', j'): coefficient}``."""
    terms = {(i, j): 1.0}
    for _ in range(m):
        nxt = {}
        for (a, b), c in terms.items():
            if a != 0:
                nxt[(a - 1, b)] = nxt.get((a - 1, b), 0.0) + a * c
            if b != 0:
                nxt[(a - 1, b - 1)] = nxt.get((a - 1, b - 1), 0.0) + b * c
        terms = {key: c for key, c in nxt.items() if c != 0.0}
    return terms


def evaluate_expansion(coeffs: ExpansionCoefficients, y, t, derivative=(0, 0)):
    """``D_{y'}^tau d_t^m`` of the stored expansion at ``(y', t)``.

    ``derivative = (tau, m)`` where ``tau`` is a multi-index (an int means
    derivatives along ``y_1``). ``y`` and ``t`` may be arrays.
    """
    tau, m = derivative
    nv = len(coeffs.base_point)
    if isinstance(tau, (int, np.integer)):
        tau = (int(tau),) + (0,) * (nv - 1)
    tau = tuple(tau)
    y = list(y) if isinstance(y, (list, tuple, np.ndarray)) else [y]
    t = np.asarray(t, dtype=float)
    total = 0.0
    need_log = False
    for (i, j), poly in coeffs.terms().items():
        if not poly.coeffs.any():
            continue
        if sum(tau) > poly.degree:
            raise DerivativeOrderTooHigh(
                f"tangential derivative of order {sum(tau)} exceeds degree {poly.degree} of c_({i},{j})"
            )
        dpoly = poly
        for axis, count in enumerate(tau):
            for _ in range(count):
                dpoly = dpoly.diff(axis)
        cval = dpoly.evaluate(y)
        for (a, b), c in _dt_monomial(i, j, m).items():
            if b:
                need_log = True
                if np.any(t <= 0):
                    raise NonPositiveT("log terms need t > 0")
                term = c * t**a * np.log(t) ** b
            elif a < 0:
                if np.any(t <= 0):
                    raise NonPositiveT(f"t^{a} needs t > 0")
                term = c * t**a
            else:
                term = c * t**a if a else c * np.ones_like(t)
            total = total + cval * term
    if np.any(t < 0) and not need_log:
        raise NonPositiveT("t must be nonnegative")
    return total
