"""
INI run configuration.

Grammar (all sections optional except ``[params]`` and ``[phi]``)::

    [params]        n = 2 | 3, l = 0..n-1, sigma in (0, 1)
    [phi]           kind = poly | sphere | plane | perturbed_sphere
                    base = comma list          (poly only; default origin)
                    terms = e1 e2 : c, ...     (poly only; exponents then coefficient)
                    alpha, value, gradient     (sphere)
                    slope, offset              (plane)
                    alpha, epsilon             (perturbed_sphere)
    [truncation]    degree (p), t_order (K), log_order (J), order, higher_logs
    [grid]          r, delta, n_y, n_t, refinements
    [newton]        tol, max_iter
    [solve]         source = data | expansion, initial = nested | first_order
    [verify]        t_window = lo, hi; k_list = 1, 2; derivative_list = tau:m, ...
                    checks = comma list; supersolution_delta
    [output]        dir

Unknown sections or keys are rejected with their line number.
"""
from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

SCHEMA = {
    "params": {"n", "l", "sigma"},
    "phi": {"kind", "base", "terms", "alpha", "value", "gradient", "slope", "offset", "epsilon"},
    "truncation": {"degree", "t_order", "log_order", "order", "higher_logs"},
    "grid": {"r", "delta", "n_y", "n_t", "refinements"},
    "newton": {"tol", "max_iter"},
    "solve": {"source", "initial"},
    "verify": {"t_window", "k_list", "derivative_list", "checks", "supersolution_delta"},
    "output": {"dir"},
}
PHI_KINDS = ("poly", "sphere", "plane", "perturbed_sphere")
CHECKS = ("first_order", "remainder", "barrier", "derivative_bounds", "supersolution")


@dataclass
class RunConfig:
    n: int
    l: int
    sigma: float
    phi_kind: str
    phi_base: tuple = ()
    phi_terms: list = field(default_factory=list)
    alpha: float = 0.8
    phi_value: float = 0.0
    gradient: tuple | None = None
    slope: tuple | None = None
    offset: float = 0.0
    epsilon: float = 0.2
    degree: int | None = None
    t_order: int | None = None
    log_order: int = 1
    order: int | None = None
    higher_logs: bool = False
    r: float = 0.2
    delta: float = 0.2
    n_y: int = 51
    n_t: int = 51
    refinements: int = 1
    tol: float = 1e-10
    max_iter: int = 30
    source: str = "data"
    initial: str = "nested"
    t_window: tuple = (1e-2, 1e-1)
    k_list: tuple = ()
    derivative_list: tuple = (((0,), 0),)
    checks: tuple = CHECKS[:4]
    supersolution_delta: float = 0.25
    output_dir: Path = Path("out")
    lines: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.degree = self.n + 4 if self.degree is None else self.degree
        self.order = self.n + 1 if self.order is None else self.order
        self.t_order = max(self.n + 2, self.order) if self.t_order is None else self.t_order
        if not self.k_list:
            self.k_list = tuple(range(1, self.order + 1))


def _line_map(text):
    """``{(section, key): line}`` plus section header lines under key ``None``."""
    out = {}
    section = None
    for num, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            out[(section, None)] = num
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", line)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = num
    return out


def _floats(text, key, line):
    try:
        return tuple(float(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected a list of numbers, got {text!r}", key=key, line=line) from None


def _parse_terms(text, nv, key, line):
    terms = []
    for chunk in filter(None, (c.strip() for c in text.split(","))):
        if ":" not in chunk:
            raise ConfigError(f"{key}: term {chunk!r} must look like 'e1 e2 : coefficient'", key=key, line=line)
        lhs, rhs = chunk.split(":", 1)
        try:
            exps = tuple(int(v) for v in lhs.split())
            coef = float(rhs)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse term {chunk!r}", key=key, line=line) from None
        if len(exps) != nv or any(e < 0 for e in exps):
            raise ConfigError(f"{key}: term {chunk!r} needs {nv} nonnegative exponents", key=key, line=line)
        terms.append((exps, coef))
    return terms


def _parse_derivatives(text, nv, key, line):
    out = []
    for chunk in filter(None, (c.strip() for c in text.split(","))):
        try:
            tau_s, m_s = chunk.split(":")
            tau = tuple(int(v) for v in tau_s.split())
            m = int(m_s)
        except ValueError:
            raise ConfigError(f"{key}: entry {chunk!r} must look like 'tau : m'", key=key, line=line) from None
        if len(tau) == 1 and nv > 1:
            tau = tau + (0,) * (nv - 1)
        if len(tau) != nv or m < 0 or any(v < 0 for v in tau):
            raise ConfigError(f"{key}: entry {chunk!r} needs {nv} tangential orders and m >= 0", key=key, line=line)
        out.append((tau, m))
    return tuple(out)


def parse_config(text: str, path: str | Path | None = None) -> RunConfig:
    """Parse and validate a configuration string."""
    lines = _line_map(text)
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=str(path or "<config>"))
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"malformed configuration: {exc.message if hasattr(exc, 'message') else exc}", line=line) from None

    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", key=section, line=lines.get((section, None)))
        for key in cp[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}", key=f"{section}.{key}", line=lines.get((section, key)))
    for section in ("params", "phi"):
        if section not in cp:
            raise ConfigError(f"missing section [{section}]", key=section)

    def get(section, key, conv, default=None, required=False):
        name = f"{section}.{key}"
        line = lines.get((section, key))
        if section not in cp or key not in cp[section]:
            if required:
                raise ConfigError(f"missing key {name}", key=name, line=lines.get((section, None)))
            return default
        raw = cp[section][key].strip()
        try:
            if conv is bool:
                return cp.getboolean(section, key)
            return conv(raw)
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {raw!r}", key=name, line=line) from None

    def fail(key, msg):
        sec, k = key.split(".")
        raise ConfigError(f"{key}: {msg}", key=key, line=lines.get((sec, k)))

    n = get("params", "n", int, required=True)
    if n not in (2, 3):
        fail("params.n", f"must be 2 or 3, got {n}")
    l = get("params", "l", int, required=True)
    if not 0 <= l < n:
        fail("params.l", f"must satisfy 0 <= l < n, got {l}")
    sigma = get("params", "sigma", float, required=True)
    if not 0.0 < sigma < 1.0:
        fail("params.sigma", f"must lie in (0, 1), got {sigma}")
    nv = n - 1

    kind = get("phi", "kind", str, required=True).lower()
    if kind not in PHI_KINDS:
        fail("phi.kind", f"must be one of {', '.join(PHI_KINDS)}, got {kind!r}")
    kw = {}
    if kind == "poly":
        if "terms" not in cp["phi"]:
            fail("phi.terms", "required for kind = poly")
        kw["phi_terms"] = _parse_terms(cp["phi"]["terms"], nv, "phi.terms", lines.get(("phi", "terms")))
        base = get("phi", "base", lambda s: _floats(s, "phi.base", lines.get(("phi", "base"))), (0.0,) * nv)
        if len(base) != nv:
            fail("phi.base", f"needs {nv} entries")
        kw["phi_base"] = base
    else:
        kw["phi_base"] = (0.0,) * nv
    alpha = get("phi", "alpha", float, 0.8)
    if not alpha > 0:
        fail("phi.alpha", "must be positive")
    kw["alpha"] = alpha
    kw["phi_value"] = get("phi", "value", float, 0.0)
    grad = get("phi", "gradient", lambda s: _floats(s, "phi.gradient", lines.get(("phi", "gradient"))), None)
    if grad is not None and len(grad) != nv:
        fail("phi.gradient", f"needs {nv} entries")
    kw["gradient"] = grad
    slope = get("phi", "slope", lambda s: _floats(s, "phi.slope", lines.get(("phi", "slope"))), None)
    if slope is not None and len(slope) != nv:
        fail("phi.slope", f"needs {nv} entries")
    kw["slope"] = slope
    kw["offset"] = get("phi", "offset", float, 0.0)
    eps = get("phi", "epsilon", float, 0.2)
    if not 0 <= eps < 1.0 / alpha:
        fail("phi.epsilon", "must lie in [0, 1/alpha) to stay below the exterior barrier")
    kw["epsilon"] = eps

    degree = get("truncation", "degree", int)
    order = get("truncation", "order", int)
    t_order = get("truncation", "t_order", int)
    log_order = get("truncation", "log_order", int, 1)
    higher = get("truncation", "higher_logs", bool, False)
    if order is not None and order < 1:
        fail("truncation.order", "must be >= 1")
    if order is not None and order > n + 1 and not higher:
        fail("truncation.order", "orders above n + 1 need higher_logs = true")
    if degree is not None and degree < max(order or n + 1, 2):
        fail("truncation.degree", "must be at least the expansion order")
    if t_order is not None and t_order < max(order or n + 1, n + 1):
        fail("truncation.t_order", "must be at least the expansion order")
    if log_order < 1:
        fail("truncation.log_order", "must be >= 1")

    r = get("grid", "r", float, 0.2)
    delta = get("grid", "delta", float, 0.2)
    n_y = get("grid", "n_y", int, 51)
    n_t = get("grid", "n_t", int, 51)
    refinements = get("grid", "refinements", int, 1)
    if r <= 0:
        fail("grid.r", "must be positive")
    if delta <= 0:
        fail("grid.delta", "must be positive")
    if n_y < 5:
        fail("grid.n_y", "must be >= 5")
    if n_t < 5:
        fail("grid.n_t", "must be >= 5")
    if refinements < 1:
        fail("grid.refinements", "must be >= 1")

    tol = get("newton", "tol", float, 1e-10)
    max_iter = get("newton", "max_iter", int, 30)
    if tol <= 0:
        fail("newton.tol", "must be positive")
    if max_iter < 1:
        fail("newton.max_iter", "must be >= 1")

    source = get("solve", "source", str, "data").lower()
    if source not in ("data", "expansion"):
        fail("solve.source", "must be data or expansion")
    if source == "data" and kind == "poly" and "solve" in cp and "source" in cp["solve"]:
        fail("solve.source", "poly data has no closed-form lateral values; use expansion")
    initial = get("solve", "initial", str, "nested").lower()
    if initial not in ("nested", "first_order"):
        fail("solve.initial", "must be nested or first_order")

    t_window = get("verify", "t_window", lambda s: _floats(s, "verify.t_window", lines.get(("verify", "t_window"))), (1e-2, 1e-1))
    if len(t_window) != 2 or not 0 < t_window[0] < t_window[1]:
        fail("verify.t_window", "needs 0 < lo < hi")
    k_list = get("verify", "k_list", lambda s: tuple(int(v) for v in s.replace(",", " ").split()), ())
    if any(k < 1 for k in k_list):
        fail("verify.k_list", "orders must be >= 1")
    derivs = (((0,) * nv, 0),)
    if "verify" in cp and "derivative_list" in cp["verify"]:
        derivs = _parse_derivatives(cp["verify"]["derivative_list"], nv, "verify.derivative_list", lines.get(("verify", "derivative_list")))
    checks = get("verify", "checks", lambda s: tuple(c.strip().lower() for c in s.split(",") if c.strip()), CHECKS[:4])
    bad = [c for c in checks if c not in CHECKS]
    if bad:
        fail("verify.checks", f"unknown checks {bad}; choose from {', '.join(CHECKS)}")
    sdelta = get("verify", "supersolution_delta", float, 0.25)
    if not 0 < sdelta < 0.5:
        fail("verify.supersolution_delta", "must lie in (0, 1/2)")

    out_dir = Path(get("output", "dir", str, "out"))
    return RunConfig(
        n=n,
        l=l,
        sigma=sigma,
        phi_kind=kind,
        degree=degree,
        t_order=t_order,
        log_order=log_order,
        order=order,
        higher_logs=higher,
        r=r,
        delta=delta,
        n_y=n_y,
        n_t=n_t,
        refinements=refinements,
        tol=tol,
        max_iter=max_iter,
        source=source,
        initial=initial,
        t_window=t_window,
        k_list=k_list,
        derivative_list=derivs,
        checks=checks,
        supersolution_delta=sdelta,
        output_dir=out_dir,
        lines=lines,
        **kw,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path)
