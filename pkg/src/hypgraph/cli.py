"""Command-line front end: ``hypgraph {expand,solve,verify,sphere} --config FILE``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .barriers import (
    BoundaryProblem,
    SphereBarrier,
    barrier_value,
    perturbed_sphere_problem,
    plane_problem,
    polynomial_problem,
    sphere_problem,
)
from .config import RunConfig, load_config
from .errors import ConfigError, HypgraphError, MissingArtifact, SolverError
from .expansion import ExpansionCoefficients, build_expansion, evaluate_expansion
from .geometry import CurvatureParams
from .series import TangentialPoly
from .solver import Field, Grid, newton_solve
from .verify import (
    CheckResult,
    VerificationReport,
    check_barrier_ordering,
    check_derivative_bounds,
    check_expansion_remainder,
    check_first_order_remainder,
    supersolution_search,
)

log = logging.getLogger("hypgraph")

EXIT_OK, EXIT_CONFIG, EXIT_EXPANSION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4, 5
COEFFS_FILE = "coefficients.json"


def fmt(x) -> str:
    """Shortest round-trip decimal of a float."""
    return repr(float(x))


def params_of(cfg: RunConfig) -> CurvatureParams:
    return CurvatureParams(cfg.n, cfg.l, cfg.sigma)


def build_problem(cfg: RunConfig) -> BoundaryProblem:
    n = cfg.n
    if cfg.phi_kind == "sphere":
        return sphere_problem(n, cfg.sigma, cfg.alpha, None, cfg.phi_value, cfg.gradient)
    if cfg.phi_kind == "plane":
        return plane_problem(n, cfg.sigma, cfg.slope, cfg.offset, cfg.alpha)
    if cfg.phi_kind == "perturbed_sphere":
        return perturbed_sphere_problem(n, cfg.sigma, cfg.alpha, cfg.epsilon)
    poly = TangentialPoly(tuple(cfg.phi_base), max(cfg.degree, max((sum(e) for e, _ in cfg.phi_terms), default=0)))
    coeffs = dict(poly.items())
    for exps, c in cfg.phi_terms:
        coeffs[exps] = coeffs.get(exps, 0.0) + c
    return polynomial_problem(TangentialPoly(tuple(cfg.phi_base), poly.degree, coeffs), n)


def build_coefficients(cfg: RunConfig, problem: BoundaryProblem) -> ExpansionCoefficients:
    base = (0.0,) * (cfg.n - 1)
    phi = problem.phi_taylor(base, cfg.degree)
    return build_expansion(phi, params_of(cfg), cfg.order, cfg.higher_logs, cfg.t_order, cfg.log_order)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int, np.integer)) and not isinstance(v, bool) else fmt(v) for v in row])


def _out(cfg):
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


def cmd_expand(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    coeffs = build_coefficients(cfg, problem)
    out = _out(cfg)
    (out / COEFFS_FILE).write_text(json.dumps(coeffs.to_dict(), indent=1, sort_keys=True) + "\n")
    _write_csv(out / "residual_orders.csv", ["k", "max_abs_coeff_below_k"], sorted(coeffs.residual_orders.items()))
    log.info("expansion through order %d written to %s", coeffs.order, out)
    return EXIT_OK


def grid_sequence(cfg: RunConfig):
    return [
        Grid(cfg.r, cfg.delta, (cfg.n_y - 1) * 2**j + 1, (cfg.n_t - 1) * 2**j + 1, cfg.n)
        for j in range(cfg.refinements)
    ]


def _solution_name(grid):
    return f"solution_{grid.n_y}x{grid.n_t}.csv"


def write_solution(path: Path, f: Field):
    y, t = f.grid.coordinates()
    cols = [v.ravel() for v in y] + [t.ravel(), f.values.ravel()]
    header = [f"y{a + 1}" for a in range(len(y))] + ["t", "u"]
    _write_csv(path, header, zip(*cols))


def read_solution(path: Path, grid: Grid) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] != int(np.prod(grid.shape)):
        raise MissingArtifact(f"{path} does not match a {grid.shape} grid")
    return Field(grid, data[:, -1].reshape(grid.shape), "solver")


def boundary_source(cfg: RunConfig, problem: BoundaryProblem):
    """``(phi, boundary, label)`` for the Dirichlet data."""
    if cfg.source == "expansion":
        coeffs = build_coefficients(cfg, problem)

        def boundary(y, t):
            return evaluate_expansion(coeffs, list(y), np.maximum(t, 1e-300))

        return problem.phi, boundary, "expansion"
    return problem.phi, problem.boundary_value, "closed form" if problem.exact is not None else "data"


def cmd_solve(cfg: RunConfig) -> int:
    problem = build_problem(cfg)
    params = params_of(cfg)
    phi, boundary, label = boundary_source(cfg, problem)
    out = _out(cfg)
    table = []
    for grid in grid_sequence(cfg):
        tag = f"{grid.n_y}x{grid.n_t}"
        try:
            f, report = newton_solve(grid, params, phi, boundary, cfg.initial, cfg.tol, cfg.max_iter, source=label)
        except SolverError as exc:
            if exc.report is not None:
                _write_csv(out / f"newton_{tag}.csv", ["iter", "residual", "damping", "min_eig"], exc.report.rows())
            print(f"solver failed on {tag}: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        _write_csv(out / f"newton_{tag}.csv", ["iter", "residual", "damping", "min_eig"], report.rows())
        write_solution(out / _solution_name(grid), f)
        if problem.exact is not None and cfg.source == "data":
            y, t = grid.coordinates()
            err = float(np.abs(f.values - problem.exact(y, t)).max())
            table.append([grid.n_y, grid.n_t, grid.h_y, grid.h_t, err])
    if table:
        rows = []
        for i, row in enumerate(table):
            order = np.log(table[i - 1][4] / row[4]) / np.log(table[i - 1][2] / row[2]) if i and row[4] > 0 else float("nan")
            rows.append(row + [order])
        _write_csv(out / "refinement.csv", ["n_y", "n_t", "h_y", "h_t", "max_error", "order"], rows)
    return EXIT_OK


def _load_coefficients(out: Path) -> ExpansionCoefficients:
    path = out / COEFFS_FILE
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run 'expand' first")
    return ExpansionCoefficients.from_dict(json.loads(path.read_text()))


def _latest_solution(cfg: RunConfig):
    for grid in reversed(grid_sequence(cfg)):
        path = cfg.output_dir / _solution_name(grid)
        if path.exists():
            return read_solution(path, grid)
    return None


def run_checks(cfg: RunConfig, coeffs: ExpansionCoefficients, problem: BoundaryProblem, field_: Field | None) -> VerificationReport:
    params = coeffs.params
    bad = [k for k in cfg.k_list if k > coeffs.order]
    if bad:
        raise ConfigError(f"verify.k_list: orders {bad} exceed the solved order {coeffs.order}", key="verify.k_list", line=cfg.lines.get(("verify", "k_list")))
    sources = []
    if problem.exact is not None:
        sources.append(problem)
    if field_ is not None:
        sources.append(field_)
    report = VerificationReport()
    if "first_order" in cfg.checks:
        for s in sources:
            report.add(check_first_order_remainder(s, problem.phi, params, cfg.t_window))
    if "remainder" in cfg.checks and sources:
        s = sources[0]
        for k in cfg.k_list:
            for tau, m in cfg.derivative_list:
                report.add(check_expansion_remainder(s, coeffs, k, (tau, m), cfg.t_window))
    if "barrier" in cfg.checks and problem.lower is not None:
        grid = Grid(cfg.r, cfg.delta, cfg.n_y, cfg.n_t, cfg.n)
        for s in sources:
            pts = grid.coordinates() if not isinstance(s, Field) else None
            report.add(check_barrier_ordering(s, problem.lower, problem.upper, pts))
    if "derivative_bounds" in cfg.checks:
        for s in sources:
            for entry in check_derivative_bounds(s, problem.phi, params):
                report.add(entry)
    if "supersolution" in cfg.checks:
        A, history = supersolution_search(coeffs, cfg.supersolution_delta)
        worst = history[-1][1]
        report.add(CheckResult("supersolution_search", worst, 1e-10, A is not None, "expansion u*", detail={"A": A}))
    return report


def cmd_verify(cfg: RunConfig) -> int:
    out = cfg.output_dir
    coeffs = _load_coefficients(out)
    problem = build_problem(cfg)
    report = run_checks(cfg, coeffs, problem, _latest_solution(cfg))
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(report.to_text())
    (out / "fits.csv").write_text(report.to_csv())
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_sphere(cfg: RunConfig) -> int:
    """Sample the interior and exterior barriers of the configured data on the grid."""
    problem = build_problem(cfg)
    if problem.lower is None:
        raise ConfigError("phi.kind has no barrier spheres", key="phi.kind")
    grid = Grid(cfg.r, cfg.delta, cfg.n_y, cfg.n_t, cfg.n)
    y, t = grid.coordinates()
    vals = []
    for b in (problem.lower, problem.upper):
        vals.append(_masked_barrier(y, t, b))
    out = _out(cfg)
    header = [f"y{a + 1}" for a in range(len(y))] + ["t", "lower", "upper"]
    _write_csv(out / "barriers.csv", header, zip(*([v.ravel() for v in y] + [t.ravel()] + [v.ravel() for v in vals])))
    return EXIT_OK


def _masked_barrier(y, t, barrier: SphereBarrier):
    P = barrier.center
    rho = barrier.R**2 - (t - barrier.center_height) ** 2 - sum((ya - P[a]) ** 2 for a, ya in enumerate(y))
    out = np.full(t.shape, np.nan)
    ok = rho >= 0
    out[ok] = barrier_value([ya[ok] for ya in y], t[ok], barrier)
    return out


COMMANDS = {"expand": cmd_expand, "solve": cmd_solve, "verify": cmd_verify, "sphere": cmd_sphere}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="INI configuration file")
    common.add_argument("--output", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized property checks")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="hypgraph", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("expand", parents=[common], help="solve the boundary expansion")
    sub.add_parser("solve", parents=[common], help="run the Newton solver on the slab")
    sub.add_parser("verify", parents=[common], help="run the decay and sign checks")
    sub.add_parser("sphere", parents=[common], help="sample the barrier spheres")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is not None:
        np.random.seed(args.seed)
    try:
        cfg = load_config(args.config)
        if args.output:
            cfg.output_dir = Path(args.output)
        return COMMANDS[args.command](cfg)
    except (ConfigError, MissingArtifact) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except HypgraphError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_EXPANSION if args.command == "expand" else EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
