"""Command-line experiment runner.

    fracthj <kind> --config <path> [--out <dir>] [--levels N] [--seed S] [--quiet]

Exit codes: 0 success, 2 configuration error, 3 Picard non-convergence,
4 stability abort.  Outputs are a solution CSV, a diagnostics CSV, a plain
text report and ``manifest.json``; all floats are written with 17
significant digits and nothing time- or host-dependent is recorded, so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import (
    FpProblem,
    adjoint_problem,
    crossed_quantity,
    duality_terms,
    mass_deviation,
    solve_fp_backward,
)
from .config import KINDS, ExperimentConfig, load_config
from .errors import ConfigError, ConvergenceError, SolverError, StabilityError
from .exprs import Expr, caputo_of_monomials, parse_expr
from .frac_calc import TimeGrid, TimeSeries, caputo_forward
from .hamiltonians import Hamiltonian, check_structural_assumptions, make_hamiltonian
from .hj import (
    HjProblem,
    comparison_bound_gap,
    fixed_point_residual,
    gradient_lp_norm,
    solve_hj_continued,
    solve_hj_picard,
)
from .linear import LinearProblem, max_principle_gap, solve_heat_l1, solve_heat_mild
from .mittag_leffler import gamma_fn, ml
from .torus import TorusGrid

__all__ = ["main", "run", "convergence_study", "fitted_order"]

log = logging.getLogger("fracthj")

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_STABILITY = 0, 2, 3, 4
MANIFEST = "manifest.json"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)

    def render(self) -> str:
        lines = [f"# manifest: {MANIFEST}", ",".join(self.header)]
        lines += [",".join(_fmt(v) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


@dataclass
class Outcome:
    tables: dict[str, Table] = field(default_factory=dict)
    diagnostics: Table = field(default_factory=lambda: Table(["quantity", "value"]))
    report: list[str] = field(default_factory=list)

    def diag(self, name: str, value) -> None:
        self.diagnostics.rows.append([name, value])
        self.report.append(f"{name:32s} {_fmt(value)}")


# -- problem assembly ------------------------------------------------------------------


def _grids(cfg: ExperimentConfig, steps: int | None = None, n: int | None = None) -> tuple[TorusGrid, TimeGrid]:
    try:
        grid = TorusGrid(cfg.dim, cfg.n if n is None else n)
        tgrid = TimeGrid(cfg.t_final, cfg.steps if steps is None else steps, cfg.beta, cfg.grading)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return grid, tgrid


def _expr(cfg: ExperimentConfig, key: str, default=None) -> Expr | None:
    text = cfg.data.get(key, default)
    if text is None:
        return None
    return parse_expr(text, beta=cfg.beta, sigma=cfg.sigma, dim=cfg.dim)


def _hamiltonian(cfg: ExperimentConfig) -> Hamiltonian:
    spec = dict(cfg.hamiltonian)
    coef = parse_expr(spec.get("coefficient", 1.0), dim=cfg.dim)
    if coef.depends_on_time():
        raise ConfigError("the Hamiltonian coefficient must not depend on t")

    def h(*coords):
        return coef.evaluate(coords)

    spec["coefficient"] = h
    try:
        return make_hamiltonian(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _space_gradient(e: Expr, grid: TorusGrid, t: np.ndarray) -> np.ndarray:
    comps = [e.diff(v).evaluate(grid.coords, t) for v in ("x", "y")[: grid.dim]]
    return np.stack(comps, axis=0)  # (d, M+1, *shape)


def _heat_problem(cfg: ExperimentConfig, grid: TorusGrid, tgrid: TimeGrid):
    t = tgrid.nodes
    drift_exprs = [parse_expr(d, beta=cfg.beta, sigma=cfg.sigma, dim=cfg.dim) for d in cfg.data.get("drift", [])]
    if drift_exprs and len(drift_exprs) != grid.dim:
        raise ConfigError(f"drift needs {grid.dim} components")
    drift = np.stack([d.evaluate(grid.coords, t) for d in drift_exprs], axis=1) if drift_exprs else None
    m = _expr(cfg, "manufactured")
    exact = _expr(cfg, "exact")
    if m is not None:
        exact = m
        u0 = m.at_time_zero().evaluate(grid.coords)
        source = caputo_of_monomials(m, cfg.beta).evaluate(grid.coords, t) - cfg.sigma * m.laplacian(
            grid.dim
        ).evaluate(grid.coords, t)
        if drift is not None:
            source = source + np.sum(np.moveaxis(drift, 1, 0) * _space_gradient(m, grid, t), axis=0)
    else:
        u0 = _expr(cfg, "u0", 0.0).evaluate(grid.coords)
        s = _expr(cfg, "source")
        source = None if s is None else s.evaluate(grid.coords, t)
    try:
        p = LinearProblem(grid, tgrid, cfg.sigma, u0, source=source, drift=drift)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return p, exact


def _hj_problem(cfg: ExperimentConfig, grid: TorusGrid, tgrid: TimeGrid):
    H = _hamiltonian(cfg)
    t = tgrid.nodes
    m = _expr(cfg, "manufactured")
    exact = _expr(cfg, "exact")
    if m is not None:
        exact = m
        u0 = m.at_time_zero().evaluate(grid.coords)
        Du = _space_gradient(m, grid, t)
        V = (
            caputo_of_monomials(m, cfg.beta).evaluate(grid.coords, t)
            - cfg.sigma * m.laplacian(grid.dim).evaluate(grid.coords, t)
            + H.value(Du, H.coefficient_on(grid.coords))
        )
    else:
        u0 = _expr(cfg, "u0", 0.0).evaluate(grid.coords)
        V = _expr(cfg, "V", 0.0).evaluate(grid.coords, t)
    s = cfg.solver
    try:
        p = HjProblem(
            grid, tgrid, cfg.sigma, H, V, u0, tol=s["tol"], max_picard=s["max_picard"], inner=s["inner"],
            dealias=s["dealias"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return p, exact


def _terminal_density(cfg: ExperimentConfig, grid: TorusGrid) -> tuple[np.ndarray, float]:
    rho = _expr(cfg, "rho_tau", 1.0).evaluate(grid.coords)
    if np.any(rho < 0):
        raise ConfigError("rho_tau must be nonnegative")
    mass = float(grid.mean(rho))
    if not mass > 0:
        raise ConfigError("rho_tau must have positive mass")
    return rho / mass, mass


def _solve_hj(p: HjProblem, cfg: ExperimentConfig):
    window = cfg.solver.get("window")
    if window is not None:
        return solve_hj_continued(p, min(float(window), p.tgrid.t_final))
    return solve_hj_picard(p)


# -- output helpers --------------------------------------------------------------------


def _field_table(grid: TorusGrid, nodes: np.ndarray, **fields: np.ndarray) -> Table:
    names = list(fields)
    header = ["t", "x"] + (["y"] if grid.dim == 2 else []) + names
    coords = [c.ravel() for c in grid.coords]
    table = Table(header)
    flat = {k: v.reshape(v.shape[0], -1) for k, v in fields.items()}
    for i, t in enumerate(nodes):
        for j in range(grid.size):
            table.rows.append([float(t)] + [float(c[j]) for c in coords] + [float(flat[k][i, j]) for k in names])
    return table


def _exact_error(u: TimeSeries, exact: Expr | None, grid: TorusGrid) -> float | None:
    if exact is None:
        return None
    ref = exact.evaluate(grid.coords, u.grid.nodes)
    return float(np.max(np.abs(u.values - ref)))


def fitted_order(steps, errors) -> float:
    """Least-squares slope of -log(error) against log(steps)."""
    steps = np.asarray(steps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("nan")
    slope = np.polyfit(np.log(steps[ok]), np.log(errors[ok]), 1)[0]
    return float(-slope)


# -- kinds -------------------------------------------------------------------------------


def _run_ml_table(cfg: ExperimentConfig, out: Outcome) -> None:
    spec = cfg.ml_table
    alpha = float(spec.get("alpha", cfg.beta))
    b = float(spec.get("b", 1.0))
    table = Table(["alpha", "b", "z", "value", "method", "est_error"])
    for z in spec["z"]:
        r = ml(alpha, b, float(z))
        table.rows.append([r.alpha, r.b, r.z, r.value, r.method, r.est_error])
    out.tables["ml_table.csv"] = table
    out.diag("points", len(spec["z"]))
    out.diag("max_est_error", max(row[5] for row in table.rows))


def _run_heat(cfg: ExperimentConfig, out: Outcome) -> None:
    grid, tgrid = _grids(cfg)
    p, exact = _heat_problem(cfg, grid, tgrid)
    use_mild = cfg.solver["heat"] == "mild" and p.drift is None
    u = solve_heat_mild(p) if use_mild else solve_heat_l1(p)
    out.tables["solution.csv"] = _field_table(grid, tgrid.nodes, u=u.values)
    out.diag("solver", "mild" if use_mild else "l1")
    out.diag("max_principle_gap", max_principle_gap(u, p))
    mean = u.values.reshape(u.values.shape[0], -1).mean(axis=1)
    out.diag("mean_change", float(np.max(np.abs(mean - mean[0]))))
    if p.drift is None:
        other = solve_heat_l1(p) if use_mild else solve_heat_mild(p)
        out.diag("mild_vs_l1_sup", float(np.max(np.abs(other.values - u.values))))
    err = _exact_error(u, exact, grid)
    if err is not None:
        out.diag("max_error_vs_exact", err)


def _hj_diagnostics(cfg, p, u, trace, exact, out: Outcome) -> None:
    trace_table = Table(["iteration", "delta_sup", "delta_l2", "ratio"])
    ratios = trace.ratios
    for m, (ds, dl) in enumerate(zip(trace.delta_sup, trace.delta_l2)):
        trace_table.rows.append([m, ds, dl, ratios[m - 1] if m >= 1 else float("nan")])
    out.tables["picard_trace.csv"] = trace_table
    out.diag("picard_iterations", trace.iterations)
    out.diag("windows", len(trace.windows) if trace.windows else 1)
    final = trace.final_ratios(3)
    out.diag("max_final_ratio", max(final) if final else float("nan"))
    out.diag("outside_guarantee", trace.outside_guarantee)
    out.diag("comparison_bound_gap", comparison_bound_gap(u, p))
    out.diag("fixed_point_residual_l2", fixed_point_residual(u, p, norm="l2"))
    out.diag("fixed_point_residual_sup", fixed_point_residual(u, p, norm="sup"))
    for q in (2, 4, 8):
        out.diag(f"gradient_L{q}", gradient_lp_norm(u, p.grid, q))
    err = _exact_error(u, exact, p.grid)
    if err is not None:
        out.diag("max_error_vs_exact", err)
    rep = check_structural_assumptions(p.H, cfg.assumption_samples, cfg.dim, seed=cfg.seed)
    for name, c in rep.conditions.items():
        out.diag(f"{name}_C", c.C)
        out.diag(f"{name}_c", c.c)
        out.diag(f"{name}_margin", c.margin)


def _run_hj(cfg: ExperimentConfig, out: Outcome) -> None:
    grid, tgrid = _grids(cfg)
    p, exact = _hj_problem(cfg, grid, tgrid)
    u, trace = _solve_hj(p, cfg)
    out.tables["solution.csv"] = _field_table(grid, tgrid.nodes, u=u.values)
    _hj_diagnostics(cfg, p, u, trace, exact, out)


def _run_fp(cfg: ExperimentConfig, out: Outcome) -> None:
    grid, tgrid = _grids(cfg)
    rho_tau, raw_mass = _terminal_density(cfg, grid)
    drift_exprs = [parse_expr(d, beta=cfg.beta, sigma=cfg.sigma, dim=cfg.dim) for d in cfg.data.get("drift", [])]
    if drift_exprs and len(drift_exprs) != grid.dim:
        raise ConfigError(f"drift needs {grid.dim} components")
    drift = np.stack([d.evaluate(grid.coords, tgrid.nodes) for d in drift_exprs], axis=1) if drift_exprs else None
    p = FpProblem(grid, tgrid, cfg.sigma, rho_tau, drift)
    rho = solve_fp_backward(p, cfg.solver["scheme"])
    out.tables["solution.csv"] = _field_table(grid, tgrid.nodes, rho=rho.values)
    out.diag("scheme", cfg.solver["scheme"])
    out.diag("terminal_mass_before_normalization", raw_mass)
    out.diag("mass_deviation", mass_deviation(rho))
    out.diag("min_density", float(rho.values.min()))
    exact = _expr(cfg, "exact")
    err = _exact_error(rho, exact, grid)
    if err is not None:
        out.diag("max_error_vs_exact", err)


def _duality_run(cfg: ExperimentConfig, grid: TorusGrid, tgrid: TimeGrid):
    p, exact = _hj_problem(cfg, grid, tgrid)
    u, trace = _solve_hj(p, cfg)
    rho_tau, _ = _terminal_density(cfg, grid)
    rho = solve_fp_backward(adjoint_problem(u, p, rho_tau), cfg.solver["scheme"])
    return p, exact, u, trace, rho


def _run_duality(cfg: ExperimentConfig, out: Outcome) -> None:
    grid, tgrid = _grids(cfg)
    p, exact, u, trace, rho = _duality_run(cfg, grid, tgrid)
    out.tables["solution.csv"] = _field_table(grid, tgrid.nodes, u=u.values, rho=rho.values)
    terms = duality_terms(u, rho, p)
    for k, v in terms.items():
        out.diag(f"duality_{k}", v)
    out.diag("duality_residual", abs(terms["lhs"] - terms["initial"] - terms["source"] - terms["hamilton"]))
    out.diag("crossed_quantity", crossed_quantity(u, rho, grid, p.H.gamma))
    out.diag("mass_deviation", mass_deviation(rho))
    out.diag("min_density", float(rho.values.min()))
    _hj_diagnostics(cfg, p, u, trace, exact, out)


# -- convergence study ---------------------------------------------------------------------


class StudyAborted(Exception):
    def __init__(self, table: Table, cause: Exception):
        super().__init__(str(cause))
        self.table = table
        self.cause = cause


def _level_solution(cfg, target, steps, n):
    """(nodes, values on the grid, exact-or-None, grid) for one refinement level."""
    grid, tgrid = _grids(cfg, steps, n)
    if target == "heat":
        p, exact = _heat_problem(cfg, grid, tgrid)
        use_mild = cfg.solver["heat"] == "mild" and p.drift is None
        u = solve_heat_mild(p) if use_mild else solve_heat_l1(p)
        return u, exact, grid
    p, exact = _hj_problem(cfg, grid, tgrid)
    u, _ = _solve_hj(p, cfg)
    return u, exact, grid


def convergence_study(cfg: ExperimentConfig, levels: int) -> Table:
    """Error against the configured oracle for ``levels`` refinements.

    Each level doubles the number of time steps (and the spatial resolution
    when ``refine_space`` is set).  Without a closed-form oracle the finest
    level is the reference.  On failure :class:`StudyAborted` carries the
    rows computed so far.
    """
    if levels < 3:
        raise ConfigError("a convergence study needs at least 3 levels")
    spec = cfg.convergence
    target = spec["target"]
    refine_space = bool(spec.get("refine_space", False))
    table = Table(["level", "steps", "n", "error", "observed_order"])
    steps_list = [cfg.steps * 2**k for k in range(levels)]
    n_list = [cfg.n * 2**k if refine_space else cfg.n for k in range(levels)]
    errors: list[float] = []

    def add(level, err):
        order = float("nan")
        if errors and err > 0 and errors[-1] > 0:
            order = math.log(errors[-1] / err) / math.log(steps_list[level] / steps_list[level - 1])
        errors.append(err)
        table.rows.append([level, steps_list[level], n_list[level], err, order])

    try:
        if target == "caputo-power":
            g = float(spec.get("gamma", 2.0))
            for k in range(levels):
                tgrid = _grids(cfg, steps_list[k])[1]
                t = tgrid.nodes
                d = caputo_forward(TimeSeries(tgrid, t**g)).values[1:]
                exact = gamma_fn(g + 1) / gamma_fn(g + 1 - cfg.beta) * t[1:] ** (g - cfg.beta)
                add(k, float(np.max(np.abs(d - exact))))
        elif target == "duality":
            for k in range(levels):
                grid, tgrid = _grids(cfg, steps_list[k], n_list[k])
                p, _, u, _, rho = _duality_run(cfg, grid, tgrid)
                t = duality_terms(u, rho, p)
                add(k, abs(t["lhs"] - t["initial"] - t["source"] - t["hamilton"]))
        else:
            sols = []
            for k in range(levels):
                u, exact, grid = _level_solution(cfg, target, steps_list[k], n_list[k])
                if exact is not None:
                    add(k, _exact_error(u, exact, grid))
                else:
                    sols.append((u, grid))
            if sols:
                fine, fgrid = sols[-1]
                for k, (u, grid) in enumerate(sols[:-1]):
                    tstride = steps_list[-1] // steps_list[k]
                    sstride = fgrid.n // grid.n
                    sl = (slice(None, None, tstride),) + (slice(None, None, sstride),) * grid.dim
                    add(k, float(np.max(np.abs(u.values - fine.values[sl]))))
    except (SolverError, ConfigError) as exc:
        raise StudyAborted(table, exc) from exc
    return table


def _run_convergence(cfg: ExperimentConfig, out: Outcome, levels: int) -> None:
    try:
        table = convergence_study(cfg, levels)
    except StudyAborted as exc:
        out.tables["convergence.csv"] = exc.table
        raise exc.cause
    out.tables["convergence.csv"] = table
    steps = [r[1] for r in table.rows]
    errs = [r[3] for r in table.rows]
    out.diag("target", cfg.convergence["target"])
    out.diag("levels", len(table.rows))
    out.diag("fitted_order", fitted_order(steps, errs))
    for r in table.rows:
        out.report.append(f"  level {r[0]}: steps={r[1]} n={r[2]} error={_fmt(r[3])}")


# -- driver ------------------------------------------------------------------------------------


def _resolved(cfg: ExperimentConfig) -> dict:
    return {
        "kind": cfg.kind,
        "beta": cfg.beta,
        "sigma": cfg.sigma,
        "dim": cfg.dim,
        "n": cfg.n,
        "t_final": cfg.t_final,
        "steps": cfg.steps,
        "grading": cfg.grading,
        "hamiltonian": cfg.hamiltonian,
        "data": cfg.data,
        "solver": cfg.solver,
        "ml_table": cfg.ml_table,
        "convergence": cfg.convergence,
        "assumption_samples": cfg.assumption_samples,
        "seed": cfg.seed,
    }


def _write(out_dir: Path, cfg: ExperimentConfig, out: Outcome, status: str, error: dict | None) -> list[str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for name, table in out.tables.items():
        (out_dir / name).write_text(table.render(), encoding="utf-8")
        files.append(name)
    (out_dir / "diagnostics.csv").write_text(out.diagnostics.render(), encoding="utf-8")
    files.append("diagnostics.csv")
    report = [f"fracthj {__version__}: {cfg.kind} ({status})"] + out.report
    (out_dir / "report.txt").write_text("\n".join(report) + "\n", encoding="utf-8")
    files.append("report.txt")
    if error is not None:
        (out_dir / "error.json").write_text(json.dumps(error, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        files.append("error.json")
    manifest = {
        "tool": "fracthj",
        "version": __version__,
        "status": status,
        "config": cfg.raw,
        "resolved": _resolved(cfg),
        "files": sorted(files),
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def _error_record(kind: str, exc: Exception, code: int) -> dict:
    rec = {"error": kind, "exit_code": code, "message": str(exc)}
    t_reached = getattr(exc, "t_reached", None)
    if t_reached is not None:
        rec["t_reached"] = t_reached
    adm = getattr(exc, "admissible_dt", None)
    if adm is not None:
        rec["admissible_dt"] = adm
    trace = getattr(exc, "trace", None)
    if trace is not None:
        rec["picard_delta_sup"] = trace.delta_sup[-10:]
    return rec


def run(cfg: ExperimentConfig, out_dir: Path, levels: int = 3, quiet: bool = False) -> int:
    """Run one experiment and write its outputs; returns the exit code."""
    out = Outcome()
    runners = {
        "ml-table": _run_ml_table,
        "heat": _run_heat,
        "hj": _run_hj,
        "fp": _run_fp,
        "duality": _run_duality,
    }
    try:
        if cfg.kind == "convergence":
            _run_convergence(cfg, out, levels)
        else:
            runners[cfg.kind](cfg, out)
    except ConfigError as exc:
        _emit(_error_record("config", exc, EXIT_CONFIG))
        return EXIT_CONFIG
    except (ConvergenceError, StabilityError) as exc:
        code = EXIT_CONVERGENCE if isinstance(exc, ConvergenceError) else EXIT_STABILITY
        rec = _error_record("convergence" if code == EXIT_CONVERGENCE else "stability", exc, code)
        _write(out_dir, cfg, out, "error", rec)
        _emit(rec)
        return code
    report = _write(out_dir, cfg, out, "ok", None)
    if not quiet:
        print("\n".join(report))
    return EXIT_OK


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True), file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracthj", description="Time-fractional Hamilton-Jacobi experiments.")
    parser.add_argument("kind", choices=KINDS, help="experiment type")
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument("--out", default=None, help="output directory (default: config 'output' or ./fracthj_out)")
    parser.add_argument("--levels", type=int, default=3, help="refinement levels for convergence studies")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--quiet", action="store_true", help="suppress the report on stdout")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.kind)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg.seed = args.seed
        if args.levels < 3 and cfg.kind == "convergence":
            raise ConfigError("--levels must be at least 3")
    except ConfigError as exc:
        _emit(_error_record("config", exc, EXIT_CONFIG))
        return EXIT_CONFIG
    out_dir = Path(args.out or cfg.output or "fracthj_out")
    return run(cfg, out_dir, args.levels, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
