"""Experiment driver: configs, sweeps, CSV results, and the eps-bar helper.

An experiment sweeps (method, dt, epsilon, N) combinations on one benchmark
problem and writes one CSV row per combination.  Sweep points are
independent and may run on a thread pool; rows are assembled in a
deterministic order and written atomically (temp file + rename) once per
run.  With a fixed seed, two runs of the same spec produce identical
numeric fields except wall times.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import problems as pb
from .integrators import IntegratorConfig, integrate
from .linalg import cond2_estimate
from .metrics import ErrorSeries, aggregate_error, error_ingredients

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "ExperimentError",
    "ExperimentSpec",
    "ResultRow",
    "build_problem",
    "epsilon_bar",
    "estimate_dt_fe",
    "initial_state",
    "preset",
    "preset_names",
    "read_csv",
    "run_experiment",
    "write_csv",
]

log = logging.getLogger("imexrb")

PROBLEMS = ("advdiff2d", "advdiff3d", "burgers2d")


class ConfigError(ValueError):
    """Experiment configuration could not be parsed or validated."""


class ExperimentError(RuntimeError):
    """One or more sweep points failed; successful rows were still written."""


@dataclass
class ExperimentSpec:
    """Description of one sweep over a benchmark problem.

    ``epsilons`` entries are either absolute stability tolerances (floats)
    or ``{"gamma": g}`` meaning ``g * eps_bar`` with ``eps_bar`` the inverse
    condition-number estimate of the (linear) system matrix.  ``n_steps``
    normally derives from ``t_final / dt``; an explicit value overrides it
    for every dt (used for degenerate zero-step runs).
    """

    problem: str
    n_per_dim: list = field(default_factory=lambda: [51])
    methods: list = field(default_factory=lambda: ["be", "imexrb"])
    dts: list = field(default_factory=lambda: [2.0 ** -7])
    epsilons: list = field(default_factory=lambda: [{"gamma": 1.0}])
    n_basis: list = field(default_factory=lambda: [10])
    max_inner: int = 100
    t_final: float = 1.0
    n_steps: int | None = None
    seed: int = 0
    timing_repeats: int = 1
    csv_path: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(
                f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        for name in ("n_per_dim", "methods", "dts", "epsilons", "n_basis"):
            if not getattr(self, name):
                raise ConfigError(f"field {name!r} must be a nonempty list")
        for m in self.methods:
            if m not in ("fe", "be", "imexrb"):
                raise ConfigError(f"unknown method {m!r} in 'methods'")
        for e in self.epsilons:
            if isinstance(e, dict):
                if set(e) != {"gamma"} or not e["gamma"] > 0:
                    raise ConfigError(
                        f"epsilon entry {e!r} must be a positive float or "
                        f'{{"gamma": g}} with g > 0')
            elif not (isinstance(e, (int, float)) and 0 < e <= 1):
                raise ConfigError(
                    f"absolute epsilon {e!r} must lie in (0, 1]")
        if self.timing_repeats < 1:
            raise ConfigError("timing_repeats must be at least 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "problem" not in data:
            raise ConfigError("missing required field 'problem'")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentSpec":
        with open(path) as fh:
            text = fh.read()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"{path}: invalid JSON at line {exc.lineno}, column "
                f"{exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top-level value must be an object")
        return cls.from_dict(data)


@dataclass
class ResultRow:
    """One CSV line: a (method, dt, epsilon, N) sweep point's outcome."""

    problem: str
    method: str
    n_per_dim: int
    h: float
    dt: float
    n_steps: int
    epsilon: float
    gamma: float
    n_basis: int
    max_inner: int
    aggregate_error: float
    final_step_error: float
    mean_inner_iterations: float
    max_inner_iterations: int
    total_newton_iterations: int
    total_gmres_iterations: int
    jacobian_assemblies: int
    rhs_evaluations: int
    jacobian_matvecs: int
    max_reduced_dim: int
    flagged_steps: int
    diverged: bool
    dt_fe: float
    wall_time_seconds: float
    seed: int


CSV_COLUMNS = list(ResultRow.__dataclass_fields__)

_INT_COLUMNS = {"n_per_dim", "n_steps", "n_basis", "max_inner",
                "max_inner_iterations", "total_newton_iterations",
                "total_gmres_iterations", "jacobian_assemblies",
                "rhs_evaluations", "jacobian_matvecs", "max_reduced_dim",
                "flagged_steps", "seed"}
_STR_COLUMNS = {"problem", "method"}
_BOOL_COLUMNS = {"diverged"}


def _format_value(col, value):
    if col in _STR_COLUMNS:
        return str(value)
    if col in _BOOL_COLUMNS:
        return "1" if value else "0"
    if col in _INT_COLUMNS:
        return str(int(value))
    return f"{float(value):.16e}"


def write_csv(rows, path):
    """Write result rows atomically (temp file in the same directory + rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp")
    with open(tmp, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_format_value(c, getattr(row, c))
                              for c in CSV_COLUMNS) + "\n")
    os.replace(tmp, path)


def read_csv(path):
    """Read a harness CSV back into dicts with typed values."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header in {path}: {header}")
        out = []
        for line in fh:
            parts = line.strip().split(",")
            rec = {}
            for col, raw in zip(header, parts):
                if col in _STR_COLUMNS:
                    rec[col] = raw
                elif col in _BOOL_COLUMNS:
                    rec[col] = raw == "1"
                elif col in _INT_COLUMNS:
                    rec[col] = int(raw)
                else:
                    rec[col] = float(raw)
            out.append(rec)
    return out


def build_problem(problem: str, n_per_dim: int):
    """Instantiate a benchmark by id with its grid, exact solution, lifting."""
    if problem == "advdiff2d":
        grid = pb.Grid(2, n_per_dim)
        p = pb.ADVDIFF_2D
        system, exact, lifting = pb.build_advdiff(grid, p["mu"], p["c"], 2)
    elif problem == "advdiff3d":
        grid = pb.Grid(3, n_per_dim)
        p = pb.ADVDIFF_3D
        system, exact, lifting = pb.build_advdiff(grid, p["mu"], p["c"], 3)
    elif problem == "burgers2d":
        grid = pb.Grid(2, n_per_dim)
        system, exact, lifting = pb.build_burgers(grid, pb.BURGERS_NU)
    else:
        raise ConfigError(f"unknown problem {problem!r}")
    return system, exact, lifting, grid


def initial_state(exact, lifting, grid) -> np.ndarray:
    """Interior unknowns matching the exact solution at t = 0."""
    return pb.lift_split(exact.on_grid(grid, 0.0), 0.0, lifting)


def epsilon_bar(problem: str, n_per_dim: int, tol=1e-2, seed=0) -> float:
    """Inverse condition-number tolerance proxy for a linear benchmark."""
    if problem == "burgers2d":
        raise ValueError(
            "burgers2d is nonlinear: no a-priori eps-bar is available, supply "
            "an absolute epsilon derived from preliminary runs instead")
    system, _, _, _ = build_problem(problem, n_per_dim)
    A = system.eval_jacobian(0.0, None)
    return 1.0 / cond2_estimate(A, tol, seed=seed)


def estimate_dt_fe(A, seed=0, krylov_dim=30):
    """Forward Euler stability limit estimate from the dominant Ritz value.

    Runs a short Arnoldi sweep, takes the largest-magnitude Ritz value
    lambda and returns ``-2 Re(lambda) / |lambda|^2`` (the exact limit for
    that single mode).  Returns nan if the dominant mode is not decaying.
    """
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    k = min(krylov_dim, n)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    V = [v]
    H = np.zeros((k + 1, k))
    used = k
    for j in range(k):
        w = A @ V[j]
        for i in range(j + 1):
            H[i, j] = V[i] @ w
            w -= H[i, j] * V[i]
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] < 1e-12:
            used = j + 1
            break
        V.append(w / H[j + 1, j])
    ritz = np.linalg.eigvals(H[:used, :used])
    lam = ritz[np.argmax(np.abs(ritz))]
    if lam.real >= 0.0:
        return float("nan")
    return float(-2.0 * lam.real / abs(lam) ** 2)


def _expand_points(spec: ExperimentSpec):
    """Deterministic sweep-point list; fe/be collapse the (eps, N) axes."""
    points = []
    for n in spec.n_per_dim:
        for method in spec.methods:
            for dt in spec.dts:
                if method == "imexrb":
                    for eps in spec.epsilons:
                        for nb in spec.n_basis:
                            points.append((n, method, dt, eps, nb))
                else:
                    points.append((n, method, dt, None, 0))
    return points


def _resolve_epsilon(eps_entry, eps_bar_value):
    if eps_entry is None:
        return float("nan"), float("nan")
    if isinstance(eps_entry, dict):
        gamma = float(eps_entry["gamma"])
        if eps_bar_value is None:
            raise ValueError(
                "gamma-scaled epsilon requested for a nonlinear problem; "
                "supply an absolute epsilon instead")
        return gamma * eps_bar_value, gamma
    return float(eps_entry), float("nan")


def _error_summary(traj, exact, grid, lifting, dt):
    """(aggregate, final-step) relative errors; inf on divergence."""
    n_levels = len(traj.states) - 1
    if traj.diverged:
        return float("inf"), float("inf")
    if n_levels == 0:
        return 0.0, 0.0
    err_sq = np.empty((n_levels, exact.n_components))
    exact_sq = np.empty_like(err_sq)
    per_step = np.empty(n_levels)
    for i in range(n_levels):
        t_n = (i + 1) * dt
        e2, x2 = error_ingredients(traj.states[i + 1], exact, grid, lifting, t_n)
        err_sq[i] = e2
        exact_sq[i] = x2
        per_step[i] = math.sqrt(float(np.sum(e2 / x2)))
    series = ErrorSeries(err_sq, exact_sq, per_step)
    return aggregate_error(series, dt), float(per_step[-1])


def _run_point(spec, ctx, point):
    n_per_dim, method, dt, eps_entry, n_basis = point
    system, exact, lifting, grid = ctx["problem"]
    epsilon, gamma = _resolve_epsilon(eps_entry, ctx["eps_bar"])
    n_steps = spec.n_steps if spec.n_steps is not None \
        else int(round(spec.t_final / dt))
    cfg = IntegratorConfig(
        dt=dt,
        n_steps=n_steps,
        epsilon=epsilon if math.isfinite(epsilon) else 1e-3,
        n_basis=max(n_basis, 1),
        max_inner=spec.max_inner,
    )
    u0 = initial_state(exact, lifting, grid)

    walls = []
    traj = None
    for _ in range(spec.timing_repeats):
        t0 = time.perf_counter()
        traj = integrate(system, u0, method, cfg)
        walls.append(time.perf_counter() - t0)
    agg, final = _error_summary(traj, exact, grid, lifting, dt)

    records = traj.records
    inner = [r.inner_iterations for r in records if r.method == "imexrb"]
    row = ResultRow(
        problem=spec.problem,
        method=method,
        n_per_dim=n_per_dim,
        h=grid.h,
        dt=dt,
        n_steps=n_steps,
        epsilon=epsilon,
        gamma=gamma,
        n_basis=n_basis,
        max_inner=spec.max_inner if method == "imexrb" else 0,
        aggregate_error=agg,
        final_step_error=final,
        mean_inner_iterations=float(np.mean(inner)) if inner else 0.0,
        max_inner_iterations=max(inner) if inner else 0,
        total_newton_iterations=sum(sum(r.newton_iterations) for r in records),
        total_gmres_iterations=sum(r.gmres_iterations for r in records),
        jacobian_assemblies=sum(r.jacobian_assemblies for r in records),
        rhs_evaluations=sum(r.rhs_evaluations for r in records),
        jacobian_matvecs=sum(r.jacobian_matvecs for r in records),
        max_reduced_dim=max((r.max_reduced_dim for r in records), default=0),
        flagged_steps=sum(r.stability_flagged for r in records),
        diverged=traj.diverged,
        dt_fe=ctx["dt_fe"],
        wall_time_seconds=float(np.mean(walls)),
        seed=spec.seed,
    )
    log.info("%s %s n=%d dt=%.5g eps=%.4g N=%d -> err=%.4g%s (%.2fs)",
             spec.problem, method, n_per_dim, dt, epsilon, n_basis, agg,
             " DIVERGED" if traj.diverged else "", row.wall_time_seconds)
    return row


def run_experiment(spec: ExperimentSpec, threads: int = 1,
                   csv_path: str | None = None):
    """Run every sweep point of a spec; returns rows and writes the CSV.

    Sweep points run independently (optionally on ``threads`` workers);
    results keep the deterministic expansion order.  Failed points are
    collected and re-raised as :class:`ExperimentError` after the
    successful rows are written.
    """
    needs_eps_bar = any(isinstance(e, dict) for e in spec.epsilons) \
        and "imexrb" in spec.methods
    contexts = {}
    for n in spec.n_per_dim:
        problem = build_problem(spec.problem, n)
        system = problem[0]
        ctx = {"problem": problem, "eps_bar": None, "dt_fe": float("nan")}
        if system.is_linear:
            A = system.eval_jacobian(0.0, None)
            if needs_eps_bar:
                ctx["eps_bar"] = 1.0 / cond2_estimate(A, 1e-2, seed=spec.seed)
            ctx["dt_fe"] = estimate_dt_fe(A, seed=spec.seed)
        contexts[n] = ctx

    points = _expand_points(spec)
    results = [None] * len(points)
    failures = []

    def runner(i):
        return i, _run_point(spec, contexts[points[i][0]], points[i])

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            futures = [ex.submit(runner, i) for i in range(len(points))]
            for fut in concurrent.futures.as_completed(futures):
                try:
                    i, row = fut.result()
                    results[i] = row
                except Exception as exc:  # surfaced after the sweep
                    failures.append(str(exc))
    else:
        for i in range(len(points)):
            try:
                _, results[i] = runner(i)
            except Exception as exc:
                failures.append(f"point {points[i]}: {exc}")

    rows = [r for r in results if r is not None]
    out_path = csv_path or spec.csv_path
    if out_path:
        write_csv(rows, out_path)
    if failures:
        raise ExperimentError(
            f"{len(failures)} sweep point(s) failed:\n  " + "\n  ".join(failures))
    return rows


_GAMMAS = [{"gamma": g} for g in (0.1, 1.0, 10.0, 100.0, 1000.0)]
_DTS_FULL = [2.0 ** -i for i in range(4, 11)]
_DTS_DESK = [2.0 ** -i for i in range(4, 10)]


def preset_names():
    return sorted(_PRESETS)


def preset(name: str) -> ExperimentSpec:
    """Named experiment reproducing a figure sweep or a desk-scale variant."""
    if name not in _PRESETS:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return ExperimentSpec(**_PRESETS[name])


_PRESETS = {
    # full-scale figure sweeps
    "fig-advdiff2d-eps": dict(
        problem="advdiff2d", n_per_dim=[101, 201], methods=["be", "imexrb"],
        dts=_DTS_FULL, epsilons=_GAMMAS, n_basis=[10], max_inner=100),
    "fig-advdiff2d-N": dict(
        problem="advdiff2d", n_per_dim=[101, 201], methods=["be", "imexrb"],
        dts=_DTS_FULL, epsilons=[{"gamma": 1.0}], n_basis=[1, 5, 10, 15],
        max_inner=100),
    "fig-burgers-stability": dict(
        problem="burgers2d", n_per_dim=[101], methods=["fe", "be", "imexrb"],
        dts=[1.0 / 40.0], epsilons=[1e-2, 1e-3, 1e-4, 1e-5], n_basis=[10],
        max_inner=100),
    "fig-burgers-convergence": dict(
        problem="burgers2d", n_per_dim=[101], methods=["be", "imexrb"],
        dts=_DTS_FULL, epsilons=[1e-2, 1e-3, 1e-4, 1e-5], n_basis=[10],
        max_inner=100),
    "fig-advdiff3d-eps": dict(
        problem="advdiff3d", n_per_dim=[51, 81], methods=["be", "imexrb"],
        dts=_DTS_FULL, epsilons=_GAMMAS, n_basis=[10], max_inner=100),
    "fig-advdiff3d-N": dict(
        problem="advdiff3d", n_per_dim=[51, 81], methods=["be", "imexrb"],
        dts=_DTS_FULL, epsilons=[{"gamma": 1.0}], n_basis=[1, 5, 10, 30],
        max_inner=100),
    # desk-scale variants (reduced grids, same structure)
    "desk-advdiff2d": dict(
        problem="advdiff2d", n_per_dim=[51], methods=["be", "imexrb"],
        dts=_DTS_DESK, epsilons=[{"gamma": 1.0}], n_basis=[10], max_inner=100),
    "desk-advdiff3d": dict(
        problem="advdiff3d", n_per_dim=[21], methods=["be", "imexrb"],
        dts=[2.0 ** -i for i in range(4, 8)], epsilons=[{"gamma": 1.0}],
        n_basis=[10], max_inner=100),
    "desk-burgers": dict(
        problem="burgers2d", n_per_dim=[101], methods=["fe", "be", "imexrb"],
        dts=[1.0 / 40.0], epsilons=[1e-2, 1e-4], n_basis=[10], max_inner=100),
    # tiny smoke preset for CI and CLI tests
    "smoke-advdiff2d": dict(
        problem="advdiff2d", n_per_dim=[21], methods=["fe", "be", "imexrb"],
        dts=[2.0 ** -4, 2.0 ** -5], epsilons=[{"gamma": 1.0}], n_basis=[5],
        max_inner=50),
}
