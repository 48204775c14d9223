"""Time-marching schemes and their per-step bookkeeping.

Forward Euler, backward Euler with a quasi-Newton full-order solve
(preconditioned GMRES inner solver, Jacobian frozen at the start of each
timestep), and the reduced-basis implicit-explicit scheme: a projected
backward Euler step on a low-dimensional subspace followed by a full-order
explicit update, with the subspace enriched until the orthogonal-residual
stability criterion ``||(I - V V^T) u|| < eps ||u||`` holds.

The reduced subspace window spans up to ``n_basis`` recent accepted
solutions, maintained by incremental QR updates with a collinearity guard;
inner-iteration iterates are never added to the window.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .linalg import (
    QRFactor,
    as_csr,
    gmres,
    gs_extend,
    ilu_factor,
    orth_residual,
    qr_append,
    qr_delete_first,
    qr_init,
)

__all__ = [
    "IntegratorConfig",
    "BasisState",
    "StepRecord",
    "Trajectory",
    "NonConvergenceError",
    "IntegrationError",
    "fe_step",
    "be_step",
    "reduced_implicit_solve",
    "imexrb_step",
    "integrate",
]

METHODS = ("fe", "be", "imexrb")


class NonConvergenceError(RuntimeError):
    """A nonlinear or linear inner solver failed to reach its tolerance."""


class IntegrationError(RuntimeError):
    """A step failed; the message carries the step index and time."""


@dataclass
class IntegratorConfig:
    """Timestep, stability and solver parameters shared by all schemes."""

    dt: float
    n_steps: int
    epsilon: float = 1e-3
    n_basis: int = 10
    max_inner: int = 100
    delta_rcond: float = 1e-8
    newton_tol_factor: float = 1e-3
    newton_maxit: int = 100
    gmres_rtol: float = 1e-10
    gmres_maxit: int = 1000
    ilu_droptol: float = 5e-3
    # documented sentinel: a norm above divergence_factor * max(||u0||, 1)
    # flags the trajectory as diverged
    divergence_factor: float = 1e12
    halt_on_divergence: bool = True
    # attach the final enriched basis of each step to its record
    keep_inner_basis: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be nonnegative")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.n_basis < 1:
            raise ValueError("n_basis must be at least 1")
        if self.max_inner < 1:
            raise ValueError("max_inner must be at least 1")
        for name in ("delta_rcond", "newton_tol_factor", "gmres_rtol",
                     "divergence_factor"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.newton_maxit < 1 or self.gmres_maxit < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass
class StepRecord:
    """Per-timestep statistics and solver counters."""

    index: int = -1
    method: str = ""
    inner_iterations: int = 0
    residual_ratio: float = 0.0
    newton_iterations: list = field(default_factory=list)
    gmres_iterations: int = 0
    wall_time: float = 0.0
    jacobian_assemblies: int = 0
    rhs_evaluations: int = 0
    jacobian_matvecs: int = 0
    max_reduced_dim: int = 0
    stability_flagged: bool = False
    basis_matrix: np.ndarray | None = None


@dataclass
class Trajectory:
    """Ordered interior-DOF solutions u_0..u_Nt with per-step records."""

    states: list
    records: list
    method: str
    diverged: bool = False
    diverged_at: int | None = None

    @property
    def final_state(self):
        return self.states[-1]

    def norms(self):
        return np.array([np.linalg.norm(u) for u in self.states])


class BasisState:
    """Reduced-basis window spanning up to ``n_basis`` recent solutions.

    The window is a QR factor advanced once per accepted timestep; snapshots
    that are quasi-collinear with the current window are skipped (no column
    added), and snapshots that leave the window have their column removed.
    The last remaining column is never deleted, so heavy skipping (tiny
    timesteps) leaves a single-column window rather than an empty one.
    """

    def __init__(self, window: QRFactor, n_basis: int, n_seen: int,
                 inserted_flags):
        self.window = window
        self.n_basis = n_basis
        self.n_seen = n_seen
        self._flags = deque(inserted_flags)

    @classmethod
    def initialize(cls, u0, n_basis: int) -> "BasisState":
        return cls(qr_init(u0), n_basis, 1, [True])

    @property
    def size(self) -> int:
        return self.window.m

    def matrix(self) -> np.ndarray:
        return self.window.q

    def advance(self, u_new, delta: float) -> "BasisState":
        """Fold the newest accepted solution into the window."""
        self.n_seen += 1
        target = max(1, min(self.n_basis, self.n_seen - 1))
        self.window, inserted = qr_append(self.window, u_new, delta)
        self._flags.append(inserted)
        while len(self._flags) > target:
            if self._flags[0] and self.window.m <= 1:
                # the oldest snapshot owns the only column: keep it and
                # discard a stale skip marker instead, so heavy collinearity
                # leaves a single-column window
                for i in range(1, len(self._flags)):
                    if not self._flags[i]:
                        del self._flags[i]
                        break
                else:
                    break
                continue
            if self._flags.popleft():
                self.window = qr_delete_first(self.window)
        defect = self.window.orthonormality_defect()
        if defect > 1e-11 * self.window.m:
            q2, rfix = np.linalg.qr(self.window.q)
            self.window = QRFactor(q2, rfix @ self.window.r)
        return self


def fe_step(sys, t_n, u_n, dt):
    """Forward Euler update ``u + dt f(t, u)``."""
    return u_n + dt * sys.eval_f(t_n, u_n)


def be_step(sys, t_next, u_n, cfg: IntegratorConfig, workspace=None):
    """Backward Euler step via quasi-Newton with ILU-preconditioned GMRES.

    The Jacobian of the residual ``r(u) = u - u_n - dt f(t_next, u)`` is
    assembled once per timestep at ``(t_next, u_n)`` and held fixed; the
    iteration stops when the update norm drops below
    ``newton_tol_factor * dt``.  Linear systems are dispatched to a single
    solve of ``(I - dt A) u = u_n + dt b(t_next)`` and report exactly one
    Newton iteration.  For linear systems a ``workspace`` dict may be passed
    to reuse the constant operator and its ILU factors across steps.
    """
    record = StepRecord(method="be")
    t0 = time.perf_counter()
    n = u_n.shape[0]
    tol = cfg.newton_tol_factor * cfg.dt

    if sys.is_linear:
        ws = workspace if workspace is not None else {}
        if "S" not in ws:
            A = sys.eval_jacobian(t_next, u_n)
            record.jacobian_assemblies += 1
            ws["S"] = as_csr(sp.identity(n) - cfg.dt * A)
            ws["ilu"] = ilu_factor(ws["S"], cfg.ilu_droptol)
        b = sys.eval_f(t_next, np.zeros(n))
        record.rhs_evaluations += 1
        rhs = u_n + cfg.dt * b
        u_next, iters, ok = gmres(ws["S"], rhs, precond=ws["ilu"],
                                  rtol=cfg.gmres_rtol, maxit=cfg.gmres_maxit,
                                  x0=u_n)
        record.gmres_iterations += iters
        if not ok:
            raise NonConvergenceError(
                f"GMRES stalled in the backward Euler solve after {iters} "
                f"iterations")
        record.newton_iterations = [1]
    else:
        J = sys.eval_jacobian(t_next, u_n)
        record.jacobian_assemblies += 1
        S = as_csr(sp.identity(n) - cfg.dt * J)
        ilu = ilu_factor(S, cfg.ilu_droptol)
        u = u_n.copy()
        for j in range(cfg.newton_maxit):
            r = u - u_n - cfg.dt * sys.eval_f(t_next, u)
            record.rhs_evaluations += 1
            s, iters, ok = gmres(S, -r, precond=ilu, rtol=cfg.gmres_rtol,
                                 maxit=cfg.gmres_maxit)
            record.gmres_iterations += iters
            if not ok:
                raise NonConvergenceError(
                    f"GMRES stalled in quasi-Newton iteration {j + 1}")
            u = u + s
            if np.linalg.norm(s) < tol:
                record.newton_iterations = [j + 1]
                break
        else:
            raise NonConvergenceError(
                f"quasi-Newton did not converge within {cfg.newton_maxit} "
                f"iterations (last update norm above {tol:.3e})")
        u_next = u

    record.wall_time = time.perf_counter() - t0
    return u_next, record


def _solve_reduced(sys, t_next, u_n, V, H, cfg, f_at_un=None):
    """Quasi-Newton solve of the projected implicit step.

    Finds reduced coordinates with ``delta = dt V^T f(t, V delta + u_n)``
    using the frozen reduced Jacobian ``I - dt V^T J V`` (passed in as H).
    Returns ``(delta, newton_iterations, rhs_evaluations)``.
    """
    m = V.shape[1]
    M = np.eye(m) - cfg.dt * H
    lu_piv = scipy.linalg.lu_factor(M)
    if np.abs(np.diag(lu_piv[0])).min() == 0.0:
        raise scipy.linalg.LinAlgError("singular reduced system")

    if sys.is_linear:
        rhs_evals = 0
        if f_at_un is None:
            f_at_un = sys.eval_f(t_next, u_n)
            rhs_evals = 1
        delta = scipy.linalg.lu_solve(lu_piv, cfg.dt * (V.T @ f_at_un))
        return delta, 1, rhs_evals

    tol = cfg.newton_tol_factor * cfg.dt
    delta = np.zeros(m)
    rhs_evals = 0
    for j in range(cfg.newton_maxit):
        F = sys.eval_f(t_next, V @ delta + u_n)
        rhs_evals += 1
        g = delta - cfg.dt * (V.T @ F)
        s = scipy.linalg.lu_solve(lu_piv, -g)
        delta = delta + s
        if np.linalg.norm(s) < tol:
            return delta, j + 1, rhs_evals
    raise NonConvergenceError(
        f"reduced quasi-Newton did not converge within {cfg.newton_maxit} "
        f"iterations")


def reduced_implicit_solve(sys, t_next, u_n, V, dt, cfg: IntegratorConfig,
                           reduced_jac=None):
    """Projected backward Euler step on the subspace spanned by ``V``.

    Returns the reduced coordinates ``delta`` with
    ``delta = dt V^T f(t_next, V delta + u_n)`` up to the quasi-Newton
    update tolerance.  ``reduced_jac`` may carry a precomputed
    ``V^T J(t_next, u_n) V`` to avoid a fresh Jacobian assembly.
    """
    if dt != cfg.dt:
        cfg = IntegratorConfig(**{**cfg.__dict__, "dt": dt})
    if reduced_jac is None:
        J = sys.eval_jacobian(t_next, u_n)
        reduced_jac = V.T @ (J @ V)
    delta, _, _ = _solve_reduced(sys, t_next, u_n, V, reduced_jac, cfg)
    return delta


def _grow(buf, m_valid, m_needed):
    if m_needed <= buf.shape[1]:
        return buf
    out = np.empty((buf.shape[0], max(m_needed, 2 * buf.shape[1])))
    out[:, :m_valid] = buf[:, :m_valid]
    return out


def imexrb_step(sys, t_next, u_n, basis: BasisState, cfg: IntegratorConfig):
    """One reduced-basis implicit-explicit step with adaptive enrichment.

    Inner loop, up to ``max_inner`` times: solve the projected implicit
    step, take the full-order explicit update at the projected point, and
    accept once the orthogonal residual satisfies
    ``||r|| / ||u|| < epsilon``; otherwise extend the basis with the
    normalized residual.  If the loop exhausts without meeting the
    criterion the last iterate is returned and the record is flagged
    (``stability_flagged``) instead of aborting, so parameter sweeps can
    complete and surface the flag.

    The full-order Jacobian is assembled once; enrichment updates the
    cached reduced Jacobian with one Jacobian matvec plus inner products
    per new column.  The returned window is advanced with the accepted
    solution only (inner iterates are discarded).
    """
    record = StepRecord(method="imexrb")
    t0 = time.perf_counter()
    n = u_n.shape[0]

    m = basis.size
    V = np.empty((n, min(m + 16, m + cfg.max_inner)))
    V[:, :m] = basis.window.q
    J = sys.eval_jacobian(t_next, u_n)
    record.jacobian_assemblies = 1
    JV = np.empty_like(V)
    JV[:, :m] = J @ V[:, :m]
    record.jacobian_matvecs += m
    hcap = m + cfg.max_inner
    H = np.empty((hcap, hcap))
    H[:m, :m] = V[:, :m].T @ JV[:, :m]

    f_un = None
    if sys.is_linear:
        f_un = sys.eval_f(t_next, u_n)
        record.rhs_evaluations += 1

    u_cand = None
    accepted = False
    for k in range(cfg.max_inner):
        Vk = V[:, :m]
        delta, nit, revals = _solve_reduced(sys, t_next, u_n, Vk, H[:m, :m],
                                            cfg, f_at_un=f_un)
        record.newton_iterations.append(nit)
        record.rhs_evaluations += revals
        y = Vk @ delta + u_n
        fy = sys.eval_f(t_next, y)
        record.rhs_evaluations += 1
        u_cand = u_n + cfg.dt * fy
        r, ratio = orth_residual(Vk, u_cand)
        record.inner_iterations = k + 1
        record.residual_ratio = ratio
        record.max_reduced_dim = max(record.max_reduced_dim, m)
        if ratio < cfg.epsilon:
            accepted = True
            break
        if k == cfg.max_inner - 1:
            break
        nr = np.linalg.norm(r)
        if nr == 0.0:
            accepted = True
            break
        Vext = gs_extend(Vk, r)
        V = _grow(V, m, m + 1)
        JV = _grow(JV, m, m + 1)
        V[:, m] = Vext[:, -1]
        JV[:, m] = J @ V[:, m]
        record.jacobian_matvecs += 1
        c = V[:, :m + 1].T @ JV[:, m]
        H[:m, m] = c[:m]
        H[m, m] = c[m]
        H[m, :m] = V[:, m] @ JV[:, :m]
        m += 1

    record.stability_flagged = not accepted
    if cfg.keep_inner_basis:
        record.basis_matrix = V[:, :m].copy()
    basis = basis.advance(u_cand, cfg.delta_rcond)
    record.wall_time = time.perf_counter() - t0
    return u_cand, record, basis


def integrate(sys, u0, method: str, cfg: IntegratorConfig) -> Trajectory:
    """March ``n_steps`` timesteps of the chosen scheme from ``u0``.

    The reduced-basis scheme initializes its window from the (normalized)
    initial condition.  A state norm exceeding
    ``divergence_factor * max(||u0||, 1)`` or turning non-finite flags the
    trajectory as diverged; stepping then stops or continues according to
    ``halt_on_divergence``.  Step errors are re-raised annotated with the
    step index.
    """
    method = method.lower()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
    u = np.asarray(u0, dtype=np.float64).copy()
    states = [u.copy()]
    records = []
    threshold = cfg.divergence_factor * max(np.linalg.norm(u), 1.0)

    basis = BasisState.initialize(u, cfg.n_basis) if method == "imexrb" else None
    workspace = {}
    diverged = False
    diverged_at = None

    for nstep in range(cfg.n_steps):
        t_n = nstep * cfg.dt
        t_next = (nstep + 1) * cfg.dt
        try:
            if method == "fe":
                t0 = time.perf_counter()
                u_new = fe_step(sys, t_n, u, cfg.dt)
                record = StepRecord(index=nstep, method="fe",
                                    rhs_evaluations=1,
                                    wall_time=time.perf_counter() - t0)
            elif method == "be":
                u_new, record = be_step(sys, t_next, u, cfg, workspace)
                record.index = nstep
            else:
                u_new, record, basis = imexrb_step(sys, t_next, u, basis, cfg)
                record.index = nstep
        except (NonConvergenceError, scipy.linalg.LinAlgError, ValueError) as exc:
            raise IntegrationError(
                f"step {nstep} (t = {t_next:.6g}): {exc}") from exc
        states.append(u_new)
        records.append(record)
        u = u_new
        norm_new = np.linalg.norm(u_new)
        if not np.isfinite(norm_new) or norm_new > threshold:
            diverged = True
            diverged_at = nstep + 1
            if cfg.halt_on_divergence:
                break

    return Trajectory(states, records, method, diverged, diverged_at)
