"""Benchmark problems: grids, Dirichlet lifting, and semidiscrete systems.

Uniform Cartesian grids on [0, L]^d, second-order centered finite
differences (2d+1-point Laplacian stencil), strong Dirichlet enforcement
through lifting, and the benchmark systems: linear advection-diffusion in
2D/3D with a manufactured traveling-Gaussian solution, and the 2D viscous
Burgers equation with a traveling-front solution.

Unknown ordering is lexicographic by grid multi-index (i1, ..., id), i.e.
C-order raveling of (N1, ..., Nd) arrays; for two-component systems all
component-1 unknowns come before component-2 (component-major).

Manufactured forcing derivation (advection-diffusion).  With
``u = U exp(-rho^2 / s)``, ``r = x - x0 - c t``, ``rho^2 = ||r||^2`` and
``s = sigma^2 + mu t``:

    du/dt   = u * (2 (r . c) / s + mu rho^2 / s^2)
    c .grad = u * (-2 (r . c) / s)
    lap u   = u * (4 rho^2 / s^2 - 2 d / s)

so the advective terms cancel and

    f = du/dt + c . grad u - mu lap u = mu * u * (2 d / s - 3 rho^2 / s^2).

The profile translates along the characteristics while the forcing exactly
counteracts diffusive decay of the peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import as_csr

__all__ = [
    "Grid",
    "SemidiscreteSystem",
    "ExactSolution",
    "TravelingGaussian",
    "BurgersFront",
    "Lifting",
    "advdiff_forcing",
    "build_advdiff",
    "build_burgers",
    "lift_split",
    "lift_join",
    "ADVDIFF_2D",
    "ADVDIFF_3D",
    "BURGERS_NU",
]

# benchmark parameter sets
ADVDIFF_2D = dict(mu=0.005, c=(0.5, 0.25), sigma=0.25, U=0.25, x0=(0.25, 0.25))
ADVDIFF_3D = dict(mu=1e-2, c=(0.5, 0.25, 0.25), sigma=0.25, U=0.25,
                  x0=(0.25, 0.25, 0.25))
BURGERS_NU = 1e-2


@dataclass(frozen=True)
class Grid:
    """Uniform Cartesian grid with N_i nodes per dimension on [0, L]^d."""

    d: int
    n_per_dim: int
    length: float = 1.0

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if self.n_per_dim < 3:
            raise ValueError(f"need at least 3 nodes per dimension, got "
                             f"{self.n_per_dim}")

    @property
    def h(self) -> float:
        return self.length / (self.n_per_dim - 1)

    @property
    def shape(self):
        return (self.n_per_dim,) * self.d

    @property
    def n_nodes(self) -> int:
        return self.n_per_dim ** self.d

    @property
    def n_interior(self) -> int:
        return (self.n_per_dim - 2) ** self.d

    def axis(self) -> np.ndarray:
        return np.linspace(0.0, self.length, self.n_per_dim)

    def meshgrid(self):
        return np.meshgrid(*([self.axis()] * self.d), indexing="ij")

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.d] = True
        return mask

    def interior_index(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask().ravel())


@dataclass
class SemidiscreteSystem:
    """Right-hand side f(t, y), its sparse Jacobian, and the DOF count.

    ``eval_f`` and ``eval_jacobian`` act on the interior unknown vector
    (boundary DOFs eliminated by lifting).  For ``is_linear`` systems
    ``eval_f(t, y) = A y + b(t)`` with a constant ``A``.
    """

    n_dof: int
    eval_f: Callable
    eval_jacobian: Callable
    n_components: int = 1
    is_linear: bool = False
    name: str = ""

    @classmethod
    def from_matrix(cls, A, b=None, name="linear"):
        """Linear system y' = A y + b(t) from a constant matrix."""
        A = as_csr(A)
        n = A.shape[0]
        if b is None:
            def f(t, y):
                return A @ y
        elif callable(b):
            def f(t, y):
                return A @ y + b(t)
        else:
            bv = np.asarray(b, dtype=np.float64)

            def f(t, y):
                return A @ y + bv
        return cls(n, f, lambda t, y: A, 1, True, name)


class ExactSolution:
    """Closed-form space-time solution with per-component evaluators."""

    n_components = 1

    def values(self, coords, t):
        raise NotImplementedError

    def time_derivative(self, coords, t):
        raise NotImplementedError

    def on_grid(self, grid: Grid, t: float) -> np.ndarray:
        return np.stack(self.values(grid.meshgrid(), t))

    def dt_on_grid(self, grid: Grid, t: float) -> np.ndarray:
        return np.stack(self.time_derivative(grid.meshgrid(), t))


class TravelingGaussian(ExactSolution):
    """Gaussian pulse advected by c whose width grows like sigma^2 + mu t."""

    def __init__(self, mu, c, sigma, U, x0):
        self.mu = float(mu)
        self.c = np.asarray(c, dtype=np.float64)
        self.sigma = float(sigma)
        self.U = float(U)
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.d = self.c.shape[0]

    def _parts(self, coords, t):
        s = self.sigma ** 2 + self.mu * t
        r = [np.asarray(coords[k]) - self.x0[k] - self.c[k] * t
             for k in range(self.d)]
        rho2 = sum(rk ** 2 for rk in r)
        rc = sum(r[k] * self.c[k] for k in range(self.d))
        u = self.U * np.exp(-rho2 / s)
        return u, rho2, rc, s

    def values(self, coords, t):
        u, _, _, _ = self._parts(coords, t)
        return [u]

    def time_derivative(self, coords, t):
        u, rho2, rc, s = self._parts(coords, t)
        return [u * (2.0 * rc / s + self.mu * rho2 / s ** 2)]


class BurgersFront(ExactSolution):
    """Two-component diagonal traveling front for the viscous Burgers system."""

    n_components = 2

    def __init__(self, nu):
        self.nu = float(nu)

    def _sigmoid(self, coords, t):
        x1, x2 = np.asarray(coords[0]), np.asarray(coords[1])
        arg = np.clip((-4.0 * x1 + 4.0 * x2 - t) / (32.0 * self.nu), -500, 500)
        e = np.exp(arg)
        g = 1.0 / (1.0 + e)
        return e, g

    def values(self, coords, t):
        _, g = self._sigmoid(coords, t)
        return [0.75 - 0.25 * g, 0.75 + 0.25 * g]

    def time_derivative(self, coords, t):
        e, g = self._sigmoid(coords, t)
        dg = e * g ** 2 / (32.0 * self.nu)
        return [-0.25 * dg, 0.25 * dg]


def advdiff_forcing(x, t, *, mu, c, sigma, U, x0):
    """Closed-form manufactured forcing for the traveling-Gaussian benchmark.

    ``f = mu * u_ex * (2 d / s - 3 rho^2 / s^2)`` with ``s = sigma^2 + mu t``
    and ``rho = ||x - x0 - c t||`` (see the module docstring for the
    derivation; the advective terms cancel identically).
    """
    c = np.asarray(c, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    d = c.shape[0]
    s = sigma ** 2 + mu * t
    rho2 = sum((np.asarray(x[k]) - x0[k] - c[k] * t) ** 2 for k in range(d))
    u = U * np.exp(-rho2 / s)
    return mu * u * (2.0 * d / s - 3.0 * rho2 / s ** 2)


class Lifting:
    """Dirichlet lifting data for one benchmark problem.

    The known boundary-matching component is the multilinear (transfinite)
    interpolant of the boundary data induced by the exact solution; the
    unknown component vanishes on the boundary.  The interpolant's time
    derivative is the interpolant of the boundary data's time derivative,
    so it is available in closed form.
    """

    def __init__(self, grid: Grid, exact: ExactSolution):
        self.grid = grid
        self.exact = exact
        self.n_components = exact.n_components
        self.interior_idx = grid.interior_index()
        self._mask = grid.interior_mask()
        self._weights = grid.axis() / grid.length
        self._cache = {}

    def boundary_values(self, t: float) -> np.ndarray:
        """Exact boundary data on the full grid (interior entries unused)."""
        return self.exact.on_grid(self.grid, t)

    def lifting(self, t: float) -> np.ndarray:
        """Transfinite interpolant of the boundary data, shape (K, *grid)."""
        return self._cached(t)[0]

    def lifting_dt(self, t: float) -> np.ndarray:
        """Time derivative of the lifting, shape (K, *grid)."""
        return self._cached(t)[1]

    def _cached(self, t):
        if t not in self._cache:
            g = self.exact.on_grid(self.grid, t)
            gdot = self.exact.dt_on_grid(self.grid, t)
            lift = np.stack([self._transfinite(g[k]) for k in
                             range(self.n_components)])
            lift_dt = np.stack([self._transfinite(gdot[k]) for k in
                                range(self.n_components)])
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[t] = (lift, lift_dt)
        return self._cache[t]

    def _transfinite(self, G: np.ndarray) -> np.ndarray:
        if self.grid.d == 2:
            return _transfinite_2d(G, self._weights)
        return _transfinite_3d(G, self._weights)


def _transfinite_2d(G, w):
    a, b = w[:, None], w[None, :]
    p1 = (1 - a) * G[0, :][None, :] + a * G[-1, :][None, :]
    p2 = (1 - b) * G[:, 0][:, None] + b * G[:, -1][:, None]
    p12 = ((1 - a) * (1 - b) * G[0, 0] + (1 - a) * b * G[0, -1]
           + a * (1 - b) * G[-1, 0] + a * b * G[-1, -1])
    return p1 + p2 - p12


def _transfinite_3d(G, w):
    a = w[:, None, None]
    b = w[None, :, None]
    c = w[None, None, :]
    p1 = (1 - a) * G[0] + a * G[-1]
    p2 = (1 - b) * G[:, 0][:, None, :] + b * G[:, -1][:, None, :]
    p3 = (1 - c) * G[:, :, 0][:, :, None] + c * G[:, :, -1][:, :, None]
    p12 = ((1 - a) * (1 - b) * G[0, 0] + (1 - a) * b * G[0, -1]
           + a * (1 - b) * G[-1, 0] + a * b * G[-1, -1])
    p13 = ((1 - a) * (1 - c) * G[0, :, 0][None, :, None]
           + (1 - a) * c * G[0, :, -1][None, :, None]
           + a * (1 - c) * G[-1, :, 0][None, :, None]
           + a * c * G[-1, :, -1][None, :, None])
    p23 = ((1 - b) * (1 - c) * G[:, 0, 0][:, None, None]
           + (1 - b) * c * G[:, 0, -1][:, None, None]
           + b * (1 - c) * G[:, -1, 0][:, None, None]
           + b * c * G[:, -1, -1][:, None, None])
    p123 = ((1 - a) * (1 - b) * (1 - c) * G[0, 0, 0]
            + (1 - a) * (1 - b) * c * G[0, 0, -1]
            + (1 - a) * b * (1 - c) * G[0, -1, 0]
            + (1 - a) * b * c * G[0, -1, -1]
            + a * (1 - b) * (1 - c) * G[-1, 0, 0]
            + a * (1 - b) * c * G[-1, 0, -1]
            + a * b * (1 - c) * G[-1, -1, 0]
            + a * b * c * G[-1, -1, -1])
    return p1 + p2 + p3 - p12 - p13 - p23 + p123


def lift_split(full_field: np.ndarray, t: float, lifting: Lifting) -> np.ndarray:
    """Interior unknown vector from a full-grid field: (u - lifting) restricted.

    ``full_field`` has shape (K, *grid) or (*grid,) for single-component
    problems; the result stacks components (component-major).
    """
    full = np.asarray(full_field, dtype=np.float64)
    if full.ndim == lifting.grid.d:
        full = full[None]
    if full.shape != (lifting.n_components, *lifting.grid.shape):
        raise ValueError(f"field shape {full.shape} does not match "
                         f"({lifting.n_components}, *{lifting.grid.shape})")
    lift = lifting.lifting(t)
    idx = lifting.interior_idx
    return np.concatenate([(full[k] - lift[k]).ravel()[idx]
                           for k in range(lifting.n_components)])


def lift_join(interior: np.ndarray, t: float, lifting: Lifting) -> np.ndarray:
    """Full-grid field from the interior unknowns; boundary set to the data.

    Interior nodes carry ``y + lifting``; boundary nodes are assigned the
    Dirichlet data exactly.
    """
    interior = np.asarray(interior, dtype=np.float64)
    m = lifting.interior_idx.shape[0]
    K = lifting.n_components
    if interior.shape != (K * m,):
        raise ValueError(f"interior vector shape {interior.shape} != ({K * m},)")
    lift = lifting.lifting(t)
    bdata = lifting.boundary_values(t)
    mask = lifting.grid.interior_mask()
    out = np.empty((K, *lifting.grid.shape))
    for k in range(K):
        comp = bdata[k].copy()
        comp[mask] = interior[k * m:(k + 1) * m] + lift[k][mask]
        out[k] = comp
    return out


def _d1_matrix(n, h):
    """Second-order centered first derivative; boundary rows zeroed."""
    keep = np.ones(n)
    keep[0] = keep[-1] = 0.0
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [-1, 1]) / (2.0 * h)
    return sp.diags(keep) @ D


def _d2_matrix(n, h):
    """Second-order centered second derivative; boundary rows zeroed."""
    keep = np.ones(n)
    keep[0] = keep[-1] = 0.0
    D = sp.diags([np.ones(n - 1), -2.0 * np.ones(n), np.ones(n - 1)],
                 [-1, 0, 1]) / (h * h)
    return sp.diags(keep) @ D


def _kron_nd(op1d, position, n, d):
    """Lift a 1-D operator to the d-dimensional tensor grid at one axis."""
    eye = sp.identity(n, format="csr")
    factors = [op1d if k == position else eye for k in range(d)]
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return out


def _directional_ops(grid: Grid):
    """Full-grid first-derivative operators, one per coordinate axis."""
    n, h, d = grid.n_per_dim, grid.h, grid.d
    D1 = _d1_matrix(n, h)
    return [_kron_nd(D1, k, n, d) for k in range(d)]


def _laplacian_op(grid: Grid):
    """Full-grid 2d+1-point Laplacian."""
    n, h, d = grid.n_per_dim, grid.h, grid.d
    D2 = _d2_matrix(n, h)
    out = _kron_nd(D2, 0, n, d)
    for k in range(1, d):
        out = out + _kron_nd(D2, k, n, d)
    return out


def build_advdiff(grid: Grid, mu: float, c, dim: int):
    """Assemble the linear advection-diffusion benchmark.

    Interior system ``y' = A y + b(t)`` with second-order centered advection
    and the 2d+1-point Laplacian; ``b(t)`` collects the manufactured
    forcing, the boundary lifting terms, and the lifting time derivative.
    Returns ``(system, exact_solution, lifting)``.
    """
    if grid.d != dim:
        raise ValueError(f"grid dimension {grid.d} != requested {dim}")
    if mu <= 0.0:
        raise ValueError("diffusion coefficient must be positive")
    c = np.asarray(c, dtype=np.float64)
    if c.shape != (dim,):
        raise ValueError(f"velocity must have {dim} components")

    params = ADVDIFF_2D if dim == 2 else ADVDIFF_3D
    exact = TravelingGaussian(mu=mu, c=c, sigma=params["sigma"],
                              U=params["U"], x0=params["x0"][:dim])
    lifting = Lifting(grid, exact)
    idx = lifting.interior_idx

    ops = _directional_ops(grid)
    op_full = mu * _laplacian_op(grid)
    for k in range(dim):
        op_full = op_full - c[k] * ops[k]
    op_if = as_csr(op_full)[idx, :]
    A = as_csr(op_if[:, idx])

    mesh = grid.meshgrid()
    coords_int = [m.ravel()[idx] for m in mesh]
    fparams = dict(mu=mu, c=c, sigma=exact.sigma, U=exact.U, x0=exact.x0)

    cache = {}

    def b_of(t):
        if t not in cache:
            lift_flat = lifting.lifting(t)[0].ravel()
            lift_dt_int = lifting.lifting_dt(t)[0].ravel()[idx]
            forcing = advdiff_forcing(coords_int, t, **fparams)
            if len(cache) > 8:
                cache.clear()
            cache[t] = op_if @ lift_flat + forcing - lift_dt_int
        return cache[t]

    def eval_f(t, y):
        return A @ y + b_of(t)

    def eval_jacobian(t, y):
        return A

    system = SemidiscreteSystem(idx.shape[0], eval_f, eval_jacobian,
                                n_components=1, is_linear=True,
                                name=f"advdiff{dim}d")
    return system, exact, lifting


def build_burgers(grid: Grid, nu: float):
    """Assemble the 2D viscous Burgers benchmark (two coupled components).

    The convective term uses second-order centered differences;
    ``eval_jacobian`` returns the analytic sparse Jacobian of the interior
    residual at ``(t, y)``.  Returns ``(system, exact_solution, lifting)``.
    """
    if grid.d != 2:
        raise ValueError("Burgers benchmark is two-dimensional")
    if nu <= 0.0:
        raise ValueError("viscosity must be positive")

    exact = BurgersFront(nu)
    lifting = Lifting(grid, exact)
    idx = lifting.interior_idx
    m = idx.shape[0]

    dx_full, dy_full = _directional_ops(grid)
    lap_full = _laplacian_op(grid)
    dx_if = as_csr(dx_full)[idx, :]
    dy_if = as_csr(dy_full)[idx, :]
    lap_if = as_csr(lap_full)[idx, :]
    dx_ii = as_csr(dx_if[:, idx])
    dy_ii = as_csr(dy_if[:, idx])
    lap_ii = as_csr(lap_if[:, idx])

    cache = {}

    def lift_parts(t):
        if t not in cache:
            lift = lifting.lifting(t)
            lift_dt = lifting.lifting_dt(t)
            if len(cache) > 8:
                cache.clear()
            cache[t] = (lift[0].ravel(), lift[1].ravel(),
                        lift_dt[0].ravel()[idx], lift_dt[1].ravel()[idx])
        return cache[t]

    def full_fields(t, y):
        l1, l2, l1dot, l2dot = lift_parts(t)
        u1 = l1.copy()
        u2 = l2.copy()
        u1[idx] += y[:m]
        u2[idx] += y[m:]
        return u1, u2, l1dot, l2dot

    def eval_f(t, y):
        u1, u2, l1dot, l2dot = full_fields(t, y)
        u1i, u2i = u1[idx], u2[idx]
        f1 = -(u1i * (dx_if @ u1) + u2i * (dy_if @ u1)) \
            + nu * (lap_if @ u1) - l1dot
        f2 = -(u1i * (dx_if @ u2) + u2i * (dy_if @ u2)) \
            + nu * (lap_if @ u2) - l2dot
        return np.concatenate([f1, f2])

    def eval_jacobian(t, y):
        u1, u2, _, _ = full_fields(t, y)
        u1i, u2i = u1[idx], u2[idx]
        conv = sp.diags(u1i) @ dx_ii + sp.diags(u2i) @ dy_ii
        j11 = -sp.diags(dx_if @ u1) - conv + nu * lap_ii
        j12 = -sp.diags(dy_if @ u1)
        j21 = -sp.diags(dx_if @ u2)
        j22 = -sp.diags(dy_if @ u2) - conv + nu * lap_ii
        return as_csr(sp.bmat([[j11, j12], [j21, j22]]))

    system = SemidiscreteSystem(2 * m, eval_f, eval_jacobian,
                                n_components=2, is_linear=False,
                                name="burgers2d")
    return system, exact, lifting
