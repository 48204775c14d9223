"""Integrator tests: Euler baselines, reduced implicit solves, inner loop."""

import numpy as np
import pytest

from imexrb import integrators as it
from imexrb import problems as pb
from imexrb.problems import SemidiscreteSystem


def scalar_decay(lam=-1.0):
    return SemidiscreteSystem.from_matrix(np.array([[lam]]))


def zero_rhs_system(n=4):
    import scipy.sparse as sp

    return SemidiscreteSystem(
        n_dof=n,
        eval_f=lambda t, y: np.zeros(n),
        eval_jacobian=lambda t, y: sp.csr_matrix((n, n)),
        is_linear=False,
    )


def random_stable_system(seed, n=50):
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.standard_normal((n, n)))[0]
    lams = -rng.uniform(0.1, 3.0, n)
    A = Q @ np.diag(lams) @ Q.T + 0.2 * rng.standard_normal((n, n)) / n
    shift = max(np.linalg.eigvals(A).real)
    if shift > -0.05:
        A = A - (shift + 0.2) * np.eye(n)
    return A, SemidiscreteSystem.from_matrix(A)


def advdiff_small(n=15):
    grid = pb.Grid(2, n)
    p = pb.ADVDIFF_2D
    system, exact, lifting = pb.build_advdiff(grid, p["mu"], p["c"], 2)
    u0 = pb.lift_split(exact.on_grid(grid, 0.0), 0.0, lifting)
    return system, u0


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            it.IntegratorConfig(dt=-0.1, n_steps=1)
        with pytest.raises(ValueError):
            it.IntegratorConfig(dt=0.1, n_steps=1, epsilon=2.0)
        with pytest.raises(ValueError):
            it.IntegratorConfig(dt=0.1, n_steps=1, n_basis=0)
        with pytest.raises(ValueError):
            it.IntegratorConfig(dt=0.1, n_steps=1, max_inner=0)


class TestForwardEuler:
    def test_zero_rhs_keeps_state(self):
        sys0 = zero_rhs_system()
        u = np.arange(4.0)
        assert np.array_equal(it.fe_step(sys0, 0.0, u, 0.3), u)

    def test_scalar_decay(self):
        u = it.fe_step(scalar_decay(), 0.0, np.array([1.0]), 0.1)
        assert u[0] == pytest.approx(0.9, abs=1e-15)

    def test_unstable_step_grows_monotonically(self):
        cfg = it.IntegratorConfig(dt=2.5, n_steps=30, halt_on_divergence=False)
        traj = it.integrate(scalar_decay(), np.array([1.0]), "fe", cfg)
        mags = np.abs([u[0] for u in traj.states])
        assert np.all(np.diff(mags) > 0)


class TestBackwardEuler:
    def test_scalar_closed_form(self):
        cfg = it.IntegratorConfig(dt=0.1, n_steps=1)
        u, record = it.be_step(scalar_decay(), 0.1, np.array([1.0]), cfg)
        assert abs(u[0] - 1.0 / 1.1) <= 1e-12
        assert record.newton_iterations == [1]

    def test_linear_advdiff_matches_dense_oracle(self):
        system, u0 = advdiff_small(11)
        dt = 0.05
        cfg = it.IntegratorConfig(dt=dt, n_steps=1)
        u1, record = it.be_step(system, dt, u0, cfg)
        A = system.eval_jacobian(0.0, None).toarray()
        b = system.eval_f(dt, np.zeros(system.n_dof))
        expected = np.linalg.solve(np.eye(system.n_dof) - dt * A, u0 + dt * b)
        assert np.abs(u1 - expected).max() <= 1e-8

    def test_zero_rhs_one_newton_iteration(self):
        sys0 = zero_rhs_system()
        cfg = it.IntegratorConfig(dt=0.2, n_steps=1)
        u, record = it.be_step(sys0, 0.2, np.ones(4), cfg)
        assert np.array_equal(u, np.ones(4))
        assert record.newton_iterations == [1]

    def test_linear_problems_terminate_in_one_iteration(self):
        system, u0 = advdiff_small(11)
        cfg = it.IntegratorConfig(dt=0.01, n_steps=5)
        traj = it.integrate(system, u0, "be", cfg)
        assert all(r.newton_iterations == [1] for r in traj.records)


class TestReducedImplicitSolve:
    def test_scalar_closed_form(self):
        lam, dt, un = -2.0, 0.1, 1.5
        cfg = it.IntegratorConfig(dt=dt, n_steps=1)
        V = np.ones((1, 1))
        delta = it.reduced_implicit_solve(scalar_decay(lam), dt,
                                          np.array([un]), V, dt, cfg)
        assert delta[0] == pytest.approx(dt * lam * un / (1 - dt * lam),
                                         rel=1e-13)

    def test_full_space_basis_reproduces_backward_euler(self):
        system, u0 = advdiff_small(9)
        n = system.n_dof
        dt = 0.05
        cfg = it.IntegratorConfig(dt=dt, n_steps=1)
        V = np.eye(n)
        delta = it.reduced_implicit_solve(system, dt, u0, V, dt, cfg)
        A = system.eval_jacobian(0.0, None).toarray()
        b = system.eval_f(dt, np.zeros(n))
        be = np.linalg.solve(np.eye(n) - dt * A, u0 + dt * b)
        assert np.abs(V @ delta + u0 - be).max() <= 1e-9

    def test_zero_rhs_gives_zero(self):
        sys0 = zero_rhs_system()
        cfg = it.IntegratorConfig(dt=0.1, n_steps=1)
        V = np.linalg.qr(np.random.default_rng(0).standard_normal((4, 2)))[0]
        delta = it.reduced_implicit_solve(sys0, 0.1, np.ones(4), V, 0.1, cfg)
        assert np.array_equal(delta, np.zeros(2))


class TestImexRbStep:
    def test_scalar_equals_backward_euler_one_inner(self):
        lam, dt = -1.0, 0.1
        basis = it.BasisState.initialize(np.array([1.0]), 1)
        cfg = it.IntegratorConfig(dt=dt, n_steps=1, epsilon=1e-3)
        u, record, basis = it.imexrb_step(scalar_decay(lam), dt,
                                          np.array([1.0]), basis, cfg)
        assert abs(u[0] - 1.0 / (1.0 - dt * lam)) <= 1e-14
        assert record.inner_iterations == 1

    def test_loose_epsilon_single_inner_iteration(self):
        _, system = random_stable_system(4)
        rng = np.random.default_rng(4)
        u0 = rng.standard_normal(50)
        basis = it.BasisState.initialize(u0, 3)
        cfg = it.IntegratorConfig(dt=0.5, n_steps=1, epsilon=1.0)
        _, record, _ = it.imexrb_step(system, 0.5, u0, basis, cfg)
        assert record.inner_iterations == 1

    @pytest.mark.parametrize("seed", range(4))
    def test_equivalence_lemma_fixed_point(self, seed):
        A, system = random_stable_system(seed)
        rng = np.random.default_rng(seed + 100)
        u0 = rng.standard_normal(50)
        cfg = it.IntegratorConfig(dt=0.3, n_steps=6, epsilon=1e-4, n_basis=4,
                                  max_inner=60, keep_inner_basis=True)
        traj = it.integrate(system, u0, "imexrb", cfg)
        for k, record in enumerate(traj.records):
            V = record.basis_matrix
            un, un1 = traj.states[k], traj.states[k + 1]
            resid = un1 - un - cfg.dt * (A @ (V @ (V.T @ un1)))
            assert np.linalg.norm(resid) <= 1e-10

    @pytest.mark.parametrize("seed", range(3))
    def test_stability_criterion_postcondition(self, seed):
        _, system = random_stable_system(seed + 10)
        rng = np.random.default_rng(seed)
        u0 = rng.standard_normal(50)
        cfg = it.IntegratorConfig(dt=0.4, n_steps=5, epsilon=1e-3, n_basis=3,
                                  max_inner=60, keep_inner_basis=True)
        traj = it.integrate(system, u0, "imexrb", cfg)
        for k, record in enumerate(traj.records):
            if record.stability_flagged:
                continue
            V = record.basis_matrix
            u = traj.states[k + 1]
            ratio = np.linalg.norm(u - V @ (V.T @ u)) / np.linalg.norm(u)
            assert ratio <= cfg.epsilon * (1.0 + 1e-9)

    def test_full_basis_equivalence_with_backward_euler(self):
        # once the enriched basis is square, the step solves the BE equation
        A, system = random_stable_system(2, n=12)
        rng = np.random.default_rng(5)
        u0 = rng.standard_normal(12)
        basis = it.BasisState.initialize(u0, 1)
        # epsilon small enough that enrichment runs to the full space
        cfg = it.IntegratorConfig(dt=0.5, n_steps=1, epsilon=1e-15,
                                  n_basis=1, max_inner=12,
                                  keep_inner_basis=True)
        u, record, _ = it.imexrb_step(system, 0.5, u0, basis, cfg)
        be = np.linalg.solve(np.eye(12) - 0.5 * A, u0)
        assert record.max_reduced_dim == 12
        assert np.abs(u - be).max() <= 1e-9

    def test_inner_loop_exhaustion_flags_record(self):
        _, system = random_stable_system(8)
        rng = np.random.default_rng(8)
        u0 = rng.standard_normal(50)
        basis = it.BasisState.initialize(u0, 2)
        cfg = it.IntegratorConfig(dt=5.0, n_steps=1, epsilon=1e-12,
                                  n_basis=2, max_inner=3)
        u, record, _ = it.imexrb_step(system, 5.0, u0, basis, cfg)
        assert record.stability_flagged
        assert record.inner_iterations == 3
        assert np.all(np.isfinite(u))

    def test_jacobian_assembled_once_per_step(self):
        system, u0 = advdiff_small(11)
        calls = {"n": 0}
        orig = system.eval_jacobian

        def counting(t, y):
            calls["n"] += 1
            return orig(t, y)

        system.eval_jacobian = counting
        cfg = it.IntegratorConfig(dt=0.05, n_steps=7, epsilon=1e-3, n_basis=4)
        it.integrate(system, u0, "imexrb", cfg)
        assert calls["n"] == 7


class TestBasisWindow:
    def test_window_spans_recent_solutions(self):
        rng = np.random.default_rng(0)
        u0 = rng.standard_normal(20)
        basis = it.BasisState.initialize(u0, 3)
        snaps = [u0]
        for k in range(6):
            u = rng.standard_normal(20)
            snaps.append(u)
            basis.advance(u, 1e-8)
        # window target is min(N, n) = 3: spans the last three snapshots
        assert basis.size == 3
        oracle = np.linalg.qr(np.array(snaps[-3:]).T)[0]
        Q = basis.matrix()
        sines = np.linalg.svd(Q - oracle @ (oracle.T @ Q),
                              compute_uv=False).max()
        assert sines <= 1e-8

    def test_initial_condition_leaves_window_first(self):
        rng = np.random.default_rng(1)
        u0 = rng.standard_normal(10)
        basis = it.BasisState.initialize(u0, 5)
        u1 = rng.standard_normal(10)
        basis.advance(u1, 1e-8)
        # min(N, 1) = 1: only the newest solution remains
        assert basis.size == 1
        q = basis.matrix()[:, 0]
        assert abs(abs(q @ (u1 / np.linalg.norm(u1))) - 1.0) <= 1e-12

    def test_collinear_snapshots_keep_single_column(self):
        basis = it.BasisState.initialize(np.array([1.0, 1.0, 0.0]), 4)
        for k in range(8):
            basis.advance(np.array([1.0, 1.0, 0.0]) * (1.0 + 1e-12 * k), 1e-8)
        assert basis.size == 1


class TestIntegrate:
    def test_zero_steps(self):
        cfg = it.IntegratorConfig(dt=0.1, n_steps=0)
        traj = it.integrate(scalar_decay(), np.array([2.0]), "be", cfg)
        assert len(traj.states) == 1
        assert np.array_equal(traj.states[0], [2.0])

    def test_unknown_method(self):
        cfg = it.IntegratorConfig(dt=0.1, n_steps=1)
        with pytest.raises(ValueError, match="unknown method"):
            it.integrate(scalar_decay(), np.array([1.0]), "rk4", cfg)

    def test_divergence_sentinel_halts_fe(self):
        cfg = it.IntegratorConfig(dt=2.5, n_steps=500)
        traj = it.integrate(scalar_decay(), np.array([1.0]), "fe", cfg)
        assert traj.diverged
        assert traj.diverged_at is not None
        assert len(traj.states) < 501

    def test_divergence_continue_mode(self):
        cfg = it.IntegratorConfig(dt=2.5, n_steps=120,
                                  halt_on_divergence=False)
        traj = it.integrate(scalar_decay(), np.array([1.0]), "fe", cfg)
        assert traj.diverged
        assert len(traj.states) == 121

    def test_dissipative_imexrb_monotone_decay(self):
        # symmetric negative definite with eps below the inverse condition
        rng = np.random.default_rng(12)
        Q = np.linalg.qr(rng.standard_normal((40, 40)))[0]
        lams = -np.linspace(0.1, 2.0, 40)
        A = Q @ np.diag(lams) @ Q.T
        A = 0.5 * (A + A.T)
        system = SemidiscreteSystem.from_matrix(A)
        eps_bound = 0.1 / 2.0
        cfg = it.IntegratorConfig(dt=1.0, n_steps=200, epsilon=0.5 * eps_bound,
                                  n_basis=5, max_inner=50)
        traj = it.integrate(system, rng.standard_normal(40), "imexrb", cfg)
        norms = traj.norms()
        assert not traj.diverged
        assert np.all(np.diff(norms) < 0.0)

    def test_advdiff_imexrb_error_close_to_be(self):
        # aggregate errors of the two implicit-flavored schemes agree at
        # moderate dt on the coarse benchmark
        from imexrb.harness import _error_summary, build_problem, initial_state

        system, exact, lifting, grid = build_problem("advdiff2d", 51)
        u0 = initial_state(exact, lifting, grid)
        dt = 2.0 ** -7
        cfg = it.IntegratorConfig(dt=dt, n_steps=128, epsilon=8.7e-3,
                                  n_basis=10, max_inner=100)
        agg_be, _ = _error_summary(it.integrate(system, u0, "be", cfg),
                                   exact, grid, lifting, dt)
        agg_im, _ = _error_summary(it.integrate(system, u0, "imexrb", cfg),
                                   exact, grid, lifting, dt)
        assert abs(agg_im - agg_be) <= 0.10 * agg_be

    def test_collinearity_collapse_at_tiny_dt(self):
        # below dt* every new snapshot is quasi-collinear with the window
        # (the per-step angle on this benchmark is about 3*dt, so the
        # collapse regime for delta = 1e-8 starts near dt ~ 1e-9)
        system, u0 = advdiff_small(11)
        cfg = it.IntegratorConfig(dt=1e-11, n_steps=15, epsilon=1e-2,
                                  n_basis=6, max_inner=10)
        basis = it.BasisState.initialize(u0, cfg.n_basis)
        u = u0
        sizes = []
        for n in range(cfg.n_steps):
            u, record, basis = it.imexrb_step(system, (n + 1) * cfg.dt, u,
                                              basis, cfg)
            sizes.append(basis.size)
        assert all(s == 1 for s in sizes[2:])

    def test_inner_iterations_monotone_in_epsilon(self):
        system, u0 = advdiff_small(21)
        means = {}
        for eps in (1e-2, 1e-5):
            cfg = it.IntegratorConfig(dt=1.0 / 16.0, n_steps=16, epsilon=eps,
                                      n_basis=5, max_inner=100)
            traj = it.integrate(system, u0, "imexrb", cfg)
            means[eps] = np.mean([r.inner_iterations for r in traj.records])
        assert means[1e-5] >= means[1e-2]

    def test_step_errors_annotated_with_index(self):
        import scipy.sparse as sp

        def bad_f(t, y):
            raise ValueError("boom")

        system = SemidiscreteSystem(2, bad_f,
                                    lambda t, y: sp.identity(2, format="csr"),
                                    is_linear=False)
        cfg = it.IntegratorConfig(dt=0.1, n_steps=3)
        with pytest.raises(it.IntegrationError, match="step 0"):
            it.integrate(system, np.ones(2), "be", cfg)

    def test_records_wall_time_and_counters(self):
        system, u0 = advdiff_small(11)
        cfg = it.IntegratorConfig(dt=0.05, n_steps=3, epsilon=1e-3, n_basis=4)
        traj = it.integrate(system, u0, "imexrb", cfg)
        for record in traj.records:
            assert record.wall_time > 0.0
            assert record.jacobian_assemblies == 1
            assert record.rhs_evaluations >= 1
            assert record.max_reduced_dim >= 1
