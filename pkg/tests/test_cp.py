import math

import numpy as np
import pytest

from pintmfg.analysis import mass_audit
from pintmfg.cp import (
    CpOptions,
    InnerSolveError,
    default_cp_tol,
    run_cp,
    stopping_residual,
    update_steps,
)
from pintmfg.grid import BC, Grid
from pintmfg.problems import Problem, problem1, problem2, trivial_problem
from pintmfg.prox import CellCost, Coupling

from oracles import brute_prox, dense_prox_dual


class TestSteps:
    def test_no_acceleration(self):
        assert update_steps(0.0, 0.3, 2.0) == (1.0, 0.3, 2.0)

    def test_example(self):
        theta, tau, sigma = update_steps(0.5, 1.0, 1.0)
        assert theta == pytest.approx(1 / math.sqrt(2))
        assert tau == pytest.approx(1 / math.sqrt(2))
        assert sigma == pytest.approx(math.sqrt(2))

    def test_product_invariant(self, rng):
        for _ in range(100):
            g, t, s = rng.uniform(0, 5), rng.uniform(0.01, 3), rng.uniform(0.01, 3)
            theta, t2, s2 = update_steps(g, t, s)
            assert t2 * s2 == pytest.approx(t * s, rel=1e-14)
            assert 0 < theta <= 1 and (g == 0 or t2 < t)


class TestResidual:
    def test_identical(self):
        g = Grid(3, 3, 3, BC.PERIODIC)
        m = np.ones(g.shape)
        assert stopping_residual(m, m, g) == 0.0

    def test_single_entry(self):
        g = Grid(3, 4, 5, BC.NEUMANN)
        a = np.zeros(g.shape)
        b = a.copy()
        b[2, 1, 3] = 0.25
        assert stopping_residual(b, a, g) == pytest.approx(math.sqrt(g.dx * g.dy * g.dt) * 0.25)

    def test_random(self, rng):
        g = Grid(3, 3, 3, BC.PERIODIC)
        a, b = rng.normal(size=(2,) + g.shape)
        expected = math.sqrt(g.dx * g.dy * g.dt * np.sum((a - b) ** 2))
        assert stopping_residual(a, b, g) == pytest.approx(expected, rel=1e-14)


class TestOptions:
    @pytest.mark.parametrize("kw", [dict(gamma=-1), dict(tau0=0), dict(tau0=2.0, sigma0=1.0)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            CpOptions(**kw)

    def test_default_tol(self):
        g = Grid(16, 16, 128, BC.PERIODIC)
        assert default_cp_tol(g) == pytest.approx(g.dx * g.dy * g.dt / 5)


class TestRun:
    @pytest.mark.parametrize("bc", [BC.PERIODIC, BC.NEUMANN])
    @pytest.mark.parametrize("nu", [0.0, 0.1])
    def test_trivial_optimum(self, bc, nu):
        res = run_cp(trivial_problem(bc, nx=6, nt=12, nu=nu))
        assert res.converged
        assert np.max(np.abs(res.state.m - 1)) <= 1e-6
        assert np.max(np.abs(res.state.w)) <= 1e-6

    def test_first_iteration_against_dense_stepper(self, rng):
        g = Grid(2, 2, 2, BC.PERIODIC)
        m0 = rng.uniform(0.5, 1.5, g.spatial_shape)
        off = rng.normal(size=g.spatial_shape)
        cost = CellCost(Coupling(curvature=0.5, offset=off))
        # nu = 0 with l = 1 makes the preconditioner exact, so CG is exact too
        prob = Problem("dense", g, 0.0, m0, cost, 0.5)
        res = run_cp(prob, CpOptions(gamma=0.5, max_iter=1, cp_tol=0.0))
        y0m = np.broadcast_to(m0, g.shape)
        xm, xw = dense_prox_dual(g, 0.0, y0m, np.zeros(g.momentum_shape), 1.0, m0)
        assert np.allclose(res.dual.m, xm, atol=1e-10) and np.allclose(res.dual.w, xw, atol=1e-10)
        # primal step with tau = 1, cell by cell through the brute-force prox
        for k, i, j in np.ndindex(g.shape):
            o = off[i, j]
            m_ref, w_ref = brute_prox(y0m[k, i, j] - xm[k, i, j], -xw[k, :, i, j], 1.0,
                                      lambda m: m**3 / 6 + o * m)
            assert res.state.m[k, i, j] == pytest.approx(m_ref, abs=1e-6)
            assert np.allclose(res.state.w[k, :, i, j], w_ref, atol=1e-6)

    def test_stats_and_invariants(self):
        prob = problem1(8, nt=32, nu=0.05)
        rows = []
        res = run_cp(prob, callback=lambda it, row: rows.append((it, row)))
        n = res.iterations
        assert res.converged and n == len(rows)
        for name in ("r", "cg_iterations", "tau", "sigma", "theta", "t_dual", "t_primal"):
            assert len(getattr(res.stats, name)) == n
        prod = np.array(res.stats.tau) * np.array(res.stats.sigma)
        assert np.allclose(prod, 1.0, rtol=1e-12)
        assert all(0 < t <= 1 for t in res.stats.theta)
        assert res.stats.r[-1] <= default_cp_tol(prob.grid)
        assert [it for it, _ in rows] == list(range(1, n + 1))
        assert np.all(res.state.m >= 0)
        w = res.state.w
        assert np.all(w[:, 0] >= 0) and np.all(w[:, 1] <= 0) and np.all(w[:, 2] >= 0) and np.all(w[:, 3] <= 0)

    @pytest.mark.parametrize("make", [lambda: problem1(8, nt=32, nu=0.05),
                                      lambda: problem2(8, nt=40, nu=0.05)])
    def test_mass_conservation(self, make):
        prob = make()
        res = run_cp(prob)
        assert res.converged
        audit = mass_audit(res.feasible.m, prob.m0)
        assert audit.max_deviation <= 10 * res.final_cg_tol * np.linalg.norm(prob.m0)

    def test_deterministic(self):
        prob = problem1(6, nt=24, nu=0.1)
        a = run_cp(prob, CpOptions(gamma=0.5, max_iter=15))
        b = run_cp(prob, CpOptions(gamma=0.5, max_iter=15, workers=3))
        assert a.stats.r == b.stats.r and a.stats.cg_iterations == b.stats.cg_iterations
        assert np.array_equal(a.state.m, b.state.m)

    def test_max_iter(self):
        res = run_cp(problem1(6, nt=24), CpOptions(gamma=0.5, max_iter=3))
        assert res.iterations == 3 and not res.converged

    def test_inner_failure_carries_iteration(self):
        prob = problem1(6, nt=24, nu=0.5)
        opts = CpOptions(gamma=0.5, max_iter=5, cg_max_iter=1, strict_cg=True)
        with pytest.raises(InnerSolveError, match="iteration 2"):
            run_cp(prob, opts)
