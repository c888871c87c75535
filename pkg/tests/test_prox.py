import numpy as np
import pytest

from pintmfg.grid import BC, Grid, PrimalState, apply_bigA, apply_constraint, project_cone
from pintmfg.krylov import pcg
from pintmfg.precond import PrecondSpec, pint_apply
from pintmfg.problems import problem1_cost, problem2_setup
from pintmfg.prox import (
    CellCost,
    Coupling,
    project_constraint,
    prox_dual,
    prox_objective,
    prox_primal,
    prox_primal_pointwise,
)

from oracles import brute_prox, dense_prox_dual, dense_reduced_constraint


def exact_solver(grid, nu, tol=1e-13):
    spec = PrecondSpec(grid, nu, 1)

    def solve(rhs):
        return pcg(lambda v: apply_bigA(grid, nu, v), lambda r: pint_apply(spec, r), rhs, tol)

    return solve


def problem1_cell(rng):
    x, y = rng.uniform(0, 1, 2)
    off = float(problem1_cost(x, y, 0.0))
    return CellCost(Coupling(curvature=0.5, offset=off)), (lambda m: m**3 / 6 + off * m), None, False


def problem2_cell(rng, dt=0.05):
    g = Grid(8, 8, int(round(1 / dt)), BC.NEUMANN, (-0.5, 0.5, -0.5, 0.5), 1.0)
    _, mbar, terminal = problem2_setup(1e-5 / g.dt, g)
    i, j = rng.integers(0, 8, 2)
    term = terminal.at((i, j))
    beta = 1.0 / term.slope
    mb = float(mbar[i, j])
    G = lambda m: (m * m / 2 - mb * m) / beta
    return CellCost(Coupling(), term), (lambda m: 0.0), G, True


class TestPointwise:
    def test_stationary(self):
        m, w = prox_primal_pointwise(1.0, np.zeros(4), 1.0, CellCost())
        assert m == pytest.approx(1.0, abs=1e-12) and not np.any(w)

    def test_clamp(self):
        m, w = prox_primal_pointwise(-2.0, np.zeros(4), 1.0, CellCost())
        assert m == 0.0 and not np.any(w)

    def test_example_against_oracle(self):
        m_ref, w_ref = brute_prox(1.0, [1, 0, 0, 0], 1.0, lambda m: 0.0)
        m, w = prox_primal_pointwise(1.0, np.array([1.0, 0, 0, 0]), 1.0, CellCost())
        assert m == pytest.approx(m_ref, abs=1e-6)
        assert np.allclose(w, [m / (m + 1), 0, 0, 0])
        assert np.allclose(w, w_ref, atol=1e-6)
        # the scalar equation (m - 1) = 1 / (2 (m + 1)^2) holds at the returned point
        assert (m - 1) - 1 / (2 * (m + 1) ** 2) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("kind", ["problem1", "problem2"])
    def test_matches_brute_force(self, kind, rng):
        for _ in range(100):
            cost, F, G, terminal = problem1_cell(rng) if kind == "problem1" else problem2_cell(rng)
            dt = 0.05
            m_t = rng.uniform(-2, 5)
            w_t = rng.uniform(-3, 3, 4)
            tau = rng.choice([0.1, 1.0, 10.0])
            m, w = prox_primal_pointwise(m_t, w_t, tau, cost, terminal, dt)
            m_ref, w_ref = brute_prox(m_t, w_t, tau, F, G, dt)
            assert abs(m - m_ref) <= 1e-6 * max(1.0, m_ref)
            assert np.allclose(w, w_ref, atol=1e-6)
            obj = prox_objective(m, w, m_t, w_t, tau, cost, terminal, dt)
            ref = prox_objective(m_ref, w_ref, m_t, w_t, tau, cost, terminal, dt)
            assert obj <= ref + 1e-9 * max(1.0, abs(ref))

    def test_firmly_nonexpansive(self, rng):
        cost = CellCost(Coupling(curvature=0.5, offset=-0.3))
        for _ in range(100):
            a, b = rng.uniform(-3, 3, (2, 5))
            tau = rng.choice([0.1, 1.0, 10.0])
            pa, pb = (np.r_[prox_primal_pointwise(v[0], v[1:], tau, cost)] for v in (a, b))
            assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
            assert np.linalg.norm(pa - pb) ** 2 <= np.vdot(pa - pb, a - b) + 1e-10

    def test_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            prox_primal(np.zeros((2, 2, 2)), np.zeros((2, 4, 2, 2)), 0.0, CellCost(), 0.1)

    def test_coupling_monotone_required(self):
        with pytest.raises(ValueError):
            Coupling(slope=-1.0)


class TestFields:
    def test_domain_postconditions(self, rng):
        g = Grid(4, 4, 5, BC.PERIODIC)
        m_t = rng.normal(size=g.shape) * 2
        w_t = rng.normal(size=g.momentum_shape) * 2
        off = rng.normal(size=g.spatial_shape)
        cost = CellCost(Coupling(curvature=0.5, offset=off), Coupling(slope=3.0, offset=-off))
        m, w = prox_primal(m_t, w_t, 0.7, cost, g.dt)
        assert np.all(m >= 0)
        assert np.array_equal(project_cone(w, axis=1), w)

    def test_field_matches_pointwise(self, rng):
        g = Grid(3, 3, 4, BC.NEUMANN)
        m_t = rng.normal(size=g.shape)
        w_t = rng.normal(size=g.momentum_shape)
        off = rng.normal(size=g.spatial_shape)
        cost = CellCost(Coupling(curvature=0.5, offset=off), Coupling(slope=2.0, offset=off))
        m, w = prox_primal(m_t, w_t, 0.4, cost, g.dt)
        for k in range(g.nt):
            last = k == g.nt - 1
            cell = CellCost(cost.running.at((1, 2)), cost.terminal.at((1, 2)))
            mk, wk = prox_primal_pointwise(m_t[k, 1, 2], w_t[k, :, 1, 2], 0.4, cell, last, g.dt)
            assert m[k, 1, 2] == pytest.approx(mk, abs=1e-12)
            assert np.allclose(w[k, :, 1, 2], wk, atol=1e-12)


class TestDual:
    def test_zero(self):
        g = Grid(3, 3, 3, BC.PERIODIC)
        out, _ = prox_dual(g, 0.1, PrimalState.zeros(g), 1.0, np.zeros(g.spatial_shape), exact_solver(g, 0.1))
        assert not np.any(out.m) and not np.any(out.w)

    def test_feasible_input(self, rng):
        g = Grid(3, 3, 3, BC.NEUMANN)
        nu, sigma = 0.1, 2.0
        m0 = np.full(g.spatial_shape, 1.5)
        x = PrimalState(sigma * np.broadcast_to(m0, g.shape).copy(), np.zeros(g.momentum_shape))
        out, _ = prox_dual(g, nu, x, sigma, m0, exact_solver(g, nu))
        assert np.allclose(out.m, 0.0, atol=1e-10) and np.allclose(out.w, 0.0, atol=1e-10)

    @pytest.mark.parametrize("bc", [BC.PERIODIC, BC.NEUMANN])
    def test_matches_dense(self, bc, rng):
        g = Grid(3, 3, 3, bc)
        nu, sigma = 0.1, 0.7
        m0 = rng.uniform(0, 2, g.spatial_shape)
        x = PrimalState(rng.normal(size=g.shape), rng.normal(size=g.momentum_shape))
        out, _ = prox_dual(g, nu, x, sigma, m0, exact_solver(g, nu))
        m_ref, w_ref = dense_prox_dual(g, nu, x.m, x.w, sigma, m0)
        scale = np.linalg.norm(np.r_[m_ref.ravel(), w_ref.ravel()])
        assert np.linalg.norm(np.r_[(out.m - m_ref).ravel(), (out.w - w_ref).ravel()]) <= 1e-8 * scale

    def test_range_of_transpose(self, rng):
        g = Grid(3, 3, 2, BC.PERIODIC)
        nu = 0.2
        x = PrimalState(rng.normal(size=g.shape), rng.normal(size=g.momentum_shape))
        out, _ = prox_dual(g, nu, x, 1.0, np.ones(g.spatial_shape), exact_solver(g, nu))
        C = dense_reduced_constraint(g, nu)
        v = out.flat()
        coef, *_ = np.linalg.lstsq(C.T, v, rcond=None)
        assert np.linalg.norm(C.T @ coef - v) <= 1e-10 * np.linalg.norm(v)

    def test_projection_is_feasible(self, rng):
        g = Grid(4, 4, 4, BC.NEUMANN)
        nu = 0.05
        m0 = rng.uniform(0, 1, g.spatial_shape)
        y = PrimalState(rng.normal(size=g.shape), rng.normal(size=g.momentum_shape))
        p, _ = project_constraint(g, nu, y, m0, exact_solver(g, nu))
        res = apply_constraint(g, nu, p.m, p.w)
        res[0] -= m0 / g.dt
        assert np.linalg.norm(res) <= 1e-9 * np.linalg.norm(m0 / g.dt)

    def test_bad_sigma(self):
        g = Grid(2, 2, 2, BC.PERIODIC)
        with pytest.raises(ValueError):
            prox_dual(g, 0.1, PrimalState.zeros(g), 0.0, np.zeros((2, 2)), exact_solver(g, 0.1))
