import numpy as np
import pytest

from pintmfg.analysis import (
    UNITY_TOL,
    mass_audit,
    nonunity_spectrum,
    preconditioned_spectrum,
    read_eigenvalues_csv,
    write_eigenvalues_csv,
)
from pintmfg.grid import BC, Grid

from oracles import dense_bigA, dense_P


def grid8(bc=BC.PERIODIC):
    return Grid(8, 8, 8, bc)


def test_zero_viscosity_exact():
    rep = preconditioned_spectrum(grid8(), 0.0, 1)
    assert rep.eigenvalues.size == 512
    assert np.max(np.abs(rep.eigenvalues - 1)) <= 1e-10
    assert rep.unity_count == 512


def test_lemma_count_small_viscosity():
    rep = preconditioned_spectrum(grid8(), 0.01, 1)
    assert rep.unity_count >= 7 * 64
    assert rep.bound == 448
    assert np.count_nonzero(np.abs(rep.eigenvalues - 1) > UNITY_TOL) <= 64


def test_l2_large_viscosity_real_bounded():
    rep = preconditioned_spectrum(grid8(), 1.0, 2)
    assert np.max(np.abs(rep.nonunity.imag)) <= 1e-10
    assert np.all(np.isfinite(rep.nonunity)) and np.all(rep.nonunity.real > 0)
    assert np.all(rep.nonunity.real <= 1 + 1e-10)


def test_nonunity_part_matches_full_spectrum():
    g = Grid(4, 4, 4, BC.NEUMANN)
    for l in (1, 2):
        rep = preconditioned_spectrum(g, 0.1, l)
        far = rep.eigenvalues[np.abs(rep.eigenvalues - 1) > 1e-6]
        near = rep.nonunity[np.abs(rep.nonunity - 1) > 1e-6]
        assert np.allclose(np.sort(far.real), np.sort(near.real), atol=1e-9)


def test_methods_agree_with_dense_pencil():
    g = Grid(3, 3, 4, BC.PERIODIC)
    lam = np.sort(np.linalg.eigvals(np.linalg.solve(dense_P(g, 0.2, 2), dense_bigA(g, 0.2))).real)
    for method in ("explicit", "pencil"):
        rep = preconditioned_spectrum(g, 0.2, 2, method)
        assert np.allclose(np.sort(rep.eigenvalues.real), lam, atol=1e-9)


def test_trend_in_viscosity():
    dev = {nu: preconditioned_spectrum(grid8(), nu, 1).max_deviation for nu in (1.0, 0.001)}
    assert dev[0.001] <= dev[1.0]


def test_nonunity_size():
    g = Grid(4, 4, 6, BC.NEUMANN)
    assert nonunity_spectrum(g, 0.1, 1).size == 16


def test_size_guard():
    with pytest.raises(ValueError):
        preconditioned_spectrum(Grid(8, 8, 17, BC.PERIODIC), 0.1, 1)
    with pytest.raises(ValueError):
        preconditioned_spectrum(Grid(2, 2, 2, BC.PERIODIC), 0.1, 1, method="qr")


class TestMassAudit:
    def test_constant(self):
        m0 = np.full((3, 3), 2.0)
        audit = mass_audit(np.broadcast_to(m0, (5, 3, 3)), m0)
        assert np.allclose(audit.masses, 18.0) and audit.max_deviation == 0.0

    def test_perturbation(self):
        m0 = np.ones((3, 3))
        m = np.ones((4, 3, 3))
        m[2, 1, 1] += 0.125
        audit = mass_audit(m, m0)
        assert np.allclose(audit.masses, [9, 9, 9.125, 9]) and audit.max_deviation == pytest.approx(0.125)


def test_csv_round_trip(tmp_path, rng):
    z = rng.normal(size=10) + 1j * rng.normal(size=10)
    path = write_eigenvalues_csv(tmp_path / "e.csv", z)
    assert path.read_text().splitlines()[0] == "index,real,imag"
    assert np.array_equal(read_eigenvalues_csv(path), z)
