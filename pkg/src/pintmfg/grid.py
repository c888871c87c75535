"""Space-time grid, field layout and matrix-free finite-difference operators.

Fields are plain numpy arrays in a fixed layout shared by every module:

* scalar fields (density at time levels ``1..nt``, multipliers, right-hand
  sides) have shape ``(nt, nx, ny)``; the flat C-order index of level ``k``
  (1-based) and node ``(i, j)`` is ``((k - 1) * nx + i) * ny + j``.
* momentum fields have shape ``(nt, 4, nx, ny)``; slice ``w[k]`` holds the four
  components at time level ``k`` (0-based, levels ``0..nt-1``).

The constraint matrix ``C = [A | B]`` couples density level ``k`` with
momentum level ``k - 1``.  With the initial datum eliminated, ``C C^T`` is the
block tridiagonal matrix ``A`` returned by :func:`apply_bigA`.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BC",
    "Grid",
    "PrimalState",
    "GridMismatchError",
    "apply_K",
    "apply_B",
    "apply_B_transpose",
    "apply_L",
    "apply_bigA",
    "apply_constraint",
    "apply_constraint_transpose",
    "apply_constraint_full",
    "apply_constraint_full_transpose",
    "reduce_rhs",
    "expand_solution",
    "project_cone",
]


class GridMismatchError(ValueError):
    """An array does not have the shape implied by the grid."""


class BC(str, enum.Enum):
    PERIODIC = "periodic"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class Grid:
    """Rectangular space-time grid.

    ``bc`` may be a single boundary condition or a pair ``(bc_x, bc_y)``
    for mixed conditions.  ``domain`` is ``(a, b, c, d)`` for
    ``[a, b] x [c, d]``.
    """

    nx: int
    ny: int
    nt: int
    bc: BC | tuple[BC, BC] = BC.PERIODIC
    domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    T: float = 1.0

    def __post_init__(self):
        if isinstance(self.bc, (tuple, list)):
            bcs = tuple(BC(b) for b in self.bc)
            if len(bcs) != 2:
                raise ValueError("bc pair must have two entries")
            object.__setattr__(self, "bc", bcs if bcs[0] != bcs[1] else bcs[0])
        else:
            object.__setattr__(self, "bc", BC(self.bc))
        for name in ("nx", "ny", "nt"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        a, b, c, d = self.domain
        if not (b > a and d > c and self.T > 0):
            raise ValueError("domain and final time must have positive extent")

    @property
    def bcs(self) -> tuple[BC, BC]:
        if isinstance(self.bc, tuple):
            return self.bc
        return (self.bc, self.bc)

    def _spacing(self, lo, hi, n, bc):
        if bc is BC.PERIODIC:
            return (hi - lo) / n
        return (hi - lo) / (n + 1)

    @property
    def dx(self) -> float:
        a, b, _, _ = self.domain
        return self._spacing(a, b, self.nx, self.bcs[0])

    @property
    def dy(self) -> float:
        _, _, c, d = self.domain
        return self._spacing(c, d, self.ny, self.bcs[1])

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nt, self.nx, self.ny)

    @property
    def spatial_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def momentum_shape(self) -> tuple[int, int, int, int]:
        return (self.nt, 4, self.nx, self.ny)

    @property
    def size(self) -> int:
        return self.nt * self.nx * self.ny

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of the unknowns as two ``(nx, ny)`` arrays."""
        a, _, c, _ = self.domain
        i = np.arange(self.nx, dtype=float)
        j = np.arange(self.ny, dtype=float)
        if self.bcs[0] is BC.NEUMANN:
            i = i + 1
        if self.bcs[1] is BC.NEUMANN:
            j = j + 1
        return np.meshgrid(a + i * self.dx, c + j * self.dy, indexing="ij")

    def times(self) -> np.ndarray:
        """Time of every level ``0..nt``."""
        return np.arange(self.nt + 1) * self.dt

    def check(self, arr, shape, what="field"):
        arr = np.asarray(arr, dtype=float)
        if arr.shape != tuple(shape):
            if arr.size == int(np.prod(shape)):
                return arr.reshape(shape)
            raise GridMismatchError(
                f"{what} has shape {arr.shape}, expected {tuple(shape)}")
        return arr


@dataclass
class PrimalState:
    """Density at levels ``1..nt`` and momentum at levels ``0..nt-1``."""

    m: np.ndarray
    w: np.ndarray

    def copy(self) -> "PrimalState":
        return PrimalState(self.m.copy(), self.w.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.m.ravel(), self.w.ravel()])

    @classmethod
    def zeros(cls, grid: Grid) -> "PrimalState":
        return cls(np.zeros(grid.shape), np.zeros(grid.momentum_shape))

    def __add__(self, other):
        return PrimalState(self.m + other.m, self.w + other.w)

    def __sub__(self, other):
        return PrimalState(self.m - other.m, self.w - other.w)

    def __mul__(self, c):
        return PrimalState(c * self.m, c * self.w)

    __rmul__ = __mul__


# Dual variables live in the same space as the primal ones.
DualState = PrimalState


# 1D building blocks acting along ``axis``; all unscaled.

def _shift(u, offset, axis, periodic):
    """Return ``v`` with ``v[i] = u[i - offset]`` (zero fill if not periodic)."""
    if periodic:
        return np.roll(u, offset, axis=axis)
    out = np.zeros_like(u)
    n = u.shape[axis]
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    if offset > 0:
        src[axis] = slice(0, n - offset)
        dst[axis] = slice(offset, n)
    else:
        src[axis] = slice(-offset, n)
        dst[axis] = slice(0, n + offset)
    out[tuple(dst)] = u[tuple(src)]
    return out


def _zero_at(u, index, axis):
    v = u.copy()
    sl = [slice(None)] * u.ndim
    sl[axis] = index
    v[tuple(sl)] = 0.0
    return v


def _neg_second_diff(u, axis, bc):
    if bc is BC.PERIODIC:
        return 2.0 * u - np.roll(u, 1, axis=axis) - np.roll(u, -1, axis=axis)
    # reflecting closure: the ghost value equals the boundary value
    n = u.shape[axis]
    out = 2.0 * u - _shift(u, 1, axis, False) - _shift(u, -1, axis, False)
    first = [slice(None)] * u.ndim
    last = [slice(None)] * u.ndim
    first[axis] = 0
    last[axis] = n - 1
    out[tuple(first)] -= u[tuple(first)]
    out[tuple(last)] -= u[tuple(last)]
    return out


def _d1(u, axis, bc):
    # (D1 u)_i = u_i - u_{i-1}; Neumann: u_{-1} = 0 and the last column is void
    if bc is BC.PERIODIC:
        return u - np.roll(u, 1, axis=axis)
    v = _zero_at(u, -1, axis)
    return v - _shift(v, 1, axis, False)


def _d1_t(s, axis, bc):
    if bc is BC.PERIODIC:
        return s - np.roll(s, -1, axis=axis)
    return _zero_at(s - _shift(s, -1, axis, False), -1, axis)


def _d2(u, axis, bc):
    # (D2 u)_i = u_{i+1} - u_i; Neumann: the first column is void, u_n = 0
    if bc is BC.PERIODIC:
        return np.roll(u, -1, axis=axis) - u
    v = _zero_at(u, 0, axis)
    return _shift(v, -1, axis, False) - v


def _d2_t(s, axis, bc):
    if bc is BC.PERIODIC:
        return np.roll(s, 1, axis=axis) - s
    return _zero_at(_shift(s, 1, axis, False) - s, 0, axis)


def apply_K(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Negative discrete Laplacian on the last two axes of ``u``.

    ``u`` may carry any number of leading (batch) axes; a flat vector of
    length ``nx * ny`` is accepted and returned flat.
    """
    u = np.asarray(u, dtype=float)
    flat = u.ndim == 1
    if flat:
        u = grid.check(u, grid.spatial_shape)
    elif u.shape[-2:] != grid.spatial_shape:
        raise GridMismatchError(f"spatial shape {u.shape[-2:]} != {grid.spatial_shape}")
    bx, by = grid.bcs
    out = (_neg_second_diff(u, -2, bx) / grid.dx**2
           + _neg_second_diff(u, -1, by) / grid.dy**2)
    return out.ravel() if flat else out


def apply_L(grid: Grid, nu: float, u: np.ndarray) -> np.ndarray:
    """``L = nu K + I / dt``."""
    return nu * apply_K(grid, u) + np.asarray(u, dtype=float) / grid.dt


def apply_B(grid: Grid, w: np.ndarray) -> np.ndarray:
    """Discrete divergence of a momentum field.

    ``w`` has shape ``(..., 4, nx, ny)`` (or flat ``4 * nx * ny``).
    """
    w = np.asarray(w, dtype=float)
    flat = w.ndim == 1
    if flat:
        w = grid.check(w, (4,) + grid.spatial_shape, "momentum")
    elif w.shape[-3:] != (4,) + grid.spatial_shape:
        raise GridMismatchError(f"momentum shape {w.shape[-3:]} is invalid")
    bx, by = grid.bcs
    out = ((_d1(w[..., 0, :, :], -2, bx) + _d2(w[..., 1, :, :], -2, bx)) / grid.dx
           + (_d1(w[..., 2, :, :], -1, by) + _d2(w[..., 3, :, :], -1, by)) / grid.dy)
    return out.ravel() if flat else out


def apply_B_transpose(grid: Grid, s: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`apply_B`; ``(..., nx, ny) -> (..., 4, nx, ny)``."""
    s = np.asarray(s, dtype=float)
    flat = s.ndim == 1
    if flat:
        s = grid.check(s, grid.spatial_shape)
    elif s.shape[-2:] != grid.spatial_shape:
        raise GridMismatchError(f"spatial shape {s.shape[-2:]} != {grid.spatial_shape}")
    bx, by = grid.bcs
    out = np.stack([
        _d1_t(s, -2, bx) / grid.dx,
        _d2_t(s, -2, bx) / grid.dx,
        _d1_t(s, -1, by) / grid.dy,
        _d2_t(s, -1, by) / grid.dy,
    ], axis=-3)
    return out.ravel() if flat else out


def apply_bigA(grid: Grid, nu: float, x: np.ndarray) -> np.ndarray:
    """Reduced normal-equations operator, applied without assembly.

    Block row ``k`` reads ``-L x_{k-1}/dt + D_k x_k - L x_{k+1}/dt`` with
    ``D_1 = L^2 + B B^T`` and ``D_k = L^2 + B B^T + I/dt^2`` for ``k > 1``.
    """
    flat = np.ndim(x) == 1
    x = grid.check(x, grid.shape)
    dt = grid.dt
    Lx = apply_L(grid, nu, x)
    y = apply_L(grid, nu, Lx) + apply_B(grid, apply_B_transpose(grid, x))
    y[1:] += x[1:] / dt**2
    y[1:] -= Lx[:-1] / dt
    y[:-1] -= Lx[1:] / dt
    return y.ravel() if flat else y


def apply_constraint(grid: Grid, nu: float, m: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Constraint operator with the initial level removed.

    Row ``k`` (levels ``1..nt``) is ``(m^k - m^{k-1})/dt + nu K m^k +
    div(w^{k-1})`` with ``m^0`` treated as zero; the datum enters through the
    right-hand side ``m0 / dt`` in row 1.
    """
    m = grid.check(m, grid.shape)
    w = grid.check(w, grid.momentum_shape, "momentum")
    out = apply_L(grid, nu, m) + apply_B(grid, w)
    out[1:] -= m[:-1] / grid.dt
    return out


def apply_constraint_transpose(grid: Grid, nu: float, z: np.ndarray):
    """Adjoint of :func:`apply_constraint`; returns ``(m, w)``."""
    z = grid.check(z, grid.shape)
    m = apply_L(grid, nu, z)
    m[:-1] -= z[1:] / grid.dt
    return m, apply_B_transpose(grid, z)


def apply_constraint_full(grid: Grid, nu: float, m_full: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Full constraint operator over levels ``0..nt``.

    ``m_full`` has shape ``(nt + 1, nx, ny)`` and includes the initial level;
    row 0 is the identity on ``m^0``.
    """
    m_full = grid.check(m_full, (grid.nt + 1,) + grid.spatial_shape)
    out = np.empty_like(m_full)
    out[0] = m_full[0]
    out[1:] = apply_constraint(grid, nu, m_full[1:], w)
    out[1] -= m_full[0] / grid.dt
    return out


def apply_constraint_full_transpose(grid: Grid, nu: float, z_full: np.ndarray):
    z_full = grid.check(z_full, (grid.nt + 1,) + grid.spatial_shape)
    m_in, w = apply_constraint_transpose(grid, nu, z_full[1:])
    m = np.empty_like(z_full)
    m[0] = z_full[0] - z_full[1] / grid.dt
    m[1:] = m_in
    return m, w


def reduce_rhs(grid: Grid, full_rhs: np.ndarray):
    """Eliminate the initial-condition block row of the full normal equations.

    Returns the reduced right-hand side over levels ``1..nt`` and the level-0
    data needed by :func:`expand_solution`.
    """
    full_rhs = grid.check(full_rhs, (grid.nt + 1,) + grid.spatial_shape)
    reduced = full_rhs[1:].copy()
    reduced[0] += full_rhs[0] / grid.dt
    return reduced, full_rhs[0].copy()


def expand_solution(grid: Grid, reduced_solution: np.ndarray, z0_data: np.ndarray) -> np.ndarray:
    z = grid.check(reduced_solution, grid.shape)
    full = np.empty((grid.nt + 1,) + grid.spatial_shape)
    full[1:] = z
    full[0] = z0_data + z[0] / grid.dt
    return full


_CONE_SIGNS = np.array([1.0, -1.0, 1.0, -1.0])


def project_cone(w: np.ndarray, axis: int = 0) -> np.ndarray:
    """Project onto ``[0, inf) x (-inf, 0] x [0, inf) x (-inf, 0]``.

    The four components run along ``axis`` (a bare 4-vector works as is).
    """
    w = np.asarray(w, dtype=float)
    shape = [1] * w.ndim
    shape[axis] = 4
    signs = _CONE_SIGNS.reshape(shape)
    return signs * np.maximum(signs * w, 0.0)
