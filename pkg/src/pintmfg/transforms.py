"""Real trigonometric transforms that diagonalize 1D second-difference matrices.

Each :class:`TransformPlan` carries a transform ``V`` and the eigenvalues
``lam`` of its associated operator ``M`` so that ``M = V^{-1} diag(lam) V``.
``V`` is normalized such that ``V^{-1} = scale * V^T``:

========  ==========================================  ================
kind      operator ``M``                              ``scale``
========  ==========================================  ================
``dst1``  ``tridiag(-1, 2, -1)``                      ``2 / (n + 1)``
``dct8``  same with top-left entry 1                  ``4 / (2n + 1)``
``dct2``  reflecting (Neumann) ``tridiag(-1,2,-1)``   ``1`` (orthonormal)
``rdft``  circulant ``[2, -1, 0, ..., 0, -1]``        ``1`` (orthonormal)
========  ==========================================  ================

The packed ``rdft`` layout is ``[Re c_0, Re c_1, Im c_1, ..., Re c_{n/2}]``
for even ``n`` (odd ``n`` ends with ``Re c_q, Im c_q``, ``q = (n-1)/2``),
scaled so that the real basis is orthonormal.  Both slots of a frequency
share one eigenvalue.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .grid import BC

__all__ = [
    "TransformPlan",
    "dtt_eigenvalues",
    "laplace_eigenvalues",
    "naive_matrix",
    "forward",
    "inverse",
    "time_plan",
    "axis_plan",
]

KINDS = ("dst1", "dct8", "dct2", "rdft")


def dtt_eigenvalues(nt: int, l: int) -> np.ndarray:
    """Eigenvalues of the time second-difference matrix with corner entry ``l``."""
    if l not in (1, 2):
        raise ValueError(f"l must be 1 or 2, got {l!r}")
    if nt < 1:
        raise ValueError("nt must be positive")
    k = np.arange(1, nt + 1)
    return 2.0 - 2.0 * np.cos(np.pi * (k - 1 + l / 2) / (nt + l / 2))


def laplace_eigenvalues(n: int, bc) -> np.ndarray:
    """Eigenvalues of the unscaled 1D negative Laplacian, ``v = 0..n-1``."""
    bc = BC(bc)
    v = np.arange(n)
    if bc is BC.PERIODIC:
        return 2.0 - 2.0 * np.cos(2.0 * np.pi * v / n)
    return 2.0 - 2.0 * np.cos(np.pi * v / n)


def _rdft_frequencies(n):
    # frequency index of every packed slot
    q = np.zeros(n, dtype=int)
    q[1:] = (np.arange(1, n) + 1) // 2
    return q


def _rdft_weights(n):
    wts = np.full(n, np.sqrt(2.0 / n))
    wts[0] = np.sqrt(1.0 / n)
    if n % 2 == 0:
        wts[-1] = np.sqrt(1.0 / n)
    return wts


def naive_matrix(kind: str, n: int) -> np.ndarray:
    """Dense O(n^2) transform matrix straight from the definitions."""
    j = np.arange(n)
    if kind == "dst1":
        return np.sin(np.pi * np.outer(j + 1, j + 1) / (n + 1))
    if kind == "dct8":
        return np.cos(np.pi * np.outer(j + 0.5, j + 0.5) / (n + 0.5))
    if kind == "dct2":
        mat = np.cos(np.pi * np.outer(j, j + 0.5) / n) * np.sqrt(2.0 / n)
        mat[0] /= np.sqrt(2.0)
        return mat
    if kind == "rdft":
        q = _rdft_frequencies(n)
        ang = 2.0 * np.pi * np.outer(q, j) / n
        mat = np.cos(ang)
        odd = (j % 2 == 0) & (j > 0)  # slots holding imaginary parts
        if n % 2 == 0:
            odd[-1] = False
        mat[odd] = -np.sin(ang[odd])
        return mat * _rdft_weights(n)[:, None]
    raise ValueError(f"unknown transform kind {kind!r}")


@dataclass(frozen=True)
class TransformPlan:
    """Precomputed 1D transform along one axis.

    ``method="fast"`` uses FFT-based paths, ``"matrix"`` multiplies by the
    dense transform matrix (BLAS), ``"naive"`` is the same matrix kept as the
    reference definition.
    """

    kind: str
    n: int
    method: str = "fast"
    eigenvalues: np.ndarray = field(init=False, repr=False)
    scale: float = field(init=False)
    matrix: np.ndarray | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        if self.method not in ("fast", "matrix", "naive"):
            raise ValueError(f"unknown method {self.method!r}")
        n = self.n
        if n < 1:
            raise ValueError("transform length must be positive")
        if self.kind == "dst1":
            lam, scale = dtt_eigenvalues(n, 2), 2.0 / (n + 1)
        elif self.kind == "dct8":
            lam, scale = dtt_eigenvalues(n, 1), 4.0 / (2 * n + 1)
        elif self.kind == "dct2":
            lam, scale = laplace_eigenvalues(n, BC.NEUMANN), 1.0
        else:
            lam = 2.0 - 2.0 * np.cos(2.0 * np.pi * _rdft_frequencies(n) / n)
            scale = 1.0
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "scale", scale)
        if self.method != "fast":
            mat = naive_matrix(self.kind, n)
            mat.setflags(write=False)
            object.__setattr__(self, "matrix", mat)

    def forward(self, x, axis=-1):
        return _apply(self, np.asarray(x, dtype=float), axis, inverse=False)

    def inverse(self, X, axis=-1):
        return _apply(self, np.asarray(X, dtype=float), axis, inverse=True)

    def diagonal_apply(self, x, axis=-1):
        """Apply the associated operator ``M`` through the transform."""
        shape = [1] * np.ndim(x)
        shape[axis] = self.n
        return self.inverse(self.eigenvalues.reshape(shape) * self.forward(x, axis), axis)


def forward(plan: TransformPlan, x, axis=-1):
    return plan.forward(x, axis)


def inverse(plan: TransformPlan, X, axis=-1):
    return plan.inverse(X, axis)


def _matmul_axis(mat, x, axis):
    if axis in (0, -x.ndim):
        return (mat @ x.reshape(x.shape[0], -1)).reshape((mat.shape[0],) + x.shape[1:])
    xm = np.moveaxis(x, axis, -1)
    return np.moveaxis(xm @ mat.T, -1, axis)


@functools.lru_cache(maxsize=16)
def _dct8_twiddles(n):
    j = np.arange(n)
    M = 2 * n + 1
    return np.exp(-1j * np.pi * j / M), np.exp(-1j * np.pi * (2 * j + 1) / (2 * M))


def _dct8_fast(x, axis):
    # (2j+1)(2k+1)/(4n+2) = 2jk/M + j/M + (2k+1)/(2M) with M = 2n+1: one length-M FFT
    n = x.shape[axis]
    pre, post = _dct8_twiddles(n)
    xm = np.moveaxis(x, axis, -1)
    spec = sfft.fft(xm * pre, n=2 * n + 1, axis=-1)[..., :n]
    return np.moveaxis((spec * post).real, -1, axis)


def _rdft_fast(x, axis, inverse):
    n = x.shape[axis]
    wts = _rdft_weights(n)
    xm = np.moveaxis(x, axis, -1)
    if not inverse:
        c = sfft.rfft(xm, axis=-1)
        out = np.empty(xm.shape)
        out[..., 0] = c[..., 0].real
        nq = (n - 1) // 2
        out[..., 1:2 * nq + 1:2] = c[..., 1:nq + 1].real
        out[..., 2:2 * nq + 2:2] = c[..., 1:nq + 1].imag
        if n % 2 == 0:
            out[..., -1] = c[..., n // 2].real
        out *= wts
        return np.moveaxis(out, -1, axis)
    # inverse: orthonormal, so apply the transpose of the packing
    X = xm * wts
    c = np.zeros(xm.shape[:-1] + (n // 2 + 1,), dtype=complex)
    c[..., 0] = X[..., 0]
    nq = (n - 1) // 2
    c[..., 1:nq + 1] = X[..., 1:2 * nq + 1:2] + 1j * X[..., 2:2 * nq + 2:2]
    if n % 2 == 0:
        c[..., n // 2] = X[..., -1]
    # V^T X = sum_q w_q (a_q cos - b_q sin); irfft(n) gives (1/n)(c0 + 2 Re ...)
    # so rescale the non-DC/Nyquist terms by 1/2 and the result by n
    c[..., 1:nq + 1] *= 0.5
    out = sfft.irfft(c, n=n, axis=-1) * n
    return np.moveaxis(out, -1, axis)


def _apply(plan, x, axis, inverse):
    if x.shape[axis] != plan.n:
        raise ValueError(f"length {x.shape[axis]} along axis {axis} != plan length {plan.n}")
    if plan.matrix is not None:
        mat = plan.matrix
        if inverse:
            return plan.scale * _matmul_axis(mat.T, x, axis)
        return _matmul_axis(mat, x, axis)
    kind = plan.kind
    if kind == "dst1":
        # both directions use the symmetric transform
        out = sfft.dst(x, type=1, axis=axis) * 0.5
        return out * plan.scale if inverse else out
    if kind == "dct8":
        out = _dct8_fast(x, axis)
        return out * plan.scale if inverse else out
    if kind == "dct2":
        if inverse:
            return sfft.idct(x, type=2, norm="ortho", axis=axis)
        return sfft.dct(x, type=2, norm="ortho", axis=axis)
    return _rdft_fast(x, axis, inverse)


# above this length the FFT paths beat dense BLAS for the time transforms
FAST_TIME_MIN = 1024


def time_plan(nt: int, l: int, method: str = "auto") -> TransformPlan:
    """Transform diagonalizing the time operator: DCT-VIII for ``l=1``, DST-I for ``l=2``.

    ``method="auto"`` uses the dense matrix below ``FAST_TIME_MIN`` levels and
    the FFT path from there on.
    """
    if l not in (1, 2):
        raise ValueError(f"l must be 1 or 2, got {l!r}")
    if method == "auto":
        method = "fast" if nt >= FAST_TIME_MIN else "matrix"
    return TransformPlan("dct8" if l == 1 else "dst1", nt, method)


def axis_plan(n: int, bc, method: str = "fast") -> TransformPlan:
    """Transform diagonalizing the 1D negative Laplacian for ``bc``."""
    return TransformPlan("rdft" if BC(bc) is BC.PERIODIC else "dct2", n, method)
