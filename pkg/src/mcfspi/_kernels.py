"""Hot numeric kernels, numba-compiled with a pure-numpy fallback.

Set the environment variable ``MCFSPI_NO_NUMBA=1`` to force the numpy
implementations (useful for debugging and for the kernel benchmark in
``benchmarks/bench_kernels.py``).
"""

import os

import numpy as np

_NO_NUMBA = os.environ.get("MCFSPI_NO_NUMBA", "0").lower() in ("1", "true", "yes")

if not _NO_NUMBA:
    try:
        from numba import njit, prange
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _NO_NUMBA = True


def backend():
    """Return the active kernel backend, 'numba' or 'numpy'."""
    return "numpy" if _NO_NUMBA else "numba"


# ---------------------------------------------------------------------------
# numpy implementations (always available; BLAS-backed)
# ---------------------------------------------------------------------------

def _srop_quadforms_np(A, H):
    # y_m = alpha_m^* H alpha_m, complex result (caller validates residue)
    return ((A.conj() @ H) * A).sum(axis=1)


def _srop_accumulate_np(A, y):
    # sum_m y_m alpha_m alpha_m^*  ->  out[j, k] = sum_m y_m A[m, j] conj(A[m, k])
    return (A.T * y) @ A.conj()


def _speckle_field_np(bx, by, alpha, n):
    xt = np.arange(n) - n // 2
    ex = np.exp((2j * np.pi / n) * np.outer(xt, bx))   # (n, Q)
    ey = np.exp((2j * np.pi / n) * np.outer(xt, by))
    return (ex * alpha) @ ey.T


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if not _NO_NUMBA:

    @njit(cache=True, parallel=True)
    def _srop_quadforms_nb(A, H):
        M, Q = A.shape
        out = np.empty(M, dtype=np.complex128)
        for m in prange(M):
            acc = 0.0 + 0.0j
            for j in range(Q):
                row = 0.0 + 0.0j
                for k in range(Q):
                    row += H[j, k] * A[m, k]
                acc += np.conj(A[m, j]) * row
            out[m] = acc
        return out

    @njit(cache=True, parallel=True)
    def _srop_accumulate_nb(A, y):
        M, Q = A.shape
        out = np.zeros((Q, Q), dtype=np.complex128)
        for j in prange(Q):
            for m in range(M):
                c = y[m] * A[m, j]
                for k in range(Q):
                    out[j, k] += c * np.conj(A[m, k])
        return out

    @njit(cache=True, parallel=True)
    def _speckle_field_nb(bx, by, alpha, n):
        Q = bx.shape[0]
        out = np.empty((n, n), dtype=np.complex128)
        c = 2.0 * np.pi / n
        half = n // 2
        for a in prange(n):
            xa = a - half
            for b in range(n):
                yb = b - half
                acc = 0.0 + 0.0j
                for q in range(Q):
                    ph = c * (bx[q] * xa + by[q] * yb)
                    acc += alpha[q] * complex(np.cos(ph), np.sin(ph))
                out[a, b] = acc
        return out


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------

def srop_quadforms(A, H):
    """Quadratic forms alpha_m^* H alpha_m for all sketch rows of A."""
    A = np.ascontiguousarray(A, dtype=np.complex128)
    H = np.ascontiguousarray(H, dtype=np.complex128)
    if _NO_NUMBA:
        return _srop_quadforms_np(A, H)
    return _srop_quadforms_nb(A, H)


def srop_accumulate(A, y):
    """Weighted rank-one accumulation sum_m y_m alpha_m alpha_m^*."""
    A = np.ascontiguousarray(A, dtype=np.complex128)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if _NO_NUMBA:
        return _srop_accumulate_np(A, y)
    return _srop_accumulate_nb(A, y)


def speckle_field(bx, by, alpha, n):
    """Coherent field sum_q alpha_q exp(2i pi (bx_q*x + by_q*y)/n) on the raster."""
    bx = np.ascontiguousarray(bx, dtype=np.float64)
    by = np.ascontiguousarray(by, dtype=np.float64)
    alpha = np.ascontiguousarray(alpha, dtype=np.complex128)
    if _NO_NUMBA:
        return _speckle_field_np(bx, by, alpha, n)
    return _speckle_field_nb(bx, by, alpha, int(n))
