"""Linear-algebraic sensing chain.

The composed map takes a real n x n image f to M real measurements:
an FFT restricted to the gridded visibility set gives the Q x Q Hermitian
interferometric matrix, and M symmetric rank-one projections (quadratic
forms with complex sketching vectors) give the measurement vector.

Adjoints are with respect to the real inner products: the plain dot product
on images and measurements, and Re trace(H1^* H2) on matrices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import VisibilitySet, compute_visibilities

HERMITIAN_RTOL = 1e-10


class SketchDistribution(enum.Enum):
    COMPLEX_GAUSSIAN = "gaussian"
    STEERING = "steering"
    DETERMINISTIC = "deterministic"


class SensingVariant(enum.Enum):
    GENERAL = "general"        # sketches act on the Q x Q gridded matrix
    CIRCULANT = "circulant"    # integer cores; full-lattice circulant structure


@dataclass(frozen=True)
class SketchSet:
    """M complex sketching vectors of length Q plus generation metadata."""

    vectors: np.ndarray                  # (M, Q) complex
    distribution: SketchDistribution
    seed: int = 0

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.complex128)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("vectors must be a nonempty (M, Q) array")
        if not np.isfinite(v).all():
            raise ValueError("sketch vectors must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def M(self):
        return self.vectors.shape[0]

    @property
    def Q(self):
        return self.vectors.shape[1]


def deterministic_probe_set(Q):
    """Q^2 deterministic probes that identify any Hermitian Q x Q matrix.

    Probes: the Q canonical vectors e_j, then e_j + e_k and e_j + i e_k for
    j < k.  See recover_from_deterministic for the polarization inversion.
    """
    if Q < 1:
        raise ValueError("Q must be at least 1")
    probes = list(np.eye(Q, dtype=np.complex128))
    for j in range(Q):
        for k in range(j + 1, Q):
            v = np.zeros(Q, dtype=np.complex128)
            v[j], v[k] = 1.0, 1.0
            probes.append(v)
            v = np.zeros(Q, dtype=np.complex128)
            v[j], v[k] = 1.0, 1.0j
            probes.append(v)
    return SketchSet(np.array(probes), SketchDistribution.DETERMINISTIC)


def recover_from_deterministic(y, Q):
    """Invert the deterministic probe measurements back to the Hermitian matrix."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (Q * Q,):
        raise ValueError(f"expected {Q * Q} measurements, got {y.shape}")
    H = np.zeros((Q, Q), dtype=np.complex128)
    diag = y[:Q]
    H[np.diag_indices(Q)] = diag
    pos = Q
    for j in range(Q):
        for k in range(j + 1, Q):
            re = 0.5 * (y[pos] - diag[j] - diag[k])
            # (e_j + i e_k)^* H (e_j + i e_k) = H_jj + H_kk - 2 Im H_jk
            im = 0.5 * (diag[j] + diag[k] - y[pos + 1])
            H[j, k] = re + 1j * im
            H[k, j] = re - 1j * im
            pos += 2
    return H


def make_sketches(M, Q, distribution, seed=0, visibilities=None):
    """Build a reproducible sketch set.

    ComplexGaussian entries are i.i.d. with E|alpha|^2 = 1 (variance 1/2 per
    real component).  Steering sketches are focused-beam vectors at uniformly
    random raster positions and need the layout's visibilities.  Deterministic
    requires M = Q^2 and delegates to deterministic_probe_set.
    """
    if M < 1 or Q < 1:
        raise ValueError("M and Q must be at least 1")
    distribution = SketchDistribution(distribution)
    if distribution is SketchDistribution.COMPLEX_GAUSSIAN:
        rng = np.random.default_rng(seed)
        v = rng.normal(scale=np.sqrt(0.5), size=(M, Q, 2))
        return SketchSet(v[..., 0] + 1j * v[..., 1], distribution, seed)
    if distribution is SketchDistribution.STEERING:
        if visibilities is None:
            raise ValueError("steering sketches need the layout visibilities")
        rng = np.random.default_rng(seed)
        n = visibilities.n
        d = visibilities.core_bins
        targets = rng.integers(-(n // 2), n - n // 2, size=(M, 2))
        phase = -2j * np.pi / n * (targets @ d.T)
        return SketchSet(np.exp(phase) / np.sqrt(Q), distribution, seed)
    if distribution is SketchDistribution.DETERMINISTIC:
        if M != Q * Q:
            raise ValueError("deterministic sketches require M = Q^2")
        probes = deterministic_probe_set(Q)
        return SketchSet(probes.vectors, distribution, seed)
    raise ValueError(f"unknown sketch distribution: {distribution}")


def _check_hermitian(H, what="matrix"):
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"{what} must be square")
    scale = np.linalg.norm(H)
    if scale > 0 and np.linalg.norm(H - H.conj().T) > HERMITIAN_RTOL * scale:
        raise ValueError(f"{what} is not Hermitian within tolerance")
    return H


def interf_forward(f, visibilities, grid=None):
    """Interferometric matrix of a real image: FFT then gather at gridded bins.

    The upper triangle is gathered and mirrored so the result is exactly
    Hermitian; the diagonal equals sum(f) for every core.
    """
    f = np.asarray(f, dtype=np.float64)
    n = visibilities.n
    if f.shape != (n, n):
        raise ValueError(f"image shape {f.shape} does not match grid side {n}")
    if not np.isfinite(f).all():
        raise ValueError("image must be finite")
    fhat = np.fft.fft2(np.fft.ifftshift(f))
    iu, iv = visibilities.gather_indices()
    H = fhat[iu, iv]
    # exact Hermitian symmetry by construction
    upper = np.triu(H, 1)
    H = upper + upper.conj().T
    H[np.diag_indices_from(H)] = fhat[0, 0].real
    return H


def interf_adjoint(H, visibilities, grid=None):
    """Adjoint of interf_forward: scatter-add onto DFT bins, inverse FFT, real part."""
    n = visibilities.n
    H = _check_hermitian(H, "interferometric matrix")
    if H.shape[0] != visibilities.Q:
        raise ValueError("matrix size does not match the layout")
    iu, iv = visibilities.gather_indices()
    G = np.zeros((n, n), dtype=np.complex128)
    np.add.at(G, (iu.ravel(), iv.ravel()), H.ravel())
    img = np.fft.ifft2(G).real * (n * n)
    return np.fft.fftshift(img)


def srop_apply(H, sketches, check=True):
    """Symmetric rank-one projections y_m = alpha_m^* H alpha_m, as real numbers."""
    H = np.asarray(H, dtype=np.complex128)
    A = sketches.vectors
    if H.shape != (A.shape[1], A.shape[1]):
        raise ValueError("matrix and sketch dimensions do not match")
    if check:
        _check_hermitian(H)
    y = _kernels.srop_quadforms(A, H)
    if check:
        scale = np.linalg.norm(H) * max(
            1.0, float((np.abs(A) ** 2).sum(axis=1).max())
        )
        if scale > 0 and np.abs(y.imag).max() > 1e-10 * scale:
            raise ValueError("quadratic forms have non-negligible imaginary part")
    return y.real.copy()


def srop_adjoint(y, sketches):
    """Adjoint of srop_apply: sum_m y_m alpha_m alpha_m^*, exactly Hermitian."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (sketches.M,):
        raise ValueError("measurement length does not match sketch count")
    if not np.isfinite(y).all():
        raise ValueError("measurements must be finite")
    H = _kernels.srop_accumulate(sketches.vectors, y)
    return 0.5 * (H + H.conj().T)


class CirculantMatrix:
    """Implicit circulant operator generated by an n x n spectrum array.

    C[j, k] = gen[(j - k) mod n] with 2-D multi-indices; matrix-vector
    products run in O(N log N) via FFT and the matrix is never materialized.
    """

    def __init__(self, gen):
        gen = np.asarray(gen, dtype=np.complex128)
        if gen.ndim != 2 or gen.shape[0] != gen.shape[1]:
            raise ValueError("generator must be a square array")
        self.n = gen.shape[0]
        self.gen = gen
        self._gen_fft = np.fft.fft2(gen)

    @property
    def N(self):
        return self.n * self.n

    def matvec(self, x):
        """C @ x for x given as an (n, n) array or flat N-vector."""
        flat = np.ndim(x) == 1
        x = np.asarray(x, dtype=np.complex128).reshape(self.n, self.n)
        out = np.fft.ifft2(self._gen_fft * np.fft.fft2(x))
        return out.ravel() if flat else out

    def materialize(self):
        """Dense N x N matrix; only sensible for small n (tests)."""
        n, N = self.n, self.N
        C = np.empty((N, N), dtype=np.complex128)
        idx = np.arange(n)
        ju, ku = np.meshgrid(idx, idx, indexing="ij")
        for a in range(n):
            for b in range(n):
                row = a * n + b
                C[row] = self.gen[(a - ju) % n, (b - ku) % n].ravel()
        return C


def circulant_embed(v):
    """Circulant operator handle from a flat length-N spectrum vector."""
    v = np.asarray(v, dtype=np.complex128).ravel()
    n = int(round(np.sqrt(v.size)))
    if n * n != v.size:
        raise ValueError("spectrum length must be a perfect square")
    return CirculantMatrix(v.reshape(n, n))


@dataclass
class SensingOp:
    """Composed sensing map from images to M real SROP measurements."""

    layout: "CoreLayout"
    grid: "ImageGrid"
    visibilities: VisibilitySet
    sketches: SketchSet
    variant: SensingVariant = SensingVariant.GENERAL
    _opnorm: float = field(default=None, repr=False)
    _corr: np.ndarray = field(default=None, repr=False)  # circulant sketch autocorrelations

    def __post_init__(self):
        if self.sketches.Q != self.layout.Q:
            raise ValueError("sketch dimension must equal the core count")
        if self.variant is SensingVariant.CIRCULANT:
            self._prepare_circulant()

    # -- circulant machinery ------------------------------------------------
    def _prepare_circulant(self):
        n = self.grid.n
        d = self.visibilities.core_bins % n
        lattice = d[:, 0] * n + d[:, 1]
        if len(set(lattice.tolist())) != self.layout.Q:
            raise ValueError("circulant variant needs cores on distinct lattice sites")
        A = self.sketches.vectors
        corr = np.empty((A.shape[0], n, n), dtype=np.complex128)
        emb = np.zeros((n, n), dtype=np.complex128)
        for m in range(A.shape[0]):
            emb[:] = 0.0
            emb[d[:, 0], d[:, 1]] = A[m]
            beta = np.fft.fft2(emb)
            # r_m[u] = sum_k conj(alpha[k+u]) alpha[k]
            corr[m] = np.conj(np.fft.ifft2(np.abs(beta) ** 2))
        self._corr = corr

    def _apply_circulant(self, f):
        n = self.grid.n
        fhat = np.fft.fft2(np.fft.ifftshift(np.asarray(f, dtype=np.float64)))
        return np.einsum("ij,mij->m", fhat, self._corr).real.copy()

    def _adjoint_circulant(self, y):
        n = self.grid.n
        R = np.tensordot(np.asarray(y, dtype=np.float64), self._corr, axes=(0, 0))
        return np.fft.fftshift(np.fft.fft2(R).real)

    # -- public interface ---------------------------------------------------
    @property
    def M(self):
        return self.sketches.M

    def apply(self, f):
        if self.variant is SensingVariant.CIRCULANT:
            return self._apply_circulant(f)
        H = interf_forward(f, self.visibilities)
        return srop_apply(H, self.sketches, check=False)

    def adjoint(self, y):
        if self.variant is SensingVariant.CIRCULANT:
            return self._adjoint_circulant(y)
        H = srop_adjoint(y, self.sketches)
        return interf_adjoint(H, self.visibilities)

    def opnorm(self, iters=100, seed=0):
        """Power-method estimate of the operator norm, cached."""
        if self._opnorm is None:
            rng = np.random.default_rng(seed)
            n = self.grid.n
            x = rng.normal(size=(n, n))
            x /= np.linalg.norm(x)
            norm = 0.0
            for _ in range(iters):
                x = self.adjoint(self.apply(x))
                norm = np.linalg.norm(x)
                if norm == 0:
                    break
                x /= norm
            self._opnorm = float(np.sqrt(norm))
        return self._opnorm


def make_sensing_op(layout, grid, sketches=None, M=None, distribution="gaussian",
                    seed=0, variant=SensingVariant.GENERAL):
    """Convenience constructor wiring visibilities and sketches together."""
    variant = SensingVariant(variant)
    vis = compute_visibilities(layout, grid,
                               wrap=variant is SensingVariant.CIRCULANT)
    if sketches is None:
        if M is None:
            raise ValueError("either sketches or M must be given")
        sketches = make_sketches(M, layout.Q, distribution, seed, visibilities=vis)
    return SensingOp(layout, grid, vis, sketches, SensingVariant(variant))


def sensing_apply(f, op):
    """Measurements of an image under a sensing operator."""
    return op.apply(f)


def sensing_adjoint(y, op):
    """Adjoint of sensing_apply."""
    return op.adjoint(y)


def materialize_sensing_matrix(op):
    """Dense M x N matrix of the sensing map, built by probing canonical images."""
    n = op.grid.n
    B = np.empty((op.M, n * n))
    probe = np.zeros((n, n))
    for idx in range(n * n):
        probe.ravel()[idx] = 1.0
        B[:, idx] = op.apply(probe)
        probe.ravel()[idx] = 0.0
    return B
