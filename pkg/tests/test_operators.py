import numpy as np
import pytest

from mcfspi.experiments import (
    DEFAULT_DISTANCE,
    DEFAULT_WAVELENGTH,
    build_layout,
    grid_for_layout,
)
from mcfspi.geometry import (
    compute_visibilities,
    core_bins,
    grid_for_unit_pitch,
    integer_grid_layout,
)
from mcfspi.operators import (
    CirculantMatrix,
    SensingVariant,
    SketchDistribution,
    SketchSet,
    circulant_embed,
    deterministic_probe_set,
    interf_adjoint,
    interf_forward,
    make_sensing_op,
    make_sketches,
    materialize_sensing_matrix,
    recover_from_deterministic,
    srop_adjoint,
    srop_apply,
)

from conftest import random_layout


@pytest.fixture
def vis12(small_layout, small_grid):
    return compute_visibilities(small_layout, small_grid)


def dft_oracle(f, vis):
    """Brute-force double-loop DFT at the gridded visibility bins."""
    n = f.shape[0]
    xt = np.arange(n) - n // 2
    Q = vis.Q
    H = np.zeros((Q, Q), dtype=np.complex128)
    for j in range(Q):
        for k in range(Q):
            bx, by = vis.gridded[j, k]
            ph = np.exp(-2j * np.pi / n * (bx * xt[:, None] + by * xt[None, :]))
            H[j, k] = (f * ph).sum()
    return H


def steering_vectors(vis):
    """u(x)_q = exp(-2i pi d_q . x / n) for every raster point x."""
    n = vis.n
    xt = np.arange(n) - n // 2
    d = vis.core_bins
    ex = np.exp(-2j * np.pi / n * np.outer(d[:, 0], xt))
    ey = np.exp(-2j * np.pi / n * np.outer(d[:, 1], xt))
    return ex, ey


# ---------------------------------------------------------------------------
# interf_forward
# ---------------------------------------------------------------------------

def test_forward_matches_dft_oracle(vis12):
    rng = np.random.default_rng(0)
    f = rng.random((16, 16))
    H = interf_forward(f, vis12)
    ref = dft_oracle(f, vis12)
    assert np.abs(H - ref).max() <= 1e-12 * np.abs(ref).max()


def test_forward_center_spike_gives_all_ones(vis12):
    f = np.zeros((16, 16))
    f[8, 8] = 1.0  # raster origin
    H = interf_forward(f, vis12)
    assert np.allclose(H, np.ones((12, 12)), atol=1e-14)
    s = np.linalg.svd(H, compute_uv=False)
    assert s[1] <= 1e-12 * s[0]


def test_forward_steering_decomposition(vis12):
    # K on-grid spikes: H = sum_i rho_i u(x_i) u(x_i)^*
    rng = np.random.default_rng(1)
    n, Q = 16, 12
    ex, ey = steering_vectors(vis12)
    f = np.zeros((n, n))
    ref = np.zeros((Q, Q), dtype=np.complex128)
    for _ in range(3):
        a, b = rng.integers(0, n, size=2)
        rho = rng.uniform(0.5, 1.5)
        f[a, b] += rho
        u = ex[:, a] * ey[:, b]
        ref += rho * np.outer(u, u.conj())
    H = interf_forward(f, vis12)
    assert np.abs(H - ref).max() <= 1e-12 * np.abs(ref).max()


def test_forward_exactly_hermitian_and_dc_diag(vis12):
    rng = np.random.default_rng(2)
    f = rng.normal(size=(16, 16))
    H = interf_forward(f, vis12)
    assert np.abs(H - H.conj().T).max() == 0.0
    assert np.allclose(np.diag(H), f.sum())


def test_forward_linearity(vis12):
    rng = np.random.default_rng(3)
    f, g = rng.normal(size=(2, 16, 16))
    a, b = 1.7, -0.3
    lhs = interf_forward(a * f + b * g, vis12)
    rhs = a * interf_forward(f, vis12) + b * interf_forward(g, vis12)
    assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()


def test_forward_psd_for_nonnegative_images(vis12):
    rng = np.random.default_rng(4)
    for _ in range(5):
        f = rng.random((16, 16))
        H = interf_forward(f, vis12)
        w = np.linalg.eigvalsh(H)
        assert w.min() >= -1e-10 * np.abs(H).max()


@pytest.mark.parametrize("K", [1, 2, 3, 5])
def test_rank_K_structure(K):
    layout = build_layout("fermat", 20)
    grid = grid_for_layout(layout, 16)
    vis = compute_visibilities(layout, grid)
    rng = np.random.default_rng(K)
    f = np.zeros((16, 16))
    support = rng.choice(16 * 16, size=K, replace=False)
    f.ravel()[support] = rng.uniform(0.5, 1.5, size=K)
    s = np.linalg.svd(interf_forward(f, vis), compute_uv=False)
    assert s[K] <= 1e-8 * s[0]


def test_forward_shape_and_finite_errors(vis12):
    with pytest.raises(ValueError):
        interf_forward(np.zeros((8, 8)), vis12)
    bad = np.zeros((16, 16))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        interf_forward(bad, vis12)


# ---------------------------------------------------------------------------
# interf_adjoint
# ---------------------------------------------------------------------------

def test_adjoint_zero(vis12):
    assert np.array_equal(interf_adjoint(np.zeros((12, 12)), vis12),
                          np.zeros((16, 16)))


def test_adjoint_identity_interf(vis12):
    rng = np.random.default_rng(5)
    for _ in range(100):
        f = rng.normal(size=(16, 16))
        Z = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
        Z = 0.5 * (Z + Z.conj().T)
        lhs = float(np.real(np.vdot(Z, interf_forward(f, vis12))))
        g = interf_adjoint(Z, vis12)
        rhs = float((g * f).sum())
        denom = np.linalg.norm(interf_forward(f, vis12)) * np.linalg.norm(Z)
        assert abs(lhs - rhs) <= 1e-10 * max(denom, 1.0)


def test_adjoint_all_ones_matches_scatter_oracle(vis12):
    # brute-force scatter + inverse DFT oracle
    n, Q = 16, 12
    H = np.ones((Q, Q), dtype=np.complex128)
    G = np.zeros((n, n), dtype=np.complex128)
    iu, iv = vis12.gather_indices()
    for j in range(Q):
        for k in range(Q):
            G[iu[j, k], iv[j, k]] += H[j, k]
    ref = np.fft.fftshift(np.fft.ifft2(G).real * n * n)
    out = interf_adjoint(H, vis12)
    assert np.allclose(out, ref, atol=1e-10 * np.abs(ref).max())
    # Dirichlet-type kernel peaks at the raster origin
    assert np.unravel_index(np.argmax(out), out.shape) == (8, 8)


def test_adjoint_rejects_non_hermitian(vis12):
    H = np.zeros((12, 12), dtype=np.complex128)
    H[0, 1] = 1.0
    with pytest.raises(ValueError, match="Hermitian"):
        interf_adjoint(H, vis12)


# ---------------------------------------------------------------------------
# srop
# ---------------------------------------------------------------------------

def test_srop_identity_matrix():
    sk = make_sketches(8, 5, "gaussian", seed=0)
    y = srop_apply(np.eye(5, dtype=np.complex128), sk)
    assert np.allclose(y, (np.abs(sk.vectors) ** 2).sum(axis=1))


def test_srop_basis_probe_reads_diagonal():
    rng = np.random.default_rng(6)
    H = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    H = H + H.conj().T
    sk = SketchSet(np.eye(4, dtype=np.complex128), SketchDistribution.DETERMINISTIC)
    assert np.allclose(srop_apply(H, sk), np.diag(H).real)


def test_srop_small_quadratic_form():
    H = np.array([[1.0, 1j], [-1j, 1.0]])
    sk = SketchSet(np.array([[1.0 + 0j, 1.0 + 0j]]), SketchDistribution.DETERMINISTIC)
    assert np.allclose(srop_apply(H, sk), [2.0])


def test_srop_adjoint_rank_one():
    sk = SketchSet(np.array([[1.0 + 0j, 0.0, 0.0]]), SketchDistribution.DETERMINISTIC)
    H = srop_adjoint(np.array([1.0]), sk)
    expect = np.zeros((3, 3))
    expect[0, 0] = 1.0
    assert np.allclose(H, expect)


def test_srop_adjoint_identity():
    rng = np.random.default_rng(7)
    sk = make_sketches(25, 9, "gaussian", seed=1)
    for _ in range(100):
        H = rng.normal(size=(9, 9)) + 1j * rng.normal(size=(9, 9))
        H = H + H.conj().T
        y = rng.normal(size=25)
        lhs = float(np.dot(srop_apply(H, sk), y))
        rhs = float(np.real(np.vdot(srop_adjoint(y, sk), H)))
        denom = np.linalg.norm(srop_apply(H, sk)) * np.linalg.norm(y)
        assert abs(lhs - rhs) <= 1e-10 * max(denom, 1.0)


def test_srop_rejects_mismatched_and_non_hermitian():
    sk = make_sketches(4, 3, "gaussian")
    with pytest.raises(ValueError):
        srop_apply(np.eye(5, dtype=np.complex128), sk)
    bad = np.zeros((3, 3), dtype=np.complex128)
    bad[0, 1] = 5.0
    with pytest.raises(ValueError, match="Hermitian"):
        srop_apply(bad, sk)
    with pytest.raises(ValueError):
        srop_adjoint(np.zeros(5), sk)


# ---------------------------------------------------------------------------
# sketches
# ---------------------------------------------------------------------------

def test_sketches_reproducible():
    a = make_sketches(10, 6, "gaussian", seed=42)
    b = make_sketches(10, 6, "gaussian", seed=42)
    assert np.array_equal(a.vectors, b.vectors)
    c = make_sketches(10, 6, "gaussian", seed=43)
    assert not np.array_equal(a.vectors, c.vectors)


def test_sketch_normalization_clt():
    sk = make_sketches(10_000, 8, "gaussian", seed=0)
    norms = (np.abs(sk.vectors) ** 2).sum(axis=1)
    assert abs(norms.mean() - 8) <= 0.3 * np.sqrt(8)


def test_deterministic_distribution_delegates():
    sk = make_sketches(9, 3, "deterministic")
    assert np.array_equal(sk.vectors, deterministic_probe_set(3).vectors)
    with pytest.raises(ValueError):
        make_sketches(8, 3, "deterministic")


def test_steering_sketches_are_unit_modulus(small_layout, small_grid):
    vis = compute_visibilities(small_layout, small_grid)
    sk = make_sketches(20, 12, "steering", seed=0, visibilities=vis)
    assert np.allclose(np.abs(sk.vectors), 1 / np.sqrt(12))
    with pytest.raises(ValueError):
        make_sketches(20, 12, "steering", seed=0)


def test_unknown_distribution_rejected():
    with pytest.raises(ValueError):
        make_sketches(5, 3, "bogus")


# ---------------------------------------------------------------------------
# deterministic polarization probes
# ---------------------------------------------------------------------------

def test_probe_set_q1():
    sk = deterministic_probe_set(1)
    assert sk.M == 1
    H = np.array([[3.5 + 0j]])
    y = srop_apply(H, sk)
    assert np.allclose(recover_from_deterministic(y, 1), H)


@pytest.mark.parametrize("Q", [2, 10])
def test_probe_round_trip(Q):
    rng = np.random.default_rng(Q)
    A = rng.normal(size=(Q, Q)) + 1j * rng.normal(size=(Q, Q))
    H = A @ A.conj().T  # random PSD Hermitian
    sk = deterministic_probe_set(Q)
    y = srop_apply(H, sk)
    rec = recover_from_deterministic(y, Q)
    assert np.abs(rec - H).max() <= 1e-12 * np.abs(H).max()


# ---------------------------------------------------------------------------
# circulant
# ---------------------------------------------------------------------------

def test_circulant_delta_is_identity():
    v = np.zeros(16)
    v[0] = 1.0
    C = circulant_embed(v)
    x = np.random.default_rng(0).normal(size=16)
    assert np.allclose(C.matvec(x).real, x)


def test_circulant_all_ones():
    C = circulant_embed(np.ones(16))
    x = np.random.default_rng(1).normal(size=16)
    assert np.allclose(C.matvec(x).real, x.sum())


def test_circulant_matches_materialized():
    rng = np.random.default_rng(2)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    # N must be a perfect square for the 2-D embedding
    with pytest.raises(ValueError):
        circulant_embed(v)
    v = rng.normal(size=9) + 1j * rng.normal(size=9)
    C = circulant_embed(v)
    M = C.materialize()
    x = rng.normal(size=9)
    assert np.abs(C.matvec(x) - M @ x).max() <= 1e-12 * np.abs(M @ x).max()


def test_circulant_matrix_validation():
    with pytest.raises(ValueError):
        CirculantMatrix(np.zeros((2, 3)))


def test_circulant_variant_matches_general():
    layout = integer_grid_layout(3, 1e-5, DEFAULT_WAVELENGTH, DEFAULT_DISTANCE)
    grid = grid_for_unit_pitch(layout, 16)
    rng = np.random.default_rng(3)
    opg = make_sensing_op(layout, grid, M=20, seed=5)
    opc = make_sensing_op(layout, grid, M=20, seed=5,
                          variant=SensingVariant.CIRCULANT)
    for _ in range(20):
        f = rng.random((16, 16))
        yg, yc = opg.apply(f), opc.apply(f)
        assert np.abs(yg - yc).max() <= 1e-12 * np.abs(yg).max()


def test_circulant_adjoint_identity():
    layout = integer_grid_layout(3, 1e-5, DEFAULT_WAVELENGTH, DEFAULT_DISTANCE)
    grid = grid_for_unit_pitch(layout, 16)
    op = make_sensing_op(layout, grid, M=15, seed=0,
                         variant=SensingVariant.CIRCULANT)
    rng = np.random.default_rng(4)
    for _ in range(100):
        f = rng.normal(size=(16, 16))
        y = rng.normal(size=15)
        lhs = float(np.dot(op.apply(f), y))
        rhs = float((op.adjoint(y) * f).sum())
        denom = np.linalg.norm(op.apply(f)) * np.linalg.norm(y)
        assert abs(lhs - rhs) <= 1e-10 * max(denom, 1.0)


# ---------------------------------------------------------------------------
# composed sensing map
# ---------------------------------------------------------------------------

def test_sensing_zero_image(small_layout, small_grid):
    op = make_sensing_op(small_layout, small_grid, M=10, seed=0)
    assert np.allclose(op.apply(np.zeros((16, 16))), 0.0)


def test_sensing_dc_spike_basis_sketch(small_layout, small_grid):
    vis = compute_visibilities(small_layout, small_grid)
    e1 = np.zeros((1, 12), dtype=np.complex128)
    e1[0, 0] = 1.0
    sk = SketchSet(e1, SketchDistribution.DETERMINISTIC)
    op = make_sensing_op(small_layout, small_grid, sketches=sk)
    f = np.zeros((16, 16))
    f[8, 8] = 1.0
    assert np.allclose(op.apply(f), [1.0])
    assert vis.multiplicity[(0, 0)] == 12


def test_sensing_matches_materialized_matrix():
    rng = np.random.default_rng(8)
    layout = random_layout(rng, 4)
    grid = grid_for_layout(layout, 8)
    op = make_sensing_op(layout, grid, M=6, seed=2)
    B = materialize_sensing_matrix(op)
    f = rng.normal(size=(8, 8))
    y = op.apply(f)
    assert np.abs(B @ f.ravel() - y).max() <= 1e-12 * np.abs(y).max()


def test_sensing_adjoint_identity(small_layout, small_grid):
    op = make_sensing_op(small_layout, small_grid, M=30, seed=3)
    rng = np.random.default_rng(9)
    for _ in range(100):
        f = rng.normal(size=(16, 16))
        y = rng.normal(size=30)
        lhs = float(np.dot(op.apply(f), y))
        rhs = float((op.adjoint(y) * f).sum())
        denom = np.linalg.norm(op.apply(f)) * np.linalg.norm(y)
        assert abs(lhs - rhs) <= 1e-10 * max(denom, 1.0)


def test_opnorm_bounds_operator(small_layout, small_grid):
    op = make_sensing_op(small_layout, small_grid, M=20, seed=0)
    L = op.opnorm()
    rng = np.random.default_rng(10)
    for _ in range(10):
        f = rng.normal(size=(16, 16))
        assert np.linalg.norm(op.apply(f)) <= L * np.linalg.norm(f) * (1 + 1e-6)


def test_sensing_op_requires_matching_q(small_layout, small_grid):
    sk = make_sketches(5, 7, "gaussian")
    with pytest.raises(ValueError):
        make_sensing_op(small_layout, small_grid, sketches=sk)
    with pytest.raises(ValueError):
        make_sensing_op(small_layout, small_grid)  # neither sketches nor M


def test_core_bins_relative_to_first(small_layout, small_grid):
    d = core_bins(small_layout, small_grid)
    assert tuple(d[0]) == (0, 0)
