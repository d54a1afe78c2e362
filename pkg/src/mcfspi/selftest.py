"""Fast built-in consistency checks, exposed as ``mcfspi selftest``.

Each check exercises one identity the sensing chain must satisfy exactly
(up to floating-point round-off): DFT oracle agreement, adjoint pairings,
the physics/operator modeling identity, circulant agreement, and the
deterministic-probe round trip.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .experiments import build_layout, grid_for_layout
from .geometry import compute_visibilities, grid_for_unit_pitch, integer_grid_layout
from .operators import (
    interf_adjoint,
    interf_forward,
    make_sensing_op,
    make_sketches,
    materialize_sensing_matrix,
    recover_from_deterministic,
    srop_adjoint,
    srop_apply,
)
from .physics import measure


def _dft_oracle(f, vis):
    n = f.shape[0]
    xt = np.arange(n) - n // 2
    Q = vis.gridded.shape[0]
    H = np.zeros((Q, Q), dtype=np.complex128)
    for j in range(Q):
        for k in range(Q):
            bx, by = vis.gridded[j, k]
            ph = np.exp(-2j * np.pi / n * (bx * xt[:, None] + by * xt[None, :]))
            H[j, k] = (f * ph).sum()
    return H


def run(verbose=True, seed=0):
    """Run all checks; return the number of failures."""
    rng = np.random.default_rng(seed)
    failures = 0

    def check(name, value, tol):
        nonlocal failures
        ok = value <= tol
        if not ok:
            failures += 1
        if verbose:
            print(f"  [{'ok' if ok else 'FAIL'}] {name}: {value:.3e} (tol {tol:.0e})")
        return ok

    layout = build_layout("fermat", 12)
    grid = grid_for_layout(layout, 16)
    vis = compute_visibilities(layout, grid)
    f = rng.random((16, 16))

    if verbose:
        print(f"kernel backend: {_kernels.backend()}")

    H = interf_forward(f, vis)
    check("interferometric forward vs direct DFT",
          np.abs(H - _dft_oracle(f, vis)).max() / np.abs(H).max(), 1e-12)
    check("Hermitian symmetry", np.abs(H - H.conj().T).max(), 0.0)

    g = rng.normal(size=(16, 16))
    Z = rng.normal(size=(12, 12)) + 1j * rng.normal(size=(12, 12))
    Z = 0.5 * (Z + Z.conj().T)
    lhs = float(np.real(np.vdot(Z, interf_forward(g, vis))))
    rhs = float(np.vdot(interf_adjoint(Z, vis), g).real)
    check("interferometric adjoint pairing", abs(lhs - rhs) / max(abs(lhs), 1.0), 1e-12)

    sk = make_sketches(20, 12, "gaussian", seed=seed)
    y = srop_apply(H, sk)
    w = rng.normal(size=20)
    lhs = float(np.dot(y, w))
    rhs = float(np.real(np.vdot(srop_adjoint(w, sk), H)))
    check("rank-one-projection adjoint pairing", abs(lhs - rhs) / max(abs(lhs), 1.0), 1e-12)

    op = make_sensing_op(layout, grid, M=20, seed=seed)
    alpha = sk.vectors[3]
    direct = measure(f, alpha, layout, grid)
    Hw = interf_forward(grid.vignette() * f, vis)
    via_op = float(np.real(np.vdot(alpha, Hw @ alpha)))
    check("physics/operator modeling identity",
          abs(direct - via_op) / max(abs(direct), 1.0), 1e-10)

    glay = integer_grid_layout(3, 1e-4, layout.wavelength,
                               layout.propagation_distance)
    ggrid = grid_for_unit_pitch(glay, 16)
    opg = make_sensing_op(glay, ggrid, M=15, seed=seed)
    opc = make_sensing_op(glay, ggrid, M=15, seed=seed, variant="circulant")
    fg = rng.random((16, 16))
    check("general vs circulant forward",
          np.abs(opg.apply(fg) - opc.apply(fg)).max() / np.abs(opg.apply(fg)).max(),
          1e-12)

    ydet = srop_apply(H, make_sketches(144, 12, "deterministic", seed=seed))
    Hrec = recover_from_deterministic(ydet, 12)
    check("deterministic-probe round trip",
          np.abs(Hrec - H).max() / np.abs(H).max(), 1e-12)

    A = materialize_sensing_matrix(op)
    yA = A @ f.ravel()
    check("materialized matrix agreement",
          np.abs(yA - op.apply(f)).max() / np.abs(yA).max(), 1e-12)

    if verbose:
        print("selftest:", "all checks passed" if failures == 0
              else f"{failures} check(s) FAILED")
    return failures
