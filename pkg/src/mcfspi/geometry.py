"""Fiber core layouts, the visibility difference set, and DFT gridding.

Physical conventions: all lengths in meters.  A layout lives on the fiber
facet plane; the image raster lives in the sample plane at distance ``z``.
Frequencies are expressed in DFT-bin units via ``bin = nu * fov / (2*pi)``,
i.e. a core at position p contributes the (dimensionless) frequency
coordinate ``c = p * fov / (lambda * z)``.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

FAR_FIELD_FACTOR = 10.0  # z >= 10 * D^2 / lambda is treated as far field


class LayoutKind(enum.Enum):
    FERMAT_SPIRAL = "fermat"
    INTEGER_GRID = "grid"
    EXPLICIT = "explicit"


class AliasingError(ValueError):
    """A visibility falls outside the representable band of the DFT grid."""

    def __init__(self, pair, bin_pair, n):
        self.pair = pair
        super().__init__(
            f"visibility of core pair {pair} grids to bin {bin_pair}, "
            f"outside |bin| <= {n // 2} for an {n}x{n} grid"
        )


def round_half_away(x):
    """Round to nearest integer, ties away from zero, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class CoreLayout:
    """Q core positions on the fiber facet plus the physical constants."""

    positions: np.ndarray            # (Q, 2), meters
    fiber_diameter: float            # D, meters
    wavelength: float                # lambda, meters
    propagation_distance: float      # z, meters
    layout_kind: LayoutKind = LayoutKind.EXPLICIT

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 2 or pos.shape[0] < 1:
            raise ValueError("positions must be a (Q, 2) array with Q >= 1")
        if not np.isfinite(pos).all():
            raise ValueError("positions must be finite")
        if len({tuple(p) for p in pos}) != len(pos):
            raise ValueError("core positions must be distinct")
        if self.fiber_diameter <= 0:
            raise ValueError("fiber diameter must be positive")
        if self.wavelength <= 0 or self.propagation_distance <= 0:
            raise ValueError("wavelength and propagation distance must be positive")
        radius = np.linalg.norm(pos, axis=1).max()
        if radius > self.fiber_diameter / 2 * (1 + 1e-12):
            raise ValueError("cores must lie within a disk of diameter D")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if not self.far_field_ok:
            warnings.warn(
                f"z = {self.propagation_distance:g} m is below the far-field "
                f"bound {FAR_FIELD_FACTOR:g}*D^2/lambda; the plane-wave model "
                "is inaccurate",
                stacklevel=2,
            )

    @property
    def Q(self):
        return self.positions.shape[0]

    @property
    def far_field_ok(self):
        bound = FAR_FIELD_FACTOR * self.fiber_diameter**2 / self.wavelength
        return self.propagation_distance >= bound

    def translated(self, offset):
        """Same layout with all cores shifted by a 2-vector (meters)."""
        pos = self.positions + np.asarray(offset, dtype=np.float64)
        diameter = max(self.fiber_diameter,
                       2.0 * np.linalg.norm(pos, axis=1).max())
        return CoreLayout(pos, diameter, self.wavelength,
                          self.propagation_distance, LayoutKind.EXPLICIT)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x_m", "y_m"])
            for x, y in self.positions:
                writer.writerow([repr(float(x)), repr(float(y))])

    @classmethod
    def from_csv(cls, path, fiber_diameter, wavelength, propagation_distance):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["x_m", "y_m"]:
                raise ValueError(f"unexpected layout CSV header: {header}")
            for row in reader:
                rows.append((float(row[0]), float(row[1])))
        return cls(
            np.array(rows, dtype=np.float64),
            fiber_diameter,
            wavelength,
            propagation_distance,
            LayoutKind.EXPLICIT,
        )


@dataclass(frozen=True)
class ImageGrid:
    """n x n pixel raster covering a square field of view (meters)."""

    n: int
    fov: float
    vignette_sigma: float = None  # meters; defaults to fov / 4

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid side must be at least 2")
        if self.fov <= 0:
            raise ValueError("field of view must be positive")
        if self.vignette_sigma is None:
            object.__setattr__(self, "vignette_sigma", self.fov / 4.0)
        if self.vignette_sigma <= 0:
            raise ValueError("vignette sigma must be positive")

    @property
    def N(self):
        return self.n * self.n

    @property
    def pixel_size(self):
        return self.fov / self.n

    def pixel_offsets(self):
        """Centered integer pixel offsets; physical x = offset * pixel_size."""
        return np.arange(self.n) - self.n // 2

    def vignette(self):
        """Gaussian envelope w on the raster, w(0) = 1 at the center pixel."""
        x = self.pixel_offsets() * self.pixel_size
        r2 = x[:, None] ** 2 + x[None, :] ** 2
        return np.exp(-r2 / (2.0 * self.vignette_sigma**2))


def fermat_spiral_layout(Q, D, wavelength, propagation_distance):
    """Vogel/Fermat golden-spiral layout with the outermost core at radius D/2."""
    if Q < 1:
        raise ValueError("Q must be at least 1")
    if D <= 0:
        raise ValueError("D must be positive")
    q = np.arange(1, Q + 1, dtype=np.float64)
    radius = np.sqrt(q)
    radius *= (D / 2.0) / radius[-1]
    theta = q * GOLDEN_ANGLE
    pos = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    return CoreLayout(pos, D, wavelength, propagation_distance,
                      LayoutKind.FERMAT_SPIRAL)


def integer_grid_layout(side, pitch, wavelength, propagation_distance):
    """side x side cores at {(a*pitch, b*pitch) : 0 <= a, b < side}."""
    if side < 1:
        raise ValueError("side must be at least 1")
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    a = np.arange(side, dtype=np.float64) * pitch
    gx, gy = np.meshgrid(a, a, indexing="ij")
    pos = np.stack([gx.ravel(), gy.ravel()], axis=1)
    # diagonal of the grid bounds the enclosing disk
    diameter = 2.0 * np.linalg.norm(pos, axis=1).max() if side > 1 else pitch
    return CoreLayout(pos, diameter, wavelength, propagation_distance,
                      LayoutKind.INTEGER_GRID)


def core_frequency_coords(layout, grid):
    """Continuous frequency coordinate of each core, in DFT bins: p*fov/(lambda*z)."""
    scale = grid.fov / (layout.wavelength * layout.propagation_distance)
    return layout.positions * scale


def core_bins(layout, grid):
    """Integer per-core frequency bins, snapped relative to the first core.

    Snapping the cores (rather than each pairwise difference) keeps the
    gridded difference set additive, so the discretized speckle synthesis and
    the interferometric operator agree exactly; every gridded visibility is
    within one bin of the nearest-neighbor choice.
    """
    c = core_frequency_coords(layout, grid)
    return round_half_away(c - c[0])


@dataclass(frozen=True)
class VisibilitySet:
    """All Q^2 difference frequencies of a layout, gridded onto an n x n DFT grid."""

    offgrid: np.ndarray          # (Q, Q, 2) rad/meter, nu_jk = (2pi/lz)(p_j - p_k)
    gridded: np.ndarray          # (Q, Q, 2) signed integer bins
    distinct_count: int
    multiplicity: dict           # (bx, by) -> count over all Q^2 entries
    n: int                       # grid side the bins refer to
    core_bins: np.ndarray = field(repr=False, default=None)  # (Q, 2) ints

    @property
    def Q(self):
        return self.offgrid.shape[0]

    def gather_indices(self):
        """Wrapped (row, col) index arrays into the n x n DFT array."""
        return (self.gridded[..., 0] % self.n, self.gridded[..., 1] % self.n)


def compute_visibilities(layout, grid, wrap=False):
    """Grid the visibility difference set of a layout onto the image DFT lattice.

    Raises AliasingError if any gridded visibility exceeds |bin| = n//2.
    With wrap=True the band check is skipped and bins are reduced modulo n
    into [-n/2, n/2); this is the periodic regime of the circulant variant.
    """
    n = grid.n
    scale = 2.0 * np.pi / (layout.wavelength * layout.propagation_distance)
    pos = layout.positions
    offgrid = scale * (pos[:, None, :] - pos[None, :, :])
    d = core_bins(layout, grid)
    gridded = d[:, None, :] - d[None, :, :]

    if wrap:
        gridded = (gridded + n // 2) % n - n // 2
    else:
        bad = np.abs(gridded).max(axis=2) > n // 2
        if bad.any():
            j, k = np.argwhere(bad)[0]
            raise AliasingError((int(j), int(k)),
                                (int(gridded[j, k, 0]), int(gridded[j, k, 1])), n)

    flat = gridded.reshape(-1, 2)
    counts = Counter(map(tuple, map(lambda r: (int(r[0]), int(r[1])), flat)))
    return VisibilitySet(
        offgrid=offgrid,
        gridded=gridded,
        distinct_count=len(counts),
        multiplicity=dict(counts),
        n=n,
        core_bins=d,
    )


def default_geometry_grid(layout, margin=2.0):
    """Default grid fine enough for the layout's visibility set.

    Chooses the smallest power-of-two side with n >= 2 * margin * Q^2 (enough
    lattice sites that a golden-spiral difference set stays collision-free, as
    verified numerically for Q up to 110), and a field of view placing the
    outermost core frequency at n / (2 * margin) bins.
    """
    if margin < 1.0:
        raise ValueError("margin must be at least 1")
    Q = layout.Q
    n = max(4, 2 ** math.ceil(math.log2(max(margin * Q * Q, 4.0))))
    r_max = np.linalg.norm(layout.positions, axis=1).max()
    if r_max == 0:
        return ImageGrid(n=n, fov=1.0)
    fov = (n / (2.0 * margin)) * layout.wavelength * layout.propagation_distance / r_max
    return ImageGrid(n=n, fov=fov)


def grid_for_unit_pitch(layout, n):
    """Grid whose bin spacing matches an integer-grid layout's pitch exactly.

    The pitch is the smallest nonzero coordinate gap; one pitch maps to one
    DFT bin, so the snapped core bins are exact and the interferometric matrix
    is a submatrix of the n x n circulant case.
    """
    pos = layout.positions
    diffs = np.abs(pos[:, None, :] - pos[None, :, :]).ravel()
    diffs = diffs[diffs > 0]
    if diffs.size == 0:
        raise ValueError("single-core layout has no pitch")
    pitch = diffs.min()
    fov = layout.wavelength * layout.propagation_distance / pitch
    return ImageGrid(n=n, fov=fov)
