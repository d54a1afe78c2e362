"""Continuous-domain forward model: speckle illumination, focused beams,
raster scanning, and photon noise.

The speckle synthesis uses the snapped per-core frequencies shared with the
operator chain, so the quadratic-form identity

    measure(f, alpha, noise=None) == alpha^* interf_forward(w*f) alpha

holds to machine precision on the raster.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import core_bins


class NoiseKind(enum.Enum):
    NONE = "none"
    POISSON = "poisson"
    ADDITIVE_GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = NoiseKind.NONE
    photon_scale: float = 1.0   # expected counts per unit intensity (Poisson)
    sigma: float = 0.0          # additive Gaussian standard deviation

    def __post_init__(self):
        kind = NoiseKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is NoiseKind.POISSON and self.photon_scale <= 0:
            raise ValueError("photon_scale must be positive for Poisson noise")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def corrupt(self, clean, rng):
        clean = np.asarray(clean, dtype=np.float64)
        if self.kind is NoiseKind.NONE:
            return clean.copy()
        if self.kind is NoiseKind.POISSON:
            if (clean < 0).any():
                raise ValueError("Poisson noise requires nonnegative intensities")
            return rng.poisson(self.photon_scale * clean) / self.photon_scale
        return clean + rng.normal(scale=self.sigma, size=clean.shape)


@dataclass(frozen=True)
class IlluminationField:
    """Nonnegative speckle intensity over the image raster."""

    intensity: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.intensity, dtype=np.float64)
        s.setflags(write=False)
        object.__setattr__(self, "intensity", s)


def speckle_field(alpha, layout, grid):
    """Complex coherent field on the raster, before vignetting and |.|^2."""
    alpha = np.asarray(alpha, dtype=np.complex128)
    if alpha.shape != (layout.Q,):
        raise ValueError("alpha must have one entry per core")
    d = core_bins(layout, grid)
    return _kernels.speckle_field(d[:, 0].astype(np.float64),
                                  d[:, 1].astype(np.float64),
                                  alpha, grid.n)


def speckle_intensity(alpha, layout, grid):
    """Vignetted speckle intensity S(x; alpha) = w(x) |sum_q alpha_q e^{i phi_q(x)}|^2."""
    field = speckle_field(alpha, layout, grid)
    return IlluminationField(grid.vignette() * np.abs(field) ** 2)


def measure(f, alpha, layout, grid, noise=None, rng=None):
    """One single-pixel measurement: integrate the speckle against the image.

    Noiseless value: sum_x S(x; alpha) f(x).  Poisson noise draws
    Poisson(photon_scale * ybar) / photon_scale; Gaussian adds N(0, sigma^2).
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (grid.n, grid.n):
        raise ValueError("image shape does not match the grid")
    S = speckle_intensity(alpha, layout, grid).intensity
    clean = float((S * f).sum())
    noise = noise or NoiseModel()
    if noise.kind is NoiseKind.NONE:
        return clean
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return float(noise.corrupt(np.array([clean]), rng)[0])


def focused_beam(target, layout, grid):
    """Sketch vector focusing the illumination at a raster point (meters).

    Uses the snapped per-core frequencies so the coherent sum peaks exactly at
    the pixel nearest the target.
    """
    target = np.asarray(target, dtype=np.float64)
    half = grid.fov / 2.0
    if np.abs(target).max() > half:
        raise ValueError("target lies outside the field of view")
    d = core_bins(layout, grid)
    xt = target / grid.pixel_size   # pixel units
    phase = -2j * np.pi / grid.n * (d @ xt)
    return np.exp(phase) / np.sqrt(layout.Q)


def beam_energy_map(scan_points, layout, grid):
    """On-focus intensity of the focused beam at each scan point: w(x) * Q."""
    w = grid.vignette()
    n = grid.n
    out = np.empty(len(scan_points))
    for i, x0 in enumerate(scan_points):
        a, b = _nearest_pixel(x0, grid)
        out[i] = w[a, b] * layout.Q
    return out


def _nearest_pixel(x0, grid):
    idx = np.clip(
        np.round(np.asarray(x0, dtype=np.float64) / grid.pixel_size).astype(int)
        + grid.n // 2,
        0, grid.n - 1,
    )
    return int(idx[0]), int(idx[1])


def raster_scan(f, layout, grid, scan_points, noise=None, rng=None):
    """Raster-scanning baseline: one focused-beam measurement per scan point."""
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    y = np.empty(len(scan_points))
    for i, x0 in enumerate(scan_points):
        alpha = focused_beam(x0, layout, grid)
        y[i] = measure(f, alpha, layout, grid, noise, rng)
    return y


def full_raster_points(grid):
    """All pixel-center positions in raster order (meters)."""
    x = grid.pixel_offsets() * grid.pixel_size
    gx, gy = np.meshgrid(x, x, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def raster_reconstruct(y, scan_points, layout, grid):
    """Normalize raster-scan measurements by the beam energy map.

    Returns an image with the normalized value at each scanned pixel and
    zeros elsewhere.
    """
    energy = beam_energy_map(scan_points, layout, grid)
    img = np.zeros((grid.n, grid.n))
    for i, x0 in enumerate(scan_points):
        a, b = _nearest_pixel(x0, grid)
        if energy[i] > 0:
            img[a, b] = y[i] / energy[i]
    return img
