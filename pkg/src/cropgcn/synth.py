"""Synthetic multitemporal scenes with sub-pixel parcel boundaries.

Parcels are rasterized on the 4x ground-truth grid first. The low-resolution
stack is then obtained by box-averaging the class map, so mixed pixels carry
boundary information that the segmenter has to super-resolve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import InputError
from .preprocess import CULTIVATED, EXCLUDED, LABEL_SCALE, SceneSeries

# Loosely Sentinel-2 shaped (B1..B12 without B10): bare/built background vs vegetated fields.
BACKGROUND_SPECTRUM = (0.10, 0.11, 0.13, 0.15, 0.17, 0.19, 0.20, 0.21, 0.22, 0.22, 0.26, 0.22)
CULTIVATED_SPECTRUM = (0.05, 0.07, 0.06, 0.10, 0.20, 0.30, 0.34, 0.36, 0.37, 0.38, 0.20, 0.12)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_times: int = 8
    n_bands: int = 12
    height: int = 64
    width: int = 64
    parcels: tuple[int, int] = (4, 10)
    parcel_size: tuple[int, int] = (24, 96)  # hi-res pixels, per side
    background_spectrum: tuple[float, ...] | None = None
    cultivated_spectrum: tuple[float, ...] | None = None
    temporal_amplitude: float = 0.3
    noise_std: float = 0.01
    cloud_fraction: float = 0.05
    border: int = 4  # hi-res pixels marked 255 along the scene edge

    def __post_init__(self):
        if min(self.n_times, self.n_bands, self.height, self.width) < 1:
            raise InputError("scene dimensions must be positive")
        lo, hi = self.parcels
        if lo < 0 or hi < lo:
            raise InputError(f"parcel count range must satisfy 0 <= min <= max, got {self.parcels}")
        smin, smax = self.parcel_size
        if smin < 1 or smax < smin:
            raise InputError(f"parcel size range must satisfy 1 <= min <= max, got {self.parcel_size}")
        if smax > LABEL_SCALE * min(self.height, self.width):
            raise InputError(
                f"parcel size {smax} exceeds the hi-res scene "
                f"({LABEL_SCALE * self.height}x{LABEL_SCALE * self.width})"
            )
        for name in ("background", "cultivated"):
            spec = self.spectrum(name)
            if len(spec) != self.n_bands or min(spec) < 0:
                raise InputError(f"{name} spectrum needs {self.n_bands} non-negative values")
        if self.noise_std < 0 or not 0 <= self.cloud_fraction < 1 or self.temporal_amplitude < 0:
            raise InputError("noise_std and temporal_amplitude must be >= 0, cloud_fraction in [0, 1)")
        if self.border < 0 or 2 * self.border >= LABEL_SCALE * min(self.height, self.width):
            raise InputError(f"border width {self.border} leaves nothing to label")

    def spectrum(self, name: str) -> np.ndarray:
        given = getattr(self, f"{name}_spectrum")
        if given is not None:
            return np.asarray(given, dtype=np.float64)
        default = BACKGROUND_SPECTRUM if name == "background" else CULTIVATED_SPECTRUM
        # cycle the default shape when a different band count is requested
        return np.resize(np.asarray(default), self.n_bands)

    @property
    def spectral_gap(self) -> np.ndarray:
        return self.spectrum("cultivated") - self.spectrum("background")


def rasterize_convex(vertices: np.ndarray, height: int, width: int) -> np.ndarray:
    """Boolean mask of pixel centres inside a convex polygon given as (y, x) vertices."""
    vertices = np.asarray(vertices, dtype=np.float64)
    cy, cx = vertices.mean(axis=0)
    yy, xx = np.mgrid[0:height, 0:width]
    py, px = yy + 0.5, xx + 0.5
    inside = np.ones((height, width), dtype=bool)
    for (y0, x0), (y1, x1) in zip(vertices, np.roll(vertices, -1, axis=0)):
        side = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0)
        ref = (x1 - x0) * (cy - y0) - (y1 - y0) * (cx - x0)
        inside &= side * np.sign(ref) >= 0
    return inside


def _parcel(rng, cfg: SynthConfig, hh: int, ww: int) -> np.ndarray:
    size_y, size_x = rng.uniform(*cfg.parcel_size, size=2)
    cy = rng.uniform(size_y / 2, hh - size_y / 2)
    cx = rng.uniform(size_x / 2, ww - size_x / 2)
    angle = rng.uniform(-np.pi / 6, np.pi / 6)
    # rectangle corners jittered into a general convex quadrilateral
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64) * [size_y / 2, size_x / 2]
    corners += rng.uniform(-0.12, 0.12, size=corners.shape) * [size_y, size_x]
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    verts = corners @ rot.T + [cy, cx]
    return rasterize_convex(verts, hh, ww)


def class_map(cfg: SynthConfig, rng) -> np.ndarray:
    hh, ww = LABEL_SCALE * cfg.height, LABEL_SCALE * cfg.width
    cls = np.zeros((hh, ww), dtype=bool)
    for _ in range(rng.integers(cfg.parcels[0], cfg.parcels[1] + 1)):
        cls |= _parcel(rng, cfg, hh, ww)
    return cls


def cloud_masks(cfg: SynthConfig, rng) -> np.ndarray:
    """Per-image blobby cloud masks covering ``cloud_fraction`` of the pixels (True = cloud)."""
    t, h, w = cfg.n_times, cfg.height, cfg.width
    clouds = np.zeros((t, h, w), dtype=bool)
    if cfg.cloud_fraction == 0:
        return clouds
    n_cloud = int(round(cfg.cloud_fraction * h * w))
    for i in range(t):
        field = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma=max(1.0, min(h, w) / 12))
        if n_cloud:
            # stable argsort ranks break ties deterministically
            order = np.argsort(-field.ravel(), kind="stable")
            clouds[i].ravel()[order[:n_cloud]] = True
    return clouds


def generate_synthetic(cfg: SynthConfig = SynthConfig()) -> SceneSeries:
    """Generate a labelled scene; identical configs give identical scenes."""
    rng = np.random.default_rng(cfg.seed)
    s = LABEL_SCALE
    cls = class_map(cfg, rng)
    frac = cls.reshape(cfg.height, s, cfg.width, s).mean(axis=(1, 3))

    t_idx = np.arange(cfg.n_times)
    season = 1.0 + cfg.temporal_amplitude * np.sin(2 * np.pi * t_idx / cfg.n_times)
    bg = np.broadcast_to(cfg.spectrum("background"), (cfg.n_times, cfg.n_bands))
    cult = season[:, None] * cfg.spectrum("cultivated")[None, :]
    images = bg[:, :, None, None] + frac[None, None] * (cult - bg)[:, :, None, None]
    images = images + cfg.noise_std * rng.standard_normal(images.shape)
    images = np.maximum(images, 0.0)

    clouds = cloud_masks(cfg, rng)
    images[np.broadcast_to(clouds[:, None], images.shape)] = 0.0
    images = images.astype(np.float32).astype(np.float64)

    label = np.where(cls, CULTIVATED, 0).astype(np.uint8)
    if cfg.border:
        b = cfg.border
        label[:b, :] = label[-b:, :] = EXCLUDED
        label[:, :b] = label[:, -b:] = EXCLUDED
    return SceneSeries(images, validity=~clouds, label=label, name=f"synth_{cfg.seed}")
