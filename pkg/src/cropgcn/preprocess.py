"""Scene series to per-node feature matrices: stack, pool, tile, upsample."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError, InputError
from .resample import Interpolation, upsample

LABEL_SCALE = 4
BACKGROUND, CULTIVATED, EXCLUDED = 0, 1, 255


@dataclass(frozen=True, eq=False)
class SceneSeries:
    """``T x B x H x W`` reflectance stack with optional validity mask and hi-res label.

    ``validity`` is ``T x H x W`` (True = usable) and ``label`` is
    ``4H x 4W`` with values in {0, 1, 255}.
    """

    images: np.ndarray
    validity: np.ndarray | None = None
    label: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim != 4 or min(images.shape) < 1:
            raise InputError(f"images must have shape (T, B, H, W) with all dims >= 1, got {images.shape}")
        if not np.isfinite(images).all():
            raise DataError("scene images contain NaN or infinite values")
        t, _, h, w = images.shape
        object.__setattr__(self, "images", images)
        if self.validity is not None:
            validity = np.asarray(self.validity, dtype=bool)
            if validity.shape != (t, h, w):
                raise InputError(f"validity must have shape {(t, h, w)}, got {validity.shape}")
            object.__setattr__(self, "validity", validity)
        if self.label is not None:
            label = np.asarray(self.label)
            if label.shape != (LABEL_SCALE * h, LABEL_SCALE * w):
                raise InputError(
                    f"label must have shape {(LABEL_SCALE * h, LABEL_SCALE * w)}, got {label.shape}"
                )
            if not np.isin(label, (BACKGROUND, CULTIVATED, EXCLUDED)).all():
                raise InputError("label values must be 0, 1 or 255")
            object.__setattr__(self, "label", label.astype(np.uint8))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.images.shape

    def content_key(self) -> str:
        """Digest of the image payload; gives scenes an order independent of file names."""
        return hashlib.sha1(np.ascontiguousarray(self.images).tobytes()).hexdigest()


@dataclass(frozen=True)
class PreprocConfig:
    k: int = 80
    scale: int = 4
    interpolation: Interpolation = Interpolation.BICUBIC
    patch_size: int = 100

    def __post_init__(self):
        object.__setattr__(self, "interpolation", Interpolation(self.interpolation))
        for field in ("k", "scale", "patch_size"):
            value = getattr(self, field)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise InputError(f"{field} must be a positive integer, got {value!r}")


class Tile(NamedTuple):
    """Low-resolution placement of one patch: top-left corner and extent."""

    y: int
    x: int
    height: int
    width: int


def stack_series(scene: SceneSeries) -> np.ndarray:
    """Return the ``(H*W) x (T*B)`` matrix; channel ``t*B + b``, row ``y*W + x``."""
    t, b, h, w = scene.images.shape
    return scene.images.reshape(t * b, h * w).T.copy()


def pool_windows(length: int, k: int) -> list[tuple[int, int]]:
    """Adaptive pooling windows ``[floor(i*L/k), ceil((i+1)*L/k))``."""
    if k < 1 or length < k:
        raise InputError(f"adaptive pooling needs L >= k >= 1, got L={length}, k={k}")
    return [((i * length) // k, -(-((i + 1) * length) // k)) for i in range(k)]


def adaptive_max_pool(x, k: int) -> np.ndarray:
    """Max over adaptive windows along the last axis (a single vector or a matrix of rows)."""
    x = np.asarray(x, dtype=np.float64)
    windows = pool_windows(x.shape[-1], k)
    return np.stack([x[..., s:e].max(axis=-1) for s, e in windows], axis=-1)


def split_patches(tensor: np.ndarray, patch_size: int) -> tuple[list[np.ndarray], list[Tile]]:
    """Cut the two leading axes into non-overlapping tiles; edge tiles may be smaller."""
    if patch_size < 1:
        raise InputError(f"patch_size must be >= 1, got {patch_size}")
    h, w = tensor.shape[:2]
    patches, index = [], []
    for y in range(0, h, patch_size):
        for x in range(0, w, patch_size):
            tile = Tile(y, x, min(patch_size, h - y), min(patch_size, w - x))
            patches.append(tensor[y : y + tile.height, x : x + tile.width])
            index.append(tile)
    return patches, index


def reassemble(patches, index, scale: int = 1) -> np.ndarray:
    """Inverse of :func:`split_patches`; ``scale`` maps low-res tiles onto upsampled patches."""
    if len(patches) != len(index) or not patches:
        raise InputError("need one tile per patch and at least one patch")
    h = max(t.y + t.height for t in index) * scale
    w = max(t.x + t.width for t in index) * scale
    first = np.asarray(patches[0])
    out = np.zeros((h, w) + first.shape[2:], dtype=first.dtype)
    cover = np.zeros((h, w), dtype=np.int32)
    for patch, tile in zip(patches, index):
        patch = np.asarray(patch)
        expect = (tile.height * scale, tile.width * scale)
        if patch.shape[:2] != expect:
            raise InputError(f"patch shape {patch.shape[:2]} does not match tile {tile} at scale {scale}")
        ys = slice(tile.y * scale, tile.y * scale + expect[0])
        xs = slice(tile.x * scale, tile.x * scale + expect[1])
        out[ys, xs] = patch
        cover[ys, xs] += 1
    if np.any(cover != 1):
        n_gap = int((cover == 0).sum())
        n_overlap = int((cover > 1).sum())
        raise InputError(f"tiles do not cover the scene exactly: {n_gap} gap, {n_overlap} overlapping pixels")
    return out


def upsample_features(channels: np.ndarray, cfg: PreprocConfig) -> np.ndarray:
    """Resample an ``H x W x k`` tensor to ``sH x sW x k`` with the configured method."""
    return upsample(channels, cfg.scale, cfg.interpolation)


def pooled_features(scene: SceneSeries, k: int) -> np.ndarray:
    """Stack and pool a scene into an ``H x W x k`` low-resolution tensor."""
    _, _, h, w = scene.images.shape
    return adaptive_max_pool(stack_series(scene), k).reshape(h, w, k)


@dataclass(frozen=True, eq=False)
class Patch:
    """Graph-ready patch: node features in row-major hi-res order plus optional labels."""

    tile: Tile
    features: np.ndarray  # (scale*h * scale*w, k)
    height: int  # hi-res
    width: int
    labels: np.ndarray | None = None  # flat uint8, may contain 255


def scene_patches(scene: SceneSeries, cfg: PreprocConfig) -> list[Patch]:
    """Run the full preprocessing pipeline on one scene.

    Tiles are cut at low resolution and each is upsampled on its own with
    border replication, so peak memory is bounded by the patch size.
    """
    pooled = pooled_features(scene, cfg.k)
    tiles, index = split_patches(pooled, cfg.patch_size)
    if scene.label is not None and cfg.scale != LABEL_SCALE:
        raise InputError(f"labelled scenes require scale {LABEL_SCALE}, got {cfg.scale}")
    out = []
    for block, tile in zip(tiles, index):
        up = upsample_features(block, cfg)
        hh, ww = up.shape[:2]
        labels = None
        if scene.label is not None:
            s = cfg.scale
            labels = scene.label[tile.y * s : tile.y * s + hh, tile.x * s : tile.x * s + ww].reshape(-1)
        out.append(Patch(tile, up.reshape(hh * ww, cfg.k), hh, ww, labels))
    return out
