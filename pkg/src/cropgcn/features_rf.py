"""Per-pixel neighbourhood statistics for a classical random-forest baseline.

For every pixel and band, all samples inside a ``window x window``
neighbourhood across the whole time series are pooled. Cloudy samples
(validity False) and samples outside the image are dropped. Eight statistics
are then computed: min, max, mean, median, std, q1, q3 and span. Quantiles use
linear interpolation between order statistics. The standard deviation is the
population one. The output is band-major: feature ``b * 8 + s`` holds
statistic ``s`` of band ``b``.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .preprocess import SceneSeries

STATISTICS = ("min", "max", "mean", "median", "std", "q1", "q3", "span")

# bound on float64 samples materialized at once (~64 MB)
_CHUNK_ELEMENTS = 8_000_000


def _quantile(sorted_vals, n, q):
    pos = (n - 1) * q
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    a = np.take_along_axis(sorted_vals, lo[..., None], axis=-1)[..., 0]
    b = np.take_along_axis(sorted_vals, hi[..., None], axis=-1)[..., 0]
    return a + frac * (b - a)


def sample_statistics(samples: np.ndarray) -> np.ndarray:
    """Statistics over the last axis of ``samples``; NaN marks a missing sample.

    Cells with no valid sample get all-zero statistics.
    """
    s = np.sort(samples, axis=-1)  # NaNs sort to the end
    n = np.sum(~np.isnan(s), axis=-1)
    empty = n == 0
    n_safe = np.where(empty, 1, n)
    filled = np.where(np.isnan(s), 0.0, s)
    lo = filled[..., 0]
    hi = np.take_along_axis(filled, (n_safe - 1)[..., None], axis=-1)[..., 0]
    # shifting by the minimum makes constant samples give an exact mean and zero spread
    shifted = np.where(np.isnan(s), 0.0, s - lo[..., None])
    mean = lo + shifted.sum(axis=-1) / n_safe
    dev = np.where(np.isnan(s), 0.0, s - mean[..., None])
    std = np.sqrt((dev * dev).sum(axis=-1) / n_safe)
    out = np.stack(
        [
            lo,
            hi,
            mean,
            _quantile(filled, n_safe, 0.5),
            std,
            _quantile(filled, n_safe, 0.25),
            _quantile(filled, n_safe, 0.75),
            hi - lo,
        ],
        axis=-1,
    )
    out[empty] = 0.0
    return out


def extract_features(scene: SceneSeries, window: int = 5) -> np.ndarray:
    """Return an ``H x W x (8 * B)`` feature tensor."""
    if window < 1 or window % 2 == 0:
        raise InputError(f"window must be a positive odd number, got {window}")
    t, n_bands, h, w = scene.images.shape
    r = window // 2
    valid = np.ones((t, h, w), dtype=bool) if scene.validity is None else scene.validity
    out = np.zeros((h, w, 8 * n_bands))
    rows_per_chunk = max(1, _CHUNK_ELEMENTS // max(1, w * t * window * window))
    for b in range(n_bands):
        band = np.where(valid, scene.images[:, b], np.nan)
        padded = np.pad(band, ((0, 0), (r, r), (r, r)), constant_values=np.nan)
        for y0 in range(0, h, rows_per_chunk):
            y1 = min(h, y0 + rows_per_chunk)
            views = [
                padded[:, y0 + dy : y1 + dy, dx : dx + w]
                for dy in range(window)
                for dx in range(window)
            ]
            # (T, window^2, rows, W) -> (rows, W, T * window^2)
            samples = np.stack(views, axis=1).transpose(2, 3, 0, 1).reshape(y1 - y0, w, -1)
            out[y0:y1, :, 8 * b : 8 * (b + 1)] = sample_statistics(samples)
    return out
