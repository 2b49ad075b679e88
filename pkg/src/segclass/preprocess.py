"""Intensity preprocessing: contrast-limited adaptive histogram
equalization (CLAHE) and 1-d k-means intensity clustering.

CLAHE here is the textbook construction: quantize intensities to 256 bins
over the image's own range, build one histogram per tile of the tile
grid, clip each histogram at ``clip`` times its mean bin height and
redistribute the excess uniformly over all bins, turn the clipped
histogram into a CDF lookup table mapping to [0, 255], and blend the
per-tile lookups bilinearly between tile centers (clamped at the
borders). Constant images pass through unchanged. For 3-d volumes the
2-d procedure runs independently on every axial slice (first axis).

``kmeans_labels`` clusters the intensity values of one image with Lloyd
iterations started from evenly spaced quantiles, then renumbers clusters
by ascending centroid so label 0 is always the darkest. It is the label
source for the threshold-pretrained backbone.
"""

import numpy as np

from .errors import ConfigError, DataError

CLAHE_BINS = 256


def clahe(image, tiles=8, clip=2.0):
    """Equalized copy of ``image`` with values in [0, 255] (float64)."""
    image = np.asarray(image, dtype=np.float64)
    if tiles < 1:
        raise ConfigError(f"tiles must be >= 1, got {tiles}")
    if clip <= 0:
        raise ConfigError(f"clip must be positive, got {clip}")
    if image.ndim == 2:
        return _clahe2d(image, tiles, clip)
    if image.ndim == 3:
        return np.stack([_clahe2d(plane, tiles, clip) for plane in image])
    raise ConfigError(f"clahe expects a 2-d or 3-d array, got shape {image.shape}")


def _clahe2d(image, tiles, clip):
    h, w = image.shape
    if h % tiles or w % tiles:
        raise ConfigError(f"image shape {image.shape} is not divisible into a {tiles}x{tiles} tile grid")
    vmin, vmax = float(image.min()), float(image.max())
    if vmax == vmin:
        return image.copy()
    bins = np.minimum((image - vmin) / (vmax - vmin) * CLAHE_BINS, CLAHE_BINS - 1).astype(np.intp)

    th, tw = h // tiles, w // tiles
    npix = th * tw
    limit = clip * npix / CLAHE_BINS
    luts = np.empty((tiles, tiles, CLAHE_BINS), dtype=np.float64)
    for ti in range(tiles):
        for tj in range(tiles):
            tile = bins[ti * th : (ti + 1) * th, tj * tw : (tj + 1) * tw]
            hist = np.bincount(tile.reshape(-1), minlength=CLAHE_BINS).astype(np.float64)
            excess = np.maximum(hist - limit, 0.0).sum()
            hist = np.minimum(hist, limit) + excess / CLAHE_BINS
            luts[ti, tj] = np.round(255.0 * np.cumsum(hist) / npix)

    # bilinear blend between tile-center mappings, clamped at the borders
    fy = np.clip((np.arange(h) + 0.5) / th - 0.5, 0.0, tiles - 1.0)
    fx = np.clip((np.arange(w) + 0.5) / tw - 0.5, 0.0, tiles - 1.0)
    i0 = np.minimum(fy.astype(np.intp), tiles - 1)
    j0 = np.minimum(fx.astype(np.intp), tiles - 1)
    i1 = np.minimum(i0 + 1, tiles - 1)
    j1 = np.minimum(j0 + 1, tiles - 1)
    wy = (fy - i0)[:, None]
    wx = (fx - j0)[None, :]
    i0 = i0[:, None]
    i1 = i1[:, None]
    j0 = j0[None, :]
    j1 = j1[None, :]
    out = (
        (1 - wy) * (1 - wx) * luts[i0, j0, bins]
        + (1 - wy) * wx * luts[i0, j1, bins]
        + wy * (1 - wx) * luts[i1, j0, bins]
        + wy * wx * luts[i1, j1, bins]
    )
    return out


def kmeans_labels(image, k, max_iter=100, tol=1e-4):
    """Cluster intensities into ``k`` groups; returns (labels, centroids).

    Labels have the image's shape (uint8) and are ordered by ascending
    centroid. Initialization is deterministic: the (2i+1)/(2k) quantiles.
    Clusters that lose all members keep their previous centroid. Stops
    when no centroid moves more than ``tol`` or after ``max_iter`` rounds.
    """
    image = np.asarray(image)
    values = image.reshape(-1).astype(np.float64)
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if np.unique(values).size < k:
        raise DataError(f"image has fewer than k={k} distinct intensities")
    centroids = np.quantile(values, (2 * np.arange(k) + 1) / (2 * k))
    for _ in range(max_iter):
        assign = np.argmin(np.abs(values[:, None] - centroids[None, :]), axis=1)
        moved = 0.0
        for c in range(k):
            members = values[assign == c]
            if members.size:
                new = members.mean()
                moved = max(moved, abs(new - centroids[c]))
                centroids[c] = new
        if moved < tol:
            break
    order = np.argsort(centroids, kind="stable")
    relabel = np.empty(k, dtype=np.intp)
    relabel[order] = np.arange(k)
    labels = relabel[assign].astype(np.uint8).reshape(image.shape)
    return labels, centroids[order]


def kmeans_objective(values, labels, centroids):
    """Sum of squared distances to assigned centroids (for diagnostics)."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    return float(np.sum((values - centroids[np.asarray(labels).reshape(-1)]) ** 2))
