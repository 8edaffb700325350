"""Hough-rescaled region similarity between two images.

Each proposal pair ``(k, l)`` votes its appearance similarity ``a^kl`` into
one bin of a discretized offset space (center translation plus log scale
ratios).  The similarity of a pair is its appearance score times the total
vote mass of its bin::

    s^kl = a^kl * c[bin(k, l)],    c[o] = sum_{(k', l') in bin o} a^k'l'

which is a hard-indicator version of the generalized Hough scoring and costs
one accumulation pass over the ``p_i * p_j`` pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .model import ImageRecord, Rect


@dataclass(frozen=True)
class HoughSpace:
    """Offset grid: translation bins over ``[-1, 1]``, log-scale bins over ``[-ln 4, ln 4]``."""

    tx_bins: int = 8
    ty_bins: int = 8
    sx_bins: int = 5
    sy_bins: int = 5
    translation_range: float = 1.0
    log_scale_range: float = math.log(4.0)

    def __post_init__(self):
        for name in ("tx_bins", "ty_bins", "sx_bins", "sy_bins"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.translation_range <= 0 or self.log_scale_range <= 0:
            raise ValueError("bin ranges must be positive")

    @property
    def size(self) -> int:
        return self.tx_bins * self.ty_bins * self.sx_bins * self.sy_bins

    @property
    def overflow(self) -> int:
        """Index of the bin collecting out-of-range offsets; never matched."""
        return self.size

    @property
    def central_bin(self) -> int:
        z = np.zeros(1)
        return int(self._combine(z, z, z, z)[0])

    def _quantize(self, v: np.ndarray, nbins: int, half_range: float) -> np.ndarray:
        pos = (v + half_range) / (2.0 * half_range) * nbins
        idx = np.floor(pos).astype(np.int64)
        # the closed upper edge belongs to the last bin
        idx = np.where(v == half_range, nbins - 1, idx)
        idx[(v < -half_range) | (v > half_range) | ~np.isfinite(v)] = -1
        return idx

    def _combine(self, dx, dy, lsx, lsy) -> np.ndarray:
        bx = self._quantize(dx, self.tx_bins, self.translation_range)
        by = self._quantize(dy, self.ty_bins, self.translation_range)
        bsx = self._quantize(lsx, self.sx_bins, self.log_scale_range)
        bsy = self._quantize(lsy, self.sy_bins, self.log_scale_range)
        flat = ((bx * self.ty_bins + by) * self.sx_bins + bsx) * self.sy_bins + bsy
        out_of_range = (bx < 0) | (by < 0) | (bsx < 0) | (bsy < 0)
        return np.where(out_of_range, self.overflow, flat)


def _unit_rows(features: np.ndarray) -> np.ndarray:
    f = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(f, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise DataError("appearance similarity is undefined for zero-length feature vectors")
    return f / norms


def appearance_similarity(f, g) -> float:
    """Cosine similarity of two feature vectors, clamped below at 0."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape:
        raise DataError(f"feature dimensions differ: {f.shape} vs {g.shape}")
    return max(0.0, float(_unit_rows(f) @ _unit_rows(g)))


def appearance_matrix(fi: np.ndarray, fj: np.ndarray) -> np.ndarray:
    if fi.shape[1] != fj.shape[1]:
        raise DataError(f"feature dimensions differ: {fi.shape[1]} vs {fj.shape[1]}")
    return np.maximum(_unit_rows(fi) @ _unit_rows(fj).T, 0.0)


def offset_bins(
    boxes_i: np.ndarray,
    boxes_j: np.ndarray,
    dims_i: tuple[float, float],
    dims_j: tuple[float, float],
    hough: HoughSpace,
) -> np.ndarray:
    """Quantized offset of every pair ``(boxes_i[k], boxes_j[l])`` as a (p_i, p_j) int array."""
    bi = np.asarray(boxes_i, dtype=np.float64).reshape(-1, 4)
    bj = np.asarray(boxes_j, dtype=np.float64).reshape(-1, 4)
    mean_w = 0.5 * (dims_i[0] + dims_j[0])
    mean_h = 0.5 * (dims_i[1] + dims_j[1])
    cxi = bi[:, 0] + 0.5 * bi[:, 2]
    cyi = bi[:, 1] + 0.5 * bi[:, 3]
    cxj = bj[:, 0] + 0.5 * bj[:, 2]
    cyj = bj[:, 1] + 0.5 * bj[:, 3]
    dx = (cxj[None, :] - cxi[:, None]) / mean_w
    dy = (cyj[None, :] - cyi[:, None]) / mean_h
    lsx = np.log(bj[None, :, 2] / bi[:, None, 2])
    lsy = np.log(bj[None, :, 3] / bi[:, None, 3])
    return hough._combine(dx, dy, lsx, lsy)


def offset_bin(r: Rect, s: Rect, dims_i, dims_j, hough: HoughSpace) -> int:
    return int(offset_bins(r.as_array(), s.as_array(), dims_i, dims_j, hough)[0, 0])


def hough_accumulator(appearance: np.ndarray, bins: np.ndarray, hough: HoughSpace) -> np.ndarray:
    """Vote mass per offset bin; the overflow bin is dropped."""
    c = np.bincount(bins.ravel(), weights=appearance.ravel(), minlength=hough.size + 1)
    return c[: hough.size]


def similarity_matrix(
    img_i: ImageRecord,
    img_j: ImageRecord,
    hough: HoughSpace | None = None,
    normalize: bool = True,
) -> np.ndarray:
    """Dense ``p_i x p_j`` similarity of image ``i``'s proposals to image ``j``'s."""
    hough = hough or HoughSpace()
    if img_i.features is None or img_j.features is None:
        missing = img_i.id if img_i.features is None else img_j.id
        raise DataError(f"image {missing!r} has no features")
    a = appearance_matrix(img_i.features, img_j.features)
    bins = offset_bins(
        img_i.proposals, img_j.proposals, (img_i.width, img_i.height), (img_j.width, img_j.height), hough
    )
    c = np.append(hough_accumulator(a, bins, hough), 0.0)
    s = a * c[bins]
    if normalize:
        s = s / (img_i.num_proposals * img_j.num_proposals)
    return s
