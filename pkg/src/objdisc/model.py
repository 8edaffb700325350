"""Core geometric and dataset types, plus evaluation of the discrete objective.

Rectangles are ``(x, y, w, h)`` with ``(x, y)`` the top-left corner.  Proposal
sets are stored as ``(p, 4)`` float arrays; :class:`Rect` is the scalar view
used at API boundaries.

Region variables ``x`` are kept as one flat vector over all proposals of all
images (image ``i`` owns ``x[offsets[i]:offsets[i + 1]]``), and the link
variables ``e`` as a dense ``n x n`` matrix with a zero diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

# ---------------------------------------------------------------------------
# Rectangles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise DataError(f"rectangle must have positive width and height, got {self}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    @classmethod
    def from_seq(cls, values: Sequence[float]) -> "Rect":
        x, y, w, h = (float(v) for v in values)
        return cls(x, y, w, h)


def rect_area(r: Rect) -> float:
    return r.w * r.h


def rect_intersection_area(r: Rect, s: Rect) -> float:
    iw = min(r.x + r.w, s.x + s.w) - max(r.x, s.x)
    ih = min(r.y + r.h, s.y + s.h) - max(r.y, s.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(r: Rect, s: Rect) -> float:
    inter = rect_intersection_area(r, s)
    if inter == 0.0:
        return 0.0
    return inter / (rect_area(r) + rect_area(s) - inter)


def box_areas(boxes: np.ndarray) -> np.ndarray:
    return boxes[:, 2] * boxes[:, 3]


def pairwise_intersection(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Intersection areas between every box of ``a`` (m, 4) and ``b`` (n, 4)."""
    x0 = np.maximum(a[:, None, 0], b[None, :, 0])
    y0 = np.maximum(a[:, None, 1], b[None, :, 1])
    x1 = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    y1 = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    return np.clip(x1 - x0, 0.0, None) * np.clip(y1 - y0, 0.0, None)


def pairwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    inter = pairwise_intersection(a, b)
    union = box_areas(a)[:, None] + box_areas(b)[None, :] - inter
    return inter / union


# ---------------------------------------------------------------------------
# Images and datasets
# ---------------------------------------------------------------------------


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def clamp_boxes(boxes: np.ndarray, width: float, height: float, what: str = "proposal") -> np.ndarray:
    """Clip boxes to ``[0, width] x [0, height]``; zero-area results are rejected."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    x0 = np.clip(boxes[:, 0], 0.0, width)
    y0 = np.clip(boxes[:, 1], 0.0, height)
    x1 = np.clip(boxes[:, 0] + boxes[:, 2], 0.0, width)
    y1 = np.clip(boxes[:, 1] + boxes[:, 3], 0.0, height)
    bad = np.flatnonzero((x1 <= x0) | (y1 <= y0))
    if bad.size:
        k = int(bad[0])
        raise DataError(
            f"{what} {k} {boxes[k].tolist()} has zero area inside the "
            f"{width}x{height} image after clamping"
        )
    return np.stack([x0, y0, x1 - x0, y1 - y0], axis=1)


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """One image: its proposals and optional features, ground truth and descriptor.

    Use :meth:`create` to build records from raw values; it clamps proposals
    to the image bounds and validates shapes.
    """

    id: str
    width: float
    height: float
    proposals: np.ndarray
    features: np.ndarray | None = None
    ground_truth: np.ndarray | None = None
    class_label: str | None = None
    global_descriptor: np.ndarray | None = None

    @classmethod
    def create(
        cls,
        id: str,
        width: float,
        height: float,
        proposals,
        features=None,
        ground_truth=None,
        class_label: str | None = None,
        global_descriptor=None,
    ) -> "ImageRecord":
        if not (width > 0 and height > 0):
            raise DataError(f"image {id!r}: width and height must be positive")
        props = np.asarray(proposals, dtype=np.float64)
        if props.ndim != 2 or props.shape[1] != 4 or props.shape[0] < 1:
            raise DataError(f"image {id!r}: proposals must be a non-empty (p, 4) array")
        props = clamp_boxes(props, width, height)
        feats = None
        if features is not None:
            feats = np.asarray(features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != props.shape[0]:
                raise DataError(
                    f"image {id!r}: expected one feature vector per proposal "
                    f"({props.shape[0]}), got shape {feats.shape}"
                )
        gt = None
        if ground_truth is not None and len(ground_truth) > 0:
            gt = clamp_boxes(ground_truth, width, height, what="ground-truth box")
        glob = None if global_descriptor is None else np.asarray(global_descriptor, dtype=np.float64).ravel()
        return cls(
            id=str(id),
            width=float(width),
            height=float(height),
            proposals=_frozen(props),
            features=None if feats is None else _frozen(feats),
            ground_truth=None if gt is None else _frozen(gt),
            class_label=None if class_label is None else str(class_label),
            global_descriptor=None if glob is None else _frozen(glob),
        )

    @property
    def num_proposals(self) -> int:
        return self.proposals.shape[0]

    def rects(self) -> list[Rect]:
        return [Rect.from_seq(b) for b in self.proposals]

    def ground_truth_rects(self) -> list[Rect]:
        if self.ground_truth is None:
            return []
        return [Rect.from_seq(b) for b in self.ground_truth]

    def __eq__(self, other):
        if not isinstance(other, ImageRecord):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and bool(np.array_equal(a, b))

        return (
            self.id == other.id
            and self.width == other.width
            and self.height == other.height
            and self.class_label == other.class_label
            and same(self.proposals, other.proposals)
            and same(self.features, other.features)
            and same(self.ground_truth, other.ground_truth)
            and same(self.global_descriptor, other.global_descriptor)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    images: tuple[ImageRecord, ...]

    def __post_init__(self):
        images = tuple(self.images)
        object.__setattr__(self, "images", images)
        if len(images) < 2:
            raise DataError(f"a dataset needs at least 2 images, got {len(images)}")
        ids = [im.id for im in images]
        if len(set(ids)) != len(ids):
            seen = set()
            dup = next(i for i in ids if i in seen or seen.add(i))
            raise DataError(f"duplicate image id {dup!r}")
        dims = {im.features.shape[1] for im in images if im.features is not None}
        if len(dims) > 1:
            raise DataError(f"feature dimension differs across images: {sorted(dims)}")

    def __len__(self) -> int:
        return len(self.images)

    def __iter__(self):
        return iter(self.images)

    def __getitem__(self, i: int) -> ImageRecord:
        return self.images[i]

    @property
    def ids(self) -> list[str]:
        return [im.id for im in self.images]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([im.num_proposals for im in self.images], dtype=np.int64)

    @property
    def has_features(self) -> bool:
        return all(im.features is not None for im in self.images)

    def index_of(self, image_id: str) -> int:
        try:
            return self.ids.index(image_id)
        except ValueError:
            raise DataError(f"unknown image id {image_id!r}") from None

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.images[i] for i in indices))


# ---------------------------------------------------------------------------
# Score matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparseScoreMatrix:
    """Nonnegative sparse ``rows x cols`` matrix in coordinate form."""

    rows: int
    cols: int
    k: np.ndarray
    l: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k, dtype=np.int64).ravel()
        l = np.asarray(self.l, dtype=np.int64).ravel()
        v = np.asarray(self.values, dtype=np.float64).ravel()
        if not (k.shape == l.shape == v.shape):
            raise DataError("k, l and values must have the same length")
        if k.size:
            if k.min() < 0 or k.max() >= self.rows or l.min() < 0 or l.max() >= self.cols:
                raise DataError("sparse entry index out of range")
            if v.min() < 0 or not np.all(np.isfinite(v)):
                raise DataError("score values must be finite and nonnegative")
            flat = k * self.cols + l
            if np.unique(flat).size != flat.size:
                raise DataError("duplicate (k, l) entry in sparse score matrix")
        for name, arr in (("k", k), ("l", l), ("values", v)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        out[self.k, self.l] = self.values
        return out

    @classmethod
    def from_dense(cls, dense) -> "SparseScoreMatrix":
        dense = np.asarray(dense, dtype=np.float64)
        k, l = np.nonzero(dense)
        return cls(dense.shape[0], dense.shape[1], k, l, dense[k, l])

    @classmethod
    def empty(cls, rows: int, cols: int) -> "SparseScoreMatrix":
        z = np.zeros(0)
        return cls(rows, cols, z, z, z)

    def __eq__(self, other):
        if not isinstance(other, SparseScoreMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.cols == other.cols
            and np.array_equal(self.k, other.k)
            and np.array_equal(self.l, other.l)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


class PairScores:
    """All score matrices of a problem, indexed by ordered image pair.

    Besides the mapping view, exposes the entries of every matrix as flat
    coordinate arrays, which is what the solvers work on:

    ``src, dst``  image indices ``i, j`` of the entry's matrix
    ``gk, gl``    global (flat) indices of ``x_i^k`` and ``x_j^l``
    ``values``    the score ``S_ij^kl``
    """

    def __init__(self, sizes: Sequence[int], matrices: Mapping[tuple[int, int], SparseScoreMatrix]):
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.sizes.setflags(write=False)
        n = self.n
        if n < 2:
            raise DataError("need at least 2 images")
        if np.any(self.sizes < 1):
            raise DataError("every image needs at least one proposal")
        clean = {}
        for (i, j), m in sorted(matrices.items()):
            i, j = int(i), int(j)
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise DataError(f"invalid image pair ({i}, {j}) for n={n}")
            if m.rows != self.sizes[i] or m.cols != self.sizes[j]:
                raise DataError(
                    f"matrix ({i}, {j}) has shape {m.rows}x{m.cols}, "
                    f"expected {self.sizes[i]}x{self.sizes[j]}"
                )
            clean[(i, j)] = m
        self._matrices = clean

    @property
    def n(self) -> int:
        return int(self.sizes.size)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def num_x(self) -> int:
        return int(self.offsets[-1])

    def __getitem__(self, pair: tuple[int, int]) -> SparseScoreMatrix:
        i, j = pair
        m = self._matrices.get((int(i), int(j)))
        if m is None:
            return SparseScoreMatrix.empty(int(self.sizes[i]), int(self.sizes[j]))
        return m

    def __contains__(self, pair) -> bool:
        return tuple(pair) in self._matrices

    def items(self):
        return self._matrices.items()

    def pairs(self) -> list[tuple[int, int]]:
        return list(self._matrices)

    @cached_property
    def _flat(self):
        parts = [(i, j, m) for (i, j), m in self._matrices.items() if m.nnz]
        if not parts:
            e = np.zeros(0, dtype=np.int64)
            return e, e, e, e, np.zeros(0)
        src = np.concatenate([np.full(m.nnz, i, dtype=np.int64) for i, _, m in parts])
        dst = np.concatenate([np.full(m.nnz, j, dtype=np.int64) for _, j, m in parts])
        gk = np.concatenate([m.k + self.offsets[i] for i, _, m in parts])
        gl = np.concatenate([m.l + self.offsets[j] for _, j, m in parts])
        val = np.concatenate([m.values for _, _, m in parts])
        for a in (src, dst, gk, gl, val):
            a.setflags(write=False)
        return src, dst, gk, gl, val

    @property
    def src(self) -> np.ndarray:
        return self._flat[0]

    @property
    def dst(self) -> np.ndarray:
        return self._flat[1]

    @property
    def gk(self) -> np.ndarray:
        return self._flat[2]

    @property
    def gl(self) -> np.ndarray:
        return self._flat[3]

    @property
    def values(self) -> np.ndarray:
        return self._flat[4]

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def max_value(self) -> float:
        return float(self.values.max()) if self.nnz else 0.0

    def scaled(self, factor: float) -> "PairScores":
        return PairScores(
            self.sizes,
            {p: SparseScoreMatrix(m.rows, m.cols, m.k, m.l, m.values * factor) for p, m in self.items()},
        )

    def pair_weights(self, x: np.ndarray) -> np.ndarray:
        """``W[i, j] = x_i^T S_ij x_j`` for every ordered pair, as an ``n x n`` matrix."""
        n = self.n
        w = np.bincount(
            self.src * n + self.dst, weights=self.values * x[self.gk] * x[self.gl], minlength=n * n
        )
        return w.reshape(n, n)

    @classmethod
    def from_dense(cls, dense: Mapping[tuple[int, int], np.ndarray], sizes=None) -> "PairScores":
        if sizes is None:
            n = 1 + max(max(p) for p in dense)
            sizes = [0] * n
            for (i, j), m in dense.items():
                sizes[i], sizes[j] = np.shape(m)
        return cls(sizes, {p: SparseScoreMatrix.from_dense(m) for p, m in dense.items()})


# ---------------------------------------------------------------------------
# Assignments
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FractionalAssignment:
    """Values in [0, 1] for every region variable and every link variable."""

    x: np.ndarray
    e: np.ndarray
    sizes: np.ndarray = field(repr=False)

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=np.int64)
        x = np.array(self.x, dtype=np.float64).ravel()
        e = np.array(self.e, dtype=np.float64)
        n = sizes.size
        if x.size != int(sizes.sum()):
            raise DataError(f"x has {x.size} entries, expected {int(sizes.sum())}")
        if e.shape != (n, n):
            raise DataError(f"e has shape {e.shape}, expected {(n, n)}")
        if np.any(np.diag(e) != 0):
            raise DataError("e must have a zero diagonal")
        for name, arr in (("x", x), ("e", e)):
            if arr.size and (arr.min() < 0 or arr.max() > 1 or not np.all(np.isfinite(arr))):
                raise DataError(f"{name} entries must lie in [0, 1]")
        self._check_values(x, e)
        for name, arr in (("sizes", sizes), ("x", x), ("e", e)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def _check_values(self, x, e):
        pass

    @property
    def n(self) -> int:
        return int(self.sizes.size)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)])

    def x_block(self, i: int) -> np.ndarray:
        return self.x[self.offsets[i] : self.offsets[i + 1]]

    def blocks(self) -> list[np.ndarray]:
        return [self.x_block(i) for i in range(self.n)]

    def x_counts(self) -> np.ndarray:
        return np.add.reduceat(self.x, self.offsets[:-1]) if self.x.size else np.zeros(self.n)

    def e_counts(self) -> np.ndarray:
        return self.e.sum(axis=1)

    @classmethod
    def from_blocks(cls, blocks: Sequence, e):
        sizes = [len(b) for b in blocks]
        return cls(np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks]), e, sizes)

    @classmethod
    def ones(cls, sizes, mask: np.ndarray | None = None):
        """All-ones point (zero diagonal; entries outside ``mask`` zeroed)."""
        sizes = np.asarray(sizes, dtype=np.int64)
        n = sizes.size
        e = np.ones((n, n)) - np.eye(n)
        if mask is not None:
            e = e * mask
        return cls(np.ones(int(sizes.sum())), e, sizes)

    def __eq__(self, other):
        if not isinstance(other, FractionalAssignment):
            return NotImplemented
        return (
            np.array_equal(self.sizes, other.sizes)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.e, other.e)
        )

    __hash__ = None


class Assignment(FractionalAssignment):
    """A binary point: every entry of ``x`` and ``e`` is 0 or 1."""

    def _check_values(self, x, e):
        if np.any((x != 0) & (x != 1)) or np.any((e != 0) & (e != 1)):
            raise DataError("assignment entries must be binary")

    def selected(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.x_block(i))

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.e[i])


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _check_shapes(a: FractionalAssignment, scores: PairScores) -> None:
    if a.n != scores.n or not np.array_equal(a.sizes, scores.sizes):
        raise DataError(
            f"assignment shape (n={a.n}, sizes={a.sizes.tolist()}) does not match "
            f"score matrices (n={scores.n}, sizes={scores.sizes.tolist()})"
        )


def objective_value(a: FractionalAssignment, scores: PairScores) -> float:
    """``sum_{i != j} e_ij x_i^T S_ij x_j`` over the stored entries."""
    _check_shapes(a, scores)
    if scores.nnz == 0:
        return 0.0
    terms = scores.values * a.e[scores.src, scores.dst] * a.x[scores.gk] * a.x[scores.gl]
    return float(terms.sum())


def relaxed_objective_value(a: FractionalAssignment, scores: PairScores) -> float:
    """Concave extension: ``sum S_ij^kl min(e_ij, x_i^k, x_j^l)``."""
    _check_shapes(a, scores)
    if scores.nnz == 0:
        return 0.0
    m = np.minimum(np.minimum(a.e[scores.src, scores.dst], a.x[scores.gk]), a.x[scores.gl])
    return float((scores.values * m).sum())
