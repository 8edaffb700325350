"""File formats.

Dataset (JSON Lines, one image per line)::

    {"id": "img0", "width": 640, "height": 480,
     "proposals": [[x, y, w, h], ...],
     "features": [[...], ...]            # or "features_file": "img0.f32"
     "gt": [[x, y, w, h], ...], "class": "car", "global": [...]}

``features_file`` names a sidecar (relative to the dataset file) of
little-endian float32 rows, ``p_i x d`` in row-major order; ``d`` is
inferred from the file size.

Score cache: one file per ordered pair, a ``<u4 p_i, <u4 p_j, <u4 count``
header followed by ``count`` records of ``(<u4 k, <u4 l, <f8 value)``.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataError
from .model import Dataset, ImageRecord, SparseScoreMatrix

_ENTRY = np.dtype([("k", "<u4"), ("l", "<u4"), ("v", "<f8")])
_HEADER = struct.Struct("<III")


def _num(v: float):
    f = float(v)
    return int(f) if f.is_integer() and abs(f) < 2**53 else f


def _rows(a: np.ndarray) -> list:
    return [[_num(v) for v in row] for row in np.asarray(a)]


def image_to_json(im: ImageRecord, features_file: str | None = None) -> dict:
    rec: dict = {"id": im.id, "width": _num(im.width), "height": _num(im.height), "proposals": _rows(im.proposals)}
    if features_file is not None:
        rec["features_file"] = features_file
    elif im.features is not None:
        rec["features"] = _rows(im.features)
    if im.ground_truth is not None:
        rec["gt"] = _rows(im.ground_truth)
    if im.class_label is not None:
        rec["class"] = im.class_label
    if im.global_descriptor is not None:
        rec["global"] = [_num(v) for v in im.global_descriptor]
    return rec


def write_dataset(dataset: Dataset, path, sidecar: bool = False) -> None:
    """Write a dataset; with ``sidecar`` features go to ``<stem>.features/<id>.f32``."""
    path = Path(path)
    lines = []
    side_dir = path.with_name(path.stem + ".features")
    for im in dataset:
        fname = None
        if sidecar and im.features is not None:
            side_dir.mkdir(parents=True, exist_ok=True)
            fname = f"{side_dir.name}/{im.id}.f32"
            np.ascontiguousarray(im.features, dtype="<f4").tofile(path.parent / fname)
        lines.append(json.dumps(image_to_json(im, fname), separators=(",", ":")))
    path.write_text("\n".join(lines) + "\n")


def _read_sidecar(path: Path, p: int, image_id: str) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"image {image_id!r}: feature sidecar {str(path)!r} not found")
    raw = np.fromfile(path, dtype="<f4")
    if raw.size % p:
        raise DataError(f"image {image_id!r}: sidecar size {raw.size} is not a multiple of p={p}")
    return raw.reshape(p, raw.size // p).astype(np.float64)


def image_from_json(rec: dict, base: Path | None = None) -> ImageRecord:
    try:
        image_id = str(rec["id"])
        width, height, proposals = rec["width"], rec["height"], rec["proposals"]
    except KeyError as exc:
        raise DataError(f"dataset record is missing field {exc.args[0]!r}") from None
    feats = rec.get("features")
    if feats is None and "features_file" in rec:
        feats = _read_sidecar((base or Path(".")) / rec["features_file"], len(proposals), image_id)
    return ImageRecord.create(
        id=image_id,
        width=width,
        height=height,
        proposals=proposals,
        features=feats,
        ground_truth=rec.get("gt"),
        class_label=rec.get("class"),
        global_descriptor=rec.get("global"),
    )


def read_dataset(path) -> Dataset:
    path = Path(path)
    images = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            try:
                images.append(image_from_json(rec, path.parent))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return Dataset(tuple(images))


# ---------------------------------------------------------------------------
# Score cache
# ---------------------------------------------------------------------------


def write_score_matrix(m: SparseScoreMatrix, path) -> None:
    rec = np.empty(m.nnz, dtype=_ENTRY)
    rec["k"], rec["l"], rec["v"] = m.k, m.l, m.values
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(m.rows, m.cols, m.nnz))
        fh.write(rec.tobytes())


def read_score_matrix(path) -> SparseScoreMatrix:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated score file")
    rows, cols, count = _HEADER.unpack_from(data)
    body = data[_HEADER.size :]
    if len(body) != count * _ENTRY.itemsize:
        raise DataError(f"{path}: expected {count} entries, found {len(body) / _ENTRY.itemsize:g}")
    rec = np.frombuffer(body, dtype=_ENTRY)
    return SparseScoreMatrix(rows, cols, rec["k"].astype(np.int64), rec["l"].astype(np.int64), rec["v"].astype(np.float64))


class ScoreCache:
    """Directory of per-pair score files, keyed by a config fingerprint."""

    def __init__(self, root, fingerprint: str):
        self.dir = Path(root) / fingerprint
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, id_i: str, id_j: str) -> Path:
        return self.dir / f"{id_i}__{id_j}.bin"

    def get(self, id_i: str, id_j: str) -> SparseScoreMatrix | None:
        p = self._path(id_i, id_j)
        return read_score_matrix(p) if p.is_file() else None

    def put(self, id_i: str, id_j: str, m: SparseScoreMatrix) -> None:
        tmp = self._path(id_i, id_j).with_suffix(".tmp")
        write_score_matrix(m, tmp)
        tmp.replace(self._path(id_i, id_j))


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=1) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg})") from None


def adjacency_lists(e: np.ndarray) -> list[list[int]]:
    return [np.flatnonzero(row).tolist() for row in np.asarray(e)]


def adjacency_matrix(lists: Iterable[Iterable[int]], n: int) -> np.ndarray:
    e = np.zeros((n, n))
    for i, row in enumerate(lists):
        e[i, list(row)] = 1.0
    return e
