"""CorLoc evaluation and global-descriptor neighbor prefiltering."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DataError
from .model import Dataset, Rect, pairwise_iou

IOU_THRESHOLD = 0.5
UNLABELED = "<unlabeled>"


@dataclass(frozen=True)
class CorLocReport:
    setting: str
    value: float  # percent
    num_correct: int
    num_images: int
    per_class: dict[str, float] = field(default_factory=dict)
    per_class_counts: dict[str, tuple[int, int]] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"CorLoc ({self.setting}): {self.value:.2f}%  [{self.num_correct}/{self.num_images} images]"]
        for c in sorted(self.per_class):
            ok, tot = self.per_class_counts[c]
            lines.append(f"  {c}: {self.per_class[c]:.2f}%  [{ok}/{tot}]")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "correct", "images", "corloc"])
        for c in sorted(self.per_class):
            ok, tot = self.per_class_counts[c]
            w.writerow([c, ok, tot, f"{self.per_class[c]:.4f}"])
        w.writerow([f"ALL ({self.setting})", self.num_correct, self.num_images, f"{self.value:.4f}"])
        return buf.getvalue()


def correct_localizations(predictions: Mapping[str, Rect], dataset: Dataset) -> dict[str, bool]:
    """Per image: does the prediction overlap some ground-truth box with IoU > 0.5?

    Images with no prediction or no ground truth count as incorrect.
    """
    ids = set(dataset.ids)
    for pid in predictions:
        if pid not in ids:
            raise DataError(f"prediction for unknown image id {pid!r}")
    out = {}
    for im in dataset:
        pred = predictions.get(im.id)
        if pred is None or im.ground_truth is None:
            out[im.id] = False
            continue
        box = pred.as_array()[None, :] if isinstance(pred, Rect) else np.asarray(pred, float).reshape(1, 4)
        out[im.id] = bool(np.any(pairwise_iou(box, im.ground_truth) > IOU_THRESHOLD))
    return out


def corloc(predictions: Mapping[str, Rect], dataset: Dataset, setting: str = "mixed") -> CorLocReport:
    """CorLoc in percent.

    ``mixed`` is the fraction of correct images over the whole dataset;
    ``separate`` is the unweighted mean of the per-class values.
    """
    if setting not in ("mixed", "separate"):
        raise ValueError(f"setting must be 'mixed' or 'separate', got {setting!r}")
    ok = correct_localizations(predictions, dataset)
    counts: dict[str, list[int]] = defaultdict(lambda: [0, 0])
    for im in dataset:
        c = im.class_label if im.class_label is not None else UNLABELED
        counts[c][0] += int(ok[im.id])
        counts[c][1] += 1
    per_class = {c: 100.0 * a / b for c, (a, b) in counts.items()}
    n_ok = sum(ok.values())
    if setting == "mixed":
        value = 100.0 * n_ok / len(dataset)
    else:
        value = float(np.mean(list(per_class.values())))
    return CorLocReport(
        setting=setting,
        value=value,
        num_correct=n_ok,
        num_images=len(dataset),
        per_class=per_class,
        per_class_counts={c: (a, b) for c, (a, b) in counts.items()},
    )


def prefilter_neighbors(dataset: Dataset, k: int) -> np.ndarray:
    """Boolean candidate mask: row ``i`` marks the ``k`` images nearest to ``i``
    in Euclidean distance between global descriptors (ties by index)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    missing = [im.id for im in dataset if im.global_descriptor is None]
    if missing:
        raise DataError(f"image {missing[0]!r} has no global descriptor")
    g = np.stack([im.global_descriptor for im in dataset])
    n = g.shape[0]
    d = np.sqrt(((g[:, None, :] - g[None, :, :]) ** 2).sum(axis=-1))
    np.fill_diagonal(d, np.inf)
    k = min(k, n - 1)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, n), dtype=bool)
    np.put_along_axis(mask, order, True, axis=1)
    return mask
