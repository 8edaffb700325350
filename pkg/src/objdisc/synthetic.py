"""Synthetic datasets with a planted object per image.

Every image gets a class and one *object* proposal whose feature is the
class prototype plus Gaussian noise and whose box has a class-specific size
(up to log-normal jitter).  The remaining proposals are distractors:

* ``context`` boxes enclosing the object, whose features mix the prototype
  and random noise in proportion to the area the object covers,
* ``parts`` boxes inside the object, with features half-way between the
  prototype and random noise,
* random boxes with unrelated random features.

The object box is the ground truth.  Optional outlier images carry no object
and no ground truth.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from .model import Dataset, ImageRecord


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 60
    classes: int = 3
    proposals: int = 20
    dim: int = 32
    signal: float = 1.0
    noise: float = 0.3
    jitter: float = 0.1
    context: int = 2
    parts: int = 2
    outliers: int = 0
    width: float = 640.0
    height: float = 480.0
    descriptor_noise: float = 0.3

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.classes < 1:
            raise ValueError("classes must be >= 1")
        if self.proposals < 2:
            raise ValueError("proposals must be >= 2")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.context < 0 or self.parts < 0:
            raise ValueError("context and parts must be nonnegative")
        if not 0 <= self.outliers < self.n:
            raise ValueError("outliers must be in [0, n)")
        if min(self.signal, self.width, self.height) <= 0 or min(self.noise, self.jitter, self.descriptor_noise) < 0:
            raise ValueError("signal, width and height must be positive; noise terms nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def _clip_box(x, y, w, h, W, H):
    x0, y0 = max(0.0, x), max(0.0, y)
    x1, y1 = min(W, x + w), min(H, y + h)
    return [x0, y0, max(x1 - x0, 1.0), max(y1 - y0, 1.0)]


def _random_box(rng, W, H):
    w = W * rng.uniform(0.1, 0.7)
    h = H * rng.uniform(0.1, 0.7)
    return [rng.uniform(0, W - w), rng.uniform(0, H - h), w, h]


def generate_synthetic(spec: SyntheticSpec | None = None, seed: int = 0) -> Dataset:
    spec = spec or SyntheticSpec()
    rng = np.random.default_rng(seed)
    W, H = float(spec.width), float(spec.height)
    d = spec.dim
    prototypes = spec.signal * rng.standard_normal((spec.classes, d))
    # class-specific object size as a fraction of the image
    base_size = rng.uniform(0.22, 0.4, size=(spec.classes, 2))

    # structured distractors are trimmed to fit beside the object
    n_context = min(spec.context, spec.proposals - 1)
    n_parts = min(spec.parts, spec.proposals - 1 - n_context)

    labels = np.arange(spec.n) % spec.classes
    rng.shuffle(labels)
    is_outlier = np.zeros(spec.n, dtype=bool)
    if spec.outliers:
        is_outlier[rng.choice(spec.n, spec.outliers, replace=False)] = True

    images = []
    for i in range(spec.n):
        c = int(labels[i])
        boxes: list[list[float]] = []
        feats: list[np.ndarray] = []
        gt = None
        if not is_outlier[i]:
            scale = np.exp(spec.jitter * rng.standard_normal(2))
            w = min(W * base_size[c, 0] * scale[0], 0.5 * W)
            h = min(H * base_size[c, 1] * scale[1], 0.5 * H)
            x = rng.uniform(0, W - w)
            y = rng.uniform(0, H - h)
            obj = [x, y, w, h]
            obj_feat = prototypes[c] + spec.noise * rng.standard_normal(d)
            boxes.append(obj)
            feats.append(obj_feat)
            gt = [obj]
            for _ in range(n_context):
                f = rng.uniform(1.6, 2.0, size=2)
                cw, ch = w * f[0], h * f[1]
                cx = x + w / 2 + rng.uniform(-0.1, 0.1) * w
                cy = y + h / 2 + rng.uniform(-0.1, 0.1) * h
                box = _clip_box(cx - cw / 2, cy - ch / 2, cw, ch, W, H)
                share = min(w * h / (box[2] * box[3]), 1.0)
                boxes.append(box)
                feats.append(share * prototypes[c] + (1 - share) * spec.signal * rng.standard_normal(d))
            for _ in range(n_parts):
                f = rng.uniform(0.4, 0.6, size=2)
                pw, ph = w * f[0], h * f[1]
                boxes.append([x + rng.uniform(0, w - pw), y + rng.uniform(0, h - ph), pw, ph])
                feats.append(0.5 * prototypes[c] + 0.5 * spec.signal * rng.standard_normal(d))
        while len(boxes) < spec.proposals:
            boxes.append(_random_box(rng, W, H))
            feats.append(spec.signal * rng.standard_normal(d))
        order = rng.permutation(spec.proposals)
        boxes_arr = np.array(boxes)[order]
        feats_arr = np.array(feats)[order]
        anchor = feats[0] if not is_outlier[i] else spec.signal * rng.standard_normal(d)
        glob = anchor + spec.descriptor_noise * rng.standard_normal(d)
        images.append(
            ImageRecord.create(
                id=f"img{i:05d}",
                width=W,
                height=H,
                proposals=boxes_arr,
                features=feats_arr,
                ground_truth=gt,
                class_label=f"class{c}",
                global_descriptor=glob,
            )
        )
    return Dataset(tuple(images))
