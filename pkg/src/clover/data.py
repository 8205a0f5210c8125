"""Dataset construction: synthetic generators, CSV round-trips, splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    """Feature matrix in [0,1]^d with optional integer labels."""

    X: np.ndarray
    y: np.ndarray | None
    num_classes: int
    name: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)
            if len(self.y) != len(self.X):
                raise ValueError("label count does not match sample count")
            if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
                raise ValueError("label out of range")

    def __len__(self):
        return len(self.X)

    @property
    def dimension(self):
        return self.X.shape[1]

    def subset(self, idx, name=None):
        y = None if self.y is None else self.y[idx]
        return Dataset(self.X[idx], y, self.num_classes, name or self.name)


@dataclass
class SyntheticSpec:
    kind: str = "blobs"  # blobs | rings
    num_classes: int = 3
    dimension: int = 8
    samples_per_class: int = 200
    spread: float = 0.08
    seed: int = 0

    def validate(self):
        if self.kind not in ("blobs", "rings"):
            raise ValueError(f"unknown synthetic kind: {self.kind!r}")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be at least 1")
        if self.spread <= 0:
            raise ValueError("spread must be positive")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.dimension < 1:
            raise ValueError("need at least 1 dimension")


def generate_synthetic(spec):
    """Build a labeled dataset inside the unit cube.

    blobs: one Gaussian cluster per class around a random center in
    [0.25, 0.75]^d. rings: classes on concentric circles in the first two
    dimensions (noise-padded extra dimensions). Everything is clamped to
    [0,1], deterministic per spec.seed, with exactly samples_per_class rows
    per class.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    per = spec.samples_per_class
    blocks = []
    labels = []
    if spec.kind == "blobs":
        centers = rng.uniform(0.25, 0.75, size=(spec.num_classes, spec.dimension))
        for c in range(spec.num_classes):
            pts = centers[c] + rng.normal(0.0, spec.spread, size=(per, spec.dimension))
            blocks.append(pts)
            labels.append(np.full(per, c))
    else:
        for c in range(spec.num_classes):
            radius = 0.1 + 0.35 * (c + 1) / spec.num_classes
            theta = rng.uniform(0.0, 2.0 * np.pi, size=per)
            ring = np.column_stack(
                [0.5 + radius * np.cos(theta), 0.5 + radius * np.sin(theta)]
            )
            ring += rng.normal(0.0, spec.spread, size=ring.shape)
            if spec.dimension > 2:
                pad = 0.5 + rng.normal(0.0, spec.spread, size=(per, spec.dimension - 2))
                ring = np.hstack([ring, pad])
            elif spec.dimension == 1:
                ring = ring[:, :1]
            blocks.append(ring)
            labels.append(np.full(per, c))
    X = np.clip(np.vstack(blocks), 0.0, 1.0)
    y = np.concatenate(labels)
    name = f"{spec.kind}-c{spec.num_classes}-d{spec.dimension}"
    return Dataset(X, y, spec.num_classes, name=name)


def minmax_scale(X):
    """Rescale each column into [0,1]; constant columns map to 0.0."""
    if len(X) == 0:
        return X
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    out = np.zeros_like(X)
    moving = span > 0
    out[:, moving] = (X[:, moving] - lo[moving]) / span[moving]
    return out


def save_csv(data, path):
    """Write `f0..f{d-1}[,label]` rows with full-precision floats."""
    path = Path(path)
    header = [f"f{i}" for i in range(data.dimension)]
    if data.y is not None:
        header.append("label")
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.X[i]]
            if data.y is not None:
                row.append(str(int(data.y[i])))
            writer.writerow(row)


def load_csv(path, num_classes=None, normalization="none"):
    """Read a CSV written by save_csv (or hand-made in the same shape).

    Parse failures raise ValueError naming the 1-based line number. When
    num_classes is given, labels are range-checked against it during the
    parse; otherwise it is inferred as max(label) + 1.
    """
    if normalization not in ("none", "minmax"):
        raise ValueError(f"unknown normalization: {normalization!r}")
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}, line 1: empty file") from None
        has_label = bool(header) and header[-1].strip().lower() == "label"
        dim = len(header) - (1 if has_label else 0)
        expected = [f"f{i}" for i in range(dim)]
        if dim < 1 or [h.strip() for h in header[:dim]] != expected:
            raise ValueError(f"{path}, line 1: malformed header")
        feats = []
        labels = [] if has_label else None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                feats.append([float(cell) for cell in row[:dim]])
            except ValueError:
                raise ValueError(f"{path}, line {lineno}: non-numeric feature") from None
            if has_label:
                try:
                    label = int(row[dim])
                except ValueError:
                    raise ValueError(
                        f"{path}, line {lineno}: non-integer label"
                    ) from None
                if label < 0 or (num_classes is not None and label >= num_classes):
                    raise ValueError(f"{path}, line {lineno}: label out of range")
                labels.append(label)
    X = np.array(feats, dtype=np.float64) if feats else np.zeros((0, dim))
    if normalization == "minmax":
        X = minmax_scale(X)
    y = np.array(labels, dtype=np.int64) if has_label else None
    if num_classes is None:
        num_classes = int(y.max()) + 1 if (y is not None and len(y)) else 0
    return Dataset(X, y, num_classes, name=path.stem)


def split(data, fractions, rng):
    """Partition into (train, val, test) parts.

    Val and test sizes are floored, the remainder goes to train. The
    permutation comes from rng; each part then keeps its samples in their
    original dataset order.
    """
    if len(data) < 3:
        raise ValueError("need at least 3 samples to split")
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr):
        raise ValueError("fractions must be three non-negative numbers")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    n = len(data)
    n_val = int(n * fr[1])
    n_test = int(n * fr[2])
    perm = rng.permutation(n)
    val_idx = np.sort(perm[:n_val])
    test_idx = np.sort(perm[n_val : n_val + n_test])
    train_idx = np.sort(perm[n_val + n_test :])
    return (
        data.subset(train_idx, data.name + "/train"),
        data.subset(val_idx, data.name + "/val"),
        data.subset(test_idx, data.name + "/test"),
    )
