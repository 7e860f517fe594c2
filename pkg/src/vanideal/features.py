"""Labeled point clouds: loading, PCA, tanh rescaling and synthetic manifolds.

The preprocessing order is fixed: PCA first, then tanh rescaling fitted in
PCA space, so that the vanishing-ideal algorithms see points in (-1, 1)^r.
All statistics are fitted on the training split and frozen.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .rng import stream

__all__ = [
    "Dataset",
    "PcaMap",
    "RescaleMap",
    "Preprocessor",
    "load_dataset",
    "write_dataset",
    "fit_pca",
    "apply_pca",
    "fit_tanh",
    "apply_tanh",
    "fit_preprocessor",
    "synth_manifolds",
    "SHAPES",
]

SIGMA_FLOOR = 1e-6
_BELOW_ONE = np.nextafter(1.0, 0.0)


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    split: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int).ravel()
        if self.points.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.points.shape[0]} points but {self.labels.shape[0]} labels"
            )
        if np.any(self.labels < 0):
            raise DataError("labels must be non-negative class ids")
        if self.split is not None:
            self.split = np.asarray(self.split, dtype=str).ravel()
            if self.split.shape != self.labels.shape:
                raise DataError("split column length mismatch")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    def subset(self, mask) -> "Dataset":
        split = None if self.split is None else self.split[mask]
        return Dataset(self.points[mask], self.labels[mask], split)

    def part(self, name: str) -> "Dataset":
        """Rows tagged ``name``; without a split column every row is training data."""
        if self.split is None:
            if name == "train":
                return self
            return self.subset(np.zeros(len(self), dtype=bool))
        return self.subset(self.split == name)

    def class_points(self, n_classes: int | None = None) -> list[np.ndarray]:
        K = self.n_classes if n_classes is None else n_classes
        return [self.points[self.labels == k] for k in range(K)]


def load_dataset(path, delimiter: str = ",") -> Dataset:
    """Read a delimited file with columns f0..f{D-1}, label and optional split."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if "label" not in header:
            raise DataError(f"{path}: missing label column")
        feat_cols = sorted(
            (int(h[1:]), j) for j, h in enumerate(header) if h.startswith("f") and h[1:].isdigit()
        )
        if [k for k, _ in feat_cols] != list(range(len(feat_cols))) or not feat_cols:
            raise DataError(f"{path}: feature columns must be f0..f{{D-1}}")
        label_col = header.index("label")
        split_col = header.index("split") if "split" in header else None
        points, labels, split = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            vals = []
            for k, j in feat_cols:
                try:
                    v = float(row[j])
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric value {row[j]!r} in column f{k}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: non-finite value in column f{k}")
                vals.append(v)
            try:
                lab = int(row[label_col])
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: non-integer label {row[label_col]!r}"
                ) from None
            points.append(vals)
            labels.append(lab)
            if split_col is not None:
                split.append(row[split_col].strip())
    if not points:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        np.array(points), np.array(labels), np.array(split) if split_col is not None else None
    )


def write_dataset(data: Dataset, path, delimiter: str = ",") -> None:
    header = [f"f{j}" for j in range(data.dim)] + ["label"]
    if data.split is not None:
        header.append("split")
    lines = [delimiter.join(header)]
    for i in range(len(data)):
        row = [repr(float(v)) for v in data.points[i]] + [str(int(data.labels[i]))]
        if data.split is not None:
            row.append(str(data.split[i]))
        lines.append(delimiter.join(row))
    from .bundle import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class PcaMap:
    mean: np.ndarray
    components: np.ndarray

    @property
    def r(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


def fit_pca(points, r: int) -> PcaMap:
    """Top-r principal directions of the mean-centered data (SVD)."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    m, D = X.shape
    if not 1 <= r <= min(m, D):
        raise ConfigError(f"PCA dimension {r} outside [1, {min(m, D)}]")
    mean = X.mean(axis=0)
    _, s, Vt = np.linalg.svd(X - mean, full_matrices=False)
    tol = max(m, D) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if s[r - 1] <= tol:
        raise DataError(f"centered data has rank below {r}; reduce the PCA dimension")
    comps = Vt[:r].copy()
    # deterministic sign: largest-magnitude entry of each component positive
    flip = np.sign(comps[np.arange(r), np.argmax(np.abs(comps), axis=1)])
    comps *= flip[:, None]
    return PcaMap(mean, comps)


def apply_pca(pca: PcaMap, points) -> np.ndarray:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != pca.input_dim:
        raise DataError(f"points have dimension {X.shape[1]}, PCA expects {pca.input_dim}")
    return (X - pca.mean) @ pca.components.T


@dataclass
class RescaleMap:
    mu: np.ndarray
    sigma: np.ndarray


def fit_tanh(points) -> RescaleMap:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    mu = X.mean(axis=0)
    sigma = np.maximum(X.std(axis=0), SIGMA_FLOOR)
    return RescaleMap(mu, sigma)


def apply_tanh(rescale: RescaleMap, points) -> np.ndarray:
    X = np.atleast_2d(np.asarray(points, dtype=float))
    if X.shape[1] != rescale.mu.shape[0]:
        raise DataError(
            f"points have dimension {X.shape[1]}, rescaling expects {rescale.mu.shape[0]}"
        )
    # tanh rounds to +-1 beyond |x| ~ 19; keep outputs strictly inside (-1, 1)
    return np.clip(np.tanh((X - rescale.mu) / rescale.sigma), -_BELOW_ONE, _BELOW_ONE)


@dataclass
class Preprocessor:
    """Optional PCA followed by optional tanh rescaling."""

    input_dim: int
    pca: PcaMap | None = None
    rescale: RescaleMap | None = None

    def __call__(self, points) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        if X.shape[1] != self.input_dim:
            raise DataError(f"points have dimension {X.shape[1]}, model expects {self.input_dim}")
        if self.pca is not None:
            X = apply_pca(self.pca, X)
        if self.rescale is not None:
            X = apply_tanh(self.rescale, X)
        return X

    @property
    def output_dim(self) -> int:
        if self.pca is not None:
            return self.pca.r
        return self.input_dim


def fit_preprocessor(points, pca_dims: int | None = 128, rescale: bool = True) -> Preprocessor:
    """Fit PCA (skipped when ``pca_dims`` is None or >= the input dimension) then tanh."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    pca = None
    if pca_dims is not None and pca_dims < X.shape[1]:
        pca = fit_pca(X, pca_dims)
        X = apply_pca(pca, X)
    resc = fit_tanh(X) if rescale else None
    return Preprocessor(input_dim=np.asarray(points).shape[1], pca=pca, rescale=resc)


# --- synthetic manifolds ---------------------------------------------------


def _circle(rng, n, radius=1.0, center=(0.0, 0.0)):
    t = rng.uniform(0.0, 2 * np.pi, n)
    c = np.asarray(center, dtype=float)
    return np.c_[radius * np.cos(t), radius * np.sin(t)] + c


def _segment(rng, n, start=(-1.0, 0.0), end=(1.0, 0.0)):
    a, b = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    t = rng.uniform(0.0, 1.0, n)[:, None]
    return a + t * (b - a)


def _sphere(rng, n, radius=1.0, center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, dtype=float)
    g = rng.standard_normal((n, c.shape[0]))
    return radius * g / np.linalg.norm(g, axis=1, keepdims=True) + c


def _lines(rng, n, segments=(((-1.0, -1.0), (1.0, 1.0)), ((-1.0, 1.0), (1.0, -1.0)))):
    segs = [(np.asarray(a, dtype=float), np.asarray(b, dtype=float)) for a, b in segments]
    lengths = np.array([np.linalg.norm(b - a) for a, b in segs])
    which = rng.choice(len(segs), size=n, p=lengths / lengths.sum())
    t = rng.uniform(0.0, 1.0, n)
    starts = np.array([segs[k][0] for k in which])
    ends = np.array([segs[k][1] for k in which])
    return starts + t[:, None] * (ends - starts)


def _torus_curve(rng, n, p=2, q=3, R=0.6, r=0.3):
    t = rng.uniform(0.0, 2 * np.pi, n)
    rad = R + r * np.cos(q * t)
    return np.c_[rad * np.cos(p * t), rad * np.sin(p * t), r * np.sin(q * t)]


SHAPES = {
    "circle": _circle,
    "segment": _segment,
    "sphere": _sphere,
    "lines": _lines,
    "torus_curve": _torus_curve,
}


def synth_manifolds(classes: Sequence[dict], noise: float = 0.0, seed: int = 0) -> Dataset:
    """Sample labeled points on simple varieties.

    Each entry of ``classes`` describes one class: ``shape`` (a key of
    ``SHAPES``), ``count`` training points, optional ``test_count``, and the
    shape's keyword parameters. Class k gets label k. Points of lower
    ambient dimension are zero-padded to the widest shape. Gaussian noise
    with standard deviation ``noise`` is added to every coordinate.
    """
    if noise < 0:
        raise ConfigError("noise must be >= 0")
    blocks = []
    for k, spec in enumerate(classes):
        spec = dict(spec)
        shape = spec.pop("shape", None)
        if shape not in SHAPES:
            raise ConfigError(f"unsupported shape {shape!r}; choose from {sorted(SHAPES)}")
        count = int(spec.pop("count", 0))
        test_count = int(spec.pop("test_count", 0))
        if count < 1 or test_count < 0:
            raise ConfigError(f"class {k}: count must be >= 1")
        for split, n in (("train", count), ("test", test_count)):
            if n == 0:
                continue
            rng = stream(seed, "synth", k, split)
            try:
                pts = SHAPES[shape](rng, n, **spec)
            except TypeError as exc:
                raise ConfigError(f"class {k}: bad parameters for {shape}: {exc}") from exc
            blocks.append((pts, k, split, stream(seed, "noise", k, split)))
    dim = max(b[0].shape[1] for b in blocks)
    points, labels, splits = [], [], []
    for pts, k, split, nrng in blocks:
        pad = np.zeros((pts.shape[0], dim))
        pad[:, : pts.shape[1]] = pts
        if noise > 0:
            pad = pad + noise * nrng.standard_normal(pad.shape)
        points.append(pad)
        labels.append(np.full(pts.shape[0], k))
        splits.append(np.full(pts.shape[0], split))
    return Dataset(np.vstack(points), np.concatenate(labels), np.concatenate(splits))
