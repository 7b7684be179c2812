"""Per-class centroid models and distance-ranked classification.

Training collapses each class's feature vectors into a single mean or median
centroid; classification ranks every trained class by its centroid's distance
to the unseen vector, smallest first. Six distance measures are supported so
sweeps can search for the most precise one per corpus.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelFormatError
from .features import FeatureVector
from .index import WeaknessClass

MAGIC = b"CWTS"
FORMAT_VERSION = 1

METRICS = ("eucl", "cheb", "mink", "cos", "hamming", "diff")


@dataclass
class ClusterModel:
    centroid: np.ndarray
    count: int
    kind: str  # mean | median

    def __post_init__(self):
        self.centroid = np.asarray(self.centroid, dtype=np.float64)
        if self.count < 1:
            raise ValueError("cluster count must be >= 1")
        if not np.all(np.isfinite(self.centroid)):
            raise ValueError("centroid contains non-finite values")


@dataclass
class TrainingSet:
    classes: dict[WeaknessClass, ClusterModel]
    config_hash: str

    def __post_init__(self):
        if not self.config_hash:
            raise ValueError("config_hash must be non-empty")
        dims = {len(m.centroid) for m in self.classes.values()}
        if len(dims) > 1:
            raise ConfigError(f"mixed centroid dimensions: {sorted(dims)}")

    @property
    def dimension(self) -> int:
        return len(next(iter(self.classes.values())).centroid) if self.classes else 0


@dataclass
class ResultSet:
    """Classes ranked most-likely first; scores are distances, ascending."""

    ranked: list[tuple[WeaknessClass, float]] = field(default_factory=list)

    def top(self, k: int = 1) -> list[WeaknessClass]:
        return [wc for wc, _ in self.ranked[:k]]

    def best(self) -> tuple[WeaknessClass, float]:
        return self.ranked[0]


def train(vectors: list[tuple[WeaknessClass, FeatureVector]],
          kind: str = "mean", config_hash: str = "unconfigured") -> TrainingSet:
    """Aggregate labeled feature vectors into per-class centroids.

    Retraining with an extended vector list recomputes the centroids exactly;
    nothing incremental is cached, so there is no drift.
    """
    if kind not in ("mean", "median"):
        raise ConfigError(f"unknown cluster kind {kind!r}")
    if not vectors:
        raise ConfigError("cannot train on an empty vector list")
    dims = {fv.d for _, fv in vectors}
    if len(dims) != 1:
        raise ConfigError(f"mixed feature dimensions: {sorted(dims)}")
    grouped: dict[WeaknessClass, list[np.ndarray]] = {}
    for wc, fv in vectors:
        grouped.setdefault(wc, []).append(fv.values)
    aggregate = np.mean if kind == "mean" else np.median
    classes = {
        wc: ClusterModel(aggregate(np.vstack(members), axis=0), len(members), kind)
        for wc, members in grouped.items()
    }
    return TrainingSet(classes, config_hash)


def distance(a, b, metric: str = "eucl", p: float = 3.0, tol: float = 1e-4) -> float:
    """Distance between two equal-length vectors under the chosen measure.

    eucl/cheb/mink are true metrics; cos is 1 - cosine similarity (zero
    vectors count as maximally distant, 1); hamming counts coordinates that
    differ by more than `tol`; diff sums those differences (a thresholded L1
    that collapses to plain L1 at tol=0).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if metric == "eucl":
        return float(np.linalg.norm(a - b))
    if metric == "cheb":
        return float(np.max(np.abs(a - b))) if a.size else 0.0
    if metric == "mink":
        if p < 1:
            raise ConfigError("minkowski exponent must be >= 1")
        return float(np.sum(np.abs(a - b) ** p) ** (1.0 / p))
    if metric == "cos":
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            return 1.0
        return float(1.0 - np.dot(a, b) / (na * nb))
    if metric == "hamming":
        return float(np.count_nonzero(np.abs(a - b) > tol))
    if metric == "diff":
        delta = np.abs(a - b)
        return float(np.sum(delta[delta > tol]))
    raise ConfigError(f"unknown metric {metric!r}")


def classify(v: FeatureVector, ts: TrainingSet, metric: str = "eucl",
             p: float = 3.0, tol: float = 1e-4) -> ResultSet:
    """Rank every trained class by distance to `v`, ascending.

    Ties break by class id so runs are reproducible no matter how the
    training dictionary happened to be ordered.
    """
    if not ts.classes:
        raise ConfigError("training set is empty")
    if v.d != ts.dimension:
        raise ConfigError(
            f"vector dimension {v.d} does not match training set {ts.dimension}")
    scored = [
        (wc, distance(v.values, model.centroid, metric, p, tol))
        for wc, model in ts.classes.items()
    ]
    scored.sort(key=lambda item: (item[1], item[0].id))
    return ResultSet(scored)


# --- persistence (see docs/model-format.md) ----------------------------------

def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _unpack_str(buf: memoryview, off: int) -> tuple[str, int]:
    (n,) = struct.unpack_from("<H", buf, off)
    off += 2
    return bytes(buf[off: off + n]).decode("utf-8"), off + n


def save_training_set(ts: TrainingSet, file) -> None:
    """Serialize to the versioned little-endian container with magic CWTS."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HII", FORMAT_VERSION, ts.dimension, len(ts.classes))
    out += _pack_str(ts.config_hash)
    for wc in sorted(ts.classes, key=lambda w: (w.kind, w.id)):
        model = ts.classes[wc]
        out += _pack_str(wc.kind)
        out += _pack_str(wc.id)
        out += struct.pack("<BI", 0 if model.kind == "mean" else 1, model.count)
        out += struct.pack(f"<{len(model.centroid)}d", *model.centroid)
    Path(file).write_bytes(bytes(out))


def load_training_set(file) -> TrainingSet:
    buf = memoryview(Path(file).read_bytes())
    if bytes(buf[:4]) != MAGIC:
        raise ModelFormatError(f"{file}: bad magic (expected CWTS)")
    version, d, n_classes = struct.unpack_from("<HII", buf, 4)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{file}: unsupported version {version}")
    off = 4 + 10
    config_hash, off = _unpack_str(buf, off)
    classes: dict[WeaknessClass, ClusterModel] = {}
    for _ in range(n_classes):
        kind, off = _unpack_str(buf, off)
        class_id, off = _unpack_str(buf, off)
        cluster_kind, count = struct.unpack_from("<BI", buf, off)
        off += 5
        centroid = np.frombuffer(buf, dtype="<f8", count=d, offset=off).copy()
        off += 8 * d
        classes[WeaknessClass(kind, class_id)] = ClusterModel(
            centroid, count, "mean" if cluster_kind == 0 else "median")
    return TrainingSet(classes, config_hash)
