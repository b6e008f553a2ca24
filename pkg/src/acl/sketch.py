"""Dataset sketches z = (1/n) sum_i Psi(x_i) and their aggregation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, IncompatibleSketchError
from .features import FeatureMap, apply_map, contribution_bits

CHUNK_ROWS = 2048


@dataclass(frozen=True, eq=False)
class Sketch:
    """Averaged feature vector with its sample count.

    ``values`` stores the mean (not the sum) so magnitudes stay O(1).
    """

    values: np.ndarray
    count: int
    map_hash: str

    def __post_init__(self):
        v = np.array(self.values, dtype=complex, ndmin=1)
        if self.count < 0:
            raise ValueError("count must be nonnegative")
        if self.count == 0 and np.any(v != 0):
            raise ValueError("an empty sketch must have zero values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "count", int(self.count))

    @property
    def m(self) -> int:
        return self.values.size

    @classmethod
    def empty(cls, fmap: FeatureMap) -> Sketch:
        return cls(np.zeros(fmap.m, dtype=complex), 0, fmap.map_hash)

    def scaled(self, factor) -> Sketch:
        """Rescaled values, e.g. by 1/F_1 after sketching with a raw map."""
        return Sketch(self.values * factor, self.count, f"{self.map_hash}*{complex(factor)!r}")

    def __add__(self, other: Sketch) -> Sketch:
        return merge(self, other)


def _tree_sum(parts):
    parts = list(parts)
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _feature_sum(fmap: FeatureMap, X: np.ndarray) -> np.ndarray:
    # per-chunk sums combined pairwise; n may be large
    chunks = (apply_map(fmap, X[i:i + CHUNK_ROWS]).sum(axis=0)
              for i in range(0, X.shape[0], CHUNK_ROWS))
    return _tree_sum(chunks)


def _as_dataset(fmap: FeatureMap, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise DimensionError("dataset must be a 2-d array (n, d)")
    if X.shape[0] == 0:
        raise DataError("cannot sketch an empty dataset")
    if X.shape[1] != fmap.d:
        raise DimensionError(f"dataset has {X.shape[1]} columns, map expects {fmap.d}")
    return X


def sketch_dataset(fmap: FeatureMap, X) -> Sketch:
    X = _as_dataset(fmap, X)
    n = X.shape[0]
    return Sketch(_feature_sum(fmap, X) / n, n, fmap.map_hash)


def merge(a: Sketch, b: Sketch) -> Sketch:
    if a.map_hash != b.map_hash or a.m != b.m:
        raise IncompatibleSketchError("sketches come from different feature maps")
    if b.count == 0:
        return a
    if a.count == 0:
        return b
    n = a.count + b.count
    return Sketch((a.count * a.values + b.count * b.values) / n, n, a.map_hash)


def merge_all(sketches) -> Sketch:
    return _tree_sum(list(sketches))


def simulate_nodes(fmap: FeatureMap, X, nodes: int, float_bits: int = 64):
    """Round-robin the rows over ``nodes`` sensors, sketch locally, aggregate.

    Returns ``(sketch, total_bits)`` where ``total_bits`` counts every
    per-sample contribution sent to the aggregator.
    """
    if nodes < 1:
        raise ValueError("nodes must be >= 1")
    X = _as_dataset(fmap, X)
    if nodes == 1:
        z = sketch_dataset(fmap, X)
    else:
        parts = [sketch_dataset(fmap, X[k::nodes]) for k in range(nodes) if k < X.shape[0]]
        z = merge_all(parts)
    return z, X.shape[0] * contribution_bits(fmap, float_bits)


# --- persistence ---------------------------------------------------------

def sketch_to_json(z: Sketch, fmap: FeatureMap) -> dict:
    if z.map_hash != fmap.map_hash:
        raise IncompatibleSketchError("sketch was not produced by this map")
    return {
        "m": z.m,
        "count": z.count,
        "map": fmap.to_json(),
        "map_hash": z.map_hash,
        "values": [[float(v.real), float(v.imag)] for v in z.values],
    }


def sketch_from_json(obj: dict):
    """Return ``(sketch, feature_map)`` rebuilt from a JSON record."""
    try:
        fmap = FeatureMap.from_json(obj["map"])
        vals = np.asarray(obj["values"], dtype=float)
        count = int(obj["count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed sketch record: {exc}") from exc
    if vals.ndim != 2 or vals.shape[1] != 2 or vals.shape[0] != int(obj.get("m", vals.shape[0])):
        raise DataError("sketch values must be an m x 2 array of [re, im]")
    if vals.shape[0] != fmap.m:
        raise DimensionError(f"sketch has {vals.shape[0]} entries but its map has m={fmap.m}")
    return Sketch(vals[:, 0] + 1j * vals[:, 1], count, fmap.map_hash), fmap


def save_sketch(path, z: Sketch, fmap: FeatureMap):
    Path(path).write_text(json.dumps(sketch_to_json(z, fmap)))


def load_sketch(path):
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read sketch {path}: {exc}") from exc
    return sketch_from_json(obj)


def load_dataset(path, header: bool = False) -> np.ndarray:
    """CSV with one sample per row and d numeric columns."""
    try:
        X = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if X.size == 0:
        raise DataError(f"dataset {path} is empty")
    return X
