"""Grey value quantisation tables."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..imagegrid import round_half_away

log = logging.getLogger(__name__)

EQUIDISTANT = "equidistant"
CLUSTERED = "clustered"
KINDS = (EQUIDISTANT, CLUSTERED)


@dataclass(frozen=True, eq=False)
class QuantTable:
    levels: np.ndarray
    kind: str = CLUSTERED

    def __post_init__(self):
        levels = np.array(self.levels, dtype=np.float64).ravel()
        if not 1 <= levels.size <= 256:
            raise ValueError(f"a table holds 1..256 levels, got {levels.size}")
        if np.any(levels < 0) or np.any(levels > 255) or not np.all(np.isfinite(levels)):
            raise ValueError("levels must lie in [0, 255]")
        if np.any(np.diff(levels) <= 0):
            raise ValueError("levels must be strictly increasing")
        if self.kind not in KINDS:
            raise ValueError(f"unknown table kind {self.kind!r}")
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)

    @property
    def k(self) -> int:
        return self.levels.size

    def level_bytes(self) -> np.ndarray:
        return round_half_away(self.levels).astype(np.uint8)

    def stored(self) -> "QuantTable":
        """The table as it survives the container: levels rounded to bytes."""
        return QuantTable(self.level_bytes().astype(np.float64), self.kind)

    def __eq__(self, other):
        if not isinstance(other, QuantTable):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.levels, other.levels)

    def __repr__(self):
        return f"QuantTable(kind={self.kind!r}, k={self.k})"


def make_equidistant(k: int) -> QuantTable:
    if not 1 <= k <= 256:
        raise ValueError(f"k must lie in [1, 256], got {k}")
    if k == 1:
        return QuantTable([127.5], EQUIDISTANT)
    return QuantTable(np.arange(k) * 255.0 / (k - 1), EQUIDISTANT)


def make_clustered(clustering) -> QuantTable:
    """Levels from the centroids of a clustering on 1-D grey value features.

    Levels that collapse onto the same byte are merged (the first one is
    kept), so the returned table may have fewer levels than clusters.
    """
    centroids = np.asarray(clustering.centroids, dtype=np.float64)
    if centroids.ndim == 2:
        if centroids.shape[1] != 1:
            raise ValueError("clustered quantisation needs 1-D grey value features")
        centroids = centroids[:, 0]
    levels = np.clip(np.sort(centroids), 0.0, 255.0)
    _, first = np.unique(round_half_away(levels), return_index=True)
    kept = levels[np.sort(first)]
    if kept.size < levels.size:
        log.info("clustered table shrank from %d to %d levels after byte rounding",
                 levels.size, kept.size)
    return QuantTable(kept, CLUSTERED)


def nearest_level(values, levels) -> np.ndarray:
    """Index of the closest level for every value, lower index on exact ties."""
    values = np.asarray(values, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    if levels.size == 1:
        return np.zeros(values.shape, dtype=np.intp)
    pos = np.clip(np.searchsorted(levels, values), 1, levels.size - 1)
    lo = levels[pos - 1]
    hi = levels[pos]
    return np.where(values - lo <= hi - values, pos - 1, pos).astype(np.intp)


def quantize(values, table: QuantTable) -> np.ndarray:
    return nearest_level(values, table.levels)
