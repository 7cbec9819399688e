"""
List-mode event containers.

An EventList keeps its events as parallel numpy columns so that the projector
kernels can take them without copying.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import BinIndexError, DegenerateLorError, DetectorIndexError, DimensionError


@dataclass(frozen=True)
class Event:
    det_a: int
    det_b: int
    tof_bin: int
    multiplier: float = 1.0


class EventList:
    """Ordered detected coincidences; order is preserved by every operation."""

    def __init__(self, det_a, det_b, tof_bin, multiplier=None):
        self.det_a = np.ascontiguousarray(det_a, dtype=np.int64)
        self.det_b = np.ascontiguousarray(det_b, dtype=np.int64)
        self.tof_bin = np.ascontiguousarray(tof_bin, dtype=np.int64)
        if multiplier is None:
            multiplier = np.ones(self.det_a.shape[0])
        self.multiplier = np.ascontiguousarray(multiplier, dtype=np.float64)

        n = self.det_a.shape[0]
        for name in ('det_b', 'tof_bin', 'multiplier'):
            column = getattr(self, name)
            if column.ndim != 1 or column.shape[0] != n:
                raise DimensionError(f"Event column {name} has length {column.shape[0]}, expected {n}")

    @classmethod
    def empty(cls) -> 'EventList':
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def from_events(cls, events) -> 'EventList':
        events = list(events)
        return cls(
            [e.det_a for e in events],
            [e.det_b for e in events],
            [e.tof_bin for e in events],
            [e.multiplier for e in events],
        )

    def __len__(self):
        return self.det_a.shape[0]

    def __getitem__(self, t) -> Event:
        return Event(int(self.det_a[t]), int(self.det_b[t]), int(self.tof_bin[t]),
                     float(self.multiplier[t]))

    def __iter__(self):
        for t in range(len(self)):
            yield self[t]

    def take(self, indices) -> 'EventList':
        indices = np.asarray(indices)
        return EventList(self.det_a[indices], self.det_b[indices], self.tof_bin[indices],
                         self.multiplier[indices])

    def subset(self, k: int, n_subsets: int) -> 'EventList':
        """Round-robin subset k of n: events k, k+n, k+2n, ..."""
        return EventList(self.det_a[k::n_subsets], self.det_b[k::n_subsets],
                         self.tof_bin[k::n_subsets], self.multiplier[k::n_subsets])

    def permuted(self, rng: np.random.Generator) -> 'EventList':
        return self.take(rng.permutation(len(self)))

    def with_multiplier(self, multiplier) -> 'EventList':
        return EventList(self.det_a, self.det_b, self.tof_bin, multiplier)

    def bin_keys(self, n_crystals: int, n_bins: int) -> np.ndarray:
        """Unique integer per (unordered crystal pair, TOF bin)."""
        lo = np.minimum(self.det_a, self.det_b)
        hi = np.maximum(self.det_a, self.det_b)
        # a reversed pair sees the bin axis mirrored
        tof = np.where(self.det_a <= self.det_b, self.tof_bin, n_bins - 1 - self.tof_bin)
        return (lo * n_crystals + hi) * n_bins + tof

    def multiplicity(self, n_crystals: int, n_bins: int) -> np.ndarray:
        """Number of events in the list that share each event's bin."""
        if len(self) == 0:
            return np.zeros(0)
        keys = self.bin_keys(n_crystals, n_bins)
        _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        return counts[inverse].astype(np.float64)

    def validate(self, n_crystals: int, n_bins: int) -> None:
        if len(self) == 0:
            return
        if self.det_a.min() < 0 or self.det_b.min() < 0 or \
                max(self.det_a.max(), self.det_b.max()) >= n_crystals:
            raise DetectorIndexError(f"Event references a crystal outside [0, {n_crystals})")
        if np.any(self.det_a == self.det_b):
            raise DegenerateLorError("Event with identical crystals")
        if self.tof_bin.min() < 0 or self.tof_bin.max() >= n_bins:
            raise BinIndexError(f"Event references a TOF bin outside [0, {n_bins})")
        if np.any(self.multiplier < 0) or not np.all(np.isfinite(self.multiplier)):
            raise DimensionError("Event multipliers must be finite and nonnegative")

    def equals(self, other: Optional['EventList']) -> bool:
        return other is not None and len(self) == len(other) and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ('det_a', 'det_b', 'tof_bin', 'multiplier'))

    def __repr__(self):
        return f"EventList(N={len(self)})"
