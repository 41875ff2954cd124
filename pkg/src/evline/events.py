"""Columnar storage for event streams."""

import numpy as np


class EventArray:
    """Events as parallel arrays (t seconds, x/y pixels, polarity +-1).

    Supports len(), boolean/fancy indexing (returns a new EventArray) and
    time-sorting; timestamps are expected non-decreasing within a stream
    but this is only enforced where a consumer requires it.
    """

    __slots__ = ("t", "x", "y", "p")

    def __init__(self, t, x, y, p=None):
        self.t = np.asarray(t, dtype=float)
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        if p is None:
            p = np.ones_like(self.t, dtype=np.int8)
        self.p = np.asarray(p, dtype=np.int8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event columns must have equal length")

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0, dtype=np.int8))

    def __len__(self):
        return len(self.t)

    def __getitem__(self, idx):
        return EventArray(self.t[idx], self.x[idx], self.y[idx], self.p[idx])

    def pixels(self):
        """(N, 2) array of pixel coordinates."""
        return np.stack([self.x, self.y], axis=-1)

    def argsort_time(self):
        """Stable ordering by timestamp (ties keep input order)."""
        return np.argsort(self.t, kind="stable")

    def sorted_by_time(self):
        order = self.argsort_time()
        return self[order], order

    def time_span(self):
        if len(self) == 0:
            return 0.0
        return float(self.t[-1] - self.t[0])

    def __repr__(self):
        if len(self) == 0:
            return "EventArray(empty)"
        return (f"EventArray(n={len(self)}, "
                f"t=[{self.t[0]:.6f}, {self.t[-1]:.6f}])")


def concatenate(arrays):
    """Concatenate EventArrays preserving order."""
    arrays = list(arrays)
    if not arrays:
        return EventArray.empty()
    return EventArray(
        np.concatenate([a.t for a in arrays]),
        np.concatenate([a.x for a in arrays]),
        np.concatenate([a.y for a in arrays]),
        np.concatenate([a.p for a in arrays]),
    )
