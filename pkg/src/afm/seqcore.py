"""Finite-horizon real sequences with implicit zero extension.

A :class:`Sequence` stores ``u_0, ..., u_T``; every index outside that range
reads as zero. The shift and windowing operators act on indices only, so a
result may be longer or shorter than its argument.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from afm.errors import InvalidArgument

__all__ = [
    "Sequence",
    "InputBall",
    "right_shift",
    "left_shift",
    "window",
    "embed_vector",
    "window_rows",
]


class Sequence:
    """Immutable real sequence over the horizon ``[0, T]``."""

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.array(values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgument("sequence entries must be finite reals")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def horizon(self) -> int:
        """Last stored index ``T`` (``-1`` for the empty sequence)."""
        return len(self._values) - 1

    def __len__(self):
        return len(self._values)

    def __getitem__(self, s):
        if isinstance(s, slice):
            return self._values[s]
        s = int(s)
        if 0 <= s < len(self._values):
            return float(self._values[s])
        return 0.0

    def padded(self, length: int) -> np.ndarray:
        """Values on ``[0, length)`` with zero extension (or truncation)."""
        out = np.zeros(length)
        k = min(length, len(self._values))
        out[:k] = self._values[:k]
        return out

    def sup_norm(self) -> float:
        if len(self._values) == 0:
            return 0.0
        return float(np.max(np.abs(self._values)))

    def __eq__(self, other):
        if not isinstance(other, Sequence):
            return NotImplemented
        return np.array_equal(self._values, other._values)

    def __hash__(self):
        return hash(self._values.tobytes())

    def __repr__(self):
        return f"Sequence({self._values.tolist()!r})"

    # serialization

    def to_json(self) -> str:
        return json.dumps(self._values.tolist())

    @classmethod
    def from_json(cls, text: str) -> Sequence:
        data = json.loads(text)
        if not isinstance(data, list):
            raise InvalidArgument("sequence JSON must be an array of numbers")
        return cls(data)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        for v in self._values:
            writer.writerow([repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> Sequence:
        rows = [r for r in csv.reader(io.StringIO(text)) if r and r[0].strip()]
        return cls([float(r[0]) for r in rows])

    @classmethod
    def load(cls, path) -> Sequence:
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            return cls.from_json(text)
        return cls.from_csv(text)


@dataclass(frozen=True)
class InputBall:
    """The set of sequences with sup norm at most ``R``."""

    R: float

    def __post_init__(self):
        if not (self.R > 0 and np.isfinite(self.R)):
            raise InvalidArgument(f"input ball radius must be positive, got {self.R}")

    def contains(self, u: Sequence) -> bool:
        return u.sup_norm() <= self.R


def _as_sequence(u) -> Sequence:
    return u if isinstance(u, Sequence) else Sequence(u)


def right_shift(u, k: int) -> Sequence:
    if k < 0:
        raise InvalidArgument("shift must be nonnegative")
    u = _as_sequence(u)
    return Sequence(np.concatenate([np.zeros(k), u.values]))


def left_shift(u, k: int) -> Sequence:
    if k < 0:
        raise InvalidArgument("shift must be nonnegative")
    u = _as_sequence(u)
    return Sequence(u.values[k:])


def window(u, t: int, m: int) -> Sequence:
    """Keep ``u_tau`` for ``max(t-m, 0) <= tau <= t``; the result has horizon ``t``."""
    if t < 0 or m < 0:
        raise InvalidArgument("window needs t >= 0 and m >= 0")
    u = _as_sequence(u)
    out = u.padded(t + 1)
    out[: max(t - m, 0)] = 0.0
    return Sequence(out)


def embed_vector(x) -> Sequence:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise InvalidArgument("cannot embed an empty vector: no time index")
    return Sequence(x)


def window_rows(U: np.ndarray, t: int, m: int) -> np.ndarray:
    """Batched windowing of the rows of ``U``; keeps the storage length."""
    W = np.zeros_like(U)
    lo = max(t - m, 0)
    hi = min(t + 1, U.shape[1])
    W[:, lo:hi] = U[:, lo:hi]
    return W
