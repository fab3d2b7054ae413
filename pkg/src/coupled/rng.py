"""Counter-based, splittable random streams.

Every random value is a pure function of ``(key, substream_id, counter)``:
the lane seed is a hash of the key and substream, and the ``i``-th output of
a lane is the SplitMix64 finalizer applied to ``seed + (i + 1) * GOLDEN``.
Because outputs are addressed rather than iterated, a whole batch of lanes
can be advanced with one vectorized numpy call while each lane still sees
exactly the sequence it would see on its own.  This is what lets the
batched samplers return bit-identical results regardless of how many lanes
are processed together.

:class:`RngStream` is a single lane; :class:`StreamBank` is an array of
lanes with independent counters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SUB_SALT = np.uint64(0xD1B54A32D192ED03)
_MASK = (1 << 64) - 1
_TWO_M53 = 2.0**-53


def _mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _lane_seed(key, substream):
    key = np.asarray(key, dtype=np.uint64)
    substream = np.asarray(substream, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(key) + _mix64(substream ^ _SUB_SALT))


def _raw(seeds, counters, n):
    """``n`` raw 64-bit outputs per lane, shape ``(lanes, n)``."""
    steps = counters[:, None] + np.arange(1, n + 1, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        return _mix64(seeds[:, None] + steps * _GOLDEN)


def _to_unit(raw):
    # 53 random bits centred in their cell: strictly inside (0, 1)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def _child_substream(substream, lane):
    sub = np.asarray(substream, dtype=np.uint64)
    lane = np.asarray(lane, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64(_mix64(sub) + (lane + np.uint64(1)) * _GOLDEN)


class _Draws:
    """Distribution helpers on top of ``_uniform_block``."""

    def uniform(self, *tail):
        return self._uniform_block(tail)

    def normal(self, *tail):
        return ndtri(self._uniform_block(tail))

    def exponential(self, *tail):
        return -np.log(self._uniform_block(tail))

    def integers(self, high, *tail):
        """Uniform integers in ``[0, high)``."""
        u = self._uniform_block(tail)
        return np.minimum((u * high).astype(np.int64), high - 1)


@dataclass
class RngStream(_Draws):
    """One random stream.

    Draw methods advance ``counter``; replaying from the same
    ``(key, counter, substream_id)`` reproduces the same values bit for bit.
    ``uniform(*shape)`` returns an array of that shape (a 0-d array when no
    shape is given).
    """

    key: int
    counter: int = 0
    substream_id: int = 0

    def __post_init__(self):
        self.key = int(self.key) & _MASK
        self.counter = int(self.counter) & _MASK
        self.substream_id = int(self.substream_id) & _MASK

    @property
    def seed(self):
        return _lane_seed(self.key, self.substream_id)

    def _uniform_block(self, tail):
        n = int(np.prod(tail, dtype=np.int64)) if tail else 1
        seeds = np.array([self.seed], dtype=np.uint64)
        counters = np.array([self.counter], dtype=np.uint64)
        out = _to_unit(_raw(seeds, counters, n))[0]
        self.counter = (self.counter + n) & _MASK
        return out.reshape(tail)

    def split(self, lane):
        return split_stream(self, lane)

    def copy(self):
        return RngStream(self.key, self.counter, self.substream_id)


def split_stream(parent: RngStream, lane: int) -> RngStream:
    """Child stream for ``lane``: a deterministic function of the parent's
    key, substream and the lane index (the parent's counter is ignored)."""
    if lane < 0:
        raise ValueError("lane must be non-negative")
    sub = int(_child_substream(parent.substream_id, lane))
    return RngStream(parent.key, 0, sub)


class StreamBank(_Draws):
    """A batch of independent lanes.

    Draws return arrays with a leading lane axis.  ``bank[idx]`` is a view
    onto a subset of lanes sharing the same counters, so drawing through a
    view advances only the selected lanes.
    """

    def __init__(self, seeds, counters, idx=None):
        self._seeds = seeds
        self._counters = counters
        self._idx = np.arange(len(seeds)) if idx is None else np.asarray(idx, dtype=np.int64)

    @classmethod
    def split(cls, parent: RngStream, n_lanes: int) -> "StreamBank":
        """Lanes ``0..n_lanes-1`` equal to ``split_stream(parent, k)``."""
        subs = _child_substream(parent.substream_id, np.arange(n_lanes, dtype=np.uint64))
        seeds = _lane_seed(np.full(n_lanes, parent.key, dtype=np.uint64), subs)
        return cls(seeds, np.zeros(n_lanes, dtype=np.uint64))

    @classmethod
    def from_streams(cls, streams) -> "StreamBank":
        seeds = np.array([s.seed for s in streams], dtype=np.uint64)
        counters = np.array([s.counter for s in streams], dtype=np.uint64)
        return cls(seeds, counters)

    def __len__(self):
        return len(self._idx)

    def __getitem__(self, idx):
        return StreamBank(self._seeds, self._counters, np.atleast_1d(self._idx[idx]))

    @property
    def counters(self):
        return self._counters[self._idx].copy()

    def _uniform_block(self, tail):
        n = int(np.prod(tail, dtype=np.int64)) if tail else 1
        idx = self._idx
        out = _to_unit(_raw(self._seeds[idx], self._counters[idx], n))
        self._counters[idx] += np.uint64(n)
        return out.reshape((len(idx),) + tuple(tail))


class _Single:
    """Run a batched sampler on one stream and write its counter back."""

    def __init__(self, rng: RngStream):
        self.rng = rng
        self.bank = StreamBank.from_streams([rng])

    def __enter__(self):
        return self.bank

    def __exit__(self, *exc):
        self.rng.counter = int(self.bank.counters[0])
        return False


def single_lane(rng: RngStream):
    """Context manager yielding a one-lane bank backed by ``rng``."""
    return _Single(rng)
