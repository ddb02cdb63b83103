"""Constant-state estimators of the growth exponent and the current intensity."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .hawkes_core import Cascade, DomainError, c_gamma

N_MILESTONES = 64


class StreamOrderError(ValueError):
    """An event arrived with a timestamp earlier than one already observed."""


class VelocityTracker:
    """Sliding-window event counter over ``[s - window, s]`` with O(1) state.

    Time is split into buckets of width ``window / n_buckets``; an event at
    ``t`` lands in bucket ``floor(t / width)``. A query at ``s`` counts the
    buckets ``floor((s - window)/width) .. floor(s/width)``, so the oldest
    bucket may contribute events slightly older than ``s - window`` (at most
    one bucket's worth) and an event exactly at ``s - window`` is counted.
    The ring stores the running count through each recent bucket, so a
    query is a single subtraction.

    Besides the ring the tracker keeps the total count, the running sum of
    event times after ``start_offset``, and the times at which the count
    first reached ``2**k`` (used for quantile-time features).
    """

    __slots__ = ("window", "n_buckets", "width", "start_offset", "_ring", "_head",
                 "last_time", "total_count", "count_after", "sum_after", "_milestones")

    def __init__(self, window: float, n_buckets: int = 64, start_offset: float = 0.0):
        if not window > 0:
            raise DomainError("window must be > 0")
        if n_buckets < 1:
            raise DomainError("need at least one bucket")
        self.window = float(window)
        self.n_buckets = int(n_buckets)
        self.width = self.window / self.n_buckets
        self.start_offset = float(start_offset)
        self._ring = [0] * (self.n_buckets + 2)
        self._head = None
        self.last_time = -math.inf
        self.total_count = 0
        self.count_after = 0
        self.sum_after = 0.0
        self._milestones: list[float] = []

    def _advance(self, k: int) -> None:
        # buckets head+1 .. k start with the count so far
        head = self._head
        size = self.n_buckets + 2
        total = self.total_count
        if head is None or k - head >= size:
            self._ring = [total] * size
        else:
            for j in range(head + 1, k + 1):
                self._ring[j % size] = total
        self._head = k

    def observe(self, t: float, mark: float = 1.0) -> "VelocityTracker":
        if t < self.last_time:
            raise StreamOrderError(f"event at {t} after one at {self.last_time}")
        k = math.floor(t / self.width)
        if self._head is None or k > self._head:
            self._advance(k)
        self._ring[k % (self.n_buckets + 2)] += 1
        self.last_time = t
        self.total_count += 1
        if self.total_count == 1 << len(self._milestones):
            self._milestones.append(t)
        if t >= self.start_offset:
            self.count_after += 1
            self.sum_after += t - self.start_offset
        return self

    def count_in_window(self, s: float) -> int:
        if s < self.last_time:
            raise StreamOrderError("query precedes the last observed event")
        head = self._head
        if head is None:
            return 0
        k_lo = math.floor((s - self.window) / self.width)
        if k_lo > head:
            return 0
        # s >= last event, so every stored event lies at or below floor(s / width)
        k_lo = max(k_lo, head - self.n_buckets)
        return self.total_count - self._ring[(k_lo - 1) % (self.n_buckets + 2)]

    def velocity(self, s: float) -> float:
        """Estimated intensity at ``s``: window count divided by window length."""
        return self.count_in_window(s) / self.window

    @property
    def milestones(self) -> tuple[float, ...]:
        return tuple(self._milestones)

    def mean_time(self) -> float:
        return self.sum_after / self.count_after if self.count_after else 0.0

    def state_size(self) -> int:
        """Number of stored scalars; independent of the stream length."""
        return len(self._ring) + len(self._milestones) + 8

    def snapshot(self) -> "VelocityTracker":
        other = VelocityTracker.__new__(VelocityTracker)
        for name in self.__slots__:
            setattr(other, name, getattr(self, name))
        other._ring = list(self._ring)
        other._milestones = list(self._milestones)
        return other


def tracker_observe(tracker: VelocityTracker, t: float, mark: float = 1.0) -> VelocityTracker:
    return tracker.observe(t, mark)


def velocity(tracker: VelocityTracker, s: float) -> float:
    return tracker.velocity(s)


def window_counts(times: np.ndarray, s: float, window: float, n_buckets: int = 64) -> int:
    """Batch equivalent of :meth:`VelocityTracker.count_in_window` over events ``<= s``."""
    width = window / n_buckets
    n = int(np.searchsorted(times, s, side="right"))
    if n == 0:
        return 0
    head = math.floor(times[n - 1] / width)
    k_lo = max(math.floor((s - window) / width), head - n_buckets)
    k = np.floor(times[:n] / width)
    return int(np.count_nonzero(k >= k_lo))


def milestone_times(times: np.ndarray) -> tuple[float, ...]:
    """Times at which the running count first reached 1, 2, 4, 8, ..."""
    n = times.size
    out = []
    k = 0
    while (1 << k) <= n and k < N_MILESTONES:
        out.append(float(times[(1 << k) - 1]))
        k += 1
    return tuple(out)


def quantile_time_from_milestones(milestones: Sequence[float], last_time: float,
                                  n: int, gamma: float) -> float:
    """Approximate time at which the count reached ``gamma * n``.

    Interpolates linearly in ``log2(count)`` between the bracketing
    power-of-two milestones (or the last event when no upper milestone exists).
    """
    if n == 0:
        return 0.0
    target = max(gamma * n, 1.0)
    k = min(int(math.floor(math.log2(target))), len(milestones) - 1)
    lo_c, lo_t = 1 << k, milestones[k]
    if k + 1 < len(milestones):
        hi_c, hi_t = 1 << (k + 1), milestones[k + 1]
    else:
        hi_c, hi_t = n, last_time
    if hi_c <= lo_c:
        return lo_t
    w = (math.log2(target) - math.log2(lo_c)) / (math.log2(hi_c) - math.log2(lo_c))
    return lo_t + w * (hi_t - lo_t)


# ---------------------------------------------------------------------------
# Growth exponent
# ---------------------------------------------------------------------------


def _rebased(cascade: Cascade, start_offset: float) -> np.ndarray:
    t = cascade.times
    return t[t >= start_offset] - start_offset


def alpha_mean(source: Cascade | VelocityTracker, start_offset: float = 0.0) -> float:
    """Reciprocal of the mean event time (times measured from ``start_offset``).

    A :class:`VelocityTracker` already carries its own offset; passing one
    uses its running sums and ignores ``start_offset``.
    """
    if isinstance(source, VelocityTracker):
        n, total = source.count_after, source.sum_after
    else:
        t = _rebased(source, start_offset)
        n, total = t.size, math.fsum(t)
    if n == 0:
        raise DomainError("no events after the start offset")
    if total <= 0:
        raise DomainError("all event times coincide with the start; mean estimator undefined")
    return n / total


def quantile_time(cascade: Cascade, gamma: float, start_offset: float = 0.0) -> float:
    """T_gamma = inf{t > 0 : N(t) >= gamma * n} on the re-based event times."""
    if not 0 < gamma < 1:
        raise DomainError("gamma must lie in (0, 1)")
    t = _rebased(cascade, start_offset)
    if t.size == 0:
        raise DomainError("no events after the start offset")
    k = math.ceil(gamma * t.size - 1e-12)
    return float(t[max(k, 1) - 1])


def alpha_quantile(cascade: Cascade, gamma: float = 0.5, start_offset: float = 0.0,
                   raw_reciprocal: bool = False) -> float:
    """Quantile-time estimator ``c_gamma / T_gamma``.

    ``raw_reciprocal=True`` returns ``1 / T_gamma`` without the
    ``c_gamma = log(1/(1 - gamma))`` scale; both agree at ``gamma = 1 - 1/e``.
    """
    tg = quantile_time(cascade, gamma, start_offset)
    if tg <= 0:
        raise DomainError("T_gamma is 0; quantile estimator undefined")
    return (1.0 if raw_reciprocal else c_gamma(gamma)) / tg


def remaining_integral_identity(cascade: Cascade) -> tuple[float, float]:
    """Both sides of ``int_0^inf (n - N(t)) dt = sum_i T_i``, computed independently."""
    t = cascade.times
    n = t.size
    if n == 0:
        return 0.0, 0.0
    gaps = np.diff(np.concatenate([[0.0], t]))
    lhs = math.fsum(gaps * (n - np.arange(n)))
    rhs = math.fsum(t)
    return lhs, rhs


def cascade_duration(cascade: Cascade, fraction: float = 0.95) -> float:
    """Smallest time by which ``fraction`` of the events have occurred."""
    if len(cascade) == 0:
        return 0.0
    return quantile_time(cascade, fraction)


def default_window(cascades: Sequence[Cascade], fraction: float = 0.01) -> float:
    """Velocity window: ``fraction`` of the median cascade duration."""
    durations = [cascade_duration(c) for c in cascades if len(c)]
    if not durations:
        raise DomainError("no nonempty cascades")
    return fraction * float(np.median(durations))
