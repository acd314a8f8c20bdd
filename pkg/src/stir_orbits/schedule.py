"""Unit-periodic schedules of (kernel, rate, duration) segments.

Durations are exact rationals summing to 1, so segment boundaries are exact
and no ring event can be lost to rounding at a boundary.  A schedule is
interpreted as repeating with period 1 on [0, inf).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .graphs import Kernel


@dataclass(frozen=True)
class Segment:
    kernel: Kernel
    rate: float
    duration: Fraction

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("segment rate must be >= 0")
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")


class Schedule:
    """Ordered segments with durations summing to exactly 1."""

    def __init__(self, segments: list[Segment]):
        if not segments:
            raise ValueError("schedule needs at least one segment")
        total = sum((s.duration for s in segments), Fraction(0))
        if total != 1:
            raise ValueError(f"segment durations must sum to 1, got {total}")
        self.segments = list(segments)
        bounds = [Fraction(0)]
        for s in segments:
            bounds.append(bounds[-1] + s.duration)
        self._bounds = bounds  # exact offsets 0 = b_0 < ... < b_k = 1

    def __len__(self):
        return len(self.segments)

    def segment_bounds(self, period: int, idx: int) -> tuple[float, float]:
        """Absolute [start, end) of one segment occurrence, as floats."""
        return (
            period + float(self._bounds[idx]),
            period + float(self._bounds[idx + 1]),
        )

    def windows_overlapping(self, t0: float, t1: float):
        """Yield (period, idx, start, end) for segment occurrences meeting [t0, t1)."""
        if t0 >= t1:
            return
        period = max(0, math.floor(t0))
        while period < t1:
            for idx in range(len(self.segments)):
                start, end = self.segment_bounds(period, idx)
                if end > t0 and start < t1:
                    yield period, idx, start, end
            period += 1

    def window_at(self, t: float, *, backward: bool = False):
        """The segment occurrence containing time t.

        With backward=True, boundary times resolve to the window *ending* at
        t, which is what a backward trace standing at a boundary needs.
        """
        if t < 0 or (backward and t <= 0):
            raise ValueError("time out of range")
        period = math.floor(t)
        for idx in range(len(self.segments)):
            start, end = self.segment_bounds(period, idx)
            if backward:
                if start < t <= end:
                    return period, idx, start, end
            else:
                if start <= t < end:
                    return period, idx, start, end
        # t sits exactly on a period boundary
        if backward:
            period -= 1
            idx = len(self.segments) - 1
            start, end = self.segment_bounds(period, idx)
            return period, idx, start, end
        start, end = self.segment_bounds(period, 0)
        return period, 0, start, end

    def kernels(self) -> list[Kernel]:
        return [s.kernel for s in self.segments]

    def is_palindromic(self) -> bool:
        segs = self.segments
        return all(
            segs[i].kernel is segs[-1 - i].kernel
            and segs[i].rate == segs[-1 - i].rate
            and segs[i].duration == segs[-1 - i].duration
            for i in range(len(segs))
        )


def single_segment(kernel: Kernel, rate: float = 1.0) -> Schedule:
    return Schedule([Segment(kernel, rate, Fraction(1))])


def scaled(schedule: Schedule, factor: float) -> Schedule:
    """Same segments with all rates multiplied by factor."""
    return Schedule(
        [Segment(s.kernel, s.rate * factor, s.duration) for s in schedule.segments]
    )
