"""Streaming quartile estimation with the P-squared algorithm.

Implements the single-quantile estimator of Jain & Chlamtac (CACM 28(10), 1985)
and a tracker that runs three of them (p = 0.25, 0.5, 0.75) next to a running
min/max so a value can be labelled Q1..Q4 or MAX.
"""

from __future__ import annotations

import math
from typing import Sequence


def exact_quantile(values: Sequence[float], p: float) -> float:
    """Nearest-rank sample quantile."""
    if not values:
        raise ValueError("empty sample")
    ordered = sorted(values)
    rank = max(1, math.ceil(p * len(ordered)))
    return ordered[rank - 1]


class P2Estimator:
    __slots__ = ("p", "q", "n", "desired", "increments", "count", "_buffer")

    def __init__(self, p: float):
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {p}")
        self.p = p
        self.q: list[float] = []
        self.n: list[int] = [1, 2, 3, 4, 5]
        self.desired = [1.0, 1 + 2 * p, 1 + 4 * p, 3 + 2 * p, 5.0]
        self.increments = (0.0, p / 2, p, (1 + p) / 2, 1.0)
        self.count = 0
        self._buffer: list[float] = []

    def observe(self, x: float) -> None:
        if not math.isfinite(x):
            raise ValueError(f"non-finite observation {x!r}")
        self.count += 1
        if self.count <= 5:
            self._buffer.append(float(x))
            if self.count == 5:
                self.q = sorted(self._buffer)
            return

        q, n = self.q, self.n
        if x < q[0]:
            q[0] = x
            k = 0
        elif x >= q[4]:
            q[4] = max(q[4], x)
            k = 3
        else:
            k = 0
            while x >= q[k + 1]:
                k += 1
        for i in range(k + 1, 5):
            n[i] += 1
        for i in range(5):
            self.desired[i] += self.increments[i]

        for i in (1, 2, 3):
            d = self.desired[i] - n[i]
            if (d >= 1 and n[i + 1] - n[i] > 1) or (d <= -1 and n[i - 1] - n[i] < -1):
                step = 1 if d > 0 else -1
                candidate = self._parabolic(i, step)
                if not q[i - 1] < candidate < q[i + 1]:
                    candidate = q[i] + step * (q[i + step] - q[i]) / (n[i + step] - n[i])
                q[i] = candidate
                n[i] += step

    def _parabolic(self, i: int, d: int) -> float:
        q, n = self.q, self.n
        return q[i] + d / (n[i + 1] - n[i - 1]) * (
            (n[i] - n[i - 1] + d) * (q[i + 1] - q[i]) / (n[i + 1] - n[i])
            + (n[i + 1] - n[i] - d) * (q[i] - q[i - 1]) / (n[i] - n[i - 1])
        )

    def estimate(self) -> float:
        if self.count == 0:
            raise ValueError("estimator has no observations")
        if self.count <= 5:
            return exact_quantile(self._buffer, self.p)
        return self.q[2]

    def copy(self) -> "P2Estimator":
        other = P2Estimator.__new__(P2Estimator)
        other.p = self.p
        other.q = list(self.q)
        other.n = list(self.n)
        other.desired = list(self.desired)
        other.increments = self.increments
        other.count = self.count
        other._buffer = list(self._buffer)
        return other

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "n": self.n,
            "desired": self.desired,
            "count": self.count,
            "buffer": self._buffer,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "P2Estimator":
        est = cls(d["p"])
        est.q = [float(v) for v in d["q"]]
        est.n = [int(v) for v in d["n"]]
        est.desired = [float(v) for v in d["desired"]]
        est.count = int(d["count"])
        est._buffer = [float(v) for v in d["buffer"]]
        return est

    def __eq__(self, other):
        return isinstance(other, P2Estimator) and self.to_dict() == other.to_dict()


def p2_observe(estimator: P2Estimator, x: float) -> P2Estimator:
    estimator.observe(x)
    return estimator


def p2_estimate(estimator: P2Estimator) -> float:
    return estimator.estimate()


class QuartileTracker:
    """Quartile markers plus running extrema for one scalar stream."""

    __slots__ = ("estimators", "minimum", "maximum", "count", "use_max", "discrete")

    PROBS = (0.25, 0.5, 0.75)

    def __init__(self, use_max: bool = False, discrete: bool = False):
        self.estimators = [P2Estimator(p) for p in self.PROBS]
        self.minimum = math.inf
        self.maximum = -math.inf
        self.count = 0
        self.use_max = use_max
        # integer-valued streams: markers snap to integers so equal values share a label
        self.discrete = discrete

    def observe(self, x: float) -> None:
        for est in self.estimators:
            est.observe(x)
        self.minimum = min(self.minimum, x)
        self.maximum = max(self.maximum, x)
        self.count += 1

    def estimates(self) -> tuple[float, float, float]:
        # independent estimators may cross slightly; report them monotone
        lo, mid, hi = (e.estimate() for e in self.estimators)
        if self.discrete:
            lo, mid, hi = round(lo), round(mid), round(hi)
        mid = max(mid, lo)
        hi = max(hi, mid)
        return lo, mid, hi

    def label(self, x: float) -> str:
        """Label ``x`` against the current markers; ``x`` should already be observed."""
        if self.count == 0:
            raise ValueError("tracker has no observations")
        if self.use_max and x >= self.maximum:
            return "MAX"
        q1, q2, q3 = self.estimates()
        if x <= q1:
            return "Q1"
        if x <= q2:
            return "Q2"
        if x <= q3:
            return "Q3"
        return "Q4"

    def observe_and_label(self, x: float) -> str:
        self.observe(x)
        return self.label(x)

    def peek_label(self, x: float) -> str:
        """Label ``x`` as if it were observed next, leaving the tracker untouched."""
        return self.copy().observe_and_label(x)

    def reset(self) -> None:
        self.__init__(self.use_max, self.discrete)

    def copy(self) -> "QuartileTracker":
        other = QuartileTracker.__new__(QuartileTracker)
        other.estimators = [e.copy() for e in self.estimators]
        other.minimum = self.minimum
        other.maximum = self.maximum
        other.count = self.count
        other.use_max = self.use_max
        other.discrete = self.discrete
        return other

    def to_dict(self) -> dict:
        return {
            "use_max": self.use_max,
            "discrete": self.discrete,
            "count": self.count,
            "min": self.minimum if self.count else None,
            "max": self.maximum if self.count else None,
            "estimators": [e.to_dict() for e in self.estimators],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuartileTracker":
        tr = cls(d["use_max"], d.get("discrete", False))
        tr.count = int(d["count"])
        tr.minimum = math.inf if d["min"] is None else float(d["min"])
        tr.maximum = -math.inf if d["max"] is None else float(d["max"])
        tr.estimators = [P2Estimator.from_dict(e) for e in d["estimators"]]
        return tr

    def __eq__(self, other):
        return isinstance(other, QuartileTracker) and self.to_dict() == other.to_dict()


def quartile_of(tracker: QuartileTracker, x: float) -> str:
    return tracker.label(x)
