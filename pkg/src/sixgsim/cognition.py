"""Exact Shapley attribution of decision scores and a mean-shift drift test."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

MAX_PLAYERS = 20


class TooManyFeatures(ValueError):
    pass


class EmptyWindow(ValueError):
    pass


@dataclass(frozen=True)
class CharacteristicFn:
    """Set function over players ``0..n-1``; ``v`` takes a frozenset."""

    n: int
    v: Callable[[frozenset], float]
    names: Optional[tuple] = None

    @classmethod
    def from_table(cls, n: int, table: Mapping, names=None) -> "CharacteristicFn":
        table = {frozenset(k): val for k, val in table.items()}
        return cls(n, lambda s: table[frozenset(s)], names)


@dataclass(frozen=True)
class Attribution:
    phi: tuple
    names: Optional[tuple] = None

    def as_dict(self) -> dict:
        names = self.names or tuple(str(i) for i in range(len(self.phi)))
        return dict(zip(names, self.phi))


def _subset(mask: int, n: int) -> frozenset:
    return frozenset(i for i in range(n) if mask >> i & 1)


def shapley_exact(cf: CharacteristicFn) -> Attribution:
    """Shapley values by enumerating all 2^n coalitions.

    When every coalition value is an int or Fraction the arithmetic is exact
    and the result holds Fractions; otherwise it is vectorized float math.
    """
    n = cf.n
    if n > MAX_PLAYERS:
        raise TooManyFeatures(f"{n} players exceeds the enumeration bound of {MAX_PLAYERS}")
    if n == 0:
        return Attribution((), cf.names)
    size = 1 << n
    values = [cf.v(_subset(m, n)) for m in range(size)]

    if all(isinstance(x, Rational) for x in values):
        fact = [math.factorial(k) for k in range(n + 1)]
        weight = [Fraction(fact[s] * fact[n - s - 1], fact[n]) for s in range(n)]
        phi = []
        for i in range(n):
            bit = 1 << i
            total = Fraction(0)
            for m in range(size):
                if not m & bit:
                    total += weight[bin(m).count("1")] * (values[m | bit] - values[m])
            phi.append(total)
        return Attribution(tuple(phi), cf.names)

    vals = np.asarray(values, dtype=float)
    masks = np.arange(size)
    popcount = np.zeros(size, dtype=np.int64)
    for i in range(n):
        popcount += (masks >> i) & 1
    weights = np.array([
        math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)
    ])
    phi = []
    for i in range(n):
        without = masks[((masks >> i) & 1) == 0]
        marg = vals[without | (1 << i)] - vals[without]
        phi.append(float(np.dot(weights[popcount[without]], marg)))
    return Attribution(tuple(phi), cf.names)


@dataclass(frozen=True)
class Explanation:
    decision: str
    attribution: Attribution
    score: float

    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.attribution.as_dict().items(), key=lambda kv: (-abs(kv[1]), kv[0]))

    def render(self) -> str:
        lines = [f"{self.decision}: score {self.score:.6g}"]
        for name, phi in self.ranked():
            lines.append(f"  {name:<12s} {phi:+.6g}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"decision": self.decision, "score": self.score,
                "attribution": {k: v for k, v in self.ranked()}}


def explain_decision(decision: str, terms: Mapping[str, float],
                     combine: Callable[[float], float] = lambda x: x) -> Explanation:
    """Attribute a score built from additive feature terms.

    A coalition's value is the score recomputed with every term outside the
    coalition set to zero, then passed through ``combine`` (e.g. a clamp).
    """
    names = tuple(terms)
    vec = [terms[k] for k in names]

    def v(s: frozenset) -> float:
        return combine(sum(vec[i] for i in sorted(s)))

    cf = CharacteristicFn(len(names), v, names)
    attribution = shapley_exact(cf)
    return Explanation(decision, attribution, v(frozenset(range(len(names)))))


def clamp01(x: float) -> float:
    return min(max(x, 0.0), 1.0)


@dataclass(frozen=True)
class DriftReport:
    mean_shift: float
    threshold: float
    drifted: bool


def detect_drift(ref: Sequence[float], cur: Sequence[float], k: float = 3.0) -> DriftReport:
    """Flag a shift of the current mean by more than ``k`` reference population stddevs."""
    if len(ref) == 0 or len(cur) == 0:
        raise EmptyWindow("drift test needs non-empty reference and current windows")
    shift = statistics.fmean(cur) - statistics.fmean(ref)
    threshold = k * statistics.pstdev(ref)
    return DriftReport(shift, threshold, abs(shift) > threshold)
