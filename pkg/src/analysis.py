# src/analysis.py
"""
Structural leakage of the basic scheme and operation-count accounting.

Two basic-scheme rules leak wildcard-class correlation when their index
arrays share a unit. With M equal-ratio and N unequal-ratio units, rule
widths n and wildcard counts w1, w2 (m = n - w fixed bits):

    P = 1 - [(M-w1)!(M-w2)! / (M!(M-w1-w2)!)] * [(N-m1)!(N-m2)! / (N!(N-m1-m2)!)]
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .errors import InputError
from .ges_core import OpCounter, RandomSource
from .models import BasicRule, BlockingRule, DncRule, FieldLayout, NaiveRule, ObfuscatedFirewall

logger = logging.getLogger(__name__)

MC_CHUNK = 20_000


@dataclass(frozen=True)
class LeakageQuery:
    M: int
    N: int
    w1: int
    w2: int
    n: int

    def __post_init__(self):
        if self.M < 0 or self.N < 0:
            raise InputError(f"M and N must be >= 0 (got M={self.M}, N={self.N})")
        if self.n < 0 or not (0 <= self.w1 <= self.n and 0 <= self.w2 <= self.n):
            raise InputError(f"wildcard counts must lie in [0, n] (n={self.n}, w1={self.w1}, w2={self.w2})")

    @property
    def m1(self) -> int:
        return self.n - self.w1

    @property
    def m2(self) -> int:
        return self.n - self.w2

    @property
    def forced(self) -> bool:
        """Pigeonhole: the two draws must overlap."""
        return self.w1 + self.w2 > self.M or self.m1 + self.m2 > self.N


@dataclass(frozen=True)
class MonteCarloEstimate:
    estimate: float
    stderr: float
    trials: int


def _log_disjoint(size: int, a: int, b: int) -> float:
    """log of P(two uniform draws of a and b distinct items from `size` are disjoint)."""
    return (math.lgamma(size - a + 1) + math.lgamma(size - b + 1)
            - math.lgamma(size + 1) - math.lgamma(size - a - b + 1))


def leakage_probability(q: LeakageQuery) -> float:
    if q.forced:
        return 1.0
    p = 1.0 - math.exp(_log_disjoint(q.M, q.w1, q.w2) + _log_disjoint(q.N, q.m1, q.m2))
    return min(1.0, max(0.0, p))


def _overlap(gen: np.random.Generator, rows: int, size: int, a: int, b: int) -> np.ndarray:
    """Per row: do two independent without-replacement draws (a and b of `size`) intersect?"""
    if a == 0 or b == 0:
        return np.zeros(rows, dtype=bool)
    first = np.argsort(gen.random((rows, size)), axis=1)[:, :a]
    second = np.argsort(gen.random((rows, size)), axis=1)[:, :b]
    taken = np.zeros((rows, size), dtype=bool)
    np.put_along_axis(taken, first, True, axis=1)
    return np.take_along_axis(taken, second, axis=1).any(axis=1)


def leakage_monte_carlo(q: LeakageQuery, trials: int, rng: RandomSource) -> MonteCarloEstimate:
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    if q.forced:
        return MonteCarloEstimate(1.0, 0.0, trials)
    gen = np.random.default_rng(rng.randbits(64))
    hits = 0
    left = trials
    while left:
        rows = min(left, MC_CHUNK)
        leak = _overlap(gen, rows, q.M, q.w1, q.w2) | _overlap(gen, rows, q.N, q.m1, q.m2)
        hits += int(leak.sum())
        left -= rows
    p = hits / trials
    return MonteCarloEstimate(p, math.sqrt(p * (1 - p) / trials), trials)


# ---- operation counts

@dataclass(frozen=True)
class CountReport:
    scheme: str
    predicted_encode: int
    measured_encode: int
    predicted_re_rand: int
    measured_re_rand: int

    @property
    def matches(self) -> bool:
        return (self.predicted_encode == self.measured_encode
                and self.predicted_re_rand == self.measured_re_rand)

    def as_dict(self) -> Dict:
        return {
            "scheme": self.scheme,
            "encode_predicted": self.predicted_encode,
            "encode_measured": self.measured_encode,
            "re_rand_predicted": self.predicted_re_rand,
            "re_rand_measured": self.measured_re_rand,
            "match": self.matches,
        }


def predicted_encodes(
    scheme: str,
    n: int,
    l: int,
    M: Optional[int] = None,
    N: Optional[int] = None,
    layout: Optional[FieldLayout] = None,
    part_widths: Sequence[int] = (),
    inner: str = "naive",
) -> int:
    """Closed-form encode count (re_rand count is the same)."""
    if scheme == "naive":
        return 2 * l * (2 * n + 1)
    if scheme == "basic":
        M = 2 * n if M is None else M
        N = 2 * n if N is None else N
        return 4 * (M + N) + 2 * l
    if scheme == "blocking":
        if layout is None:
            raise InputError("blocking counts need a layout")
        return 2 * l * (sum(layout.domains) + 1)
    if scheme == "dnc":
        return sum(predicted_encodes(inner, w, l, M, N) for w in (part_widths or (n,)))
    raise InputError(f"unknown scheme '{scheme}'")


def count_report(
    counter: OpCounter,
    scheme: str,
    n: int,
    l: int,
    M: Optional[int] = None,
    N: Optional[int] = None,
    layout: Optional[FieldLayout] = None,
    part_widths: Sequence[int] = (),
    inner: str = "naive",
) -> CountReport:
    if counter.runs != 1:
        raise InputError(f"counter covers {counter.runs} obfuscation runs; collect exactly one")
    predicted = predicted_encodes(scheme, n, l, M, N, layout, part_widths, inner)
    report = CountReport(scheme, predicted, counter.encode, predicted, counter.re_rand)
    if not report.matches:
        logger.warning("count mismatch for %s: %s", scheme, report.as_dict())
    return report


def _rule_encodings(rule) -> int:
    if isinstance(rule, NaiveRule):
        return 4 * len(rule.units) + 2
    if isinstance(rule, BasicRule):
        return 2
    if isinstance(rule, BlockingRule):
        return 2 * sum(len(t) for t in rule.tables) + 2
    if isinstance(rule, DncRule):
        return sum(_rule_encodings(sub) for sub in rule.parts)
    raise TypeError(type(rule).__name__)


def stored_encodings(fw: ObfuscatedFirewall) -> int:
    """Level-1 encodings a firewall carries (shared units plus per-rule material)."""
    shared = sum(4 * len(units) for units in fw.units)
    return shared + sum(_rule_encodings(r) for r in fw.rules)
