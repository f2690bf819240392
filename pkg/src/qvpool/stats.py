"""Paired t-tests against a baseline set with Bonferroni correction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    metric: str
    baseline: str
    comparison: str
    t_statistic: float
    p_value_raw: float
    p_value_adjusted: float
    n: int
    significance: str

    def row(self) -> list:
        return [
            self.metric, self.baseline, self.comparison, self.n,
            self.t_statistic, self.p_value_raw, self.p_value_adjusted, self.significance,
        ]


SIGNIFICANCE_HEADER = ("metric", "baseline", "comparison", "n", "t", "p_raw", "p_adjusted", "significance")


def _betacf(a: float, b: float, x: float, max_iter: int = 300, eps: float = 1e-15) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Two-sided paired t-test of ``a - b``; returns ``(t, p)``."""
    if len(a) != len(b):
        raise ValueError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            log.info("all paired differences are zero; t=0, p=1")
            return 0.0, 1.0
        log.info("paired differences have zero variance; t=%sinf, p=0", "+" if mean > 0 else "-")
        return math.copysign(math.inf, mean), 0.0
    t = mean / math.sqrt(var / n)
    return t, min(1.0, student_t_two_sided_p(t, n - 1))


def bonferroni_adjust(p_values: Sequence[float], m: int) -> list[float]:
    if m < len(p_values):
        raise ValueError(f"m={m} is smaller than the number of p-values ({len(p_values)})")
    for p in p_values:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value {p} outside [0, 1]")
    return [min(1.0, p * m) for p in p_values]


def significance_label(p_adjusted: float) -> str:
    if p_adjusted < 0.01:
        return "p<0.01"
    if p_adjusted < 0.05:
        return "p<0.05"
    return "none"


def compare_to_baseline(
    per_topic_scores: Mapping[str, Mapping[str, float]],
    baseline_label: str,
    metric_name: str,
) -> list[TestResult]:
    """Test every non-baseline set against the baseline, pairing by topic.

    The Bonferroni factor is the number of non-baseline sets.
    """
    if baseline_label not in per_topic_scores:
        raise KeyError(f"baseline {baseline_label!r} missing")
    base = per_topic_scores[baseline_label]
    topics = sorted(base)
    others = [label for label in per_topic_scores if label != baseline_label]
    for label in others:
        if set(per_topic_scores[label]) != set(topics):
            diff = sorted(set(per_topic_scores[label]) ^ set(topics))
            raise ValueError(f"{label!r} and {baseline_label!r} cover different topics: {diff}")
    raw = []
    for label in others:
        scores = per_topic_scores[label]
        raw.append(paired_t_test([scores[t] for t in topics], [base[t] for t in topics]))
    adjusted = bonferroni_adjust([p for _, p in raw], len(others)) if others else []
    return [
        TestResult(metric_name, baseline_label, label, t, p, pa, len(topics), significance_label(pa))
        for label, (t, p), pa in zip(others, raw, adjusted)
    ]
