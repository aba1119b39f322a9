"""Knowledge-monitoring assessment: completed perception profiles and
signal-detection metrics per learner.

A profile joins what a learner reported (explicit) with what a model
inferred for the concepts they left unmentioned. Crossing it with item
responses gives the hit / false-alarm / miss / correct-rejection counts.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .graph import HeteroGraph, mention_partition


class AssessmentError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class State(str, Enum):
    KNOW = "Know"
    DONT_KNOW = "DontKnow"


class Provenance(str, Enum):
    EXPLICIT = "Explicit"
    INFERRED = "Inferred"


@dataclass(frozen=True)
class PerceptionProfile:
    learner: int
    states: dict[int, tuple[State, Provenance]]

    def knows(self, concept: int) -> bool:
        return self.states[concept][0] is State.KNOW

    def concepts(self, state: State | None = None, provenance: Provenance | None = None) -> list[int]:
        return sorted(
            k
            for k, (s, p) in self.states.items()
            if (state is None or s is state) and (provenance is None or p is provenance)
        )


def complete_profile(graph: HeteroGraph, learner: int, inferred: tuple[set[int], set[int]]) -> PerceptionProfile:
    """Merge explicit reports with inferred (know, dont_know) sets over the assessed concepts.

    ``inferred`` must cover the learner's latent concepts exactly, with no
    concept in both sets.
    """
    i = graph.learner_index(learner)
    known, unknown, latent = mention_partition(graph, i)
    inf_know, inf_dont = set(inferred[0]), set(inferred[1])
    clash = (inf_know | inf_dont) & (known | unknown)
    if clash:
        raise AssessmentError("explicit_overlap", f"inferred states given for explicitly reported concepts {sorted(clash)}")
    if inf_know & inf_dont:
        raise AssessmentError("inferred_conflict", f"concepts inferred both ways: {sorted(inf_know & inf_dont)}")
    if inf_know | inf_dont != latent:
        missing = sorted(latent - inf_know - inf_dont)
        extra = sorted((inf_know | inf_dont) - latent)
        raise AssessmentError("latent_mismatch", f"inferred sets must cover the latent set (missing {missing}, extra {extra})")
    states: dict[int, tuple[State, Provenance]] = {}
    for k in known:
        states[k] = (State.KNOW, Provenance.EXPLICIT)
    for k in unknown:
        states[k] = (State.DONT_KNOW, Provenance.EXPLICIT)
    for k in inf_know:
        states[k] = (State.KNOW, Provenance.INFERRED)
    for k in inf_dont:
        states[k] = (State.DONT_KNOW, Provenance.INFERRED)
    return PerceptionProfile(i, dict(sorted(states.items())))


@dataclass(frozen=True)
class ContingencyTable:
    hits: int
    false_alarms: int
    misses: int
    correct_rejections: int

    def __post_init__(self):
        if min(self.hits, self.false_alarms, self.misses, self.correct_rejections) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def total(self) -> int:
        return self.hits + self.false_alarms + self.misses + self.correct_rejections

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.hits, self.false_alarms, self.misses, self.correct_rejections)


def item_outcomes(profile: PerceptionProfile, graph: HeteroGraph) -> list[tuple[int, int, str]]:
    """(item, concept, cell) for every responded item whose concept is profiled.

    Cells are ``"A"`` hit, ``"B"`` false alarm, ``"C"`` miss, ``"D"`` correct rejection.
    """
    out = []
    for j, correct in sorted(graph.learner_responses(profile.learner).items()):
        k = graph.item_concept[j]
        if k not in profile.states:
            continue
        know = profile.knows(k)
        cell = ("A" if correct else "B") if know else ("C" if correct else "D")
        out.append((j, k, cell))
    return out


def contingency(profile: PerceptionProfile, graph: HeteroGraph) -> ContingencyTable:
    outcomes = item_outcomes(profile, graph)
    if not outcomes:
        name = graph.learners[profile.learner]
        raise AssessmentError("no_responses", f"learner {name} has no responses on profiled concepts")
    counts = {c: 0 for c in "ABCD"}
    for _, _, cell in outcomes:
        counts[cell] += 1
    return ContingencyTable(counts["A"], counts["B"], counts["C"], counts["D"])


# inverse normal CDF ---------------------------------------------------------

# rational approximation coefficients (Acklam), max relative error ~1.2e-9
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02, 1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02, 6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00, -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00)
_P_LOW = 0.02425


def _rational(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    if p > 1.0 - _P_LOW:
        return -_rational(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def inverse_normal_cdf(p: float) -> float:
    """Standard normal quantile: rational start, then one Halley step on the erfc CDF."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"inverse_normal_cdf needs 0 < p < 1, got {p}")
    x = _rational(p)
    e = normal_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


# monitoring metrics -----------------------------------------------------------


@dataclass(frozen=True)
class MonitoringMetrics:
    d_prime: float
    sensitivity: float
    specificity: float
    corrected: bool


def sensitivity(table: ContingencyTable) -> float:
    if table.hits + table.misses == 0:
        raise AssessmentError("undefined_margin", "sensitivity needs at least one correct response")
    return table.hits / (table.hits + table.misses)


def specificity(table: ContingencyTable) -> float:
    if table.false_alarms + table.correct_rejections == 0:
        raise AssessmentError("undefined_margin", "specificity needs at least one incorrect response")
    return table.correct_rejections / (table.false_alarms + table.correct_rejections)


def d_prime(table: ContingencyTable) -> MonitoringMetrics:
    """Discriminability z(hit rate) - z(false-alarm rate).

    If either rate is 0 or 1 both are replaced by (count + 0.5) / (margin + 1)
    and ``corrected`` is set. Sensitivity and specificity stay uncorrected.
    """
    A, B, C, D = table.as_tuple()
    if A + C == 0 or B + D == 0:
        raise AssessmentError("undefined_margin", f"d' needs both margins non-empty, got A+C={A + C}, B+D={B + D}")
    h, f = A / (A + C), B / (B + D)
    corrected = h in (0.0, 1.0) or f in (0.0, 1.0)
    if corrected:
        h, f = (A + 0.5) / (A + C + 1), (B + 0.5) / (B + D + 1)
    return MonitoringMetrics(
        d_prime=inverse_normal_cdf(h) - inverse_normal_cdf(f),
        sensitivity=sensitivity(table),
        specificity=specificity(table),
        corrected=corrected,
    )


# cohort export ------------------------------------------------------------------

METRICS_COLUMNS = ("learner", "A", "B", "C", "D", "d_prime", "sensitivity", "specificity", "corrected")


def smoothed_metrics(table: ContingencyTable) -> MonitoringMetrics:
    """Metrics for a table with an empty margin: every rate is (count + 0.5) / (margin + 1).

    Used only so that learners who answered everything right (or wrong) can
    still be placed; the result is always flagged ``corrected``.
    """
    A, B, C, D = table.as_tuple()
    h, f = (A + 0.5) / (A + C + 1), (B + 0.5) / (B + D + 1)
    return MonitoringMetrics(
        d_prime=inverse_normal_cdf(h) - inverse_normal_cdf(f),
        sensitivity=h,
        specificity=1.0 - f,
        corrected=True,
    )


@dataclass(frozen=True)
class LearnerAssessment:
    learner: int
    profile: PerceptionProfile
    table: ContingencyTable
    metrics: MonitoringMetrics
    performance: float


def assess_learner(graph: HeteroGraph, profile: PerceptionProfile) -> LearnerAssessment:
    """Contingency counts, metrics and fraction of correct responses for one learner."""
    table = contingency(profile, graph)
    try:
        metrics = d_prime(table)
    except AssessmentError:
        metrics = smoothed_metrics(table)
    responses = graph.learner_responses(profile.learner)
    performance = sum(responses.values()) / len(responses)
    return LearnerAssessment(profile.learner, profile, table, metrics, performance)


def assess_cohort(graph: HeteroGraph, inferred: dict[int, tuple[set[int], set[int]]]) -> list[LearnerAssessment]:
    """Assess every learner with at least one response, in learner order."""
    out = []
    for i in range(graph.n_learners):
        if not graph.learner_responses(i):
            continue
        profile = complete_profile(graph, i, inferred.get(i, (set(), set())))
        out.append(assess_learner(graph, profile))
    return out


def _fmt(x: float) -> str:
    return repr(round(float(x), 12))


def metrics_csv(graph: HeteroGraph, assessments: list[LearnerAssessment]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for a in assessments:
        m = a.metrics
        w.writerow([graph.learners[a.learner], *a.table.as_tuple(), _fmt(m.d_prime), _fmt(m.sensitivity), _fmt(m.specificity), str(m.corrected).lower()])
    return buf.getvalue()


def write_metrics_csv(graph: HeteroGraph, assessments: list[LearnerAssessment], path: str | Path) -> None:
    Path(path).write_text(metrics_csv(graph, assessments), encoding="utf-8")
