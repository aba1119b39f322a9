"""Pattern classification and three-part feedback reports.

Learners are split on cohort medians: performance first, then d', then
sensitivity for the high-performance low-d' branch. Reports answer where the
learner is heading, how they are doing and what to do next.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol

from .graph import HeteroGraph, concept_depths
from .sdt import LearnerAssessment, MonitoringMetrics, PerceptionProfile

PATTERNS = ("WC", "AL", "UC", "OC", "LC")

PATTERN_NAMES = {
    "WC": "Well Calibrated",
    "AL": "Aware of Limitations",
    "UC": "Underconfident",
    "OC": "Overconfident",
    "LC": "Liberal Criterion",
}

SDT_CATEGORIES = {"A": "Hit", "B": "False Alarm", "C": "Miss", "D": "Correct Rejection"}


class CoachError(ValueError):
    pass


@dataclass(frozen=True)
class CohortThresholds:
    perf_median: float
    dprime_median: float
    sensitivity_median: float
    specificity_median: float


def cohort_thresholds(entries: list[tuple[float, MonitoringMetrics]]) -> CohortThresholds:
    """Exact medians of performance, d', sensitivity and specificity."""
    if len(entries) < 2:
        raise CoachError(f"median thresholds need at least 2 learners, got {len(entries)}")
    return CohortThresholds(
        perf_median=statistics.median(p for p, _ in entries),
        dprime_median=statistics.median(m.d_prime for _, m in entries),
        sensitivity_median=statistics.median(m.sensitivity for _, m in entries),
        specificity_median=statistics.median(m.specificity for _, m in entries),
    )


@dataclass(frozen=True)
class LearnerPattern:
    tag: str
    basis: dict

    @property
    def name(self) -> str:
        return PATTERN_NAMES[self.tag]


def _level(value: float, median: float) -> str:
    return "High" if value >= median else "Low"


def classify(perf: float, metrics: MonitoringMetrics, thresholds: CohortThresholds) -> LearnerPattern:
    """Decision tree over median splits; ties count as High.

    Specificity never changes the outcome: every low-performance low-d'
    learner is OC. It is recorded in the basis for the report.
    """
    perf_level = _level(perf, thresholds.perf_median)
    d_level = _level(metrics.d_prime, thresholds.dprime_median)
    sens_level = _level(metrics.sensitivity, thresholds.sensitivity_median)
    spec_level = _level(metrics.specificity, thresholds.specificity_median)
    if d_level == "High":
        tag = "WC" if perf_level == "High" else "AL"
    elif perf_level == "High":
        tag = "LC" if sens_level == "High" else "UC"
    else:
        tag = "OC"
    basis = {
        "performance": {"value": perf, "median": thresholds.perf_median, "level": perf_level},
        "d_prime": {"value": metrics.d_prime, "median": thresholds.dprime_median, "level": d_level},
        "sensitivity": {"value": metrics.sensitivity, "median": thresholds.sensitivity_median, "level": sens_level},
        "specificity": {"value": metrics.specificity, "median": thresholds.specificity_median, "level": spec_level},
    }
    return LearnerPattern(tag, basis)


# Feed Up --------------------------------------------------------------------


def build_feed_up(pattern: LearnerPattern, metrics: MonitoringMetrics, thresholds: CohortThresholds) -> dict:
    b = pattern.basis
    position = (
        f"{pattern.name} ({pattern.tag}): performance {b['performance']['level']}, "
        f"d' {b['d_prime']['level']} ({metrics.d_prime:.3f} vs cohort median {thresholds.dprime_median:.3f})"
    )
    if pattern.tag in ("UC", "LC", "OC"):
        position += (
            f", sensitivity {b['sensitivity']['level']} ({metrics.sensitivity:.3f}),"
            f" specificity {b['specificity']['level']} ({metrics.specificity:.3f})"
        )
    if pattern.tag == "WC":
        goal = "You are already Well Calibrated; the goal is to keep both results and self-judgement accurate."
        priority = "maintain"
    elif b["performance"]["level"] == "Low":
        goal = "Reach Well Calibrated by closing knowledge gaps first, then keeping self-judgement accurate."
        priority = "knowledge gaps"
    else:
        goal = "Reach Well Calibrated by bringing your self-judgement in line with what you already know."
        priority = "knowledge monitoring"
    return {"current_position": position, "goal_statement": goal, "priority": priority}


# Feed Back ------------------------------------------------------------------


def concept_outcomes(profile: PerceptionProfile, graph: HeteroGraph) -> dict[int, bool]:
    """Correctness per responded, profiled concept; one wrong item marks it incorrect."""
    out: dict[int, bool] = {}
    for j, correct in graph.learner_responses(profile.learner).items():
        k = graph.item_concept[j]
        if k in profile.states:
            out[k] = out.get(k, True) and bool(correct)
    return dict(sorted(out.items()))


def _parents(graph: HeteroGraph) -> list[list[int]]:
    parents: list[list[int]] = [[] for _ in range(graph.n_concepts)]
    for a, b in sorted(graph.prereq_edges):
        parents[b].append(a)
    return parents


def ancestors_within(parents: list[list[int]], concept: int, depth: int) -> dict[int, int]:
    """Prerequisite ancestors reachable in at most ``depth`` steps, with their distance."""
    found: dict[int, int] = {}
    frontier = [concept]
    for d in range(1, depth + 1):
        nxt = []
        for c in frontier:
            for p in parents[c]:
                if p not in found and p != concept:
                    found[p] = d
                    nxt.append(p)
        frontier = nxt
    return found


def build_feed_back(profile: PerceptionProfile, graph: HeteroGraph, error_depth: int = 2) -> dict:
    outcomes = concept_outcomes(profile, graph)
    cid = lambda k: graph.concepts[k].id  # noqa: E731
    incorrect = [k for k, ok in outcomes.items() if not ok]
    wrong = set(incorrect)
    parents = _parents(graph)
    related = []
    for k in incorrect:
        for a, d in sorted(ancestors_within(parents, k, error_depth).items(), key=lambda t: (t[1], t[0])):
            if a in wrong:
                related.append({"concept": cid(k), "prerequisite": cid(a), "distance": d})
    categories = {}
    for k, ok in outcomes.items():
        cell = ("A" if ok else "B") if profile.knows(k) else ("C" if ok else "D")
        categories[cid(k)] = SDT_CATEGORIES[cell]
    return {
        "correct_concepts": [cid(k) for k, ok in outcomes.items() if ok],
        "incorrect_concepts": [cid(k) for k in incorrect],
        "related_past_errors": related,
        "sdt_category": categories,
    }


# Feed Forward -----------------------------------------------------------------


@dataclass(frozen=True)
class Strategy:
    theory: str
    targets: frozenset
    core: str

    def text(self) -> str:
        return f"{self.theory}: {self.core}"


STRATEGY_CATALOG = (
    Strategy("Self-regulated learning", frozenset(PATTERNS), "planning, monitoring, reflective regulation"),
    Strategy("Anxiety-cognitive capacity", frozenset(PATTERNS), "low-stakes assessment, self-pacing"),
    Strategy("Knowledge monitoring", frozenset({"UC", "OC", "LC"}), "strategic help seeking, fading scaffolding"),
    Strategy("Self-verification", frozenset({"OC"}), "self-explanation, expectation-outcome comparison"),
    Strategy("Cognitive load", frozenset({"UC", "OC", "LC"}), "attention guidance, prioritized feedback cues"),
    Strategy("Depth of processing", frozenset({"WC", "AL"}), "apply to new problems, why-and-how questions"),
)


def strategies_for(tag: str) -> list[str]:
    return [s.text() for s in STRATEGY_CATALOG if tag in s.targets]


class FeedForwardGenerator(Protocol):
    tag: str

    def __call__(self, payload: dict) -> str: ...


class TemplateGenerator:
    """Deterministic prose built only from the structured payload."""

    tag = "Template"

    def __call__(self, payload: dict) -> str:
        lines = []
        if payload["priority_relearn"]:
            lines.append("Relearn first, foundations before what builds on them: " + ", ".join(payload["priority_relearn"]) + ".")
        if payload["review"]:
            lines.append("Review and consolidate: " + ", ".join(payload["review"]) + ".")
        if payload["challenge"]:
            lines.append("Extend what you have mastered with harder problems on: " + ", ".join(payload["challenge"]) + ".")
        lines.append(f"Monitoring strategies for the {payload['pattern_name']} pattern:")
        lines.extend(f"- {s}" for s in payload["km_strategies"])
        return "\n".join(lines)


class ExternalGenerator:
    """Wraps any callable that turns the payload into prose, e.g. a language-model client."""

    tag = "External"

    def __init__(self, fn: Callable[[dict], str]):
        self.fn = fn

    def __call__(self, payload: dict) -> str:
        text = self.fn(payload)
        if not isinstance(text, str):
            raise TypeError("external generator must return a string")
        return text


def feed_forward_plan(pattern: LearnerPattern, profile: PerceptionProfile, graph: HeteroGraph, depths: list[int] | None = None) -> dict:
    """Structured Feed Forward lists, ordered foundational-first."""
    depths = depths if depths is not None else concept_depths(graph)
    outcomes = concept_outcomes(profile, graph)
    cid = lambda k: graph.concepts[k].id  # noqa: E731
    by_depth = lambda ks: sorted(ks, key=lambda k: (depths[k], k))  # noqa: E731
    relearn = [k for k, ok in outcomes.items() if profile.knows(k) != ok]
    relearn_set = set(relearn)
    review = [k for k, ok in outcomes.items() if not ok and k not in relearn_set]
    children: list[list[int]] = [[] for _ in range(graph.n_concepts)]
    for a, b in graph.prereq_edges:
        children[a].append(b)
    wrong = {k for k, ok in outcomes.items() if not ok}

    def has_wrong_descendant(k: int) -> bool:
        seen, stack = set(), list(children[k])
        while stack:
            c = stack.pop()
            if c in wrong:
                return True
            if c not in seen:
                seen.add(c)
                stack.extend(children[c])
        return False

    challenge = [k for k, ok in outcomes.items() if ok and profile.knows(k) and not has_wrong_descendant(k)]
    return {
        "priority_relearn": [cid(k) for k in by_depth(relearn)],
        "review": [cid(k) for k in by_depth(review)],
        "challenge": [cid(k) for k in by_depth(challenge)],
        "km_strategies": strategies_for(pattern.tag),
    }


def build_feed_forward(
    pattern: LearnerPattern,
    profile: PerceptionProfile,
    graph: HeteroGraph,
    generator: FeedForwardGenerator | None = None,
    depths: list[int] | None = None,
) -> tuple[dict, str]:
    """Feed Forward section plus the tag of the generator that wrote its advice.

    A failing external generator falls back to the template with a warning.
    """
    plan = feed_forward_plan(pattern, profile, graph, depths)
    payload = dict(plan, pattern=pattern.tag, pattern_name=pattern.name)
    template = TemplateGenerator()
    generator = generator or template
    try:
        advice, tag = generator(payload), generator.tag
    except Exception as exc:  # any generator fault must not lose the report
        warnings.warn(f"feed-forward generator failed ({exc!r}); using template", RuntimeWarning)
        advice, tag = template(payload), template.tag
    return dict(plan, advice=advice), tag


# reports ----------------------------------------------------------------------

SECTION_HEADERS = {
    "feed_up": "Where am I going?",
    "feed_back": "How am I going?",
    "feed_forward": "Where to next?",
}

_STR_LIST = {"type": "array", "items": {"type": "string"}}

REPORT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["learner", "pattern", "basis", "feed_up", "feed_back", "feed_forward", "generator_tag"],
    "properties": {
        "learner": {"type": "string"},
        "pattern": {"enum": list(PATTERNS)},
        "basis": {"type": "object"},
        "feed_up": {
            "type": "object",
            "additionalProperties": False,
            "required": ["current_position", "goal_statement", "priority"],
            "properties": {
                "current_position": {"type": "string"},
                "goal_statement": {"type": "string"},
                "priority": {"enum": ["knowledge gaps", "knowledge monitoring", "maintain"]},
            },
        },
        "feed_back": {
            "type": "object",
            "additionalProperties": False,
            "required": ["correct_concepts", "incorrect_concepts", "related_past_errors", "sdt_category"],
            "properties": {
                "correct_concepts": _STR_LIST,
                "incorrect_concepts": _STR_LIST,
                "related_past_errors": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["concept", "prerequisite", "distance"],
                        "properties": {
                            "concept": {"type": "string"},
                            "prerequisite": {"type": "string"},
                            "distance": {"type": "integer", "minimum": 1},
                        },
                    },
                },
                "sdt_category": {"type": "object", "additionalProperties": {"enum": list(SDT_CATEGORIES.values())}},
            },
        },
        "feed_forward": {
            "type": "object",
            "additionalProperties": False,
            "required": ["priority_relearn", "review", "challenge", "km_strategies", "advice"],
            "properties": {
                "priority_relearn": _STR_LIST,
                "review": _STR_LIST,
                "challenge": _STR_LIST,
                "km_strategies": _STR_LIST,
                "advice": {"type": "string"},
            },
        },
        "generator_tag": {"enum": ["Template", "External"]},
    },
}


@dataclass(frozen=True)
class FeedbackReport:
    learner: str
    pattern: str
    basis: dict
    feed_up: dict
    feed_back: dict
    feed_forward: dict
    generator_tag: str = "Template"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FeedbackReport":
        return cls(**json.loads(text))

    def to_markdown(self) -> str:
        up, back, fwd = self.feed_up, self.feed_back, self.feed_forward
        bullet = lambda items: [f"- {x}" for x in items] or ["- (none)"]  # noqa: E731
        out = [f"# Feedback for {self.learner}", "", f"Pattern: **{PATTERN_NAMES[self.pattern]} ({self.pattern})**", ""]
        out += [f"## {SECTION_HEADERS['feed_up']}", "", f"- Current position: {up['current_position']}",
                f"- Goal: {up['goal_statement']}", f"- Priority: {up['priority']}", ""]
        out += [f"## {SECTION_HEADERS['feed_back']}", "", "### Correct concepts", *bullet(back["correct_concepts"]), "",
                "### Incorrect concepts", *bullet(back["incorrect_concepts"]), "", "### Related past errors"]
        out += bullet(f"{e['concept']} <- {e['prerequisite']} (distance {e['distance']})" for e in back["related_past_errors"])
        out += ["", "### Perception versus result", "", "| Concept | Category |", "|---|---|"]
        out += [f"| {k} | {v} |" for k, v in back["sdt_category"].items()]
        out += ["", f"## {SECTION_HEADERS['feed_forward']}", "", "### Relearn first", *bullet(fwd["priority_relearn"]), "",
                "### Review", *bullet(fwd["review"]), "", "### Challenge", *bullet(fwd["challenge"]), "",
                "### Monitoring strategies", *bullet(fwd["km_strategies"]), "", "### Advice", "", fwd["advice"], ""]
        return "\n".join(out)


def validate_report(doc: dict) -> list[str]:
    """Schema violations of a report document (empty when valid)."""
    import jsonschema

    validator = jsonschema.Draft7Validator(REPORT_SCHEMA)
    return [f"{'/'.join(map(str, e.path)) or '<root>'}: {e.message}" for e in validator.iter_errors(doc)]


def assemble_report(graph: HeteroGraph, learner: int, pattern: LearnerPattern, feed_up: dict, feed_back: dict, feed_forward: dict, generator_tag: str = "Template") -> FeedbackReport:
    return FeedbackReport(
        learner=graph.learners[learner],
        pattern=pattern.tag,
        basis=pattern.basis,
        feed_up=feed_up,
        feed_back=feed_back,
        feed_forward=feed_forward,
        generator_tag=generator_tag,
    )


@dataclass
class CoachingRun:
    thresholds: CohortThresholds
    patterns: dict[int, LearnerPattern] = field(default_factory=dict)
    reports: dict[int, FeedbackReport] = field(default_factory=dict)


def coach_cohort(
    graph: HeteroGraph,
    assessments: list[LearnerAssessment],
    thresholds: CohortThresholds | None = None,
    generator: FeedForwardGenerator | None = None,
    error_depth: int = 2,
) -> CoachingRun:
    """Classify every assessed learner and build their report.

    Thresholds default to the medians of ``assessments`` themselves.
    """
    if thresholds is None:
        thresholds = cohort_thresholds([(a.performance, a.metrics) for a in assessments])
    depths = concept_depths(graph)
    run = CoachingRun(thresholds)
    for a in assessments:
        pattern = classify(a.performance, a.metrics, thresholds)
        up = build_feed_up(pattern, a.metrics, thresholds)
        back = build_feed_back(a.profile, graph, error_depth)
        fwd, tag = build_feed_forward(pattern, a.profile, graph, generator, depths)
        run.patterns[a.learner] = pattern
        run.reports[a.learner] = assemble_report(graph, a.learner, pattern, up, back, fwd, tag)
    return run


SUMMARY_COLUMNS = ("learner", "pattern", "perf", "d_prime", "sensitivity", "specificity")


def cohort_summary_csv(graph: HeteroGraph, assessments: list[LearnerAssessment], run: CoachingRun) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for a in assessments:
        m = a.metrics
        w.writerow([graph.learners[a.learner], run.patterns[a.learner].tag, *(repr(round(float(x), 12)) for x in (a.performance, m.d_prime, m.sensitivity, m.specificity))])
    return buf.getvalue()


def write_reports(graph: HeteroGraph, assessments: list[LearnerAssessment], run: CoachingRun, out_dir: str | Path) -> list[Path]:
    """One JSON and one Markdown file per learner plus ``summary.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for learner, report in sorted(run.reports.items()):
        for suffix, text in ((".json", report.to_json()), (".md", report.to_markdown())):
            p = out / f"{report.learner}{suffix}"
            p.write_text(text, encoding="utf-8")
            written.append(p)
    summary = out / "summary.csv"
    summary.write_text(cohort_summary_csv(graph, assessments, run), encoding="utf-8")
    written.append(summary)
    return written
