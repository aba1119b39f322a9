from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from threec.graph import from_document  # noqa: E402


def small_document() -> dict:
    """2 learners, chain A -> B -> C, two items (on A and C)."""
    return {
        "learners": ["s1", "s2"],
        "concepts": [{"id": "A", "label": "a"}, {"id": "B", "label": "b"}, {"id": "C", "label": "c"}],
        "assessments": [{"id": "q1", "label": "", "concept": "A"}, {"id": "q2", "label": "", "concept": "C"}],
        "prerequisites": [["A", "B"], ["B", "C"]],
        "perceptions": [
            {"learner": "s1", "concept": "A", "state": "know"},
            {"learner": "s1", "concept": "B", "state": "know"},
            {"learner": "s2", "concept": "C", "state": "dont_know"},
        ],
        "responses": [
            {"learner": "s1", "assessment": "q1", "correct": 1},
            {"learner": "s1", "assessment": "q2", "correct": 0},
            {"learner": "s2", "assessment": "q1", "correct": 0},
        ],
    }


def fc_a_document(seed: int = 5) -> dict:
    """Class-sized fixture: 109 learners, 211 concepts, 48 items, 226 prerequisites,
    6349 know edges and 2187 latent (learner, assessed concept) pairs."""
    rng = np.random.default_rng(seed)
    n_s, n_k, n_q = 109, 211, 48
    learners = [f"s{i:03d}" for i in range(n_s)]
    concepts = [{"id": f"k{i:03d}", "label": f"concept {i}"} for i in range(n_k)]
    assessed = sorted(rng.choice(n_k, n_q, replace=False).tolist())
    assessments = [{"id": f"q{j:02d}", "label": "", "concept": f"k{k:03d}"} for j, k in enumerate(assessed)]
    pairs = [(a, b) for a in range(n_k) for b in range(a + 1, min(n_k, a + 6))]
    chosen = rng.choice(len(pairs), 226, replace=False)
    prereqs = [[f"k{pairs[i][0]:03d}", f"k{pairs[i][1]:03d}"] for i in sorted(chosen)]
    # 3045 mentioned assessed pairs: 2500 know + 545 dont-know; 3849 know on other concepts
    assessed_pairs = [(s, k) for s in range(n_s) for k in assessed]
    mentioned = rng.choice(len(assessed_pairs), 3045, replace=False)
    know_assessed = [assessed_pairs[i] for i in mentioned[:2500]]
    dont_assessed = [assessed_pairs[i] for i in mentioned[2500:]]
    aset = set(assessed)
    other = [(s, k) for s in range(n_s) for k in range(n_k) if k not in aset]
    know_other = [other[i] for i in rng.choice(len(other), 3849, replace=False)]
    perceptions = [{"learner": learners[s], "concept": concepts[k]["id"], "state": "know"} for s, k in know_assessed + know_other]
    perceptions += [{"learner": learners[s], "concept": concepts[k]["id"], "state": "dont_know"} for s, k in dont_assessed]
    responses = [
        {"learner": learners[s], "assessment": f"q{j:02d}", "correct": int(rng.random() < 0.6)}
        for s in range(n_s) for j in range(n_q)
    ]
    return {
        "learners": learners, "concepts": concepts, "assessments": assessments,
        "prerequisites": prereqs, "perceptions": perceptions, "responses": responses,
    }


@pytest.fixture
def small_doc():
    return small_document()


@pytest.fixture
def small_graph():
    return from_document(small_document())


@pytest.fixture(scope="session")
def default_cohort():
    from threec.synth import SynthConfig, gen_cohort

    return gen_cohort(SynthConfig())


# acceptance criteria report one line each at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
