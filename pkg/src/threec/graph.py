"""Heterogeneous learner/concept/assessment graph: data model, I/O, validation."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class NodeKind(str, enum.Enum):
    LEARNER = "learner"
    CONCEPT = "concept"
    ASSESSMENT = "assessment"


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    index: int

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("node index must be non-negative")


class GraphError(Exception):
    """Raised when a graph file cannot be turned into a valid HeteroGraph."""

    def __init__(self, message: str, diagnostics: list["Diagnostic"] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class GraphParseError(GraphError):
    pass


class GraphValidationError(GraphError):
    @property
    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    ids: tuple[str, ...]
    message: str

    def __str__(self) -> str:
        return f"{self.code}({', '.join(self.ids)}): {self.message}"


@dataclass(frozen=True)
class Concept:
    id: str
    label: str = ""


@dataclass(frozen=True)
class Assessment:
    id: str
    label: str = ""
    concept: str = ""


@dataclass(frozen=True)
class HeteroGraph:
    """Immutable Capture-phase graph.

    Edges are stored on dense integer indices; ``learners``/``concepts``/
    ``assessments`` give the external ids in file order. ``item_concept`` is
    indexed by assessment and holds its single concept index.
    """

    learners: tuple[str, ...]
    concepts: tuple[Concept, ...]
    assessments: tuple[Assessment, ...]
    prereq_edges: frozenset[tuple[int, int]]
    item_concept: tuple[int, ...]
    know_edges: frozenset[tuple[int, int]]
    dontknow_edges: frozenset[tuple[int, int]]
    responses: dict[tuple[int, int], int] = field(hash=False, compare=True)

    @property
    def n_learners(self) -> int:
        return len(self.learners)

    @property
    def n_concepts(self) -> int:
        return len(self.concepts)

    @property
    def n_assessments(self) -> int:
        return len(self.assessments)

    def learner_index(self, learner: str | int) -> int:
        if isinstance(learner, int):
            if not 0 <= learner < self.n_learners:
                raise KeyError(f"unknown learner index {learner}")
            return learner
        try:
            return self._learner_lookup()[learner]
        except KeyError:
            raise KeyError(f"unknown learner {learner!r}") from None

    def concept_index(self, concept: str) -> int:
        return self._concept_lookup()[concept]

    def _learner_lookup(self) -> dict[str, int]:
        cache = self.__dict__.get("_learner_ix")
        if cache is None:
            cache = {s: i for i, s in enumerate(self.learners)}
            object.__setattr__(self, "_learner_ix", cache)
        return cache

    def _concept_lookup(self) -> dict[str, int]:
        cache = self.__dict__.get("_concept_ix")
        if cache is None:
            cache = {c.id: i for i, c in enumerate(self.concepts)}
            object.__setattr__(self, "_concept_ix", cache)
        return cache

    def assessed_concepts(self) -> frozenset[int]:
        """K_Q: concepts that some assessment item targets."""
        return frozenset(self.item_concept)

    def _by_learner(self, name: str, pairs) -> list:
        cache = self.__dict__.get(name)
        if cache is None:
            cache = [set() for _ in range(self.n_learners)]
            for s, k in pairs:
                cache[s].add(k)
            object.__setattr__(self, name, cache)
        return cache

    def known(self, learner: int) -> set[int]:
        return set(self._by_learner("_know_by", self.know_edges)[learner])

    def dont_know(self, learner: int) -> set[int]:
        return set(self._by_learner("_dont_by", self.dontknow_edges)[learner])

    def learner_responses(self, learner: int) -> dict[int, int]:
        cache = self.__dict__.get("_resp_by")
        if cache is None:
            cache = [{} for _ in range(self.n_learners)]
            for (s, q), r in self.responses.items():
                cache[s][q] = r
            object.__setattr__(self, "_resp_by", cache)
        return dict(cache[learner])

    def with_perceptions(
        self, know: Iterable[tuple[int, int]], dont_know: Iterable[tuple[int, int]]
    ) -> "HeteroGraph":
        """Copy with the perception edge sets replaced (e.g. a training view)."""
        return HeteroGraph(
            learners=self.learners,
            concepts=self.concepts,
            assessments=self.assessments,
            prereq_edges=self.prereq_edges,
            item_concept=self.item_concept,
            know_edges=frozenset(know),
            dontknow_edges=frozenset(dont_know),
            responses=self.responses,
        )

    def fingerprint(self) -> str:
        payload = json.dumps(to_document(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def topological_order(n: int, edges: Iterable[tuple[int, int]]) -> list[int] | None:
    """Kahn's algorithm with smallest-index tie-breaking; None if cyclic."""
    import heapq

    out: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for a, b in edges:
        out[a].append(b)
        indeg[b] += 1
    heap = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(heap)
    order: list[int] = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    return order if len(order) == n else None


def concept_depths(graph: HeteroGraph) -> list[int]:
    """Longest-path depth of every concept from the DAG roots (roots are 0)."""
    order = topological_order(graph.n_concepts, graph.prereq_edges)
    if order is None:
        raise GraphValidationError("prerequisite graph has a cycle")
    parents: list[list[int]] = [[] for _ in range(graph.n_concepts)]
    for a, b in graph.prereq_edges:
        parents[b].append(a)
    depth = [0] * graph.n_concepts
    for v in order:
        if parents[v]:
            depth[v] = 1 + max(depth[p] for p in parents[v])
    return depth


# ---------------------------------------------------------------------------
# validation


@dataclass
class _RawGraph:
    learners: list[str]
    concepts: list[dict]
    assessments: list[dict]
    prerequisites: list[list[str]]
    perceptions: list[dict]
    responses: list[dict]


def _find_cycle(nodes: list[str], edges: list[tuple[str, str]]) -> list[str]:
    adjacency: dict[str, list[str]] = {v: [] for v in nodes}
    for a, b in edges:
        adjacency.setdefault(a, []).append(b)
    color: dict[str, int] = {}
    for root in adjacency:
        if color.get(root):
            continue
        stack = [(root, iter(adjacency[root]))]
        path = [root]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = 2
                stack.pop()
                path.pop()
            elif color.get(nxt, 0) == 1:
                return path[path.index(nxt):] + [nxt]
            elif color.get(nxt, 0) == 0:
                color[nxt] = 1
                stack.append((nxt, iter(adjacency.get(nxt, []))))
                path.append(nxt)
    return []


def _diagnose(raw: _RawGraph) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    learner_ids = set()
    for s in raw.learners:
        if s in learner_ids:
            diags.append(Diagnostic("duplicate_node", (s,), f"learner {s} listed twice"))
        learner_ids.add(s)
    concept_ids = set()
    for c in raw.concepts:
        if c["id"] in concept_ids:
            diags.append(Diagnostic("duplicate_node", (c["id"],), f"concept {c['id']} listed twice"))
        concept_ids.add(c["id"])

    item_targets: dict[str, set[str]] = {}
    for a in raw.assessments:
        targets = a["concept"] if isinstance(a["concept"], list) else [a["concept"]]
        item_targets.setdefault(a["id"], set()).update(targets)
    assessment_ids = set(item_targets)
    for q, targets in item_targets.items():
        if len(targets) != 1:
            diags.append(
                Diagnostic(
                    "duplicate_item_mapping",
                    (q,),
                    f"assessment {q} maps to {len(targets)} concepts, expected exactly one",
                )
            )
        for k in sorted(targets):
            if k not in concept_ids:
                diags.append(Diagnostic("dangling_endpoint", (q, k), f"assessment {q} targets unknown concept {k}"))

    for a, b in raw.prerequisites:
        for k in (a, b):
            if k not in concept_ids:
                diags.append(Diagnostic("dangling_endpoint", (a, b), f"prerequisite endpoint {k} is not a concept"))
    cycle = _find_cycle(sorted(concept_ids), [(a, b) for a, b in raw.prerequisites])
    if cycle:
        diags.append(Diagnostic("cycle", tuple(cycle), "prerequisite edges contain a cycle: " + " -> ".join(cycle)))

    states: dict[tuple[str, str], set[str]] = {}
    for p in raw.perceptions:
        s, k, state = p["learner"], p["concept"], p["state"]
        if state not in ("know", "dont_know"):
            diags.append(Diagnostic("bad_state", (s, k), f"unknown perception state {state!r}"))
            continue
        if s not in learner_ids or k not in concept_ids:
            diags.append(Diagnostic("dangling_endpoint", (s, k), "perception edge references a missing node"))
        states.setdefault((s, k), set()).add(state)
    for (s, k), seen in states.items():
        if len(seen) > 1:
            diags.append(
                Diagnostic("perception_conflict", (s, k), f"learner {s} reports both know and dont_know for {k}")
            )

    answered: dict[tuple[str, str], int] = {}
    for r in raw.responses:
        s, q, c = r["learner"], r["assessment"], r["correct"]
        if s not in learner_ids or q not in assessment_ids:
            diags.append(Diagnostic("dangling_endpoint", (s, q), "response references a missing node"))
        if c not in (0, 1):
            diags.append(Diagnostic("bad_response", (s, q), f"correct must be 0 or 1, got {c!r}"))
        if (s, q) in answered and answered[(s, q)] != c:
            diags.append(Diagnostic("response_conflict", (s, q), "two different outcomes for one response"))
        answered[(s, q)] = c
    return diags


def validate(graph: HeteroGraph | dict) -> list[Diagnostic]:
    """Return all invariant violations; an empty list means the graph is valid."""
    doc = graph if isinstance(graph, dict) else to_document(graph)
    return _diagnose(_raw_from_document(doc))


# ---------------------------------------------------------------------------
# documents and files


def _raw_from_document(doc: dict) -> _RawGraph:
    if not isinstance(doc, dict):
        raise GraphParseError("graph document must be a JSON object")
    try:
        learners = [s if isinstance(s, str) else s["id"] for s in doc.get("learners", [])]
        concepts = [{"id": c["id"], "label": c.get("label", "")} for c in doc.get("concepts", [])]
        assessments = [
            {"id": a["id"], "label": a.get("label", ""), "concept": a["concept"]}
            for a in doc.get("assessments", [])
        ]
        prerequisites = [list(p) for p in doc.get("prerequisites", [])]
        if any(len(p) != 2 for p in prerequisites):
            raise GraphParseError("prerequisites must be [from, to] pairs")
        perceptions = [
            {"learner": p["learner"], "concept": p["concept"], "state": p["state"]}
            for p in doc.get("perceptions", [])
        ]
        responses = [
            {"learner": r["learner"], "assessment": r["assessment"], "correct": r["correct"]}
            for r in doc.get("responses", [])
        ]
    except (KeyError, TypeError) as exc:
        raise GraphParseError(f"malformed graph document: missing or bad field {exc}") from exc
    return _RawGraph(learners, concepts, assessments, prerequisites, perceptions, responses)


def from_document(doc: dict) -> HeteroGraph:
    raw = _raw_from_document(doc)
    diags = _diagnose(raw)
    if diags:
        raise GraphValidationError(
            "graph failed validation: " + "; ".join(str(d) for d in diags), diags
        )
    learner_ix = {s: i for i, s in enumerate(raw.learners)}
    concept_ix = {c["id"]: i for i, c in enumerate(raw.concepts)}
    assessment_ix = {a["id"]: i for i, a in enumerate(raw.assessments)}
    know, dont = set(), set()
    for p in raw.perceptions:
        edge = (learner_ix[p["learner"]], concept_ix[p["concept"]])
        (know if p["state"] == "know" else dont).add(edge)
    return HeteroGraph(
        learners=tuple(raw.learners),
        concepts=tuple(Concept(c["id"], c["label"]) for c in raw.concepts),
        assessments=tuple(
            Assessment(a["id"], a["label"], a["concept"] if isinstance(a["concept"], str) else a["concept"][0])
            for a in raw.assessments
        ),
        prereq_edges=frozenset((concept_ix[a], concept_ix[b]) for a, b in raw.prerequisites),
        item_concept=tuple(
            concept_ix[a["concept"] if isinstance(a["concept"], str) else a["concept"][0]]
            for a in raw.assessments
        ),
        know_edges=frozenset(know),
        dontknow_edges=frozenset(dont),
        responses={
            (learner_ix[r["learner"]], assessment_ix[r["assessment"]]): int(r["correct"])
            for r in raw.responses
        },
    )


def to_document(graph: HeteroGraph) -> dict:
    """Serialize to the JSON graph schema with deterministic ordering."""
    S, K = graph.learners, graph.concepts
    Q = graph.assessments
    return {
        "learners": list(S),
        "concepts": [{"id": c.id, "label": c.label} for c in K],
        "assessments": [
            {"id": a.id, "label": a.label, "concept": K[graph.item_concept[j]].id}
            for j, a in enumerate(Q)
        ],
        "prerequisites": [[K[a].id, K[b].id] for a, b in sorted(graph.prereq_edges)],
        "perceptions": [
            {"learner": S[s], "concept": K[k].id, "state": state}
            for (s, k), state in sorted(
                [(e, "know") for e in graph.know_edges]
                + [(e, "dont_know") for e in graph.dontknow_edges]
            )
        ],
        "responses": [
            {"learner": S[s], "assessment": Q[q].id, "correct": r}
            for (s, q), r in sorted(graph.responses.items())
        ],
    }


def _read_responses_csv(path: Path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            try:
                rows.append(
                    {"learner": row["learner"], "assessment": row["assessment"], "correct": int(row["correct"])}
                )
            except (KeyError, ValueError) as exc:
                raise GraphParseError(f"{path}: bad response row {row}") from exc
    return rows


def load_graph(path: str | Path, responses_csv: str | Path | None = None) -> HeteroGraph:
    """Read a graph JSON file (plus optional responses CSV) and validate it.

    Raises FileNotFoundError for a missing file, GraphParseError for malformed
    content and GraphValidationError (with ``.diagnostics``) for invariant
    violations.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphParseError(f"{path}: invalid JSON ({exc})") from exc
    if responses_csv is not None:
        if not isinstance(doc, dict):
            raise GraphParseError("graph document must be a JSON object")
        doc = dict(doc)
        doc["responses"] = list(doc.get("responses", [])) + _read_responses_csv(Path(responses_csv))
    return from_document(doc)


def save_graph(graph: HeteroGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_document(graph), indent=1) + "\n", encoding="utf-8")


def mention_partition(graph: HeteroGraph, learner: str | int) -> tuple[set[int], set[int], set[int]]:
    """Split K_Q into (reported know, reported don't-know, latent) for a learner."""
    i = graph.learner_index(learner)
    kq = set(graph.assessed_concepts())
    plus, minus = graph.known(i), graph.dont_know(i)
    return plus & kq, minus & kq, kq - plus - minus


def latent_pairs(graph: HeteroGraph) -> list[tuple[int, int]]:
    """All (learner, concept) LPS pairs, sorted."""
    kq = graph.assessed_concepts()
    mentioned = graph.know_edges | graph.dontknow_edges
    return [(s, k) for s in range(graph.n_learners) for k in sorted(kq) if (s, k) not in mentioned]
