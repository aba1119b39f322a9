"""Synthetic cohorts with known latent perceived states.

Mastery flows down a layered prerequisite DAG, so a learner's perceptions
of neighbouring concepts are correlated; personas fix how faithfully
perception tracks mastery.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import Assessment, Concept, HeteroGraph, topological_order

PERSONAS = ("WC", "AL", "UC", "OC", "LC")

# (sensitivity, specificity) of self-perception against true mastery
PERSONA_RATES = {
    "WC": (0.9, 0.9),
    "AL": (0.9, 0.9),
    "UC": (0.5, 0.9),
    "OC": (0.9, 0.4),
    "LC": (0.95, 0.3),
}

# Beta(a, b) ability. Mastery also decays down the DAG, so these place
# the strong personas near 0.6 mastered and AL/OC near 0.35: low enough to
# split on performance, high enough that AL answers are not mostly guesses.
PERSONA_ABILITY = {
    "WC": (40.0, 1.0),
    "AL": (50.0, 25.0),
    "UC": (40.0, 1.0),
    "OC": (50.0, 25.0),
    "LC": (40.0, 1.0),
}


@dataclass(frozen=True)
class SynthConfig:
    n_learners: int = 100
    n_concepts: int = 50
    n_items: int = 40
    dag_layers: int = 5
    prereq_prob: float = 0.15
    mastery_base: float = 0.8
    mastery_penalty: float = 0.2
    slip: float = 0.1
    guess: float = 0.2
    mention_prob: float = 0.6
    persona_mix: dict = field(default_factory=lambda: {p: 0.2 for p in PERSONAS})
    seed: int = 42

    def __post_init__(self):
        for name in ("n_learners", "n_concepts", "n_items", "dag_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_items > self.n_concepts:
            raise ValueError("n_items cannot exceed n_concepts")
        for name in ("prereq_prob", "mastery_base", "mastery_penalty", "slip", "guess", "mention_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        unknown = set(self.persona_mix) - set(PERSONAS)
        if unknown:
            raise ValueError(f"unknown personas {sorted(unknown)}")
        weights = [self.persona_mix.get(p, 0.0) for p in PERSONAS]
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("persona weights must be non-negative and sum to 1")

    @classmethod
    def paper_scale(cls, **overrides) -> "SynthConfig":
        """Class size comparable to the courses the method was evaluated on."""
        base = dict(n_learners=150, n_concepts=211, n_items=45, prereq_prob=0.03)
        base.update(overrides)
        return cls(**base)


@dataclass
class GroundTruth:
    personas: list[str]
    ability: list[float]
    true_mastery: dict[tuple[int, int], int]
    true_perceived: dict[tuple[int, int], int]
    latent_labels: dict[tuple[int, int], int]

    def to_document(self, graph: HeteroGraph) -> dict:
        S, K = graph.learners, graph.concepts
        return {
            "latent_labels": [
                {"learner": S[s], "concept": K[k].id, "perceived": v}
                for (s, k), v in sorted(self.latent_labels.items())
            ],
            "personas": {S[i]: p for i, p in enumerate(self.personas)},
        }

    def save(self, graph: HeteroGraph, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_document(graph), indent=1) + "\n", encoding="utf-8")


def load_latent_labels(path: str | Path, graph: HeteroGraph) -> dict[tuple[int, int], int]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        (graph.learner_index(r["learner"]), graph.concept_index(r["concept"])): int(r["perceived"])
        for r in doc["latent_labels"]
    }


def layer_sizes(n_concepts: int, layers: int) -> list[int]:
    return [len(a) for a in np.array_split(np.arange(n_concepts), max(1, min(layers, n_concepts)))]


def gen_concept_dag(config: SynthConfig, seed: int | None = None) -> tuple[list[int], list[tuple[int, int]]]:
    """Layered DAG; each concept may require concepts of the layer directly below it.

    Returns the layer of every concept and the prerequisite edges.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    sizes = layer_sizes(config.n_concepts, config.dag_layers)
    layer_of = [l for l, n in enumerate(sizes) for _ in range(n)]
    starts = np.cumsum([0] + sizes)
    edges = []
    for l in range(1, len(sizes)):
        lower = range(starts[l - 1], starts[l])
        upper = range(starts[l], starts[l + 1])
        draws = rng.random((len(lower), len(upper)))
        for a, i in enumerate(lower):
            for b, j in enumerate(upper):
                if draws[a, b] < config.prereq_prob:
                    edges.append((i, j))
    return layer_of, edges


def gen_cohort(config: SynthConfig) -> tuple[HeteroGraph, GroundTruth]:
    rng = np.random.default_rng(config.seed)
    dag_seed = int(rng.integers(2**31))
    _, prereqs = gen_concept_dag(config, dag_seed)
    n, m = config.n_learners, config.n_concepts
    parents: list[list[int]] = [[] for _ in range(m)]
    for a, b in prereqs:
        parents[b].append(a)
    order = topological_order(m, prereqs)

    assessed = np.sort(rng.choice(m, size=config.n_items, replace=False))
    weights = np.array([config.persona_mix.get(p, 0.0) for p in PERSONAS])
    personas = [PERSONAS[i] for i in rng.choice(len(PERSONAS), size=n, p=weights)]

    ability = np.empty(n)
    mastery = np.zeros((n, m), dtype=np.int64)
    perceived = np.zeros((n, m), dtype=np.int64)
    for i, persona in enumerate(personas):
        ability[i] = rng.beta(*PERSONA_ABILITY[persona])
        u = rng.random(m)
        for k in order:
            ok = all(mastery[i, p] for p in parents[k])
            prob = ability[i] * (config.mastery_base if ok else config.mastery_penalty)
            mastery[i, k] = int(u[k] < prob)
        sens, spec = PERSONA_RATES[persona]
        v = rng.random(m)
        perceived[i] = np.where(mastery[i] == 1, v < sens, v < 1.0 - spec)

    disclosed = rng.random((n, m)) < config.mention_prob
    answer_u = rng.random((n, config.n_items))

    know, dont, latent = set(), set(), {}
    for i in range(n):
        for k in assessed.tolist():
            if disclosed[i, k]:
                (know if perceived[i, k] else dont).add((i, k))
            else:
                latent[(i, k)] = int(perceived[i, k])
    responses = {}
    for j, k in enumerate(assessed.tolist()):
        p_correct = np.where(mastery[:, k] == 1, 1.0 - config.slip, config.guess)
        for i in range(n):
            responses[(i, j)] = int(answer_u[i, j] < p_correct[i])

    width = len(str(max(n, m, config.n_items) - 1))
    graph = HeteroGraph(
        learners=tuple(f"s{i:0{width}d}" for i in range(n)),
        concepts=tuple(Concept(f"k{k:0{width}d}", f"concept {k}") for k in range(m)),
        assessments=tuple(
            Assessment(f"q{j:0{width}d}", f"item on concept {k}", f"k{k:0{width}d}")
            for j, k in enumerate(assessed.tolist())
        ),
        prereq_edges=frozenset(prereqs),
        item_concept=tuple(int(k) for k in assessed),
        know_edges=frozenset(know),
        dontknow_edges=frozenset(dont),
        responses=responses,
    )
    truth = GroundTruth(
        personas=personas,
        ability=ability.tolist(),
        true_mastery={(i, k): int(mastery[i, k]) for i in range(n) for k in range(m)},
        true_perceived={(i, k): int(perceived[i, k]) for i in range(n) for k in range(m)},
        latent_labels=latent,
    )
    return graph, truth


def config_dict(config: SynthConfig) -> dict:
    return asdict(config)
