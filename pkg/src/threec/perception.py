"""Perception subgraph, train/test edge splits and explicit-informed negative sampling.

All randomness goes through ``numpy.random.default_rng(seed)`` (PCG64), so a
split or a negative batch is a pure function of its arguments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import HeteroGraph


class SamplingError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class PerceptionSubgraph:
    n_learners: int
    n_concepts: int
    know_edges: tuple[tuple[int, int], ...]
    prereq_edges: tuple[tuple[int, int], ...]


def build_perception_subgraph(graph: HeteroGraph) -> PerceptionSubgraph:
    """Learners + concepts joined by know edges and prerequisite edges only."""
    return PerceptionSubgraph(
        n_learners=graph.n_learners,
        n_concepts=graph.n_concepts,
        know_edges=tuple(sorted(graph.know_edges)),
        prereq_edges=tuple(sorted(graph.prereq_edges)),
    )


def with_know_edges(sub: PerceptionSubgraph, edges) -> PerceptionSubgraph:
    return PerceptionSubgraph(sub.n_learners, sub.n_concepts, tuple(sorted(edges)), sub.prereq_edges)


@dataclass(frozen=True)
class EdgeSplit:
    train_pos: tuple[tuple[int, int], ...]
    test_pos: tuple[tuple[int, int], ...]
    test_neg: tuple[tuple[int, int], ...]
    seed: int
    ratio: float

    def training_graph(self, graph: HeteroGraph) -> HeteroGraph:
        """Graph view a model may train on: held-out pairs are hidden."""
        held_out = set(self.test_neg)
        return graph.with_perceptions(self.train_pos, [e for e in graph.dontknow_edges if e not in held_out])

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "ratio": self.ratio,
                "train_pos": [list(e) for e in self.train_pos],
                "test_pos": [list(e) for e in self.test_pos],
                "test_neg": [list(e) for e in self.test_neg],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "EdgeSplit":
        d = json.loads(text)
        pairs = lambda key: tuple(tuple(e) for e in d[key])  # noqa: E731
        return cls(pairs("train_pos"), pairs("test_pos"), pairs("test_neg"), int(d["seed"]), float(d["ratio"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")


def split_edges(sub: PerceptionSubgraph, graph: HeteroGraph, ratio: float = 0.8, seed: int = 0) -> EdgeSplit:
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    know = list(sub.know_edges)
    if not know:
        raise SamplingError("no_know_edges", "perception subgraph has no know edges to split")
    rng = np.random.default_rng(seed)
    n_test = int(round((1.0 - ratio) * len(know)))
    perm = rng.permutation(len(know))
    test_ix = set(perm[:n_test].tolist())
    train = tuple(e for i, e in enumerate(know) if i not in test_ix)
    test = tuple(e for i, e in enumerate(know) if i in test_ix)
    dont = sorted(graph.dontknow_edges)
    n_neg = min(len(test), len(dont))
    neg_ix = sorted(rng.choice(len(dont), size=n_neg, replace=False).tolist()) if n_neg else []
    return EdgeSplit(train, test, tuple(dont[i] for i in neg_ix), seed, ratio)


@dataclass(frozen=True)
class NegativeBatch:
    learner: int
    explicit_negs: tuple[int, ...]
    implicit_negs: tuple[int, ...]
    n_e: int
    rho: float

    @property
    def concepts(self) -> tuple[int, ...]:
        return self.explicit_negs + self.implicit_negs


def implicit_count(n_e: int, rho: float) -> int:
    return int(math.floor(rho * n_e))


def eins_sample(graph: HeteroGraph, learner: int, n_e: int, rho: float = 0.5, seed: int = 0) -> NegativeBatch:
    """Draw negatives for one learner: up to ``n_e`` from its explicit
    don't-know concepts, plus up to ``floor(rho * n_e)`` from assessed
    concepts it never mentioned. Both draws are uniform without replacement;
    each is capped at its pool size.
    """
    if n_e < 1:
        raise ValueError("n_e must be >= 1")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    i = graph.learner_index(learner)
    plus, minus = graph.known(i), graph.dont_know(i)
    explicit_pool = np.array(sorted(minus), dtype=np.int64)
    implicit_pool = np.array(sorted(set(graph.assessed_concepts()) - plus - minus), dtype=np.int64)
    if len(explicit_pool) == 0 and len(implicit_pool) == 0:
        raise SamplingError("no_negatives_available", f"learner {graph.learners[i]} has no negative pool")
    rng = np.random.default_rng(seed)
    n_exp = min(n_e, len(explicit_pool))
    n_imp = min(implicit_count(n_e, rho), len(implicit_pool))
    exp = rng.choice(explicit_pool, size=n_exp, replace=False) if n_exp else np.empty(0, np.int64)
    imp = rng.choice(implicit_pool, size=n_imp, replace=False) if n_imp else np.empty(0, np.int64)
    return NegativeBatch(i, tuple(int(k) for k in exp), tuple(int(k) for k in imp), n_e, rho)


def _padded(pools: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max((len(p) for p in pools), default=0)
    table = np.zeros((len(pools), max(width, 1)), dtype=np.int64)
    valid = np.zeros_like(table, dtype=bool)
    for i, p in enumerate(pools):
        table[i, : len(p)] = p
        valid[i, : len(p)] = True
    return table, valid


def _draw(table: np.ndarray, valid: np.ndarray, counts: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    # random keys + argsort = uniform sample without replacement per row
    keys = np.where(valid, rng.random(table.shape), np.inf)
    order = np.argsort(keys, axis=1)
    take = np.arange(table.shape[1])[None, :] < counts[:, None]
    rows = np.broadcast_to(np.arange(table.shape[0])[:, None], table.shape)[take]
    return rows, table[rows, order[take]]


N_E_RULES = ("positives", "explicit")


class NegativeSampler:
    """Per-epoch negative sampler for the whole cohort.

    ``mode="eins"`` follows the explicit-first law of ``eins_sample``.
    ``mode="uniform"`` is the ablation: the same total count drawn uniformly
    from unmentioned assessed concepts only. Without a fixed ``n_e`` the
    per-learner value follows ``n_e_rule``: the learner's positive count or
    its explicit don't-know count.
    """

    def __init__(self, graph: HeteroGraph, n_e=None, rho: float = 0.5, mode: str = "eins", n_e_rule: str = "positives"):
        if mode not in ("eins", "uniform"):
            raise ValueError(f"unknown sampler mode {mode!r}")
        if n_e_rule not in N_E_RULES:
            raise ValueError(f"unknown n_e rule {n_e_rule!r}")
        self.mode = mode
        kq = set(graph.assessed_concepts())
        explicit, implicit, n_es = [], [], []
        for i in range(graph.n_learners):
            plus, minus = graph.known(i), graph.dont_know(i)
            explicit.append(sorted(minus))
            implicit.append(sorted(kq - plus - minus))
            if n_e is not None:
                n_es.append(int(n_e))
            elif n_e_rule == "positives":
                n_es.append(max(len(plus), 1))
            else:
                n_es.append(max(len(minus), 1))
        self.n_e = np.array(n_es, dtype=np.int64)
        n_exp = np.minimum(self.n_e, [len(p) for p in explicit])
        n_imp = np.minimum(np.floor(rho * self.n_e).astype(np.int64), [len(p) for p in implicit])
        if mode == "eins":
            self.n_exp, self.n_imp = n_exp, n_imp
        else:
            self.n_exp = np.zeros_like(n_exp)
            self.n_imp = np.minimum(n_exp + n_imp, [len(p) for p in implicit])
        self._explicit = _padded(explicit)
        self._implicit = _padded(implicit)

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Return (learner indices, concept indices) of one epoch's negatives."""
        r1, c1 = _draw(*self._explicit, self.n_exp, rng)
        r2, c2 = _draw(*self._implicit, self.n_imp, rng)
        return np.concatenate([r1, r2]), np.concatenate([c1, c2])
