"""Comparison link scorers: random guesser, homogeneous GCN and GAT, label propagation.

The neural baselines see only learner-concept know edges (one homogeneous
node set with self-loops) and share the HGNN's loss, optimizer and negative
sampler. Label propagation runs per learner over the prerequisite graph.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autograd as ag
from .autograd import Index, Tensor
from .graph import HeteroGraph
from .hgnn import HgnnConfig, HgnnModel, fit, glorot, HgnnScorer, init_model, train as hgnn_train
from .perception import EdgeSplit, NegativeSampler, build_perception_subgraph

METHODS = ("RG", "GCN", "GAT", "LP", "HGNN")


class LinkScorer:
    """Maps (learner, concept) index pairs to probabilities in [0, 1]."""

    method: str = ""

    def scores(self, learners, concepts) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, learner: int, concept: int) -> float:
        return float(self.scores([learner], [concept])[0])


class RandomScorer(LinkScorer):
    method = "RG"

    def __init__(self, seed: int):
        self.seed = seed
        self._memo: dict[tuple[int, int], float] = {}

    def scores(self, learners, concepts) -> np.ndarray:
        out = []
        for s, k in zip(np.asarray(learners).tolist(), np.asarray(concepts).tolist()):
            key = (int(s), int(k))
            if key not in self._memo:
                # seeded per pair, so results do not depend on query order
                self._memo[key] = float(np.random.default_rng([self.seed, key[0], key[1]]).random())
            out.append(self._memo[key])
        return np.array(out)


def rg_score(seed: int) -> RandomScorer:
    return RandomScorer(seed)


class EmbeddingScorer(LinkScorer):
    def __init__(self, method: str, h: dict[str, Tensor]):
        self.method = method
        self.h_learner = h["learner"].data.copy()
        self.h_concept = h["concept"].data.copy()

    def scores(self, learners, concepts) -> np.ndarray:
        learners = np.asarray(learners, dtype=np.int64)
        concepts = np.asarray(concepts, dtype=np.int64)
        return ag.stable_sigmoid(np.einsum("ij,ij->i", self.h_learner[learners], self.h_concept[concepts]))


class HgnnLinkScorer(LinkScorer):
    method = "HGNN"

    def __init__(self, model: HgnnModel, scorer: HgnnScorer, history=None):
        self.model, self._scorer, self.history = model, scorer, history

    def scores(self, learners, concepts) -> np.ndarray:
        return self._scorer.scores(learners, concepts)


def hgnn_scorer(graph: HeteroGraph, split: EdgeSplit, config: HgnnConfig) -> HgnnLinkScorer:
    sub = build_perception_subgraph(graph)
    model = init_model(config, sub)
    model, history = hgnn_train(model, sub, split, graph, config)
    train_sub = build_perception_subgraph(split.training_graph(graph))
    return HgnnLinkScorer(model, HgnnScorer(model, train_sub), history)


# homogeneous bipartite graph ---------------------------------------------


class BipartiteIndex:
    """Learners and concepts as one node set; know edges both ways plus self-loops."""

    def __init__(self, n_learners: int, n_concepts: int, know_edges):
        self.n_learners, self.n_concepts = n_learners, n_concepts
        n = n_learners + n_concepts
        e = np.array(sorted(know_edges), dtype=np.int64).reshape(-1, 2)
        loops = np.arange(n)
        src = np.concatenate([e[:, 0], e[:, 1] + n_learners, loops])
        dst = np.concatenate([e[:, 1] + n_learners, e[:, 0], loops])
        self.src, self.dst = Index(src, n), Index(dst, n)
        deg = np.bincount(dst, minlength=n).astype(np.float64)
        norm = 1.0 / np.sqrt(deg[src] * deg[dst])
        self.norm_adj = sp.csr_matrix((norm, (dst, src)), shape=(n, n))
        self.n = n

    def split(self, h: Tensor) -> dict[str, Tensor]:
        return {"learner": h[: self.n_learners], "concept": h[self.n_learners :]}


def _homogeneous_model(config: HgnnConfig, n: int, attention: bool, n_learners: int, n_concepts: int) -> HgnnModel:
    rng = np.random.default_rng(config.seed)
    d = config.embed_dim
    params = {"emb": glorot(rng, n, d)}
    for layer in range(2):
        params[f"W.{layer}"] = glorot(rng, d, d)
        if attention:
            params[f"a.{layer}"] = glorot(rng, 2 * d, 1, shape=(2 * d,))
    model = HgnnModel(config, {k: ag.parameter(v) for k, v in params.items()}, n_learners, n_concepts)
    model.zero_grad()
    return model


def gcn_embed(model: HgnnModel, index: BipartiteIndex) -> dict[str, Tensor]:
    h = model.params["emb"]
    for layer in range(2):
        h = ag.spmm(index.norm_adj, h @ model.params[f"W.{layer}"])
        if layer == 0:
            h = ag.silu(h)
    return index.split(h)


def gat_attention(index: BipartiteIndex, z: Tensor, a: Tensor) -> Tensor:
    d = z.shape[1]
    s_dst = (z @ a[:d].reshape(d, 1)).reshape(-1)
    s_src = (z @ a[d:].reshape(d, 1)).reshape(-1)
    e = ag.leaky_relu(
        ag.gather(s_dst.reshape(-1, 1), index.dst).reshape(-1) + ag.gather(s_src.reshape(-1, 1), index.src).reshape(-1),
        0.2,
    )
    return ag.segment_softmax(e, index.dst)


def gat_embed(model: HgnnModel, index: BipartiteIndex) -> dict[str, Tensor]:
    h = model.params["emb"]
    for layer in range(2):
        z = h @ model.params[f"W.{layer}"]
        alpha = gat_attention(index, z, model.params[f"a.{layer}"])
        h = ag.segment_sum(ag.gather(z, index.src) * alpha.reshape(-1, 1), index.dst)
        if layer == 0:
            h = ag.silu(h)
    return index.split(h)


def _train_homogeneous(graph: HeteroGraph, split: EdgeSplit, config: HgnnConfig, attention: bool) -> EmbeddingScorer:
    train_graph = split.training_graph(graph)
    index = BipartiteIndex(graph.n_learners, graph.n_concepts, split.train_pos)
    model = _homogeneous_model(config, index.n, attention, graph.n_learners, graph.n_concepts)
    sampler = NegativeSampler(train_graph, n_e=config.n_e, rho=config.rho, mode=config.sampler, n_e_rule=config.n_e_rule)
    positives = np.array(sorted(split.train_pos), dtype=np.int64).reshape(-1, 2)
    embed = gat_embed if attention else gcn_embed
    build = lambda edges: BipartiteIndex(graph.n_learners, graph.n_concepts, map(tuple, edges.tolist()))  # noqa: E731
    history = fit(model, build, positives, sampler, config, embed=embed)
    scorer = EmbeddingScorer("GAT" if attention else "GCN", embed(model, index))
    scorer.model, scorer.history = model, history
    return scorer


def gcn_train(graph: HeteroGraph, split: EdgeSplit, config: HgnnConfig) -> EmbeddingScorer:
    return _train_homogeneous(graph, split, config, attention=False)


def gat_train(graph: HeteroGraph, split: EdgeSplit, config: HgnnConfig) -> EmbeddingScorer:
    return _train_homogeneous(graph, split, config, attention=True)


# label propagation ---------------------------------------------------------


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass
class LabelPropagationScorer(LinkScorer):
    table: np.ndarray
    converged: bool
    sweeps: int
    method: str = "LP"

    def scores(self, learners, concepts) -> np.ndarray:
        return self.table[np.asarray(learners, dtype=np.int64), np.asarray(concepts, dtype=np.int64)]


def propagate(init: np.ndarray, clamped: np.ndarray, prereq_edges, iterations: int, damping: float, tol: float = 1e-9):
    """Iterate f <- damping * mean_neighbours(f) + (1 - damping) * init on the
    undirected prerequisite graph, holding clamped entries fixed.

    ``init``/``clamped`` are (learners, concepts) arrays. Returns the scores,
    whether the last sweep moved less than ``tol`` and the sweeps used.
    """
    n = init.shape[1]
    edges = np.array(sorted(prereq_edges), dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 1], edges[:, 0]])
    cols = np.concatenate([edges[:, 0], edges[:, 1]])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    has_nb = deg > 0
    mean_op = sp.diags(np.where(has_nb, 1.0 / np.maximum(deg, 1), 0.0)) @ adj
    f = init.copy()
    for sweep in range(1, iterations + 1):
        nb_mean = np.asarray(mean_op @ f.T).T
        # concepts with no prerequisite neighbours keep their initial score
        new = np.where(has_nb[None, :], damping * nb_mean + (1.0 - damping) * init, init)
        new = np.where(clamped, init, new)
        delta = np.max(np.abs(new - f)) if f.size else 0.0
        f = new
        if delta < tol:
            return f, True, sweep
    return f, False, iterations


def label_propagation(graph: HeteroGraph, split: EdgeSplit | None, iterations: int = 1000, damping: float = 0.9) -> LabelPropagationScorer:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    view = split.training_graph(graph) if split is not None else graph
    init = np.full((graph.n_learners, graph.n_concepts), 0.5)
    clamped = np.zeros_like(init, dtype=bool)
    for s, k in view.know_edges:
        init[s, k], clamped[s, k] = 1.0, True
    for s, k in view.dontknow_edges:
        init[s, k], clamped[s, k] = 0.0, True
    table, converged, sweeps = propagate(init, clamped, graph.prereq_edges, iterations, damping)
    if not converged:
        warnings.warn(f"label propagation did not converge in {iterations} sweeps", ConvergenceWarning)
    return LabelPropagationScorer(table, converged, sweeps)
