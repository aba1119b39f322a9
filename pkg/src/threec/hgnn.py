"""Heterogeneous attention GNN for learner-concept link prediction.

Message passing runs over four relations on the perception subgraph
(know, know_rev, prereq, prereq_rev) plus a self transform. Each relation
has its own linear map and additive attention; per-node relation outputs
are averaged over the relations present at that node, added to the
self-transformed embedding and passed through SiLU. Links are scored with
sigmoid(dot(h_learner, h_concept)).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autograd as ag
from .autograd import Index, Tensor
from .graph import HeteroGraph, mention_partition
from .metrics import auc
from .perception import EdgeSplit, NegativeSampler, PerceptionSubgraph, build_perception_subgraph, with_know_edges

EPS = 1e-7
RELATIONS = ("know", "know_rev", "prereq", "prereq_rev")
CHECKPOINT_FORMAT = "threec-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HgnnConfig:
    embed_dim: int = 64
    layers: int = 2
    learning_rate: float = 0.01
    epochs: int = 200
    threshold: float = 0.5
    weight_decay: float = 0.0
    seed: int = 0
    n_e: int | None = None
    rho: float = 0.5
    sampler: str = "eins"
    mask_ratio: float = 0.5
    n_e_rule: str = "positives"

    def __post_init__(self):
        if self.embed_dim < 1 or self.layers < 1 or self.epochs < 1:
            raise ValueError("embed_dim, layers and epochs must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.n_e is not None and self.n_e < 1:
            raise ValueError("n_e must be >= 1")
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        if not 0.0 <= self.mask_ratio <= 1.0:
            raise ValueError("mask_ratio must lie in [0, 1]")
        if self.sampler not in ("eins", "uniform"):
            raise ValueError("sampler must be 'eins' or 'uniform'")

    @classmethod
    def desk_preset(cls, **overrides) -> "HgnnConfig":
        """Small-embedding setup used for evaluation on desk-scale cohorts.

        Wide free embeddings memorize a 100-learner graph; four dimensions
        plus N_e = |explicit don't-know| keep the learner base rate learnable.
        """
        base = dict(embed_dim=4, n_e_rule="explicit", mask_ratio=0.5)
        base.update(overrides)
        return cls(**base)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape if shape is not None else (fan_in, fan_out))


@dataclass
class HgnnModel:
    """Parameters by name; each ``Tensor`` carries its own gradient buffer."""

    config: HgnnConfig
    params: dict[str, Tensor]
    n_learners: int
    n_concepts: int
    fingerprint: str = ""

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = np.zeros_like(p.data)

    def relation_weight(self, relation: str, layer: int) -> Tensor:
        return self.params[f"W.{relation}.{layer}"]

    def attention(self, relation: str, layer: int) -> Tensor:
        return self.params[f"a.{relation}.{layer}"]


def init_model(config: HgnnConfig, subgraph: PerceptionSubgraph) -> HgnnModel:
    rng = np.random.default_rng(config.seed)
    d = config.embed_dim
    params: dict[str, np.ndarray] = {
        "emb.learner": glorot(rng, subgraph.n_learners, d),
        "emb.concept": glorot(rng, subgraph.n_concepts, d),
    }
    for layer in range(config.layers):
        for rel in RELATIONS + ("self",):
            params[f"W.{rel}.{layer}"] = glorot(rng, d, d)
        for rel in RELATIONS:
            params[f"a.{rel}.{layer}"] = glorot(rng, 2 * d, 1, shape=(2 * d,))
    model = HgnnModel(
        config,
        {k: ag.parameter(v) for k, v in params.items()},
        subgraph.n_learners,
        subgraph.n_concepts,
    )
    model.zero_grad()
    return model


@dataclass
class _Relation:
    src_type: str
    dst_type: str
    src: Index
    dst: Index


class HeteroIndex:
    """Edge index arrays for the four message relations of a perception subgraph."""

    def __init__(self, sub: PerceptionSubgraph):
        S, K = sub.n_learners, sub.n_concepts
        know = np.array(sub.know_edges, dtype=np.int64).reshape(-1, 2)
        pre = np.array(sub.prereq_edges, dtype=np.int64).reshape(-1, 2)
        self.sizes = {"learner": S, "concept": K}
        self.relations = {
            "know": _Relation("learner", "concept", Index(know[:, 0], S), Index(know[:, 1], K)),
            "know_rev": _Relation("concept", "learner", Index(know[:, 1], K), Index(know[:, 0], S)),
            "prereq": _Relation("concept", "concept", Index(pre[:, 0], K), Index(pre[:, 1], K)),
            "prereq_rev": _Relation("concept", "concept", Index(pre[:, 1], K), Index(pre[:, 0], K)),
        }
        present = {t: np.zeros(n) for t, n in self.sizes.items()}
        for rel in self.relations.values():
            present[rel.dst_type] += rel.dst.counts > 0
        self.relation_count = {t: np.maximum(c, 1.0).reshape(-1, 1) for t, c in present.items()}


def _attend(rel: _Relation, x_src: Tensor, x_dst: Tensor, W: Tensor, a: Tensor) -> Tensor:
    d = W.shape[1]
    z_src = x_src @ W
    z_dst = x_dst @ W
    # a . [z_dst || z_src], evaluated per node and then gathered per edge
    s_dst = (z_dst @ a[:d].reshape(d, 1)).reshape(-1)
    s_src = (z_src @ a[d:].reshape(d, 1)).reshape(-1)
    e = ag.leaky_relu(
        ag.gather(s_dst.reshape(-1, 1), rel.dst).reshape(-1)
        + ag.gather(s_src.reshape(-1, 1), rel.src).reshape(-1),
        0.2,
    )
    alpha = ag.segment_softmax(e, rel.dst)
    msg = ag.gather(z_src, rel.src) * alpha.reshape(-1, 1)
    return ag.segment_sum(msg, rel.dst)


def attention_coefficients(model: HgnnModel, index: HeteroIndex, relation: str, layer: int = 0) -> np.ndarray:
    """Per-edge attention weights of one relation at the first layer's inputs."""
    if layer != 0:
        raise NotImplementedError("only first-layer coefficients are exposed")
    rel = index.relations[relation]
    h = {"learner": model.params["emb.learner"], "concept": model.params["emb.concept"]}
    W, a = model.relation_weight(relation, 0), model.attention(relation, 0)
    d = W.shape[1]
    z_src = h[rel.src_type].data @ W.data
    z_dst = h[rel.dst_type].data @ W.data
    e = z_dst[rel.dst.idx] @ a.data[:d] + z_src[rel.src.idx] @ a.data[d:]
    e = np.where(e > 0, e, 0.2 * e)
    return ag.segment_softmax(Tensor(e), rel.dst).data


def forward(model: HgnnModel, subgraph: PerceptionSubgraph | HeteroIndex) -> dict[str, Tensor]:
    index = subgraph if isinstance(subgraph, HeteroIndex) else HeteroIndex(subgraph)
    if index.sizes["learner"] != model.n_learners or index.sizes["concept"] != model.n_concepts:
        raise ValueError(
            f"model shaped for {model.n_learners} learners/{model.n_concepts} concepts, "
            f"graph has {index.sizes['learner']}/{index.sizes['concept']}"
        )
    h = {"learner": model.params["emb.learner"], "concept": model.params["emb.concept"]}
    for layer in range(model.config.layers):
        incoming: dict[str, Tensor | None] = {"learner": None, "concept": None}
        for name, rel in index.relations.items():
            if len(rel.dst) == 0:
                continue
            agg = _attend(rel, h[rel.src_type], h[rel.dst_type], model.relation_weight(name, layer), model.attention(name, layer))
            cur = incoming[rel.dst_type]
            incoming[rel.dst_type] = agg if cur is None else cur + agg
        W_self = model.relation_weight("self", layer)
        new = {}
        for t, x in h.items():
            pre = x @ W_self
            if incoming[t] is not None:
                pre = pre + incoming[t] / index.relation_count[t]
            new[t] = ag.silu(pre)
        h = new
    return h


def score(h_s, h_k) -> float:
    """Probability that a learner perceives a concept as known."""
    h_s = np.asarray(h_s, dtype=np.float64)
    h_k = np.asarray(h_k, dtype=np.float64)
    if h_s.shape != h_k.shape:
        raise ValueError(f"dimension mismatch: {h_s.shape} vs {h_k.shape}")
    return float(ag.stable_sigmoid(np.array(h_s @ h_k)))


def pair_logits(h: dict[str, Tensor], learners: np.ndarray, concepts: np.ndarray) -> Tensor:
    n_s, n_k = h["learner"].shape[0], h["concept"].shape[0]
    return ag.rowdot(ag.gather(h["learner"], Index(learners, n_s)), ag.gather(h["concept"], Index(concepts, n_k)))


def bce(preds: Tensor, labels: np.ndarray) -> Tensor:
    p = ag.clip(preds, EPS, 1.0 - EPS)
    y = np.asarray(labels, dtype=np.float64)
    return -(ag.log(p) * y + ag.log(1.0 - p) * (1.0 - y)).mean()


def bce_loss(preds, labels) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if preds.size == 0:
        raise ValueError("bce_loss needs at least one prediction")
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have the same length")
    return float(bce(Tensor(preds), labels).data)


class Adam:
    def __init__(self, params: dict[str, Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps, self.wd = lr, beta1, beta2, eps, weight_decay
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.wd:
                g = g + self.wd * p.data
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class EpochRecord:
    loss: float
    train_auc: float
    wall_ms: int


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.epochs]

    def __len__(self) -> int:
        return len(self.epochs)


def objective(model, index, learners, concepts, labels, embed=None) -> Tensor:
    h = (embed or forward)(model, index)
    return bce(ag.sigmoid(pair_logits(h, learners, concepts)), labels)


def fit(model, build_index, positives: np.ndarray, sampler: NegativeSampler, config: HgnnConfig, embed=forward) -> TrainHistory:
    """Full-batch training loop shared by the HGNN and the neural baselines.

    Each epoch a random ``mask_ratio`` share of the positives is hidden from
    message passing and only those hidden edges are scored as positives, so
    the model cannot score a pair by seeing its own edge. ``build_index``
    turns a set of visible know edges into the model's graph index.
    """
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(model.params, config.learning_rate, weight_decay=config.weight_decay)
    history = TrainHistory()
    n_pos = len(positives)
    n_hidden = n_pos if config.mask_ratio >= 1.0 else int(round(config.mask_ratio * n_pos))
    full_index = build_index(positives) if n_hidden == 0 else None
    for _ in range(config.epochs):
        t0 = time.perf_counter()
        if n_hidden:
            hidden = np.zeros(n_pos, dtype=bool)
            hidden[rng.permutation(n_pos)[:n_hidden]] = True
            index = build_index(positives[~hidden])
            target = positives[hidden]
        else:
            index, target = full_index, positives
        neg_s, neg_k = sampler.sample(rng)
        learners = np.concatenate([target[:, 0], neg_s])
        concepts = np.concatenate([target[:, 1], neg_k])
        labels = np.concatenate([np.ones(len(target)), np.zeros(len(neg_s))])
        model.zero_grad()
        h = embed(model, index)
        preds = ag.sigmoid(pair_logits(h, learners, concepts))
        loss = bce(preds, labels)
        loss.backward()
        opt.step()
        train_auc = auc(preds.data, labels) if len(target) and len(neg_s) else float("nan")
        history.epochs.append(
            EpochRecord(float(loss.data), train_auc, int((time.perf_counter() - t0) * 1000))
        )
        for p in model.params.values():
            if not np.all(np.isfinite(p.data)):
                raise FloatingPointError("non-finite parameter after optimizer step")
    return history


def train(
    model: HgnnModel,
    subgraph: PerceptionSubgraph,
    split: EdgeSplit | None,
    graph: HeteroGraph,
    config: HgnnConfig | None = None,
) -> tuple[HgnnModel, TrainHistory]:
    """Train in place on the split's training positives (all know edges if no split).

    Held-out pairs are hidden from both message passing and negative sampling.
    """
    config = config or model.config
    if split is not None:
        train_graph = split.training_graph(graph)
        sub = with_know_edges(subgraph, split.train_pos)
    else:
        train_graph, sub = graph, subgraph
    positives = np.array(sub.know_edges, dtype=np.int64).reshape(-1, 2)
    sampler = NegativeSampler(train_graph, n_e=config.n_e, rho=config.rho, mode=config.sampler, n_e_rule=config.n_e_rule)
    build = lambda edges: HeteroIndex(with_know_edges(sub, map(tuple, edges.tolist())))  # noqa: E731
    history = fit(model, build, positives, sampler, config)
    if split is None:
        model.fingerprint = graph.fingerprint()
    return model, history


class HgnnScorer:
    """Frozen embeddings of a trained model, queried per (learner, concept)."""

    method = "HGNN"

    def __init__(self, model: HgnnModel, subgraph: PerceptionSubgraph):
        h = forward(model, subgraph)
        self.h_learner = h["learner"].data.copy()
        self.h_concept = h["concept"].data.copy()

    def scores(self, learners, concepts) -> np.ndarray:
        learners = np.asarray(learners, dtype=np.int64)
        concepts = np.asarray(concepts, dtype=np.int64)
        logits = np.einsum("ij,ij->i", self.h_learner[learners], self.h_concept[concepts])
        return ag.stable_sigmoid(logits)

    def __call__(self, learner: int, concept: int) -> float:
        return float(self.scores([learner], [concept])[0])


def infer_lps(model: HgnnModel, graph: HeteroGraph, theta: float | None = None) -> dict[int, tuple[set[int], set[int]]]:
    """Threshold link scores on every learner's latent concepts (score >= theta means know)."""
    theta = model.config.threshold if theta is None else theta
    scorer = HgnnScorer(model, build_perception_subgraph(graph))
    return threshold_latent(scorer, graph, theta)


def threshold_latent(scorer, graph: HeteroGraph, theta: float) -> dict[int, tuple[set[int], set[int]]]:
    out = {}
    for i in range(graph.n_learners):
        latent = sorted(mention_partition(graph, i)[2])
        know, dont = set(), set()
        if latent:
            for k, y in zip(latent, scorer.scores([i] * len(latent), latent)):
                (know if y >= theta else dont).add(k)
        out[i] = (know, dont)
    return out


# checkpoints ---------------------------------------------------------------


class CheckpointError(Exception):
    pass


def save_checkpoint(model: HgnnModel, path: str | Path) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "graph_fingerprint": model.fingerprint,
        "n_learners": model.n_learners,
        "n_concepts": model.n_concepts,
        "params": {
            k: {"shape": list(p.data.shape), "data": p.data.ravel(order="C").tolist()}
            for k, p in model.params.items()
        },
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path, graph: HeteroGraph | None = None) -> HgnnModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    if graph is not None and doc["graph_fingerprint"] != graph.fingerprint():
        raise CheckpointError(
            f"checkpoint was trained on graph {doc['graph_fingerprint'][:12]}, "
            f"but the given graph is {graph.fingerprint()[:12]}"
        )
    params = {
        k: ag.parameter(np.array(v["data"], dtype=np.float64).reshape(v["shape"]))
        for k, v in doc["params"].items()
    }
    model = HgnnModel(HgnnConfig(**doc["config"]), params, doc["n_learners"], doc["n_concepts"], doc["graph_fingerprint"])
    model.zero_grad()
    return model
