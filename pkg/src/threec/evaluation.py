"""Repeated-split comparison of link scorers and result tables.

Trial ``t`` uses seed ``base_seed + t`` for the edge split, the model
initialization and every sampler, so a table is a pure function of the
graph, the ground truth and the spec.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines
from .graph import HeteroGraph
from .hgnn import HgnnConfig
from .metrics import auc
from .perception import EdgeSplit, build_perception_subgraph, split_edges

ALL_METHODS = ("RG", "GCN", "GAT", "LP", "HGNN", "HGNN_noEINS")
EVAL_MODES = ("HeldOutExplicit", "TrueLatent")


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    methods: tuple[str, ...] = ALL_METHODS
    trials: int = 30
    ratio: float = 0.8
    base_seed: int = 0
    eval_mode: str = "TrueLatent"
    hgnn: HgnnConfig = field(default_factory=HgnnConfig.desk_preset)
    lp_iterations: int = 1000
    lp_damping: float = 0.9

    def __post_init__(self):
        if not self.methods:
            raise ExperimentError("at least one method is required")
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            raise ExperimentError(f"unknown methods {unknown}")
        if len(set(self.methods)) != len(self.methods):
            raise ExperimentError("methods must be distinct")
        if self.trials < 1:
            raise ExperimentError("trials must be positive")
        if not 0.0 < self.ratio < 1.0:
            raise ExperimentError("ratio must lie in (0, 1)")
        if self.eval_mode not in EVAL_MODES:
            raise ExperimentError(f"eval_mode must be one of {EVAL_MODES}")

    def trial_seeds(self) -> list[int]:
        return [self.base_seed + t for t in range(self.trials)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d


@dataclass
class ResultTable:
    methods: tuple[str, ...]
    aucs: dict[str, list[float]]
    dataset: str = "synthetic"

    def __post_init__(self):
        for m in self.methods:
            if not self.aucs.get(m):
                raise ExperimentError(f"no trials recorded for {m}")
            if any(not 0.0 <= a <= 1.0 for a in self.aucs[m]):
                raise ExperimentError(f"AUC outside [0, 1] for {m}")

    def mean(self, method: str) -> float:
        return statistics.fmean(self.aucs[method])

    def sd(self, method: str) -> float:
        xs = self.aucs[method]
        return statistics.stdev(xs) if len(xs) > 1 else 0.0

    def __eq__(self, other) -> bool:
        return isinstance(other, ResultTable) and (self.methods, self.aucs, self.dataset) == (other.methods, other.aucs, other.dataset)


# test pairs ---------------------------------------------------------------------


def held_out_pairs(split: EdgeSplit, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Held-out positives against held-out explicit negatives, capped at the smaller class."""
    pos, neg = sorted(split.test_pos), sorted(split.test_neg)
    n = min(len(pos), len(neg))
    if n == 0:
        raise ExperimentError("held-out split has no positives or no explicit negatives")
    rng = np.random.default_rng([seed, 1])
    pos = [pos[i] for i in sorted(rng.choice(len(pos), n, replace=False))]
    neg = [neg[i] for i in sorted(rng.choice(len(neg), n, replace=False))]
    pairs = np.array(pos + neg, dtype=np.int64)
    labels = np.concatenate([np.ones(n), np.zeros(n)])
    return pairs[:, 0], pairs[:, 1], labels


def latent_test_pairs(latent_labels: dict[tuple[int, int], int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if not latent_labels:
        raise ExperimentError("ground truth has no latent pairs")
    items = sorted(latent_labels.items())
    pairs = np.array([k for k, _ in items], dtype=np.int64)
    return pairs[:, 0], pairs[:, 1], np.array([v for _, v in items], dtype=np.float64)


# trials -------------------------------------------------------------------------


def build_scorer(method: str, graph: HeteroGraph, split: EdgeSplit, spec: ExperimentSpec, seed: int) -> baselines.LinkScorer:
    config = replace(spec.hgnn, seed=seed)
    if method == "RG":
        return baselines.rg_score(seed)
    if method == "LP":
        return baselines.label_propagation(graph, split, spec.lp_iterations, spec.lp_damping)
    if method == "GCN":
        return baselines.gcn_train(graph, split, config)
    if method == "GAT":
        return baselines.gat_train(graph, split, config)
    if method == "HGNN":
        return baselines.hgnn_scorer(graph, split, replace(config, sampler="eins"))
    if method == "HGNN_noEINS":
        return baselines.hgnn_scorer(graph, split, replace(config, sampler="uniform"))
    raise ExperimentError(f"unknown method {method!r}")


def run_trial(graph: HeteroGraph, latent_labels, spec: ExperimentSpec, seed: int) -> dict[str, float]:
    split = split_edges(build_perception_subgraph(graph), graph, spec.ratio, seed)
    if spec.eval_mode == "TrueLatent":
        learners, concepts, labels = latent_test_pairs(latent_labels)
    else:
        learners, concepts, labels = held_out_pairs(split, seed)
    return {m: float(auc(build_scorer(m, graph, split, spec, seed).scores(learners, concepts), labels)) for m in spec.methods}


def _trial_job(args):
    return run_trial(*args)


def run_experiment(
    graph: HeteroGraph,
    latent_labels: dict[tuple[int, int], int] | None,
    spec: ExperimentSpec,
    jobs: int = 1,
    dataset: str = "synthetic",
) -> ResultTable:
    """Run every trial (optionally across ``jobs`` worker processes) and collect AUCs in trial order."""
    if spec.eval_mode == "TrueLatent" and latent_labels is None:
        raise ExperimentError("TrueLatent mode needs a ground-truth sidecar")
    args = [(graph, latent_labels, spec, s) for s in spec.trial_seeds()]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_trial_job, args))
    else:
        results = [_trial_job(a) for a in args]
    return ResultTable(tuple(spec.methods), {m: [r[m] for r in results] for m in spec.methods}, dataset)


# serialization ----------------------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def table_to_csv(table: ResultTable) -> str:
    """One row per (method, trial); the trial AUCs are exact, so parsing restores the table."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["dataset", "method", "trial", "auc"])
    for m in table.methods:
        for t, a in enumerate(table.aucs[m]):
            w.writerow([table.dataset, m, t, _num(a)])
    return buf.getvalue()


def table_from_csv(text: str) -> ResultTable:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ExperimentError("result CSV has no rows")
    methods: list[str] = []
    aucs: dict[str, list[float]] = {}
    for r in rows:
        if r["method"] not in aucs:
            methods.append(r["method"])
            aucs[r["method"]] = []
        if int(r["trial"]) != len(aucs[r["method"]]):
            raise ExperimentError(f"trials out of order for {r['method']}")
        aucs[r["method"]].append(float(r["auc"]))
    return ResultTable(tuple(methods), aucs, rows[0]["dataset"])


def table_to_json(table: ResultTable) -> str:
    doc = {
        "dataset": table.dataset,
        "methods": [
            {"method": m, "aucs": table.aucs[m], "mean": table.mean(m), "sd": table.sd(m)} for m in table.methods
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def table_from_json(text: str) -> ResultTable:
    doc = json.loads(text)
    methods = tuple(e["method"] for e in doc["methods"])
    return ResultTable(methods, {e["method"]: [float(a) for a in e["aucs"]] for e in doc["methods"]}, doc["dataset"])


def table_to_markdown(table: ResultTable) -> str:
    """Methods as rows, the dataset as a column of mean AUC (%), plus mean +- SD."""
    lines = [
        f"| Method | {table.dataset} | Ave. (mean ± SD) |",
        "|---|---:|---:|",
    ]
    for m in table.methods:
        mean, sd = 100 * table.mean(m), 100 * table.sd(m)
        lines.append(f"| {m} | {mean:.2f} | {mean:.2f} ± {sd:.2f} |")
    return "\n".join(lines) + "\n"


def emit_table(table: ResultTable, fmt: str) -> str:
    fmt = fmt.lower()
    if fmt == "csv":
        return table_to_csv(table)
    if fmt == "json":
        return table_to_json(table)
    if fmt in ("markdown", "md"):
        return table_to_markdown(table)
    raise ExperimentError(f"unknown table format {fmt!r}")


def run_manifest(graph: HeteroGraph, spec: ExperimentSpec) -> dict:
    return {
        "spec": spec.to_dict(),
        "graph_fingerprint": graph.fingerprint(),
        "trial_seeds": spec.trial_seeds(),
    }


def write_results(table: ResultTable, graph: HeteroGraph, spec: ExperimentSpec, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results.csv": table_to_csv(table),
        "results.json": table_to_json(table),
        "results.md": table_to_markdown(table),
        "manifest.json": json.dumps(run_manifest(graph, spec), indent=2) + "\n",
    }
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths.append(p)
    return paths
