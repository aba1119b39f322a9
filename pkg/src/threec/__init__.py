"""Latent perceived-state inference on learner/concept graphs, knowledge-monitoring
metrics and pattern-specific feedback reports."""

from .graph import HeteroGraph, load_graph, save_graph, validate, mention_partition
from .perception import EdgeSplit, NegativeSampler, build_perception_subgraph, eins_sample, split_edges
from .hgnn import HgnnConfig, HgnnModel, infer_lps, init_model, load_checkpoint, save_checkpoint, train
from .metrics import auc
from .sdt import ContingencyTable, MonitoringMetrics, PerceptionProfile, complete_profile, contingency, d_prime
from .coach import CohortThresholds, FeedbackReport, classify, coach_cohort, cohort_thresholds
from .synth import GroundTruth, SynthConfig, gen_cohort
from .evaluation import ExperimentSpec, ResultTable, emit_table, run_experiment

__version__ = "0.1.0"

__all__ = [
    "HeteroGraph", "load_graph", "save_graph", "validate", "mention_partition",
    "EdgeSplit", "NegativeSampler", "build_perception_subgraph", "eins_sample", "split_edges",
    "HgnnConfig", "HgnnModel", "infer_lps", "init_model", "load_checkpoint", "save_checkpoint", "train",
    "auc",
    "ContingencyTable", "MonitoringMetrics", "PerceptionProfile", "complete_profile", "contingency", "d_prime",
    "CohortThresholds", "FeedbackReport", "classify", "coach_cohort", "cohort_thresholds",
    "GroundTruth", "SynthConfig", "gen_cohort",
    "ExperimentSpec", "ResultTable", "emit_table", "run_experiment",
]
