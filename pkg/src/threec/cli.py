"""Command-line front end: validate, synth, train, eval, assess, coach.

Exit codes: 0 success, 1 domain error (invalid graph, fingerprint mismatch,
bad configuration), 2 I/O error (missing or unreadable files).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

from .coach import CohortThresholds, CoachError, coach_cohort, cohort_thresholds, write_reports
from .evaluation import ALL_METHODS, EVAL_MODES, ExperimentError, ExperimentSpec, run_experiment, write_results
from .graph import GraphError, GraphParseError, GraphValidationError, load_graph, save_graph
from .hgnn import CheckpointError, HgnnConfig, infer_lps, init_model, load_checkpoint, save_checkpoint, train
from .perception import SamplingError, build_perception_subgraph
from .sdt import AssessmentError, MonitoringMetrics, assess_cohort, write_metrics_csv
from .synth import PERSONAS, SynthConfig, gen_cohort, load_latent_labels

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DOMAIN):
        super().__init__(message)
        self.code = code


# argument definitions ---------------------------------------------------------


def _add_hgnn_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--preset", choices=("desk", "wide"), default="desk",
                   help="desk: 4-dim embeddings, N_e = explicit count; wide: 64-dim, N_e = positive count")
    g.add_argument("--embed-dim", type=int)
    g.add_argument("--layers", type=int)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--threshold", type=float)
    g.add_argument("--weight-decay", type=float)
    g.add_argument("--n-e", type=int)
    g.add_argument("--rho", type=float)
    g.add_argument("--sampler", choices=("eins", "uniform"))
    g.add_argument("--mask-ratio", type=float)
    g.add_argument("--n-e-rule", choices=("positives", "explicit"))


def _hgnn_config(args) -> HgnnConfig:
    base = HgnnConfig.desk_preset() if args.preset == "desk" else HgnnConfig()
    over = {f.name: getattr(args, f.name) for f in fields(HgnnConfig) if getattr(args, f.name, None) is not None}
    if args.seed is not None:
        over["seed"] = args.seed
    return HgnnConfig(**{**asdict(base), **over})


def _persona_mix(text: str) -> dict:
    mix = {}
    for part in text.split(","):
        name, _, weight = part.partition("=")
        if name.strip() not in PERSONAS or not weight:
            raise argparse.ArgumentTypeError(f"expected NAME=WEIGHT with NAME in {PERSONAS}, got {part!r}")
        mix[name.strip()] = float(weight)
    return mix


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="threec", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="JSON file of option defaults; command-line flags win")
    parser.add_argument("--seed", type=int, help="global seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a graph file")
    p.add_argument("graph")
    p.add_argument("--responses", help="responses CSV merged at load")

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--out", required=True, help="graph JSON path")
    p.add_argument("--truth", help="ground-truth sidecar path (default: <out stem>.truth.json)")
    p.add_argument("--paper-scale", action="store_true", help="150 learners, 211 concepts, 45 items")
    for name, typ in (("learners", int), ("concepts", int), ("items", int), ("layers", int)):
        p.add_argument(f"--{name}", type=typ)
    for name in ("prereq-prob", "mastery-base", "mastery-penalty", "slip", "guess", "mention-prob"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--persona-mix", type=_persona_mix, help="e.g. WC=0.5,OC=0.5")

    p = sub.add_parser("train", help="train the HGNN on all know edges and write a checkpoint")
    p.add_argument("graph")
    p.add_argument("--checkpoint", required=True)
    _add_hgnn_flags(p)

    p = sub.add_parser("eval", help="repeated-split comparison of methods")
    p.add_argument("graph")
    p.add_argument("--truth", help="ground-truth sidecar (required for TrueLatent)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--methods", nargs="+", choices=ALL_METHODS, default=list(ALL_METHODS))
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--mode", choices=EVAL_MODES, default="TrueLatent")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for trials")
    p.add_argument("--lp-iterations", type=int, default=1000)
    p.add_argument("--lp-damping", type=float, default=0.9)
    p.add_argument("--dataset", default="synthetic", help="column label in the Markdown table")
    _add_hgnn_flags(p)

    for name, help_ in (("assess", "per-learner monitoring metrics CSV"), ("coach", "per-learner feedback reports")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("graph")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--threshold", type=float, help="know threshold on link scores (default: checkpoint's)")
        p.add_argument("--out", required=True, help="CSV path" if name == "assess" else "output directory")
        if name == "coach":
            p.add_argument("--error-depth", type=int, default=2, help="prerequisite depth for related past errors")
            p.add_argument("--reference", help="summary.csv of a norming cohort to take median thresholds from")
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse flags; a --config file supplies defaults that explicit flags override."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config {args.config} is not valid JSON: {exc}", EXIT_IO) from exc
        sp = _subparser(parser, args.command)
        known = {a.dest for a in sp._actions} | {"seed"}
        unknown = sorted(k.replace("-", "_") for k in doc if k.replace("-", "_") not in known)
        if unknown:
            raise CliError(f"unknown config keys for {args.command}: {unknown}")
        values = {k.replace("-", "_"): v for k, v in doc.items()}
        if "seed" in values:
            parser.set_defaults(seed=values.pop("seed"))
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _print_config(args: argparse.Namespace, extra: dict | None = None) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items())}
    if extra:
        resolved.update(extra)
    print("resolved config: " + json.dumps(resolved, sort_keys=True, default=str))


# commands ---------------------------------------------------------------------


def _load(path: str, responses: str | None = None):
    return load_graph(path, responses)


def cmd_validate(args) -> int:
    _print_config(args)
    try:
        graph = _load(args.graph, args.responses)
    except GraphValidationError as exc:
        for d in exc.diagnostics:
            print(f"{d.code}: {d.message}", file=sys.stderr)
        return EXIT_DOMAIN
    print(f"ok: {graph.n_learners} learners, {graph.n_concepts} concepts, {graph.n_assessments} assessments")
    return EXIT_OK


def cmd_synth(args) -> int:
    names = {
        "learners": "n_learners", "concepts": "n_concepts", "items": "n_items", "layers": "dag_layers",
        "prereq_prob": "prereq_prob", "mastery_base": "mastery_base", "mastery_penalty": "mastery_penalty",
        "slip": "slip", "guess": "guess", "mention_prob": "mention_prob", "persona_mix": "persona_mix",
    }
    over = {field: getattr(args, flag) for flag, field in names.items() if getattr(args, flag) is not None}
    if args.seed is not None:
        over["seed"] = args.seed
    config = SynthConfig.paper_scale(**over) if args.paper_scale else SynthConfig(**over)
    _print_config(args, {"synth": asdict(config)})
    graph, truth = gen_cohort(config)
    out = Path(args.out)
    truth_path = Path(args.truth) if args.truth else out.with_name(out.stem + ".truth.json")
    save_graph(graph, out)
    truth.save(graph, truth_path)
    print(f"wrote {out} and {truth_path}")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _hgnn_config(args)
    _print_config(args, {"hgnn": asdict(config)})
    graph = _load(args.graph)
    sub = build_perception_subgraph(graph)
    model, history = train(init_model(config, sub), sub, None, graph, config)
    save_checkpoint(model, args.checkpoint)
    print(f"trained {len(history)} epochs, final loss {history.losses[-1]:.6f}; wrote {args.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _hgnn_config(args)
    spec = ExperimentSpec(
        methods=tuple(args.methods), trials=args.trials, ratio=args.ratio,
        base_seed=args.seed if args.seed is not None else 0, eval_mode=args.mode, hgnn=config,
        lp_iterations=args.lp_iterations, lp_damping=args.lp_damping,
    )
    _print_config(args, {"spec": spec.to_dict()})
    graph = _load(args.graph)
    latent = load_latent_labels(args.truth, graph) if args.truth else None
    table = run_experiment(graph, latent, spec, jobs=max(1, args.jobs), dataset=args.dataset)
    paths = write_results(table, graph, spec, args.out)
    for m in table.methods:
        print(f"{m}: mean AUC {table.mean(m):.4f} (sd {table.sd(m):.4f})")
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def _assessments(args):
    graph = _load(args.graph)
    model = load_checkpoint(args.checkpoint, graph)
    inferred = infer_lps(model, graph, args.threshold)
    return graph, assess_cohort(graph, inferred)


def cmd_assess(args) -> int:
    _print_config(args)
    graph, assessments = _assessments(args)
    write_metrics_csv(graph, assessments, args.out)
    print(f"wrote metrics for {len(assessments)} learners to {args.out}")
    return EXIT_OK


def read_reference(path: str) -> CohortThresholds:
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    entries = [
        (float(r["perf"]), MonitoringMetrics(float(r["d_prime"]), float(r["sensitivity"]), float(r["specificity"]), False))
        for r in rows
    ]
    return cohort_thresholds(entries)


def cmd_coach(args) -> int:
    _print_config(args)
    graph, assessments = _assessments(args)
    thresholds = read_reference(args.reference) if args.reference else None
    run = coach_cohort(graph, assessments, thresholds, error_depth=args.error_depth)
    write_reports(graph, assessments, run, args.out)
    print(f"wrote {len(run.reports)} reports and summary.csv to {args.out}")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate, "synth": cmd_synth, "train": cmd_train,
    "eval": cmd_eval, "assess": cmd_assess, "coach": cmd_coach,
}

DOMAIN_ERRORS = (
    GraphValidationError, CheckpointError, ExperimentError, AssessmentError,
    CoachError, SamplingError, FloatingPointError, ValueError, KeyError,
)


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except GraphParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GraphValidationError as exc:
        for d in exc.diagnostics:
            print(f"{d.code}: {d.message}", file=sys.stderr)
        return EXIT_DOMAIN
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except GraphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
