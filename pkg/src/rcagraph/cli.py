"""Command-line entry point.

Subcommands:
    simulate  generate a labeled synthetic failure dataset
    build     train all artifacts (stats, embeddings, SVMs, FEKGs, matcher)
    diagnose  rank fault classes and candidate root-cause events for a failure
    evaluate  metric bundle + ablations over the configured seeds

Exit codes: 0 success; 2 invalid parameters or config; 3 I/O or parse
errors; 4 unknown failure id; 5 degenerate training data; 6 artifact
checksum mismatch; 1 anything unexpected.

All randomness is seeded from the config, so simulate/build/evaluate are
byte-deterministic given the same config (measured wall-clock values go to
the separate latency.json, which is excluded from that guarantee).
"""

from __future__ import annotations

import argparse
import json
import shutil
import sys
from pathlib import Path

from .config import RunConfig
from .errors import (ChecksumMismatch, DegenerateData, DuplicateEventId,
                     InsufficientVocabulary, InvalidParams, ParseError,
                     RcaError, UnknownFailureId)
from .evaluation import SplitConfig, evaluate_variants, measure_latency, split
from .pipeline import Artifacts, LabeledDataset, fit_artifacts
from .ranking import diagnose
from .simulator import (default_templates, generate_dataset, generate_topology,
                        write_dataset)

_EXIT_CODES = (
    ((InvalidParams,), 2),
    ((ParseError, DuplicateEventId, FileNotFoundError, OSError, json.JSONDecodeError), 3),
    ((UnknownFailureId,), 4),
    ((DegenerateData, InsufficientVocabulary), 5),
    ((ChecksumMismatch,), 6),
)


def _load_config(args) -> RunConfig:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
        config.sim_seed = args.seed
    return config


def cmd_simulate(args) -> int:
    config = _load_config(args)
    topo = generate_topology(config.n_services, config.edge_density, config.sim_seed)
    templates = default_templates(config.n_classes)
    cases = generate_dataset(topo, templates, config.n_failures, config.sim_seed)
    out = Path(args.out)
    write_dataset(cases, topo, out)
    config.save(out / "config.json")
    classes = {c.sequence.fault_class for c in cases}
    n_events = sum(len(c.sequence) for c in cases)
    print(f"wrote {len(cases)} failures ({len(classes)} classes, "
          f"{n_events} events) to {out}")
    return 0


def cmd_build(args) -> int:
    config = _load_config(args)
    dataset = LabeledDataset.from_dir(args.data)
    split_cfg = SplitConfig(train=config.split_train,
                            validation=config.split_validation,
                            test=config.split_test, seed=config.seed)
    train, val, test = split(dataset.sequences, split_cfg)
    artifacts = fit_artifacts(dataset, train, config, seed=config.seed)
    out = Path(args.out)
    try:
        artifacts.save(out)
        splits = {
            "train": sorted(s.failure_id for s in train),
            "validation": sorted(s.failure_id for s in val),
            "test": sorted(s.failure_id for s in test),
        }
        (out / "split.json").write_text(
            json.dumps(splits, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except Exception:
        shutil.rmtree(out, ignore_errors=True)
        raise
    print(f"built {len(artifacts.fekgs)} knowledge graphs from "
          f"{len(train)} training failures into {out}")
    return 0


def cmd_diagnose(args) -> int:
    config = _load_config(args)
    dataset = LabeledDataset.from_dir(args.data)
    artifacts = Artifacts.load(args.kb, topology=dataset.topology)
    seq = next((s for s in dataset.sequences if s.failure_id == args.failure_id), None)
    if seq is None:
        raise UnknownFailureId(f"failure {args.failure_id!r} not in {args.data}")
    kb = [artifacts.fekgs[c] for c in sorted(artifacts.fekgs)]
    report = diagnose(seq, kb, artifacts.diagnosis_models(), config.diagnosis())
    print(report.render_text())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    return 0


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    dataset = LabeledDataset.from_dir(args.data)
    results = evaluate_variants(dataset, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(
        json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_csv(results, out / "metrics.csv")
    table = _render_table(results)
    (out / "metrics.txt").write_text(table + "\n", encoding="utf-8")

    first_seed = config.eval_seeds[0]
    split_cfg = SplitConfig(train=config.split_train,
                            validation=config.split_validation,
                            test=config.split_test, seed=first_seed)
    train, _val, test = split(dataset.sequences, split_cfg)
    artifacts = fit_artifacts(dataset, train, config, seed=first_seed)
    samples = measure_latency(dataset, artifacts, test[:20], config.diagnosis())
    samples_sorted = sorted(samples)
    latency = {
        "n": len(samples),
        "mean_ms": sum(samples) / len(samples),
        "p50_ms": samples_sorted[len(samples) // 2],
        "p95_ms": samples_sorted[min(len(samples) - 1, int(0.95 * len(samples)))],
        "max_ms": samples_sorted[-1],
    }
    (out / "latency.json").write_text(
        json.dumps(latency, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(table)
    print(f"latency p95 over {latency['n']} held-out cases: "
          f"{latency['p95_ms']:.1f} ms")
    return 0


def _write_csv(results: dict, path: Path) -> None:
    lines = ["variant,seed,metric,value"]
    for variant in sorted(results["variants"]):
        block = results["variants"][variant]
        for seed in sorted(block["per_seed"], key=int):
            for metric in sorted(block["per_seed"][seed]):
                lines.append(
                    f"{variant},{seed},{metric},{block['per_seed'][seed][metric]}")
        for metric in sorted(block["mean"]):
            lines.append(f"{variant},mean,{metric},{block['mean'][metric]}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _render_table(results: dict) -> str:
    metrics = ["a_at_1", "a_at_2", "a_at_3", "a_at_5", "mar",
               "precision", "recall", "f1"]
    header = f"{'variant':10s}" + "".join(f"{m:>11s}" for m in metrics)
    lines = [header, "-" * len(header)]
    for variant in sorted(results["variants"]):
        mean = results["variants"][variant]["mean"]
        row = f"{variant:10s}" + "".join(f"{mean.get(m, float('nan')):11.4f}"
                                         for m in metrics)
        lines.append(row)
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcagraph",
        description="event-driven root cause analysis for recurring failures")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic labeled dataset")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int, help="override the config seeds")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build", help="train artifacts from a dataset")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="artifact output directory")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("diagnose", help="diagnose one failure against the kb")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", required=True)
    p.add_argument("--kb", required=True, help="artifact directory from build")
    p.add_argument("--failure-id", required=True)
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("evaluate", help="metrics + ablations over seeds")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="metrics output directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RcaError as exc:
        for families, code in _EXIT_CODES:
            if isinstance(exc, families):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
