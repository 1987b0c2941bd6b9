"""Command-line entry point: generate | eval | report | rollout | serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, HarnessConfig, load_config
from .datasets import (
    DatasetSchemaError,
    GenerationExhaustedError,
    GenSpec,
    generate,
    label_histogram,
    read_dataset,
    write_dataset,
)
from .drivers import AuthError, MissingApiKeyError, MissingFixtureEntry
from .harness import (
    DuplicateResultError,
    build_driver,
    build_report,
    dataset_kind,
    format_report_text,
    run_eval,
)
from .poc import EmptyDatasetError, generate_poc_dataset, write_poc_dataset
from .prompts import PromptConfig, UnknownTemplateError
from .rollout import detect_violations, rollout, write_trace
from .world import TaskFamily


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="JSON config file")


def _cmd_generate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.task == "poc":
        scenes = generate_poc_dataset(count=args.n, seed=args.seed)
        write_poc_dataset(scenes, args.out)
        stops = sum(1 for s in scenes if s.ground_truth.action == "stop")
        print(f"wrote {len(scenes)} scenes to {args.out}")
        print(f"labels: stop={stops} go={len(scenes) - stops}")
        return 0
    spec = GenSpec(
        task_family=TaskFamily(args.task),
        count=args.n,
        seed=args.seed,
        misleading_instruction_prob=args.misleading_prob,
    )
    scenarios = generate(spec, config.policy)
    write_dataset(scenarios, args.out)
    print(f"wrote {len(scenarios)} scenarios to {args.out}")
    print("labels: " + " ".join(f"{k}={v}" for k, v in label_histogram(scenarios).items()))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    result = run_eval(args.dataset, args.driver, args.reasoning, args.out, config)
    print(
        f"driver={result.driver_name} family={result.task_family} "
        f"reasoning={result.reasoning_requested} accuracy={result.accuracy:.4f} "
        f"({sum(1 for r in result.per_scenario if r.correct)}/{len(result.per_scenario)})"
    )
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    report = build_report(args.results)
    if args.format == "json":
        print(json.dumps(report, indent=2))
    else:
        print(format_report_text(report))
    return 0


def _cmd_rollout(args: argparse.Namespace) -> int:
    if args.steps < 1:
        print("error: --steps must be >= 1", file=sys.stderr)
        return 2
    config = load_config(args.config)
    if args.dataset:
        if dataset_kind(args.dataset) == "poc":
            print("error: rollouts only apply to highway datasets", file=sys.stderr)
            return 2
        scenarios = read_dataset(args.dataset)
        if not 0 <= args.index < len(scenarios):
            print(f"error: --index out of range for {args.dataset}", file=sys.stderr)
            return 2
        scenario = scenarios[args.index]
    else:
        spec = GenSpec(task_family=TaskFamily(args.task), count=args.index + 1, seed=args.seed)
        scenario = generate(spec, config.policy)[args.index]
    driver = build_driver(args.driver, config, "highway")
    prompt_cfg = PromptConfig(
        reasoning_requested=args.reasoning, template_version=config.template_version
    )
    trace = rollout(scenario, driver, steps=args.steps, prompt_cfg=prompt_cfg)
    write_trace(trace, args.out)
    violations = detect_violations(trace, scenario.rules, config.policy)
    summary = {
        "scenario_id": trace.scenario_id,
        "terminal": trace.terminal.value,
        "ticks": len(trace.ticks),
        "violations": [
            {"kind": v.kind.value, "tick": v.tick, "detail": v.detail} for v in violations
        ],
    }
    summary_path = Path(args.out).with_suffix(".violations.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    print(
        f"rollout {trace.scenario_id}: terminal={trace.terminal.value} "
        f"ticks={len(trace.ticks)} violations={len(violations)}"
    )
    for v in violations:
        print(f"  tick {v.tick}: {v.kind.value}: {v.detail}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .server import create_app

    config = load_config(args.config)
    app = create_app(config, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivebench",
        description="Generate, evaluate and replay highway decision benchmarks "
        "for language-model drivers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a labeled dataset JSONL")
    p.add_argument("--task", required=True, choices=["sadm", "ftr", "combined", "poc"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--misleading-prob", type=float, default=0.5)
    _add_config_arg(p)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval", help="score a driver against a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--driver", required=True, help="oracle | replay:<fixture> | remote | constant:<action>")
    p.add_argument("--reasoning", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--out", required=True, help="result JSON path; transcripts land beside it")
    _add_config_arg(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("report", help="accuracy table from saved results")
    p.add_argument("results", nargs="+")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("rollout", help="closed-loop rollout of one scenario")
    p.add_argument("--dataset", default=None, help="dataset JSONL to pick the scenario from")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--task", choices=["sadm", "ftr", "combined"], default="combined")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--driver", required=True)
    p.add_argument("--steps", type=int, default=60)
    p.add_argument("--reasoning", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--out", required=True, help="trace JSONL path")
    _add_config_arg(p)
    p.set_defaults(func=_cmd_rollout)

    p = sub.add_parser("serve", help="run the session API for the operator console")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static-dir", default="frontend", help="console assets to serve at /")
    _add_config_arg(p)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        UnknownTemplateError,
        DatasetSchemaError,
        GenerationExhaustedError,
        DuplicateResultError,
        EmptyDatasetError,
        MissingApiKeyError,
        MissingFixtureEntry,
        AuthError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
