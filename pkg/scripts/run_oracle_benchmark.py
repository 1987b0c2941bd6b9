#!/usr/bin/env python3
"""End-to-end benchmark demo: generate the three highway datasets plus the
POC mirror set at the paper-scale sizes, evaluate the oracle and a degraded
replay fixture, and print the accuracy table.

Usage:
    python3 scripts/run_oracle_benchmark.py [--seed N] [--out-dir DIR]
"""

import argparse
import json
from pathlib import Path

from drivebench.config import HarnessConfig
from drivebench.datasets import GenSpec, generate, label_histogram, write_dataset
from drivebench.harness import build_report, format_report_text, run_eval
from drivebench.poc import generate_poc_dataset, write_poc_dataset
from drivebench.prompts import decision_to_raw
from drivebench.world import CANONICAL_ACTIONS, Decision, TaskFamily

SIZES = {TaskFamily.SADM: 34, TaskFamily.FTR: 24, TaskFamily.COMBINED: 50}


def degraded_fixture(scenarios, wrong_every: int = 3) -> dict[str, str]:
    """Oracle answers with every third one swapped to a wrong action."""
    fixture = {}
    for i, s in enumerate(scenarios):
        if i % wrong_every == 0:
            wrong = next(a for a in CANONICAL_ACTIONS if a is not s.ground_truth)
            fixture[s.id] = decision_to_raw(Decision(wrong), include_reason=False)
        else:
            fixture[s.id] = decision_to_raw(Decision(s.ground_truth), include_reason=False)
    return fixture


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="benchmark_out")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = HarnessConfig()

    result_paths = []
    for family, count in SIZES.items():
        scenarios = generate(
            GenSpec(task_family=family, count=count, seed=args.seed), config.policy
        )
        dataset = out / f"{family.value}.jsonl"
        write_dataset(scenarios, dataset)
        print(f"{family.value}: {count} scenarios, labels "
              + " ".join(f"{k}={v}" for k, v in label_histogram(scenarios).items() if v))

        fixture_path = out / f"{family.value}.fixture.jsonl"
        with open(fixture_path, "w", encoding="utf-8") as fh:
            for scenario_id, raw in degraded_fixture(scenarios).items():
                fh.write(json.dumps({"scenario_id": scenario_id, "raw_response": raw}) + "\n")

        for driver in ("oracle", f"replay:{fixture_path}"):
            name = driver.split(":", 1)[0]
            result_path = out / f"result-{name}-{family.value}.json"
            run_eval(dataset, driver, False, result_path, config)
            result_paths.append(result_path)

    poc_dataset = out / "poc.jsonl"
    write_poc_dataset(generate_poc_dataset(20, seed=args.seed), poc_dataset)
    poc_result = out / "result-oracle-poc.json"
    run_eval(poc_dataset, "oracle", False, poc_result, config)
    result_paths.append(poc_result)

    print()
    print(format_report_text(build_report(result_paths)))
    print(f"\nartifacts in {out}/")


if __name__ == "__main__":
    main()
