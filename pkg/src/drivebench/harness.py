"""Evaluation runs, accuracy accounting and the report table.

Per-scenario driver failures score as incorrect and the run continues, so a
partial remote outage never voids a result. Timestamps live in dedicated
fields so determinism checks can hash content only.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .config import ConfigError, HarnessConfig
from .datasets import read_dataset
from .drivers import (
    ConstantDriver,
    DriverRequest,
    OracleDriver,
    RemoteDriver,
    ReplayDriver,
    TranscriptWriter,
    transcript_to_json,
)
from .poc import (
    EmptyDatasetError,
    PocCommand,
    PocOracleDriver,
    PocRemoteDriver,
    PocReplayDriver,
    iter_poc_results,
    poc_transcript_to_json,
    read_poc_dataset,
)
from .prompts import Decision, PromptConfig, render_prompt
from .world import Action, Scenario


@dataclass(frozen=True)
class PerScenarioResult:
    scenario_id: str
    predicted: dict
    correct: bool


@dataclass(frozen=True)
class EvalResult:
    dataset_path: str
    driver_name: str
    model_name: str | None
    task_family: str
    reasoning_requested: bool
    per_scenario: tuple[PerScenarioResult, ...]
    accuracy: float
    started: str
    finished: str

    def content_dict(self) -> dict:
        """Everything except the isolated timestamp fields."""
        return {
            "dataset_path": self.dataset_path,
            "driver_name": self.driver_name,
            "model_name": self.model_name,
            "task_family": self.task_family,
            "reasoning_requested": self.reasoning_requested,
            "accuracy": self.accuracy,
            "per_scenario": [
                {"scenario_id": r.scenario_id, "predicted": r.predicted, "correct": r.correct}
                for r in self.per_scenario
            ],
        }

    def to_dict(self) -> dict:
        out = self.content_dict()
        out["started"] = self.started
        out["finished"] = self.finished
        return out


def eval_result_from_dict(obj: dict) -> EvalResult:
    return EvalResult(
        dataset_path=obj["dataset_path"],
        driver_name=obj["driver_name"],
        model_name=obj.get("model_name"),
        task_family=obj["task_family"],
        reasoning_requested=obj["reasoning_requested"],
        per_scenario=tuple(
            PerScenarioResult(r["scenario_id"], r["predicted"], r["correct"])
            for r in obj["per_scenario"]
        ),
        accuracy=obj["accuracy"],
        started=obj.get("started", ""),
        finished=obj.get("finished", ""),
    )


def dataset_kind(path: str | Path) -> str:
    """Detect whether a dataset file holds highway scenarios or POC scenes."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            return "poc" if "objects" in obj else "highway"
    return "highway"


def build_driver(driver_spec: str, config: HarnessConfig, kind: str):
    """Build a driver from a CLI spec: oracle | replay:<path> | remote | constant:<action>."""
    name, _, arg = driver_spec.partition(":")
    if name == "oracle":
        return PocOracleDriver() if kind == "poc" else OracleDriver(config.policy)
    if name == "replay":
        if not arg:
            raise ConfigError("replay driver needs a fixture path: replay:<path>")
        fixture = ReplayDriver.from_jsonl(arg).fixture
        return PocReplayDriver(fixture) if kind == "poc" else ReplayDriver(fixture)
    if name == "remote":
        if config.remote is None:
            raise ConfigError("remote driver needs a 'remote' section in the config file")
        return PocRemoteDriver(config.remote) if kind == "poc" else RemoteDriver(config.remote)
    if name == "constant":
        if kind == "poc":
            raise ConfigError("constant driver is only available for highway datasets")
        try:
            action = Action(arg)
        except ValueError as exc:
            raise ConfigError(f"unknown action {arg!r} for constant driver") from exc
        return ConstantDriver(action)
    raise ConfigError(f"unknown driver spec {driver_spec!r}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _highway_prediction(parsed) -> dict:
    if isinstance(parsed, Decision):
        return {"action": parsed.action.value}
    return {"error": parsed.kind}


def run_highway_eval(
    scenarios: list[Scenario],
    driver,
    prompt_cfg: PromptConfig,
    transcript_writer: TranscriptWriter | None = None,
    concurrency: int = 1,
) -> list[tuple[PerScenarioResult, object]]:
    """Evaluate each scenario once, preserving dataset order."""
    def one(scenario: Scenario):
        prompt = render_prompt(scenario, prompt_cfg)
        request = DriverRequest(
            scenario=scenario, prompt=prompt, cfg=prompt_cfg, session_id="eval"
        )
        return driver.drive(request)

    if concurrency > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            transcripts = list(pool.map(one, scenarios))
    else:
        transcripts = [one(s) for s in scenarios]

    results = []
    for scenario, transcript in zip(scenarios, transcripts):
        if transcript_writer is not None:
            transcript_writer.write(transcript_to_json(transcript))
        correct = (
            isinstance(transcript.parsed, Decision)
            and transcript.parsed.action is scenario.ground_truth
        )
        results.append(
            (
                PerScenarioResult(scenario.id, _highway_prediction(transcript.parsed), correct),
                transcript,
            )
        )
    return results


def transcripts_path_for(out_path: str | Path) -> Path:
    out = Path(out_path)
    return out.with_name(out.stem + ".transcripts.jsonl")


def run_eval(
    dataset_path: str | Path,
    driver_spec: str,
    reasoning: bool,
    out_path: str | Path,
    config: HarnessConfig,
) -> EvalResult:
    """Evaluate a dataset file and persist the result plus transcripts."""
    kind = dataset_kind(dataset_path)
    driver = build_driver(driver_spec, config, kind)
    prompt_cfg = PromptConfig(
        reasoning_requested=reasoning, template_version=config.template_version
    )
    started = _now()
    per: list[PerScenarioResult] = []
    with TranscriptWriter(transcripts_path_for(out_path)) as writer:
        if kind == "poc":
            scenes = read_poc_dataset(dataset_path)
            if not scenes:
                raise EmptyDatasetError(f"{dataset_path} holds no scenes")
            for scene, transcript, correct in iter_poc_results(scenes, driver):
                writer.write(poc_transcript_to_json(transcript))
                if isinstance(transcript.parsed, PocCommand):
                    predicted: dict = {"command": transcript.parsed.action}
                    if transcript.parsed.destination_id is not None:
                        predicted["destination_id"] = transcript.parsed.destination_id
                else:
                    predicted = {"error": transcript.parsed.kind}
                per.append(PerScenarioResult(scene.id, predicted, correct))
            family = "poc"
        else:
            scenarios = read_dataset(dataset_path)
            if not scenarios:
                raise EmptyDatasetError(f"{dataset_path} holds no scenarios")
            concurrency = config.remote.concurrency if driver_spec.startswith("remote") and config.remote else 1
            results = run_highway_eval(scenarios, driver, prompt_cfg, writer, concurrency)
            per = [r for r, _ in results]
            families = {s.task_family.value for s in scenarios}
            family = families.pop() if len(families) == 1 else "mixed"
    accuracy = sum(1 for r in per if r.correct) / len(per)
    result = EvalResult(
        dataset_path=str(dataset_path),
        driver_name=getattr(driver, "name", driver_spec),
        model_name=getattr(driver, "model_name", None),
        task_family=family,
        reasoning_requested=reasoning,
        per_scenario=tuple(per),
        accuracy=accuracy,
        started=started,
        finished=_now(),
    )
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(result.to_dict(), fh, indent=2)
        fh.write("\n")
    return result


class DuplicateResultError(ValueError):
    """Two results share the same (driver, family, reasoning) cell."""


def build_report(result_paths: list[str | Path]) -> dict:
    """Driver x task-family accuracy table from saved EvalResults."""
    results = []
    for path in result_paths:
        with open(path, "r", encoding="utf-8") as fh:
            results.append(eval_result_from_dict(json.load(fh)))
    cells: dict[tuple[str, str], float] = {}
    drivers: list[str] = []
    columns: list[str] = []
    keys_seen: set[tuple[str, str, bool]] = set()
    reasoning_by_family: dict[str, set[bool]] = {}
    for result in results:
        reasoning_by_family.setdefault(result.task_family, set()).add(result.reasoning_requested)
    for result in results:
        key = (result.driver_name, result.task_family, result.reasoning_requested)
        if key in keys_seen:
            raise DuplicateResultError(
                f"duplicate result for driver={key[0]!r} family={key[1]!r} reasoning={key[2]}"
            )
        keys_seen.add(key)
        column = result.task_family
        if len(reasoning_by_family[result.task_family]) > 1:
            column += " (reasoning)" if result.reasoning_requested else " (no reasoning)"
        if result.driver_name not in drivers:
            drivers.append(result.driver_name)
        if column not in columns:
            columns.append(column)
        cells[(result.driver_name, column)] = result.accuracy
    return {
        "columns": columns,
        "rows": [
            {
                "driver": driver,
                **{
                    col: cells[(driver, col)]
                    for col in columns
                    if (driver, col) in cells
                },
            }
            for driver in drivers
        ],
    }


def format_report_text(report: dict) -> str:
    columns = report["columns"]
    header = ["driver"] + columns
    rows = [
        [row["driver"]] + [f"{row[col]:.3f}" if col in row else "-" for col in columns]
        for row in report["rows"]
    ]
    widths = [max(len(str(cell)) for cell in col) for col in zip(header, *rows)]
    lines = [
        "  ".join(str(cell).ljust(width) for cell, width in zip(row, widths))
        for row in [header] + rows
    ]
    return "\n".join(lines)
