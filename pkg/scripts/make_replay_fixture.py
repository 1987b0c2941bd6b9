#!/usr/bin/env python3
"""Build the bundled replay fixture: 17 of 34 recorded answers are correct.

The wrong half alternates between a different (legal) action, an action
outside the option set, and plain garbage, so re-scoring exercises every
failure path. Output is deterministic; rerun after any generator change.
"""

import json
from pathlib import Path

from drivebench.datasets import GenSpec, generate
from drivebench.policy import PolicyConfig
from drivebench.prompts import decision_to_raw
from drivebench.world import CANONICAL_ACTIONS, Decision, TaskFamily

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "replay_sadm34_seed0.jsonl"


def main() -> None:
    scenarios = generate(GenSpec(task_family=TaskFamily.SADM, count=34, seed=0), PolicyConfig())
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as fh:
        for i, scenario in enumerate(scenarios):
            if i < 17:
                raw = decision_to_raw(Decision(scenario.ground_truth), include_reason=False)
            elif i % 3 == 2:
                wrong = next(a for a in CANONICAL_ACTIONS if a is not scenario.ground_truth)
                raw = decision_to_raw(Decision(wrong), include_reason=False)
            elif i % 3 == 0:
                raw = '{"action": "do a u-turn"}'
            else:
                raw = "Sorry, I cannot decide right now."
            fh.write(json.dumps({"scenario_id": scenario.id, "raw_response": raw}) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
