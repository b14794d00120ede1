"""Exact-decimal cost accounting: per call, per agent, per stage, per item.

Run with `python demos/05_cost_accounting.py`.
"""

import tempfile
from decimal import Decimal
from pathlib import Path

from capsynth import ModelProfile, RunConfig, Usage, cost_of, run
from capsynth.config import build_profiles
from capsynth.pipeline import report_cost
from capsynth.testing import build_demo_fixture, demo_items, write_manifest

# ---------------------------------------------------------------------------
# Prices are per million tokens and carried as exact decimals; cost_of never
# rounds, so sums of per-call costs reconcile to the last digit.
# ---------------------------------------------------------------------------
profile = ModelProfile(
    name="vision", endpoint="http://localhost:8000/v1/chat/completions",
    model_id="vl-72b", price_in="0.60", price_out="2.40",
)
for usage in (Usage(0, 0), Usage(1_000_000, 0), Usage(123_456, 7_890)):
    print(f"cost_of({usage.input_tokens:>9}, {usage.output_tokens:>6}) = "
          f"{cost_of(usage, profile)}")

parts = [cost_of(Usage(n, n // 2), profile) for n in (317, 12_345, 999_999)]
total = sum(parts, Decimal("0"))
print(f"\nthree calls: {[str(p) for p in parts]}")
print(f"sum reconciles exactly: {total} == {cost_of(Usage(1_012_661, 506_329), profile)}")

# ---------------------------------------------------------------------------
# A priced mock run: the report aggregates the same exact decimals by stage,
# agent, and item. Functional-agent spend dwarfs the single summary call per
# item, mirroring how a multi-agent fan-out bills in practice.
# ---------------------------------------------------------------------------
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    items = demo_items(16)
    manifest = write_manifest(items, tmp / "m.jsonl")
    fixture = build_demo_fixture(items).write(tmp / "f.json")
    config = RunConfig(
        manifest=manifest, run_dir=tmp / "run", mock_fixture=fixture, workers=4,
        profiles=build_profiles(
            {
                "vision": {"price_in": "0.60", "price_out": "2.40"},
                "text": {"price_in": "0.20", "price_out": "0.80"},
                "judge": {"price_in": "0.10", "price_out": "0.40"},
            }
        ),
    )
    ledger = run(config)
    report = report_cost(config.run_dir)

    print(f"\ntotal: {report['total']}  (items with cost: {report['items_with_cost']})")
    print(f"per-item mean: {report['per_item_mean']}")
    print("per stage:")
    for stage, cost in report["per_stage"].items():
        print(f"  {stage:<8} {cost}")
    print("per agent (top 6):")
    by_cost = sorted(report["per_agent"].items(), key=lambda kv: Decimal(kv[1]), reverse=True)
    for agent, cost in by_cost[:6]:
        print(f"  {agent:<22} {cost}")

    stage_sum = sum(Decimal(v) for v in report["per_stage"].values())
    agent_sum = sum(Decimal(v) for v in report["per_agent"].values())
    print(f"\nbreakdowns reconcile: {Decimal(report['total']) == stage_sum == agent_sum}")
    print(f"mean cost per kept caption: {format(ledger.mean_cost_per_kept, 'f')}")
