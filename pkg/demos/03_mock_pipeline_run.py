"""A full batch run against the mock backend, then a crash-free resume.

The mock backend replays canned (agent, item) replies from a fixture file,
so the whole pipeline runs offline and produces byte-identical outputs every
time. Run with `python demos/03_mock_pipeline_run.py`.
"""

import tempfile
from pathlib import Path

from capsynth import RunConfig, run
from capsynth.config import build_profiles
from capsynth.pipeline import read_jsonl
from capsynth.testing import build_demo_fixture, demo_items, write_manifest

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)

    # -----------------------------------------------------------------------
    # 20 mixed items: mostly images cycling through the eight image domains
    # (some with known_domain set, which bypasses routing), every fifth item a
    # video. The fixture builder emits a canned reply for every call the run
    # will make, including judge verdicts; every fourth item is scored below
    # top marks so the gate has something to drop.
    # -----------------------------------------------------------------------
    items = demo_items(20)
    manifest = write_manifest(items, tmp / "manifest.jsonl")
    fixture = build_demo_fixture(items, drop_every=4).write(tmp / "fixture.json")

    profiles = build_profiles(
        {
            "vision": {"price_in": "0.60", "price_out": "2.40"},
            "text": {"price_in": "0.20", "price_out": "0.80"},
            "judge": {"price_in": "0.10", "price_out": "0.40"},
        }
    )
    config = RunConfig(
        manifest=manifest,
        run_dir=tmp / "run",
        mock_fixture=fixture,
        workers=4,
        profiles=profiles,
    )

    ledger = run(config)
    print("\n".join(ledger.summary_lines()))

    # -----------------------------------------------------------------------
    # Every stage wrote an append-only JSONL checkpoint plus a `_done` marker.
    # -----------------------------------------------------------------------
    print("\nrun dir contents:")
    for path in sorted(config.run_dir.iterdir()):
        print(f"  {path.name:<20} {path.stat().st_size:>6} bytes")

    routing = read_jsonl(config.run_dir / "routing.jsonl")
    bypassed = sum(1 for r in routing if r["method"] == "bypass")
    print(f"\nrouting: {bypassed} bypassed (known domain or video), "
          f"{len(routing) - bypassed} classified")

    kept = read_jsonl(config.run_dir / "kept.jsonl")
    print(f"kept examples: {[r['item_id'] for r in kept[:4]]}")
    print(f"first kept caption: {kept[0]['caption']!r}")

    # -----------------------------------------------------------------------
    # Re-running a completed run touches nothing and calls no models: every
    # item id is already checkpointed, every stage marker present.
    # -----------------------------------------------------------------------
    config.resume = True
    before = (config.run_dir / "captions.jsonl").read_bytes()
    run(config)
    after = (config.run_dir / "captions.jsonl").read_bytes()
    print(f"\nresume of a finished run changed captions.jsonl: {before != after}")
