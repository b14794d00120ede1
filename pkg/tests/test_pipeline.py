"""Staged runs: checkpoints, resume, monotonicity, stats, cost report, CLI."""

from __future__ import annotations

import json
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import pytest

from capsynth.cli import main as cli_main
from capsynth.client import MockBackend
from capsynth.config import ConfigError, RunConfig, build_profiles
from capsynth.domains import DEFAULT_WORKFLOWS, VisualDomain
from capsynth.media import MediaItem, MediaKind
from capsynth.pipeline import (
    CHECKPOINT_FILES,
    STAGES,
    append_jsonl,
    read_jsonl,
    report_cost,
    run,
    stats,
)
from capsynth.router import ROUTER_AGENT
from capsynth.testing import (
    FixtureBuilder,
    build_demo_fixture,
    demo_items,
    intended_domain,
    judge_reply,
    write_manifest,
)

PRICED_PROFILES = build_profiles(
    {
        "vision": {"endpoint": "http://x", "model_id": "m", "price_in": "0.60", "price_out": "2.40"},
        "text": {"endpoint": "http://x", "model_id": "m", "price_in": "0.20", "price_out": "0.80"},
        "judge": {"endpoint": "http://x", "model_id": "m", "price_in": "0.10", "price_out": "0.40"},
    }
)


def make_run(tmp_path, n=10, drop_every=4, run_name="run", **config_kw):
    items = demo_items(n)
    manifest = write_manifest(items, tmp_path / "manifest.jsonl")
    fixture = build_demo_fixture(items, drop_every=drop_every).write(tmp_path / "fixture.json")
    config = RunConfig(
        manifest=manifest,
        run_dir=tmp_path / run_name,
        mock_fixture=fixture,
        profiles=dict(PRICED_PROFILES),
        **config_kw,
    )
    return items, config


def snapshot_tree(run_dir: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(run_dir)): p.read_bytes()
        for p in sorted(run_dir.rglob("*"))
        if p.is_file()
    }


class TestFullRun:
    def test_end_to_end_counts_and_files(self, tmp_path):
        items, config = make_run(tmp_path, n=10)
        ledger = run(config)
        assert ledger.stage_counts["filter"] == 10
        assert ledger.stage_counts["route"] == 10
        assert ledger.stage_counts["caption"] == 10
        assert ledger.kept + ledger.dropped == 10
        assert ledger.quarantined == 0
        for name in ("filtered", "routing", "captions", "scores", "kept", "dropped"):
            assert (config.run_dir / CHECKPOINT_FILES[name]).exists()
        for stage in STAGES:
            assert (config.run_dir / f"{stage}._done").exists()
        assert (config.run_dir / "run_summary.json").exists()
        assert (config.run_dir / "gate_stats.json").exists()

    def test_stage_monotonicity_chain(self, tmp_path):
        items, config = make_run(tmp_path, n=12)
        run(config)
        d = config.run_dir
        manifest_ids = {i.id for i in items}
        filtered = {r["id"] for r in read_jsonl(d / "filtered.jsonl")}
        routed = {r["item_id"] for r in read_jsonl(d / "routing.jsonl")}
        captioned = {r["item_id"] for r in read_jsonl(d / "captions.jsonl")}
        judged = {r["item_id"] for r in read_jsonl(d / "scores.jsonl")}
        kept = {r["item_id"] for r in read_jsonl(d / "kept.jsonl")}
        assert kept <= judged <= captioned <= routed <= filtered <= manifest_ids

    def test_undersized_image_rejected_and_absent_downstream(self, tmp_path):
        items = demo_items(4)
        small = MediaItem(id="tiny", kind=MediaKind.IMAGE, uri="tiny.png", width=500, height=900,
                          known_domain=VisualDomain.NATURAL)
        items.append(small)
        manifest = write_manifest(items, tmp_path / "m.jsonl")
        fixture = build_demo_fixture(items[:4]).write(tmp_path / "f.json")
        config = RunConfig(manifest=manifest, run_dir=tmp_path / "run", mock_fixture=fixture)
        run(config)
        rejects = read_jsonl(config.run_dir / "rejects.jsonl")
        assert rejects == [{"item_id": "tiny", "reason": "short_edge", "stage": "filter"}]
        for name in ("filtered", "routing", "captions", "scores", "kept", "dropped"):
            assert all(
                row.get("item_id") != "tiny" and row.get("id") != "tiny"
                for row in read_jsonl(config.run_dir / CHECKPOINT_FILES[name])
            )

    def test_routing_decisions_checkpointed(self, tmp_path):
        items, config = make_run(tmp_path, n=8)
        run(config)
        rows = read_jsonl(config.run_dir / "routing.jsonl")
        by_id = {r["item_id"]: r for r in rows}
        for i, item in enumerate(items):
            row = by_id[item.id]
            assert row["domain"] == intended_domain(item, i).value
            if item.known_domain is not None or item.kind is MediaKind.VIDEO:
                assert row["method"] == "bypass" and row["attempts"] == 0
            else:
                assert row["method"] == "classified" and row["attempts"] == 1

    def test_unroutable_item_lands_in_reject_ledger(self, tmp_path):
        items = demo_items(3, known_every=0, video_every=0)
        manifest = write_manifest(items, tmp_path / "m.jsonl")
        builder = FixtureBuilder()
        for i, item in enumerate(items):
            if item.id == "item-001":
                builder.add(ROUTER_AGENT, item.id, "cannot tell")
                continue
            builder.add_item_workflow(item, intended_domain(item, i))
        fixture = builder.write(tmp_path / "f.json")
        config = RunConfig(manifest=manifest, run_dir=tmp_path / "run", mock_fixture=fixture)
        ledger = run(config)
        rejects = [r for r in read_jsonl(config.run_dir / "rejects.jsonl") if r["stage"] == "route"]
        assert len(rejects) == 1 and rejects[0]["item_id"] == "item-001"
        assert rejects[0]["attempts"] == 3
        assert len(rejects[0]["outputs"]) == 3
        assert ledger.item_errors == 1
        captioned = {r["item_id"] for r in read_jsonl(config.run_dir / "captions.jsonl")}
        assert "item-001" not in captioned

    def test_quarantine_path(self, tmp_path):
        items = demo_items(3, known_every=1, video_every=0)
        manifest = write_manifest(items, tmp_path / "m.jsonl")
        builder = FixtureBuilder()
        for i, item in enumerate(items):
            judge_text = "not json" if item.id == "item-000" else None
            builder.add_item_workflow(item, intended_domain(item, i), judge_text=judge_text)
        fixture = builder.write(tmp_path / "f.json")
        config = RunConfig(manifest=manifest, run_dir=tmp_path / "run", mock_fixture=fixture)
        ledger = run(config)
        quarantine = read_jsonl(config.run_dir / "quarantine.jsonl")
        assert [r["item_id"] for r in quarantine] == ["item-000"]
        assert "unparseable" in quarantine[0]["error"]
        assert len(quarantine[0]["judge_outputs"]) == 2  # the re-ask was spent
        assert ledger.quarantined == 1
        assert ledger.kept + ledger.dropped == 2
        kept_ids = {r["item_id"] for r in read_jsonl(config.run_dir / "kept.jsonl")}
        dropped_ids = {r["item_id"] for r in read_jsonl(config.run_dir / "dropped.jsonl")}
        assert "item-000" not in kept_ids | dropped_ids

    def test_fresh_run_dir_required_without_resume(self, tmp_path):
        items, config = make_run(tmp_path, n=4)
        run(config)
        with pytest.raises(ConfigError, match="resume"):
            run(config)

    def test_kept_rows_echo_manifest_extras(self, tmp_path):
        items, config = make_run(tmp_path, n=6)
        run(config)
        kept = read_jsonl(config.run_dir / "kept.jsonl")
        assert kept, "expected at least one kept row"
        image_rows = [r for r in kept if r["item"]["kind"] == "image"]
        assert all(r["item"]["collection"] == "demo-set" for r in image_rows)


class TestDeterminism:
    def test_worker_counts_and_reruns_byte_identical(self, tmp_path):
        trees = []
        for name, workers in [("w1-a", 1), ("w1-b", 1), ("w8-a", 8), ("w8-b", 8)]:
            items, config = make_run(tmp_path, n=10, run_name=name, workers=workers)
            run(config)
            trees.append(snapshot_tree(config.run_dir))
        assert trees[0] == trees[1] == trees[2] == trees[3]


class Boom(Exception):
    pass


def _kill_after(stage_name: str, count: int):
    seen = {"n": 0}

    def progress(stage: str, item_id: str) -> None:
        if stage == stage_name:
            seen["n"] += 1
            if seen["n"] >= count:
                raise Boom(f"killed {stage} after {count} items")

    return progress


class TestResume:
    def test_stagewise_execution_matches_single_run(self, tmp_path):
        items, config_whole = make_run(tmp_path, n=8, run_name="whole")
        run(config_whole)
        items2, config_staged = make_run(tmp_path, n=8, run_name="staged")
        for stage in STAGES:
            run(config_staged, stages=(stage,))
        assert snapshot_tree(config_whole.run_dir) == snapshot_tree(config_staged.run_dir)

    def test_resume_makes_no_calls_for_checkpointed_items(self, tmp_path):
        items, config = make_run(tmp_path, n=8)
        run(config, stages=("filter", "route", "caption"))
        checkpointed = {r["item_id"] for r in read_jsonl(config.run_dir / "captions.jsonl")}
        assert checkpointed == {i.id for i in items}
        backend = MockBackend.from_fixture(config.mock_fixture)
        config.resume = True
        run(config, backend=backend)
        caption_agents = {
            name
            for wf in DEFAULT_WORKFLOWS.values()
            for name in (*wf.functional_agents, wf.summary_agent)
        }
        for (agent, item_id), count in backend.calls.items():
            assert not (agent in caption_agents and item_id in checkpointed), (
                f"recall of {agent} for checkpointed item {item_id}"
            )
            assert agent != ROUTER_AGENT, "routing stage was complete; no router calls expected"

    def test_mid_stage_kill_then_resume_is_byte_identical(self, tmp_path):
        items, reference_config = make_run(tmp_path, n=8, run_name="reference")
        run(reference_config)
        reference = snapshot_tree(reference_config.run_dir)

        items, config = make_run(tmp_path, n=8, run_name="killed")
        with pytest.raises(Boom):
            run(config, progress=_kill_after("caption", 3))
        partial = read_jsonl(config.run_dir / "captions.jsonl")
        assert len(partial) == 3
        config.resume = True
        run(config)
        assert snapshot_tree(config.run_dir) == reference

    def test_kill_at_every_stage_boundary(self, tmp_path):
        items, reference_config = make_run(tmp_path, n=6, run_name="ref")
        run(reference_config)
        reference = snapshot_tree(reference_config.run_dir)
        for idx, stage in enumerate(STAGES):
            items, config = make_run(tmp_path, n=6, run_name=f"kill-{stage}")
            run(config, stages=STAGES[: idx + 1])
            config.resume = True
            run(config)
            assert snapshot_tree(config.run_dir) == reference, f"mismatch after {stage} boundary"

    def test_completed_run_reruns_with_zero_calls(self, tmp_path):
        items, config = make_run(tmp_path, n=6)
        run(config)
        backend = MockBackend.from_fixture(config.mock_fixture)
        config.resume = True
        ledger = run(config, backend=backend)
        assert backend.calls == {}
        assert ledger.kept + ledger.dropped == 6

    def test_stage_requires_predecessor(self, tmp_path):
        items, config = make_run(tmp_path, n=4)
        with pytest.raises(ConfigError, match="requires completed"):
            run(config, stages=("caption",))


def fraction_cost(tokens_in: int, tokens_out: int, price_in: str, price_out: str) -> Fraction:
    return (
        Fraction(tokens_in) * Fraction(price_in) + Fraction(tokens_out) * Fraction(price_out)
    ) / 1_000_000


class TestCostReport:
    def test_two_item_ledger_total_and_mean(self, tmp_path):
        run_dir = tmp_path / "run"
        run_dir.mkdir()
        # Hand-built checkpoints: two bypass-routed items, one agent call each.
        def output(agent, cost):
            return {
                "agent": agent, "text": "t",
                "usage": {"input_tokens": 1, "output_tokens": 1, "estimated": False},
                "cost": cost, "status": "ok", "error": None, "attempts": 1, "latency": 0.0,
            }

        for item_id, cost in [("a", "0.03"), ("b", "0.05")]:
            append_jsonl(
                run_dir / "captions.jsonl",
                {
                    "item_id": item_id, "domain": "natural", "caption": "c",
                    "agent_outputs": [output("NaturalPerception", cost)],
                    "summary_output": None, "total_cost": cost, "total_latency": 0.0,
                    "status": "complete", "failed_agents": [],
                },
            )
        report = report_cost(run_dir)
        assert Decimal(report["total"]) == Decimal("0.08")
        assert Decimal(report["per_item_mean"]) == Decimal("0.04")
        assert report["items_with_cost"] == 2

    def test_empty_ledger_total_zero(self, tmp_path):
        run_dir = tmp_path / "empty"
        run_dir.mkdir()
        report = report_cost(run_dir)
        assert Decimal(report["total"]) == 0
        assert report["per_item_mean"] is None

    def test_run_total_matches_independent_fixture_sum(self, tmp_path):
        """50 items, everything kept; hand-sum the fixture with rational
        arithmetic and compare the run total exactly."""
        items, config = make_run(tmp_path, n=50, drop_every=0)
        ledger = run(config)
        assert ledger.kept == 50
        fixture = json.loads(Path(config.mock_fixture).read_text())
        prices = {
            "vision": ("0.60", "2.40"),
            "text": ("0.20", "0.80"),
            "judge": ("0.10", "0.40"),
        }
        summary_agents = {"GeneralSummary", "VideoSummary"}
        judge_agents = {"ImageQualityEval", "VideoQualityEval"}
        expected = Fraction(0)
        for entry in fixture["entries"]:
            if entry["agent"] in judge_agents:
                binding = "judge"
            elif entry["agent"] in summary_agents:
                binding = "text"
            else:
                binding = "vision"
            expected += fraction_cost(
                entry["input_tokens"], entry["output_tokens"], *prices[binding]
            )
        got = Decimal(report_cost(config.run_dir)["total"])
        assert got == Decimal(expected.numerator) / Decimal(expected.denominator)

    def test_per_agent_breakdown_matches_hand_sum(self, tmp_path):
        items, config = make_run(tmp_path, n=6, drop_every=0)
        run(config)
        fixture = json.loads(Path(config.mock_fixture).read_text())
        report = report_cost(config.run_dir)
        vision_sum = Fraction(0)
        for entry in fixture["entries"]:
            if entry["agent"] == "GeneralReasoning":
                vision_sum += fraction_cost(
                    entry["input_tokens"], entry["output_tokens"], "0.60", "2.40"
                )
        got = Decimal(report["per_agent"]["GeneralReasoning"])
        assert got == Decimal(vision_sum.numerator) / Decimal(vision_sum.denominator)

    def test_run_summary_cost_equals_sum_of_parts(self, tmp_path):
        items, config = make_run(tmp_path, n=8)
        ledger = run(config)
        report = report_cost(config.run_dir)
        per_stage_sum = sum(Decimal(v) for v in report["per_stage"].values())
        per_agent_sum = sum(Decimal(v) for v in report["per_agent"].values())
        assert ledger.total_cost == per_stage_sum == per_agent_sum == Decimal(report["total"])


class TestStats:
    def test_two_caption_word_mean(self):
        rows = [
            {"domain": "natural", "caption": " ".join(["w"] * 10)},
            {"domain": "natural", "caption": " ".join(["w"] * 20)},
        ]
        report = stats(rows)
        natural = report["domains"]["natural"]
        assert natural["count"] == 2
        assert natural["caption_length"]["words"]["mean"] == 15.0

    def test_single_domain_share_is_one(self):
        rows = [{"domain": "synthetic", "caption": "a b c"}]
        report = stats(rows)
        assert report["domains"]["synthetic"]["share"] == 1.0

    def test_shares_sum_to_one(self, tmp_path):
        items, config = make_run(tmp_path, n=12)
        run(config)
        report = stats(config.run_dir / "kept.jsonl")
        assert sum(d["share"] for d in report["domains"].values()) == pytest.approx(1.0)

    def test_units_are_all_reported(self):
        rows = [{"domain": "natural", "caption": "abcd efgh"}]
        lengths = stats(rows)["domains"]["natural"]["caption_length"]
        assert lengths["words"]["mean"] == 2
        assert lengths["characters"]["mean"] == 9
        assert lengths["est_tokens"]["mean"] == 3  # ceil(9/4)

    def test_empty_kept_gives_explicit_empty_report(self, tmp_path):
        empty = tmp_path / "kept.jsonl"
        empty.write_text("")
        report = stats(empty)
        assert report == {"empty": True, "n": 0, "domains": {}}


class TestCli:
    def test_run_and_stats_and_cost(self, tmp_path, capsys):
        items = demo_items(6)
        manifest = write_manifest(items, tmp_path / "m.jsonl")
        build_demo_fixture(items, path=tmp_path / "f.json")
        code = cli_main(
            [
                "run",
                "--manifest", str(manifest),
                "--run-dir", str(tmp_path / "run"),
                "--mock", str(tmp_path / "f.json"),
                "--workers", "2",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "kept" in out and "yield" in out
        assert cli_main(["stats", "--run-dir", str(tmp_path / "run")]) == 0
        stats_out = capsys.readouterr().out
        assert '"domains"' in stats_out
        assert cli_main(["cost", "--run-dir", str(tmp_path / "run")]) == 0
        cost_out = capsys.readouterr().out
        assert '"per_agent"' in cost_out

    def test_stagewise_cli(self, tmp_path, capsys):
        items = demo_items(4)
        manifest = write_manifest(items, tmp_path / "m.jsonl")
        build_demo_fixture(items, path=tmp_path / "f.json")
        base = [
            "--manifest", str(manifest),
            "--run-dir", str(tmp_path / "run"),
            "--mock", str(tmp_path / "f.json"),
        ]
        for stage in ("filter", "route", "caption", "judge", "gate"):
            assert cli_main([stage, *base]) == 0, f"stage {stage} failed"
        capsys.readouterr()

    def test_missing_manifest_is_fatal(self, tmp_path, capsys):
        code = cli_main(
            ["run", "--manifest", str(tmp_path / "nope.jsonl"), "--run-dir", str(tmp_path / "r")]
        )
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_item_errors_exit_code(self, tmp_path, capsys):
        items = demo_items(3, known_every=1, video_every=0)
        manifest = write_manifest(items, tmp_path / "m.jsonl")
        builder = FixtureBuilder()
        for i, item in enumerate(items):
            judge_text = "garbage" if i == 0 else None
            builder.add_item_workflow(item, intended_domain(item, i), judge_text=judge_text)
        builder.write(tmp_path / "f.json")
        code = cli_main(
            [
                "run",
                "--manifest", str(manifest),
                "--run-dir", str(tmp_path / "run"),
                "--mock", str(tmp_path / "f.json"),
            ]
        )
        capsys.readouterr()
        assert code == 2

    def test_eval_quality_cli(self, tmp_path, capsys):
        item = demo_items(1, video_every=0)[0]
        captions = tmp_path / "captions.jsonl"
        captions.write_text(
            json.dumps({"item": item.to_dict(), "caption": "a caption"}) + "\n"
        )
        fixture = FixtureBuilder()
        fixture.add("ImageQualityEval", item.id, judge_reply(MediaKind.IMAGE, [3, 3, 3, 3, 3]))
        fixture.write(tmp_path / "f.json")
        code = cli_main(
            [
                "eval-quality",
                "--captions", str(captions),
                "--mock", str(tmp_path / "f.json"),
                "--json",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        report = json.loads(out)
        assert report["overall_mean"] == 3.0

    def test_eval_reasoning_cli(self, tmp_path, capsys):
        item = demo_items(1, video_every=0)[0]
        captions = tmp_path / "captions.jsonl"
        captions.write_text(json.dumps({"item": item.to_dict(), "caption": "a dog"}) + "\n")
        qa = tmp_path / "qa.jsonl"
        qa.write_text(
            json.dumps(
                {
                    "id": "q1",
                    "item": item.to_dict(),
                    "question": "What animal?",
                    "options": [["A", "cat"], ["B", "dog"]],
                    "gold": "B",
                }
            )
            + "\n"
        )
        fixture = FixtureBuilder()
        fixture.add("Reasoner", item.id, "Based on the description, (B).")
        fixture.write(tmp_path / "f.json")
        code = cli_main(
            [
                "eval-reasoning",
                "--qa", str(qa),
                "--captions", str(captions),
                "--mock", str(tmp_path / "f.json"),
                "--json",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert json.loads(out)["accuracy"] == 1.0
