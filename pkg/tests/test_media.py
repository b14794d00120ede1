"""Manifest loading, filter rules, and frame sampling."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capsynth.domains import VisualDomain
from capsynth.media import (
    FilterPolicy,
    ManifestError,
    MediaItem,
    MediaKind,
    RejectReason,
    filter_media,
    load_manifest,
    sample_video_frames,
)


def image(width, height, **kw):
    return MediaItem(id=kw.pop("id", "img"), kind=MediaKind.IMAGE, uri="u.png",
                     width=width, height=height, **kw)


def video(width, height, duration=10.0, **kw):
    return MediaItem(id=kw.pop("id", "vid"), kind=MediaKind.VIDEO, uri="u.mp4",
                     width=width, height=height, duration=duration, **kw)


class TestMediaItem:
    def test_rejects_zero_dimensions(self):
        with pytest.raises(ValueError):
            image(0, 100)

    def test_video_requires_duration(self):
        with pytest.raises(ValueError, match="duration"):
            MediaItem(id="v", kind=MediaKind.VIDEO, uri="u", width=10, height=10)

    def test_image_must_not_carry_duration(self):
        with pytest.raises(ValueError, match="duration"):
            MediaItem(id="i", kind=MediaKind.IMAGE, uri="u", width=10, height=10, duration=1.0)

    def test_video_known_domain_must_be_video_temporal(self):
        with pytest.raises(ValueError):
            video(100, 600, known_domain=VisualDomain.NATURAL)
        assert video(100, 600, known_domain=VisualDomain.VIDEO_TEMPORAL).known_domain

    def test_image_cannot_claim_video_domain(self):
        with pytest.raises(ValueError):
            image(600, 600, known_domain=VisualDomain.VIDEO_TEMPORAL)

    def test_round_trip_preserves_unknown_fields(self):
        item = MediaItem.from_dict(
            {"id": "a", "kind": "image", "uri": "u", "width": 600, "height": 700,
             "license": "cc-by", "nested": {"x": 1}}
        )
        assert item.extra == {"license": "cc-by", "nested": {"x": 1}}
        assert item.to_dict()["license"] == "cc-by"
        assert MediaItem.from_dict(item.to_dict()) == item


class TestLoadManifest:
    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text("")
        assert load_manifest(path) == []

    def test_items_come_back_in_file_order(self, tmp_path):
        rows = [image(600, 700, id=f"i{k}").to_dict() for k in range(3)]
        path = tmp_path / "m.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        assert [i.id for i in load_manifest(path)] == ["i0", "i1", "i2"]

    def test_duplicate_id_names_the_line(self, tmp_path):
        row = json.dumps(image(600, 700, id="a").to_dict())
        path = tmp_path / "m.jsonl"
        path.write_text(row + "\n" + row + "\n")
        with pytest.raises(ManifestError, match="line 2"):
            load_manifest(path)

    def test_malformed_line_names_the_line(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text(json.dumps(image(600, 700).to_dict()) + "\n{oops\n")
        with pytest.raises(ManifestError, match="line 2"):
            load_manifest(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "nope.jsonl")

    def test_missing_required_field(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "a", "kind": "image", "uri": "u", "width": 10}\n')
        with pytest.raises(ManifestError, match="height"):
            load_manifest(path)


def oracle_filter(kind: MediaKind, width: int, height: int, policy: FilterPolicy):
    """Independent restatement of the acceptance rules, checked in order."""
    if kind is MediaKind.IMAGE and not (min(width, height) > policy.min_short_edge):
        return RejectReason.SHORT_EDGE
    if not (max(width, height) / min(width, height) < policy.max_aspect_ratio):
        return RejectReason.ASPECT_RATIO
    if kind is MediaKind.VIDEO and not (height > policy.min_video_height):
        return RejectReason.VIDEO_RESOLUTION
    return None


class TestFilterMedia:
    def test_comfortable_image_accepted(self):
        assert filter_media(image(640, 800)) == filter_media(image(640, 800))
        assert filter_media(image(640, 800)).accepted

    def test_short_edge_boundary_rejects(self):
        verdict = filter_media(image(512, 1000))
        assert not verdict.accepted and verdict.reason is RejectReason.SHORT_EDGE

    def test_aspect_ratio_boundary_rejects(self):
        verdict = filter_media(image(600, 1200))
        assert not verdict.accepted and verdict.reason is RejectReason.ASPECT_RATIO

    def test_video_height_boundary_rejects(self):
        verdict = filter_media(video(854, 480))
        assert not verdict.accepted and verdict.reason is RejectReason.VIDEO_RESOLUTION

    def test_video_width_is_unconstrained(self):
        assert filter_media(video(300, 500)).accepted

    def test_aspect_rule_applies_to_videos_too(self):
        verdict = filter_media(video(2000, 500))
        assert verdict.reason is RejectReason.ASPECT_RATIO

    def test_policy_must_be_positive(self):
        with pytest.raises(ValueError):
            FilterPolicy(min_short_edge=0)

    @given(
        st.integers(min_value=1, max_value=4000),
        st.integers(min_value=1, max_value=4000),
        st.sampled_from([MediaKind.IMAGE, MediaKind.VIDEO]),
    )
    def test_matches_oracle(self, width, height, kind):
        item = image(width, height) if kind is MediaKind.IMAGE else video(width, height)
        policy = FilterPolicy()
        verdict = filter_media(item, policy)
        assert verdict.reason == oracle_filter(kind, width, height, policy)
        assert verdict.accepted == (verdict.reason is None)

    @given(
        st.integers(min_value=1, max_value=4000),
        st.integers(min_value=1, max_value=4000),
        st.sampled_from([MediaKind.IMAGE, MediaKind.VIDEO]),
        st.sampled_from(["min_short_edge", "max_aspect_ratio", "min_video_height"]),
    )
    @settings(max_examples=300)
    def test_loosening_one_bound_is_monotone(self, width, height, kind, bound):
        item = image(width, height) if kind is MediaKind.IMAGE else video(width, height)
        tight = FilterPolicy()
        if bound == "min_short_edge":
            loose = FilterPolicy(min_short_edge=256)
        elif bound == "max_aspect_ratio":
            loose = FilterPolicy(max_aspect_ratio=4.0)
        else:
            loose = FilterPolicy(min_video_height=240)
        if filter_media(item, tight).accepted:
            assert filter_media(item, loose).accepted


class TestSampleVideoFrames:
    def test_single_frame_is_midpoint(self):
        assert sample_video_frames(video(1280, 720, duration=10.0), 1) == [5.0]

    def test_five_frames_over_ten_seconds(self):
        # midpoint formula by hand: 10*(k+0.5)/5 -> 1, 3, 5, 7, 9
        assert sample_video_frames(video(1280, 720, duration=10.0), 5) == [1.0, 3.0, 5.0, 7.0, 9.0]

    def test_four_frames_over_two_seconds(self):
        # 2*(k+0.5)/4 -> 0.25, 0.75, 1.25, 1.75
        got = sample_video_frames(video(1280, 720, duration=2.0), 4)
        assert got == [0.25, 0.75, 1.25, 1.75]

    @given(st.floats(min_value=0.1, max_value=10_000), st.integers(min_value=1, max_value=64))
    def test_count_bounds_and_order(self, duration, n):
        item = video(1280, 720, duration=duration)
        first = sample_video_frames(item, n)
        assert first == sample_video_frames(item, n)
        assert len(first) == n
        assert all(0 <= t < duration for t in first)
        assert all(a < b for a, b in zip(first, first[1:]))

    def test_rejects_images_and_zero_count(self):
        with pytest.raises(ValueError):
            sample_video_frames(image(640, 800), 3)
        with pytest.raises(ValueError):
            sample_video_frames(video(1280, 720), 0)
