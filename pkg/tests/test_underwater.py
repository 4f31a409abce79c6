import math
from pathlib import Path

import numpy as np
import pytest

from backend.app.core.errors import DatasetError, DepthFillError, ShapeError
from backend.app.integrations import frame_io
from backend.app.ml.quality import cdc
from backend.app.ml.underwater import (
    DEPTH_RANGE_M,
    WATER_PRESETS,
    CleanClip,
    DepthMap,
    ProceduralClips,
    _split_assignment,
    build_dataset,
    center_crop,
    degrade_frame,
    fill_depth,
    gen_procedural_clip,
    load_clean_clip,
    load_manifest,
    sample_water,
    synth_clip,
)
from backend.app.models.dataset import SplitTag, WaterParams


WATER = WaterParams(beta=(0.5, 0.1, 0.05), background=(0.3, 0.5, 0.7))


def test_degrade_closed_form() -> None:
    clean = np.ones((1, 1, 3))
    out = degrade_frame(clean, DepthMap.dense(np.full((1, 1), 2.0)), WATER)
    assert out[0, 0, 0] == pytest.approx(math.exp(-1) + 0.3 * (1 - math.exp(-1)))
    assert out[0, 0, 0] == pytest.approx(0.55752, abs=1e-5)


def test_degrade_limits(rng: np.random.Generator) -> None:
    clean = rng.uniform(size=(4, 4, 3))
    np.testing.assert_allclose(degrade_frame(clean, np.zeros((4, 4)), WATER), clean)
    far = degrade_frame(clean, np.full((4, 4), 1e4), WATER)
    np.testing.assert_allclose(far, np.broadcast_to(WATER.background, far.shape), atol=1e-9)
    with pytest.raises(ShapeError):
        degrade_frame(clean, np.zeros((3, 4)), WATER)


def test_degrade_moves_monotonically_toward_background(rng: np.random.Generator) -> None:
    clean = rng.uniform(size=(1, 8, 3))
    depth = np.linspace(0.5, 10.0, 8)[None, :]
    out = degrade_frame(clean, depth, WATER)
    assert out.min() >= 0.0 and out.max() <= 1.0
    same_clean = np.broadcast_to(clean[:, :1], clean.shape)
    gap = np.abs(degrade_frame(same_clean, depth, WATER) - np.asarray(WATER.background))
    assert np.all(np.diff(gap, axis=1) <= 1e-12)


def test_synth_clip_shares_parameters(rng: np.random.Generator) -> None:
    frame = rng.uniform(size=(6, 6, 3))
    depth = DepthMap.dense(np.full((6, 6), 1.5))
    clip = CleanClip("static", [frame] * 4, [depth] * 4)
    out = synth_clip(clip, WATER)
    assert len(out) == 4
    assert all(np.array_equal(out[0], f) for f in out)

    other = CleanClip("other", [frame, rng.uniform(size=(6, 6, 3))], [depth, depth])
    assert np.array_equal(synth_clip(other, WATER)[0], out[0])


def test_shared_water_beats_per_frame_water_on_cdc() -> None:
    clip = gen_procedural_clip(5, n_frames=6, h=24, w=24, motion=0)
    shared = synth_clip(clip, sample_water(11))
    flicker = [degrade_frame(f, d, sample_water(100 + t)) for t, (f, d) in enumerate(zip(clip.frames, clip.depths))]
    assert cdc(shared) < cdc(flicker)


def test_sample_water_determinism_and_ranges() -> None:
    assert sample_water(3) == sample_water(3)
    seen = set()
    for seed in range(1000):
        water = sample_water(seed)
        preset = WATER_PRESETS[water.preset]
        seen.add(water.preset)
        for value, (lo, hi) in zip(water.beta, preset.beta):
            assert lo <= value <= hi
        for value, (lo, hi) in zip(water.background, preset.background):
            assert lo <= value <= hi
        if water.preset == "blue-ocean":
            assert water.beta[2] <= water.beta[1] <= water.beta[0]
    assert seen == set(WATER_PRESETS)
    assert sample_water(0, preset_pool=["turbid"]).preset == "turbid"
    with pytest.raises(ValueError):
        sample_water(0, preset_pool=[])


def test_procedural_clip_motion_and_depth() -> None:
    clip = gen_procedural_clip(42, n_frames=5, h=20, w=24, motion=2)
    assert len(clip) == 5 and clip.clip_id == "proc-42"
    for prev, nxt in zip(clip.frames, clip.frames[1:]):
        np.testing.assert_array_equal(nxt[:, 2:], prev[:, :-2])
    for depth in clip.depths:
        assert depth.complete
        assert DEPTH_RANGE_M[0] <= depth.values.min() and depth.values.max() <= DEPTH_RANGE_M[1]

    static = gen_procedural_clip(42, n_frames=3, h=8, w=8, motion=0)
    assert all(np.array_equal(static.frames[0], f) for f in static.frames)

    again = gen_procedural_clip(42, n_frames=5, h=20, w=24, motion=2)
    assert all(np.array_equal(a, b) for a, b in zip(clip.frames, again.frames))


def test_center_crop() -> None:
    frame = np.arange(480 * 640).reshape(480, 640)
    out = center_crop(frame, 460, 620)
    assert out.shape == (460, 620)
    assert out[0, 0] == frame[10, 10]
    np.testing.assert_array_equal(center_crop(frame, 480, 640), frame)

    small = np.arange(25).reshape(5, 5)
    np.testing.assert_array_equal(center_crop(small, 4, 4), small[:4, :4])
    with pytest.raises(ShapeError):
        center_crop(small, 6, 4)


def test_fill_depth_constant_and_linear() -> None:
    guide = np.full((32, 32, 3), 0.5)
    values = np.full((32, 32), 3.0)
    valid = np.ones((32, 32), dtype=bool)
    valid[10:13, 20:22] = False
    filled = fill_depth(DepthMap(np.where(valid, values, 0.0), valid), guide)
    assert filled.complete
    np.testing.assert_allclose(filled.values, 3.0)

    ramp = np.tile(np.linspace(1.0, 4.0, 32), (32, 1))
    valid = np.ones((32, 32), dtype=bool)
    valid[16, 16] = False
    filled = fill_depth(DepthMap(np.where(valid, ramp, 0.0), valid), guide)
    assert filled.values[16, 16] == pytest.approx(ramp[16, 16], rel=1e-12)
    np.testing.assert_array_equal(filled.values[valid], ramp[valid])


def test_fill_depth_respects_guide_edges() -> None:
    guide = np.zeros((32, 32, 3))
    guide[:, 16:] = 1.0
    values = np.where(np.arange(32)[None, :] < 16, 1.0, 5.0) * np.ones((32, 1))
    valid = np.ones((32, 32), dtype=bool)
    valid[10, 15] = False
    filled = fill_depth(DepthMap(np.where(valid, values, 0.0), valid), guide)
    assert filled.values[10, 15] == pytest.approx(1.0, abs=1e-9)


def cross_bilateral_oracle(values, valid, guide, radius: int = 5, sigma_s: float = 2.5, sigma_r: float = 0.1):
    h, w = values.shape
    out = values.copy()
    for i in range(h):
        for j in range(w):
            if valid[i, j]:
                continue
            num = den = 0.0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    y, x = i + dy, j + dx
                    if not (0 <= y < h and 0 <= x < w) or not valid[y, x]:
                        continue
                    diff = guide[i, j] - guide[y, x]
                    weight = math.exp(-(dy * dy + dx * dx) / (2 * sigma_s**2)) * math.exp(
                        -float(diff @ diff) / (2 * sigma_r**2)
                    )
                    num += weight * values[y, x]
                    den += weight
            out[i, j] = num / den
    return out


def test_fill_depth_matches_cross_bilateral_oracle(rng: np.random.Generator) -> None:
    guide = rng.uniform(size=(20, 20, 3))
    values = rng.uniform(1.0, 10.0, size=(20, 20))
    valid = np.ones((20, 20), dtype=bool)
    valid.ravel()[rng.choice(400, size=40, replace=False)] = False
    values[~valid] = 0.0

    filled = fill_depth(DepthMap(values, valid), guide)
    assert filled.complete
    np.testing.assert_allclose(filled.values, cross_bilateral_oracle(values, valid, guide), rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(filled.values[valid], values[valid])


def test_fill_depth_large_hole_and_failures() -> None:
    values = np.zeros((64, 64))
    valid = np.zeros((64, 64), dtype=bool)
    values[0, 0], valid[0, 0] = 2.5, True
    filled = fill_depth(DepthMap(values, valid), np.full((64, 64, 3), 0.2))
    assert filled.complete
    np.testing.assert_allclose(filled.values, 2.5)

    with pytest.raises(DepthFillError):
        fill_depth(DepthMap(np.zeros((8, 8)), np.zeros((8, 8), dtype=bool)), np.zeros((8, 8, 3)))
    with pytest.raises(ShapeError):
        fill_depth(DepthMap(values, valid), np.zeros((8, 8, 3)))


def test_depth_from_millimetres() -> None:
    depth = DepthMap.from_millimetres(np.array([[0, 1500], [2000, 0]], dtype=np.uint16))
    np.testing.assert_array_equal(depth.valid, [[False, True], [True, False]])
    assert depth.values[0, 1] == 1.5
    assert not depth.complete


def test_load_clean_clip_crops_and_fills(tmp_path: Path, rng: np.random.Generator) -> None:
    root = tmp_path / "clip_a"
    frames = [rng.uniform(size=(12, 14, 3)) for _ in range(3)]
    depths = [np.full((12, 14), 2000, dtype=np.uint16) for _ in range(3)]
    depths[1][5:7, 5:7] = 0
    frame_io.write_frames(root / "frames", frames)
    frame_io.write_depths_mm(root / "depth", depths)

    clip = load_clean_clip(root, crop=(10, 10))
    assert clip.clip_id == "clip_a" and len(clip) == 3
    assert clip.frames[0].shape == (10, 10, 3)
    assert all(d.complete for d in clip.depths)
    np.testing.assert_allclose(clip.depths[1].values, 2.0)

    frame_io.write_depths_mm(tmp_path / "short" / "depth", depths[:2])
    frame_io.write_frames(tmp_path / "short" / "frames", frames)
    with pytest.raises(DatasetError):
        load_clean_clip(tmp_path / "short")


def test_split_for_full_sized_dataset() -> None:
    ids = [f"c{i}" for i in range(280)]
    splits = _split_assignment(ids, 220 / 280, seed=0)
    tags = list(splits.values())
    assert tags.count(SplitTag.train) * 3 == 660
    assert tags.count(SplitTag.test) * 3 == 180


def test_build_dataset_counts_and_layout(tmp_path: Path) -> None:
    clips = ProceduralClips(3, seed=0, n_frames=3, h=16, w=16)
    manifest = build_dataset(clips, styles_per_clip=2, split_ratio=2 / 3, seed=0, out_dir=tmp_path)
    assert len(manifest.entries) == 6
    assert manifest.counts() == {"train": 4, "test": 2}
    assert load_manifest(tmp_path / "manifest.json") == manifest

    by_clip: dict[str, set] = {}
    for entry in manifest.entries:
        by_clip.setdefault(entry.clip_id, set()).add(entry.split)
        assert len(frame_io.frame_paths(tmp_path / entry.underwater_path)) == 3
    assert all(len(tags) == 1 for tags in by_clip.values())


def test_build_dataset_is_deterministic(tmp_path: Path) -> None:
    clips = ProceduralClips(2, seed=4, n_frames=2, h=12, w=12)
    build_dataset(clips, styles_per_clip=2, seed=9, out_dir=tmp_path / "a", threads=1)
    build_dataset(clips, styles_per_clip=2, seed=9, out_dir=tmp_path / "b", threads=2)
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_stored_pairs_can_be_rederived(tmp_path: Path) -> None:
    manifest = build_dataset(ProceduralClips(1, seed=1, n_frames=3, h=16, w=16), styles_per_clip=3, out_dir=tmp_path)
    for entry in manifest.entries:
        clean = frame_io.read_frames(tmp_path / entry.clean_path)
        depths = frame_io.read_depths_mm(tmp_path / "depth" / entry.clip_id)
        underwater = frame_io.read_frames(tmp_path / entry.underwater_path)
        for frame, depth_mm, stored in zip(clean, depths, underwater):
            redone = degrade_frame(frame, DepthMap.from_millimetres(depth_mm), entry.water)
            assert frame_io.to_uint8(redone).tobytes() == frame_io.to_uint8(stored).tobytes()


def test_build_dataset_rejects_bad_input(tmp_path: Path) -> None:
    with pytest.raises(DatasetError):
        build_dataset([], out_dir=tmp_path)
    clip = gen_procedural_clip(0, 2, 8, 8, clip_id="dup")
    with pytest.raises(DatasetError):
        build_dataset([clip, clip], out_dir=tmp_path)
    holey = CleanClip("holey", clip.frames, [DepthMap(d.values, np.eye(8, dtype=bool)) for d in clip.depths])
    with pytest.raises(DatasetError):
        build_dataset([holey], out_dir=tmp_path)
