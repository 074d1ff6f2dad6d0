"""
测试房间仿真、混合合成与数据集落盘

运行：
    python scripts/test_sim.py
    pytest scripts/test_sim.py
"""

import json
import tempfile
from pathlib import Path

import numpy as np
import pytest

from mvdr_separation.dsp import StftConfig, Waveform
from mvdr_separation.enums import OverlapMode
from mvdr_separation.errors import ValidationError
from mvdr_separation.sim import (
    MANIFEST_NAME,
    RIR,
    DatasetConfig,
    RoomSpec,
    circular_array,
    energy_decay_curve,
    generate_example,
    image_method_rir,
    load_dataset,
    make_dataset,
    read_manifest,
    schroeder_t60,
    split_rir,
    synthesize_mixture,
    synthetic_sources,
    synthetic_speech,
    transfer_function_gap,
    write_dataset,
)
from mvdr_separation.utils.logger import get_logger

logger = get_logger("test_sim")

TOY_DATASET = dict(
    num_examples=3,
    utterance_sec=0.25,
    room_min=(4.0, 3.5, 2.5),
    room_max=(5.0, 4.5, 3.0),
    t60_range=(0.15, 0.3),
    array_ring_mics=3,
    array_center_mic=False,
    source_distance_range=(0.8, 1.5),
    rir_duration_sec=0.1,
    max_order=6,
)


def _small_room(t60=0.3, sources=((1.0, 1.0, 1.2), (3.0, 2.5, 1.4))):
    return RoomSpec(
        dimensions=(4.0, 3.5, 2.5),
        t60=t60,
        mic_positions=circular_array((2.0, 1.75, 1.2), count=3, with_center=False),
        source_positions=list(sources),
        sample_rate=8000,
        rir_duration_sec=0.1,
        max_order=6,
    )


def _example(snr_db=15.0):
    room = _small_room()
    rng = np.random.default_rng(0)
    sources = [synthetic_speech(2000, 8000, rng), synthetic_speech(1800, 8000, rng)]
    rirs = [image_method_rir(room, i) for i in range(2)]
    return synthesize_mixture(sources, rirs, snr_db, noise_seed=1, example_id="t0")


# -----------------------------
# RIR
# -----------------------------
def test_anechoic_amplitude_follows_inverse_distance():
    # 8 kHz 下 1.715 m 与 3.43 m 恰为 40 / 80 个采样点
    room = RoomSpec(
        dimensions=(10.0, 10.0, 10.0),
        t60=0.3,
        mic_positions=[(6.715, 5.0, 5.0), (8.43, 5.0, 5.0)],
        source_positions=[(5.0, 5.0, 5.0)],
        sample_rate=8000,
        rir_duration_sec=0.02,
        absorption=1.0,
    )
    rir = image_method_rir(room, 0)
    near, far = rir.taps
    assert rir.direct_index == (40, 80)
    assert near[40] == pytest.approx(1.0 / (4.0 * np.pi * 1.715), rel=1e-9)
    assert near[40] / far[80] == pytest.approx(2.0, rel=1e-9)
    # 整数延迟时 sinc 在其余整数点为零
    assert np.max(np.abs(np.delete(near, 40))) < 1e-9 * near[40]


@pytest.mark.parametrize("t60", [0.2, 0.4, 0.6])
def test_schroeder_t60_close_to_target(t60):
    # 默认 RIR 时长 1.2·T60 加直达声延迟，覆盖整个 T60 区间
    room = RoomSpec(
        dimensions=(4.0, 3.5, 2.5),
        t60=t60,
        mic_positions=[(2.0, 1.5, 1.2)],
        source_positions=[(3.0, 2.5, 1.5)],
        sample_rate=8000,
    )
    rir = image_method_rir(room, 0)
    assert rir.taps.shape[1] >= int(t60 * 8000)
    measured = schroeder_t60(rir.taps[0], 8000)
    assert 0.7 * t60 <= measured <= 1.3 * t60


def test_energy_decay_curve_is_normalized_and_monotone():
    rir = image_method_rir(_small_room(), 0)
    edc = energy_decay_curve(rir.taps[0])
    assert edc[0] == pytest.approx(0.0)
    finite = edc[np.isfinite(edc)]
    assert np.all(np.diff(finite) <= 1e-12)
    with pytest.raises(ValidationError):
        energy_decay_curve(np.zeros(16))



def test_split_rir_is_exact_partition():
    rir = image_method_rir(_small_room(), 0)
    early, late = split_rir(rir, 50.0)
    np.testing.assert_array_equal(early.taps + late.taps, rir.taps)
    boundary = rir.direct_index[0] + 400
    assert np.all(early.taps[0, boundary:] == 0)
    assert np.all(late.taps[0, :boundary] == 0)


def test_room_validation():
    with pytest.raises(ValidationError):
        RoomSpec((4.0, 3.5, 2.5), 0.3, [(5.0, 1.0, 1.0)], [(1.0, 1.0, 1.0)])
    with pytest.raises(ValidationError):
        RoomSpec((4.0, 3.5, 2.5), 0.0, [(1.0, 1.0, 1.0)], [(2.0, 1.0, 1.0)])
    # T60 过短时 Sabine 吸声系数超过 1
    room = RoomSpec((4.0, 3.5, 2.5), 0.01, [(1.0, 1.0, 1.0)], [(2.0, 1.0, 1.0)])
    with pytest.raises(ValidationError):
        image_method_rir(room, 0)
    with pytest.raises(ValidationError):
        image_method_rir(_small_room(), 5)


def test_circular_array_geometry():
    mics = circular_array((2.0, 2.0, 1.0), radius=0.05, count=6)
    assert len(mics) == 7
    assert mics[0] == (2.0, 2.0, 1.0)
    radii = [np.hypot(x - 2.0, y - 2.0) for x, y, _ in mics[1:]]
    np.testing.assert_allclose(radii, 0.05)


# -----------------------------
# 混合
# -----------------------------
def test_mixture_decomposes_exactly():
    example = _example()
    assert example.decomposition_error() < 1e-12
    assert example.length == 2000
    assert len(example.dry_sources[1]) == 2000
    assert np.all(example.dry_sources[1].samples[1800:] == 0)


def test_mixture_hits_requested_snr():
    for snr in (0.0, 12.5, 30.0):
        assert _example(snr).measured_snr_db() == pytest.approx(snr, abs=0.01)
    assert np.all(_example(np.inf).noise.as_array() == 0)


def test_early_reference_is_early_image_channel():
    example = _example()
    np.testing.assert_array_equal(example.early_reference(1), example.early_images[1].channel(0).samples)
    np.testing.assert_array_equal(example.early_reference(0, 2), example.early_images[0].channel(2).samples)


def test_synthesize_mixture_validation():
    room = _small_room()
    rirs = [image_method_rir(room, 0)]
    with pytest.raises(ValidationError):
        synthesize_mixture([Waveform(np.zeros(100), 8000)], rirs, 10.0)
    with pytest.raises(ValidationError):
        synthesize_mixture([Waveform(np.ones(100), 16000)], rirs, 10.0)
    with pytest.raises(ValidationError):
        synthesize_mixture([Waveform(np.ones(100), 8000)] * 2, rirs, 10.0)


def test_transfer_function_gap_grows_with_rir_length():
    rng = np.random.default_rng(2)
    dry = Waveform(rng.standard_normal(4000), 8000)
    config = StftConfig(frame_size=256, shift=64)
    short = RIR(np.stack([np.eye(1, 64, 3)[0], np.eye(1, 64, 7)[0] * 0.8]), 8000)
    long_taps = rng.standard_normal((2, 2400)) * np.exp(-np.arange(2400) / 600.0)
    gap_short = transfer_function_gap(dry, short, config)
    gap_long = transfer_function_gap(dry, RIR(long_taps, 8000), config)
    assert gap_short < gap_long


def test_synthetic_speech_is_seeded_and_normalized():
    a = synthetic_speech(4000, 8000, np.random.default_rng(5))
    b = synthetic_speech(4000, 8000, np.random.default_rng(5))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert np.sqrt(np.mean(a.samples ** 2)) == pytest.approx(0.1)


def test_synthetic_sources_count_and_seed():
    first = synthetic_sources(3, 2000, 8000, np.random.default_rng(6))
    second = synthetic_sources(3, 2000, 8000, np.random.default_rng(6))
    assert len(first) == 3
    for a, b in zip(first, second):
        assert a.samples.shape == (2000,) and a.sample_rate == 8000
        np.testing.assert_array_equal(a.samples, b.samples)
    # 同一个生成器依次取出，各说话人互不相同
    assert not np.allclose(first[0].samples, first[1].samples)


# -----------------------------
# 数据集
# -----------------------------
def test_generate_example_is_deterministic():
    config = DatasetConfig(**TOY_DATASET)
    a, b = generate_example(config, 7, 1), generate_example(config, 7, 1)
    np.testing.assert_array_equal(a.mixture.as_array(), b.mixture.as_array())
    assert a.metadata == b.metadata
    c = generate_example(config, 8, 1)
    assert not np.array_equal(a.mixture.as_array(), c.mixture.as_array())


def test_make_dataset_independent_of_workers():
    serial = make_dataset(DatasetConfig(**TOY_DATASET), seed=3)
    parallel = make_dataset(DatasetConfig(**{**TOY_DATASET, "workers": 3}), seed=3)
    assert [e.example_id for e in serial] == ["ex00000", "ex00001", "ex00002"]
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.mixture.as_array(), b.mixture.as_array())


def test_partial_overlap_offsets_sources():
    config = DatasetConfig(**{**TOY_DATASET, "full_overlap_ratio": 0.0})
    example = generate_example(config, 0, 0)
    meta = example.metadata
    utterance = config.utterance_samples
    assert meta["overlap"] == OverlapMode.PARTIAL.value
    low, high = config.partial_overlap_range
    assert low - 1.0 / utterance <= meta["overlap_fraction"] <= high + 1.0 / utterance
    offset = example.length - utterance
    assert offset > 0
    assert np.all(example.dry_sources[0].samples[utterance:] == 0)
    assert np.all(example.dry_sources[1].samples[:offset] == 0)


def test_write_and_load_dataset():
    examples = make_dataset(DatasetConfig(**{**TOY_DATASET, "num_examples": 2}), seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        manifest = write_dataset(examples, tmp)
        assert manifest == Path(tmp) / MANIFEST_NAME
        records = read_manifest(tmp)
        assert [r["id"] for r in records] == ["ex00000", "ex00001"]
        assert (Path(tmp) / "ex00001" / "late1.wav").exists()
        loaded = load_dataset(manifest)
    for original, restored in zip(examples, loaded):
        assert restored.example_id == original.example_id
        assert restored.num_channels == 3 and restored.num_speakers == 2
        np.testing.assert_allclose(restored.mixture.as_array(), original.mixture.as_array(), atol=1e-6)
        np.testing.assert_allclose(restored.dry_sources[0].samples, original.dry_sources[0].samples, atol=1e-6)
        assert restored.metadata["overlap"] == original.metadata["overlap"]
        assert restored.snr_db == pytest.approx(original.snr_db)


def test_dataset_config_validation():
    with pytest.raises(ValidationError):
        DatasetConfig(t60_range=(0.5, 0.2))
    with pytest.raises(ValidationError):
        DatasetConfig(partial_overlap_range=(0.0, 0.5))
    with pytest.raises(ValidationError):
        DatasetConfig(array_ring_mics=2, array_center_mic=False, reference_channel=2)
    with pytest.raises(ValidationError):
        read_manifest("/nonexistent/dataset")
    assert DatasetConfig.from_dict(DatasetConfig(**TOY_DATASET).to_dict()) == DatasetConfig(**TOY_DATASET)


def test_rir_duration_covers_t60_range():
    assert not DatasetConfig().truncates_rir
    assert DatasetConfig(**TOY_DATASET).truncates_rir
    assert not DatasetConfig(t60_range=(0.15, 0.6), rir_duration_sec=0.6).truncates_rir
    with pytest.raises(ValidationError):
        DatasetConfig(rir_duration_sec=0.0)
    desk = json.loads((Path(__file__).resolve().parents[1] / "configs" / "desk.json").read_text(encoding="utf-8"))
    assert not DatasetConfig.from_dict(desk["dataset"]).truncates_rir


def main():
    print("=" * 60)
    print("测试 sim")
    print("=" * 60)
    for name, test in list(globals().items()):
        if not name.startswith("test_") or not callable(test):
            continue
        if name == "test_schroeder_t60_close_to_target":
            for t60 in (0.2, 0.4, 0.6):
                test(t60)
        else:
            test()
        logger.info("通过: %s", name)
    print("测试完成！")


if __name__ == "__main__":
    main()
