"""
测试掩蔽估计网络与检查点

运行：
    python scripts/test_model.py
    pytest scripts/test_model.py
"""

import tempfile
from collections import OrderedDict
from pathlib import Path

import numpy as np
import pytest

from mvdr_separation.autodiff import backward, grad_check, gradients
from mvdr_separation.dsp import MultichannelWaveform, StftConfig, stft
from mvdr_separation.errors import ShapeError, ValidationError
from mvdr_separation.model import (
    NetConfig,
    Parameters,
    estimate_masks,
    forward,
    init_params,
    load_checkpoint,
    normalize_features,
    save_checkpoint,
)
from mvdr_separation.utils.logger import get_logger

logger = get_logger("test_model")

SMALL = NetConfig(num_speakers=2, num_bins=9, hidden_units=4, seed=3)


def test_forward_shapes_and_range():
    params = init_params(SMALL)
    features = np.random.default_rng(0).standard_normal((7, 9))
    masks = forward(params, features)
    assert masks.masks.shape == (3, 7, 9, 2)
    assert masks.num_frames == 7 and masks.num_bins == 9 and masks.num_speakers == 2
    data = masks.masks.data
    assert data.min() >= 0.0 and data.max() <= 1.0


@pytest.mark.parametrize("layers,bidirectional", [(1, False), (2, True)])
def test_forward_variants(layers, bidirectional):
    config = NetConfig(num_speakers=3, num_bins=5, hidden_units=3, recurrent_layers=layers, bidirectional=bidirectional)
    params = init_params(config)
    masks = forward(params, np.ones((4, 5)))
    assert masks.masks.shape == (3, 4, 5, 3)
    assert len(params) == 4 * layers * len(config.directions) + 4


def test_forward_rejects_wrong_width():
    with pytest.raises(ShapeError):
        forward(init_params(SMALL), np.zeros((4, 8)))


def test_estimate_masks_from_spectrogram():
    config = NetConfig(num_speakers=2, num_bins=StftConfig(frame_size=16, shift=4).num_bins, hidden_units=4)
    wave = MultichannelWaveform.from_array(np.random.default_rng(1).standard_normal((3, 200)), 8000)
    spec = stft(wave, StftConfig(frame_size=16, shift=4))
    masks = estimate_masks(init_params(config), spec, reference_channel=2)
    assert masks.masks.shape == (3, spec.num_frames, spec.num_bins, 2)


def test_normalize_features_zero_mean_unit_variance():
    features = np.random.default_rng(2).uniform(size=(50, 6)) * 4.0 + 1.0
    out = normalize_features(features)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-12)
    # 常数特征不会除以零
    assert np.all(np.isfinite(normalize_features(np.ones((5, 3)))))


def test_init_is_seeded():
    a, b = init_params(SMALL).to_arrays(), init_params(SMALL).to_arrays()
    other = init_params(NetConfig(**{**SMALL.to_dict(), "seed": 4})).to_arrays()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["proj2.w"], other["proj2.w"])


def test_every_parameter_receives_gradient():
    params = init_params(SMALL)
    features = np.random.default_rng(5).standard_normal((6, 9))
    weights = np.random.default_rng(6).standard_normal((3, 6, 9, 2))
    loss = (forward(params, features).masks * weights).sum()
    for name, grad in zip(params, gradients(loss, params.tensors())):
        assert np.any(grad != 0), name


def test_network_gradient_check():
    config = NetConfig(num_speakers=1, num_bins=3, hidden_units=2, seed=7)
    params = init_params(config)
    names = list(params)
    features = np.random.default_rng(8).standard_normal((3, 3))
    weights = np.random.default_rng(9).standard_normal((3, 3, 3, 1))

    def fn(leaves):
        rebuilt = Parameters(OrderedDict(zip(names, leaves)), config)
        return (forward(rebuilt, features).masks * weights).sum()

    assert grad_check(fn, [t.data for t in params.tensors()]) < 1e-4


def test_zero_grad_clears_leaf_gradients():
    params = init_params(SMALL)
    backward(forward(params, np.ones((3, 9))).masks.sum())
    assert params["proj2.b"].grad is not None
    params.zero_grad()
    assert all(t.grad is None for t in params.tensors())


# -----------------------------
# 检查点
# -----------------------------
def test_checkpoint_round_trip():
    params = init_params(SMALL)
    meta = {"step": 12, "train_config": {"reference_channel": 0}}
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(Path(tmp) / "model", params, meta)
        assert path.suffix == ".npz"
        loaded, loaded_meta = load_checkpoint(path)
    assert loaded.config == SMALL
    assert loaded_meta == meta
    assert list(loaded) == list(params)
    for name in params:
        np.testing.assert_array_equal(loaded[name].data, params[name].data)
        assert loaded[name].requires_grad


def test_checkpoint_rejects_missing_and_foreign_files():
    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(ValidationError):
            load_checkpoint(Path(tmp) / "missing.npz")
        foreign = Path(tmp) / "foreign.npz"
        np.savez(foreign, weights=np.zeros(3))
        with pytest.raises(ValidationError):
            load_checkpoint(foreign)


def test_net_config_validation():
    with pytest.raises(ValidationError):
        NetConfig(hidden_units=0)
    with pytest.raises(ValidationError):
        NetConfig(projection_layers=3)
    assert NetConfig.from_dict(SMALL.to_dict()) == SMALL


def main():
    print("=" * 60)
    print("测试 model")
    print("=" * 60)
    for name, test in list(globals().items()):
        if not name.startswith("test_") or not callable(test):
            continue
        if name == "test_forward_variants":
            for layers, bidirectional in ((1, False), (2, True)):
                test(layers, bidirectional)
        else:
            test()
        logger.info("通过: %s", name)
    print("测试完成！")


if __name__ == "__main__":
    main()
