"""
测试掩蔽协方差、RTF 估计与 MVDR 波束形成

运行：
    python scripts/test_beamforming.py
    pytest scripts/test_beamforming.py
"""

import numpy as np
import pytest

from mvdr_separation.autodiff import ComplexTensor, Tensor, backward
from mvdr_separation.beamforming import (
    NUMERICS,
    BeamformerWeights,
    MaskSet,
    RTFVector,
    apply_beamformer,
    estimate_covariances,
    mvdr_weights,
    normalize_rtf,
    rtf_angle,
    rtf_eigh,
    rtf_power_iteration,
)
from mvdr_separation.dsp import Spectrogram, StftConfig
from mvdr_separation.enums import MaskKind
from mvdr_separation.errors import ShapeError, ValidationError
from mvdr_separation.utils.logger import get_logger

logger = get_logger("test_beamforming")


def _complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _hermitian_pd(rng, batch, channels):
    """(batch..., M, M) 正定 Hermitian 矩阵"""
    b = _complex(rng, tuple(batch) + (channels, channels))
    return b @ np.conj(np.swapaxes(b, -1, -2)) + np.eye(channels)


def _rank_one_problem(rng, bins, channels, ratio):
    """
    R_d = λ h hᴴ + R_ñ，使 R_ñ⁻¹ R_d 的最大特征值为 ratio，其余均为 1；
    真实 RTF 为 h / h_r
    """
    r_noise = _hermitian_pd(rng, (bins, 1), channels)
    h = _complex(rng, (bins, 1, channels))
    quad = np.real(np.einsum("fim,fim->fi", np.conj(h), np.linalg.solve(r_noise, h[..., None])[..., 0]))
    scale = (ratio - 1.0) / quad
    r_target = scale[..., None, None] * h[..., :, None] * np.conj(h[..., None, :]) + r_noise
    return r_target, r_noise, h


def _spectrogram(rng, frames, channels):
    config = StftConfig(frame_size=16, shift=4)
    return Spectrogram(_complex(rng, (frames, config.num_bins, channels)), config, frames * 4, 8000)


# -----------------------------
# 协方差
# -----------------------------
def test_covariances_match_explicit_sum_and_are_hermitian():
    rng = np.random.default_rng(0)
    spec = _spectrogram(rng, 20, 3)
    masks = MaskSet.from_numpy(rng.uniform(size=(3, 20, spec.num_bins, 2)))
    cov = estimate_covariances(spec, masks, epsilon=0.01)

    y = spec.data
    for kind in MaskKind:
        weights = masks.get(kind).numpy() + 0.01
        expected = np.einsum("tfi,tfm,tfn->fimn", weights, y, np.conj(y)) / 20
        got = cov.numpy(kind)
        np.testing.assert_allclose(got, expected, atol=1e-12)
        np.testing.assert_allclose(got, np.conj(np.swapaxes(got, -1, -2)), atol=0)


def test_tied_distortion_covariances_use_mvdr_mask():
    rng = np.random.default_rng(1)
    spec = _spectrogram(rng, 12, 2)
    masks = MaskSet.from_numpy(rng.uniform(size=(3, 12, spec.num_bins, 2)))
    cov = estimate_covariances(spec, masks, epsilon=0.0, tie_distortion_covariances=True)
    np.testing.assert_array_equal(cov.numpy(MaskKind.DISTORTION_RTF), cov.numpy(MaskKind.DISTORTION))
    assert cov.epsilon == 0.0


def test_covariance_input_validation():
    rng = np.random.default_rng(2)
    spec = _spectrogram(rng, 10, 2)
    with pytest.raises(ValidationError):
        estimate_covariances(spec, MaskSet.from_numpy(np.zeros((3, 10, spec.num_bins, 2))), epsilon=-0.1)
    with pytest.raises(ShapeError):
        estimate_covariances(spec, MaskSet.from_numpy(np.zeros((3, 9, spec.num_bins, 2))))
    with pytest.raises(ValidationError):
        MaskSet.from_numpy(np.full((3, 10, spec.num_bins, 2), 1.5))


# -----------------------------
# RTF
# -----------------------------
def test_power_iteration_converges_to_eigh():
    rng = np.random.default_rng(3)
    r_target, r_noise, h = _rank_one_problem(rng, bins=40, channels=4, ratio=3.0)
    exact = rtf_eigh(r_target, r_noise, reference_channel=0).numpy()
    power = rtf_power_iteration(
        ComplexTensor.from_numpy(r_target), ComplexTensor.from_numpy(r_noise), reference_channel=0, eta_max=30
    ).numpy()
    assert np.max(rtf_angle(power, exact)) < 1e-6
    np.testing.assert_allclose(exact, h / h[..., :1], atol=1e-8)


def test_few_power_iterations_are_close_for_large_eigen_gap():
    rng = np.random.default_rng(4)
    r_target, r_noise, _ = _rank_one_problem(rng, bins=40, channels=4, ratio=20.0)
    exact = rtf_eigh(r_target, r_noise, reference_channel=1).numpy()
    power = rtf_power_iteration(
        ComplexTensor.from_numpy(r_target), ComplexTensor.from_numpy(r_noise), reference_channel=1, eta_max=3
    ).numpy()
    assert np.max(rtf_angle(power, exact)) < 0.05


def test_rtf_reference_component_is_exactly_one():
    rng = np.random.default_rng(5)
    r_target, r_noise, _ = _rank_one_problem(rng, bins=5, channels=3, ratio=4.0)
    for reference in range(3):
        rtf = rtf_power_iteration(
            ComplexTensor.from_numpy(r_target), ComplexTensor.from_numpy(r_noise), reference, eta_max=2
        )
        assert np.all(rtf.numpy()[..., reference] == 1.0)
        assert np.all(rtf_eigh(r_target, r_noise, reference).numpy()[..., reference] == 1.0)


def test_degenerate_reference_falls_back_to_unit_vector():
    NUMERICS.reset()
    v = np.array([[[0.0, 1.0 + 1.0j, 2.0]], [[1.0, 2.0, 3.0j]]])
    out = normalize_rtf(ComplexTensor.from_numpy(v), 0, "test").numpy()
    np.testing.assert_array_equal(out[0, 0], [1.0, 0.0, 0.0])
    np.testing.assert_allclose(out[1, 0], [1.0, 2.0, 3.0j])
    assert NUMERICS.get("test.degenerate_normalization") == 1


def test_rtf_rejects_bad_arguments():
    rng = np.random.default_rng(6)
    r = ComplexTensor.from_numpy(_hermitian_pd(rng, (2, 1), 3))
    with pytest.raises(ValidationError):
        rtf_power_iteration(r, r, reference_channel=0, eta_max=0)
    with pytest.raises(ValidationError):
        rtf_power_iteration(r, r, reference_channel=3)
    with pytest.raises(ShapeError):
        rtf_eigh(r.numpy(), r.numpy()[:, :, :2, :2])


# -----------------------------
# MVDR
# -----------------------------
def test_mvdr_is_distortionless():
    rng = np.random.default_rng(7)
    r_noise = _hermitian_pd(rng, (1000, 1), 4)
    v = _complex(rng, (1000, 1, 4))
    v[..., 0] = 1.0
    rtf = RTFVector(ComplexTensor.from_numpy(v), 0)
    weights = mvdr_weights(ComplexTensor.from_numpy(r_noise), rtf)
    assert np.max(weights.distortion_error(rtf)) < 1e-8


def test_mvdr_minimizes_output_noise_power():
    rng = np.random.default_rng(8)
    r_noise = _hermitian_pd(rng, (1, 1), 3)
    v = _complex(rng, (1, 1, 3))
    v[..., 0] = 1.0
    w = mvdr_weights(ComplexTensor.from_numpy(r_noise), RTFVector(ComplexTensor.from_numpy(v), 0)).numpy()[0, 0]
    best = np.real(np.conj(w) @ r_noise[0, 0] @ w)
    for _ in range(50):
        # 满足无失真约束的扰动不应降低输出噪声功率
        delta = _complex(rng, 3)
        delta -= v[0, 0] * (np.conj(v[0, 0]) @ delta) / np.real(np.conj(v[0, 0]) @ v[0, 0])
        other = w + 0.1 * delta
        assert np.real(np.conj(other) @ r_noise[0, 0] @ other) >= best - 1e-12


def test_singular_noise_covariance_is_loaded():
    NUMERICS.reset()
    v = np.array([[[1.0, 0.5j]]])
    rtf = RTFVector(ComplexTensor.from_numpy(v), 0)
    weights = mvdr_weights(ComplexTensor.from_numpy(np.zeros((1, 1, 2, 2))), rtf)
    assert np.all(np.isfinite(weights.numpy()))
    assert NUMERICS.get("mvdr_weights.diagonal_loading") == 1
    assert np.max(weights.distortion_error(rtf)) < 1e-8


def test_apply_beamformer_matches_inner_product():
    rng = np.random.default_rng(9)
    spec = _spectrogram(rng, 6, 3)
    w = _complex(rng, (spec.num_bins, 2, 3))
    out = apply_beamformer(BeamformerWeights(ComplexTensor.from_numpy(w), 0), spec).numpy()
    expected = np.einsum("fim,tfm->tfi", np.conj(w), spec.data)
    assert out.shape == (6, spec.num_bins, 2)
    np.testing.assert_allclose(out, expected, atol=1e-12)


def test_gradient_flows_from_output_to_masks():
    rng = np.random.default_rng(10)
    spec = _spectrogram(rng, 8, 2)
    masks = MaskSet(Tensor(rng.uniform(0.1, 0.9, size=(3, 8, spec.num_bins, 1)), requires_grad=True))
    cov = estimate_covariances(spec, masks)
    rtf = rtf_power_iteration(cov.get(MaskKind.TARGET), cov.get(MaskKind.DISTORTION_RTF), 0, eta_max=2)
    weights = mvdr_weights(cov.get(MaskKind.DISTORTION), rtf)
    loss = apply_beamformer(weights, spec).abs2().mean()
    grads = backward(loss)
    assert masks.masks in grads
    assert np.all(np.isfinite(grads[masks.masks]))
    assert np.any(grads[masks.masks] != 0)


def main():
    print("=" * 60)
    print("测试 beamforming")
    print("=" * 60)
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            test()
            logger.info("通过: %s", name)
    print("测试完成！")


if __name__ == "__main__":
    main()
