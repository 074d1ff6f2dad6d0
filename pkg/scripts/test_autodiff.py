"""
测试自动微分：逐个算子的梯度检查、复数运算与计算图工具

运行：
    python scripts/test_autodiff.py
    pytest scripts/test_autodiff.py
"""

import numpy as np
import pytest
from scipy import linalg as sla

import mvdr_separation.autodiff as autodiff
from mvdr_separation.autodiff import (
    ComplexTensor,
    Tensor,
    backward,
    complex_einsum,
    complex_matmul,
    complex_solve,
    concatenate,
    convolve,
    einsum,
    grad_check,
    log10,
    no_grad,
    overlap_add,
    solve,
    solve_toeplitz,
    stack,
    tape_is_real,
)
from mvdr_separation.errors import NonFiniteError, NumericalError, ShapeError, ValidationError
from mvdr_separation.utils.logger import get_logger

logger = get_logger("test_autodiff")

TOLERANCE = 1e-4


def _weighted(out: Tensor, seed: int = 99) -> Tensor:
    """把任意形状输出投影成标量：Σ out ⊙ W"""
    weights = np.random.default_rng(seed).standard_normal(out.shape)
    return (out * weights).sum()


def _check(fn, *points):
    error = grad_check(lambda leaves: _weighted(fn(*leaves)), [np.asarray(p, dtype=np.float64) for p in points])
    assert error < TOLERANCE, error
    return error


# -----------------------------
# 逐元素与广播
# -----------------------------
def test_binary_ops_with_broadcast():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4,))
    c = rng.uniform(0.5, 2.0, (3, 1))
    _check(lambda x, y: x + y, a, b)
    _check(lambda x, y: x - y, a, b)
    _check(lambda x, y: x * y, a, b)
    _check(lambda x, y: x / y, a, c)
    _check(lambda x: -x * 2.0 + 1.0, a)
    _check(lambda x: 3.0 / x, c)


def test_unary_ops():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 3))
    positive = rng.uniform(0.5, 3.0, (5, 3))
    _check(lambda t: t.exp(), x)
    _check(lambda t: t.log(), positive)
    _check(lambda t: t.log10(), positive)
    _check(lambda t: t.sqrt(), positive)
    _check(lambda t: t.sigmoid(), x)
    _check(lambda t: t.tanh(), x)
    _check(lambda t: t ** 3.0, x)
    # 远离下限，避免在折点处做差分
    _check(lambda t: t.clamp_min(0.1), np.where(np.abs(x - 0.1) < 0.05, x + 0.2, x))


def test_functional_log10_is_exported():
    for name in autodiff.__all__:
        assert hasattr(autodiff, name), name
    positive = np.random.default_rng(2).uniform(0.5, 3.0, (4, 2))
    np.testing.assert_allclose(log10(positive).numpy(), np.log10(positive))
    _check(lambda t: log10(t), positive)


def test_clamp_min_blocks_gradient_below_floor():
    x = Tensor(np.array([-1.0, 2.0]), requires_grad=True)
    backward(x.clamp_min(0.0).sum())
    np.testing.assert_array_equal(x.grad, [0.0, 1.0])


# -----------------------------
# 形状与规约
# -----------------------------
def test_shape_ops_and_reductions():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 3, 4))
    _check(lambda t: t.reshape(6, 4), x)
    _check(lambda t: t.transpose(2, 0, 1), x)
    _check(lambda t: t.swapaxes(0, 2), x)
    _check(lambda t: t[:, 1:, ::2], x)
    _check(lambda t: t[np.array([0, 1, 1]), 2], x)
    _check(lambda t: t.sum(axis=1), x)
    _check(lambda t: t.mean(axis=(0, 2), keepdims=True), x)
    _check(lambda t: t.sum(), x)


def test_stack_and_concatenate():
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
    _check(lambda x, y: stack([x, y], axis=1), a, b)
    _check(lambda x, y: concatenate([x, y], axis=0), a, b)


# -----------------------------
# 线性代数与信号
# -----------------------------
def test_matmul_and_einsum():
    rng = np.random.default_rng(4)
    a, b = rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))
    _check(lambda x, y: x @ y, a, b)
    _check(lambda x, y: einsum("bij,jk->bik", x, y), a, b)
    # 只在一个操作数中出现、被求和掉的下标
    _check(lambda x, y: einsum("bij,jk->k", x, y), a, b)


def test_solve_gradient_and_value():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((2, 3, 3)) + 3.0 * np.eye(3)
    b = rng.standard_normal((2, 3, 2))
    _check(solve, a, b)
    np.testing.assert_allclose(solve(Tensor(a), Tensor(b)).numpy(), np.linalg.solve(a, b), atol=1e-12)


def test_solve_singular_raises_numerical_error():
    with pytest.raises(NumericalError):
        solve(Tensor(np.zeros((2, 2))), Tensor(np.ones((2, 1))))


def test_solve_toeplitz_matches_dense_solve():
    rng = np.random.default_rng(6)
    column = np.array([4.0, 1.0, 0.5, 0.2])
    rhs = rng.standard_normal(4)
    _check(lambda r: solve_toeplitz(column, r), rhs)
    dense = np.linalg.solve(sla.toeplitz(column), rhs)
    np.testing.assert_allclose(solve_toeplitz(column, Tensor(rhs)).numpy(), dense, atol=1e-12)


def test_convolve_and_overlap_add():
    rng = np.random.default_rng(7)
    _check(convolve, rng.standard_normal(12), rng.standard_normal(5))
    frames = rng.standard_normal((6, 2, 8))
    _check(lambda f: overlap_add(f, 3), frames)
    out = overlap_add(Tensor(np.ones((3, 4))), 2).numpy()
    np.testing.assert_array_equal(out, [1, 1, 2, 2, 2, 2, 1, 1])


# -----------------------------
# 复数
# -----------------------------
def _random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_complex_ops_match_numpy():
    rng = np.random.default_rng(8)
    a = _random_complex(rng, (2, 3, 3)) + 3.0 * np.eye(3)
    b = _random_complex(rng, (2, 3, 2))
    ca, cb = ComplexTensor.from_numpy(a), ComplexTensor.from_numpy(b)
    np.testing.assert_allclose(complex_matmul(ca, cb).numpy(), a @ b, atol=1e-12)
    np.testing.assert_allclose(complex_solve(ca, cb).numpy(), np.linalg.solve(a, b), atol=1e-12)
    np.testing.assert_allclose(complex_einsum("bij,bjk->bik", ca, cb).numpy(), a @ b, atol=1e-12)
    outer = ca * cb[..., :1].H
    np.testing.assert_allclose(outer.numpy(), a * np.conj(np.swapaxes(b[..., :1], -1, -2)), atol=1e-12)
    np.testing.assert_allclose((ca / ca).numpy(), np.ones_like(a), atol=1e-12)
    np.testing.assert_allclose(ca.abs2().numpy(), np.abs(a) ** 2, atol=1e-12)
    np.testing.assert_allclose(ca.H.numpy(), np.conj(np.swapaxes(a, -1, -2)))


def test_complex_solve_gradient():
    rng = np.random.default_rng(9)
    a_re = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
    a_im = rng.standard_normal((3, 3))
    b_re, b_im = rng.standard_normal((3, 1)), rng.standard_normal((3, 1))

    def fn(ar, ai, br, bi):
        return complex_solve(ComplexTensor(ar, ai), ComplexTensor(br, bi)).abs2()

    _check(fn, a_re, a_im, b_re, b_im)


def test_tensor_rejects_complex_data():
    with pytest.raises(ValidationError):
        Tensor(np.array([1.0 + 1.0j]))


# -----------------------------
# 计算图工具
# -----------------------------
def test_gradient_accumulates_over_shared_leaf():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    grads = backward((x * x + x).sum())
    np.testing.assert_allclose(grads[x], 2.0 * x.data + 1.0)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_nonfinite_forward_names_first_bad_node():
    x = Tensor(np.array([-1.0, 1.0]), requires_grad=True)
    with pytest.raises(NonFiniteError) as info:
        backward(x.log().sum())
    assert "log" in info.value.node


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (x * 3.0).sum()
    assert not y.requires_grad
    assert backward(y) == {}
    assert (x * 3.0).requires_grad


def test_tape_stays_real_for_complex_computation():
    rng = np.random.default_rng(10)
    a = ComplexTensor.from_numpy(_random_complex(rng, (3, 3)) + 3 * np.eye(3), requires_grad=True)
    b = ComplexTensor.from_numpy(_random_complex(rng, (3, 1)))
    loss = complex_solve(a, b).abs2().sum()
    assert tape_is_real(loss)


def main():
    print("=" * 60)
    print("测试 autodiff")
    print("=" * 60)
    for name, test in list(globals().items()):
        if name.startswith("test_") and callable(test):
            test()
            logger.info("通过: %s", name)
    print("测试完成！")


if __name__ == "__main__":
    main()
