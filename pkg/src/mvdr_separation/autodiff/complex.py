"""
复数张量：(re, im) 两个实数 Tensor

所有复数运算都展开成实数运算，计算图中没有复数节点。
"""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np

from mvdr_separation.autodiff import tensor as T
from mvdr_separation.autodiff.tensor import Tensor, as_tensor
from mvdr_separation.errors import ShapeError, ValidationError


class ComplexTensor:
    """
    复数张量

    Attributes:
        re: 实部 Tensor
        im: 虚部 Tensor（形状与 re 相同）
    """

    __slots__ = ("re", "im")
    __array_ufunc__ = None

    def __init__(self, re, im=None):
        re = as_tensor(re)
        im = Tensor(np.zeros_like(re.data)) if im is None else as_tensor(im)
        if re.shape != im.shape:
            raise ShapeError("ComplexTensor", [re.shape, im.shape], "实部与虚部形状必须相同")
        self.re = re
        self.im = im

    @classmethod
    def from_numpy(cls, array, requires_grad: bool = False, name: Optional[str] = None) -> "ComplexTensor":
        array = np.asarray(array, dtype=np.complex128)
        re_name = f"{name}.re" if name else None
        im_name = f"{name}.im" if name else None
        return cls(
            Tensor(array.real.copy(), requires_grad=requires_grad, name=re_name),
            Tensor(array.imag.copy(), requires_grad=requires_grad, name=im_name),
        )

    def numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.re.shape

    @property
    def ndim(self) -> int:
        return self.re.ndim

    @property
    def requires_grad(self) -> bool:
        return self.re.requires_grad or self.im.requires_grad

    def __repr__(self) -> str:
        return f"ComplexTensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -----------------------------
    # 算术
    # -----------------------------
    def __add__(self, other):
        o = as_complex(other)
        return ComplexTensor(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = as_complex(other)
        return ComplexTensor(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return as_complex(other) - self

    def __neg__(self):
        return ComplexTensor(-self.re, -self.im)

    def __mul__(self, other):
        if _is_real(other):
            o = as_tensor(other)
            return ComplexTensor(self.re * o, self.im * o)
        o = as_complex(other)
        return ComplexTensor(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if _is_real(other):
            o = as_tensor(other)
            return ComplexTensor(self.re / o, self.im / o)
        o = as_complex(other)
        den = o.abs2()
        num = self * o.conj()
        return ComplexTensor(num.re / den, num.im / den)

    def __matmul__(self, other):
        return complex_matmul(self, other)

    def __getitem__(self, index):
        return ComplexTensor(self.re[index], self.im[index])

    def conj(self) -> "ComplexTensor":
        return ComplexTensor(self.re, -self.im)

    @property
    def H(self) -> "ComplexTensor":
        """最后两维的共轭转置"""
        if self.ndim < 2:
            raise ShapeError("hermitian", [self.shape], "至少需要二维")
        return ComplexTensor(self.re.swapaxes(-1, -2), -self.im.swapaxes(-1, -2))

    def abs2(self) -> Tensor:
        """|z|² (实数 Tensor)"""
        return self.re * self.re + self.im * self.im

    def real(self) -> Tensor:
        return self.re

    def imag(self) -> Tensor:
        return self.im

    def sum(self, axis=None, keepdims: bool = False) -> "ComplexTensor":
        return ComplexTensor(self.re.sum(axis, keepdims), self.im.sum(axis, keepdims))

    def mean(self, axis=None, keepdims: bool = False) -> "ComplexTensor":
        return ComplexTensor(self.re.mean(axis, keepdims), self.im.mean(axis, keepdims))

    def reshape(self, *shape) -> "ComplexTensor":
        return ComplexTensor(self.re.reshape(*shape), self.im.reshape(*shape))

    def transpose(self, *axes) -> "ComplexTensor":
        return ComplexTensor(self.re.transpose(*axes), self.im.transpose(*axes))

    def swapaxes(self, axis1: int, axis2: int) -> "ComplexTensor":
        return ComplexTensor(self.re.swapaxes(axis1, axis2), self.im.swapaxes(axis1, axis2))


ComplexLike = Union[ComplexTensor, Tensor, np.ndarray, complex, float, int]


def _is_real(value) -> bool:
    if isinstance(value, ComplexTensor):
        return False
    if isinstance(value, Tensor):
        return True
    return not np.iscomplexobj(value)


def as_complex(value: ComplexLike) -> ComplexTensor:
    """转换为 ComplexTensor；实数 Tensor 的虚部为常量 0"""
    if isinstance(value, ComplexTensor):
        return value
    if isinstance(value, Tensor):
        return ComplexTensor(value, Tensor(np.zeros_like(value.data)))
    return ComplexTensor.from_numpy(value)


# -----------------------------
# 线性代数
# -----------------------------
def complex_matmul(a: ComplexLike, b: ComplexLike) -> ComplexTensor:
    """(a_r + i a_i)(b_r + i b_i) 用 4 次实矩阵乘法表示"""
    a, b = as_complex(a), as_complex(b)
    re = T.matmul(a.re, b.re) - T.matmul(a.im, b.im)
    im = T.matmul(a.re, b.im) + T.matmul(a.im, b.re)
    return ComplexTensor(re, im)


def complex_einsum(subscripts: str, a: ComplexLike, b: ComplexLike) -> ComplexTensor:
    """两个操作数的复数 einsum；任一操作数为实数时省略对应项"""
    a_real, b_real = _is_real(a), _is_real(b)
    if a_real and b_real:
        return ComplexTensor(T.einsum(subscripts, as_tensor(a), as_tensor(b)))
    if a_real:
        a = as_tensor(a)
        b = as_complex(b)
        return ComplexTensor(T.einsum(subscripts, a, b.re), T.einsum(subscripts, a, b.im))
    if b_real:
        a = as_complex(a)
        b = as_tensor(b)
        return ComplexTensor(T.einsum(subscripts, a.re, b), T.einsum(subscripts, a.im, b))
    a, b = as_complex(a), as_complex(b)
    re = T.einsum(subscripts, a.re, b.re) - T.einsum(subscripts, a.im, b.im)
    im = T.einsum(subscripts, a.re, b.im) + T.einsum(subscripts, a.im, b.re)
    return ComplexTensor(re, im)


def complex_solve(a: ComplexLike, b: ComplexLike) -> ComplexTensor:
    """
    复线性方程组 A X = B

    等价的实数分块系统:
        [[A_r, -A_i], [A_i, A_r]] [X_r; X_i] = [B_r; B_i]

    Args:
        a: (..., M, M)
        b: (..., M, K)
    """
    a, b = as_complex(a), as_complex(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError("complex_solve", [a.shape, b.shape])
    m = a.shape[-1]
    top = T.concatenate([a.re, -a.im], axis=-1)
    bottom = T.concatenate([a.im, a.re], axis=-1)
    block = T.concatenate([top, bottom], axis=-2)
    rhs = T.concatenate([b.re, b.im], axis=-2)
    x = T.solve(block, rhs)
    return ComplexTensor(x[..., :m, :], x[..., m:, :])


def complex_stack(values: Sequence[ComplexLike], axis: int = 0) -> ComplexTensor:
    values = [as_complex(v) for v in values]
    if not values:
        raise ValidationError("complex_stack: 输入为空")
    return ComplexTensor(T.stack([v.re for v in values], axis), T.stack([v.im for v in values], axis))


def complex_concatenate(values: Sequence[ComplexLike], axis: int = 0) -> ComplexTensor:
    values = [as_complex(v) for v in values]
    return ComplexTensor(
        T.concatenate([v.re for v in values], axis), T.concatenate([v.im for v in values], axis)
    )


def hermitian(a: ComplexLike) -> ComplexTensor:
    return as_complex(a).H
