"""
反向模式自动微分（实数存储）

每个 Tensor 保存一个 float64 的 numpy 数组。参与梯度计算的运算会记录父节点与
一个 backward 闭包；backward(loss) 按逆拓扑序对每个节点只访问一次。
复数运算全部在 ComplexTensor 中映射为实数运算，计算图里不存在复数节点。
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg as sla
from scipy import signal as sps
from scipy import special

from mvdr_separation.errors import NonFiniteError, NumericalError, ShapeError, ValidationError

_grad_state = threading.local()

_LN10 = float(np.log(10.0))


def is_grad_enabled() -> bool:
    """当前线程是否记录计算图"""
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """在当前线程内关闭计算图记录（推理/评估使用）"""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """
    自动微分张量

    Attributes:
        data: float64 数组
        grad: backward 之后累积的梯度 (仅叶子节点)
        requires_grad: 是否为可训练叶子 / 是否依赖可训练叶子
        name: 可选名称，用于报错信息
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")
    # 让 ndarray (+-*/) Tensor 回退到 Tensor 的反射运算
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        if np.iscomplexobj(data):
            raise ValidationError("Tensor 只保存实数；复数请使用 ComplexTensor")
        self.data = np.array(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable] = None
        self._op = "leaf"

    # -----------------------------
    # 基础属性
    # -----------------------------
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def op(self) -> str:
        return self._op

    @property
    def label(self) -> str:
        base = self.name or self._op
        return f"{base}{list(self.shape)}"

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item", [self.shape], "只有标量可以转换为 float")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -----------------------------
    # 运算符
    # -----------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, axis1: int, axis2: int) -> "Tensor":
        return swapaxes(self, axis1, axis2)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def log10(self) -> "Tensor":
        return log10(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    def sigmoid(self) -> "Tensor":
        return sigmoid(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def clamp_min(self, floor: float) -> "Tensor":
        return clamp_min(self, floor)


TensorLike = Union[Tensor, np.ndarray, float, int]


def as_tensor(value: TensorLike) -> Tensor:
    """把数组/标量包装为常量 Tensor（已是 Tensor 则原样返回）"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _result(data, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=np.float64)
    out.grad = None
    out.name = None
    out._op = op
    needs_grad = is_grad_enabled() and any(p.requires_grad for p in parents)
    out.requires_grad = needs_grad
    out._parents = tuple(parents) if needs_grad else ()
    out._backward = backward if needs_grad else None
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度求和回输入形状"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, *tensors: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(*(t.shape for t in tensors))
    except ValueError:
        raise ShapeError(op, [t.shape for t in tensors]) from None


# -----------------------------
# 逐元素二元运算
# -----------------------------
def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward, "mul")


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.data / b.data

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), backward, "div")


def neg(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: TensorLike, exponent: float) -> Tensor:
    a = as_tensor(a)
    if isinstance(exponent, Tensor):
        raise ValidationError("power 只支持常数指数")
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _result(a.data ** exponent, (a,), backward, "pow")


# -----------------------------
# 逐元素一元运算
# -----------------------------
def exp(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)
    return _result(out, (a,), lambda g: (g / a.data,), "log")


def log10(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log10(a.data)
    return _result(out, (a,), lambda g: (g / (a.data * _LN10),), "log10")


def sqrt(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _result(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def sigmoid(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = special.expit(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def clamp_min(a: TensorLike, floor: float) -> Tensor:
    """max(a, floor)，低于下限的位置梯度为 0"""
    a = as_tensor(a)
    keep = a.data > floor
    return _result(np.maximum(a.data, floor), (a,), lambda g: (g * keep,), "clamp_min")


# -----------------------------
# 形状运算
# -----------------------------
def reshape(a: TensorLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", [a.shape, tuple(shape)]) from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: TensorLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(ax % a.ndim for ax in axes) != list(range(a.ndim)):
        raise ShapeError("transpose", [a.shape], f"axes={axes}")
    inverse = tuple(np.argsort([ax % a.ndim for ax in axes]))
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),), "transpose")


def swapaxes(a: TensorLike, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    return _result(
        np.swapaxes(a.data, axis1, axis2), (a,), lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes"
    )


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice, type(None))) or i is Ellipsis for i in items)


def getitem(a: TensorLike, index) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data[index]
    except IndexError as e:
        raise ShapeError("getitem", [a.shape], str(e)) from None
    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros_like(a.data)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _result(out, (a,), backward, "getitem")


def stack(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValidationError("stack: 输入为空")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError("stack", [t.shape for t in tensors])
    out = np.stack([t.data for t in tensors], axis=axis)
    ax = axis % out.ndim

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return _result(out, tensors, backward, "stack")


def concatenate(tensors: Sequence[TensorLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValidationError("concatenate: 输入为空")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concatenate", [t.shape for t in tensors]) from None
    ax = axis % out.ndim
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _result(out, tensors, backward, "concatenate")


# -----------------------------
# 归约
# -----------------------------
def tsum(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            axes = tuple(sorted(ax % a.ndim for ax in axes))
            for ax in axes:
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), backward, "sum")


def mean(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


# -----------------------------
# 线性代数
# -----------------------------
def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", [a.shape, b.shape])
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", [a.shape, b.shape]) from None

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, (a, b), backward, "matmul")


def solve(a: TensorLike, b: TensorLike) -> Tensor:
    """
    批量线性方程组 A X = B（部分主元 LU）

    Args:
        a: (..., M, M)
        b: (..., M, K)
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != a.shape[-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError("solve", [a.shape, b.shape])
    try:
        x = np.linalg.solve(a.data, b.data)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"solve: 矩阵奇异 ({e})") from e
    except ValueError:
        raise ShapeError("solve", [a.shape, b.shape]) from None

    def backward(g):
        gb = np.linalg.solve(np.swapaxes(a.data, -1, -2), g)
        ga = -np.matmul(gb, np.swapaxes(x, -1, -2))
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(x, (a, b), backward, "solve")


def solve_toeplitz(first_column: np.ndarray, rhs: TensorLike) -> Tensor:
    """
    对称 Toeplitz 系统 T x = rhs（Levinson-Durbin 递推），矩阵为常量

    反向传播同样是一次 Toeplitz 求解（矩阵对称）。
    """
    rhs = as_tensor(rhs)
    column = np.asarray(first_column, dtype=np.float64)
    if rhs.ndim != 1 or rhs.shape[0] != column.shape[0]:
        raise ShapeError("solve_toeplitz", [column.shape, rhs.shape])
    try:
        x = sla.solve_toeplitz(column, rhs.data)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"solve_toeplitz: 矩阵奇异 ({e})") from e

    def backward(g):
        return (sla.solve_toeplitz(column, g),)

    return _result(x, (rhs,), backward, "solve_toeplitz")


def _parse_einsum(subscripts: str, count: int) -> Tuple[List[str], str]:
    if "->" not in subscripts or "." in subscripts:
        raise ValidationError(f"einsum: 需要显式输出且不支持省略号: {subscripts}")
    inputs, output = subscripts.replace(" ", "").split("->")
    operands = inputs.split(",")
    if len(operands) != count:
        raise ValidationError(f"einsum: 下标数量 {len(operands)} 与操作数 {count} 不一致")
    for sub in operands + [output]:
        if len(set(sub)) != len(sub):
            raise ValidationError(f"einsum: 不支持单个操作数内的重复下标: {sub}")
    return operands, output


def einsum(subscripts: str, *operands: TensorLike) -> Tensor:
    """
    爱因斯坦求和（显式输出，操作数内无重复下标）

    某个操作数的梯度 = einsum(输出梯度, 其他操作数 -> 该操作数下标)；
    只在该操作数中出现、被求和掉的下标在梯度中广播。
    """
    tensors = [as_tensor(t) for t in operands]
    subs, output = _parse_einsum(subscripts, len(tensors))
    try:
        out = np.einsum(subscripts, *(t.data for t in tensors), optimize=True)
    except ValueError:
        raise ShapeError(f"einsum[{subscripts}]", [t.shape for t in tensors]) from None

    def backward(g):
        grads = []
        for k, target in enumerate(tensors):
            others = [(s, t.data) for j, (s, t) in enumerate(zip(subs, tensors)) if j != k]
            available = set(output).union(*(set(s) for s, _ in others)) if others else set(output)
            present = "".join(c for c in subs[k] if c in available)
            expr = ",".join([output] + [s for s, _ in others]) + "->" + present
            partial = np.einsum(expr, g, *(d for _, d in others), optimize=True)
            if present != subs[k]:
                for pos, c in enumerate(subs[k]):
                    if c not in available:
                        partial = np.expand_dims(partial, pos)
                partial = np.broadcast_to(partial, target.shape).copy()
            grads.append(partial)
        return tuple(grads)

    return _result(out, tensors, backward, f"einsum[{subscripts}]")


# -----------------------------
# 信号处理
# -----------------------------
def convolve(a: TensorLike, b: TensorLike) -> Tensor:
    """一维完全卷积 (FIR 滤波)，输出长度 len(a) + len(b) - 1"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 1 or b.ndim != 1 or a.size == 0 or b.size == 0:
        raise ShapeError("convolve", [a.shape, b.shape], "只支持非空一维信号")
    out = sps.convolve(a.data, b.data, mode="full")

    def backward(g):
        ga = sps.correlate(g, b.data, mode="valid")
        gb = sps.correlate(g, a.data, mode="valid")
        return ga, gb

    return _result(out, (a, b), backward, "convolve")


def overlap_add(frames: TensorLike, shift: int) -> Tensor:
    """
    重叠相加

    Args:
        frames: (T, ..., N)，第 0 维为帧，最后一维为帧内样本
        shift: 帧移

    Returns:
        (..., (T - 1) * shift + N)
    """
    frames = as_tensor(frames)
    if frames.ndim < 2 or shift <= 0:
        raise ShapeError("overlap_add", [frames.shape], f"shift={shift}")
    num_frames, frame_size = frames.shape[0], frames.shape[-1]
    total = (num_frames - 1) * shift + frame_size
    out = np.zeros(frames.shape[1:-1] + (total,))
    for t in range(num_frames):
        out[..., t * shift:t * shift + frame_size] += frames.data[t]
    index = np.arange(num_frames)[:, None] * shift + np.arange(frame_size)[None, :]

    def backward(g):
        gathered = g[..., index]  # (..., T, N)
        return (np.moveaxis(gathered, -2, 0),)

    return _result(out, (frames,), backward, "overlap_add")


# -----------------------------
# 反向传播
# -----------------------------
def topological_order(root: Tensor) -> List[Tensor]:
    """父节点在前的拓扑序（迭代实现，避免深递归）"""
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> Dict[Tensor, np.ndarray]:
    """
    从标量 loss 反向传播

    Returns:
        {叶子 Tensor: 梯度}，只包含被 loss 依赖的可训练叶子；梯度同时累积到 leaf.grad

    Raises:
        ShapeError: loss 不是标量
        NonFiniteError: loss 或某个中间梯度为 NaN/Inf，报告第一个出问题的节点
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ShapeError("backward", [getattr(loss, "shape", ())], "loss 必须是标量")

    order = topological_order(loss)
    if not np.all(np.isfinite(loss.data)):
        for node in order:
            if not np.all(np.isfinite(node.data)):
                raise NonFiniteError(node.label, "前向计算")
        raise NonFiniteError(loss.label, "前向计算")

    if not loss.requires_grad:
        return {}

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[Tensor, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
                leaves[node] = g
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NonFiniteError(node.label, "反向传播")
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
    return leaves


def gradients(loss: Tensor, leaves: Sequence[Tensor]) -> List[np.ndarray]:
    """对给定叶子返回梯度，未被 loss 依赖的叶子返回全零"""
    found = backward(loss)
    return [found.get(leaf, np.zeros_like(leaf.data)) for leaf in leaves]


def tape_is_real(loss: Tensor) -> bool:
    """结构性检查：计算图中所有节点都是实数 float64"""
    return all(node.data.dtype == np.float64 for node in topological_order(loss))
