from .tensor import (
    Tensor,
    as_tensor,
    backward,
    clamp_min,
    concatenate,
    convolve,
    einsum,
    gradients,
    is_grad_enabled,
    log10,
    matmul,
    no_grad,
    overlap_add,
    sigmoid,
    solve,
    solve_toeplitz,
    stack,
    tanh,
    tape_is_real,
    topological_order,
)
from .complex import (
    ComplexTensor,
    as_complex,
    complex_concatenate,
    complex_einsum,
    complex_matmul,
    complex_solve,
    complex_stack,
    hermitian,
)
from .gradcheck import grad_check

__all__ = [
    "Tensor",
    "ComplexTensor",
    "as_tensor",
    "as_complex",
    "backward",
    "gradients",
    "grad_check",
    "no_grad",
    "is_grad_enabled",
    "matmul",
    "solve",
    "solve_toeplitz",
    "einsum",
    "convolve",
    "overlap_add",
    "stack",
    "concatenate",
    "sigmoid",
    "tanh",
    "log10",
    "clamp_min",
    "complex_matmul",
    "complex_einsum",
    "complex_solve",
    "complex_stack",
    "complex_concatenate",
    "hermitian",
    "tape_is_real",
    "topological_order",
]
