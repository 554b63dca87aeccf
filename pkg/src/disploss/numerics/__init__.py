from .gradcheck import analytic_grad, grad_check, numeric_grad
from .io import CorruptTensorError, read_tensor, write_tensor
from .tensor import (
    DomainError,
    ShapeError,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concatenate,
    div,
    exp,
    grad,
    log,
    logsumexp,
    matmul,
    maximum,
    mean,
    mul,
    neg,
    pairwise_dist,
    pairwise_sqdist,
    relu,
    reshape,
    silu,
    sqrt,
    square,
    sub,
    take,
    transpose,
    tsum,
)

__all__ = [
    "CorruptTensorError", "DomainError", "ShapeError", "Tape", "Tensor",
    "add", "analytic_grad", "as_tensor", "backward", "concatenate", "div", "exp",
    "grad", "grad_check", "log", "logsumexp", "matmul", "maximum", "mean", "mul",
    "neg", "numeric_grad", "pairwise_dist", "pairwise_sqdist", "read_tensor",
    "relu", "reshape", "silu", "sqrt", "square", "sub", "take", "transpose",
    "tsum", "write_tensor",
]
