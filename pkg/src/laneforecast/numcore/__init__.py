"""Numeric substrate: fp64 tensors, reverse-mode tape, CSR sparse matrices."""

from .functional import conv1d, layer_norm
from .gradcheck import GradcheckReport, check_gradients
from .nn import Linear, LinearNormReLU, LinearRes, LayerNorm, Module, Parameter
from .sparse import (
    SparseMatrix,
    block_diag,
    sparse_dense_matmul,
    sparse_matmul,
    sparse_power,
    sparse_union,
)
from .tensor import (
    BranchProbe,
    ContractError,
    ShapeError,
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    getitem,
    index_select,
    matmul,
    mean,
    mul,
    note_branch,
    relu,
    reshape,
    scatter_add,
    smooth_l1,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "BranchProbe", "ContractError", "GradcheckReport", "LayerNorm", "Linear", "LinearNormReLU", "LinearRes",
    "Module", "Parameter", "ShapeError", "SparseMatrix", "Tape", "Tensor", "add", "as_tensor",
    "backward", "block_diag", "check_gradients", "concat", "conv1d", "getitem", "index_select",
    "layer_norm", "matmul", "mean", "mul", "note_branch", "relu", "reshape", "scatter_add", "smooth_l1",
    "sparse_dense_matmul", "sparse_matmul", "sparse_power", "sparse_union", "sub", "sum_",
    "transpose",
]
