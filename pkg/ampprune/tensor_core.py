"""Dense float32 kernels used by the transformer.

Every function takes and returns ``torch.Tensor`` of rank 2 or 3, row-major and
contiguous. Accumulation happens in the storage dtype (float32 for all stored
weights); torch's CPU GEMM is deterministic for a fixed thread count. float64
inputs are accepted so that finite-difference checks can run in double precision.

Broadcasting is limited to adding a row vector over the rows of a matrix.
"""
from __future__ import absolute_import
from __future__ import division

__all__ = ['STORAGE_DTYPE', 'ACCUMULATE_DTYPE', 'check_tensor', 'zeros', 'identity',
           'matmul', 'softmax_rows', 'silu', 'silu_grad', 'elementwise_mul', 'add',
           'l1_norm', 'mean', 'log_softmax_rows']

import torch
from torch.nn import functional as F

from ampprune.exceptions import ShapeError, NumericError


STORAGE_DTYPE = torch.float32
ACCUMULATE_DTYPE = torch.float32
_FLOAT_DTYPES = (torch.float32, torch.float64)


def check_tensor(a, name='tensor'):
    """Checks the Tensor invariants and returns ``a`` unchanged.

    Raises:
        TypeError: not a float32/float64 ``torch.Tensor``.
        ShapeError: rank outside [1, 3] or a zero-sized dimension.
    """
    if not isinstance(a, torch.Tensor):
        raise TypeError('{} must be a torch.Tensor, got {}'.format(name, type(a).__name__))
    if a.dtype not in _FLOAT_DTYPES:
        raise TypeError('{} must be float32, got {}'.format(name, a.dtype))
    if a.dim() < 1 or a.dim() > 3:
        raise ShapeError('{} must have rank 1 to 3, got shape {}'.format(name, list(a.shape)))
    if any(s < 1 for s in a.shape):
        raise ShapeError('{} has an empty dimension: {}'.format(name, list(a.shape)))
    return a


def zeros(*shape):
    return torch.zeros(*shape, dtype=STORAGE_DTYPE)


def identity(n):
    return torch.eye(n, dtype=STORAGE_DTYPE)


def matmul(a, b):
    """Matrix product ``a @ b`` for (m, k)x(k, n) or batched (B, m, k)x(B, k, n).

    Raises:
        ShapeError: inner or batch dimensions differ; the message names both shapes.
    """
    check_tensor(a, 'a')
    check_tensor(b, 'b')
    if a.dim() != b.dim() or a.dim() < 2:
        raise ShapeError('matmul needs two rank-2 or two rank-3 tensors, got {} and {}'.format(
            list(a.shape), list(b.shape)))
    if a.shape[-1] != b.shape[-2] or (a.dim() == 3 and a.shape[0] != b.shape[0]):
        raise ShapeError('matmul shape mismatch: {} x {}'.format(list(a.shape), list(b.shape)))
    return torch.matmul(a, b)


def softmax_rows(a):
    """Softmax over the last axis with per-row max subtraction.

    ``-inf`` entries are allowed (causal masking) as long as every row keeps at
    least one finite entry.

    Raises:
        NumericError: NaN in the input.
    """
    check_tensor(a, 'a')
    if torch.isnan(a).any():
        raise NumericError('softmax_rows got NaN input')
    shifted = a - a.max(dim=-1, keepdim=True)[0]
    e = torch.exp(shifted)
    return e / e.sum(dim=-1, keepdim=True)


def silu(a):
    """Elementwise ``x * sigmoid(x)``."""
    return a * torch.sigmoid(a)


def silu_grad(a):
    """Derivative of :func:`silu` evaluated at ``a``."""
    s = torch.sigmoid(a)
    return s * (1. + a * (1. - s))


def _check_same(a, b, op):
    check_tensor(a, 'a')
    check_tensor(b, 'b')
    if a.shape != b.shape:
        raise ShapeError('{} shape mismatch: {} vs {}'.format(op, list(a.shape), list(b.shape)))


def elementwise_mul(a, b):
    _check_same(a, b, 'elementwise_mul')
    return a * b


def add(a, b):
    """Elementwise sum; ``b`` may also be a row vector added to every row of ``a``."""
    check_tensor(a, 'a')
    check_tensor(b, 'b')
    if a.shape != b.shape and not (b.dim() == 1 and b.shape[0] == a.shape[-1]):
        raise ShapeError('add shape mismatch: {} vs {}'.format(list(a.shape), list(b.shape)))
    return a + b


def l1_norm(a, dim=None):
    """Sum of absolute values, over everything or along ``dim``."""
    check_tensor(a, 'a')
    if dim is None:
        return a.abs().sum()
    return a.abs().sum(dim=dim)


def mean(a, dim=0):
    check_tensor(a, 'a')
    return a.mean(dim=dim)


def log_softmax_rows(a):
    check_tensor(a, 'a')
    if torch.isnan(a).any():
        raise NumericError('log_softmax_rows got NaN input')
    return F.log_softmax(a, dim=-1)
