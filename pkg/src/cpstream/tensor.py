"""Dense tensor algebra: unfolding, Khatri-Rao products and CP reconstruction.

Conventions (fixed for the whole package):

* Tensors are stored row-major (C order) as contiguous float64.
* Modes are 0-based.
* The mode-n unfolding maps entry (i_0, ..., i_{N-1}) to row i_n and
  column sum_{k != n} i_k * J_k with J_k = prod_{m < k, m != n} I_m,
  i.e. the lowest non-mode index varies fastest along columns.
* With that layout, X_(n) == F_n @ kr_others(factors, n).T for a CP model,
  where kr_others folds the Khatri-Rao product in descending mode order.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidModeError, InvalidShapeError


class DenseTensor:
    """Order-N dense tensor over float64, N >= 2, all entries finite."""

    __slots__ = ("data",)

    def __init__(self, data, copy: bool = True):
        # copy=False still copies when dtype/layout conversion forces it
        arr = np.array(data, dtype=np.float64, copy=True if copy else None, order="C")
        if arr.ndim < 2:
            raise InvalidShapeError(f"tensor order must be >= 2, got {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        self.data = arr

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def order(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"DenseTensor(dims={self.dims})"


class KruskalModel:
    """Rank-R CP model: one I_n x R factor matrix per mode."""

    __slots__ = ("factors",)

    def __init__(self, factors: Sequence[np.ndarray], copy: bool = True):
        mats = [
            np.array(f, dtype=np.float64, copy=True if copy else None, order="C")
            for f in factors
        ]
        if len(mats) < 2:
            raise InvalidShapeError("a Kruskal model needs at least 2 factors")
        rank = mats[0].shape[1] if mats[0].ndim == 2 else -1
        for n, f in enumerate(mats):
            if f.ndim != 2:
                raise InvalidShapeError(f"factor {n} is not a matrix")
            if f.shape[1] != rank:
                raise InvalidShapeError(
                    f"factor {n} has {f.shape[1]} columns, expected {rank}"
                )
            if not np.all(np.isfinite(f)):
                raise ValueError(f"factor {n} has non-finite entries")
        if rank < 1:
            raise InvalidShapeError("rank must be >= 1")
        self.factors = mats

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def order(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)

    def copy(self) -> "KruskalModel":
        return KruskalModel(self.factors, copy=True)

    def __repr__(self) -> str:
        return f"KruskalModel(rank={self.rank}, dims={self.dims})"


class ResidualMetrics(NamedTuple):
    rmse: float
    fit: float


def _as_array(t) -> np.ndarray:
    return t.data if isinstance(t, DenseTensor) else np.asarray(t, dtype=np.float64)


def unfold(t, mode: int) -> np.ndarray:
    """Mode-n matricization: I_mode rows, prod of the other extents columns."""
    data = _as_array(t)
    if not 0 <= mode < data.ndim:
        raise InvalidModeError(f"mode {mode} out of range for order-{data.ndim} tensor")
    return np.moveaxis(data, mode, 0).reshape(data.shape[mode], -1, order="F")


def fold(m, mode: int, dims: Sequence[int]) -> DenseTensor:
    """Inverse of unfold: rebuild the tensor with extents `dims`."""
    mat = np.asarray(m, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if not 0 <= mode < len(dims):
        raise InvalidModeError(f"mode {mode} out of range for order-{len(dims)} tensor")
    rest = dims[:mode] + dims[mode + 1 :]
    expected = (dims[mode], int(math.prod(rest)))
    if mat.ndim != 2 or mat.shape != expected:
        raise InvalidShapeError(
            f"matrix shape {getattr(mat, 'shape', None)} does not match "
            f"mode-{mode} unfolding of dims {dims} (expected {expected})"
        )
    arr = mat.reshape((dims[mode],) + rest, order="F")
    return DenseTensor(np.moveaxis(arr, 0, mode))


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product: (J*K) x R from J x R and K x R."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidShapeError("khatri_rao operands must be matrices")
    if a.shape[1] != b.shape[1]:
        raise InvalidShapeError(
            f"column counts differ: {a.shape[1]} vs {b.shape[1]}"
        )
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def kr_others(factors: Sequence[np.ndarray], skip_mode: int) -> np.ndarray:
    """Khatri-Rao of every factor except `skip_mode`, folded in descending
    mode order (for mode 0 of a 3-way model this is factors[2] (.) factors[1],
    the operand pairing the unfolding convention requires)."""
    mats = [factors[n] for n in range(len(factors) - 1, -1, -1) if n != skip_mode]
    if not mats:
        raise InvalidShapeError("need at least one non-skipped factor")
    out = mats[0]
    for mat in mats[1:]:
        out = khatri_rao(out, mat)
    return out


def reconstruct(model: KruskalModel, dims: Sequence[int] | None = None) -> DenseTensor:
    """Dense tensor whose entries are sum_r prod_n factors[n][i_n, r]."""
    dims = model.dims if dims is None else tuple(int(d) for d in dims)
    if dims != model.dims:
        raise InvalidShapeError(f"model dims {model.dims} do not match {dims}")
    mat = model.factors[0] @ kr_others(model.factors, 0).T
    return fold(mat, 0, dims)


def residual_metrics(x, model: KruskalModel) -> ResidualMetrics:
    """RMSE (Frobenius residual / sqrt(#entries)) and fit (1 - relative residual)."""
    data = _as_array(x)
    if data.shape != model.dims:
        raise InvalidShapeError(
            f"tensor dims {data.shape} do not match model dims {model.dims}"
        )
    resid = np.linalg.norm(data - reconstruct(model).data)
    norm = np.linalg.norm(data)
    rmse = resid / math.sqrt(data.size)
    fit = 1.0 if resid == 0.0 else 1.0 - resid / norm if norm > 0.0 else 0.0
    return ResidualMetrics(rmse=float(rmse), fit=float(fit))
