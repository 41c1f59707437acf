"""Dense tensors, the sparse allocation tensor and the ternary contraction.

A linear layer maps ``x`` (B x P x I) to ``y`` (B x Q x J).  Written
densely, ``y[b,q,j] = sum_{p,i} w[q,p,j,i] x[b,p,i]``.  When many weights
are shared, ``w`` factors as ``w[q,p,j,i] = sum_k theta[q,p,k] s[k,j,i]``
where ``theta`` holds the K distinct parameter values and ``s`` records
which parameter drives each (output, input) connection.  This module
evaluates both forms and the adjoints of the factored one.

Reductions are written as explicit loops over the summed axes (vectorised
over the free ones) so every output element is accumulated in the same
documented order on every run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import CapacityError, DimensionError, RangeError, ValidationError

DEFAULT_DENSE_BUDGET = 2**24


class DenseTensor:
    """Immutable row-major float64 array of rank 1 to 4."""

    __slots__ = ("_array",)

    def __init__(self, data, shape=None):
        arr = np.array(data, dtype=np.float64)
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise DimensionError(
                    f"data length {arr.size} does not match shape {list(shape)}"
                )
            arr = arr.reshape(shape)
        if not 1 <= arr.ndim <= 4:
            raise DimensionError(f"rank must be 1..4, got {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("tensor contains non-finite values")
        arr.setflags(write=False)
        self._array = arr

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def data(self) -> list[float]:
        return self._array.ravel().tolist()

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._array
        return self._array.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._array, other._array)

    def __repr__(self):
        return f"DenseTensor(shape={list(self.shape)})"


def as_tensor(x, rank=None, name="tensor") -> DenseTensor:
    t = x if isinstance(x, DenseTensor) else DenseTensor(x)
    if rank is not None and len(t.shape) != rank:
        raise DimensionError(f"{name} must have rank {rank}, got shape {list(t.shape)}")
    return t


@dataclass(frozen=True)
class ParamTensor:
    """The parameter tensor theta, shape Q x P x K."""

    values: DenseTensor

    def __post_init__(self):
        values = as_tensor(self.values, rank=3, name="theta")
        if values.shape[2] < 1:
            raise DimensionError("theta needs K >= 1")
        object.__setattr__(self, "values", values)

    @property
    def q_features(self) -> int:
        return self.values.shape[0]

    @property
    def p_channels(self) -> int:
        return self.values.shape[1]

    @property
    def k_params(self) -> int:
        return self.values.shape[2]

    @property
    def array(self) -> np.ndarray:
        return self.values.array


class AllocationTensor:
    """Sparse K x J x I allocation tensor in canonical COO form.

    Entries are sorted by (k, j, i) on construction.  Duplicate coordinates
    are rejected rather than summed.
    """

    __slots__ = ("k_params", "j_out", "i_in", "_k", "_j", "_i", "_v")

    def __init__(self, k_params: int, j_out: int, i_in: int, entries: Iterable = ()):
        self.k_params = int(k_params)
        self.j_out = int(j_out)
        self.i_in = int(i_in)
        if min(self.k_params, self.j_out, self.i_in) < 1:
            raise DimensionError(
                f"invalid extents K={self.k_params}, J={self.j_out}, I={self.i_in}"
            )
        rows = [tuple(e) for e in entries]
        for row in rows:
            if len(row) != 4:
                raise ValidationError(f"entry {row!r} is not (k, j, i, value)")
        k = np.array([r[0] for r in rows], dtype=np.int64)
        j = np.array([r[1] for r in rows], dtype=np.int64)
        i = np.array([r[2] for r in rows], dtype=np.int64)
        v = np.array([r[3] for r in rows], dtype=np.float64)
        self._init_arrays(k, j, i, v)

    def _init_arrays(self, k, j, i, v):
        for name, idx, hi in (("k", k, self.k_params), ("j", j, self.j_out), ("i", i, self.i_in)):
            bad = (idx < 0) | (idx >= hi)
            if np.any(bad):
                raise RangeError(f"{name} index {int(idx[bad][0])} outside [0, {hi})")
        if not np.all(np.isfinite(v)):
            raise ValidationError("allocation tensor contains non-finite values")
        order = np.lexsort((i, j, k))
        k, j, i, v = k[order], j[order], i[order], v[order]
        if k.size > 1:
            same = (np.diff(k) == 0) & (np.diff(j) == 0) & (np.diff(i) == 0)
            if np.any(same):
                pos = int(np.argmax(same))
                raise ValidationError(
                    f"duplicate coordinate (k={k[pos]}, j={j[pos]}, i={i[pos]})"
                )
        for arr in (k, j, i, v):
            arr.setflags(write=False)
        self._k, self._j, self._i, self._v = k, j, i, v

    @classmethod
    def from_arrays(cls, k_params, j_out, i_in, k, j, i, v) -> AllocationTensor:
        self = cls.__new__(cls)
        self.k_params, self.j_out, self.i_in = int(k_params), int(j_out), int(i_in)
        if min(self.k_params, self.j_out, self.i_in) < 1:
            raise DimensionError(
                f"invalid extents K={self.k_params}, J={self.j_out}, I={self.i_in}"
            )
        self._init_arrays(
            np.asarray(k, dtype=np.int64).ravel().copy(),
            np.asarray(j, dtype=np.int64).ravel().copy(),
            np.asarray(i, dtype=np.int64).ravel().copy(),
            np.asarray(v, dtype=np.float64).ravel().copy(),
        )
        return self

    @classmethod
    def from_slices(cls, slices) -> AllocationTensor:
        """Build from a K x J x I dense array, keeping only nonzero entries."""
        arr = np.asarray(slices, dtype=np.float64)
        if arr.ndim != 3:
            raise DimensionError(f"slices must be K x J x I, got shape {list(arr.shape)}")
        k, j, i = np.nonzero(arr)
        return cls.from_arrays(*arr.shape, k, j, i, arr[k, j, i])

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.k_params, self.j_out, self.i_in)

    @property
    def nnz(self) -> int:
        return int(self._v.size)

    @property
    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Read-only (k, j, i, value) arrays in canonical order."""
        return self._k, self._j, self._i, self._v

    @property
    def entries(self) -> list[tuple[int, int, int, float]]:
        return [
            (int(a), int(b), int(c), float(d))
            for a, b, c, d in zip(self._k, self._j, self._i, self._v)
        ]

    def to_dense(self, budget=DEFAULT_DENSE_BUDGET) -> np.ndarray:
        size = self.k_params * self.j_out * self.i_in
        if size > budget:
            raise CapacityError(f"dense S needs {size} elements, budget is {budget}")
        out = np.zeros(self.shape)
        out[self._k, self._j, self._i] = self._v
        return out

    def slice(self, k: int) -> np.ndarray:
        """Dense J x I view of one parameter's allocation."""
        out = np.zeros((self.j_out, self.i_in))
        m = self._k == k
        out[self._j[m], self._i[m]] = self._v[m]
        return out

    def __eq__(self, other):
        if not isinstance(other, AllocationTensor):
            return NotImplemented
        return self.shape == other.shape and all(
            np.array_equal(a, b) for a, b in zip(self.coords, other.coords)
        )

    def __repr__(self):
        return f"AllocationTensor(K={self.k_params}, J={self.j_out}, I={self.i_in}, nnz={self.nnz})"


@dataclass(frozen=True)
class TernaryLayer:
    theta: ParamTensor
    s: AllocationTensor

    def __post_init__(self):
        if not isinstance(self.theta, ParamTensor):
            object.__setattr__(self, "theta", ParamTensor(self.theta))
        if self.theta.k_params != self.s.k_params:
            raise DimensionError(
                f"theta has K={self.theta.k_params} but S has K={self.s.k_params}"
            )


def _check(cond, message):
    if not cond:
        raise DimensionError(message)


def materialize_w(layer: TernaryLayer, budget: int = DEFAULT_DENSE_BUDGET) -> DenseTensor:
    """Dense weights ``w[q,p,j,i] = sum_k theta[q,p,k] s[k,j,i]``.

    Intended as a checking path at desk scale only; raises CapacityError
    when Q*P*J*I exceeds ``budget``.
    """
    theta = layer.theta.array
    q, p, _ = theta.shape
    size = q * p * layer.s.j_out * layer.s.i_in
    if size > budget:
        raise CapacityError(f"dense w needs {size} elements, budget is {budget}")
    w = np.zeros((q, p, layer.s.j_out, layer.s.i_in))
    for k, j, i, v in zip(*layer.s.coords):
        w[:, :, j, i] += theta[:, :, k] * v
    return DenseTensor(w)


def dense_forward(w, x) -> DenseTensor:
    """``y[b,q,j] = sum_p sum_i w[q,p,j,i] x[b,p,i]``, p outer, i inner."""
    w = as_tensor(w, rank=4, name="w").array
    x = as_tensor(x, rank=3, name="x").array
    q, p, j, i = w.shape
    _check(x.shape[1] == p, f"axis P: w has {p}, x has {x.shape[1]}")
    _check(x.shape[2] == i, f"axis I: w has {i}, x has {x.shape[2]}")
    y = np.zeros((x.shape[0], q, j))
    for pp in range(p):
        for ii in range(i):
            y += w[None, :, pp, :, ii] * x[:, pp, ii, None, None]
    return DenseTensor(y)


def contract_sx(s: AllocationTensor, x) -> DenseTensor:
    """``z[b,p,k,j] = sum_i S[k,j,i] x[b,p,i]`` over the sparse entries.

    ``np.add.at`` applies the products unbuffered in canonical entry order.
    """
    x = as_tensor(x, rank=3, name="x").array
    _check(x.shape[2] == s.i_in, f"axis I: S has {s.i_in}, x has {x.shape[2]}")
    b, p, _ = x.shape
    k, j, i, v = s.coords
    z = np.zeros((b, p, s.k_params * s.j_out))
    if v.size:
        np.add.at(z, (slice(None), slice(None), k * s.j_out + j), x[:, :, i] * v)
    return DenseTensor(z.reshape(b, p, s.k_params, s.j_out))


def contract_theta(theta: ParamTensor, z) -> DenseTensor:
    """``y[b,q,j] = sum_p sum_k theta[q,p,k] z[b,p,k,j]``, p outer, k inner."""
    if not isinstance(theta, ParamTensor):
        theta = ParamTensor(theta)
    t = theta.array
    z = as_tensor(z, rank=4, name="z").array
    q, p, k = t.shape
    _check(z.shape[1] == p, f"axis P: theta has {p}, z has {z.shape[1]}")
    _check(z.shape[2] == k, f"axis K: theta has {k}, z has {z.shape[2]}")
    y = np.zeros((z.shape[0], q, z.shape[3]))
    for pp in range(p):
        for kk in range(k):
            y += t[None, :, pp, kk, None] * z[:, pp, kk, None, :]
    return DenseTensor(y)


def ternary_forward(layer: TernaryLayer, x) -> DenseTensor:
    """Evaluate ``theta . S . x`` without materialising ``w``."""
    x = as_tensor(x, rank=3, name="x")
    _check(
        x.shape[1] == layer.theta.p_channels,
        f"axis P: theta has {layer.theta.p_channels}, x has {x.shape[1]}",
    )
    return contract_theta(layer.theta, contract_sx(layer.s, x))


def grad_theta(s: AllocationTensor, x, dy) -> DenseTensor:
    """Adjoint w.r.t. theta: ``sum_{b,j,i} dy[b,q,j] S[k,j,i] x[b,p,i]``."""
    x = as_tensor(x, rank=3, name="x").array
    dy = as_tensor(dy, rank=3, name="dy").array
    _check(dy.shape[0] == x.shape[0], f"axis B: x has {x.shape[0]}, dy has {dy.shape[0]}")
    _check(dy.shape[2] == s.j_out, f"axis J: S has {s.j_out}, dy has {dy.shape[2]}")
    z = contract_sx(s, x).array
    return DenseTensor(np.einsum("bqj,bpkj->qpk", dy, z))


def grad_x(theta: ParamTensor, s: AllocationTensor, dy) -> DenseTensor:
    """Adjoint w.r.t. x: ``sum_{q,k,j} dy[b,q,j] theta[q,p,k] S[k,j,i]``."""
    if not isinstance(theta, ParamTensor):
        theta = ParamTensor(theta)
    t = theta.array
    dy = as_tensor(dy, rank=3, name="dy").array
    _check(theta.k_params == s.k_params, f"axis K: theta has {theta.k_params}, S has {s.k_params}")
    _check(dy.shape[1] == theta.q_features, f"axis Q: theta has {theta.q_features}, dy has {dy.shape[1]}")
    _check(dy.shape[2] == s.j_out, f"axis J: S has {s.j_out}, dy has {dy.shape[2]}")
    u = np.einsum("bqj,qpk->bpkj", dy, t)
    b, p = u.shape[:2]
    k, j, i, v = s.coords
    dx = np.zeros((b, p, s.i_in))
    if v.size:
        np.add.at(dx, (slice(None), slice(None), i), u[:, :, k, j] * v)
    return DenseTensor(dx)
