"""Allocation-tensor builders for the six unified layer types.

Every builder returns ``(AllocationTensor, SchemeSpec)``.  The spec carries
the parameter geometry (K, J, I) and the hyperparameters needed to rebuild
or audit the scheme; it is what scheme files store under ``"spec"``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    DegenerateNeighborhoodError,
    DimensionError,
    GeometryError,
    UnsupportedGraphError,
)
from .graph_core import (
    Graph,
    RescaleMode,
    chebyshev_basis,
    lambda_max,
    laplacian,
    matrix_power_series,
    normalized_adjacency,
    rescaled_laplacian,
)
from .tensor_core import AllocationTensor

KINDS = ("fc", "conv1d", "chebnet", "gcn", "gat", "tagcn")


class ChebVariant(str, Enum):
    FAITHFUL = "faithful"  # K = C, one slice per Chebyshev order
    COLLAPSED = "collapsed"  # K = 1, S = sum of all orders


class GatMode(str, Enum):
    CONCAT = "concat"
    AVERAGE = "average"


@dataclass(frozen=True)
class SchemeSpec:
    kind: str
    k_params: int
    j_out: int
    i_in: int
    metadata: dict = field(default_factory=dict)
    input_digest: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}")

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "K": self.k_params,
            "J": self.j_out,
            "I": self.i_in,
            "metadata": dict(self.metadata),
        }
        if self.input_digest is not None:
            out["input_digest"] = self.input_digest
        return out

    @classmethod
    def from_dict(cls, d: dict) -> SchemeSpec:
        return cls(
            kind=d["kind"],
            k_params=int(d["K"]),
            j_out=int(d["J"]),
            i_in=int(d["I"]),
            metadata=dict(d.get("metadata", {})),
            input_digest=d.get("input_digest"),
        )

    def check(self, s: AllocationTensor) -> None:
        if s.shape != (self.k_params, self.j_out, self.i_in):
            raise DimensionError(
                f"spec declares K,J,I={self.k_params},{self.j_out},{self.i_in} "
                f"but tensor is {s.shape}"
            )


@dataclass(frozen=True)
class GatParams:
    """Per-head feature maps and attention vectors.

    ``thetas`` is A x P x Q (one P x Q map per head, applied as x_v @ theta)
    and ``attention`` is A x 2Q; a 2-D theta / 1-D attention means one head.
    """

    thetas: np.ndarray
    attention: np.ndarray
    mode: GatMode = GatMode.CONCAT
    leaky_slope: float = 0.2
    include_self: bool = True

    def __post_init__(self):
        thetas = np.array(self.thetas, dtype=np.float64)
        attention = np.array(self.attention, dtype=np.float64)
        if thetas.ndim == 2:
            thetas = thetas[None]
        if attention.ndim == 1:
            attention = attention[None]
        if thetas.ndim != 3:
            raise DimensionError(f"thetas must be A x P x Q, got shape {list(thetas.shape)}")
        heads, _, q = thetas.shape
        if attention.shape != (heads, 2 * q):
            raise DimensionError(
                f"attention must be {heads} x {2 * q} (2Q per head), got {list(attention.shape)}"
            )
        if heads < 1:
            raise DimensionError("GAT needs at least one head")
        for arr in (thetas, attention):
            arr.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "attention", attention)
        object.__setattr__(self, "mode", GatMode(self.mode))
        object.__setattr__(self, "leaky_slope", float(self.leaky_slope))

    @property
    def heads(self) -> int:
        return self.thetas.shape[0]

    @property
    def p_channels(self) -> int:
        return self.thetas.shape[1]

    @property
    def q_features(self) -> int:
        return self.thetas.shape[2]


def _positive(name, value):
    if int(value) < 1:
        raise ValueError(f"{name} must be >= 1, got {value}")
    return int(value)


def build_fc_scheme(i_in: int, j_out: int):
    """One-hot allocation: parameter ``k = j * I + i`` drives connection (j, i)."""
    i_in, j_out = _positive("I", i_in), _positive("J", j_out)
    j, i = np.divmod(np.arange(i_in * j_out), i_in)
    s = AllocationTensor.from_arrays(
        i_in * j_out, j_out, i_in, np.arange(i_in * j_out), j, i, np.ones(i_in * j_out)
    )
    return s, SchemeSpec("fc", i_in * j_out, j_out, i_in)


def conv1d_output_size(i_in, kernel, stride=1, padding=0) -> int:
    return (i_in + 2 * padding - kernel) // stride + 1


def build_conv1d_scheme(i_in: int, kernel: int, stride: int = 1, padding: int = 0):
    """Slice k marks ``i = j * stride + k - padding`` (in range) with a 1."""
    i_in, kernel, stride = _positive("I", i_in), _positive("kernel", kernel), _positive("stride", stride)
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    j_out = conv1d_output_size(i_in, kernel, stride, padding)
    if j_out < 1:
        raise GeometryError(
            f"no output positions for I={i_in}, kernel={kernel}, stride={stride}, padding={padding}"
        )
    k, j = np.meshgrid(np.arange(kernel), np.arange(j_out), indexing="ij")
    i = j * stride + k - padding
    keep = (i >= 0) & (i < i_in)
    s = AllocationTensor.from_arrays(
        kernel, j_out, i_in, k[keep], j[keep], i[keep], np.ones(int(keep.sum()))
    )
    meta = {"kernel": kernel, "stride": stride, "padding": int(padding)}
    return s, SchemeSpec("conv1d", kernel, j_out, i_in, meta)


def build_chebnet_scheme(
    g: Graph,
    c_order: int,
    rescale_mode=RescaleMode.STANDARD,
    variant=ChebVariant.FAITHFUL,
):
    c_order = _positive("C", c_order)
    rescale_mode, variant = RescaleMode(rescale_mode), ChebVariant(variant)
    lam = lambda_max(laplacian(g))
    basis = chebyshev_basis(rescaled_laplacian(g, rescale_mode, lam=lam), c_order)
    if variant is ChebVariant.FAITHFUL:
        slices = np.stack(basis)
    else:
        slices = sum(basis[1:], basis[0].copy())[None]
    s = AllocationTensor.from_slices(slices)
    n = g.n_vertices
    meta = {
        "c_order": c_order,
        "rescale_mode": rescale_mode.value,
        "variant": variant.value,
        "lambda_max": lam,
    }
    return s, SchemeSpec("chebnet", s.k_params, n, n, meta)


def build_gcn_scheme(g: Graph):
    """K = 1 and S[0] is the renormalised adjacency, stored on the pattern of A + I."""
    a_tilde = normalized_adjacency(g)
    pattern = (g.adjacency() + np.eye(g.n_vertices)) != 0
    j, i = np.nonzero(pattern)
    s = AllocationTensor.from_arrays(
        1, g.n_vertices, g.n_vertices, np.zeros_like(j), j, i, a_tilde[j, i]
    )
    return s, SchemeSpec("gcn", 1, g.n_vertices, g.n_vertices)


def build_tagcn_scheme(g: Graph, c_max: int):
    """K = C with S[k] the (k+1)-th power of the renormalised adjacency."""
    c_max = _positive("C", c_max)
    powers = matrix_power_series(normalized_adjacency(g), c_max)
    s = AllocationTensor.from_slices(np.stack(powers))
    n = g.n_vertices
    return s, SchemeSpec("tagcn", c_max, n, n, {"c_max": c_max})


def _signal_pn(x, n_vertices):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        if x.shape[0] != 1:
            raise DimensionError(f"attention needs a single-batch signal, got B={x.shape[0]}")
        x = x[0]
    if x.ndim != 2 or x.shape[1] != n_vertices:
        raise DimensionError(f"signal must be P x N with N={n_vertices}, got {list(x.shape)}")
    return x


def _leaky_relu(v, slope):
    return np.where(v >= 0.0, v, slope * v)


def attention_support(g: Graph, include_self=True) -> list[list[int]]:
    """Neighborhood R(j) per vertex, optionally including j itself."""
    support = []
    empty = []
    for j in range(g.n_vertices):
        nbrs = set(g.neighbors(j))
        if include_self:
            nbrs.add(j)
        if not nbrs:
            empty.append(j)
        support.append(sorted(nbrs))
    if empty:
        raise DegenerateNeighborhoodError(empty)
    return support


def attention_coefficients(g: Graph, params: GatParams, x) -> list[np.ndarray]:
    """Masked-softmax attention matrices, one N x N array per head.

    ``x`` is a single signal in channel-major layout (P x N or 1 x P x N).
    Non-neighbours are excluded from the softmax support and stay zero.
    """
    if g.directed:
        raise UnsupportedGraphError("attention requires an undirected graph")
    x = _signal_pn(x, g.n_vertices)
    if x.shape[0] != params.p_channels:
        raise DimensionError(f"axis P: params have {params.p_channels}, x has {x.shape[0]}")
    support = attention_support(g, params.include_self)
    q = params.q_features
    out = []
    for theta, a in zip(params.thetas, params.attention):
        h = x.T @ theta  # N x Q
        left = h @ a[:q]
        right = h @ a[q:]
        alpha = np.zeros((g.n_vertices, g.n_vertices))
        for j, nbrs in enumerate(support):
            e = _leaky_relu(left[j] + right[nbrs], params.leaky_slope)
            e = np.exp(e - e.max())
            alpha[j, nbrs] = e / e.sum()
        alpha.setflags(write=False)
        out.append(alpha)
    return out


def signal_digest(x) -> str:
    """sha256 over the shape and little-endian float64 bytes of a signal."""
    arr = np.ascontiguousarray(np.asarray(x, dtype=np.float64), dtype="<f8")
    h = hashlib.sha256()
    h.update(repr(list(arr.shape)).encode())
    h.update(arr.tobytes())
    return "sha256:" + h.hexdigest()


def _alpha_tensor(alphas, support, scale=1.0):
    n = alphas[0].shape[0]
    k, j, i, v = [], [], [], []
    for kk, alpha in enumerate(alphas):
        for jj, nbrs in enumerate(support):
            for ii in nbrs:
                k.append(kk)
                j.append(jj)
                i.append(ii)
                v.append(alpha[jj, ii] / scale)
    return AllocationTensor.from_arrays(len(alphas), n, n, k, j, i, v)


def build_gat_scheme(g: Graph, params: GatParams, x):
    """Attention schemes for one input signal.

    ``concat``: A schemes with K = 1, S[0] = alpha of that head; head outputs
    are concatenated along the feature axis by the caller.
    ``average``: one scheme with K = A and S[k] = alpha_k / A.
    """
    alphas = attention_coefficients(g, params, x)
    support = attention_support(g, params.include_self)
    n = g.n_vertices
    digest = signal_digest(_signal_pn(x, n))
    meta = {
        "heads": params.heads,
        "mode": params.mode.value,
        "leaky_slope": params.leaky_slope,
        "include_self": params.include_self,
    }
    if params.mode is GatMode.AVERAGE:
        s = _alpha_tensor(alphas, support, scale=float(params.heads))
        return [(s, SchemeSpec("gat", params.heads, n, n, meta, digest))]
    return [
        (_alpha_tensor([alpha], support), SchemeSpec("gat", 1, n, n, {**meta, "head": h}, digest))
        for h, alpha in enumerate(alphas)
    ]

