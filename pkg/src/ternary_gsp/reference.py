"""Direct-formula implementations of each layer, used as oracles.

Nothing here calls the ternary contraction code in ``tensor_core``; each
function evaluates the textbook form of its layer with plain matrix
products and loops.  Graph operators (Laplacian, lambda_max, renormalised
adjacency, adjacency powers) come from ``graph_core``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNeighborhoodError, DimensionError, GeometryError, UnsupportedGraphError
from .graph_core import Graph, RescaleMode, matrix_power_series, normalized_adjacency, rescaled_laplacian
from .schemes import GatMode, GatParams


@dataclass(frozen=True)
class ChebnetParams:
    """Per-order filter weights, stored Q x P x C."""

    theta_per_order: np.ndarray

    def __post_init__(self):
        t = np.array(self.theta_per_order, dtype=np.float64)
        if t.ndim != 3 or t.shape[2] < 1:
            raise DimensionError(f"theta_per_order must be Q x P x C with C >= 1, got {list(t.shape)}")
        object.__setattr__(self, "theta_per_order", t)

    @property
    def c_order(self) -> int:
        return self.theta_per_order.shape[2]


@dataclass(frozen=True)
class TagcnParams:
    """One P x Q matrix per adjacency power 1..C."""

    theta_list: tuple

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=np.float64) for m in self.theta_list)
        if not mats:
            raise DimensionError("TAGCN needs at least one power")
        if any(m.ndim != 2 or m.shape != mats[0].shape for m in mats):
            raise DimensionError("theta_list must hold C matrices of identical shape P x Q")
        object.__setattr__(self, "theta_list", mats)

    @property
    def c_max(self) -> int:
        return len(self.theta_list)


def _undirected(g: Graph):
    if g.directed:
        raise UnsupportedGraphError("reference layers require an undirected graph")


def fc_ref(w, x) -> np.ndarray:
    """``y[b, j] = sum_i w[j, i] x[b, i]``, accumulated in increasing i."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if w.ndim != 2 or x.ndim != 2 or w.shape[1] != x.shape[1]:
        raise DimensionError(f"fc_ref: w {list(w.shape)} incompatible with x {list(x.shape)}")
    y = np.zeros((x.shape[0], w.shape[0]))
    for i in range(w.shape[1]):
        y += x[:, i : i + 1] * w[:, i]
    return y


def conv1d_ref(kernel_weights, x, stride=1, padding=0) -> np.ndarray:
    kern = np.asarray(kernel_weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if kern.ndim != 1 or x.ndim != 2:
        raise DimensionError("conv1d_ref expects a 1-D kernel and a B x I signal")
    b, n = x.shape
    j_out = (n + 2 * padding - kern.size) // stride + 1
    if j_out < 1:
        raise GeometryError(f"no output positions for I={n}, kernel={kern.size}")
    y = np.zeros((b, j_out))
    for bb in range(b):
        for j in range(j_out):
            acc = 0.0
            for k in range(kern.size):
                i = j * stride + k - padding
                if 0 <= i < n:
                    acc += kern[k] * x[bb, i]
            y[bb, j] = acc
    return y


def chebnet_ref(g: Graph, params: ChebnetParams, x, rescale_mode=RescaleMode.STANDARD) -> np.ndarray:
    """``y_q = sum_p (sum_c theta_c T_c(L~)) x_p`` on a B x P x N signal."""
    _undirected(g)
    x = np.asarray(x, dtype=np.float64)
    theta = params.theta_per_order
    q_out, p_in, c_order = theta.shape
    n = g.n_vertices
    if x.ndim != 3 or x.shape[1:] != (p_in, n):
        raise DimensionError(f"chebnet_ref: x must be B x {p_in} x {n}, got {list(x.shape)}")
    l_tilde = rescaled_laplacian(g, rescale_mode)
    t = [np.eye(n), l_tilde]
    for _ in range(2, c_order):
        t.append(2.0 * l_tilde @ t[-1] - t[-2])
    t = t[:c_order]
    y = np.zeros((x.shape[0], q_out, n))
    for q in range(q_out):
        for p in range(p_in):
            w_qp = sum(theta[q, p, c] * t[c] for c in range(c_order))
            for b in range(x.shape[0]):
                y[b, q] += w_qp @ x[b, p]
    return y


def gcn_ref(g: Graph, theta, x) -> np.ndarray:
    """``A~ x Theta`` for each B x N x P signal."""
    _undirected(g)
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != g.n_vertices or theta.shape[0] != x.shape[2]:
        raise DimensionError(f"gcn_ref: x {list(x.shape)} incompatible with theta {list(theta.shape)}")
    a = normalized_adjacency(g)
    return np.stack([a @ xb @ theta for xb in x])


def tagcn_ref(g: Graph, params: TagcnParams, x) -> np.ndarray:
    """``sum_{c=1..C} A~^c x Theta_c`` for each B x N x P signal."""
    _undirected(g)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != g.n_vertices or params.theta_list[0].shape[0] != x.shape[2]:
        raise DimensionError(f"tagcn_ref: x {list(x.shape)} incompatible with theta")
    powers = matrix_power_series(normalized_adjacency(g), params.c_max)
    out = []
    for xb in x:
        acc = np.zeros((g.n_vertices, params.theta_list[0].shape[1]))
        for a_c, theta_c in zip(powers, params.theta_list):
            acc = acc + a_c @ xb @ theta_c
        out.append(acc)
    return np.stack(out)


def _softmax(logits):
    top = max(logits)
    ex = [math.exp(v - top) for v in logits]
    total = math.fsum(ex)
    return [v / total for v in ex]


def gat_attention_ref(g: Graph, theta, a, x, leaky_slope=0.2, include_self=True) -> dict:
    """Attention of one head as ``{j: [(i, alpha_ji), ...]}`` over R(j)."""
    adj = g.adjacency()
    h = x @ theta
    out = {}
    empty = []
    for j in range(g.n_vertices):
        nbrs = [i for i in range(g.n_vertices) if adj[j, i] != 0 or (include_self and i == j)]
        if not nbrs:
            empty.append(j)
            continue
        logits = []
        for i in nbrs:
            e = float(a @ np.concatenate([h[j], h[i]]))
            logits.append(e if e >= 0 else leaky_slope * e)
        out[j] = list(zip(nbrs, _softmax(logits)))
    if empty:
        raise DegenerateNeighborhoodError(empty)
    return out


def gat_ref(g: Graph, params: GatParams, x) -> np.ndarray:
    """Attention-weighted aggregation for an N x P signal; heads concatenated or averaged."""
    _undirected(g)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape != (g.n_vertices, params.p_channels):
        raise DimensionError(
            f"gat_ref: x must be {g.n_vertices} x {params.p_channels}, got {list(x.shape)}"
        )
    heads = []
    for theta, a in zip(params.thetas, params.attention):
        alpha = gat_attention_ref(g, theta, a, x, params.leaky_slope, params.include_self)
        h = x @ theta
        y = np.zeros((g.n_vertices, theta.shape[1]))
        for j, row in alpha.items():
            for i, weight in row:
                y[j] += weight * h[i]
        heads.append(y)
    if params.mode is GatMode.CONCAT:
        return np.concatenate(heads, axis=1)
    return sum(heads) / len(heads)
