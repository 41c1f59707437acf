"""Randomised equivalence and gradient checks.

Each trial draws a graph, parameters and a signal from a seeded
:class:`~ternary_gsp.rng.XorShift64Star`, builds the scheme, and compares
three evaluations of the same layer: the factored ternary contraction, the
materialised dense weights, and the direct formula from ``reference``.

Sampling order inside a trial is fixed: extents (N, P, Q, B, then any
kind-specific geometry), graph seed, parameters, signal.  Uniform draws
are in [-1, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import reference as ref
from .errors import CapacityError
from .graph_core import Graph, RescaleMode
from .layout import theta_from_matrices, to_channel_major, to_vertex_major
from .rng import XorShift64Star, derive_seed
from .schemes import (
    GatMode,
    GatParams,
    build_chebnet_scheme,
    build_conv1d_scheme,
    build_fc_scheme,
    build_gat_scheme,
    build_gcn_scheme,
    build_tagcn_scheme,
)
from .tensor_core import (
    DEFAULT_DENSE_BUDGET,
    AllocationTensor,
    TernaryLayer,
    dense_forward,
    grad_theta,
    grad_x,
    materialize_w,
    ternary_forward,
)

MODELS = ("fc", "conv1d", "chebnet", "gcn", "gat", "tagcn")
GRADIENT_KINDS = MODELS + ("random",)

FD_STEP = 1e-5
GRAD_RTOL = 1e-6
GRAD_ATOL = 1e-8
GRAD_MAX_EXTENT = 6


@dataclass(frozen=True)
class TrialConfig:
    model: str = "gcn"
    trials: int = 20
    n_range: tuple[int, int] = (1, 16)
    p_range: tuple[int, int] = (1, 4)
    q_range: tuple[int, int] = (1, 4)
    b_range: tuple[int, int] = (1, 2)
    c_order: int = 3
    heads: int = 2
    seed: int = 42
    tol: float = 1e-10
    rescale_mode: str = "standard"
    gat_mode: str = "concat"
    include_self: bool = True
    leaky_slope: float = 0.2
    edge_prob: float = 0.3
    dense_budget: int = DEFAULT_DENSE_BUDGET

    def __post_init__(self):
        if self.model not in GRADIENT_KINDS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        for name in ("n_range", "p_range", "q_range", "b_range"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ValueError(f"{name} must satisfy 1 <= lo <= hi, got {(lo, hi)}")
        if self.trials < 0 or self.c_order < 1 or self.heads < 1:
            raise ValueError("trials >= 0, c_order >= 1 and heads >= 1 required")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ValueError("edge_prob must lie in [0, 1]")
        RescaleMode(self.rescale_mode)
        GatMode(self.gat_mode)

    @property
    def label(self) -> str:
        return f"gat-{self.gat_mode}" if self.model == "gat" else self.model


@dataclass
class TrialResult:
    index: int
    seed: int
    max_abs_err: float | None
    passed: bool
    stats: list = field(default_factory=list)
    paths: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        out = {
            "index": self.index,
            "seed": self.seed,
            "max_abs_err": self.max_abs_err,
            "pass": self.passed,
            "stats": self.stats,
        }
        if self.paths:
            out["paths"] = self.paths
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass
class EquivalenceReport:
    model: str
    tol: float
    trials: list[TrialResult]

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.trials)

    @property
    def failures(self) -> list[TrialResult]:
        return [t for t in self.trials if not t.passed]

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "tol": self.tol,
            "trials": [t.to_dict() for t in self.trials],
            "pass": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"


def suite_to_json(reports: list[EquivalenceReport], gradients: list[EquivalenceReport] = ()) -> str:
    doc = {
        "models": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports) and all(r.passed for r in gradients),
    }
    if gradients:
        doc["gradients"] = [r.to_dict() for r in gradients]
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def random_graph(n: int, edge_prob: float, seed: int) -> Graph:
    """Erdos-Renyi graph: each pair u < v, in lexicographic order, is kept with probability ``edge_prob``."""
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError("edge_prob must lie in [0, 1]")
    rng = XorShift64Star(seed)
    edges = [
        (u, v, 1.0) for u in range(n) for v in range(u + 1, n) if rng.random() < edge_prob
    ]
    return Graph(n, tuple(edges))


def is_toeplitz(s: AllocationTensor) -> bool:
    """True when every slice is constant along each of its diagonals.

    A diagonal holding any nonzero must be completely filled with one value.
    """
    k, j, i, v = s.coords
    nz = v != 0
    k, j, i, v = k[nz], j[nz], i[nz], v[nz]
    groups = {}
    for kk, jj, ii, vv in zip(k.tolist(), j.tolist(), i.tolist(), v.tolist()):
        groups.setdefault((kk, ii - jj), []).append(vv)
    for (_, d), values in groups.items():
        length = min(s.j_out, s.i_in - d) - max(0, -d)
        if len(values) != length or any(val != values[0] for val in values):
            return False
    return True


def scheme_stats(s: AllocationTensor) -> dict:
    k = s.coords[0]
    per_slice = np.bincount(k, minlength=s.k_params).tolist() if s.nnz else [0] * s.k_params
    total = s.k_params * s.j_out * s.i_in
    return {
        "K": s.k_params,
        "J": s.j_out,
        "I": s.i_in,
        "nnz": s.nnz,
        "density": s.nnz / total,
        "per_slice_nnz": per_slice,
        "toeplitz": is_toeplitz(s),
    }


def _extents(rng, cfg, cap=None):
    def draw(r):
        lo, hi = r
        if cap is not None:
            hi = max(lo, min(hi, cap))
            lo = min(lo, hi)
        return rng.integers(lo, hi)

    return draw(cfg.n_range), draw(cfg.p_range), draw(cfg.q_range), draw(cfg.b_range)


def _graph(rng, n, cfg):
    return random_graph(n, cfg.edge_prob, rng.next_u64())


def _dense(layers_and_inputs, budget):
    outs = []
    for layer, x in layers_and_inputs:
        try:
            outs.append(dense_forward(materialize_w(layer, budget), x).array)
        except CapacityError:
            return None
    return outs


def _instance_fc(rng, cfg):
    n_in, _, _, b = _extents(rng, cfg)
    n_out = rng.integers(*cfg.n_range)
    w = rng.uniform_array((n_out, n_in))
    x = rng.uniform_array((b, n_in))
    s, _ = build_fc_scheme(n_in, n_out)
    layer = TernaryLayer(w.reshape(1, 1, -1), s)
    x3 = x[:, None, :]
    oracle = ref.fc_ref(w, x)[:, None, :]
    return [(layer, x3)], [s], oracle, None


def _instance_conv1d(rng, cfg):
    n, p, q, b = _extents(rng, cfg)
    kernel = rng.integers(1, min(n, 5))
    stride = rng.integers(1, 2)
    padding = rng.integers(0, kernel - 1)
    theta = rng.uniform_array((q, p, kernel))
    x = rng.uniform_array((b, p, n))
    s, _ = build_conv1d_scheme(n, kernel, stride, padding)
    oracle = np.zeros((b, q, s.j_out))
    for qq in range(q):
        for pp in range(p):
            oracle[:, qq] += ref.conv1d_ref(theta[qq, pp], x[:, pp], stride, padding)
    return [(TernaryLayer(theta, s), x)], [s], oracle, None


def _instance_chebnet(rng, cfg):
    n, p, q, b = _extents(rng, cfg)
    g = _graph(rng, n, cfg)
    theta = rng.uniform_array((q, p, cfg.c_order))
    x = rng.uniform_array((b, p, n))
    s, _ = build_chebnet_scheme(g, cfg.c_order, cfg.rescale_mode, "faithful")
    oracle = ref.chebnet_ref(g, ref.ChebnetParams(theta), x, cfg.rescale_mode)
    return [(TernaryLayer(theta, s), x)], [s], oracle, None


def _instance_gcn(rng, cfg):
    n, p, q, b = _extents(rng, cfg)
    g = _graph(rng, n, cfg)
    theta = rng.uniform_array((p, q))
    x_vm = rng.uniform_array((b, n, p))
    s, _ = build_gcn_scheme(g)
    layer = TernaryLayer(theta_from_matrices(theta), s)
    oracle = to_channel_major(ref.gcn_ref(g, theta, x_vm))
    return [(layer, to_channel_major(x_vm))], [s], oracle, None


def _instance_tagcn(rng, cfg):
    n, p, q, b = _extents(rng, cfg)
    g = _graph(rng, n, cfg)
    thetas = rng.uniform_array((cfg.c_order, p, q))
    x_vm = rng.uniform_array((b, n, p))
    s, _ = build_tagcn_scheme(g, cfg.c_order)
    layer = TernaryLayer(theta_from_matrices(thetas), s)
    oracle = to_channel_major(ref.tagcn_ref(g, ref.TagcnParams(tuple(thetas)), x_vm))
    return [(layer, to_channel_major(x_vm))], [s], oracle, None


def _instance_gat(rng, cfg):
    n, p, q, b = _extents(rng, cfg)
    g = _graph(rng, n, cfg)
    params = GatParams(
        rng.uniform_array((cfg.heads, p, q)),
        rng.uniform_array((cfg.heads, 2 * q)),
        mode=cfg.gat_mode,
        leaky_slope=cfg.leaky_slope,
        include_self=cfg.include_self,
    )
    x = rng.uniform_array((b, p, n))
    pairs, built, oracle_rows = [], [], []
    for bb in range(b):
        xb = x[bb : bb + 1]
        schemes = build_gat_scheme(g, params, xb)
        if params.mode is GatMode.AVERAGE:
            (s, _), = schemes
            pairs.append((TernaryLayer(theta_from_matrices(params.thetas), s), xb))
        else:
            for h, (s, _) in enumerate(schemes):
                pairs.append((TernaryLayer(theta_from_matrices(params.thetas[h]), s), xb))
        if bb == 0:
            built = [s for s, _ in schemes]
        oracle_rows.append(ref.gat_ref(g, params, to_vertex_major(xb)[0]).T)
    per_row = 1 if params.mode is GatMode.AVERAGE else params.heads

    def assemble(outs):
        rows = [
            np.concatenate(outs[r * per_row : (r + 1) * per_row], axis=1) for r in range(b)
        ]
        return np.concatenate(rows, axis=0)

    return pairs, built, np.stack(oracle_rows), assemble


_INSTANCES = {
    "fc": _instance_fc,
    "conv1d": _instance_conv1d,
    "chebnet": _instance_chebnet,
    "gcn": _instance_gcn,
    "gat": _instance_gat,
    "tagcn": _instance_tagcn,
}


def _max_abs(a, b) -> float:
    if a.shape != b.shape:
        raise ValueError(f"output shapes differ: {list(a.shape)} vs {list(b.shape)}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def _run_trial(cfg: TrialConfig, index: int) -> TrialResult:
    seed = derive_seed(cfg.seed, index)
    rng = XorShift64Star(seed)
    try:
        pairs, built, oracle, assemble = _INSTANCES[cfg.model](rng, cfg)
        assemble = assemble or (lambda outs: outs[0])
        ternary = assemble([ternary_forward(layer, x).array for layer, x in pairs])
        paths = {"ternary_oracle": _max_abs(ternary, oracle)}
        dense = _dense(pairs, cfg.dense_budget)
        if dense is not None:
            dense = assemble(dense)
            paths["dense_oracle"] = _max_abs(dense, oracle)
            paths["ternary_dense"] = _max_abs(ternary, dense)
        err = max(paths.values())
        return TrialResult(
            index, seed, err, err <= cfg.tol, [scheme_stats(s) for s in built], paths
        )
    except Exception as exc:  # recorded per trial, never aborts the run
        return TrialResult(index, seed, None, False, error=f"{type(exc).__name__}: {exc}")


def check_equivalence(cfg: TrialConfig) -> EquivalenceReport:
    if cfg.model not in MODELS:
        raise ValueError(f"equivalence checks need a layer model, got {cfg.model!r}")
    return EquivalenceReport(cfg.label, cfg.tol, [_run_trial(cfg, t) for t in range(cfg.trials)])


def random_allocation(rng, k, j, i, density=0.5) -> AllocationTensor:
    entries = []
    for kk in range(k):
        for jj in range(j):
            for ii in range(i):
                if rng.random() < density:
                    entries.append((kk, jj, ii, rng.uniform()))
    return AllocationTensor(k, j, i, entries)


def _gradient_instance(rng, cfg):
    """(S, theta, x) with every extent capped at GRAD_MAX_EXTENT."""
    cap = GRAD_MAX_EXTENT
    n, p, q, b = _extents(rng, cfg, cap=cap)
    kind = cfg.model
    if kind == "random":
        s = random_allocation(rng, rng.integers(1, cap), rng.integers(1, cap), n)
    elif kind == "fc":
        s, _ = build_fc_scheme(n, rng.integers(1, min(cfg.n_range[1], cap)))
        p = q = 1
    elif kind == "conv1d":
        s, _ = build_conv1d_scheme(n, rng.integers(1, n), rng.integers(1, 2), 0)
    else:
        g = _graph(rng, n, cfg)
        c = min(cfg.c_order, cap)
        if kind == "chebnet":
            s, _ = build_chebnet_scheme(g, c, cfg.rescale_mode)
        elif kind == "gcn":
            s, _ = build_gcn_scheme(g)
        elif kind == "tagcn":
            s, _ = build_tagcn_scheme(g, c)
        else:
            heads = min(cfg.heads, cap)
            params = GatParams(
                rng.uniform_array((heads, p, q)),
                rng.uniform_array((heads, 2 * q)),
                mode=cfg.gat_mode,
                leaky_slope=cfg.leaky_slope,
                include_self=cfg.include_self,
            )
            s = build_gat_scheme(g, params, rng.uniform_array((1, p, n)))[0][0]
    theta = rng.uniform_array((q, p, s.k_params))
    x = rng.uniform_array((b, p, s.i_in))
    dy = rng.uniform_array((b, q, s.j_out))
    return s, theta, x, dy


def finite_difference(f, x0, step=FD_STEP) -> np.ndarray:
    """Central differences of a scalar function over every coordinate of ``x0``."""
    x0 = np.array(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = x0.reshape(-1)
    out = grad.reshape(-1)
    for n in range(flat.size):
        orig = flat[n]
        flat[n] = orig + step
        up = f(x0)
        flat[n] = orig - step
        down = f(x0)
        flat[n] = orig
        out[n] = (up - down) / (2.0 * step)
    return grad


def gradient_mismatch(analytic, numeric, rtol=GRAD_RTOL, atol=GRAD_ATOL):
    """(max abs error, max relative error, ok) under a relative test with an absolute floor."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    ok = np.all((diff <= rtol * scale) | (diff <= atol))
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    return (float(diff.max()) if diff.size else 0.0), (float(rel.max()) if rel.size else 0.0), bool(ok)


def check_gradient_instance(s, theta, x, dy):
    """Compare grad_theta/grad_x with central differences of sum(dy * y)."""

    def loss_theta(t):
        return float(np.sum(dy * ternary_forward(TernaryLayer(t, s), x).array))

    def loss_x(xx):
        return float(np.sum(dy * ternary_forward(TernaryLayer(theta, s), xx).array))

    a_theta = grad_theta(s, x, dy).array
    a_x = grad_x(theta, s, dy).array
    e1, r1, ok1 = gradient_mismatch(a_theta, finite_difference(loss_theta, theta))
    e2, r2, ok2 = gradient_mismatch(a_x, finite_difference(loss_x, x))
    return {
        "theta_abs": e1,
        "theta_rel": r1,
        "x_abs": e2,
        "x_rel": r2,
    }, ok1 and ok2


def check_gradients(cfg: TrialConfig) -> EquivalenceReport:
    results = []
    for t in range(cfg.trials):
        seed = derive_seed(cfg.seed, t)
        rng = XorShift64Star(seed)
        try:
            s, theta, x, dy = _gradient_instance(rng, cfg)
            paths, ok = check_gradient_instance(s, theta, x, dy)
            err = max(paths["theta_abs"], paths["x_abs"])
            results.append(TrialResult(t, seed, err, ok, [scheme_stats(s)], paths))
        except Exception as exc:
            results.append(TrialResult(t, seed, None, False, error=f"{type(exc).__name__}: {exc}"))
    return EquivalenceReport(f"{cfg.label}:gradients", cfg.tol, results)


def suite_configs(cfg: TrialConfig, model: str) -> list[TrialConfig]:
    """Expand ``model`` into the configs to run.

    ``"all"`` covers every layer kind, with GAT in both concat and average
    mode; a single kind keeps the GAT mode already set on ``cfg``.
    """
    if model != "all":
        return [replace(cfg, model=model)]
    out = []
    for kind in MODELS:
        if kind == "gat":
            out.extend(replace(cfg, model="gat", gat_mode=m) for m in ("concat", "average"))
        else:
            out.append(replace(cfg, model=kind))
    return out
