"""Graphs and the structural and spectral operators the layer schemes use.

Square matrices are returned as read-only dense ``float64`` ndarrays;
desk-scale graphs make a sparse representation unnecessary here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    ParseError,
    RangeError,
    UnsupportedGraphError,
    ValidationError,
)
from .rng import XorShift64Star

SquareMatrix = np.ndarray


class RescaleMode(str, Enum):
    """How the Laplacian is mapped before Chebyshev expansion.

    ``standard``: ``2 L / lambda_max - I`` (spectrum in [-1, 1]).
    ``paper``: ``lambda_max L / 2 - I``, the literal alternative form of the
    filter argument; its spectrum is not confined to [-1, 1].
    """

    STANDARD = "standard"
    PAPER = "paper"


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: tuple[tuple[int, int, float], ...] = ()
    directed: bool = False
    self_loops_allowed: bool = False
    _adjacency: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n_vertices)
        if n < 1:
            raise ValidationError(f"graph needs at least one vertex, got {n}")
        seen = {}
        for e in self.edges:
            if len(e) == 2:
                u, v, w = e[0], e[1], 1.0
            elif len(e) == 3:
                u, v, w = e
            else:
                raise ValidationError(f"edge {e!r} is not (u, v[, weight])")
            u, v, w = int(u), int(v), float(w)
            for vertex in (u, v):
                if not 0 <= vertex < n:
                    raise RangeError(f"vertex {vertex} out of range for N={n}")
            if not np.isfinite(w):
                raise ValidationError(f"edge ({u}, {v}) has non-finite weight")
            if u == v and not self.self_loops_allowed:
                raise ValidationError(f"self-loop on vertex {u} not allowed")
            key = (u, v) if self.directed else (min(u, v), max(u, v))
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen[key] = w
        edges = tuple((u, v, seen[(u, v)]) for u, v in sorted(seen))
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "edges", edges)

        a = np.zeros((n, n))
        for u, v, w in edges:
            a[u, v] = w
            if not self.directed:
                a[v, u] = w
        a.setflags(write=False)
        object.__setattr__(self, "_adjacency", a)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        return self._adjacency

    def neighbors(self, v: int) -> list[int]:
        """Vertices i with A[v, i] != 0, in increasing order."""
        return [int(i) for i in np.flatnonzero(self._adjacency[v])]


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def _require_undirected(g: Graph, what: str):
    if g.directed:
        raise UnsupportedGraphError(f"{what} requires an undirected graph")


def parse_edge_list(text: str | Iterable[str], directed=False, allow_self_loops=False) -> Graph:
    """Parse ``N M`` followed by M lines ``u v [weight]``; ``#`` starts a comment line."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    header = None
    edges = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if header is None:
            if len(fields) != 2:
                raise ParseError(f"expected header 'N M', got {line!r}", lineno)
            try:
                header = (int(fields[0]), int(fields[1]))
            except ValueError:
                raise ParseError(f"non-integer header {line!r}", lineno) from None
            if header[0] < 1 or header[1] < 0:
                raise ParseError(f"invalid counts N={header[0]} M={header[1]}", lineno)
            continue
        if len(fields) not in (2, 3):
            raise ParseError(f"expected 'u v [weight]', got {line!r}", lineno)
        try:
            u, v = int(fields[0]), int(fields[1])
            w = float(fields[2]) if len(fields) == 3 else 1.0
        except ValueError:
            raise ParseError(f"malformed edge {line!r}", lineno) from None
        for vertex in (u, v):
            if not 0 <= vertex < header[0]:
                raise RangeError(f"line {lineno}: vertex {vertex} out of range for N={header[0]}")
        edges.append((u, v, w))
    if header is None:
        raise ParseError("missing 'N M' header")
    if len(edges) != header[1]:
        raise ParseError(f"header declares {header[1]} edges, found {len(edges)}")
    return Graph(header[0], tuple(edges), directed=directed, self_loops_allowed=allow_self_loops)


def degree_matrix(g: Graph) -> SquareMatrix:
    return _frozen(np.diag(g.adjacency().sum(axis=1)))


def laplacian(g: Graph) -> SquareMatrix:
    _require_undirected(g, "laplacian")
    a = g.adjacency()
    return _frozen(np.diag(a.sum(axis=1)) - a)


def normalized_adjacency(g: Graph) -> SquareMatrix:
    """Renormalised adjacency ``D^-1/2 (A + I) D^-1/2`` with D the degrees of A + I.

    Evaluated entrywise as ``A_hat[u, v] / sqrt(d_u d_v)``, which keeps
    the common equal-degree cases (e.g. 1/2 on a single edge) exact.
    """
    _require_undirected(g, "normalized_adjacency")
    a_hat = g.adjacency() + np.eye(g.n_vertices)
    d = a_hat.sum(axis=1)
    if np.any(d <= 0):
        bad = [int(v) for v in np.flatnonzero(d <= 0)]
        raise ValidationError(f"non-positive degree after adding self-loops at {bad}")
    return _frozen(a_hat / np.sqrt(np.outer(d, d)))


def _start_vector(n, seed=0):
    rng = XorShift64Star(seed)
    return np.ones(n) + 1e-3 * rng.uniform_array((n,))


def lambda_max(l, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by power iteration.

    Converged when successive Rayleigh quotients differ by less than
    ``tol`` and the residual ``|M x - rho x|`` is at most ``tol``; for a
    symmetric matrix the latter puts an eigenvalue within ``tol`` of the
    returned quotient.  The start vector is all-ones (the Laplacian null
    vector) plus a small seeded perturbation.
    """
    m = np.asarray(l, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {list(m.shape)}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-12):
        raise ValidationError("lambda_max requires a symmetric matrix")
    x = _start_vector(m.shape[0])
    x /= np.linalg.norm(x)
    estimate = float(x @ m @ x)
    for _ in range(max_iter):
        y = m @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        mx = m @ x
        new = float(x @ mx)
        step = abs(new - estimate)
        estimate = new
        if step < tol and np.linalg.norm(mx - new * x) <= tol:
            return new
    raise ConvergenceError(f"power iteration did not converge in {max_iter} steps", estimate)


def rescaled_laplacian(g: Graph, mode=RescaleMode.STANDARD, lam: float | None = None) -> SquareMatrix:
    """Laplacian mapped for Chebyshev expansion per ``mode``.

    An edgeless graph has ``lambda_max = 0``; its Laplacian is zero and the
    ``standard`` map is taken as ``-I`` (the limit of ``2 L / lam - I``).
    """
    mode = RescaleMode(mode)
    l = laplacian(g)
    if lam is None:
        lam = lambda_max(l)
    eye = np.eye(g.n_vertices)
    if mode is RescaleMode.STANDARD:
        if lam == 0.0:
            return _frozen(-eye)
        return _frozen(2.0 * l / lam - eye)
    return _frozen(lam * l / 2.0 - eye)


def _square(m, name):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {list(m.shape)}")
    return m


def chebyshev_basis(l_scaled, c_order: int) -> list[SquareMatrix]:
    """``[T_0(X), ..., T_{C-1}(X)]`` via ``T_c = 2 X T_{c-1} - T_{c-2}``."""
    if c_order < 1:
        raise ValueError(f"Chebyshev order must be >= 1, got {c_order}")
    x = _square(l_scaled, "l_scaled")
    basis = [np.eye(x.shape[0])]
    if c_order > 1:
        basis.append(x.copy())
    while len(basis) < c_order:
        basis.append(2.0 * (x @ basis[-1]) - basis[-2])
    return [_frozen(t) for t in basis]


def matrix_power_series(a_tilde, c_max: int) -> list[SquareMatrix]:
    """``[A, A^2, ..., A^C]`` with left-to-right association."""
    if c_max < 1:
        raise ValueError(f"power count must be >= 1, got {c_max}")
    a = _square(a_tilde, "a_tilde")
    powers = [a.copy()]
    while len(powers) < c_max:
        powers.append(powers[-1] @ a)
    return [_frozen(p) for p in powers]
