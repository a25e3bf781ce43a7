"""Samplers for SBM simple graphs and PSBM multigraphs.

Vertices are laid out community by community: community k occupies the
index range [start_k, start_k + n_k). Sampling is sparse: per community
pair the edge count is drawn in one shot (binomial for the simple model,
Poisson for the multigraph) and placed at uniform vertex pairs, so the
expected cost is O(edges), not O(n^2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MaxAttemptsExceeded
from .model import ModelParams, coupling_affinity, validate


@dataclass
class LabeledGraph:
    n: int
    labels: np.ndarray            # community index per vertex
    adjacency: dict               # {(u, v) with u <= v: multiplicity}
    is_multigraph: bool

    def check_invariants(self):
        for (u, v), m in self.adjacency.items():
            assert 0 <= u <= v < self.n and m >= 1
            if not self.is_multigraph:
                assert u != v, "self-loop in simple graph"
                assert m == 1, "multi-edge in simple graph"

    def degree(self, v: int) -> int:
        d = 0
        for (a, b), m in self.adjacency.items():
            if a == v or b == v:
                d += m
        return d

    def degrees(self) -> np.ndarray:
        d = np.zeros(self.n, dtype=np.int64)
        for (u, v), m in self.adjacency.items():
            d[u] += m
            if v != u:
                d[v] += m
        return d

    def neighbor_lists(self, skip_self_loops: bool = True):
        """Adjacency lists of (neighbor, multiplicity) pairs."""
        nbrs = [[] for _ in range(self.n)]
        for (u, v), m in self.adjacency.items():
            if u == v:
                if not skip_self_loops:
                    nbrs[u].append((u, m))
                continue
            nbrs[u].append((v, m))
            nbrs[v].append((u, m))
        return nbrs

    def to_edgelist(self) -> str:
        labels_csv = ",".join(str(int(c)) for c in self.labels)
        K = int(self.labels.max()) + 1 if self.n else 0
        lines = [f"# n={self.n} K={K} labels={labels_csv}"]
        for (u, v) in sorted(self.adjacency):
            lines.append(f"{u} {v} {self.adjacency[(u, v)]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str, is_multigraph: bool) -> "LabeledGraph":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0]
        assert header.startswith("#")
        fields = dict(part.split("=", 1) for part in header[1:].split())
        n = int(fields["n"])
        labels = np.array([int(x) for x in fields["labels"].split(",")], dtype=np.int64)
        assert len(labels) == n
        adjacency = {}
        for ln in lines[1:]:
            u, v, m = ln.split()
            u, v, m = int(u), int(v), int(m)
            assert (u, v) not in adjacency
            adjacency[(u, v)] = m
        g = cls(n=n, labels=labels, adjacency=adjacency, is_multigraph=is_multigraph)
        g.check_invariants()
        return g


def community_layout(params: ModelParams):
    """(starts, labels) for the canonical community-blocked vertex order."""
    sizes = params.community_sizes
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    labels = np.repeat(np.arange(params.K, dtype=np.int64), sizes)
    return starts, labels


def _decode_triangular(idx: int, m: int, with_diagonal: bool) -> tuple[int, int]:
    """Map a flat index to the idx-th pair (i, j), i <= j (or i < j)."""
    # row i holds pairs (i, i..m-1) resp. (i, i+1..m-1)
    row_len0 = m if with_diagonal else m - 1
    b = 2 * row_len0 + 1
    i = int((b - math.isqrt(b * b - 8 * idx)) // 2)
    # guard against isqrt rounding
    def cum(i):
        return i * row_len0 - i * (i - 1) // 2
    while cum(i + 1) <= idx:
        i += 1
    while cum(i) > idx:
        i -= 1
    off = idx - cum(i)
    j = i + off if with_diagonal else i + 1 + off
    return i, j


def _sample_distinct_pairs(rng, count, a_start, a_size, b_start, b_size, same):
    """`count` distinct unordered vertex pairs, uniform, no self-pairs."""
    seen = set()
    out = []
    while len(out) < count:
        u = a_start + int(rng.integers(a_size))
        v = b_start + int(rng.integers(b_size))
        if same and u == v:
            continue
        key = (u, v) if u < v else (v, u)
        if key in seen:
            continue
        seen.add(key)
        out.append(key)
    return out


def sample_sbm(params: ModelParams, seed: int) -> LabeledGraph:
    """Simple graph: pair {u,v} present w.p. W[k(u),k(v)]/n independently."""
    validate(params)
    rng = np.random.default_rng(seed)
    n = params.n
    starts, labels = community_layout(params)
    sizes = params.community_sizes
    adjacency = {}
    for k in range(params.K):
        for l in range(k, params.K):
            p = params.W[k, l] / n
            if p <= 0:
                continue
            if k == l:
                npairs = sizes[k] * (sizes[k] - 1) // 2
            else:
                npairs = sizes[k] * sizes[l]
            m_edges = int(rng.binomial(npairs, min(p, 1.0)))
            for key in _sample_distinct_pairs(
                rng, m_edges, starts[k], sizes[k], starts[l], sizes[l], k == l
            ):
                adjacency[key] = 1
    return LabeledGraph(n=n, labels=labels, adjacency=adjacency, is_multigraph=False)


def sample_psbm(params: ModelParams, seed: int, W=None) -> LabeledGraph:
    """Multigraph: A_uv ~ Pois(W[k(u),k(v)]/n) for u <= v, self-loops allowed."""
    validate(params)
    W = params.W if W is None else np.asarray(W, dtype=float)
    rng = np.random.default_rng(seed)
    n = params.n
    starts, labels = community_layout(params)
    sizes = params.community_sizes
    adjacency = {}
    for k in range(params.K):
        for l in range(k, params.K):
            lam = W[k, l] / n
            if lam <= 0:
                continue
            if k == l:
                npairs = sizes[k] * (sizes[k] + 1) // 2   # includes diagonal
            else:
                npairs = sizes[k] * sizes[l]
            total = int(rng.poisson(lam * npairs))
            for _ in range(total):
                if k == l:
                    idx = int(rng.integers(npairs))
                    i, j = _decode_triangular(idx, int(sizes[k]), with_diagonal=True)
                    key = (int(starts[k] + i), int(starts[k] + j))
                else:
                    u = int(starts[k] + rng.integers(sizes[k]))
                    v = int(starts[l] + rng.integers(sizes[l]))
                    key = (u, v) if u < v else (v, u)
                adjacency[key] = adjacency.get(key, 0) + 1
    return LabeledGraph(n=n, labels=labels, adjacency=adjacency, is_multigraph=True)


def is_simple(g: LabeledGraph) -> bool:
    return all(u != v and m == 1 for (u, v), m in g.adjacency.items())


def sample_sbm_via_coupling(
    params: ModelParams, seed: int, max_attempts: int = 1000
) -> LabeledGraph:
    """Draw PSBM(W') until simple; the result is distributed as SBM(W).

    W'[k,l] = W[k,l]/(1 - W[k,l]/n). Raises MaxAttemptsExceeded when no
    simple draw occurs within max_attempts (W too dense for rejection).
    """
    validate(params)
    Wp = coupling_affinity(params)
    for attempt in range(max_attempts):
        g = sample_psbm(params, seed + attempt, W=Wp)
        if is_simple(g):
            return LabeledGraph(
                n=g.n, labels=g.labels, adjacency=dict(g.adjacency), is_multigraph=False
            )
    raise MaxAttemptsExceeded(
        f"no simple PSBM(W') draw in {max_attempts} attempts"
    )
