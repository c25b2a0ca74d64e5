"""Yearly trade graphs, centrality scores, and conflict node removal.

Betweenness and eigenvector centrality run on the undirected 0/1 adjacency
derived from the directed flow edges (an edge in either direction links two
firms); degree centrality also supports directed in/out variants.  Node
removal keeps the original node universe so centrality vectors can be
aligned, with removed nodes marked NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ._util import write_csv
from .errors import ConvergenceError, DegenerateSampleError, GraphError


@dataclass(frozen=True)
class TradeGraph:
    nodes: tuple[str, ...]
    edge_src: np.ndarray  # directed, deduplicated, weights summed
    edge_dst: np.ndarray
    edge_weight: np.ndarray

    @classmethod
    def from_edges(
        cls, edges, nodes: tuple[str, ...] | None = None
    ) -> "TradeGraph":
        """Build from (src, dst, weight) triples; self-loops are dropped.

        The node set defaults to every endpoint seen; pass `nodes` to pin a
        larger universe (isolated firms keep centrality entries).
        """
        edges = [(str(i), str(j), float(w)) for i, j, w in edges if i != j]
        if nodes is None:
            seen = {i for i, _, _ in edges} | {j for _, j, _ in edges}
            nodes = tuple(sorted(seen))
        else:
            nodes = tuple(nodes)
            known = set(nodes)
            missing = sorted(
                ({i for i, _, _ in edges} | {j for _, j, _ in edges}) - known
            )
            if missing:
                raise GraphError(f"edge endpoints outside node universe: {missing[:10]}")
        index = {n: k for k, n in enumerate(nodes)}
        agg: dict[tuple[int, int], float] = {}
        for i, j, w in edges:
            key = (index[i], index[j])
            agg[key] = agg.get(key, 0.0) + w
        if agg:
            keys = sorted(agg)
            src = np.array([k[0] for k in keys], dtype=np.int64)
            dst = np.array([k[1] for k in keys], dtype=np.int64)
            wgt = np.array([agg[k] for k in keys], dtype=np.float64)
        else:
            src = np.empty(0, dtype=np.int64)
            dst = np.empty(0, dtype=np.int64)
            wgt = np.empty(0, dtype=np.float64)
        return cls(nodes=nodes, edge_src=src, edge_dst=dst, edge_weight=wgt)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def undirected_adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency without self-loops."""
        n = self.n
        if len(self.edge_src) == 0:
            return sp.csr_matrix((n, n), dtype=np.float64)
        rows = np.concatenate([self.edge_src, self.edge_dst])
        cols = np.concatenate([self.edge_dst, self.edge_src])
        data = np.ones(len(rows), dtype=np.float64)
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        adj.data[:] = 1.0  # collapse parallel/reciprocal edges
        adj.sum_duplicates()
        adj.data[:] = 1.0
        return adj

    def directed_adjacency(self) -> sp.csr_matrix:
        n = self.n
        if len(self.edge_src) == 0:
            return sp.csr_matrix((n, n), dtype=np.float64)
        data = np.ones(len(self.edge_src), dtype=np.float64)
        adj = sp.csr_matrix((data, (self.edge_src, self.edge_dst)), shape=(n, n))
        adj.sum_duplicates()
        adj.data[:] = 1.0
        return adj


@dataclass(frozen=True)
class CentralityVector:
    nodes: tuple[str, ...]
    scores: np.ndarray
    kind: str
    transform: str | None = None

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.nodes, self.scores.tolist()))

    def aligned_to(self, universe: tuple[str, ...]) -> np.ndarray:
        """Scores in `universe` order; nodes absent from this vector get NaN."""
        own = {n: i for i, n in enumerate(self.nodes)}
        out = np.full(len(universe), np.nan)
        for k, node in enumerate(universe):
            i = own.get(node)
            if i is not None:
                out[k] = self.scores[i]
        return out


def degree_centrality(graph: TradeGraph, variant: str = "total") -> CentralityVector:
    """Count distinct trade partners; in/out variants use edge direction."""
    if variant == "total":
        scores = np.asarray(graph.undirected_adjacency().sum(axis=1)).ravel()
        kind = "degree"
    elif variant == "out":
        scores = np.asarray(graph.directed_adjacency().sum(axis=1)).ravel()
        kind = "outdegree"
    elif variant == "in":
        scores = np.asarray(graph.directed_adjacency().sum(axis=0)).ravel()
        kind = "indegree"
    else:
        raise ValueError(f"variant must be total|in|out, got {variant!r}")
    return CentralityVector(graph.nodes, scores.astype(np.float64), kind)


def betweenness_centrality(graph: TradeGraph) -> CentralityVector:
    """Brandes accumulation over unordered node pairs, unnormalized.

    Score of i = sum over connected pairs {k, j} (i not an endpoint) of the
    fraction of k-j shortest paths passing through i.  BFS levels and the
    dependency accumulation are vectorized per frontier.
    """
    adj = graph.undirected_adjacency()
    n = graph.n
    indptr, indices = adj.indptr, adj.indices
    bc = np.zeros(n, dtype=np.float64)

    for s in range(n):
        if indptr[s] == indptr[s + 1]:
            continue
        dist = np.full(n, -1, dtype=np.int64)
        sigma = np.zeros(n, dtype=np.float64)
        dist[s] = 0
        sigma[s] = 1.0
        frontier = np.array([s], dtype=np.int64)
        levels = [frontier]
        level = 0
        while len(frontier):
            counts = indptr[frontier + 1] - indptr[frontier]
            srcs = np.repeat(frontier, counts)
            tgts = np.concatenate(
                [indices[indptr[u]:indptr[u + 1]] for u in frontier]
            ) if len(frontier) else np.empty(0, dtype=np.int64)
            fresh = dist[tgts] == -1
            if fresh.any():
                dist[tgts[fresh]] = level + 1
            onward = dist[tgts] == level + 1
            if onward.any():
                np.add.at(sigma, tgts[onward], sigma[srcs[onward]])
            frontier = np.unique(tgts[fresh]) if fresh.any() else np.empty(0, np.int64)
            if len(frontier):
                levels.append(frontier)
            level += 1

        delta = np.zeros(n, dtype=np.float64)
        for frontier in reversed(levels[1:]):
            counts = indptr[frontier + 1] - indptr[frontier]
            srcs = np.repeat(frontier, counts)
            tgts = np.concatenate([indices[indptr[u]:indptr[u + 1]] for u in frontier])
            pred = dist[tgts] == dist[srcs] - 1
            if pred.any():
                contrib = (sigma[tgts[pred]] / sigma[srcs[pred]]) * (1.0 + delta[srcs[pred]])
                np.add.at(delta, tgts[pred], contrib)
        delta[s] = 0.0
        bc += delta

    bc /= 2.0  # each unordered pair is visited from both endpoints
    return CentralityVector(graph.nodes, bc, "betweenness")


def eigenvector_centrality(
    graph: TradeGraph, tol: float = 1e-10, max_iter: int = 10_000
) -> CentralityVector:
    """Dominant eigenvector of the undirected 0/1 adjacency.

    Power iteration starts from the uniform positive vector; iterating on
    (A + I) keeps the eigenvectors but makes the dominant eigenvalue
    strictly largest in magnitude, so bipartite graphs converge too.
    Output is non-negative with unit Euclidean norm.  A graph with no edges
    has zero dominant eigenvalue and is reported as an error.
    """
    n = graph.n
    if n == 0:
        raise GraphError("eigenvector centrality of an empty graph")
    adj = graph.undirected_adjacency()
    if adj.nnz == 0:
        raise GraphError("zero dominant eigenvalue: graph has no edges")

    v = np.full(n, 1.0 / np.sqrt(n))
    last_delta = np.inf
    for it in range(1, max_iter + 1):
        w = adj.dot(v) + v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise GraphError("zero dominant eigenvalue: iteration collapsed")
        w /= norm
        last_delta = float(np.max(np.abs(w - v)))
        v = w
        if last_delta < tol:
            lam = float(v @ adj.dot(v))
            residual = float(np.max(np.abs(adj.dot(v) - lam * v)))
            if residual <= 10.0 * tol:
                v = np.abs(v)  # dominant eigenvector is sign-constant
                v /= np.linalg.norm(v)
                return CentralityVector(graph.nodes, v, "eigenvector")
    raise ConvergenceError(
        f"eigenvector centrality did not converge in {max_iter} iterations",
        diagnostics={"iterations": max_iter, "last_delta": last_delta, "tol": tol},
    )


_CENTRALITY_FNS = {
    "degree": lambda g, **kw: degree_centrality(g, "total"),
    "indegree": lambda g, **kw: degree_centrality(g, "in"),
    "outdegree": lambda g, **kw: degree_centrality(g, "out"),
    "betweenness": lambda g, **kw: betweenness_centrality(g),
    "eigenvector": lambda g, **kw: eigenvector_centrality(g, **kw),
}


def centrality(graph: TradeGraph, kind: str, **kwargs) -> CentralityVector:
    try:
        fn = _CENTRALITY_FNS[kind]
    except KeyError:
        raise ValueError(f"unknown centrality kind {kind!r}") from None
    return fn(graph, **kwargs)


def remove_nodes(graph: TradeGraph, drop: set[str] | frozenset[str]) -> TradeGraph:
    """Induced subgraph on the surviving nodes; removing absent ids is a no-op."""
    drop = set(drop)
    survivors = tuple(n for n in graph.nodes if n not in drop)
    if len(survivors) == graph.n:
        return graph
    keep_idx = {graph.nodes[k] for k in range(graph.n)} - drop
    edges = [
        (graph.nodes[i], graph.nodes[j], w)
        for i, j, w in zip(graph.edge_src, graph.edge_dst, graph.edge_weight)
        if graph.nodes[i] in keep_idx and graph.nodes[j] in keep_idx
    ]
    return TradeGraph.from_edges(edges, nodes=survivors)


@dataclass(frozen=True)
class CentralityChange:
    """Node-removal centrality shift for the surviving non-conflict firms."""

    nodes: tuple[str, ...]
    raw: np.ndarray  # post-removal minus baseline score
    transformed: np.ndarray  # same, after the optional transform
    standardized: np.ndarray  # transformed, z-scored over the sample
    kind: str
    transform: str | None

    def as_mapping(self) -> dict[str, float]:
        return dict(zip(self.nodes, self.standardized.tolist()))

    def to_csv(self, path: str | Path) -> None:
        write_csv(
            path,
            ["firm_id", "kind", "raw", "transformed", "standardized"],
            (
                (n, self.kind, self.raw[k], self.transformed[k], self.standardized[k])
                for k, n in enumerate(self.nodes)
            ),
        )


def predicted_centrality_change(
    graph: TradeGraph,
    conflict_nodes: set[str] | frozenset[str],
    kind: str = "eigenvector",
    transform: str | None = None,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> CentralityChange:
    """Centrality shift induced by deleting the conflict nodes.

    Both scores are computed on the baseline graph and on the graph with the
    conflict nodes removed; the difference (after an optional log(1+x)
    transform, used for betweenness) is standardized to mean 0 / sd 1 over
    the surviving non-conflict nodes.
    """
    conflict_nodes = set(conflict_nodes)
    missing = conflict_nodes - set(graph.nodes)
    if missing:
        raise GraphError(f"conflict nodes not in graph: {sorted(missing)[:10]}")
    if transform not in (None, "log1p"):
        raise ValueError(f"transform must be None or 'log1p', got {transform!r}")

    kwargs = {"tol": tol, "max_iter": max_iter} if kind == "eigenvector" else {}
    before = centrality(graph, kind, **kwargs)
    after = centrality(remove_nodes(graph, conflict_nodes), kind, **kwargs)

    survivors = tuple(n for n in graph.nodes if n not in conflict_nodes)
    b = before.aligned_to(survivors)
    a = after.aligned_to(survivors)
    raw = a - b
    if transform == "log1p":
        transformed = np.log1p(a) - np.log1p(b)
    else:
        transformed = raw.copy()

    sd = float(np.std(transformed))
    if not np.isfinite(sd) or sd == 0.0:
        raise DegenerateSampleError(
            f"standardization degenerate: sd={sd} over {len(survivors)} survivors"
        )
    standardized = (transformed - float(np.mean(transformed))) / sd
    return CentralityChange(
        nodes=survivors,
        raw=raw,
        transformed=transformed,
        standardized=standardized,
        kind=kind,
        transform=transform,
    )


def write_edges_csv(path: str | Path, edges: list[tuple[str, str, float]]) -> None:
    write_csv(path, ["from", "to", "weight"], edges)


def read_edges_csv(path: str | Path) -> list[tuple[str, str, float]]:
    from ._util import read_csv_rows

    edges = []
    for _, row in read_csv_rows(path, ["from", "to", "weight"]):
        edges.append((row["from"], row["to"], float(row["weight"])))
    return edges
