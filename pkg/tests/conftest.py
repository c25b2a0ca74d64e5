"""Shared fixtures and independent oracle implementations.

The oracles deliberately use different algorithms from the package code:
betweenness by exhaustive shortest-path enumeration, fixed-effects OLS by a
dense dummy-variable regression, percentiles by the explicit order-statistic
interpolation formula.
"""

from __future__ import annotations

import numpy as np
import pytest


# ---------------------------------------------------------------------------
# Graph oracles
# ---------------------------------------------------------------------------


def brute_force_betweenness(n: int, links: set[tuple[int, int]]) -> np.ndarray:
    """Betweenness by enumerating every shortest path between every pair."""
    nbrs = {v: set() for v in range(n)}
    for a, b in links:
        if a != b:
            nbrs[a].add(b)
            nbrs[b].add(a)

    def bfs_dist(src):
        dist = {src: 0}
        frontier = [src]
        while frontier:
            nxt = []
            for u in frontier:
                for v in nbrs[u]:
                    if v not in dist:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist

    dists = {v: bfs_dist(v) for v in range(n)}
    bc = np.zeros(n)
    for k in range(n):
        for j in range(k + 1, n):
            if j not in dists[k]:
                continue
            target_len = dists[k][j]
            paths: list[tuple[int, ...]] = []

            def extend(path: tuple[int, ...]):
                u = path[-1]
                if u == j:
                    if len(path) - 1 == target_len:
                        paths.append(path)
                    return
                for v in nbrs[u]:
                    if v in path:
                        continue
                    if len(path) + dists[v].get(j, n + 1) > target_len:
                        continue  # cannot reach j on a shortest path
                    extend(path + (v,))

            extend((k,))
            total = len(paths)
            assert total > 0
            for path in paths:
                for interior in path[1:-1]:
                    bc[interior] += 1.0 / total
    return bc


def random_connected_links(rng: np.random.Generator, n: int, p: float) -> set[tuple[int, int]]:
    """Random graph unioned with a random spanning tree (connected for n >= 1)."""
    links = set()
    order = rng.permutation(n)
    for k in range(1, n):
        a = int(order[k])
        b = int(order[rng.integers(k)])
        links.add((min(a, b), max(a, b)))
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                links.add((a, b))
    return links


# ---------------------------------------------------------------------------
# Regression oracles
# ---------------------------------------------------------------------------


def dummy_ols_coefficients(y, X, fe_ids) -> np.ndarray:
    """Coefficients from the full dummy-variable regression (first FE dim
    keeps all dummies, later dims drop one category)."""
    blocks = [np.asarray(X, dtype=np.float64)]
    for d, ids in enumerate(fe_ids):
        ids = np.asarray(ids)
        groups = np.unique(ids)
        drop_first = d > 0
        for g in groups[1:] if drop_first else groups:
            blocks.append((ids == g).astype(np.float64)[:, None])
    design = np.hstack([b if b.ndim == 2 else b[:, None] for b in blocks])
    coef, *_ = np.linalg.lstsq(design, np.asarray(y, dtype=np.float64), rcond=None)
    return coef[: np.asarray(X).shape[1]]


def dummy_projection_residuals(values, fe_ids):
    """Residuals of each column after projecting on the FE dummy space."""
    V = np.asarray(values, dtype=np.float64)
    if V.ndim == 1:
        V = V[:, None]
    blocks = []
    for d, ids in enumerate(fe_ids):
        ids = np.asarray(ids)
        groups = np.unique(ids)
        for g in groups[1:] if d > 0 else groups:
            blocks.append((ids == g).astype(np.float64))
    D = np.column_stack(blocks)
    coef, *_ = np.linalg.lstsq(D, V, rcond=None)
    return V - D @ coef


def hand_sandwich(
    y, X, fe_ids, clusters, dof_k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster sandwich evaluated with explicit loops over clusters."""
    Xd = dummy_projection_residuals(X, fe_ids)
    yd = dummy_projection_residuals(y, fe_ids)[:, 0]
    XtX = Xd.T @ Xd
    beta = np.linalg.solve(XtX, Xd.T @ yd)
    u = yd - Xd @ beta
    k = Xd.shape[1]
    S = np.zeros((k, k))
    labels = np.unique(clusters)
    for g in labels:
        rows = np.asarray(clusters) == g
        s_g = Xd[rows].T @ u[rows]
        S += np.outer(s_g, s_g)
    G = len(labels)
    n = len(yd)
    factor = (G / (G - 1.0)) * ((n - 1.0) / (n - dof_k))
    bread = np.linalg.inv(XtX)
    return beta, factor * bread @ S @ bread


def percentile_oracle(values, q: float) -> float:
    """Linear interpolation between order statistics (manual formula)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    h = (len(v) - 1) * (q / 100.0)
    lo = int(np.floor(h))
    hi = min(lo + 1, len(v) - 1)
    return float(v[lo] + (h - lo) * (v[hi] - v[lo]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)
