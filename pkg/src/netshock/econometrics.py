"""Two-way fixed-effects OLS with cluster-robust inference, plus the study's
difference-in-differences specifications.

Estimation demeans the outcome and regressors by alternating within-group
projections (so coefficients equal the full dummy-variable regression by
Frisch-Waugh), then runs exact OLS.  The covariance is the cluster sandwich

    (X'X)^-1 (sum_g X_g' u_g u_g' X_g) (X'X)^-1

scaled by [G/(G-1)] * [(N-1)/(N-K)], where K counts the regressors plus the
absorbed-effect rank approximation: one grand mean plus (G_d - 1) per fixed
effect dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from ._util import write_csv, ym_quarter
from .errors import ConvergenceError, EstimationError, SingularModelError
from .ingest import TradePanel

DEMEAN_TOL = 1e-8
DEMEAN_MAX_ITER = 2000


def ihs(x):
    """Inverse hyperbolic sine, log(x + sqrt(x^2 + 1)); defined on all reals."""
    return np.arcsinh(x)


def log1p(x):
    """log(1 + x) for non-negative x; negative input is an error."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0):
        raise EstimationError("log1p outcome transform requires non-negative input")
    return np.log1p(arr) if arr.ndim else float(np.log1p(arr))


# ---------------------------------------------------------------------------
# Core estimator
# ---------------------------------------------------------------------------


@dataclass
class PanelDataset:
    """Estimation-ready arrays: outcome, regressors, FE ids, cluster ids."""

    outcome: np.ndarray
    regressors: np.ndarray  # (n, k)
    regressor_names: list[str]
    fe_ids: list[np.ndarray]  # one or two int arrays, values in 0..G_d-1
    cluster_ids: np.ndarray
    weights: np.ndarray | None = None

    @classmethod
    def from_frame(
        cls,
        df: pd.DataFrame,
        outcome: str,
        regressors: list[str],
        fe: list[str],
        cluster: str,
        weights: str | None = None,
    ) -> "PanelDataset":
        fe_ids = [pd.factorize(df[c], sort=True)[0].astype(np.int64) for c in fe]
        cluster_ids = pd.factorize(df[cluster], sort=True)[0].astype(np.int64)
        return cls(
            outcome=df[outcome].to_numpy(dtype=np.float64),
            regressors=df[regressors].to_numpy(dtype=np.float64),
            regressor_names=list(regressors),
            fe_ids=fe_ids,
            cluster_ids=cluster_ids,
            weights=df[weights].to_numpy(dtype=np.float64) if weights else None,
        )


@dataclass
class RegressionResult:
    names: list[str]
    params: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    nobs: int
    n_clusters: int
    r_squared: float
    r_squared_within: float
    dof_k: int
    singletons_dropped: int = 0
    demean_iterations: int = 0
    demean_max_abs_mean: float = 0.0

    def coef(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    def zstat(self, name: str) -> float:
        return self.coef(name) / self.stderr(name)

    def pvalue(self, name: str) -> float:
        return math.erfc(abs(self.zstat(name)) / math.sqrt(2.0))

    def stars(self, name: str) -> str:
        p = self.pvalue(name)
        return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""

    def rows(self) -> list[tuple[str, float, float, str]]:
        return [
            (n, float(self.params[i]), float(self.se[i]), self.stars(n))
            for i, n in enumerate(self.names)
        ]

    def to_csv(self, path) -> None:
        write_csv(path, ["term", "estimate", "se", "stars"], self.rows())


def _drop_singletons(fe_ids: list[np.ndarray], n: int) -> tuple[np.ndarray, int]:
    """Iteratively drop rows that are alone in any FE group."""
    keep = np.ones(n, dtype=bool)
    dropped = 0
    changed = True
    while changed:
        changed = False
        for ids in fe_ids:
            sub = ids[keep]
            if len(sub) == 0:
                break
            counts = np.bincount(sub)
            single = counts[sub] == 1
            if single.any():
                idx = np.flatnonzero(keep)[single]
                keep[idx] = False
                dropped += int(single.sum())
                changed = True
    return keep, dropped


def _group_means(values: np.ndarray, ids: np.ndarray, G: int, weights: np.ndarray | None):
    if weights is None:
        counts = np.bincount(ids, minlength=G).astype(np.float64)
        counts[counts == 0] = 1.0
        sums = np.empty((G, values.shape[1]))
        for c in range(values.shape[1]):
            sums[:, c] = np.bincount(ids, weights=values[:, c], minlength=G)
        return sums / counts[:, None]
    wsum = np.bincount(ids, weights=weights, minlength=G)
    wsum[wsum == 0] = 1.0
    sums = np.empty((G, values.shape[1]))
    for c in range(values.shape[1]):
        sums[:, c] = np.bincount(ids, weights=values[:, c] * weights, minlength=G)
    return sums / wsum[:, None]


def _alternating_demean(
    cols: np.ndarray,
    fe_ids: list[np.ndarray],
    weights: np.ndarray | None,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, int, float]:
    """Project out all FE dimensions; returns (demeaned, sweeps, last max mean)."""
    Z = np.array(cols, dtype=np.float64, copy=True)
    sizes = [int(ids.max()) + 1 if len(ids) else 0 for ids in fe_ids]
    if len(fe_ids) == 1:
        means = _group_means(Z, fe_ids[0], sizes[0], weights)
        Z -= means[fe_ids[0]]
        return Z, 1, 0.0
    worst = np.inf
    for sweep in range(1, max_iter + 1):
        worst = 0.0
        for ids, G in zip(fe_ids, sizes):
            means = _group_means(Z, ids, G, weights)
            worst = max(worst, float(np.max(np.abs(means))) if means.size else 0.0)
            Z -= means[ids]
        if worst < tol:
            return Z, sweep, worst
    raise ConvergenceError(
        f"fixed-effect demeaning did not converge in {max_iter} sweeps",
        diagnostics={"sweeps": max_iter, "last_max_group_mean": worst, "tol": tol},
    )


def twoway_fe_ols(
    data: PanelDataset,
    demean_tol: float = DEMEAN_TOL,
    demean_max_iter: int = DEMEAN_MAX_ITER,
) -> RegressionResult:
    """Fixed-effects OLS with cluster-robust covariance.

    Requires at least two distinct groups in every FE dimension and at least
    two clusters.  Collinear regressors after demeaning raise a
    SingularModelError naming the offending columns.
    """
    y = np.asarray(data.outcome, dtype=np.float64)
    X = np.asarray(data.regressors, dtype=np.float64)
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise EstimationError("outcome and regressors are not aligned")
    if not (np.isfinite(y).all() and np.isfinite(X).all()):
        raise EstimationError("non-finite outcome or regressor in estimation sample")
    if not 1 <= len(data.fe_ids) <= 2:
        raise EstimationError("one or two fixed-effect dimensions are supported")

    keep, dropped = _drop_singletons(data.fe_ids, len(y))
    y = y[keep]
    X = X[keep]
    fe_ids = []
    for ids in data.fe_ids:
        sub = ids[keep]
        _, sub = np.unique(sub, return_inverse=True)
        fe_ids.append(sub.astype(np.int64))
    clusters = data.cluster_ids[keep]
    _, clusters = np.unique(clusters, return_inverse=True)
    weights = data.weights[keep] if data.weights is not None else None

    n, k = X.shape
    if n == 0:
        raise EstimationError("empty estimation sample after singleton drop")
    group_sizes = [int(ids.max()) + 1 for ids in fe_ids]
    if any(g < 2 for g in group_sizes):
        raise EstimationError(
            f"each fixed-effect dimension needs >= 2 groups, got {group_sizes}"
        )
    G = int(clusters.max()) + 1
    if G < 2:
        raise EstimationError("cluster-robust covariance needs >= 2 clusters")

    stacked = np.column_stack([y, X])
    Zd, sweeps, worst = _alternating_demean(stacked, fe_ids, weights, demean_tol, demean_max_iter)
    yd = Zd[:, 0]
    Xd = Zd[:, 1:]

    if weights is not None:
        sw = np.sqrt(weights)
        yw = yd * sw
        Xw = Xd * sw[:, None]
    else:
        yw = yd
        Xw = Xd

    # collinearity check via pivoted QR on the demeaned design
    _, Rq, piv = scipy.linalg.qr(Xw, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rq)) if Rq.size else np.empty(0)
    tol_rank = (diag[0] * max(n, k) * np.finfo(np.float64).eps) if diag.size and diag[0] > 0 else 0.0
    rank = int((diag > tol_rank).sum()) if diag.size else 0
    if rank < k:
        bad = [data.regressor_names[piv[i]] for i in range(rank, k)]
        raise SingularModelError(
            f"collinear regressors after demeaning: {', '.join(bad)}", columns=bad
        )

    XtX = Xw.T @ Xw
    beta = np.linalg.solve(XtX, Xw.T @ yw)
    resid = yw - Xw @ beta

    K = k + 1 + sum(g - 1 for g in group_sizes)
    cov = _cluster_sandwich(Xw, resid, clusters, G, XtX, n, K)

    ssr = float(resid @ resid)
    if weights is not None:
        ybar = float(np.average(y, weights=weights))
        tss = float(weights @ (y - ybar) ** 2)
        tss_within = float(yw @ yw)
    else:
        tss = float(((y - y.mean()) ** 2).sum())
        tss_within = float(yd @ yd)
    r2 = 1.0 - ssr / tss if tss > 0 else float("nan")
    r2_within = 1.0 - ssr / tss_within if tss_within > 0 else float("nan")

    return RegressionResult(
        names=list(data.regressor_names),
        params=beta,
        cov=cov,
        se=np.sqrt(np.diag(cov)),
        nobs=n,
        n_clusters=G,
        r_squared=r2,
        r_squared_within=r2_within,
        dof_k=K,
        singletons_dropped=dropped,
        demean_iterations=sweeps,
        demean_max_abs_mean=worst,
    )


def _cluster_sandwich(X, resid, clusters, G, XtX, n, K) -> np.ndarray:
    k = X.shape[1]
    scores = X * resid[:, None]
    meat = np.zeros((G, k))
    for c in range(k):
        meat[:, c] = np.bincount(clusters, weights=scores[:, c], minlength=G)
    S = meat.T @ meat
    bread = np.linalg.inv(XtX)
    factor = (G / (G - 1.0)) * ((n - 1.0) / (n - K)) if n > K else (G / (G - 1.0))
    cov = factor * bread @ S @ bread
    return (cov + cov.T) / 2.0


def cluster_robust_cov(
    X: np.ndarray, resid: np.ndarray, clusters: np.ndarray, n_absorbed: int = 0
) -> np.ndarray:
    """Standalone sandwich for a given (demeaned) design and residuals."""
    _, ids = np.unique(clusters, return_inverse=True)
    G = int(ids.max()) + 1
    if G < 2:
        raise EstimationError("cluster-robust covariance needs >= 2 clusters")
    n, k = X.shape
    return _cluster_sandwich(X, resid, ids, G, X.T @ X, n, k + n_absorbed)


# ---------------------------------------------------------------------------
# Trade-propagation difference-in-differences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PropagationSpec:
    """Which variant of the trade-propagation regression to run.

    outcome: any | log_shipments | log_weight
    degrees: "first" (conflict link only) or "both" (adds the
        traded-with-conflict second-degree term)
    split_buyer_supplier: replace the two terms with the four buyer/supplier
        direction terms
    partner_count_controls: add preconflict partner counts x Post
    distance_polynomial: degree of origin/destination distance polynomials
        x Post (0 = off); requires `distances`
    post_province_effects: add Post x province dummies for both endpoints
    include_both_conflict_links: keep links with both endpoints in conflict
        areas (excluded by default)
    restrict_to_preconflict_pairs: drop pair-directions whose first shipment
        is after the post period starts (included by default)
    """

    outcome: str = "any"
    degrees: str = "both"
    split_buyer_supplier: bool = False
    partner_count_controls: bool = False
    distance_polynomial: int = 0
    post_province_effects: bool = False
    include_both_conflict_links: bool = False
    restrict_to_preconflict_pairs: bool = False


_OUTCOME_BUILDERS = {
    "any": TradePanel.any_shipment,
    "log_shipments": TradePanel.log1p_shipments,
    "log_weight": TradePanel.log1p_weight,
}


def did_propagation(
    panel: TradePanel,
    spec: PropagationSpec = PropagationSpec(),
    distances: dict | None = None,
    demean_tol: float = DEMEAN_TOL,
) -> RegressionResult:
    """Pair-direction x year-month DiD of trade intensity on conflict exposure.

    Fixed effects: pair-direction and year-month; clustering: unordered
    province pair.  Term names in the result: ``conflict_x_post``,
    ``partner_conflict_x_post`` and the buyer/supplier splits
    ``buyer_conflict_x_post`` etc.
    """
    if panel.flags is None:
        raise EstimationError("panel has no treatment flags; run assign_treatment_flags")
    if spec.outcome not in _OUTCOME_BUILDERS:
        raise EstimationError(f"unknown outcome {spec.outcome!r}")
    flags = panel.flags
    P, M = panel.n_pairs, panel.n_months

    pair_mask = np.ones(P, dtype=bool)
    if not spec.include_both_conflict_links:
        pair_mask &= ~flags.both_conflict
    if spec.restrict_to_preconflict_pairs:
        pair_mask &= panel.first_trade_ym < panel.window.post_start_code
    pidx = np.flatnonzero(pair_mask)
    if len(pidx) == 0:
        raise EstimationError("no pairs left after sample restrictions")

    y = _OUTCOME_BUILDERS[spec.outcome](panel)[pidx].ravel()
    post = panel.post_mask().astype(np.float64)
    post_rows = np.tile(post, len(pidx))

    def per_pair(v):
        return np.repeat(v[pidx].astype(np.float64), M)

    names: list[str] = []
    cols: list[np.ndarray] = []
    if spec.split_buyer_supplier:
        terms = [
            ("supplier_conflict_x_post", flags.supplier_conflict),
            ("buyer_conflict_x_post", flags.buyer_conflict),
        ]
        if spec.degrees == "both":
            terms += [
                ("partner_supplier_conflict_x_post", flags.partner_supplier_conflict),
                ("partner_buyer_conflict_x_post", flags.partner_buyer_conflict),
            ]
    else:
        terms = [("conflict_x_post", flags.conflict)]
        if spec.degrees == "both":
            terms.append(("partner_conflict_x_post", flags.partner_conflict))
    for name, v in terms:
        names.append(name)
        cols.append(per_pair(v) * post_rows)

    if spec.partner_count_controls:
        names += ["supplier_partners_2013_x_post", "buyer_partners_2013_x_post"]
        cols.append(per_pair(flags.origin_partners_2013) * post_rows)
        cols.append(per_pair(flags.dest_partners_2013) * post_rows)

    if spec.distance_polynomial > 0:
        if distances is None:
            raise EstimationError("distance controls requested but no distances given")
        d_origin = np.array(
            [distances[o.rayon_id] for o, _ in (panel.pairs[i] for i in pidx)], dtype=np.float64
        )
        d_dest = np.array(
            [distances[d.rayon_id] for _, d in (panel.pairs[i] for i in pidx)], dtype=np.float64
        )
        scale = max(float(np.max(np.abs(np.concatenate([d_origin, d_dest])))), 1.0)
        for side, dist in (("origin", d_origin / scale), ("dest", d_dest / scale)):
            for deg in range(1, spec.distance_polynomial + 1):
                names.append(f"{side}_distance_p{deg}_x_post")
                cols.append(np.repeat(dist**deg, M) * post_rows)

    if spec.post_province_effects:
        provs = sorted(
            set(panel.origin_province[pidx]) | set(panel.dest_province[pidx])
        )
        for prov in provs[1:]:  # drop one category: sum over provinces = Post
            names.append(f"post_x_origin_province_{prov}")
            cols.append(per_pair(panel.origin_province == prov) * post_rows)
            names.append(f"post_x_dest_province_{prov}")
            cols.append(per_pair(panel.dest_province == prov) * post_rows)

    X = np.column_stack(cols)
    pair_fe = np.repeat(np.arange(len(pidx), dtype=np.int64), M)
    month_fe = np.tile(np.arange(M, dtype=np.int64), len(pidx))
    prov_pairs = np.array(
        ["|".join(sorted((panel.origin_province[i], panel.dest_province[i]))) for i in pidx]
    )
    _, cluster_codes = np.unique(prov_pairs, return_inverse=True)
    cluster_rows = np.repeat(cluster_codes.astype(np.int64), M)

    data = PanelDataset(
        outcome=y,
        regressors=X,
        regressor_names=names,
        fe_ids=[pair_fe, month_fe],
        cluster_ids=cluster_rows,
        weights=None,
    )
    return twoway_fe_ols(data, demean_tol=demean_tol)


# ---------------------------------------------------------------------------
# Event studies
# ---------------------------------------------------------------------------


@dataclass
class EventStudyResult:
    periods: list
    baseline: object
    coefficients: dict[str, dict]  # treatment -> period -> (estimate, se)
    regression: RegressionResult

    def series(self, treatment: str) -> list[tuple[object, float, float]]:
        out = []
        for p in self.periods:
            est, se = self.coefficients[treatment][p]
            out.append((p, est, se))
        return out

    def to_csv(self, path) -> None:
        rows = []
        for t in self.coefficients:
            for p, est, se in self.series(t):
                rows.append((t, p, est, se))
        write_csv(path, ["treatment", "period", "estimate", "se"], rows)


def event_study(
    outcome: np.ndarray,
    treatments: dict[str, np.ndarray],
    period_values: np.ndarray,
    baseline,
    fe_ids: list[np.ndarray],
    cluster_ids: np.ndarray,
    extra_regressors: dict[str, np.ndarray] | None = None,
    demean_tol: float = DEMEAN_TOL,
) -> EventStudyResult:
    """Interact each treatment with period dummies, omitting the baseline.

    The baseline period's coefficient is reported as exact 0.  `period_values`
    may be coarser than the time fixed effect (e.g. quarters against
    year-month effects).
    """
    periods = sorted(set(np.asarray(period_values).tolist()))
    if baseline not in periods:
        raise EstimationError(f"baseline period {baseline!r} not present in data")
    names: list[str] = []
    cols: list[np.ndarray] = []
    pv = np.asarray(period_values)
    for tname, tvec in treatments.items():
        tvec = np.asarray(tvec, dtype=np.float64)
        for p in periods:
            if p == baseline:
                continue
            names.append(f"{tname}@{p}")
            cols.append(tvec * (pv == p))
    if extra_regressors:
        for name, vec in extra_regressors.items():
            names.append(name)
            cols.append(np.asarray(vec, dtype=np.float64))
    data = PanelDataset(
        outcome=np.asarray(outcome, dtype=np.float64),
        regressors=np.column_stack(cols),
        regressor_names=names,
        fe_ids=fe_ids,
        cluster_ids=cluster_ids,
    )
    res = twoway_fe_ols(data, demean_tol=demean_tol)
    coeffs: dict[str, dict] = {}
    for tname in treatments:
        per: dict = {}
        for p in periods:
            if p == baseline:
                per[p] = (0.0, 0.0)
            else:
                term = f"{tname}@{p}"
                per[p] = (res.coef(term), res.stderr(term))
        coeffs[tname] = per
    return EventStudyResult(periods=periods, baseline=baseline, coefficients=coeffs, regression=res)


def propagation_event_study(
    panel: TradePanel,
    outcome: str = "any",
    baseline_quarter: str = "2013Q4",
    degrees: str = "both",
    include_both_conflict_links: bool = False,
) -> EventStudyResult:
    """Quarter-by-quarter version of the propagation DiD."""
    if panel.flags is None:
        raise EstimationError("panel has no treatment flags; run assign_treatment_flags")
    flags = panel.flags
    P, M = panel.n_pairs, panel.n_months
    pair_mask = np.ones(P, dtype=bool)
    if not include_both_conflict_links:
        pair_mask &= ~flags.both_conflict
    pidx = np.flatnonzero(pair_mask)
    y = _OUTCOME_BUILDERS[outcome](panel)[pidx].ravel()
    quarters = np.array([ym_quarter(c) for c in panel.month_codes.tolist()], dtype=object)
    q_rows = np.tile(quarters, len(pidx))
    treatments = {"conflict": np.repeat(flags.conflict[pidx].astype(np.float64), M)}
    if degrees == "both":
        treatments["partner_conflict"] = np.repeat(
            flags.partner_conflict[pidx].astype(np.float64), M
        )
    pair_fe = np.repeat(np.arange(len(pidx), dtype=np.int64), M)
    month_fe = np.tile(np.arange(M, dtype=np.int64), len(pidx))
    prov_pairs = np.array(
        ["|".join(sorted((panel.origin_province[i], panel.dest_province[i]))) for i in pidx]
    )
    _, cluster_codes = np.unique(prov_pairs, return_inverse=True)
    return event_study(
        outcome=y,
        treatments=treatments,
        period_values=q_rows,
        baseline=baseline_quarter,
        fe_ids=[pair_fe, month_fe],
        cluster_ids=np.repeat(cluster_codes.astype(np.int64), M),
    )


# ---------------------------------------------------------------------------
# Centrality difference-in-differences (firm-year panel)
# ---------------------------------------------------------------------------

_FIRM_OUTCOMES = {
    "log_sales": lambda df: log1p(df["sales"].to_numpy(dtype=np.float64)),
    "ihs_profits": lambda df: ihs(df["profits"].to_numpy(dtype=np.float64)),
    "ihs_profit_cost": lambda df: ihs(df["profits"].to_numpy(dtype=np.float64))
    - ihs(df["total_costs"].to_numpy(dtype=np.float64)),
}


def did_centrality(
    firm_years: pd.DataFrame,
    delta_centrality: dict[str, float],
    conflict_firms: set[str] | frozenset[str] = frozenset(),
    outcome: str = "log_sales",
    variant: str = "prepost",
    post_year: int = 2014,
    baseline_year: int = 2013,
    conflict_ties: dict[str, float] | None = None,
):
    """Firm performance on the standardized war-induced centrality change.

    `firm_years` needs columns firm_id, year, sales, profits, total_costs.
    Firms in conflict areas are excluded; firm and year fixed effects,
    firm-level clustering.  variant="prepost" returns a RegressionResult
    with term ``delta_centrality_x_post``; variant="yearly" returns an
    EventStudyResult with yearly interactions (baseline year omitted).
    Passing `conflict_ties` adds the traded-with-conflict indicator
    interacted the same way.
    """
    if outcome not in _FIRM_OUTCOMES:
        raise EstimationError(f"unknown outcome {outcome!r}")
    df = firm_years[~firm_years["firm_id"].isin(conflict_firms)].copy()
    df = df[df["firm_id"].isin(delta_centrality)]
    if df.empty:
        raise EstimationError("no firms left after conflict-area exclusion")
    y = _FIRM_OUTCOMES[outcome](df)
    finite = np.isfinite(y)
    df = df[finite]
    y = y[finite]

    delta = df["firm_id"].map(delta_centrality).to_numpy(dtype=np.float64)
    years = df["year"].to_numpy(dtype=np.int64)
    firm_ids = pd.factorize(df["firm_id"], sort=True)[0].astype(np.int64)
    year_ids = pd.factorize(years, sort=True)[0].astype(np.int64)

    if variant == "prepost":
        post = (years >= post_year).astype(np.float64)
        names = ["delta_centrality_x_post"]
        cols = [delta * post]
        if conflict_ties is not None:
            ties = df["firm_id"].map(conflict_ties).fillna(0.0).to_numpy(dtype=np.float64)
            names.append("conflict_ties_x_post")
            cols.append(ties * post)
        data = PanelDataset(
            outcome=y,
            regressors=np.column_stack(cols),
            regressor_names=names,
            fe_ids=[firm_ids, year_ids],
            cluster_ids=firm_ids,
        )
        return twoway_fe_ols(data)
    if variant == "yearly":
        treatments = {"delta_centrality": delta}
        if conflict_ties is not None:
            treatments["conflict_ties"] = (
                df["firm_id"].map(conflict_ties).fillna(0.0).to_numpy(dtype=np.float64)
            )
        return event_study(
            outcome=y,
            treatments=treatments,
            period_values=years,
            baseline=baseline_year,
            fe_ids=[firm_ids, year_ids],
            cluster_ids=firm_ids,
        )
    raise EstimationError(f"variant must be prepost|yearly, got {variant!r}")


def residualize(delta: np.ndarray, characteristics: np.ndarray) -> np.ndarray:
    """Residualize a centrality change on baseline characteristics.

    OLS with intercept; residuals are re-standardized to mean 0 / sd 1.
    Raises on rank-deficient characteristics.
    """
    delta = np.asarray(delta, dtype=np.float64)
    Z = np.asarray(characteristics, dtype=np.float64)
    if Z.ndim != 2 or len(delta) != Z.shape[0]:
        raise EstimationError("characteristics not aligned with centrality change")
    D = np.column_stack([np.ones(len(delta)), Z])
    if np.linalg.matrix_rank(D) < D.shape[1]:
        raise SingularModelError("characteristics matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(D, delta, rcond=None)
    resid = delta - D @ coef
    sd = float(resid.std())
    if sd == 0.0:
        raise EstimationError("residualized centrality change has zero variance")
    return (resid - float(resid.mean())) / sd


@dataclass
class AlphaEstimate:
    alpha: float
    slope: float
    n_used: int
    n_dropped_nonpositive: int


def estimate_alpha(
    labor: pd.DataFrame, years: tuple[int, int] = (2013, 2015)
) -> AlphaEstimate:
    """Labor share from a log-log regression of labor cost on revenue.

    `labor` needs columns firm_id, year, labor_cost, revenue.  Firm fixed
    effects absorb firm scale; the implied share is exp(mean(log cost) -
    slope * mean(log revenue)), which equals the share exactly when the data
    satisfy labor cost = share * revenue.
    """
    df = labor[(labor["year"] >= years[0]) & (labor["year"] <= years[1])]
    pos = (df["labor_cost"] > 0) & (df["revenue"] > 0)
    dropped = int((~pos).sum())
    df = df[pos]
    if df.empty:
        raise EstimationError("no usable rows for labor-share estimation")
    ylog = np.log(df["labor_cost"].to_numpy(dtype=np.float64))
    xlog = np.log(df["revenue"].to_numpy(dtype=np.float64))
    firm_ids = pd.factorize(df["firm_id"], sort=True)[0].astype(np.int64)
    G = int(firm_ids.max()) + 1
    stacked = np.column_stack([ylog, xlog])
    means = _group_means(stacked, firm_ids, G, None)
    demeaned = stacked - means[firm_ids]
    sxx = float(demeaned[:, 1] @ demeaned[:, 1])
    if sxx == 0.0:
        raise SingularModelError("no within-firm revenue variation")
    slope = float(demeaned[:, 1] @ demeaned[:, 0]) / sxx
    alpha = float(np.exp(ylog.mean() - slope * xlog.mean()))
    return AlphaEstimate(alpha=alpha, slope=slope, n_used=len(df), n_dropped_nonpositive=dropped)


def underestimation_share(
    beta_naive: float,
    beta1_full: float,
    beta2_full: float,
    n1_share: float,
    n2_share: float,
) -> float:
    """Fraction of the total trade impact missed by the one-degree regression.

    Aggregates coefficients by the shares of first- and second-degree links:
    1 - naive*n1 / (beta1*n1 + beta2*n2), with all effects read as declines.
    """
    if not (0.0 <= n1_share <= 1.0 and 0.0 <= n2_share <= 1.0):
        raise ValueError("link shares must be in [0, 1]")
    naive, b1, b2 = abs(beta_naive), abs(beta1_full), abs(beta2_full)
    total = b1 * n1_share + b2 * n2_share
    if total == 0.0:
        raise ValueError("full-specification total effect is zero")
    return 1.0 - (naive * n1_share) / total
