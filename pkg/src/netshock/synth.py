"""Seeded synthetic economies and transaction streams for oracle tests.

The generator draws a directed supplier-buyer network, normalizes edge
weights into an input-share matrix, draws positive outside demand, and
solves the revenue system, so every generated economy satisfies the revenue
identity by construction.  In structural mode it also builds the unit-
elasticity (Cobb-Douglas limit) equilibrium primitives - prices, labor,
consumption, productivities - that satisfy the firm's first-order conditions
exactly (labor spending = labor share x revenue, input spending proportional
to shares).

Transaction emission plants treatment effects additively on the monthly
trade probability (clipped to [0, 1]), so a planted effect of -1 shuts a
link down entirely and moderate effects are recovered one-for-one by the
any-shipment difference-in-differences.  Edges fully inside the conflict
territory are never generated: such shipments would be excluded at ingest.
"""

from __future__ import annotations

import datetime as dt
from calendar import monthrange
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp

from ._util import ym_str, ym_year
from .config import EconomyConfig, StudyWindow
from .errors import ConfigError
from .graph import TradeGraph, predicted_centrality_change
from .ingest import (
    AccountingRecord,
    Establishment,
    FirmRecord,
    TradePanel,
    TransactionRecord,
)
from .leontief import DemandVector, IOMatrix, RevenueVector, build_io_matrix, solve_revenue

_STREAM_NETWORK = 1
_STREAM_DEMAND = 2
_STREAM_CELLS = 3
_STREAM_DATES = 4
_STREAM_ACCOUNTING = 5
_STREAM_OUTCOMES = 6


@dataclass(frozen=True)
class SyntheticEconomyConfig:
    n_firms: int
    seed: int
    alpha: float = 0.18
    topology: str = "preferential"  # preferential | uniform
    attachment: int = 3  # suppliers per firm under preferential attachment
    density: float = 0.02  # edge probability under uniform topology
    n_provinces: int = 8
    rayons_per_province: int = 3
    n_conflict_rayons: int = 2
    demand_scale: float = 5.0
    structural: bool = True

    def __post_init__(self):
        if self.n_firms < 2:
            raise ConfigError(f"need at least 2 firms, got {self.n_firms}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        total_rayons = self.n_provinces * self.rayons_per_province
        if not 0 <= self.n_conflict_rayons < total_rayons:
            raise ConfigError(
                f"conflict rayons ({self.n_conflict_rayons}) must be a proper subset "
                f"of all rayons ({total_rayons})"
            )
        if self.topology not in ("preferential", "uniform"):
            raise ConfigError(f"topology must be preferential|uniform, got {self.topology!r}")


@dataclass
class StructuralPrimitives:
    """Unit-elasticity equilibrium objects consistent with the share matrix."""

    wage: float
    labor: np.ndarray
    total_labor: float
    prices: np.ndarray
    output: np.ndarray  # x_i = r_i / p_i
    consumption: np.ndarray  # c_i = xi_i / p_i
    productivity: np.ndarray
    input_shares: sp.csr_matrix  # equals the io matrix in the unit-sigma limit


@dataclass
class SyntheticEconomy:
    config: SyntheticEconomyConfig
    firms: dict[str, FirmRecord]
    conflict_firms: frozenset[str]
    io: IOMatrix
    demand: DemandVector
    revenues: RevenueVector
    flows: list[tuple[str, str, float]]  # equilibrium value flows, (i, j) sorted
    structural: StructuralPrimitives | None

    def graph(self) -> TradeGraph:
        return TradeGraph.from_edges(self.flows, nodes=self.io.firms)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, stream)))


def _draw_network(cfg: SyntheticEconomyConfig, conflict: np.ndarray, rng) -> set[tuple[int, int]]:
    """Directed supplier->buyer edges; no self-loops, no conflict->conflict."""
    n = cfg.n_firms
    edges: set[tuple[int, int]] = set()

    def allowed(s: int, b: int) -> bool:
        return s != b and not (conflict[s] and conflict[b])

    if cfg.topology == "preferential":
        endpoints: list[int] = [0]
        for node in range(1, n):
            for _ in range(cfg.attachment):
                for _try in range(20):
                    supplier = endpoints[int(rng.integers(len(endpoints)))]
                    if allowed(supplier, node):
                        break
                else:
                    candidates = [s for s in range(node) if allowed(s, node)]
                    if not candidates:
                        continue
                    supplier = candidates[int(rng.integers(len(candidates)))]
                edges.add((supplier, node))
                endpoints.append(supplier)
            endpoints.append(node)
    else:
        m = int(rng.binomial(n * (n - 1), cfg.density))
        while len(edges) < m:
            s, b = rng.integers(n, size=2)
            if allowed(int(s), int(b)):
                edges.add((int(s), int(b)))

    # every buyer needs at least one supplier so input shares can sum to one
    have_supplier = {b for _, b in edges}
    for b in range(n):
        if b in have_supplier:
            continue
        candidates = [s for s in range(n) if allowed(s, b)]
        if candidates:
            edges.add((candidates[int(rng.integers(len(candidates)))], b))
    return edges


def generate_economy(cfg: SyntheticEconomyConfig) -> SyntheticEconomy:
    """Draw the economy; deterministic for a fixed config (seed included)."""
    rng_net = _rng(cfg.seed, _STREAM_NETWORK)
    rng_dem = _rng(cfg.seed, _STREAM_DEMAND)
    n = cfg.n_firms

    total_rayons = cfg.n_provinces * cfg.rayons_per_province
    rayon_ids = [
        f"R{p:02d}{q:02d}"
        for p in range(cfg.n_provinces)
        for q in range(cfg.rayons_per_province)
    ]
    # conflict rayons spread round-robin over the last provinces so that an
    # affected province keeps non-conflict rayons (conflict areas are parts
    # of provinces, which keeps post-x-province controls identifiable)
    conflict_rayons = set()
    for k in range(cfg.n_conflict_rayons):
        p = cfg.n_provinces - 1 - (k % cfg.n_provinces)
        q = cfg.rayons_per_province - 1 - (k // cfg.n_provinces)
        conflict_rayons.add(f"R{p:02d}{q:02d}")

    firm_ids = tuple(f"F{k:05d}" for k in range(n))
    rayon_of = rng_net.integers(total_rayons, size=n)
    if cfg.n_conflict_rayons and all(rayon_ids[r] in conflict_rayons for r in rayon_of):
        rayon_of[0] = 0  # keep the conflict subset proper
    firms = {}
    conflict_mask = np.zeros(n, dtype=bool)
    for k, fid in enumerate(firm_ids):
        rayon = rayon_ids[rayon_of[k]]
        province = f"P{rayon_of[k] // cfg.rayons_per_province:02d}"
        conflict_mask[k] = rayon in conflict_rayons
        firms[fid] = FirmRecord(fid, rayon, province, bool(conflict_mask[k]))

    edges = _draw_network(cfg, conflict_mask, rng_net)
    raw_weights = {e: float(rng_net.lognormal(0.0, 1.0)) for e in sorted(edges)}
    share_flows = [(firm_ids[s], firm_ids[b], w) for (s, b), w in raw_weights.items()]
    io = build_io_matrix(share_flows, firm_ids, year=2013)

    xi = rng_dem.lognormal(np.log(cfg.demand_scale), 1.0, size=n)
    demand = DemandVector(firms=firm_ids, values=xi, year=2013)
    econ_cfg = EconomyConfig(alpha=cfg.alpha, tol=1e-14, max_iter=100_000)
    revenues = solve_revenue(io, demand, econ_cfg)

    # equilibrium value flows: buyer j spends (1-alpha) * omega_ij * r_j on i
    coo = io.matrix.tocoo()
    spend = (1.0 - cfg.alpha) * coo.data * revenues.values[coo.col]
    flows = sorted(
        (firm_ids[i], firm_ids[j], float(v))
        for i, j, v in zip(coo.row, coo.col, spend)
    )

    structural = _structural_primitives(cfg, io, demand, revenues, rng_dem) if cfg.structural else None
    return SyntheticEconomy(
        config=cfg,
        firms=firms,
        conflict_firms=frozenset(f for f, rec in firms.items() if rec.conflict_flag),
        io=io,
        demand=demand,
        revenues=revenues,
        flows=flows,
        structural=structural,
    )


def _structural_primitives(cfg, io, demand, revenues, rng) -> StructuralPrimitives:
    n = io.n
    r = revenues.values
    xi = demand.values
    prices = rng.lognormal(0.0, 0.3, size=n)
    wage = float(rng.lognormal(0.0, 0.2))
    labor = cfg.alpha * r / wage
    output = r / prices
    consumption = xi / prices

    # productivity backs out the production function at the equilibrium point:
    # x_i = (z_i l_i)^alpha * prod_j (x_ji / a_ji)^{a_ji * (1 - alpha)}
    a = io.matrix.tocsc()
    log_m = np.zeros(n)
    for j in range(n):
        start, end = a.indptr[j], a.indptr[j + 1]
        if start == end:
            continue
        shares = a.data[start:end]
        suppliers = a.indices[start:end]
        # x_sj = spending / p_s = (1-alpha) a_sj r_j / p_s
        x_in = (1.0 - cfg.alpha) * shares * r[j] / prices[suppliers]
        log_m[j] = float(shares @ (np.log(x_in) - np.log(shares)))
    with np.errstate(divide="ignore"):
        log_z = (np.log(output) - (1.0 - cfg.alpha) * log_m) / cfg.alpha - np.log(labor)
    return StructuralPrimitives(
        wage=wage,
        labor=labor,
        total_labor=float(labor.sum()),
        prices=prices,
        output=output,
        consumption=consumption,
        productivity=np.exp(log_z),
        input_shares=io.matrix.copy(),
    )


def structural_residuals(economy: SyntheticEconomy) -> dict[str, float]:
    """Max violations of the equilibrium conditions; all ~0 by construction."""
    if economy.structural is None:
        raise ValueError("economy was generated without structural primitives")
    s = economy.structural
    cfg = economy.config
    r = economy.revenues.values
    xi = economy.demand.values
    labor_foc = float(np.max(np.abs(s.wage * s.labor - cfg.alpha * r)))
    revenue_identity = float(
        np.max(np.abs(r - (1.0 - cfg.alpha) * economy.io.matrix.dot(r) - xi))
    )
    demand_value = float(np.max(np.abs(s.prices * s.consumption - xi)))
    # goods market clearing in values: r_i = sum_j spend(i->j) + p_i c_i
    coo = economy.io.matrix.tocoo()
    sold = np.zeros(len(r))
    np.add.at(sold, coo.row, (1.0 - cfg.alpha) * coo.data * r[coo.col])
    market_clearing = float(np.max(np.abs(r - sold - xi)))
    # production function at the equilibrium point
    a = economy.io.matrix.tocsc()
    n = economy.io.n
    log_m = np.zeros(n)
    for j in range(n):
        start, end = a.indptr[j], a.indptr[j + 1]
        if start == end:
            continue
        shares = a.data[start:end]
        x_in = (1.0 - cfg.alpha) * shares * r[j] / s.prices[a.indices[start:end]]
        log_m[j] = float(shares @ (np.log(x_in) - np.log(shares)))
    lhs = np.log(s.output)
    rhs = cfg.alpha * (np.log(s.productivity) + np.log(s.labor)) + (1.0 - cfg.alpha) * log_m
    production = float(np.max(np.abs(lhs - rhs)))
    return {
        "labor_foc": labor_foc,
        "revenue_identity": revenue_identity,
        "demand_value": demand_value,
        "market_clearing": market_clearing,
        "production_function": production,
    }


# ---------------------------------------------------------------------------
# Transaction emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ShockSpec:
    """Planted conflict effects on monthly trade, in probability points."""

    beta1: float = 0.0  # links touching a conflict rayon
    beta2: float = 0.0  # links whose endpoint has a conflict-area partner
    base_prob: float = 0.5
    pair_noise: float = 0.1
    month_noise: float = 0.03
    extra_shipments_mean: float = 0.6
    weight_scale: float = 1000.0
    weight_noise: float = 0.2
    accounting_noise: float = 0.05


@dataclass
class SimulatedCells:
    pairs: list[tuple[Establishment, Establishment]]
    month_codes: np.ndarray
    n_shipments: np.ndarray  # (P, M)
    weight_kg: np.ndarray  # (P, M)
    first_degree: np.ndarray  # ground-truth treatment of each pair
    second_degree: np.ndarray


def _simulate_cells(
    economy: SyntheticEconomy, window: StudyWindow, shock: ShockSpec
) -> SimulatedCells:
    cfg = economy.config
    rng = _rng(cfg.seed, _STREAM_CELLS)
    firm_ids = economy.io.firms
    index = economy.io.index_of()
    conflict = np.array([economy.firms[f].conflict_flag for f in firm_ids])

    src = np.array([index[i] for i, _, _ in economy.flows], dtype=np.int64)
    dst = np.array([index[j] for _, j, _ in economy.flows], dtype=np.int64)
    value = np.array([v for _, _, v in economy.flows])

    has_conflict_buyer = np.zeros(len(firm_ids), dtype=bool)
    has_conflict_supplier = np.zeros(len(firm_ids), dtype=bool)
    np.logical_or.at(has_conflict_buyer, src, conflict[dst])
    np.logical_or.at(has_conflict_supplier, dst, conflict[src])
    tie = has_conflict_buyer | has_conflict_supplier

    first_degree = conflict[src] | conflict[dst]
    second_degree = ~first_degree & (tie[src] | tie[dst])

    months = np.array(window.month_codes, dtype=np.int64)
    post = (months >= window.post_start_code).astype(np.float64)
    E, M = len(src), len(months)

    pair_shift = rng.uniform(-shock.pair_noise, shock.pair_noise, size=E)
    month_shift = rng.uniform(-shock.month_noise, shock.month_noise, size=M)
    prob = (
        shock.base_prob
        + pair_shift[:, None]
        + month_shift[None, :]
        + post[None, :]
        * (shock.beta1 * first_degree + shock.beta2 * second_degree)[:, None]
    )
    prob = np.clip(prob, 0.0, 1.0)

    active = rng.random((E, M)) < prob
    n_ship = np.where(
        active, 1 + rng.poisson(shock.extra_shipments_mean, size=(E, M)), 0
    ).astype(np.int64)

    mean_weight = np.maximum(shock.weight_scale * value / max(value.mean(), 1e-12), 2.0)
    noise = (
        np.exp(rng.normal(0.0, shock.weight_noise, size=(E, M)))
        if shock.weight_noise > 0
        else np.ones((E, M))
    )
    weight = np.rint(n_ship * mean_weight[:, None] * noise).astype(np.int64)
    weight = np.where(n_ship > 0, np.maximum(weight, n_ship), 0)

    pairs = [
        (
            Establishment(firm_ids[s], economy.firms[firm_ids[s]].rayon_id),
            Establishment(firm_ids[b], economy.firms[firm_ids[b]].rayon_id),
        )
        for s, b in zip(src, dst)
    ]
    return SimulatedCells(
        pairs=pairs,
        month_codes=months,
        n_shipments=n_ship,
        weight_kg=weight,
        first_degree=first_degree,
        second_degree=second_degree,
    )


def simulate_trade_panel(
    economy: SyntheticEconomy, window: StudyWindow, shock: ShockSpec
) -> TradePanel:
    """Balanced panel straight from the simulated cells (no CSV round trip).

    The pair universe keeps only pair-directions with at least one shipment,
    matching what ingest would reconstruct from the emitted records.
    """
    cells = _simulate_cells(economy, window, shock)
    ever = cells.n_shipments.sum(axis=1) > 0
    order = sorted(
        np.flatnonzero(ever),
        key=lambda p: (
            cells.pairs[p][0].firm_id,
            cells.pairs[p][0].rayon_id,
            cells.pairs[p][1].firm_id,
            cells.pairs[p][1].rayon_id,
        ),
    )
    pairs = [cells.pairs[p] for p in order]
    n_ship = cells.n_shipments[order]
    weight = cells.weight_kg[order]
    prov = {f.rayon_id: f.province_id for f in economy.firms.values()}
    active = n_ship > 0
    first_trade = np.where(
        active.any(axis=1), cells.month_codes[np.argmax(active, axis=1)], -1
    )
    return TradePanel(
        pairs=pairs,
        month_codes=cells.month_codes,
        n_shipments=n_ship,
        weight_kg=weight,
        window=window,
        origin_province=np.array([prov[o.rayon_id] for o, _ in pairs], dtype=object),
        dest_province=np.array([prov[d.rayon_id] for _, d in pairs], dtype=object),
        first_trade_ym=first_trade,
    )


def emit_transactions(
    economy: SyntheticEconomy, window: StudyWindow, shock: ShockSpec
) -> tuple[list[TransactionRecord], list[AccountingRecord]]:
    """Materialize the simulated cells as ingest-ready record streams.

    Cell totals agree exactly with `simulate_trade_panel` for the same
    economy/window/shock; per-shipment weights split each cell total.
    """
    cells = _simulate_cells(economy, window, shock)
    rng = _rng(economy.config.seed, _STREAM_DATES)
    records: list[TransactionRecord] = []
    for p, (origin, dest) in enumerate(cells.pairs):
        row_n = cells.n_shipments[p]
        row_w = cells.weight_kg[p]
        for m, code in enumerate(cells.month_codes.tolist()):
            n = int(row_n[m])
            if n == 0:
                continue
            total = int(row_w[m])
            year, month = code // 12, code % 12 + 1
            days = np.sort(rng.integers(1, monthrange(year, month)[1] + 1, size=n))
            base, rem = divmod(total, n)
            for s in range(n):
                records.append(
                    TransactionRecord(
                        date=dt.date(year, month, int(days[s])),
                        sender_firm_id=origin.firm_id,
                        receiver_firm_id=dest.firm_id,
                        sender_rayon_id=origin.rayon_id,
                        receiver_rayon_id=dest.rayon_id,
                        weight_kg=base + (rem if s == 0 else 0),
                    )
                )

    rng_acc = _rng(economy.config.seed, _STREAM_ACCOUNTING)
    accounting: list[AccountingRecord] = []
    years = sorted({c // 12 for c in cells.month_codes.tolist()})
    for fid, r in zip(economy.io.firms, economy.revenues.values):
        for year in years:
            noise = 1.0 + shock.accounting_noise * float(rng_acc.standard_normal())
            sales = max(float(r) * max(noise, 0.0), 0.0)
            profits = 0.2 * sales * (1.0 + shock.accounting_noise * float(rng_acc.standard_normal()))
            profits = min(profits, sales)
            accounting.append(
                AccountingRecord(
                    firm_id=fid,
                    year=year,
                    sales=sales,
                    profits=profits,
                    total_costs=sales - profits,
                )
            )
    return records, accounting


def labor_cost_frame(
    economy: SyntheticEconomy,
    years: tuple[int, ...] = (2013, 2014, 2015),
    noise_sd: float = 0.0,
) -> pd.DataFrame:
    """Firm-year revenue and labor cost satisfying the labor first-order
    condition exactly when noise_sd = 0 (labor cost = alpha x revenue)."""
    rng = _rng(economy.config.seed, _STREAM_ACCOUNTING + 100)
    rows = []
    for k, fid in enumerate(economy.io.firms):
        base = float(economy.revenues.values[k])
        for t, year in enumerate(years):
            growth = 1.0 + 0.07 * t + 0.05 * ((k + t) % 5)
            revenue = base * growth
            labor = economy.config.alpha * revenue
            if noise_sd > 0:
                labor *= float(np.exp(rng.normal(0.0, noise_sd)))
            rows.append((fid, year, labor, revenue))
    return pd.DataFrame(rows, columns=["firm_id", "year", "labor_cost", "revenue"])


# ---------------------------------------------------------------------------
# Planted centrality effect
# ---------------------------------------------------------------------------


@dataclass
class PlantedOutcome:
    firm_years: pd.DataFrame  # firm_id, year, sales, profits, total_costs
    delta_centrality: dict[str, float]  # standardized, survivors only
    conflict_firms: frozenset[str]
    effect: float


def plant_centrality_effect(
    economy: SyntheticEconomy,
    effect: float,
    kind: str = "eigenvector",
    years: tuple[int, ...] = (2011, 2012, 2013, 2014, 2015, 2016),
    post_year: int = 2014,
    noise_sd: float = 0.05,
) -> PlantedOutcome:
    """Firm-year outcomes whose post-period log sales shift by effect x the
    standardized removal-induced centrality change; pre-trends are parallel
    by construction."""
    transform = "log1p" if kind == "betweenness" else None
    change = predicted_centrality_change(
        economy.graph(), economy.conflict_firms, kind=kind, transform=transform
    )
    delta = change.as_mapping()
    rng = _rng(economy.config.seed, _STREAM_OUTCOMES)
    year_effects = {y: 0.03 * (y - years[0]) + float(rng.normal(0.0, 0.02)) for y in years}

    rows = []
    for k, fid in enumerate(economy.io.firms):
        if fid not in delta:
            continue
        base = 2.0 + float(np.log1p(economy.revenues.values[k]))
        for year in years:
            level = base + year_effects[year]
            if year >= post_year:
                level += effect * delta[fid]
            level += float(rng.normal(0.0, noise_sd))
            sales = float(np.expm1(level))
            profits = 0.25 * sales
            rows.append((fid, year, sales, profits, sales - profits))
    frame = pd.DataFrame(
        rows, columns=["firm_id", "year", "sales", "profits", "total_costs"]
    )
    return PlantedOutcome(
        firm_years=frame,
        delta_centrality=delta,
        conflict_firms=economy.conflict_firms,
        effect=effect,
    )
