"""Named counterfactual scenarios over the revenue system, distribution
statistics, multi-year dynamics, and region-level aggregation.

The five presets vary which year's input-output matrix and which year's
backed-out outside demand enter the solve:

    baseline        base-year matrix,        base-year demand
    destruction     truncated base matrix,   base-year demand
    adjustment      shock-year matrix,       base-year demand
    outside_demand  base-year matrix,        shock-year demand
    total           shock-year matrix,       shock-year demand

Reported statistics are computed over firms outside the conflict areas;
conflict firms still participate in backing out demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._util import write_csv
from .config import EconomyConfig
from .errors import DegenerateSampleError, ScenarioError
from .ingest import AccountingRecord, FirmRecord, TransactionRecord
from .leontief import (
    DemandVector,
    IOMatrix,
    RevenueVector,
    backout_demand,
    build_io_matrix,
    solve_revenue,
    truncate_network,
)

PRESET_NAMES = ("baseline", "destruction", "adjustment", "outside_demand", "total")


@dataclass(frozen=True)
class Scenario:
    name: str
    io_year: int
    truncate: bool
    demand_year: int

    @classmethod
    def preset(cls, name: str, base_year: int = 2013, shock_year: int = 2014) -> "Scenario":
        table = {
            "baseline": (base_year, False, base_year),
            "destruction": (base_year, True, base_year),
            "adjustment": (shock_year, False, base_year),
            "outside_demand": (base_year, False, shock_year),
            "total": (shock_year, False, shock_year),
        }
        if name not in table:
            raise ScenarioError(f"unknown preset {name!r}; choose from {PRESET_NAMES}")
        io_year, trunc, demand_year = table[name]
        return cls(name=name, io_year=io_year, truncate=trunc, demand_year=demand_year)


@dataclass(frozen=True)
class DistributionStats:
    median: float
    p25: float
    p75: float
    mean: float

    def __post_init__(self):
        if not (self.p25 <= self.median + 1e-12 and self.median <= self.p75 + 1e-12):
            raise ScenarioError(
                f"percentile ordering violated: p25={self.p25}, median={self.median}, p75={self.p75}"
            )

    def as_dict(self) -> dict[str, float]:
        return {"median": self.median, "p25": self.p25, "p75": self.p75, "mean": self.mean}

    def relative_to(self, baseline: "DistributionStats") -> dict[str, float]:
        return {
            stat: relative_change(value, getattr(baseline, stat))
            for stat, value in self.as_dict().items()
        }


def relative_change(value: float, baseline: float) -> float:
    if baseline == 0:
        raise ScenarioError("relative change against a zero baseline statistic")
    return value / baseline - 1.0


def distribution_stats(values: np.ndarray) -> DistributionStats:
    """Median, quartiles (linear interpolation between order statistics), mean."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DegenerateSampleError("distribution statistics of an empty sample")
    q25, q50, q75 = np.percentile(values, [25.0, 50.0, 75.0])
    return DistributionStats(
        median=float(q50), p25=float(q25), p75=float(q75), mean=float(values.mean())
    )


def compensation_share(
    baseline_stat: float, destruction_stat: float, adjustment_stat: float
) -> float:
    """Fraction of the destruction-induced decline recovered under adjustment.

    With relative declines d_s = 1 - stat_s / baseline, the share is
    (d_destruction - d_adjustment) / d_destruction.
    """
    if destruction_stat >= baseline_stat:
        raise ScenarioError(
            "destruction statistic must fall below the baseline "
            f"(got {destruction_stat} >= {baseline_stat})"
        )
    d_dest = 1.0 - destruction_stat / baseline_stat
    d_adj = 1.0 - adjustment_stat / baseline_stat
    if d_dest == 0.0:
        raise ScenarioError("zero destruction decline")
    return (d_dest - d_adj) / d_dest


# ---------------------------------------------------------------------------
# Scenario bundle and runner
# ---------------------------------------------------------------------------


@dataclass
class ScenarioBundle:
    """Per-year matrices and observed revenues over a common firm universe."""

    firms: tuple[str, ...]
    ios: dict[int, IOMatrix]
    revenues: dict[int, RevenueVector]
    conflict_firms: frozenset[str]
    base_year: int = 2013
    shock_year: int = 2014
    sample: str = "balanced"

    def non_conflict_mask(self) -> np.ndarray:
        return np.array([f not in self.conflict_firms for f in self.firms])


def assemble_bundle(
    yearly_flows: dict[int, list[tuple[str, str, float]]],
    accounting: list[AccountingRecord],
    firms: dict[str, FirmRecord],
    sample: str = "balanced",
    base_year: int = 2013,
    shock_year: int = 2014,
) -> ScenarioBundle:
    """Build the common universe and per-year (matrix, revenue) inputs.

    sample="balanced" keeps firms with base-year accounting records;
    sample="all-firms" keeps every firm ever seen in accounting or flows and
    imputes zero revenue in years where a firm is absent.
    """
    sales: dict[tuple[str, int], float] = {}
    for rec in accounting:
        sales[(rec.firm_id, rec.year)] = sales.get((rec.firm_id, rec.year), 0.0) + rec.sales

    if sample == "balanced":
        universe = sorted({fid for (fid, y) in sales if y == base_year})
    elif sample == "all-firms":
        seen = {fid for (fid, _) in sales}
        for flows in yearly_flows.values():
            for i, j, _ in flows:
                seen.add(i)
                seen.add(j)
        universe = sorted(seen)
    else:
        raise ScenarioError(f"unknown sample rule {sample!r}")
    if not universe:
        raise ScenarioError("empty firm universe")
    universe_t = tuple(universe)

    ios = {
        year: build_io_matrix(flows, universe_t, year=year)
        for year, flows in yearly_flows.items()
    }
    revenues = {}
    years = sorted({y for (_, y) in sales})
    for year in years:
        values = np.array([sales.get((f, year), 0.0) for f in universe_t])
        revenues[year] = RevenueVector(firms=universe_t, values=values, year=year)

    conflict = frozenset(
        f for f in universe_t if f in firms and firms[f].conflict_flag
    )
    return ScenarioBundle(
        firms=universe_t,
        ios=ios,
        revenues=revenues,
        conflict_firms=conflict,
        base_year=base_year,
        shock_year=shock_year,
        sample=sample,
    )


@dataclass
class ScenarioResult:
    scenario: Scenario
    revenues: RevenueVector
    stats: DistributionStats
    demand: DemandVector


def run_scenario(
    scenario: Scenario, bundle: ScenarioBundle, config: EconomyConfig
) -> ScenarioResult:
    """Back out the scenario's demand, solve for revenues, summarize."""
    for year in (scenario.io_year, scenario.demand_year):
        if year not in bundle.ios:
            raise ScenarioError(f"no input-output matrix for year {year}")
        if year not in bundle.revenues:
            raise ScenarioError(f"no revenue data for year {year}")
    io = bundle.ios[scenario.io_year]
    if scenario.truncate:
        io = truncate_network(io, bundle.conflict_firms)
    demand = backout_demand(
        bundle.ios[scenario.demand_year], bundle.revenues[scenario.demand_year], config
    )
    solved = solve_revenue(io, demand, config)
    mask = bundle.non_conflict_mask()
    stats = distribution_stats(solved.values[mask])
    return ScenarioResult(scenario=scenario, revenues=solved, stats=stats, demand=demand)


def run_presets(
    bundle: ScenarioBundle,
    config: EconomyConfig,
    names: tuple[str, ...] = PRESET_NAMES,
) -> dict[str, ScenarioResult]:
    return {
        name: run_scenario(
            Scenario.preset(name, bundle.base_year, bundle.shock_year), bundle, config
        )
        for name in names
    }


def scenario_report_rows(results: dict[str, ScenarioResult]) -> list[tuple]:
    """Rows for the scenario report CSV: scenario,stat,value,relative_to_baseline."""
    if "baseline" not in results:
        raise ScenarioError("scenario report needs the baseline preset")
    base = results["baseline"].stats
    rows = []
    for name, res in results.items():
        rel = res.stats.relative_to(base)
        for stat, value in res.stats.as_dict().items():
            rows.append((name, stat, value, rel[stat]))
    return rows


def write_scenario_report(path: str | Path, results: dict[str, ScenarioResult]) -> None:
    write_csv(
        path,
        ["scenario", "stat", "value", "relative_to_baseline"],
        scenario_report_rows(results),
    )


# ---------------------------------------------------------------------------
# Dynamics
# ---------------------------------------------------------------------------


@dataclass
class DynamicsPoint:
    year: int
    stats: DistributionStats
    p40: float
    p60: float


def run_dynamics(
    bundle: ScenarioBundle, years: list[int], config: EconomyConfig
) -> list[DynamicsPoint]:
    """Adjustment counterfactual year by year: demand pinned at the base year,
    the input-output matrix replaced by each year's observed one."""
    missing = [y for y in years if y not in bundle.ios]
    if missing:
        raise ScenarioError(f"no input-output matrix for years {missing}")
    demand = backout_demand(
        bundle.ios[bundle.base_year], bundle.revenues[bundle.base_year], config
    )
    mask = bundle.non_conflict_mask()
    points = []
    for year in years:
        solved = solve_revenue(bundle.ios[year], demand, config)
        sample = solved.values[mask]
        p40, p60 = np.percentile(sample, [40.0, 60.0])
        points.append(
            DynamicsPoint(
                year=year,
                stats=distribution_stats(sample),
                p40=float(p40),
                p60=float(p60),
            )
        )
    return points


def write_dynamics_report(path: str | Path, points: list[DynamicsPoint], base_year: int) -> None:
    base = next(p for p in points if p.year == base_year).stats
    rows = []
    for p in points:
        rel = p.stats.relative_to(base)
        rows.append(
            (
                p.year,
                p.stats.median,
                rel["median"],
                p.stats.p25,
                p.stats.p75,
                p.p40,
                p.p60,
                p.stats.mean,
            )
        )
    write_csv(
        path,
        ["year", "median", "median_relative", "p25", "p75", "p40", "p60", "mean"],
        rows,
    )


# ---------------------------------------------------------------------------
# Region-level aggregation
# ---------------------------------------------------------------------------


@dataclass
class RegionAggregate:
    level: str
    regions: tuple[str, ...]  # connected, non-conflict regions (reported)
    observed: dict[int, dict[str, float]]  # year -> region -> revenue
    counterfactual: dict[str, float]  # adjustment counterfactual, shock year
    dropped_no_railway: tuple[str, ...]
    conflict_regions: tuple[str, ...]

    def totals(self, base_year: int, shock_year: int) -> dict[str, float]:
        obs_base = sum(self.observed[base_year].get(r, 0.0) for r in self.regions)
        obs_shock = sum(self.observed[shock_year].get(r, 0.0) for r in self.regions)
        cf = sum(self.counterfactual.get(r, 0.0) for r in self.regions)
        return {
            "observed_base": obs_base,
            "observed_shock": obs_shock,
            "counterfactual": cf,
            "counterfactual_relative": relative_change(cf, obs_base),
            "observed_relative": relative_change(obs_shock, obs_base),
        }


def aggregate_regions(
    accounting: list[AccountingRecord],
    records: list[TransactionRecord],
    firms: dict[str, FirmRecord],
    level: str = "province",
    base_year: int = 2013,
    shock_year: int = 2014,
    config: EconomyConfig = EconomyConfig(),
) -> RegionAggregate:
    """Run the adjustment counterfactual on region-level totals.

    Region revenue sums all firm sales in the region-year (full accounting
    data, not only railway firms); the region matrix sums railway shipment
    weights between region pairs.  Regions without any railway link are
    dropped from the matrix and reported.  Conflict regions enter the demand
    backout but are excluded from reporting.
    """
    if level not in ("province", "district"):
        raise ScenarioError(f"level must be province|district, got {level!r}")

    def firm_region(f: FirmRecord) -> str:
        return f.province_id if level == "province" else f.rayon_id

    rayon_region: dict[str, str] = {}
    for f in firms.values():
        rayon_region[f.rayon_id] = f.province_id if level == "province" else f.rayon_id

    unknown = sorted({a.firm_id for a in accounting if a.firm_id not in firms})
    if unknown:
        from .errors import ReferentialError

        raise ReferentialError(f"accounting firm ids not in registry: {unknown[:10]}")

    observed: dict[int, dict[str, float]] = {}
    for rec in accounting:
        region = firm_region(firms[rec.firm_id])
        observed.setdefault(rec.year, {}).setdefault(region, 0.0)
        observed[rec.year][region] += rec.sales

    flows: dict[int, dict[tuple[str, str], float]] = {}
    connected: set[str] = set()
    for r in records:
        src = rayon_region.get(r.sender_rayon_id, r.sender_rayon_id)
        dst = rayon_region.get(r.receiver_rayon_id, r.receiver_rayon_id)
        year = r.date.year
        flows.setdefault(year, {})
        flows[year][(src, dst)] = flows[year].get((src, dst), 0.0) + float(r.weight_kg)
        connected.add(src)
        connected.add(dst)

    conflict_regions = {
        firm_region(f) for f in firms.values() if f.conflict_flag
    }
    all_regions = sorted(
        {reg for per_year in observed.values() for reg in per_year}
    )
    universe = tuple(r for r in all_regions if r in connected)
    dropped = tuple(r for r in all_regions if r not in connected)
    if not universe:
        raise ScenarioError("no region with both accounting data and railway flows")

    def region_revenue(year: int) -> RevenueVector:
        per = observed.get(year, {})
        return RevenueVector(
            firms=universe,
            values=np.array([per.get(r, 0.0) for r in universe]),
            year=year,
        )

    io_base = build_io_matrix(
        [(i, j, w) for (i, j), w in sorted(flows.get(base_year, {}).items())],
        universe,
        year=base_year,
    )
    io_shock = build_io_matrix(
        [(i, j, w) for (i, j), w in sorted(flows.get(shock_year, {}).items())],
        universe,
        year=shock_year,
    )
    demand = backout_demand(io_base, region_revenue(base_year), config)
    solved = solve_revenue(io_shock, demand, config)

    reported = tuple(r for r in universe if r not in conflict_regions)
    return RegionAggregate(
        level=level,
        regions=reported,
        observed=observed,
        counterfactual=dict(zip(universe, solved.values.tolist())),
        dropped_no_railway=dropped,
        conflict_regions=tuple(sorted(conflict_regions)),
    )


def write_region_report(
    path: str | Path, agg: RegionAggregate, base_year: int, shock_year: int
) -> None:
    rows = []
    for region in agg.regions:
        obs_base = agg.observed.get(base_year, {}).get(region, 0.0)
        obs_shock = agg.observed.get(shock_year, {}).get(region, 0.0)
        cf = agg.counterfactual.get(region, 0.0)
        rel = relative_change(cf, obs_base) if obs_base else float("nan")
        rows.append((region, base_year, obs_base, "", ""))
        rows.append((region, shock_year, obs_shock, cf, rel))
    write_csv(path, ["region_id", "year", "observed", "counterfactual", "relative"], rows)
