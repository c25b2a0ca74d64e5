"""Command-line surface wiring the modules into reproducible batch runs.

Every subcommand reads CSV/config inputs, writes CSV outputs plus a
``manifest.json`` recording the resolved configuration, paths, seed and
wall-clock timing.  Reruns with identical inputs, config and seed produce
byte-identical data files (manifests differ only in the timing field).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._util import write_csv, ym_str
from .config import EngineConfig, engine_config_from_values, load_config_file
from .counterfactual import (
    PRESET_NAMES,
    aggregate_regions,
    assemble_bundle,
    run_dynamics,
    run_presets,
    write_dynamics_report,
    write_region_report,
    write_scenario_report,
)
from .econometrics import PropagationSpec, did_propagation
from .errors import MissingInputError, NetshockError
from .graph import predicted_centrality_change, read_edges_csv, write_edges_csv, TradeGraph
from .ingest import (
    IngestConfig,
    assign_treatment_flags,
    build_trade_panel,
    build_yearly_flows,
    conflict_rayons,
    load_accounting,
    load_firms,
    load_transactions,
    rayon_provinces,
)
from .leontief import backout_demand, build_io_matrix, RevenueVector
from .synth import ShockSpec, SyntheticEconomyConfig, emit_transactions, generate_economy

DID_SPECS = {
    "propagation-first-degree": PropagationSpec(degrees="first"),
    "propagation-both-degrees": PropagationSpec(degrees="both"),
    "propagation-buyer-supplier": PropagationSpec(split_buyer_supplier=True),
    "propagation-partner-controls": PropagationSpec(partner_count_controls=True),
    "propagation-firm-level": PropagationSpec(degrees="both"),
}

_OUTCOME_FLAGS = {"any": "any", "log-shipments": "log_shipments", "log-weight": "log_weight"}


def _require(path: Path) -> Path:
    if not path.exists():
        raise MissingInputError(f"required input not found: {path}")
    return path


def _resolve_config(args) -> EngineConfig:
    values: dict = {}
    config_path = args.config or os.environ.get("NETSHOCK_CONFIG")
    if config_path:
        values = load_config_file(config_path)
    cfg = engine_config_from_values(values)
    overrides = {
        "alpha": getattr(args, "alpha", None),
        "tol": getattr(args, "tol", None),
        "max_iter": getattr(args, "max_iter", None),
        "start": getattr(args, "window_start", None),
        "end": getattr(args, "window_end", None),
        "post_start": getattr(args, "post_start", None),
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None),
    }
    if getattr(args, "lenient", False):
        overrides["strict"] = False
    if getattr(args, "strict", False):
        overrides["strict"] = True
    return cfg.with_overrides(**{k: v for k, v in overrides.items() if v is not None})


def _manifest(outdir: Path, command: str, cfg: EngineConfig, inputs, outputs, seed, t0):
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config": {
            "alpha": cfg.economy.alpha,
            "tol": cfg.economy.tol,
            "max_iter": cfg.economy.max_iter,
            "window_start": cfg.window.start,
            "window_end": cfg.window.end,
            "post_start": cfg.window.post_start,
            "strict": cfg.strict,
            "threads": cfg.threads,
        },
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
        "timings": {"wall_seconds": time.perf_counter() - t0},
    }
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_trio(indir: Path, cfg: EngineConfig):
    firms = load_firms(_require(indir / "firms.csv"))
    icfg = IngestConfig(window=cfg.window, strict=cfg.strict, drop_international=cfg.drop_international)
    records, report = load_transactions(
        _require(indir / "transactions.csv"),
        icfg,
        conflict_rayons(firms),
        province_of_rayon=rayon_provinces(firms),
    )
    return firms, records, report, icfg


def _write_firms_csv(path: Path, firms) -> None:
    write_csv(
        path,
        ["firm_id", "rayon_id", "province_id", "conflict_flag"],
        (
            (f.firm_id, f.rayon_id, f.province_id, int(f.conflict_flag))
            for f in sorted(firms.values(), key=lambda f: f.firm_id)
        ),
    )


# --------------------------------------------------------------------------
# subcommand handlers
# --------------------------------------------------------------------------


def _cmd_simulate(args, cfg: EngineConfig) -> list[Path]:
    if cfg.seed is None:
        raise NetshockError("simulate requires --seed (or seed in the config file)")
    outdir = Path(args.output)
    econ_cfg = SyntheticEconomyConfig(
        n_firms=args.n_firms,
        seed=cfg.seed,
        alpha=cfg.economy.alpha,
        n_conflict_rayons=args.conflict_rayons,
    )
    economy = generate_economy(econ_cfg)
    shock = ShockSpec(beta1=args.beta1, beta2=args.beta2)
    records, accounting = emit_transactions(economy, cfg.window, shock)

    tpath = outdir / "transactions.csv"
    write_csv(
        tpath,
        ["date", "sender_firm_id", "receiver_firm_id", "sender_rayon_id", "receiver_rayon_id", "weight_kg"],
        (
            (r.date.isoformat(), r.sender_firm_id, r.receiver_firm_id, r.sender_rayon_id, r.receiver_rayon_id, r.weight_kg)
            for r in records
        ),
    )
    fpath = outdir / "firms.csv"
    _write_firms_csv(fpath, economy.firms)
    apath = outdir / "accounting.csv"
    write_csv(
        apath,
        ["firm_id", "year", "sales", "profits", "total_costs"],
        ((a.firm_id, a.year, a.sales, a.profits, a.total_costs) for a in accounting),
    )
    truth = outdir / "truth"
    economy.io.to_csv(truth / "omega.csv")
    economy.demand.to_csv(truth / "xi.csv")
    economy.revenues.to_csv(truth / "revenues.csv")
    return [tpath, fpath, apath, truth / "omega.csv", truth / "xi.csv", truth / "revenues.csv"]


def _cmd_ingest(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    firms, records, report, _ = _load_trio(indir, cfg)
    cpath = outdir / "transactions_clean.csv"
    write_csv(
        cpath,
        ["date", "sender_firm_id", "receiver_firm_id", "sender_rayon_id", "receiver_rayon_id", "weight_kg"],
        (
            (r.date.isoformat(), r.sender_firm_id, r.receiver_firm_id, r.sender_rayon_id, r.receiver_rayon_id, r.weight_kg)
            for r in records
        ),
    )
    rpath = outdir / "ingest_report.csv"
    write_csv(
        rpath,
        ["metric", "value"],
        [
            ("rows_read", report.n_rows),
            ("rows_loaded", report.n_loaded),
            ("rows_skipped", report.n_skipped),
            ("excluded_intra_conflict", report.n_excluded_intra_conflict),
            ("excluded_international", report.n_excluded_international),
        ],
    )
    return [cpath, rpath]


def _cmd_panel(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    firms, records, _, _ = _load_trio(indir, cfg)
    panel = assign_treatment_flags(
        build_trade_panel(records, firms, cfg.window), firms, level=args.level
    )
    f = panel.flags
    ppath = outdir / "panel_pairs.csv"
    write_csv(
        ppath,
        [
            "origin_firm", "origin_rayon", "dest_firm", "dest_rayon",
            "conflict", "partner_conflict", "buyer_conflict", "supplier_conflict",
            "partner_buyer_conflict", "partner_supplier_conflict",
            "origin_partners_2013", "dest_partners_2013", "first_trade_ym",
        ],
        (
            (
                o.firm_id, o.rayon_id, d.firm_id, d.rayon_id,
                int(f.conflict[p]), int(f.partner_conflict[p]),
                int(f.buyer_conflict[p]), int(f.supplier_conflict[p]),
                int(f.partner_buyer_conflict[p]), int(f.partner_supplier_conflict[p]),
                int(f.origin_partners_2013[p]), int(f.dest_partners_2013[p]),
                ym_str(int(panel.first_trade_ym[p])),
            )
            for p, (o, d) in enumerate(panel.pairs)
        ),
    )
    cpath = outdir / "panel_cells.csv"

    def cell_rows():
        for p, (o, d) in enumerate(panel.pairs):
            for m, code in enumerate(panel.month_codes.tolist()):
                n = int(panel.n_shipments[p, m])
                yield (
                    o.firm_id, o.rayon_id, d.firm_id, d.rayon_id, ym_str(code),
                    int(n > 0), n, int(panel.weight_kg[p, m]),
                )

    write_csv(
        cpath,
        [
            "origin_firm", "origin_rayon", "dest_firm", "dest_rayon", "month",
            "any_shipment", "n_shipments", "total_weight_kg",
        ],
        cell_rows(),
    )
    return [ppath, cpath]


def _cmd_network(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    firms, records, _, _ = _load_trio(indir, cfg)
    outputs = []
    for year in cfg.window.years:
        flows = build_yearly_flows(records, firms, year)
        path = outdir / f"edges_{year}.csv"
        write_edges_csv(path, flows)
        outputs.append(path)
    return outputs


def _cmd_centrality(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    firms_path = Path(args.firms) if args.firms else indir / "firms.csv"
    firms = load_firms(_require(firms_path))
    edges = read_edges_csv(_require(indir / f"edges_{args.year}.csv"))
    graph = TradeGraph.from_edges(edges)
    conflict = frozenset(
        f.firm_id for f in firms.values() if f.conflict_flag
    ) & set(graph.nodes)
    change = predicted_centrality_change(
        graph,
        conflict,
        kind=args.kind,
        transform="log1p" if args.kind == "betweenness" else None,
        tol=cfg.economy.tol,
        max_iter=cfg.economy.max_iter,
    )
    path = outdir / f"centrality_change_{args.kind}_{args.year}.csv"
    change.to_csv(path)
    return [path]


def _revenues_by_year(accounting, universe):
    years = sorted({a.year for a in accounting})
    out = {}
    for year in years:
        totals = {}
        for a in accounting:
            if a.year == year:
                totals[a.firm_id] = totals.get(a.firm_id, 0.0) + a.sales
        out[year] = RevenueVector(
            firms=universe,
            values=np.array([totals.get(f, 0.0) for f in universe]),
            year=year,
        )
    return out


def _cmd_demand(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    firms, records, _, _ = _load_trio(indir, cfg)
    accounting, _ = load_accounting(
        _require(indir / "accounting.csv"),
        IngestConfig(window=cfg.window, strict=cfg.strict),
    )
    universe = tuple(sorted({a.firm_id for a in accounting}))
    revenues = _revenues_by_year(accounting, universe)
    outputs = []
    for year in sorted(revenues):
        flows = build_yearly_flows(records, firms, year)
        io = build_io_matrix(flows, universe, year=year)
        demand = backout_demand(io, revenues[year], cfg.economy)
        path = outdir / f"xi_{year}.csv"
        demand.to_csv(path)
        outputs.append(path)
        diag = outdir / f"xi_{year}_diagnostics.csv"
        write_csv(
            diag,
            ["metric", "value"],
            [("negative_count", demand.negative_count), ("negative_mass", demand.negative_mass)],
        )
        outputs.append(diag)
    return outputs


def _build_bundle(indir: Path, cfg: EngineConfig, sample: str):
    firms, records, _, _ = _load_trio(indir, cfg)
    accounting, _ = load_accounting(
        _require(indir / "accounting.csv"),
        IngestConfig(window=cfg.window, strict=cfg.strict),
    )
    yearly_flows = {
        year: build_yearly_flows(records, firms, year) for year in cfg.window.years
    }
    return assemble_bundle(yearly_flows, accounting, firms, sample=sample), firms, records, accounting


def _cmd_counterfactual(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    bundle, *_ = _build_bundle(indir, cfg, args.sample)
    names = PRESET_NAMES if args.preset == "all" else ("baseline", args.preset)
    results = run_presets(bundle, cfg.economy, names=tuple(dict.fromkeys(names)))
    path = outdir / "scenario_report.csv"
    write_scenario_report(path, results)
    return [path]


def _cmd_dynamics(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    bundle, *_ = _build_bundle(indir, cfg, args.sample)
    years = [y for y in cfg.window.years if y in bundle.ios]
    points = run_dynamics(bundle, years, cfg.economy)
    path = outdir / "dynamics_report.csv"
    write_dynamics_report(path, points, bundle.base_year)
    return [path]


def _cmd_did(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    if args.spec not in DID_SPECS:
        raise NetshockError(
            f"unknown spec {args.spec!r}; choose from {', '.join(sorted(DID_SPECS))}"
        )
    firms, records, _, _ = _load_trio(indir, cfg)
    level = "firm" if args.spec == "propagation-firm-level" else "establishment"
    panel = assign_treatment_flags(
        build_trade_panel(records, firms, cfg.window), firms, level=level
    )
    spec = DID_SPECS[args.spec]
    spec = PropagationSpec(
        outcome=_OUTCOME_FLAGS[args.outcome],
        degrees=spec.degrees,
        split_buyer_supplier=spec.split_buyer_supplier,
        partner_count_controls=spec.partner_count_controls,
    )
    result = did_propagation(panel, spec)
    path = outdir / "did_results.csv"
    result.to_csv(path)
    return [path]


def _cmd_aggregate(args, cfg: EngineConfig) -> list[Path]:
    indir, outdir = Path(args.input), Path(args.output)
    firms, records, _, _ = _load_trio(indir, cfg)
    accounting, _ = load_accounting(
        _require(indir / "accounting.csv"),
        IngestConfig(window=cfg.window, strict=cfg.strict),
    )
    agg = aggregate_regions(
        accounting, records, firms, level=args.level, config=cfg.economy
    )
    path = outdir / "region_report.csv"
    write_region_report(path, agg, 2013, 2014)
    tpath = outdir / "region_totals.csv"
    totals = agg.totals(2013, 2014)
    write_csv(tpath, ["metric", "value"], sorted(totals.items()))
    return [path, tpath]


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, output=True):
    p.add_argument("--config", help="key=value config file (fallback: $NETSHOCK_CONFIG)")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="worker threads (results are identical)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--window-start", dest="window_start")
    p.add_argument("--window-end", dest="window_end")
    p.add_argument("--post-start", dest="post_start")
    p.add_argument("--strict", action="store_true", default=False)
    p.add_argument("--lenient", action="store_true", default=False)
    if output:
        p.add_argument("--output", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netshock",
        description="Production-network shock analysis pipelines",
    )
    parser.add_argument("--version", action="version", version=f"netshock {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic economy and its CSV streams")
    _add_common(p)
    p.add_argument("--n-firms", dest="n_firms", type=int, default=200)
    p.add_argument("--conflict-rayons", dest="conflict_rayons", type=int, default=2)
    p.add_argument("--beta1", type=float, default=-0.131)
    p.add_argument("--beta2", type=float, default=-0.025)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("ingest", help="validate and clean the transaction stream")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("panel", help="build the balanced trade panel with treatment flags")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--level", choices=["establishment", "firm"], default="establishment")
    p.set_defaults(handler=_cmd_panel)

    p = sub.add_parser("network", help="yearly firm-level flow edge lists")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.set_defaults(handler=_cmd_network)

    p = sub.add_parser("centrality", help="removal-induced centrality change")
    _add_common(p)
    p.add_argument("--input", required=True, help="directory with edges_<year>.csv")
    p.add_argument("--firms", help="firms.csv path (default: <input>/firms.csv)")
    p.add_argument("--year", type=int, default=2013)
    p.add_argument(
        "--kind",
        choices=["degree", "indegree", "outdegree", "betweenness", "eigenvector"],
        default="eigenvector",
    )
    p.set_defaults(handler=_cmd_centrality)

    p = sub.add_parser("demand", help="back out outside demand per year")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.set_defaults(handler=_cmd_demand)

    p = sub.add_parser("counterfactual", help="run scenario presets")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--preset", choices=list(PRESET_NAMES) + ["all"], default="all")
    p.add_argument("--sample", choices=["balanced", "all-firms"], default="balanced")
    p.set_defaults(handler=_cmd_counterfactual)

    p = sub.add_parser("dynamics", help="adjustment counterfactual year by year")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--sample", choices=["balanced", "all-firms"], default="balanced")
    p.set_defaults(handler=_cmd_dynamics)

    p = sub.add_parser("did", help="difference-in-differences estimates")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--spec", default="propagation-both-degrees")
    p.add_argument("--outcome", choices=list(_OUTCOME_FLAGS), default="any")
    p.set_defaults(handler=_cmd_did)

    p = sub.add_parser("aggregate", help="region-level counterfactual totals")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--level", choices=["province", "district"], default="province")
    p.set_defaults(handler=_cmd_aggregate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = _resolve_config(args)
        outputs = args.handler(args, cfg)
        inputs = [args.input] if getattr(args, "input", None) else []
        _manifest(Path(args.output), args.command, cfg, inputs, outputs, cfg.seed, t0)
    except NetshockError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
