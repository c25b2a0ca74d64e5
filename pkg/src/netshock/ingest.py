"""CSV ingestion, trade-panel construction, and conflict treatment flags.

Input formats (headers mandatory, comma-separated, UTF-8, ISO-8601 dates):

    transactions.csv  date,sender_firm_id,receiver_firm_id,sender_rayon_id,receiver_rayon_id,weight_kg
    firms.csv         firm_id,rayon_id,province_id,conflict_flag
    accounting.csv    firm_id,year,sales,profits,total_costs

The panel node is the establishment: a (firm_id, rayon_id) pair taken from
the transaction endpoints, so one firm may appear at several locations.
International counterparts are marked by province id ``EXT`` in firms.csv;
they are kept unless the config says otherwise.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

from ._util import parse_ym, ym_code, ym_str
from .config import StudyWindow
from .errors import IngestError, ReferentialError

TRANSACTIONS_HEADER = [
    "date",
    "sender_firm_id",
    "receiver_firm_id",
    "sender_rayon_id",
    "receiver_rayon_id",
    "weight_kg",
]
FIRMS_HEADER = ["firm_id", "rayon_id", "province_id", "conflict_flag"]
ACCOUNTING_HEADER = ["firm_id", "year", "sales", "profits", "total_costs"]

INTERNATIONAL_PROVINCE = "EXT"


@dataclass(frozen=True)
class TransactionRecord:
    date: dt.date
    sender_firm_id: str
    receiver_firm_id: str
    sender_rayon_id: str
    receiver_rayon_id: str
    weight_kg: int


@dataclass(frozen=True)
class FirmRecord:
    firm_id: str
    rayon_id: str
    province_id: str
    conflict_flag: bool


@dataclass(frozen=True)
class AccountingRecord:
    firm_id: str
    year: int
    sales: float
    profits: float
    total_costs: float


@dataclass(frozen=True)
class Establishment:
    firm_id: str
    rayon_id: str


@dataclass(frozen=True)
class IngestConfig:
    window: StudyWindow = field(default_factory=StudyWindow)
    strict: bool = True
    drop_international: bool = False


@dataclass
class LoadReport:
    """Counters emitted by the loaders (lenient-mode skips, exclusions)."""

    n_rows: int = 0
    n_loaded: int = 0
    n_skipped: int = 0
    n_excluded_intra_conflict: int = 0
    n_excluded_international: int = 0
    first_skip_reason: str = ""


def load_firms(path: str | Path) -> dict[str, FirmRecord]:
    """Load the firm registry; firm ids must be unique."""
    from ._util import read_csv_rows

    firms: dict[str, FirmRecord] = {}
    for lineno, row in read_csv_rows(path, FIRMS_HEADER):
        fid = row["firm_id"].strip()
        if not fid:
            raise IngestError(f"{path} line {lineno}: empty firm_id")
        if fid in firms:
            raise IngestError(f"{path} line {lineno}: duplicate firm_id {fid!r}")
        flag_raw = row["conflict_flag"].strip().lower()
        if flag_raw not in ("0", "1", "true", "false"):
            raise IngestError(
                f"{path} line {lineno}: conflict_flag must be 0/1/true/false, got {flag_raw!r}"
            )
        firms[fid] = FirmRecord(
            firm_id=fid,
            rayon_id=row["rayon_id"].strip(),
            province_id=row["province_id"].strip(),
            conflict_flag=flag_raw in ("1", "true"),
        )
    return firms


def conflict_rayons(firms: dict[str, FirmRecord]) -> frozenset[str]:
    """Rayons hosting conflict-flagged firms; conflict status is geographic."""
    return frozenset(f.rayon_id for f in firms.values() if f.conflict_flag)


def rayon_provinces(firms: dict[str, FirmRecord]) -> dict[str, str]:
    return {f.rayon_id: f.province_id for f in firms.values()}


def load_transactions(
    path: str | Path,
    config: IngestConfig,
    conflict_rayon_ids: frozenset[str] = frozenset(),
    international_provinces: frozenset[str] = frozenset({INTERNATIONAL_PROVINCE}),
    province_of_rayon: dict[str, str] | None = None,
) -> tuple[list[TransactionRecord], LoadReport]:
    """Parse shipment rows, dropping shipments fully inside conflict territory.

    Rows whose sender and receiver rayons are both conflict-flagged are
    excluded and counted (their reporting cannot be trusted once the conflict
    starts).  In strict mode the first malformed row raises an IngestError
    naming the line; in lenient mode bad rows are skipped and counted.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"transactions file not found: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != TRANSACTIONS_HEADER:
        raise IngestError(
            f"{path}: header mismatch, expected {','.join(TRANSACTIONS_HEADER)} "
            f"got {','.join(df.columns)}"
        )
    report = LoadReport(n_rows=len(df))
    if len(df) == 0:
        return [], report

    lines = df.index.to_numpy() + 2  # header is line 1

    dates = pd.to_datetime(df["date"], format="%Y-%m-%d", errors="coerce")
    weight_ok = df["weight_kg"].str.fullmatch(r"\d+")
    ids_ok = (
        (df["sender_firm_id"].str.len() > 0)
        & (df["receiver_firm_id"].str.len() > 0)
        & (df["sender_rayon_id"].str.len() > 0)
        & (df["receiver_rayon_id"].str.len() > 0)
    )
    in_window = dates.notna() & dates.dt.date.map(config.window.contains_date)

    bad = ~(dates.notna() & weight_ok & ids_ok & in_window)
    if bad.any():
        first = int(np.argmax(bad.to_numpy()))
        if dates.isna().iloc[first]:
            reason = f"unparseable date {df['date'].iloc[first]!r}"
        elif not weight_ok.iloc[first]:
            reason = f"weight_kg must be a non-negative integer, got {df['weight_kg'].iloc[first]!r}"
        elif not ids_ok.iloc[first]:
            reason = "empty id field"
        else:
            reason = f"date {df['date'].iloc[first]} outside window {config.window.describe()}"
        if config.strict:
            raise IngestError(f"{path} line {lines[first]}: {reason}")
        report.n_skipped = int(bad.sum())
        report.first_skip_reason = f"line {lines[first]}: {reason}"
        df = df[~bad]
        dates = dates[~bad]

    sender_conflict = df["sender_rayon_id"].isin(conflict_rayon_ids)
    receiver_conflict = df["receiver_rayon_id"].isin(conflict_rayon_ids)
    intra = (sender_conflict & receiver_conflict).to_numpy()
    report.n_excluded_intra_conflict = int(intra.sum())

    keep = ~intra
    if config.drop_international:
        prov = province_of_rayon or {}
        intl = (
            df["sender_rayon_id"].map(lambda r: prov.get(r, "")).isin(international_provinces)
            | df["receiver_rayon_id"].map(lambda r: prov.get(r, "")).isin(international_provinces)
        ).to_numpy()
        report.n_excluded_international = int((intl & keep).sum())
        keep &= ~intl

    df = df[keep]
    dates = dates[keep]
    records = [
        TransactionRecord(
            date=d.date(),
            sender_firm_id=sf,
            receiver_firm_id=rf,
            sender_rayon_id=sr,
            receiver_rayon_id=rr,
            weight_kg=int(w),
        )
        for d, sf, rf, sr, rr, w in zip(
            dates,
            df["sender_firm_id"],
            df["receiver_firm_id"],
            df["sender_rayon_id"],
            df["receiver_rayon_id"],
            df["weight_kg"],
        )
    ]
    report.n_loaded = len(records)
    return records, report


def load_accounting(path: str | Path, config: IngestConfig) -> tuple[list[AccountingRecord], LoadReport]:
    """Load yearly firm accounts; sales and total costs must be non-negative."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"accounting file not found: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != ACCOUNTING_HEADER:
        raise IngestError(
            f"{path}: header mismatch, expected {','.join(ACCOUNTING_HEADER)} "
            f"got {','.join(df.columns)}"
        )
    report = LoadReport(n_rows=len(df))
    if len(df) == 0:
        return [], report
    lines = df.index.to_numpy() + 2

    year = pd.to_numeric(df["year"], errors="coerce")
    sales = pd.to_numeric(df["sales"], errors="coerce")
    profits = pd.to_numeric(df["profits"], errors="coerce")
    costs = pd.to_numeric(df["total_costs"], errors="coerce")
    years_ok = year.notna() & year.isin(config.window.years)
    ok = (
        (df["firm_id"].str.len() > 0)
        & years_ok
        & sales.notna()
        & (sales >= 0)
        & profits.notna()
        & costs.notna()
        & (costs >= 0)
    )
    bad = ~ok
    if bad.any():
        first = int(np.argmax(bad.to_numpy()))
        reason = f"invalid accounting row {dict(df.iloc[first])}"
        if config.strict:
            raise IngestError(f"{path} line {lines[first]}: {reason}")
        report.n_skipped = int(bad.sum())
        report.first_skip_reason = f"line {lines[first]}: {reason}"
        df, year, sales, profits, costs = (
            x[ok] for x in (df, year, sales, profits, costs)
        )
    records = [
        AccountingRecord(fid, int(y), float(s), float(p), float(c))
        for fid, y, s, p, c in zip(df["firm_id"], year, sales, profits, costs)
    ]
    report.n_loaded = len(records)
    return records, report


# ---------------------------------------------------------------------------
# Trade panel
# ---------------------------------------------------------------------------


@dataclass
class PairFlags:
    """Per-pair-direction treatment flags and covariates.

    All arrays are aligned with TradePanel.pairs.  `level` records whether
    the second-degree flags were computed per establishment (a firm location
    must itself have traded with conflict areas) or per firm (any location
    of the firm counts).
    """

    level: str
    preconflict_end: int
    conflict: np.ndarray
    partner_conflict: np.ndarray
    buyer_conflict: np.ndarray
    supplier_conflict: np.ndarray
    partner_buyer_conflict: np.ndarray
    partner_supplier_conflict: np.ndarray
    both_conflict: np.ndarray
    origin_partners_2013: np.ndarray
    dest_partners_2013: np.ndarray


@dataclass
class TradePanel:
    """Balanced establishment-pair-direction x year-month panel.

    Cell data are dense (n_pairs, n_months) integer matrices; the balance
    invariant |cells| = pairs x months holds by construction.  Instances are
    treated as immutable: flag assignment returns a new panel.
    """

    pairs: list[tuple[Establishment, Establishment]]
    month_codes: np.ndarray  # (M,)
    n_shipments: np.ndarray  # (P, M) int64
    weight_kg: np.ndarray  # (P, M) int64
    window: StudyWindow
    origin_province: np.ndarray  # (P,) object
    dest_province: np.ndarray  # (P,) object
    first_trade_ym: np.ndarray  # (P,) int
    flags: PairFlags | None = None

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def n_months(self) -> int:
        return len(self.month_codes)

    @property
    def n_cells(self) -> int:
        return self.n_pairs * self.n_months

    def any_shipment(self) -> np.ndarray:
        return (self.n_shipments > 0).astype(np.float64)

    def log1p_shipments(self) -> np.ndarray:
        return np.log1p(self.n_shipments.astype(np.float64))

    def log1p_weight(self) -> np.ndarray:
        return np.log1p(self.weight_kg.astype(np.float64))

    def post_mask(self) -> np.ndarray:
        return self.month_codes >= self.window.post_start_code


def build_trade_panel(
    records: list[TransactionRecord],
    firms: dict[str, FirmRecord],
    window: StudyWindow,
) -> TradePanel:
    """Aggregate shipments to monthly cells, balanced over the window.

    The pair universe is every pair-direction with at least one shipment
    anywhere in the window; each gets a cell for every month.  Unknown firm
    ids are a referential error listing the offenders.
    """
    unknown = sorted(
        {r.sender_firm_id for r in records if r.sender_firm_id not in firms}
        | {r.receiver_firm_id for r in records if r.receiver_firm_id not in firms}
    )
    if unknown:
        raise ReferentialError(
            f"firm ids not in firm registry: {', '.join(unknown[:20])}"
            + (f" (+{len(unknown) - 20} more)" if len(unknown) > 20 else "")
        )

    month_codes = np.array(window.month_codes, dtype=np.int64)
    m_index = {code: i for i, code in enumerate(month_codes)}
    prov = rayon_provinces(firms)

    pair_keys: dict[tuple[str, str, str, str], int] = {}
    pair_rows: list[tuple[str, str, str, str]] = []
    cell_pair: list[int] = []
    cell_month: list[int] = []
    cell_weight: list[int] = []
    for r in records:
        key = (r.sender_firm_id, r.sender_rayon_id, r.receiver_firm_id, r.receiver_rayon_id)
        pid = pair_keys.get(key)
        if pid is None:
            pid = len(pair_rows)
            pair_keys[key] = pid
            pair_rows.append(key)
        cell_pair.append(pid)
        cell_month.append(m_index[ym_code(r.date.year, r.date.month)])
        cell_weight.append(r.weight_kg)

    order = sorted(range(len(pair_rows)), key=lambda i: pair_rows[i])
    remap = np.empty(len(pair_rows), dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
    pair_rows = [pair_rows[i] for i in order]

    n_pairs, n_months = len(pair_rows), len(month_codes)
    n_ship = np.zeros((n_pairs, n_months), dtype=np.int64)
    weight = np.zeros((n_pairs, n_months), dtype=np.int64)
    if cell_pair:
        pidx = remap[np.asarray(cell_pair, dtype=np.int64)]
        midx = np.asarray(cell_month, dtype=np.int64)
        np.add.at(n_ship, (pidx, midx), 1)
        np.add.at(weight, (pidx, midx), np.asarray(cell_weight, dtype=np.int64))

    pairs = [
        (Establishment(sf, sr), Establishment(rf, rr)) for sf, sr, rf, rr in pair_rows
    ]
    origin_province = np.array([prov.get(sr, sr) for _, sr, _, _ in pair_rows], dtype=object)
    dest_province = np.array([prov.get(rr, rr) for _, _, _, rr in pair_rows], dtype=object)
    active = n_ship > 0
    first_trade = np.where(
        active.any(axis=1), month_codes[np.argmax(active, axis=1)], -1
    )

    return TradePanel(
        pairs=pairs,
        month_codes=month_codes,
        n_shipments=n_ship,
        weight_kg=weight,
        window=window,
        origin_province=origin_province,
        dest_province=dest_province,
        first_trade_ym=first_trade,
    )


def assign_treatment_flags(
    panel: TradePanel,
    firms: dict[str, FirmRecord],
    preconflict_end: str | None = None,
    level: str = "establishment",
) -> TradePanel:
    """Attach first- and second-degree conflict flags to every pair-direction.

    Conflict = either endpoint sits in a conflict rayon.  PartnerConflict =
    neither endpoint is in a conflict rayon but one of them shipped to or
    received from a conflict rayon during the preconflict window, from the
    same location it uses on this link (establishment level) or from any of
    the firm's locations (`level="firm"`).  Buyer/supplier variants split by
    the direction of the preconflict conflict tie.
    """
    if level not in ("establishment", "firm"):
        raise ValueError(f"level must be establishment|firm, got {level!r}")
    pre_end = (
        parse_ym(preconflict_end) if preconflict_end is not None
        else panel.window.preconflict_end_code
    )
    if pre_end >= panel.window.post_start_code:
        raise ValueError(
            f"preconflict_end {ym_str(pre_end)} must precede the post period "
            f"{panel.window.post_start}"
        )

    cr = conflict_rayons(firms)
    P = panel.n_pairs
    origin_conf = np.array([o.rayon_id in cr for o, _ in panel.pairs])
    dest_conf = np.array([d.rayon_id in cr for _, d in panel.pairs])

    pre_cols = panel.month_codes <= pre_end
    pre_active = panel.n_shipments[:, pre_cols].sum(axis=1) > 0

    # Establishment-level preconflict ties to conflict rayons.
    buyer_tie: set = set()  # establishment had a buyer in a conflict rayon
    supplier_tie: set = set()
    cal_2013 = (panel.month_codes >= ym_code(2013, 1)) & (panel.month_codes <= ym_code(2013, 12))
    active_2013 = panel.n_shipments[:, cal_2013].sum(axis=1) > 0 if cal_2013.any() else np.zeros(P, bool)
    partners_2013: dict = {}
    for p, (o, d) in enumerate(panel.pairs):
        if pre_active[p]:
            if dest_conf[p]:
                buyer_tie.add(o)
            if origin_conf[p]:
                supplier_tie.add(d)
        if active_2013[p]:
            partners_2013.setdefault(o, set()).add(d)
            partners_2013.setdefault(d, set()).add(o)

    if level == "firm":
        buyer_firms = {e.firm_id for e in buyer_tie}
        supplier_firms = {e.firm_id for e in supplier_tie}

        def has_buyer_tie(e: Establishment) -> bool:
            return e.firm_id in buyer_firms

        def has_supplier_tie(e: Establishment) -> bool:
            return e.firm_id in supplier_firms

    else:

        def has_buyer_tie(e: Establishment) -> bool:
            return e in buyer_tie

        def has_supplier_tie(e: Establishment) -> bool:
            return e in supplier_tie

    conflict = origin_conf | dest_conf
    pb = np.zeros(P, dtype=bool)
    ps = np.zeros(P, dtype=bool)
    for p, (o, d) in enumerate(panel.pairs):
        if conflict[p]:
            continue
        pb[p] = has_buyer_tie(o) or has_buyer_tie(d)
        ps[p] = has_supplier_tie(o) or has_supplier_tie(d)
    partner_conflict = pb | ps

    flags = PairFlags(
        level=level,
        preconflict_end=pre_end,
        conflict=conflict,
        partner_conflict=partner_conflict,
        buyer_conflict=dest_conf.copy(),
        supplier_conflict=origin_conf.copy(),
        partner_buyer_conflict=pb,
        partner_supplier_conflict=ps,
        both_conflict=origin_conf & dest_conf,
        origin_partners_2013=np.array(
            [len(partners_2013.get(o, ())) for o, _ in panel.pairs], dtype=np.int64
        ),
        dest_partners_2013=np.array(
            [len(partners_2013.get(d, ())) for _, d in panel.pairs], dtype=np.int64
        ),
    )
    return replace(panel, flags=flags)


def build_yearly_flows(
    records: list[TransactionRecord],
    firms: dict[str, FirmRecord],
    year: int,
) -> list[tuple[str, str, int]]:
    """Firm-level directed flows for one calendar year, ordered by (i, j)."""
    unknown = sorted(
        {r.sender_firm_id for r in records if r.sender_firm_id not in firms}
        | {r.receiver_firm_id for r in records if r.receiver_firm_id not in firms}
    )
    if unknown:
        raise ReferentialError(f"firm ids not in firm registry: {', '.join(unknown[:20])}")
    totals: dict[tuple[str, str], int] = {}
    for r in records:
        if r.date.year != year:
            continue
        key = (r.sender_firm_id, r.receiver_firm_id)
        totals[key] = totals.get(key, 0) + r.weight_kg
    return [(i, j, w) for (i, j), w in sorted(totals.items())]


def conflict_exposure_features(
    records: list[TransactionRecord],
    firms: dict[str, FirmRecord],
    preconflict_end: str = "2014-02",
) -> pd.DataFrame:
    """Per-firm baseline exposure to conflict areas, for residualization.

    Columns: traded_with_conflict (0/1), conflict_weight_share (share of the
    firm's preconflict transaction weight with conflict rayons), conflict
    sales share (outbound weight share to conflict rayons), and
    partner_conflict_weight (total preconflict conflict-trade weight of the
    firm's partners).
    """
    cr = conflict_rayons(firms)
    cutoff = parse_ym(preconflict_end)

    total_w: dict[str, float] = {}
    conf_w: dict[str, float] = {}
    out_w: dict[str, float] = {}
    out_conf_w: dict[str, float] = {}
    partners: dict[str, set[str]] = {}
    for r in records:
        if ym_code(r.date.year, r.date.month) > cutoff:
            continue
        s, d, w = r.sender_firm_id, r.receiver_firm_id, float(r.weight_kg)
        total_w[s] = total_w.get(s, 0.0) + w
        total_w[d] = total_w.get(d, 0.0) + w
        out_w[s] = out_w.get(s, 0.0) + w
        if r.receiver_rayon_id in cr:
            conf_w[s] = conf_w.get(s, 0.0) + w
            out_conf_w[s] = out_conf_w.get(s, 0.0) + w
        if r.sender_rayon_id in cr:
            conf_w[d] = conf_w.get(d, 0.0) + w
        partners.setdefault(s, set()).add(d)
        partners.setdefault(d, set()).add(s)

    rows = []
    for fid in sorted(total_w):
        share = conf_w.get(fid, 0.0) / total_w[fid] if total_w[fid] > 0 else 0.0
        sales_share = out_conf_w.get(fid, 0.0) / out_w[fid] if out_w.get(fid, 0.0) > 0 else 0.0
        partner_weight = sum(conf_w.get(p, 0.0) for p in partners.get(fid, ()))
        rows.append(
            (fid, float(share > 0), share, sales_share, partner_weight)
        )
    return pd.DataFrame(
        rows,
        columns=[
            "firm_id",
            "traded_with_conflict",
            "conflict_weight_share",
            "conflict_sales_share",
            "partner_conflict_weight",
        ],
    )
