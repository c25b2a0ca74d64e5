"""Loader validation, panel balance, and treatment-flag semantics."""

import datetime as dt

import numpy as np
import pytest

from netshock._util import parse_ym, ym_code
from netshock.config import StudyWindow
from netshock.errors import IngestError, ReferentialError
from netshock.ingest import (
    AccountingRecord,
    Establishment,
    FirmRecord,
    IngestConfig,
    TransactionRecord,
    assign_treatment_flags,
    build_trade_panel,
    build_yearly_flows,
    conflict_exposure_features,
    conflict_rayons,
    load_accounting,
    load_firms,
    load_transactions,
)

WINDOW = StudyWindow()

FIRMS_CSV = """firm_id,rayon_id,province_id,conflict_flag
F1,R1,P1,0
F2,R2,P1,0
F3,RC,PC,1
F4,R4,P2,0
FX,EXT1,EXT,0
"""


def write_inputs(tmp_path, transactions: str, firms: str = FIRMS_CSV):
    tpath = tmp_path / "transactions.csv"
    tpath.write_text(transactions)
    fpath = tmp_path / "firms.csv"
    fpath.write_text(firms)
    return tpath, load_firms(fpath)


HEADER = "date,sender_firm_id,receiver_firm_id,sender_rayon_id,receiver_rayon_id,weight_kg\n"


class TestLoadTransactions:
    def test_direct_field_mapping(self, tmp_path):
        tpath, firms = write_inputs(tmp_path, HEADER + "2013-05-02,F1,F2,R1,R2,100000\n")
        records, report = load_transactions(tpath, IngestConfig(), conflict_rayons(firms))
        assert len(records) == 1
        rec = records[0]
        assert rec == TransactionRecord(dt.date(2013, 5, 2), "F1", "F2", "R1", "R2", 100000)
        assert report.n_loaded == 1

    def test_negative_weight_strict_names_line(self, tmp_path):
        tpath, firms = write_inputs(
            tmp_path, HEADER + "2013-05-02,F1,F2,R1,R2,100\n2013-06-01,F1,F2,R1,R2,-5\n"
        )
        with pytest.raises(IngestError, match="line 3"):
            load_transactions(tpath, IngestConfig(strict=True), conflict_rayons(firms))

    def test_negative_weight_lenient_skips_with_count(self, tmp_path):
        tpath, firms = write_inputs(
            tmp_path, HEADER + "2013-05-02,F1,F2,R1,R2,100\n2013-06-01,F1,F2,R1,R2,-5\n"
        )
        records, report = load_transactions(tpath, IngestConfig(strict=False), conflict_rayons(firms))
        assert len(records) == 1
        assert report.n_skipped == 1
        assert "line 3" in report.first_skip_reason

    def test_intra_conflict_rows_excluded_and_counted(self, tmp_path):
        tpath, firms = write_inputs(
            tmp_path,
            HEADER + "2013-05-02,F3,F3,RC,RC,100\n2013-05-03,F1,F3,R1,RC,200\n",
        )
        records, report = load_transactions(tpath, IngestConfig(), conflict_rayons(firms))
        assert report.n_excluded_intra_conflict == 1
        assert len(records) == 1
        assert records[0].receiver_rayon_id == "RC"

    def test_date_outside_window_strict(self, tmp_path):
        tpath, firms = write_inputs(tmp_path, HEADER + "2012-05-02,F1,F2,R1,R2,100\n")
        with pytest.raises(IngestError, match="outside window"):
            load_transactions(tpath, IngestConfig(strict=True), conflict_rayons(firms))

    def test_header_mismatch(self, tmp_path):
        tpath = tmp_path / "transactions.csv"
        tpath.write_text("a,b\n1,2\n")
        with pytest.raises(IngestError, match="header mismatch"):
            load_transactions(tpath, IngestConfig())

    def test_international_kept_by_default_dropped_on_flag(self, tmp_path):
        rows = HEADER + "2013-05-02,F1,FX,R1,EXT1,100\n2013-05-03,F1,F2,R1,R2,50\n"
        tpath, firms = write_inputs(tmp_path, rows)
        from netshock.ingest import rayon_provinces

        prov = rayon_provinces(firms)
        records, _ = load_transactions(tpath, IngestConfig(), conflict_rayons(firms), province_of_rayon=prov)
        assert len(records) == 2
        records, report = load_transactions(
            tpath,
            IngestConfig(drop_international=True),
            conflict_rayons(firms),
            province_of_rayon=prov,
        )
        assert len(records) == 1
        assert report.n_excluded_international == 1


class TestLoadAccounting:
    def test_valid_rows(self, tmp_path):
        path = tmp_path / "accounting.csv"
        path.write_text("firm_id,year,sales,profits,total_costs\nF1,2013,100.5,-3.0,90\n")
        records, _ = load_accounting(path, IngestConfig())
        assert records == [AccountingRecord("F1", 2013, 100.5, -3.0, 90.0)]

    def test_negative_sales_rejected(self, tmp_path):
        path = tmp_path / "accounting.csv"
        path.write_text("firm_id,year,sales,profits,total_costs\nF1,2013,-1,0,0\n")
        with pytest.raises(IngestError, match="line 2"):
            load_accounting(path, IngestConfig())


def record(ym, sender, receiver, s_rayon, r_rayon, weight=100, day=5):
    year, month = int(ym[:4]), int(ym[5:7])
    return TransactionRecord(dt.date(year, month, day), sender, receiver, s_rayon, r_rayon, weight)


FIRMS = {
    "F1": FirmRecord("F1", "R1", "P1", False),
    "F2": FirmRecord("F2", "R2", "P1", False),
    "F3": FirmRecord("F3", "RC", "PC", True),
    "F4": FirmRecord("F4", "R4", "P2", False),
    "F5": FirmRecord("F5", "R5", "P2", False),
}


class TestTradePanel:
    def test_balancing_one_shipment(self):
        panel = build_trade_panel([record("2013-05", "F1", "F2", "R1", "R2")], FIRMS, WINDOW)
        assert panel.n_pairs == 1
        assert panel.n_months == 48
        assert panel.n_cells == 48
        assert panel.n_shipments.sum() == 1
        assert panel.any_shipment().sum() == 1.0

    def test_same_month_aggregation(self):
        records = [
            record("2013-05", "F1", "F2", "R1", "R2", 1000),
            record("2013-05", "F1", "F2", "R1", "R2", 2000, day=9),
            record("2013-05", "F1", "F2", "R1", "R2", 3000, day=20),
        ]
        panel = build_trade_panel(records, FIRMS, WINDOW)
        m = list(panel.month_codes).index(ym_code(2013, 5))
        assert panel.n_shipments[0, m] == 3
        assert panel.weight_kg[0, m] == 6000

    def test_balance_invariant(self):
        records = [
            record("2013-05", "F1", "F2", "R1", "R2"),
            record("2014-07", "F2", "F1", "R2", "R1"),
            record("2015-01", "F1", "F4", "R1", "R4"),
        ]
        panel = build_trade_panel(records, FIRMS, WINDOW)
        assert panel.n_cells == panel.n_pairs * panel.n_months == 3 * 48

    def test_any_shipment_iff_positive_count_and_weight(self):
        records = [record("2013-05", "F1", "F2", "R1", "R2", 10)]
        panel = build_trade_panel(records, FIRMS, WINDOW)
        any_ = panel.n_shipments > 0
        assert ((panel.weight_kg > 0) == any_).all()

    def test_unknown_firm_listed(self):
        with pytest.raises(ReferentialError, match="F9"):
            build_trade_panel([record("2013-05", "F9", "F2", "R9", "R2")], FIRMS, WINDOW)

    def test_determinism(self):
        records = [
            record("2013-05", "F1", "F2", "R1", "R2"),
            record("2013-04", "F4", "F1", "R4", "R1"),
        ]
        a = build_trade_panel(records, FIRMS, WINDOW)
        b = build_trade_panel(list(records), FIRMS, WINDOW)
        assert a.pairs == b.pairs
        assert (a.n_shipments == b.n_shipments).all()
        assert (a.weight_kg == b.weight_kg).all()

    def test_directions_are_distinct_pairs(self):
        records = [
            record("2013-05", "F1", "F2", "R1", "R2"),
            record("2013-05", "F2", "F1", "R2", "R1"),
        ]
        panel = build_trade_panel(records, FIRMS, WINDOW)
        assert panel.n_pairs == 2

    def test_first_trade_after_post_start_still_included(self):
        panel = build_trade_panel([record("2015-05", "F1", "F2", "R1", "R2")], FIRMS, WINDOW)
        assert panel.n_pairs == 1
        assert panel.first_trade_ym[0] == parse_ym("2015-05")


class TestTreatmentFlags:
    def base_records(self):
        return [
            # F1 (R1) ships to conflict rayon before the conflict: buyer tie
            record("2013-06", "F1", "F3", "R1", "RC"),
            # the link under study: F1 -> F2, both outside conflict
            record("2013-07", "F1", "F2", "R1", "R2"),
            # conflict firm ships to F4: first-degree link
            record("2013-08", "F3", "F4", "RC", "R4"),
            # clean control pair: neither F5 nor F2 ever touches conflict areas
            record("2013-09", "F5", "F2", "R5", "R2"),
        ]

    def flagged_panel(self, level="establishment"):
        panel = build_trade_panel(self.base_records(), FIRMS, WINDOW)
        return assign_treatment_flags(panel, FIRMS, level=level)

    def pair_index(self, panel, sender, receiver):
        for p, (o, d) in enumerate(panel.pairs):
            if o.firm_id == sender and d.firm_id == receiver:
                return p
        raise AssertionError("pair not found")

    def test_conflict_endpoint_dominates(self):
        panel = self.flagged_panel()
        p = self.pair_index(panel, "F3", "F4")
        f = panel.flags
        assert f.conflict[p] and not f.partner_conflict[p]
        assert f.supplier_conflict[p] and not f.buyer_conflict[p]

    def test_second_degree_buyer_tie(self):
        panel = self.flagged_panel()
        p = self.pair_index(panel, "F1", "F2")
        f = panel.flags
        assert not f.conflict[p]
        assert f.partner_conflict[p]
        assert f.partner_buyer_conflict[p]
        assert not f.partner_supplier_conflict[p]

    def test_control_pair_unflagged(self):
        panel = self.flagged_panel()
        p = self.pair_index(panel, "F5", "F2")
        f = panel.flags
        assert not f.conflict[p] and not f.partner_conflict[p]

    def test_flag_exclusivity(self):
        f = self.flagged_panel().flags
        assert (f.conflict.astype(int) + f.partner_conflict.astype(int) <= 1).all()

    def test_tie_must_precede_cutoff(self):
        records = [
            record("2014-06", "F1", "F3", "R1", "RC"),  # tie formed after the cutoff
            record("2013-07", "F1", "F2", "R1", "R2"),
        ]
        panel = assign_treatment_flags(build_trade_panel(records, FIRMS, WINDOW), FIRMS)
        p = self.pair_index(panel, "F1", "F2")
        assert not panel.flags.partner_conflict[p]

    def test_establishment_vs_firm_level(self):
        # F1 trades with conflict areas from R9 only; the F1(R1)->F2 link is
        # second-degree treated only under firm-level aggregation
        firms = dict(FIRMS)
        records = [
            record("2013-06", "F1", "F3", "R9", "RC"),
            record("2013-07", "F1", "F2", "R1", "R2"),
        ]
        est = assign_treatment_flags(build_trade_panel(records, firms, WINDOW), firms)
        p = self.pair_index(est, "F1", "F2")
        assert not est.flags.partner_conflict[p]
        firm = assign_treatment_flags(
            build_trade_panel(records, firms, WINDOW), firms, level="firm"
        )
        assert firm.flags.partner_conflict[self.pair_index(firm, "F1", "F2")]
        assert firm.flags.level == "firm"

    def test_partner_counts_2013(self):
        panel = self.flagged_panel()
        p = self.pair_index(panel, "F1", "F2")
        # F1 traded with F3 and F2 during 2013
        assert panel.flags.origin_partners_2013[p] == 2

    def test_preconflict_end_must_precede_post(self):
        panel = build_trade_panel(self.base_records(), FIRMS, WINDOW)
        with pytest.raises(ValueError, match="precede"):
            assign_treatment_flags(panel, FIRMS, preconflict_end="2014-06")


class TestYearlyFlows:
    def test_sum_and_window(self):
        records = [
            record("2013-02", "F1", "F2", "R1", "R2", 100),
            record("2013-11", "F1", "F2", "R1", "R2", 200),
            record("2014-01", "F1", "F2", "R1", "R2", 999),
        ]
        assert build_yearly_flows(records, FIRMS, 2013) == [("F1", "F2", 300)]
        assert build_yearly_flows(records, FIRMS, 2014) == [("F1", "F2", 999)]
        assert build_yearly_flows(records, FIRMS, 2015) == []

    def test_directionality(self):
        records = [
            record("2013-02", "F1", "F2", "R1", "R2", 100),
            record("2013-03", "F2", "F1", "R2", "R1", 50),
        ]
        assert build_yearly_flows(records, FIRMS, 2013) == [("F1", "F2", 100), ("F2", "F1", 50)]

    def test_monthly_totals_match_yearly_flows(self):
        rng = np.random.default_rng(3)
        firm_list = list(FIRMS)
        records = []
        for _ in range(200):
            s, r = rng.choice(firm_list, size=2, replace=False)
            month = int(rng.integers(1, 13))
            records.append(
                record(f"2013-{month:02d}", s, r, FIRMS[s].rayon_id, FIRMS[r].rayon_id, int(rng.integers(1, 500)))
            )
        panel = build_trade_panel(records, FIRMS, WINDOW)
        flows = dict(
            ((i, j), w) for i, j, w in build_yearly_flows(records, FIRMS, 2013)
        )
        cal = (panel.month_codes >= ym_code(2013, 1)) & (panel.month_codes <= ym_code(2013, 12))
        totals: dict = {}
        for p, (o, d) in enumerate(panel.pairs):
            key = (o.firm_id, d.firm_id)
            totals[key] = totals.get(key, 0) + int(panel.weight_kg[p, cal].sum())
        assert totals == flows


def test_conflict_exposure_features():
    records = [
        record("2013-06", "F1", "F3", "R1", "RC", 300),
        record("2013-07", "F1", "F2", "R1", "R2", 100),
        record("2013-08", "F4", "F1", "R4", "R1", 100),
    ]
    feats = conflict_exposure_features(records, FIRMS).set_index("firm_id")
    assert feats.loc["F1", "traded_with_conflict"] == 1.0
    assert feats.loc["F1", "conflict_weight_share"] == pytest.approx(300 / 500)
    assert feats.loc["F1", "conflict_sales_share"] == pytest.approx(300 / 400)
    assert feats.loc["F2", "traded_with_conflict"] == 0.0
    # F4's only partner is F1, whose preconflict conflict weight is 300
    assert feats.loc["F4", "partner_conflict_weight"] == pytest.approx(300.0)
