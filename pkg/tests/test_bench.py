import csv
import io
import json
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from srfmbench.bench import (
    CampaignError,
    METRIC_COLUMNS,
    render_report,
    rows_csv,
    run_campaign,
    scenario_svg,
    table_text,
)
from srfmbench.sim import SimConfig


@pytest.fixture(scope="module")
def small_campaign(params_module=None):
    from srfmbench.forces import SrfmParams

    cfg = SimConfig(params=SrfmParams(), max_steps=200)
    return run_campaign(["footpath", "crosswalk"], ["goal_seek", "dwa"],
                        n_runs=3, base_seed=11, config=cfg, workers=1)


class TestRunCampaign:
    def test_single_run_finite(self):
        cfg = SimConfig(max_steps=200)
        campaign = run_campaign(["footpath"], ["goal_seek"], n_runs=1,
                                base_seed=0, config=cfg)
        (row,) = campaign.rows
        assert not row.aborted
        for m in METRIC_COLUMNS:
            assert math.isfinite(getattr(row, m))

    def test_deterministic_with_pool(self):
        cfg = SimConfig(max_steps=150)
        kwargs = dict(n_runs=2, base_seed=3, config=cfg)
        a = run_campaign(["footpath"], ["goal_seek", "vo"], workers=2, **kwargs)
        b = run_campaign(["footpath"], ["goal_seek", "vo"], workers=1, **kwargs)
        assert rows_csv(a) == rows_csv(b)

    def test_seeds_recorded(self, small_campaign):
        seeds = {r.seed for r in small_campaign.rows}
        assert seeds == {11, 12, 13}

    def test_self_comparison_not_significant(self):
        cfg = SimConfig(max_steps=150)
        campaign = run_campaign(["footpath"], ["goal_seek", "twin=goal_seek"],
                                n_runs=3, base_seed=5, config=cfg)
        sig = campaign.significance()
        for metric, cell in sig["footpath"]["twin"].items():
            assert not cell["significant"]
            assert cell["t"] == 0.0 or math.isnan(cell["t"])

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            run_campaign(["footpath"], ["goal_seek", "goal_seek"], n_runs=1)

    def test_unknown_reference(self):
        with pytest.raises(ValueError):
            run_campaign(["footpath"], ["goal_seek"], n_runs=1,
                         reference="dwa")

    def test_aborts_fail_campaign(self):
        cfg = SimConfig(max_steps=50)
        with pytest.raises(CampaignError) as err:
            run_campaign(["footpath"], ["goal_seek", "external:127.0.0.1:1"],
                         n_runs=2, base_seed=0, config=cfg)
        campaign = err.value.campaign
        assert campaign is not None
        assert campaign.aborted_fraction == 0.5
        aborted = [r for r in campaign.rows if r.aborted]
        assert all(r.policy == "external:127.0.0.1:1" for r in aborted)
        assert all(r.error for r in aborted)


class TestAggregates:
    def test_means_match_csv_rows(self, small_campaign):
        agg = small_campaign.aggregates()
        reader = csv.DictReader(io.StringIO(rows_csv(small_campaign)))
        by_cell = {}
        for row in reader:
            key = (row["scenario"], row["policy"])
            by_cell.setdefault(key, []).append(float(row["frechet_mean"]))
        for (scenario, policy), vals in by_cell.items():
            assert math.isclose(agg[scenario][policy]["frechet_mean"]["mean"],
                                float(np.mean(vals)), rel_tol=1e-12)

    def test_outcome_counts(self, small_campaign):
        agg = small_campaign.aggregates()
        for s in small_campaign.scenarios:
            for p in small_campaign.policies:
                oc = agg[s][p]["outcomes"]
                assert sum(oc.values()) == 3


class TestRendering:
    def test_report_files(self, tmp_path, small_campaign):
        paths = render_report(small_campaign, tmp_path / "report")
        for key in ("csv", "json", "table", "svg_footpath", "svg_crosswalk"):
            assert paths[key].exists()

    def test_summary_json_round_trip(self, tmp_path, small_campaign):
        paths = render_report(small_campaign, tmp_path / "report")
        loaded = json.loads(paths["json"].read_text())
        assert loaded == json.loads(json.dumps(small_campaign.to_summary_dict()))

    def test_svg_well_formed(self, small_campaign):
        for s in small_campaign.scenarios:
            root = ET.fromstring(scenario_svg(small_campaign, s))
            assert root.tag.endswith("svg")
            polylines = [el for el in root.iter()
                         if el.tag.endswith("polyline")]
            assert polylines, "expected trajectory polylines"

    def test_table_has_all_cells(self, small_campaign):
        text = table_text(small_campaign)
        for s in small_campaign.scenarios:
            assert s in text
        for p in small_campaign.policies:
            assert p in text
        assert "+-" in text

    def test_empty_campaign_errors(self, tmp_path, small_campaign):
        from srfmbench.bench import Campaign

        empty = Campaign(scenarios=[], policies=[], n_runs=0, base_seed=0,
                         reference="x", rows=[])
        with pytest.raises(ValueError):
            render_report(empty, tmp_path / "nothing")
