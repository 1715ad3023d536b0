"""Site-based risk rules: percent-change metrics and rule evaluation."""

import json

import numpy as np
import pytest

from cloudresp.errors import EmptySiteError, FormatError, InvalidArgumentError
from cloudresp.grid import get_grid
from cloudresp.intervention import ResponseBundle
from cloudresp.tipping import (
    DEFAULT_EPS,
    TippingRule,
    TippingSite,
    assess,
    default_sites,
    haversine_km,
    load_sites,
    site_metrics,
    site_vertices,
)


def make_bundle(before, after):
    before = np.asarray(before, dtype=np.float64)
    after = np.asarray(after, dtype=np.float64)
    return ResponseBundle(before=before, after=after,
                          diff=after - before, per_lag={})


def simple_site(site_id="s", lat=0.0, lon=0.0, radius_km=2500.0,
                rules=None, combine="any"):
    rules = rules or (TippingRule("tas", ">", 10.0),)
    return TippingSite(id=site_id, display_name=site_id, center=(lat, lon),
                       radius_km=radius_km, rules=tuple(rules), combine=combine)


class TestGeometry:
    def test_haversine_known_distances(self):
        # quarter of the circumference between pole and equator
        assert haversine_km(90.0, 0.0, 0.0, 0.0) == pytest.approx(
            np.pi / 2 * 6371.0, abs=1e-6)
        # antipodal points: half the circumference
        assert haversine_km(0.0, 0.0, 0.0, 180.0) == pytest.approx(
            np.pi * 6371.0, abs=1e-6)
        assert haversine_km(35.0, -120.0, 35.0, -120.0) == 0.0

    def test_site_vertices_brute_force(self):
        mesh = get_grid(2)
        site = simple_site(lat=-10.0, lon=40.0, radius_km=3000.0)
        members = site_vertices(site, mesh)
        for v in range(mesh.n_vertices):
            d = haversine_km(mesh.lat[v], mesh.lon[v], -10.0, 40.0)
            assert (v in members) == (d <= 3000.0)

    def test_empty_site_names_site_and_level(self):
        site = simple_site(site_id="tiny", radius_km=1.0)
        with pytest.raises(EmptySiteError, match="tiny.*level 1"):
            site_vertices(site, get_grid(1))


class TestMetrics:
    def test_no_change_gives_zero(self):
        mesh = get_grid(1)
        x = np.random.default_rng(0).standard_normal((3, mesh.n_vertices))
        pct = site_metrics(make_bundle(x, x), simple_site(), mesh)
        assert all(v == 0.0 for v in pct.values())

    def test_uniform_fifty_percent_increase(self):
        mesh = get_grid(1)
        # baseline 20 sits above every per-variable denominator floor
        before = np.full((3, mesh.n_vertices), 20.0)
        after = np.full((3, mesh.n_vertices), 30.0)
        pct = site_metrics(make_bundle(before, after), simple_site(), mesh)
        for var in ("psl", "pr", "tas"):
            assert abs(pct[var] - 50.0) < 1e-9

    def test_matches_brute_force_loop(self):
        mesh = get_grid(2)
        rng = np.random.default_rng(1)
        before = rng.standard_normal((3, mesh.n_vertices)) * 5.0
        after = before + rng.standard_normal((3, mesh.n_vertices))
        site = simple_site(lat=30.0, lon=-100.0, radius_km=2800.0)
        pct = site_metrics(make_bundle(before, after), site, mesh)
        members = site_vertices(site, mesh)
        for i, var in enumerate(("psl", "pr", "tas")):
            num = den = 0.0
            for v in members:
                num += mesh.area_weights[v] * after[i, v]
                den += mesh.area_weights[v]
            a = num / den
            num = 0.0
            for v in members:
                num += mesh.area_weights[v] * before[i, v]
            b = num / den
            expect = 100.0 * (a - b) / max(abs(b), DEFAULT_EPS[var])
            assert abs(pct[var] - expect) < 1e-9

    def test_eps_floor_guards_small_baseline(self):
        mesh = get_grid(1)
        before = np.zeros((3, mesh.n_vertices))
        after = np.zeros((3, mesh.n_vertices))
        after[2] = 0.025  # tas: |baseline| 0 floored at 0.05
        pct = site_metrics(make_bundle(before, after), simple_site(), mesh)
        assert pct["tas"] == pytest.approx(100.0 * 0.025 / 0.05, abs=1e-12)

    def test_percent_monotone_under_scaling(self):
        mesh = get_grid(1)
        before = np.full((3, mesh.n_vertices), 2.0)
        site = simple_site()
        last = 0.0
        for scale in (0.1, 0.5, 1.0, 2.0):
            after = before + scale
            pct = site_metrics(make_bundle(before, after), site, mesh)
            assert pct["tas"] > last
            last = pct["tas"]


class TestRules:
    def test_strict_comparison_at_threshold(self):
        rule = TippingRule("tas", ">", 25.0)
        assert not rule.fires(25.0)
        assert rule.fires(25.0 + 1e-12)
        low = TippingRule("pr", "<", -25.0)
        assert not low.fires(-25.0)
        assert low.fires(-25.0 - 1e-12)

    def test_zero_diff_all_green_default_sites(self):
        mesh = get_grid(2)
        x = np.random.default_rng(2).standard_normal((3, mesh.n_vertices))
        results = assess(make_bundle(x, x), default_sites(), mesh)
        assert len(results) == 7
        assert all(not r.at_risk for r in results)
        assert all(r.triggered_rules == () for r in results)

    def test_single_site_trigger(self):
        mesh = get_grid(2)
        sites = default_sites()
        target = sites[0]
        members = site_vertices(target, mesh)
        # make sure the crafted bump stays outside every other site footprint
        others = set()
        for s in sites[1:]:
            others.update(site_vertices(s, mesh).tolist())
        only_mine = [v for v in members if v not in others]
        assert only_mine, "need a vertex exclusive to the first site"
        rule = target.rules[0]
        i = ("psl", "pr", "tas").index(rule.variable)
        before = np.full((3, mesh.n_vertices), 1.0)
        after = before.copy()
        w = mesh.area_weights[members]
        frac = mesh.area_weights[only_mine].sum() / w.sum()
        denom = max(1.0, DEFAULT_EPS[rule.variable])
        bump = denom * (abs(rule.threshold_percent) + 50.0) / 100.0 / frac
        sign = 1.0 if rule.comparator == ">" else -1.0
        for v in only_mine:
            after[i, v] += sign * bump
        results = assess(make_bundle(before, after), sites, mesh)
        flags = [r.at_risk for r in results]
        assert flags == [True] + [False] * 6
        assert rule in results[0].triggered_rules

    def test_combine_any_vs_all(self):
        mesh = get_grid(1)
        rules = (TippingRule("tas", ">", 10.0), TippingRule("pr", ">", 10.0))
        before = np.full((3, mesh.n_vertices), 1.0)
        after = before.copy()
        after[2] += 0.5  # tas +50%, pr unchanged
        bundle = make_bundle(before, after)
        any_site = simple_site(rules=rules, combine="any")
        all_site = simple_site(rules=rules, combine="all")
        res = assess(bundle, [any_site, all_site], mesh)
        assert res[0].at_risk and not res[1].at_risk
        after[1] += 0.5  # now pr +50% too
        res = assess(make_bundle(before, after), [all_site], mesh)
        assert res[0].at_risk

    def test_assessment_to_dict(self):
        mesh = get_grid(1)
        x = np.zeros((3, mesh.n_vertices))
        res = assess(make_bundle(x, x), [simple_site()], mesh)
        d = res[0].to_dict()
        assert d["site_id"] == "s"
        assert d["at_risk"] is False
        assert set(d["percent_change"]) == {"psl", "pr", "tas"}

    def test_rule_validation(self):
        with pytest.raises(InvalidArgumentError):
            TippingRule("wind", ">", 1.0)
        with pytest.raises(InvalidArgumentError):
            TippingRule("tas", ">=", 1.0)
        with pytest.raises(InvalidArgumentError):
            TippingRule("tas", ">", np.nan)

    def test_site_validation(self):
        with pytest.raises(InvalidArgumentError):
            simple_site(radius_km=0.0)
        with pytest.raises(InvalidArgumentError):
            TippingSite(id="x", display_name="x", center=(0, 0),
                        radius_km=100.0, rules=(), combine="any")
        with pytest.raises(InvalidArgumentError):
            simple_site(combine="majority")


class TestConfiguration:
    def test_default_sites_has_seven(self):
        sites = default_sites()
        assert len(sites) == 7
        assert len({s.id for s in sites}) == 7

    def test_load_sites_round_trip(self, tmp_path):
        sites = [simple_site("a", 10, 20), simple_site("b", -30, 100)]
        doc = {"schema_version": 1, "sites": [s.to_dict() for s in sites]}
        p = tmp_path / "sites.json"
        p.write_text(json.dumps(doc), encoding="utf-8")
        back = load_sites(p)
        assert back == sites

    def test_load_sites_schema_error(self, tmp_path):
        p = tmp_path / "sites.json"
        p.write_text(json.dumps({"schema_version": 99, "sites": []}))
        with pytest.raises(FormatError):
            load_sites(p)
        p.write_text(json.dumps([]))
        with pytest.raises(FormatError):
            load_sites(p)
