import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ivsforecast import cross_section as cs
from ivsforecast.errors import (
    AllGroupsDropped,
    EmptySeries,
    InvalidConfig,
    SchemaMismatch,
    UnreadableFile,
)
from ivsforecast.surface_data import (
    IVQuote,
    MaturityGroupRule,
    PanelSeries,
    SurfacePanel,
    SyntheticConfig,
    apply_liquidity_rule,
    emit_csv,
    enforce_daily_minimum,
    filter_panel,
    generate_synthetic,
    generate_synthetic_with_truth,
    ingest_csv,
    prepare_series,
    surface_value,
)

D0 = dt.date(2021, 3, 1)


def panel_of(m, tau=0.5, vol=1, iv=0.3, date=D0):
    m = np.atleast_1d(np.asarray(m, dtype=float))
    n = m.size
    return SurfacePanel(date, m, np.broadcast_to(tau, n), np.broadcast_to(iv, n), np.broadcast_to(vol, n))


class TestQuoteTypes:
    def test_quote_invariants(self):
        IVQuote(D0, 100.0, 0.5, 0.3, 0)
        for bad in (dict(iv=0.0), dict(iv=5.0), dict(maturity=0.0), dict(volume=-1)):
            kwargs = dict(date=D0, moneyness=100.0, maturity=0.5, iv=0.3, volume=1) | bad
            with pytest.raises(ValueError):
                IVQuote(**kwargs)

    def test_panel_round_trips_quotes(self):
        quotes = [IVQuote(D0, 95.0, 0.25, 0.31, 3), IVQuote(D0, 105.0, 1.0, 0.28, 7)]
        panel = SurfacePanel.from_quotes(quotes)
        assert panel.quotes == tuple(quotes)
        assert len(panel) == 2

    def test_panel_rejects_mixed_dates(self):
        with pytest.raises(ValueError):
            SurfacePanel.from_quotes([IVQuote(D0, 95.0, 0.25, 0.3, 1), IVQuote(D0 + dt.timedelta(1), 95.0, 0.25, 0.3, 1)])

    def test_panel_columns_are_read_only(self):
        panel = panel_of([100.0, 101.0])
        with pytest.raises(ValueError):
            panel.iv[0] = 0.5

    def test_series_dates_strictly_increase(self):
        a, b = panel_of(100.0), panel_of(100.0, date=D0 + dt.timedelta(1))
        PanelSeries((a, b))
        with pytest.raises(ValueError):
            PanelSeries((b, a))
        with pytest.raises(ValueError):
            PanelSeries((a, a))

    def test_convenience_yield_is_carried_only(self):
        s = PanelSeries((panel_of(100.0),), "corn", 0.12)
        assert s.convenience_yield_slope == 0.12
        assert s[0:1].convenience_yield_slope == 0.12


class TestFilterPanel:
    def test_moneyness_below_window_is_dropped(self):
        assert len(filter_panel(panel_of(89.9))) == 0

    def test_bounds_are_inclusive(self):
        out = filter_panel(panel_of([90.0, 100.0, 110.0]))
        np.testing.assert_array_equal(out.moneyness, [90.0, 100.0, 110.0])

    def test_maturity_bounds_and_volume(self):
        p = SurfacePanel(D0, [100] * 5, [1 / 12, 2.0, 2.01, 0.05, 1.0], [0.3] * 5, [1, 1, 1, 1, 0])
        out = filter_panel(p)
        np.testing.assert_allclose(out.maturity, [1 / 12, 2.0])

    def test_empty_panel_is_legal(self):
        empty = SurfacePanel(D0, [], [], [], [])
        assert len(filter_panel(empty)) == 0

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.floats(80, 120),
                st.floats(0.01, 3.0),
                st.integers(0, 3),
            ),
            max_size=30,
        )
    )
    def test_idempotent_and_order_preserving(self, rows):
        m = [r[0] for r in rows]
        tau = [r[1] for r in rows]
        vol = [r[2] for r in rows]
        p = SurfacePanel(D0, m, tau, [0.3] * len(rows), vol)
        once = filter_panel(p)
        assert filter_panel(once) == once
        expected = [r[0] for r in rows if r[2] > 0 and 90 <= r[0] <= 110 and 1 / 12 <= r[1] <= 2]
        np.testing.assert_array_equal(once.moneyness, expected)


class TestLiquidityRule:
    def test_group_assignment(self):
        rule = MaturityGroupRule()
        months = np.array([1, 5.9, 6, 12, 17.99, 18, 24, 0.5, 25])
        np.testing.assert_array_equal(rule.group_of(months / 12), [0, 0, 1, 2, 2, 3, 3, -1, -1])

    def test_rule_validation(self):
        with pytest.raises(ValueError):
            MaturityGroupRule(group_edges=(1, 6, 6, 12))
        with pytest.raises(ValueError):
            MaturityGroupRule(min_quotes_per_group=0)

    def _series(self):
        # 3 days; short group well populated, long group thin
        panels = []
        for d in range(3):
            tau = [2 / 12] * 6 + [20 / 12]
            panels.append(SurfacePanel(D0 + dt.timedelta(d), [100.0] * 7, tau, [0.3] * 7, [1] * 7))
        return PanelSeries(tuple(panels))

    def test_thin_group_dropped(self):
        out = apply_liquidity_rule(self._series(), MaturityGroupRule(min_quotes_per_group=10))
        assert all(np.all(p.maturity == 2 / 12) for p in out)
        assert out.effective_max_maturity == pytest.approx(0.5)

    def test_never_adds_or_reorders(self, rng):
        panels = []
        for d in range(5):
            n = 20
            panels.append(
                SurfacePanel(D0 + dt.timedelta(d), rng.uniform(90, 110, n), rng.uniform(1 / 12, 2, n), [0.3] * n, [1] * n)
            )
        s = PanelSeries(tuple(panels))
        out = apply_liquidity_rule(s, MaturityGroupRule(min_quotes_per_group=25))
        for before, after in zip(s, out):
            assert len(after) <= len(before)
            keep = np.isin(before.maturity, after.maturity)
            np.testing.assert_array_equal(before.maturity[keep], after.maturity)

    def test_all_groups_dropped(self):
        with pytest.raises(AllGroupsDropped):
            apply_liquidity_rule(self._series(), MaturityGroupRule(min_quotes_per_group=1000))

    def test_count_span_can_be_restricted(self):
        s = self._series()
        # 2 panels hold 12 short quotes; the full series holds 18
        assert len(apply_liquidity_rule(s, MaturityGroupRule(min_quotes_per_group=15)).panels[0]) == 6
        with pytest.raises(AllGroupsDropped):
            apply_liquidity_rule(s, MaturityGroupRule(min_quotes_per_group=15), count_panels=2)

    def test_daily_minimum_and_pipeline(self):
        s = self._series()
        thin = s.replace(panels=(s[0].take(np.arange(7) < 3),) + s.panels[1:])
        assert len(enforce_daily_minimum(thin, 5)) == 2
        out = prepare_series(thin, rule=MaturityGroupRule(min_quotes_per_group=10, min_quotes_per_day=5))
        assert len(out) == 2
        with pytest.raises(EmptySeries):
            prepare_series(thin, moneyness=(101, 110), rule=None)


class TestCsv:
    def test_round_trip(self, tmp_path):
        cfg = SyntheticConfig(n_days=4, quotes_per_day=10)
        s = generate_synthetic(cfg, 3)
        path = tmp_path / "panels.csv"
        emit_csv(s, path)
        back = ingest_csv(path, commodity_tag="wheat", convenience_yield_slope=-0.02)
        assert back.dates == s.dates
        assert back.commodity_tag == "wheat"
        for a, b in zip(s, back):
            np.testing.assert_allclose(a.iv, b.iv, rtol=1e-9)
            np.testing.assert_array_equal(a.volume, b.volume)

    def test_schema_mapping_and_skips(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text(
            "Day,K,T,vol,qty\n"
            "2021-03-01,100,0.5,0.3,2\n"
            "2021-03-01,101,0.5,oops,2\n"
            "2021-03-01,102,0.5,7.0,2\n"
            "2021-03-02,100,0.5,0.31,1\n"
        )
        schema = {"date": "Day", "moneyness": "K", "maturity": "T", "iv": "vol", "volume": "qty"}
        s = ingest_csv(path, schema)
        assert len(s) == 2 and s.n_quotes == 2
        assert s.skipped_rows == 2

    def test_missing_column(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text("date,moneyness,maturity,iv\n2021-03-01,100,0.5,0.3\n")
        with pytest.raises(SchemaMismatch):
            ingest_csv(path)

    def test_unreadable_and_empty(self, tmp_path):
        with pytest.raises(UnreadableFile):
            ingest_csv(tmp_path / "nope.csv")
        path = tmp_path / "e.csv"
        path.write_text("date,moneyness,maturity,iv,volume\n")
        with pytest.raises(EmptySeries):
            ingest_csv(path)


class TestSynthetic:
    def test_invalid_configs(self):
        for bad in (dict(n_days=0), dict(quotes_per_day=0), dict(noise_sd=-1), dict(model="XX"), dict(mean=(0.3,))):
            with pytest.raises(InvalidConfig):
                generate_synthetic(SyntheticConfig(**bad), 0)

    def test_deterministic(self):
        cfg = SyntheticConfig(n_days=5, quotes_per_day=20, innovation_sd=0.01, noise_sd=0.01)
        a, b = generate_synthetic(cfg, 9), generate_synthetic(cfg, 9)
        assert all(x == y for x, y in zip(a, b))
        c = generate_synthetic(cfg, 10)
        assert not all(x == y for x, y in zip(a, c))

    @pytest.mark.parametrize("model", ["GG", "CT"])
    def test_noiseless_panels_lie_on_the_surface(self, model):
        mean = (0.3, 0.02, -0.003, 0.1, -0.005) if model == "GG" else SyntheticConfig().mean
        cfg = SyntheticConfig(n_days=3, quotes_per_day=30, model=model, mean=mean, coordinates="uniform")
        s, truth = generate_synthetic_with_truth(cfg, 1)
        for panel, coefs in zip(s, truth):
            np.testing.assert_allclose(panel.iv, surface_value(cfg, coefs, panel.moneyness, panel.maturity), atol=1e-15)
            fit = cs.fit_model(model, panel, cfg.lam)
            assert fit.fit_stats.rss < 1e-20

    def test_post_filter_range(self):
        cfg = SyntheticConfig(n_days=3, quotes_per_day=50, noise_sd=0.5)
        for p in generate_synthetic(cfg, 2):
            assert np.all((p.iv > 0) & (p.iv <= 1))
            assert np.all(p.volume > 0)

    def test_refitted_coefficients_are_persistent(self):
        cfg = SyntheticConfig(
            n_days=2000, quotes_per_day=30, model="GG", mean=(0.3, 0.02, -0.003, 0.1, -0.005),
            phi=0.98, innovation_sd=0.005, noise_sd=0.002,
        )
        s = generate_synthetic(cfg, 5)
        path = np.array([cs.fit_gg(p).values for p in s])
        for j in (0, 3):
            x = path[:, j] - path[:, j].mean()
            rho = (x[1:] @ x[:-1]) / (x @ x)
            assert 0.9 <= rho <= 1.0

    def test_piecewise_is_flat_in_maturity(self):
        cfg = SyntheticConfig(n_days=1, quotes_per_day=200, model="piecewise", mean=(0.35, 0.25, 0.3))
        p = generate_synthetic(cfg, 0)[0]
        expected = np.where(p.moneyness < 95, 0.35, np.where(p.moneyness < 105, 0.25, 0.3))
        np.testing.assert_allclose(p.iv, expected)
