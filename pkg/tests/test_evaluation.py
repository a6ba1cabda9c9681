import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivsforecast.errors import BenchmarkMissing, EmptyInput, ZeroBenchmarkRMSE, ZeroRealized
from ivsforecast.evaluation import (
    BucketScheme,
    bucket_scores,
    mape,
    rmse,
    rmse_ratio,
    rmspe,
    score_table,
    sign_success,
    ssr,
    wide_table,
)
from ivsforecast.harness import FORECAST_COLUMNS, ForecastSet


def make_records(moneyness, maturity, real, pred, anchor=None, model="M", h=1, origin=None):
    n = len(real)
    anchor = np.full(n, np.nan) if anchor is None else anchor
    return pd.DataFrame(
        {
            "origin_date": origin if origin is not None else ["2020-01-02"] * n,
            "target_date": ["2020-01-03"] * n,
            "h": h,
            "model": model,
            "moneyness": moneyness,
            "maturity": maturity,
            "pred_iv": pred,
            "real_iv": real,
            "origin_iv": anchor,
            "origin_fit_iv": np.nan,
        },
        columns=FORECAST_COLUMNS,
    )


@pytest.fixture
def six():
    """Six records touching every bucket; record 4 (moneyness 96) is in no moneyness bucket."""
    return make_records(
        moneyness=[90.0, 100.0, 110.0, 96.0, 100.0, 95.0],
        maturity=[0.1, 0.2, 0.4, 0.7, 1.0, 1 / 12],
        real=[0.20, 0.25, 0.30, 0.40, 0.50, 0.10],
        pred=[0.22, 0.25, 0.27, 0.38, 0.55, 0.10],
        anchor=[0.21, 0.24, 0.28, 0.39, 0.45, 0.10],
    )


# point metrics


def test_rmse_examples():
    assert rmse([(0.2, 0.2)]) == 0.0
    assert rmse([(0.2, 0.25), (0.3, 0.3)]) == pytest.approx(0.035355, abs=1e-6)


def test_rmse_matches_two_pass_accumulator(rng):
    real = rng.uniform(0.1, 0.6, 1000)
    pred = real + rng.normal(0, 0.02, 1000)
    total = 0.0
    for r, p in zip(real.tolist(), pred.tolist()):
        total += (r - p) ** 2
    assert rmse(real, pred) == pytest.approx(math.sqrt(total / 1000), abs=1e-12)


def test_percentage_metric_examples():
    pairs = [(0.2, 0.22), (0.25, 0.25)]
    assert rmspe(pairs) == pytest.approx(7.071068, abs=1e-6)
    assert mape(pairs) == pytest.approx(5.0, abs=1e-9)
    assert rmspe([(0.3, 0.3), (0.2, 0.2)]) == 0.0
    assert mape([(0.3, 0.3)]) == 0.0


def test_metric_errors():
    with pytest.raises(EmptyInput):
        rmse([])
    with pytest.raises(ZeroRealized):
        rmspe([(0.0, 0.1)])
    with pytest.raises(ZeroRealized):
        mape([(0.0, 0.1)])


def test_six_record_fixture_hand_values(six):
    real, pred = six["real_iv"], six["pred_iv"]
    assert rmse(real, pred) == pytest.approx(math.sqrt(42e-4 / 6), abs=1e-9)
    assert rmspe(real, pred) == pytest.approx(math.sqrt(325 / 6), abs=1e-9)
    assert mape(real, pred) == pytest.approx(35 / 6, abs=1e-9)
    assert ssr(six) == pytest.approx(50.0, abs=1e-9)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50))
def test_mape_not_above_rmspe(seed, n):
    rng = np.random.default_rng(seed)
    real = rng.uniform(0.05, 1.0, n)
    pred = rng.uniform(0.0, 1.0, n)
    assert mape(real, pred) <= rmspe(real, pred) + 1e-12


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_rmspe_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    real = rng.uniform(0.1, 0.5, 20)
    pred = rng.uniform(0.1, 0.5, 20)
    assert rmspe(c * real, c * pred) == pytest.approx(rmspe(real, pred), rel=1e-10)


def test_metrics_are_permutation_invariant(rng):
    real = rng.uniform(0.1, 0.5, 50)
    pred = rng.uniform(0.1, 0.5, 50)
    perm = rng.permutation(50)
    for f in (rmse, rmspe, mape):
        assert f(real[perm], pred[perm]) == pytest.approx(f(real, pred), rel=1e-14)


def test_rmse_perturbation_identity(rng):
    real = rng.uniform(0.1, 0.5, 30)
    pred = rng.uniform(0.1, 0.5, 30)
    delta = 0.013
    e = pred[7] - real[7]
    bumped = pred.copy()
    bumped[7] += delta
    change = rmse(real, bumped) ** 2 - rmse(real, pred) ** 2
    assert change == pytest.approx((2 * e * delta + delta**2) / 30, abs=1e-15)


# sign success


def test_ssr_perfect_and_inverted(rng):
    anchor = rng.uniform(0.2, 0.4, 100)
    move = rng.choice([-1.0, 1.0], 100) * rng.uniform(0.01, 0.05, 100)
    real = anchor + move
    assert sign_success(anchor + 2 * move, real, anchor).value == 100.0
    assert sign_success(anchor - move, real, anchor).value == 0.0


def test_ssr_inverted_complements(rng):
    anchor = rng.uniform(0.2, 0.4, 200)
    real = anchor + rng.normal(0, 0.02, 200)
    pred = anchor + rng.normal(0, 0.02, 200)
    a = sign_success(pred, real, anchor).value
    b = sign_success(2 * anchor - pred, real, anchor).value
    assert a + b == pytest.approx(100.0)
    assert 0.0 <= a <= 100.0


def test_ssr_zero_change_rules():
    anchor = np.array([0.3, 0.3, 0.3])
    assert sign_success([0.3], [0.3], anchor[:1]).value == 100.0
    assert sign_success([0.3], [0.31], anchor[:1]).value == 0.0
    assert sign_success([0.32], [0.3], anchor[:1]).value == 0.0


def test_ssr_excludes_missing_anchor():
    res = sign_success([0.3, 0.4, 0.5], [0.31, 0.41, 0.49], [0.29, np.nan, np.nan])
    assert (res.value, res.n, res.excluded) == (100.0, 1, 2)
    with pytest.raises(EmptyInput):
        sign_success([0.3], [0.3], [np.nan])


def test_ssr_coin_flip(rng):
    anchor = rng.uniform(0.2, 0.4, 10_000)
    real = anchor + rng.normal(0, 0.02, 10_000)
    pred = anchor + rng.choice([-0.01, 0.01], 10_000)
    assert 47.0 <= sign_success(pred, real, anchor).value <= 53.0


def test_ssr_fit_anchor(six):
    frame = six.assign(origin_fit_iv=six["origin_iv"])
    assert ssr(frame, anchor="fit") == ssr(six, anchor="quote")
    with pytest.raises(ValueError):
        ssr(six, anchor="other")


# buckets


def test_default_buckets_hand_tally(six):
    scores = bucket_scores(six).set_index("bucket")
    expected = {"all": 6, "OTM": 2, "ATM": 2, "ITM": 1, "short": 3, "medium": 1, "long": 2}
    assert scores["n"].to_dict() == expected
    assert scores.loc["all", "rmse"] ** 2 * 6 == pytest.approx(42e-4, abs=1e-12)


def test_all_at_the_money_omits_other_rows(rng):
    frame = make_records(np.full(10, 100.0), rng.uniform(0.1, 2, 10), rng.uniform(0.2, 0.3, 10), rng.uniform(0.2, 0.3, 10))
    buckets = set(bucket_scores(frame)["bucket"])
    assert "ATM" in buckets and not {"OTM", "ITM"} & buckets


def test_bucket_boundaries():
    scheme = BucketScheme()
    masks = scheme.masks([95.0, 96.0, 97.5, 102.5, 104.9, 105.0], [1 / 12, 0.25, 0.5, 0.05, 3.0, 0.2])
    assert masks["OTM"].tolist() == [True, False, False, False, False, False]
    assert masks["ATM"].tolist() == [False, False, True, True, False, False]
    assert masks["ITM"].tolist() == [False, False, False, False, False, True]
    assert masks["short"].tolist() == [True, False, False, False, False, True]
    assert masks["medium"].tolist() == [False, True, False, False, False, False]
    assert masks["long"].tolist() == [False, False, True, False, True, False]


def test_overlapping_buckets_rejected():
    with pytest.raises(ValueError):
        BucketScheme(moneyness=(("a", 90, 100, True, True), ("b", 99, 110, True, True)))


def test_exhaustive_bins_partition_squared_error(rng):
    n = 500
    frame = make_records(rng.uniform(85, 115, n), rng.uniform(0.05, 2.5, n), rng.uniform(0.1, 0.5, n), rng.uniform(0.1, 0.5, n))
    scheme = BucketScheme.exhaustive([95, 100, 105], [0.25, 0.5, 1.0])
    scores = bucket_scores(frame, scheme).set_index("bucket")
    total = scores.loc["all", "rmse"] ** 2 * n
    for prefix in ("m", "t"):
        rows = scores[scores.index.str.startswith(prefix)]
        assert rows["n"].sum() == n
        assert (rows["rmse"] ** 2 * rows["n"]).sum() == pytest.approx(total, rel=1e-12)


def test_score_table_groups(six):
    frame = pd.concat([six, six.assign(model="N", pred_iv=six["real_iv"])], ignore_index=True)
    table = score_table(ForecastSet(frame)).set_index("model")
    assert table.loc["N", "rmse"] == 0.0
    assert table.loc["M", "n"] == 6
    assert table.loc["M", "ssr_n"] == 6 and table.loc["M", "ssr_excluded"] == 0
    wide = wide_table(table.reset_index(), "rmse", "corn")
    assert list(wide.columns) == ["model", "h1_corn"]


def test_zero_realized_gives_nan_percentages(six):
    frame = six.copy()
    frame.loc[0, "real_iv"] = 0.0
    row = score_table(frame).iloc[0]
    assert math.isnan(row["rmspe"]) and math.isnan(row["mape"])
    assert np.isfinite(row["rmse"])


def test_empty_set():
    with pytest.raises(EmptyInput):
        score_table(pd.DataFrame(columns=FORECAST_COLUMNS))


# RMSE ratios


def test_ratio_identical_and_half(rng):
    n = 40
    m, tau = rng.uniform(85, 115, n), rng.uniform(0.1, 2, n)
    real = rng.uniform(0.2, 0.4, n)
    bench_pred = real + rng.normal(0, 0.02, n)
    frame = pd.concat(
        [
            make_records(m, tau, real, bench_pred, model="B"),
            make_records(m, tau, real, bench_pred, model="SAME"),
            make_records(m, tau, real, real + 0.5 * (bench_pred - real), model="HALF"),
        ],
        ignore_index=True,
    )
    ratios = rmse_ratio(frame, "B", BucketScheme()).set_index(["model", "bucket"])["ratio"]
    assert np.allclose(ratios.loc["SAME"], 1.0, atol=1e-14)
    assert np.allclose(ratios.loc["HALF"], 0.5, atol=1e-12)


def test_ratio_uses_shared_coordinates(rng):
    n = 30
    m, tau = rng.uniform(85, 115, n), rng.uniform(0.1, 2, n)
    real = rng.uniform(0.2, 0.4, n)
    a = real + rng.normal(0, 0.03, n)
    b = real + rng.normal(0, 0.03, n)
    # the model misses the first five coordinates
    frame = pd.concat(
        [make_records(m, tau, real, b, model="B"), make_records(m[5:], tau[5:], real[5:], a[5:], model="A")],
        ignore_index=True,
    )
    ratios = rmse_ratio(frame, "B").set_index("model")
    expected = rmse(real[5:], a[5:]) / rmse(real[5:], b[5:])
    assert ratios.loc["A", "ratio"] == pytest.approx(expected, abs=1e-12)
    assert ratios.loc["A", "n"] == 25


def test_ratio_errors(six):
    with pytest.raises(BenchmarkMissing):
        rmse_ratio(six, "RW")
    perfect = six.assign(pred_iv=six["real_iv"])
    with pytest.raises(ZeroBenchmarkRMSE):
        rmse_ratio(perfect, "M")
