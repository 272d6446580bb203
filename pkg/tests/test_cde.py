import math

import numpy as np
import pytest

from pgqr.cde import (
    DEFAULT_TAUS,
    PointMassError,
    cde_report,
    generate,
    kde,
    modes,
    moments,
    prediction_interval,
    quantile_curve,
    silverman_bandwidth,
    write_report_csv,
)
from pgqr.data import Standardizer

from helpers import tiny_model


def test_interval_on_one_to_thousand():
    lo, hi = prediction_interval(np.arange(1.0, 1001.0), 0.95)
    # position 0.025 * 999 = 24.975 -> 25 + 0.975; mirror image at the top
    assert lo == pytest.approx(25.975, abs=1e-9)
    assert hi == pytest.approx(975.025, abs=1e-9)


def test_interval_of_constant_samples_is_degenerate():
    assert prediction_interval(np.full(10, 3.5)) == (3.5, 3.5)


@pytest.mark.parametrize("level", [0.0, 1.0, -0.5])
def test_interval_level_must_be_inside_unit_interval(level):
    with pytest.raises(ValueError):
        prediction_interval(np.arange(5.0), level)


def test_moments_examples():
    mean, sd = moments(np.array([0.0, 2.0]))
    assert mean == 1.0 and sd == pytest.approx(math.sqrt(2.0))
    assert moments(np.full(4, -2.0)) == (-2.0, 0.0)
    with pytest.raises(ValueError):
        moments(np.array([1.0]))


def test_moments_of_standard_normal_draws():
    mean, sd = moments(np.random.default_rng(0).standard_normal(100_000))
    assert abs(mean) < 0.02 and abs(sd - 1) < 0.02


def test_kde_integrates_to_one_on_normal_samples():
    grid = kde(np.random.default_rng(1).standard_normal(1000), 512)
    area = np.trapezoid(grid.density, grid.y)
    assert 0.98 <= area <= 1.02
    assert np.all(grid.density >= 0) and np.all(np.diff(grid.y) > 0)
    assert grid.y[0] == pytest.approx(grid.y.min())


def test_kde_grid_spans_three_bandwidths_past_the_data():
    v = np.random.default_rng(2).standard_normal(200)
    grid = kde(v, 64)
    assert grid.bandwidth == pytest.approx(silverman_bandwidth(v))
    assert grid.y[0] == pytest.approx(v.min() - 3 * grid.bandwidth)
    assert grid.y[-1] == pytest.approx(v.max() + 3 * grid.bandwidth)


def test_silverman_bandwidth_formula():
    v = np.random.default_rng(3).standard_normal(500)
    q75, q25 = np.percentile(v, [75, 25])
    expected = 0.9 * min(v.std(ddof=1), (q75 - q25) / 1.34) * 500 ** -0.2
    assert silverman_bandwidth(v) == pytest.approx(expected, rel=1e-12)


def test_symmetric_samples_have_mode_near_the_mean():
    z = np.random.default_rng(4).standard_normal(500)
    v = np.concatenate([z, -z]) + 5.0
    grid = kde(v)
    mode = grid.y[np.argmax(grid.density)]
    assert abs(mode - v.mean()) < 2 * grid.bandwidth


def test_equal_samples_are_a_point_mass():
    with pytest.raises(PointMassError) as err:
        kde(np.full(20, 1.25))
    assert err.value.location == 1.25


def test_modes_of_a_two_component_mixture():
    rng = np.random.default_rng(5)
    v = np.concatenate([rng.normal(-3, 1, 500), rng.normal(3, 1, 500)])
    peaks = modes(kde(v))
    assert len(peaks) == 2 and peaks[1] - peaks[0] > 4


def test_normal_samples_have_one_mode():
    # raw local maxima of such a KDE often include ripples near the top; prominence ignores them
    rng = np.random.default_rng(6)
    counts = [modes(kde(rng.standard_normal(1000))).size for _ in range(100)]
    assert counts == [1] * 100


def test_generated_values_follow_the_quantile_curve():
    model = tiny_model(seed=2)
    x = np.array([0.5, -1.0])
    s = generate(model, x, 0.5, 400, np.random.default_rng(0))
    order = np.argsort(s.xi)
    assert np.all(np.diff(s.values[order]) >= 0)
    np.testing.assert_allclose(s.values, model.quantiles(x, s.xi, 0.5), rtol=0, atol=0)


def test_single_level_curve_equals_generator_at_that_level():
    model = tiny_model(seed=1)
    x = np.array([0.1, 0.2])
    assert quantile_curve(model, x, [0.37], 0.0)[0] == model.quantiles(x, [0.37], 0.0)[0]
    curve = quantile_curve(model, x, DEFAULT_TAUS, 1.0)
    assert curve.shape == (9,) and np.all(np.diff(curve) >= 0)
    with pytest.raises(ValueError):
        quantile_curve(model, x, [0.5, 0.2], 0.0)


def test_sample_median_is_close_to_the_median_curve():
    model = tiny_model(seed=6, width=16)
    x = np.array([-0.4, 0.9])
    s = generate(model, x, 0.2, 4000, np.random.default_rng(1))
    sd = s.values.std()
    assert abs(np.median(s.values) - quantile_curve(model, x, [0.5], 0.2)[0]) < 3 * sd / math.sqrt(4000)


def test_empirical_cdf_at_curve_recovers_levels():
    model = tiny_model(seed=7, width=16)
    x = np.array([1.0, 0.0])
    s = generate(model, x, 0.8, 10_000, np.random.default_rng(2))
    taus = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    curve = quantile_curve(model, x, taus, 0.8)
    ecdf = np.array([np.mean(s.values <= q) for q in curve])
    assert np.max(np.abs(ecdf - taus)) < 0.03


def test_flat_generator_gives_de_standardised_bias_and_a_point_mass():
    model = tiny_model(seed=0)
    params = model.params
    params.f_raw_weights[...] = -800.0  # positive output weights underflow to exactly zero
    model.scaler = Standardizer(np.zeros(2), np.ones(2), 10.0, 2.0)
    s = generate(model, [0.0, 0.0], 0.0, 50, np.random.default_rng(0))
    assert np.all(s.values == 10.0 + 2.0 * params.f_bias[0, 0])
    rep = cde_report(model, [0.0, 0.0], 0.0, 50, np.random.default_rng(0))
    assert rep.density is None and rep.point_mass == s.values[0]
    assert rep.sd == 0.0 and rep.interval[0] == rep.interval[1]


def test_report_csv_payload(tmp_path):
    model = tiny_model(seed=3)
    rep = cde_report(model, [0.2, 0.3], 0.5, 200, np.random.default_rng(0), grid_size=32)
    write_report_csv(tmp_path / "p.csv", rep)
    rows = [line.split(",") for line in (tmp_path / "p.csv").read_text().splitlines()]
    kinds = [r[0] for r in rows[1:]]
    assert rows[0] == ["kind", "key", "value"]
    assert kinds.count("density") == 32 and kinds.count("quantile") == 9
    assert kinds.count("x") == 2 and kinds.count("interval") == 3
