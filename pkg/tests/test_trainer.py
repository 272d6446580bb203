import math

import numpy as np
import pytest

from pgqr.data import Dataset
from pgqr.pmnn import PMNNConfig, positivity_transform
from pgqr.trainer import SGD, Adam, LambdaGrid, TrainConfig, sample_noise, train


def _tiny_data(n=40, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    y = x[:, 0] - 0.5 * x[:, 1] + 0.3 * rng.standard_normal(n)
    return Dataset(x, y)


def _tiny_config(**kw):
    base = dict(epochs=3, batch_size=16, lambda_grid=LambdaGrid.equispaced(0, 1, 5), seed=1,
                pmnn=PMNNConfig(width=8, k1=2, k2=2))
    base.update(kw)
    return TrainConfig(**base)


def test_default_grid_has_100_points_from_zero_to_one():
    grid = LambdaGrid.equispaced()
    assert len(grid) == 100
    assert grid.values[0] == 0.0 and grid.values[-1] == 1.0


@pytest.mark.parametrize("values", [(), (0.5, 0.2), (0.1, 0.1), (-0.1, 0.2), (0.0, float("nan"))])
def test_invalid_grids_are_rejected(values):
    with pytest.raises(ValueError):
        LambdaGrid(values)


def test_zero_epochs_is_rejected():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=0)


@pytest.mark.parametrize("kw", [dict(batch_size=0), dict(learning_rate=0.0), dict(alpha=-1.0),
                                dict(optimizer="rmsprop"), dict(weight_decay=-1.0),
                                dict(lr_schedule="step"), dict(loss_scale="log"),
                                dict(learning_rate=0.1, weight_decay=10.0)])
def test_invalid_train_settings_are_rejected(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_one_epoch_takes_ceil_n_over_batch_steps():
    data = _tiny_data(n=37)
    _, report = train(data, _tiny_config(epochs=1, batch_size=10))
    assert report.steps == math.ceil(37 / 10)
    assert len(report.epoch_loss) == 1


def test_batch_larger_than_training_set_is_rejected():
    with pytest.raises(ValueError, match="batch_size"):
        train(_tiny_data(n=10), _tiny_config(batch_size=11))


def test_sample_noise_rows():
    grid = LambdaGrid((0.0, 0.25, 2.0))
    draws = sample_noise(500, grid, np.random.default_rng(0))
    assert draws.shape == (500, 3)
    assert np.all((draws[:, :2] > 0) & (draws[:, :2] < 1))
    assert set(np.unique(draws[:, 2])) <= set(grid.values)
    # tau and tau' are drawn independently
    assert abs(np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]) < 0.15
    again = sample_noise(500, grid, np.random.default_rng(0))
    np.testing.assert_array_equal(draws, again)


def test_training_is_deterministic_given_the_seed():
    data = _tiny_data()
    m1, r1 = train(data, _tiny_config())
    m2, r2 = train(data, _tiny_config())
    assert r1.epoch_loss == r2.epoch_loss
    assert r1.checksum == r2.checksum == m1.params.checksum()
    _, r3 = train(data, _tiny_config(seed=2))
    assert r3.checksum != r1.checksum


def test_constrained_weights_stay_positive_and_loss_is_finite():
    model, report = train(_tiny_data(), _tiny_config(epochs=5, learning_rate=0.05))
    for w in model.params.gc_raw_weights + [model.params.f_raw_weights]:
        assert np.all(positivity_transform(w) > 0)
    assert all(np.isfinite(report.epoch_loss))


def test_training_reduces_the_loss():
    _, report = train(_tiny_data(n=64), _tiny_config(epochs=40, learning_rate=1e-2))
    assert np.mean(report.epoch_loss[-5:]) < np.mean(report.epoch_loss[:5])


def test_train_log_csv(tmp_path):
    _, report = train(_tiny_data(), _tiny_config(epochs=2))
    report.write_csv(tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "epoch,mean_loss,seconds"
    assert len(lines) == 3 and lines[1].startswith("1,")


def test_config_round_trips_through_dict():
    cfg = _tiny_config(weight_decay=2.0, lr_schedule="cosine")
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    compact = dict(cfg.to_dict(), lambda_grid={"lo": 0.0, "hi": 1.0, "count": 5})
    assert TrainConfig.from_dict(compact).lambda_grid == cfg.lambda_grid


def test_first_adam_step_moves_each_coordinate_by_the_learning_rate():
    # with m and v initialised at zero, bias correction makes the first step lr * sign(g)
    a = np.array([1.0, -2.0, 3.0])
    Adam(lr=0.1, eps=0.0).step([a], [np.array([4.0, -0.01, 0.5])])
    np.testing.assert_allclose(a, [0.9, -1.9, 2.9])


def test_sgd_step():
    a = np.array([1.0, 2.0])
    SGD(lr=0.5).step([a], [np.array([2.0, -2.0])])
    np.testing.assert_allclose(a, [0.0, 3.0])


def test_model_quantiles_are_on_the_response_scale():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, 1))
    y = 1000.0 + 50.0 * rng.standard_normal(64)
    model, _ = train(Dataset(x, y), _tiny_config(epochs=30, learning_rate=1e-2, batch_size=32))
    q = model.quantiles(x[0], [0.5], 0.0)
    assert 850 < q[0] < 1150
