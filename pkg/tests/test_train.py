import math

import numpy as np
import pytest

from orbiconv.data import Dataset, Split, SynthKind, gen_synthetic
from orbiconv.experiments import SmallCNN
from orbiconv.train import (
    NumericalError,
    Schedule,
    TrainConfig,
    TrainReport,
    evaluate,
    lr_at,
    train,
)


def _bars(n, seed, split=Split.TRAIN):
    return gen_synthetic(SynthKind.ORIENTED_BARS, n, 12, seed, split)


def test_lr_schedule_endpoints_and_midpoint():
    cfg = TrainConfig(epochs=10, lr_init=0.1)
    assert lr_at(cfg, 0) == pytest.approx(0.1)
    assert lr_at(cfg, 5) == pytest.approx(0.05)
    assert lr_at(cfg, 9) == pytest.approx(0.1 * 0.5 * (1 + math.cos(math.pi * 0.9)))


def test_lr_schedule_warmup():
    cfg = TrainConfig(epochs=10, lr_init=0.1, warmup_epochs=4)
    assert lr_at(cfg, 0) == pytest.approx(0.025)
    assert lr_at(cfg, 3) == pytest.approx(0.1)
    assert lr_at(cfg, 4) == pytest.approx(0.1)  # cosine at progress 0


def test_lr_schedule_constant():
    cfg = TrainConfig(epochs=5, lr_init=0.2, schedule=Schedule.CONSTANT)
    assert all(lr_at(cfg, e) == 0.2 for e in range(5))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr_init=0.0)
    with pytest.raises(ValueError):
        TrainConfig(momentum=1.0)


def test_zero_epochs_returns_empty_report():
    model = SmallCNN(channels=(4,), seed=0)
    report = train(model, _bars(4, 0), _bars(4, 1, Split.TEST),
                   TrainConfig(epochs=0))
    assert report.train_loss == [] and report.test_err == []


def test_training_is_bit_deterministic():
    cfg = TrainConfig(epochs=2, batch_size=8, seed=3)
    csvs = []
    for _ in range(2):
        model = SmallCNN(channels=(4, 4), seed=7)
        report = train(model, _bars(8, 0), _bars(4, 1, Split.TEST), cfg)
        csvs.append(report.to_csv())
    assert csvs[0] == csvs[1]


def test_different_seed_changes_data_order():
    losses = []
    for seed in (0, 1):
        model = SmallCNN(channels=(4,), seed=7)
        cfg = TrainConfig(epochs=1, batch_size=4, seed=seed)
        report = train(model, _bars(8, 0), _bars(4, 1, Split.TEST), cfg)
        losses.append(report.train_loss[0])
    assert losses[0] != losses[1]


def test_fits_linearly_separable_data():
    train_ds = _bars(16, 0)
    cfg = TrainConfig(epochs=20, batch_size=8, lr_init=0.1, seed=0)
    model = SmallCNN(channels=(8, 8), seed=0)
    train(model, train_ds, train_ds, cfg)
    assert evaluate(model, train_ds) == 0.0


def test_nan_loss_raises_numerical_error():
    model = SmallCNN(channels=(4,), seed=0)
    model.head.weights.data[:] = np.nan
    with pytest.raises(NumericalError, match="epoch 0"):
        train(model, _bars(4, 0), _bars(4, 1, Split.TEST),
              TrainConfig(epochs=1, batch_size=4))


def test_report_csv_round_trips_floats():
    r = TrainReport([0.1 + 0.2], [1 / 3], [0.05])
    line = r.to_csv().splitlines()[1].split(",")
    assert float(line[1]) == 0.1 + 0.2
    assert float(line[2]) == 1 / 3


def test_evaluate_counts_errors():
    images = np.zeros((4, 1, 8, 8), dtype=np.float32)
    labels = np.array([0, 1, 0, 1], dtype=np.int64)
    ds = Dataset(images, labels)

    class Fixed:
        def __call__(self, x):
            from orbiconv.autodiff import Var
            logits = np.tile([1.0, 0.0], (x.data.shape[0], 1))
            return Var(logits, requires_grad=False)

    assert evaluate(Fixed(), ds) == 0.5
