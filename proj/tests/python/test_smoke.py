import math

import numpy as np
import pytest

import streamguard as sg

SMALL = {
    "lstm": {"hidden_units": 8, "epochs": 8, "time_step": 12, "batch_size": 16},
    "detector": {"horizon": 5, "reference_length": 150},
    "drift": {"sliding_window": 40, "max_adaptive_window": 160},
}


def test_scoring_primitives():
    assert sg.record_distance([1, 2], [3, 4]) == 4.0
    assert sg.weighted_sequence_distance([1.0, 0.0]) == pytest.approx(math.e / (math.e + 1))
    assert sg.sequence_inconsistency([2.0, 1.0], [0.0, 0.0]) == pytest.approx(1.5)
    assert sg.anomaly_probability(2.0, 1.0, 2.0) == pytest.approx(1 / (1 + math.exp(-2)))
    assert sg.anomaly_probability(1.3, 1.3, 5.0) == 0.5


def test_calibrate_one_pass():
    out = sg.calibrate([[0.2], [0.9], [0.4], [1.6]], tolerance=1e-12, max_iterations=1)
    assert out["mu"] == pytest.approx(0.775)
    assert out["c"] == pytest.approx(1 / 0.291875)
    with pytest.raises(sg.NumericError):
        sg.calibrate([[1.0]] * 10)


def test_auc():
    assert sg.compute_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75
    with pytest.raises(sg.DataError):
        sg.compute_auc([0.1, 0.2], [1, 1])


def test_synth_shape_and_determinism():
    a = sg.synth(length=500, dims=3, anomaly_rate=0.05, seed=4)
    b = sg.synth(length=500, dims=3, anomaly_rate=0.05, seed=4)
    assert a[0].shape == (500, 3)
    assert np.array_equal(a[0], b[0])
    assert set(np.flatnonzero(a[1] == 1)) == set(a[3])
    with pytest.raises(sg.ConfigError):
        sg.synth(length=0)


def test_pipeline_end_to_end():
    values, labels, _, _ = sg.synth(length=2500, dims=3, anomaly_rate=0.03, seed=2)
    result = sg.run(values, labels, SMALL)
    assert len(result) == 2250
    assert result.report["offline_records"] == 250
    assert result.report["max_live_records"] <= result.report["live_record_bound"]
    assert 0.5 < result.auc <= 1.0
    assert np.all((result.ap >= 0) & (result.ap <= 1))
    again = sg.run(values, labels, SMALL)
    assert np.array_equal(result.ap, again.ap)


def test_fit_then_realtime_matches_run():
    values, labels, _, _ = sg.synth(length=2000, dims=2, anomaly_rate=0.03, seed=5)
    model = sg.fit_offline(values[:200], SMALL)
    restored = sg.OfflineModel.from_json(model.to_json())
    assert restored.mu == model.mu
    split = sg.run_realtime(restored, values[200:], labels[200:], start=200, config=SMALL)
    whole = sg.run(values, labels, SMALL)
    assert np.allclose(split.ap, whole.ap, atol=1e-12)


def test_drift_replay():
    rates = [0.1] * 30 + [0.25] * 3 + [0.4] * 200
    out = sg.replay_drift(rates, {"sliding_window": 10, "max_adaptive_window": 50, "min_retrain_records": 1}, 100)
    kinds = [e[1] for e in out["events"]]
    assert kinds[:3] == ["normal->alert", "alert->drift", "retrain_on_entry"]
    assert out["retrains"][0] == 131
    with pytest.raises(sg.ConfigError):
        sg.replay_drift([0.1], {"sliding_window": 50, "max_adaptive_window": 40})


def test_ga_minimize_sphere():
    out = sg.ga_minimize(lambda x: sum(v * v for v in x), [(-5, 5)] * 3, population=40, generations=30)
    assert out["fitness"] < 0.1
    assert all(b <= a for a, b in zip(out["history"], out["history"][1:]))
