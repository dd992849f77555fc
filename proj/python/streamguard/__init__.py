"""Streaming multivariate anomaly detection with drift adaptation."""

import json

import numpy as np

from . import _core
from ._core import (
    ConfigError,
    DataError,
    NumericError,
    OfflineModel,
    anomaly_probability,
    compute_auc,
    record_distance,
    sequence_inconsistency,
    weighted_sequence_distance,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "OfflineModel",
    "RunResult",
    "anomaly_probability",
    "calibrate",
    "compute_auc",
    "default_config",
    "fit_offline",
    "ga_minimize",
    "load_csv",
    "record_distance",
    "replay_drift",
    "run",
    "run_realtime",
    "sequence_inconsistency",
    "synth",
    "weighted_sequence_distance",
]


def _dump(config):
    if config is None:
        return ""
    return config if isinstance(config, str) else json.dumps(config)


def _labels(labels):
    if labels is None:
        return None
    return np.asarray(labels, dtype=np.int32)


def default_config():
    return json.loads(_core.default_config())


class RunResult:
    """Per-record verdicts plus the run report and drift event log."""

    def __init__(self, raw):
        self.report = json.loads(raw["report"])
        self.events = json.loads(raw["events"])
        self.index = raw["index"]
        self.sid = raw["sid"]
        self.ap = raw["ap"]
        self.flag = raw["flag"]
        self.scored = raw["scored"]
        self.condition = list(raw["condition"])

    @property
    def auc(self):
        return self.report["auc"]

    @property
    def retrains(self):
        return self.report["retrain_indices"]

    def __len__(self):
        return len(self.index)


def synth(spec=None, **fields):
    """Generates a labelled stream. Returns (values, labels, timestamps, anomaly_indices)."""
    doc = dict(spec or {})
    doc.update(fields)
    values, labels, ts, anomalies, _ = _core.synth(json.dumps(doc))
    return values, labels, ts, list(anomalies)


def load_csv(path, label_col="", timestamp_col="", has_header=True, ordinal=(), drop=()):
    """Returns (values, labels, timestamps, feature_names); unknown labels are -1."""
    return _core.load_csv(str(path), label_col, timestamp_col, has_header, list(ordinal), list(drop))


def fit_offline(values, config=None):
    return _core.fit_offline(np.asarray(values, dtype=float), _dump(config))


def run(values, labels=None, config=None):
    """Offline phase on the leading fraction, then the real-time phase on the rest."""
    return RunResult(_core.run_pipeline(np.asarray(values, dtype=float), _labels(labels), _dump(config)))


def run_realtime(model, values, labels=None, start=0, config=None):
    return RunResult(
        _core.run_realtime(model, np.asarray(values, dtype=float), _labels(labels), int(start), _dump(config))
    )


def calibrate(table, first_row=0, tolerance=1e-4, max_iterations=100):
    """Fits (mu, C) on rows of per-source WSDs; NaN marks a missing source."""
    return _core.calibrate([list(map(float, r)) for r in table], first_row, tolerance, max_iterations)


def replay_drift(rates, drift_config=None, first_index=0):
    return _core.replay_drift(list(map(float, rates)), _dump(drift_config), int(first_index))


def ga_minimize(fn, bounds, population=70, generations=50, crossover=0.7, mutation=0.15, seed=1):
    return _core.ga_minimize(fn, [tuple(b) for b in bounds], population, generations, crossover, mutation, seed)
