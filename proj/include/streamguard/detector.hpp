#pragma once

#include "streamguard/lstm.hpp"
#include "streamguard/record.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

namespace streamguard::detector {

using predictor::PredictedSequence;

struct DetectorConfig {
    /// Prediction horizon L: predicted records per forward pass and sources per target.
    int horizon{10};
    /// Reference series length S: verdicts used to (re)calibrate the logistic map.
    int reference_length{1000};
    /// Anomaly probability threshold T.
    double threshold{0.65};
    double calibration_tolerance{1e-4};
    int max_calibration_iterations{100};
    /// Evaluate the per-source WSDs on worker threads.
    bool parallel{false};

    void validate() const;
};

struct LogisticCalibration {
    double mu{0.5};
    double c{1.0};
    bool converged{false};
    int iterations{0};
    /// SIDs of the final iteration; mu and c are their mean and 1/variance.
    std::vector<double> reference_sids;
};

struct AnomalyVerdict {
    std::int64_t index{0};
    double sid{0.0};
    double ap{0.0};
    bool is_anomalous{false};
    int sources_used{0};
    /// No prediction targeted this record yet.
    bool unscored{true};
};

/// WSDs of one target record, slot k-1 for the prediction made k records
/// earlier. NaN marks a source that is not available.
using WsdRow = std::vector<double>;

/// Mean squared per-dimension difference.
double record_distance(const Vector& a, const Vector& b);

/// Recency-weighted mean of record distances. `rd_newest_first[m-1]` is the
/// distance at record i-m+1; it carries weight e^(N-m).
double weighted_sequence_distance(std::span<const double> rd_newest_first);
double weighted_sequence_distance(std::span<const Vector> actual, std::span<const Vector> predicted);

/// Weighted mean of available WSDs with weights 1 - AP(i-k). Falls back to
/// the unweighted mean when every weight is 0. Throws DataError when no
/// source is available.
double sequence_inconsistency(std::span<const double> wsd, std::span<const double> prior_ap);

double anomaly_probability(double sid, const LogisticCalibration& calibration);

struct CalibrationOptions {
    /// Rows before this one are context only; they keep AP = 0.
    std::size_t first_row{0};
    double tolerance{1e-4};
    int max_iterations{100};
};

/// Iterative fit of (mu, C) on a fixed table of WSD rows. Each pass scores
/// the rows in order with the current parameters, feeding each new AP into
/// the weights of later rows, then refits mu and C = 1/variance.
/// Throws NumericError when the reference SIDs have zero variance.
LogisticCalibration calibrate(std::span<const WsdRow> table, const CalibrationOptions& options);

/// The last L predicted sequences keyed by origin, each paired with the
/// running weighted sums of its distances to the records that have arrived.
class PredictionBuffer {
public:
    explicit PredictionBuffer(std::size_t horizon) : horizon_(horizon) {}

    /// Inserts the prediction made at `seq.origin` and evicts origins that
    /// can no longer target a future record.
    void push(PredictedSequence seq);

    /// Folds the arriving actual record into every pending source and returns
    /// the WSD row for it.
    WsdRow observe(std::int64_t index, const Vector& actual, bool parallel);

    /// Origin of the prediction held for source k of target `index`.
    std::optional<std::int64_t> origin_for(std::int64_t index, int k) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t horizon() const { return horizon_; }
    void clear() { entries_.clear(); }

private:
    struct Entry {
        PredictedSequence seq;
        double weighted_sum{0.0};
        double weight_total{0.0};
        int consumed{0};
    };

    std::size_t horizon_;
    std::deque<Entry> entries_;
};

/// Streaming PDAD-SID scorer: prediction buffer, recent APs, calibration and
/// the optional recalibration collector used after a model swap.
class Detector {
public:
    Detector(const DetectorConfig& config, LogisticCalibration calibration);

    /// Scores the arriving record. Call before pushing the prediction made at it.
    AnomalyVerdict score(std::int64_t index, const Vector& actual);

    void push_prediction(PredictedSequence seq) { buffer_.push(std::move(seq)); }

    /// Collect the next reference_length scored rows and refit (mu, C) on them.
    /// The current calibration stays in force until then.
    void request_recalibration();
    bool recalibrating() const { return collecting_; }
    /// Number of completed recalibrations and of ones rejected as degenerate.
    int recalibrations() const { return recalibrations_; }
    int failed_recalibrations() const { return failed_recalibrations_; }

    const LogisticCalibration& calibration() const { return calibration_; }
    void set_calibration(LogisticCalibration c) { calibration_ = std::move(c); }
    const DetectorConfig& config() const { return config_; }
    const PredictionBuffer& buffer() const { return buffer_; }

private:
    double prior_ap(std::int64_t index) const;

    DetectorConfig config_;
    LogisticCalibration calibration_;
    PredictionBuffer buffer_;
    std::deque<std::pair<std::int64_t, double>> recent_ap_;
    bool collecting_{false};
    std::vector<WsdRow> pending_rows_;
    int recalibrations_{0};
    int failed_recalibrations_{0};
};

}  // namespace streamguard::detector
