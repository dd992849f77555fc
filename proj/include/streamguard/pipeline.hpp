#pragma once

#include "streamguard/config.hpp"
#include "streamguard/detector.hpp"
#include "streamguard/drift.hpp"
#include "streamguard/lstm.hpp"
#include "streamguard/preprocess.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace streamguard::harness {

/// Holds the live model. Readers take a snapshot; a retrain builds a new
/// model aside and swaps it in, so scoring never sees a half-updated model.
class ModelSlot {
public:
    explicit ModelSlot(predictor::LstmModel model);

    std::shared_ptr<const predictor::LstmModel> load() const;
    void store(predictor::LstmModel model);
    int swaps() const;

private:
    mutable std::mutex mutex_;
    std::shared_ptr<const predictor::LstmModel> model_;
    int swaps_{0};
};

/// Everything the offline phase produces.
struct OfflineModel {
    preprocess::Preprocessor preprocessor;
    predictor::LstmModel model;
    detector::LogisticCalibration calibration;
    predictor::TrainReport train_report;
    std::size_t offline_records{0};
    /// Processed tail of the offline segment, used to warm the live ring
    /// and prediction buffer. At most L_s + 1 records.
    std::vector<ProcessedRecord> tail;
    /// Last cleaned raw record, the forward-fill source for live records.
    std::vector<double> last_values;

    nlohmann::json to_json() const;
    static OfflineModel from_json(const nlohmann::json& doc);
};

/// Offline phase: clean, standardize, PCA, seasonal profiles, train, then
/// calibrate (mu, C) on a replay over the offline records.
OfflineModel fit_offline(const PipelineConfig& config, const RawStream& offline);

/// Offline replay that produces the calibration table. Exposed for tests.
std::vector<detector::WsdRow> replay_wsd_rows(const predictor::LstmModel& model,
                                              const std::vector<ProcessedRecord>& records,
                                              std::size_t horizon);

struct VerdictRow {
    detector::AnomalyVerdict verdict;
    /// Index below L: excluded from AUC along with unscored records.
    bool warmup{false};
    std::optional<Label> label;
    drift::Condition condition{drift::Condition::normal};
    std::int64_t elapsed_ns{0};
};

/// Mean per-record milliseconds spent in each stage.
struct LatencyBreakdown {
    double preprocess_ms{0.0};
    double predict_ms{0.0};
    double detect_ms{0.0};
    double drift_ms{0.0};
    /// Retraining and model swaps, amortized over all records.
    double update_ms{0.0};
};

struct RunReport {
    double auc{0.0};
    bool auc_available{false};
    double avg_exec_ms{0.0};
    double proc_rate{0.0};
    std::size_t offline_records{0};
    std::size_t realtime_records{0};
    std::size_t scored_records{0};
    double offline_fraction{0.1};
    double overall_ar{0.0};
    double mean_window_ar{0.0};
    std::vector<std::int64_t> retrain_indices;
    std::optional<std::int64_t> first_drift_index;
    int alert_entries{0};
    int recalibrations{0};
    int failed_recalibrations{0};
    LatencyBreakdown latency;
    std::size_t max_live_records{0};
    std::size_t live_record_bound{0};
    double offline_train_loss{0.0};
    detector::LogisticCalibration calibration;
    nlohmann::json config;

    nlohmann::json to_json() const;
};

struct RunOptions {
    /// Keep one VerdictRow per live record.
    bool keep_verdicts{true};
    /// Called for each record after it is processed.
    std::function<void(const VerdictRow&)> on_verdict;
};

struct RunResult {
    RunReport report;
    std::vector<VerdictRow> verdicts;
    std::vector<drift::DriftEvent> events;
};

/// Real-time phase over `live`, whose first record sits at stream position
/// `start_position` (the seasonal phase and record indices continue from there).
RunResult run_realtime(const PipelineConfig& config, const OfflineModel& offline, const RawStream& live,
                       std::int64_t start_position, const RunOptions& options = {});

/// Splits the stream, runs both phases and reports.
RunResult run_pipeline(const PipelineConfig& config, const RawStream& stream, const RunOptions& options = {});

/// AUC over verdict rows with index in [from, to), skipping unscored, warm-up
/// and unlabelled rows. Returns nullopt when only one class remains.
std::optional<double> auc_between(const std::vector<VerdictRow>& rows, std::int64_t from, std::int64_t to);

/// Number of offline records for a stream of the given length.
std::size_t offline_length(const PipelineConfig& config, std::size_t stream_length);

}  // namespace streamguard::harness
