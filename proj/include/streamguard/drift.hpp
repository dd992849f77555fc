#pragma once

#include "streamguard/record.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace streamguard::drift {

/// How a current window AR is compared against a reference AR.
/// difference: current - reference >= threshold. ratio: current >= threshold * reference.
enum class Semantics { difference, ratio };
enum class Condition { normal, alert, drift };

std::string to_string(Semantics s);
std::string to_string(Condition c);
Semantics semantics_from_string(const std::string& s);

struct DriftConfig {
    double alert_threshold{0.092};
    double drift_threshold{0.03};
    int sliding_window{270};
    int max_adaptive_window{2500};
    Semantics semantics{Semantics::difference};
    /// Difference mode only: Drift fires at alert + drift threshold rather than
    /// at the drift threshold alone.
    bool escalate{true};
    /// Drift-exit retraining also uses the sliding-window records.
    bool union_retrain{true};
    /// Records required before a deferred Drift-entry retrain is attempted.
    /// 0 means time_step + horizon, filled in by the pipeline.
    int min_retrain_records{0};

    void validate() const;
    double drift_trigger_threshold() const;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults. Does not validate.
    static DriftConfig from_json(const nlohmann::json& doc);
};

bool trigger(double current, double reference, double threshold, Semantics semantics);

/// Fraction of `aps` strictly above `threshold`.
double anomaly_rate(std::span<const double> aps, double threshold);

/// FIFO of the last L_s + 1 anomaly probabilities with a running count of
/// those above T.
class SlidingArWindow {
public:
    SlidingArWindow(int sliding_window, double threshold);

    /// Adds AP(i) and returns ARWin_i.
    double push(double ap);
    double rate() const;
    bool full() const { return aps_.size() == capacity_; }
    std::size_t size() const { return aps_.size(); }

private:
    std::size_t capacity_;
    double threshold_;
    std::deque<double> aps_;
    std::size_t above_{0};
};

struct DriftEvent {
    std::int64_t index{0};
    std::string transition;
    double ar{0.0};
    double reference_ar{0.0};
    std::size_t adapt_win_len{0};
    double retrain_ms{0.0};

    nlohmann::json to_json() const;
};

struct StepResult {
    Condition before{Condition::normal};
    Condition after{Condition::normal};
    bool retrained{false};
    bool deferred{false};
};

/// Retrains on the given records and returns the wall time in ms. Throws
/// InsufficientDataError when no training pair can be formed yet.
using RetrainFn = std::function<double(std::span<const ProcessedRecord>)>;

/// Normal/Alert/Drift state machine over a stream of window anomaly rates.
/// Step k consumes ARWin_k of a full window. Triggering compares against
/// ARWin_{k-L_s}, so it starts at the (L_s + 1)-th step.
class DriftStateMachine {
public:
    explicit DriftStateMachine(const DriftConfig& config);

    /// `sliding` holds the most recent records (the fixed window) used by the
    /// union retrain at Drift exit.
    StepResult step(double ar, const ProcessedRecord& record,
                    const std::deque<ProcessedRecord>& sliding, const RetrainFn& retrain);

    Condition condition() const { return condition_; }
    const std::vector<ProcessedRecord>& adapt_window() const { return adapt_win_; }
    std::optional<std::int64_t> drift_anchor() const { return anchor_; }
    bool retrain_pending() const { return pending_; }
    const std::vector<DriftEvent>& events() const { return events_; }
    const std::vector<std::int64_t>& retrain_indices() const { return retrain_indices_; }
    int alert_entries() const { return alert_entries_; }
    std::int64_t steps() const { return step_; }
    const DriftConfig& config() const { return config_; }

private:
    std::optional<double> lagged_rate() const;
    bool try_retrain(std::int64_t index, std::span<const ProcessedRecord> data, const RetrainFn& fn,
                     const char* label, double ar, double ref);
    void log(std::int64_t index, const char* transition, double ar, double ref, double ms = 0.0);

    DriftConfig config_;
    Condition condition_{Condition::normal};
    std::vector<ProcessedRecord> adapt_win_;
    std::deque<double> rates_;  // ARWin_{k-L_s} .. ARWin_k
    std::int64_t step_{-1};
    std::optional<std::int64_t> anchor_;
    std::optional<double> anchor_rate_;
    bool pending_{false};
    std::vector<DriftEvent> events_;
    std::vector<std::int64_t> retrain_indices_;
    int alert_entries_{0};
};

}  // namespace streamguard::drift
