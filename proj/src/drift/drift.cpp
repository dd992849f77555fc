#include "streamguard/drift.hpp"

#include "streamguard/error.hpp"

#include <algorithm>

namespace streamguard::drift {

std::string to_string(Semantics s) { return s == Semantics::difference ? "difference" : "ratio"; }

std::string to_string(Condition c) {
    switch (c) {
        case Condition::normal: return "normal";
        case Condition::alert: return "alert";
        case Condition::drift: return "drift";
    }
    return "unknown";
}

Semantics semantics_from_string(const std::string& s) {
    if (s == "difference") return Semantics::difference;
    if (s == "ratio") return Semantics::ratio;
    throw ConfigError("unknown threshold semantics '" + s + "' (expected difference or ratio)");
}

nlohmann::json DriftConfig::to_json() const {
    return {{"alert_threshold", alert_threshold},
            {"drift_threshold", drift_threshold},
            {"sliding_window", sliding_window},
            {"max_adaptive_window", max_adaptive_window},
            {"semantics", to_string(semantics)},
            {"escalate", escalate},
            {"union_retrain", union_retrain},
            {"min_retrain_records", min_retrain_records}};
}

DriftConfig DriftConfig::from_json(const nlohmann::json& d) {
    DriftConfig c;
    c.alert_threshold = d.value("alert_threshold", c.alert_threshold);
    c.drift_threshold = d.value("drift_threshold", c.drift_threshold);
    c.sliding_window = d.value("sliding_window", c.sliding_window);
    c.max_adaptive_window = d.value("max_adaptive_window", c.max_adaptive_window);
    c.semantics = semantics_from_string(d.value("semantics", to_string(c.semantics)));
    c.escalate = d.value("escalate", c.escalate);
    c.union_retrain = d.value("union_retrain", c.union_retrain);
    c.min_retrain_records = d.value("min_retrain_records", c.min_retrain_records);
    return c;
}

void DriftConfig::validate() const {
    if (!(alert_threshold > 0.0)) throw ConfigError("alert threshold A_th must be positive");
    if (!(drift_threshold > 0.0)) throw ConfigError("drift threshold D_th must be positive");
    if (sliding_window < 1) throw ConfigError("sliding window L_s must be >= 1");
    if (max_adaptive_window <= sliding_window) {
        throw ConfigError("max adaptive window L_a must exceed the sliding window L_s");
    }
    if (min_retrain_records < 0) throw ConfigError("min_retrain_records must be >= 0");
}

double DriftConfig::drift_trigger_threshold() const {
    if (semantics == Semantics::difference && escalate) {
        return alert_threshold + drift_threshold;
    }
    return drift_threshold;
}

bool trigger(double current, double reference, double threshold, Semantics semantics) {
    if (semantics == Semantics::difference) {
        return current - reference >= threshold;
    }
    return current >= threshold * reference;
}

double anomaly_rate(std::span<const double> aps, double threshold) {
    if (aps.empty()) {
        throw DataError("anomaly rate of an empty window");
    }
    const auto above = std::count_if(aps.begin(), aps.end(), [&](double ap) { return ap > threshold; });
    return static_cast<double>(above) / static_cast<double>(aps.size());
}

SlidingArWindow::SlidingArWindow(int sliding_window, double threshold)
    : capacity_(static_cast<std::size_t>(sliding_window) + 1), threshold_(threshold) {
    if (sliding_window < 1) throw ConfigError("sliding window L_s must be >= 1");
}

double SlidingArWindow::push(double ap) {
    aps_.push_back(ap);
    if (ap > threshold_) ++above_;
    if (aps_.size() > capacity_) {
        if (aps_.front() > threshold_) --above_;
        aps_.pop_front();
    }
    return rate();
}

double SlidingArWindow::rate() const {
    if (aps_.empty()) {
        throw DataError("anomaly rate of an empty window");
    }
    return static_cast<double>(above_) / static_cast<double>(aps_.size());
}

nlohmann::json DriftEvent::to_json() const {
    return {{"index", index},
            {"transition", transition},
            {"ARWin_i", ar},
            {"reference_AR", reference_ar},
            {"adapt_win_len", adapt_win_len},
            {"retrain_ms", retrain_ms}};
}

DriftStateMachine::DriftStateMachine(const DriftConfig& config) : config_(config) {
    config_.validate();
}

std::optional<double> DriftStateMachine::lagged_rate() const {
    if (rates_.size() == static_cast<std::size_t>(config_.sliding_window) + 1) {
        return rates_.front();
    }
    return std::nullopt;
}

void DriftStateMachine::log(std::int64_t index, const char* transition, double ar, double ref,
                            double ms) {
    events_.push_back(DriftEvent{index, transition, ar, ref, adapt_win_.size(), ms});
}

bool DriftStateMachine::try_retrain(std::int64_t index, std::span<const ProcessedRecord> data,
                                    const RetrainFn& fn, const char* label, double ar, double ref) {
    // A pending retrain is retried every step; only the first deferral is logged.
    if (data.size() < static_cast<std::size_t>(config_.min_retrain_records)) {
        if (!pending_) log(index, "retrain_deferred", ar, ref);
        return false;
    }
    try {
        const double ms = fn(data);
        retrain_indices_.push_back(index);
        log(index, label, ar, ref, ms);
        return true;
    } catch (const InsufficientDataError&) {
        if (!pending_) log(index, "retrain_deferred", ar, ref);
        return false;
    }
}

StepResult DriftStateMachine::step(double ar, const ProcessedRecord& record,
                                   const std::deque<ProcessedRecord>& sliding,
                                   const RetrainFn& retrain) {
    ++step_;
    rates_.push_back(ar);
    if (rates_.size() > static_cast<std::size_t>(config_.sliding_window) + 1) {
        rates_.pop_front();
    }
    if (anchor_ && !anchor_rate_ && step_ == *anchor_ + config_.sliding_window) {
        anchor_rate_ = ar;
    }

    StepResult result;
    result.before = condition_;
    const auto lag = lagged_rate();
    const double ref = lag.value_or(0.0);
    const auto cap = static_cast<std::size_t>(config_.max_adaptive_window);

    switch (condition_) {
        case Condition::normal:
            if (lag && trigger(ar, *lag, config_.alert_threshold, config_.semantics)) {
                adapt_win_.push_back(record);
                condition_ = Condition::alert;
                ++alert_entries_;
                log(record.index, "normal->alert", ar, ref);
            }
            break;

        case Condition::alert: {
            const std::size_t collected = adapt_win_.size();
            if (lag && trigger(ar, *lag, config_.drift_trigger_threshold(), config_.semantics)) {
                condition_ = Condition::drift;
                anchor_ = step_;
                anchor_rate_.reset();
                log(record.index, "alert->drift", ar, ref);
                result.retrained =
                    try_retrain(record.index, adapt_win_, retrain, "retrain_on_entry", ar, ref);
                pending_ = !result.retrained;
                result.deferred = pending_;
            } else if (!lag || !trigger(ar, *lag, config_.alert_threshold, config_.semantics) ||
                       collected == cap) {
                adapt_win_.clear();
                condition_ = Condition::normal;
                log(record.index, "alert->normal", ar, ref);
            } else {
                adapt_win_.push_back(record);
            }
            break;
        }

        case Condition::drift: {
            const std::size_t collected = adapt_win_.size();
            const double anchor_ref = anchor_rate_.value_or(0.0);
            const bool recovered =
                anchor_rate_ && trigger(ar, *anchor_rate_, config_.alert_threshold, config_.semantics);
            if (recovered || collected == cap) {
                std::vector<ProcessedRecord> data;
                if (config_.union_retrain) {
                    data.reserve(adapt_win_.size() + sliding.size());
                    data.insert(data.end(), sliding.begin(), sliding.end());
                    data.insert(data.end(), adapt_win_.begin(), adapt_win_.end());
                    std::stable_sort(data.begin(), data.end(), [](const auto& a, const auto& b) {
                        return a.index < b.index;
                    });
                    data.erase(std::unique(data.begin(), data.end(),
                                           [](const auto& a, const auto& b) { return a.index == b.index; }),
                               data.end());
                } else {
                    data = adapt_win_;
                }
                result.retrained = try_retrain(record.index, data, retrain, "retrain_on_exit", ar, anchor_ref);
                pending_ = false;
                adapt_win_.clear();
                condition_ = Condition::normal;
                anchor_.reset();
                anchor_rate_.reset();
                log(record.index, "drift->normal", ar, anchor_ref);
            } else {
                adapt_win_.push_back(record);
                if (pending_ && adapt_win_.size() >= static_cast<std::size_t>(config_.min_retrain_records)) {
                    result.retrained =
                        try_retrain(record.index, adapt_win_, retrain, "retrain_on_entry", ar, anchor_ref);
                    pending_ = !result.retrained;
                }
            }
            break;
        }
    }
    result.after = condition_;
    return result;
}

}  // namespace streamguard::drift
