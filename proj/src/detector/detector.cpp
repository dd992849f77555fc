#include "streamguard/detector.hpp"

#include "streamguard/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

namespace streamguard::detector {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kExponentClamp = 700.0;
constexpr double kRelativeFloor = 1e-12;

template <typename A, typename B>
double squared_mean(const A& a, const B& b) {
    return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

void DetectorConfig::validate() const {
    if (horizon < 1) throw ConfigError("horizon L must be >= 1");
    if (reference_length < horizon) throw ConfigError("reference_length S must be >= horizon L");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold T must lie in (0, 1)");
    if (!(calibration_tolerance > 0.0)) throw ConfigError("calibration tolerance must be positive");
    if (max_calibration_iterations < 1) throw ConfigError("max calibration iterations must be >= 1");
}

double record_distance(const Vector& a, const Vector& b) {
    if (a.size() != b.size() || a.size() == 0) {
        throw DataError("record distance needs two records of equal, non-zero dimension (got " +
                        std::to_string(a.size()) + " and " + std::to_string(b.size()) + ")");
    }
    return squared_mean(a, b);
}

double weighted_sequence_distance(std::span<const double> rd_newest_first) {
    if (rd_newest_first.empty()) {
        throw DataError("weighted sequence distance over an empty sequence");
    }
    const auto n = static_cast<double>(rd_newest_first.size());
    double num = 0.0;
    double den = 0.0;
    for (std::size_t m = 1; m <= rd_newest_first.size(); ++m) {
        const double w = std::exp(n - static_cast<double>(m));
        num += w * rd_newest_first[m - 1];
        den += w;
    }
    return num / den;
}

double weighted_sequence_distance(std::span<const Vector> actual, std::span<const Vector> predicted) {
    if (actual.size() != predicted.size()) {
        throw DataError("actual and predicted sequences differ in length");
    }
    std::vector<double> rd(actual.size());
    for (std::size_t m = 0; m < actual.size(); ++m) {
        const std::size_t pos = actual.size() - 1 - m;
        rd[m] = record_distance(actual[pos], predicted[pos]);
    }
    return weighted_sequence_distance(rd);
}

double sequence_inconsistency(std::span<const double> wsd, std::span<const double> prior_ap) {
    if (wsd.size() != prior_ap.size()) {
        throw DataError("WSD and prior AP lists differ in length");
    }
    double num = 0.0;
    double den = 0.0;
    double plain = 0.0;
    int available = 0;
    for (std::size_t k = 0; k < wsd.size(); ++k) {
        if (std::isnan(wsd[k])) continue;
        const double w = 1.0 - prior_ap[k];
        num += w * wsd[k];
        den += w;
        plain += wsd[k];
        ++available;
    }
    if (available == 0) {
        throw DataError("no prediction source is available for this record");
    }
    if (den > 0.0) {
        return num / den;
    }
    return plain / available;
}

double anomaly_probability(double sid, const LogisticCalibration& calibration) {
    const double exponent =
        std::clamp(-calibration.c * (sid - calibration.mu), -kExponentClamp, kExponentClamp);
    return 1.0 / (1.0 + std::exp(exponent));
}

LogisticCalibration calibrate(std::span<const WsdRow> table, const CalibrationOptions& options) {
    if (table.size() < options.first_row + 2) {
        throw DataError("calibration needs at least two reference rows after the first " +
                        std::to_string(options.first_row));
    }
    LogisticCalibration cal;
    std::vector<double> ap(table.size(), 0.0);
    std::vector<double> weights_ap;
    std::vector<double> sids;
    sids.reserve(table.size());

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        sids.clear();
        for (std::size_t r = options.first_row; r < table.size(); ++r) {
            const WsdRow& row = table[r];
            weights_ap.assign(row.size(), 0.0);
            bool any = false;
            for (std::size_t k = 1; k <= row.size(); ++k) {
                weights_ap[k - 1] = r >= k ? ap[r - k] : 0.0;
                any = any || !std::isnan(row[k - 1]);
            }
            if (!any) continue;
            const double sid = sequence_inconsistency(row, weights_ap);
            ap[r] = anomaly_probability(sid, cal);
            sids.push_back(sid);
        }
        if (sids.size() < 2) {
            throw DataError("calibration table holds fewer than two scorable rows");
        }
        double mean = 0.0;
        for (double s : sids) mean += s;
        mean /= static_cast<double>(sids.size());
        double var = 0.0;
        for (double s : sids) var += (s - mean) * (s - mean);
        var /= static_cast<double>(sids.size());
        if (!(var > 0.0) || !std::isfinite(var)) {
            throw NumericError("reference SIDs have zero variance; the calibration segment is degenerate");
        }
        const double c = 1.0 / var;
        const double d_mu = std::abs(mean - cal.mu) / std::max(std::abs(cal.mu), kRelativeFloor);
        const double d_c = std::abs(c - cal.c) / std::max(cal.c, kRelativeFloor);
        cal.mu = mean;
        cal.c = c;
        cal.iterations = iter;
        if (!std::isfinite(c)) {
            throw NumericError("calibration growth rate overflowed");
        }
        if (std::max(d_mu, d_c) < options.tolerance) {
            cal.converged = true;
            break;
        }
    }
    cal.reference_sids = sids;
    return cal;
}

void PredictionBuffer::push(PredictedSequence seq) {
    if (seq.horizon() != horizon_) {
        throw DataError("prediction horizon " + std::to_string(seq.horizon()) +
                        " does not match buffer horizon " + std::to_string(horizon_));
    }
    if (!entries_.empty() && seq.origin <= entries_.back().seq.origin) {
        throw DataError("predictions must arrive in increasing origin order");
    }
    const std::int64_t oldest = seq.origin - static_cast<std::int64_t>(horizon_) + 1;
    while (!entries_.empty() && entries_.front().seq.origin < oldest) {
        entries_.pop_front();
    }
    entries_.push_back(Entry{std::move(seq)});
}

WsdRow PredictionBuffer::observe(std::int64_t index, const Vector& actual, bool parallel) {
    WsdRow row(horizon_, kNaN);
    for (const auto& e : entries_) {
        const std::int64_t k = index - e.seq.origin;
        if (k < 1 || k > static_cast<std::int64_t>(horizon_)) continue;
        if (actual.size() != e.seq.values.cols()) {
            throw DataError("record width does not match the prediction width");
        }
        if (e.consumed != k - 1) {
            throw DataError("records must be observed consecutively");
        }
    }
    // Entries are independent, so the per-source updates may run concurrently.
    auto update = [&](Entry& e) {
        const std::int64_t k = index - e.seq.origin;
        if (k < 1 || k > static_cast<std::int64_t>(horizon_)) return;
        const double rd = squared_mean(e.seq.values.row(k - 1).transpose(), actual);
        const double w = std::exp(static_cast<double>(k - 1));
        e.weighted_sum += w * rd;
        e.weight_total += w;
        e.consumed = static_cast<int>(k);
        row[static_cast<std::size_t>(k - 1)] = e.weighted_sum / e.weight_total;
    };

    const unsigned workers = parallel ? std::max(1u, std::thread::hardware_concurrency()) : 1u;
    if (workers <= 1 || entries_.size() < 2) {
        for (auto& e : entries_) update(e);
    } else {
        const std::size_t n = entries_.size();
        const std::size_t chunk = (n + workers - 1) / workers;
        std::vector<std::jthread> pool;
        for (std::size_t start = 0; start < n; start += chunk) {
            pool.emplace_back([&, start] {
                for (std::size_t e = start; e < std::min(n, start + chunk); ++e) update(entries_[e]);
            });
        }
    }
    return row;
}

std::optional<std::int64_t> PredictionBuffer::origin_for(std::int64_t index, int k) const {
    for (const auto& e : entries_) {
        if (e.seq.origin == index - k) return e.seq.origin;
    }
    return std::nullopt;
}

Detector::Detector(const DetectorConfig& config, LogisticCalibration calibration)
    : config_(config),
      calibration_(std::move(calibration)),
      buffer_(static_cast<std::size_t>(config.horizon)) {
    config_.validate();
    if (!(calibration_.c > 0.0)) {
        throw ConfigError("calibration growth rate C must be positive");
    }
}

double Detector::prior_ap(std::int64_t index) const {
    for (const auto& [i, ap] : recent_ap_) {
        if (i == index) return ap;
    }
    return 0.0;
}

AnomalyVerdict Detector::score(std::int64_t index, const Vector& actual) {
    AnomalyVerdict v;
    v.index = index;
    WsdRow row = buffer_.observe(index, actual, config_.parallel);
    std::vector<double> prior(row.size());
    for (std::size_t k = 1; k <= row.size(); ++k) {
        prior[k - 1] = prior_ap(index - static_cast<std::int64_t>(k));
        if (!std::isnan(row[k - 1])) ++v.sources_used;
    }
    if (v.sources_used > 0) {
        v.unscored = false;
        v.sid = sequence_inconsistency(row, prior);
        v.ap = anomaly_probability(v.sid, calibration_);
        v.is_anomalous = v.ap > config_.threshold;
    }

    recent_ap_.emplace_back(index, v.ap);
    while (recent_ap_.size() > static_cast<std::size_t>(config_.horizon)) {
        recent_ap_.pop_front();
    }

    if (collecting_ && v.sources_used > 0) {
        pending_rows_.push_back(std::move(row));
        if (pending_rows_.size() >= static_cast<std::size_t>(config_.reference_length)) {
            collecting_ = false;
            try {
                calibration_ = calibrate(pending_rows_, {0, config_.calibration_tolerance,
                                                         config_.max_calibration_iterations});
                ++recalibrations_;
            } catch (const NumericError&) {
                ++failed_recalibrations_;
            }
            pending_rows_.clear();
        }
    }
    return v;
}

void Detector::request_recalibration() {
    collecting_ = true;
    pending_rows_.clear();
}

}  // namespace streamguard::detector
