#pragma once

#include "streamguard/record.hpp"

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace streamguard::harness {

/// Deterministic part of one feature: level + slope * t + amplitude * sin(2 pi t / period + phase),
/// plus Gaussian noise of the given sigma.
struct FeatureSpec {
    double level{0.0};
    double slope{0.0};
    double amplitude{1.0};
    double period{24.0};
    double phase{0.0};
    double noise{0.5};

    /// Standard deviation of the stationary signal (sine plus noise, no ramp).
    double stationary_std() const;
};

enum class DriftKind { sudden, gradual, recurring };

std::string to_string(DriftKind k);
DriftKind drift_kind_from_string(const std::string& s);

/// A level offset of `magnitude` on a feature subset (empty = all).
/// sudden: permanent from `start`. gradual: linear ramp over [start, start + span), then
/// permanent. recurring: applied on [start, start + span), then the original concept returns.
struct DriftSpec {
    DriftKind kind{DriftKind::sudden};
    std::int64_t start{0};
    std::int64_t span{0};
    double magnitude{0.0};
    std::vector<std::size_t> features;

    /// Offset contributed at index t, before masking by feature.
    double offset_at(std::int64_t t) const;
    bool touches(std::size_t feature) const;
};

/// Records [begin, end) become value * scale + offset on the listed features (empty = all).
struct AnomalySpec {
    std::int64_t begin{0};
    std::int64_t end{1};
    std::vector<std::size_t> features;
    double offset{0.0};
    double scale{1.0};
};

struct StreamSpec {
    std::size_t length{20000};
    std::size_t dims{6};
    /// One entry per dimension, or empty to derive sine features with
    /// per-feature phases from the seed.
    std::vector<FeatureSpec> features;
    std::vector<DriftSpec> drifts;
    std::vector<AnomalySpec> anomalies;
    /// Additional point anomalies drawn per record with this probability.
    double anomaly_rate{0.0};
    /// Auto-injected anomalies shift a random feature subset by this many
    /// stationary standard deviations, with a random sign.
    double anomaly_magnitude{4.0};
    std::uint64_t seed{1};

    /// Throws ConfigError for invalid ranges or overlapping drift intervals.
    void validate() const;
    /// Features after defaulting.
    std::vector<FeatureSpec> resolved_features() const;

    nlohmann::json to_json() const;
    static StreamSpec from_json(const nlohmann::json& doc);
};

struct SyntheticStream {
    RawStream stream;
    std::vector<std::int64_t> anomaly_indices;
    std::vector<DriftSpec> drifts;
    std::vector<FeatureSpec> features;
};

SyntheticStream synth_stream(const StreamSpec& spec);

/// Noise-free generating value of a feature at index t, drifts included.
double generating_mean(const StreamSpec& spec, const std::vector<FeatureSpec>& features,
                       std::size_t feature, std::int64_t t);

/// Writes timestamp, f0..f{D-1}, label columns.
void write_csv(const RawStream& stream, std::ostream& out);

}  // namespace streamguard::harness
