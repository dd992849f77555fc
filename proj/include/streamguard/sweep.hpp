#pragma once

#include "streamguard/config.hpp"
#include "streamguard/record.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace streamguard::harness {

struct DimensionSweepRow {
    std::size_t dims{0};
    /// Median over the repeats.
    double avg_exec_ms{0.0};
    /// Fastest repeat; the least disturbed by other load on the host.
    double min_exec_ms{0.0};
    std::vector<double> samples;
};

/// Runs the pipeline on the first D features for every D. The model is fitted
/// once per D and the real-time phase is timed `repeats` times.
std::vector<DimensionSweepRow> dimension_sweep(const PipelineConfig& config, const RawStream& stream,
                                               const std::vector<std::size_t>& dims, int repeats = 3);

struct ThresholdSweepRow {
    double threshold{0.0};
    int horizon{0};
    std::optional<double> auc;
    double avg_exec_ms{0.0};
    std::size_t retrains{0};
};

/// Grid over T and L. The offline phase runs once per L.
std::vector<ThresholdSweepRow> threshold_horizon_sweep(const PipelineConfig& config, const RawStream& stream,
                                                       const std::vector<double>& thresholds,
                                                       const std::vector<int>& horizons);

std::string to_csv(const std::vector<DimensionSweepRow>& rows);
std::string to_csv(const std::vector<ThresholdSweepRow>& rows);

/// Keeps the first `dims` features of every record.
RawStream select_dims(const RawStream& stream, std::size_t dims);

}  // namespace streamguard::harness
