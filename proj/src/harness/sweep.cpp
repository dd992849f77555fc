#include "streamguard/sweep.hpp"

#include "streamguard/error.hpp"
#include "streamguard/metrics.hpp"
#include "streamguard/pipeline.hpp"

#include <algorithm>
#include <sstream>

namespace streamguard::harness {

RawStream select_dims(const RawStream& stream, std::size_t dims) {
    RawStream out = stream;
    for (auto& r : out) {
        if (r.values.size() < dims) {
            throw ConfigError("requested " + std::to_string(dims) + " dimensions from a " +
                              std::to_string(r.values.size()) + "-dimensional stream");
        }
        r.values.resize(dims);
    }
    return out;
}

namespace {

struct Split {
    RawStream offline;
    RawStream live;
    std::int64_t start{0};
};

Split split(const PipelineConfig& config, const RawStream& stream) {
    const std::size_t n_off = offline_length(config, stream.size());
    if (n_off >= stream.size()) throw DataError("stream leaves no real-time segment");
    Split s;
    s.offline.assign(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(n_off));
    s.live.assign(stream.begin() + static_cast<std::ptrdiff_t>(n_off), stream.end());
    s.start = static_cast<std::int64_t>(n_off);
    return s;
}

}  // namespace

std::vector<DimensionSweepRow> dimension_sweep(const PipelineConfig& config, const RawStream& stream,
                                               const std::vector<std::size_t>& dims, int repeats) {
    if (repeats < 1) throw ConfigError("sweep repeats must be >= 1");
    RunOptions quiet;
    quiet.keep_verdicts = false;
    std::vector<Split> splits;
    std::vector<OfflineModel> models;
    std::vector<DimensionSweepRow> rows(dims.size());
    for (std::size_t k = 0; k < dims.size(); ++k) {
        splits.push_back(split(config, select_dims(stream, dims[k])));
        models.push_back(fit_offline(config, splits.back().offline));
        rows[k].dims = dims[k];
    }
    // Repeats go round-robin over D so a burst of host load hits every D alike.
    for (int r = 0; r < repeats; ++r) {
        for (std::size_t k = 0; k < dims.size(); ++k) {
            const auto& s = splits[k];
            rows[k].samples.push_back(run_realtime(config, models[k], s.live, s.start, quiet).report.avg_exec_ms);
        }
    }
    for (auto& row : rows) {
        row.avg_exec_ms = median(row.samples);
        row.min_exec_ms = *std::min_element(row.samples.begin(), row.samples.end());
    }
    return rows;
}

std::vector<ThresholdSweepRow> threshold_horizon_sweep(const PipelineConfig& config, const RawStream& stream,
                                                       const std::vector<double>& thresholds,
                                                       const std::vector<int>& horizons) {
    std::vector<ThresholdSweepRow> rows;
    const Split s = split(config, stream);
    for (const int horizon : horizons) {
        PipelineConfig cell = config;
        cell.detector.horizon = horizon;
        const OfflineModel model = fit_offline(cell, s.offline);
        for (const double t : thresholds) {
            cell.detector.threshold = t;
            const RunResult run = run_realtime(cell, model, s.live, s.start);
            ThresholdSweepRow row;
            row.threshold = t;
            row.horizon = horizon;
            if (run.report.auc_available) row.auc = run.report.auc;
            row.avg_exec_ms = run.report.avg_exec_ms;
            row.retrains = run.report.retrain_indices.size();
            rows.push_back(row);
        }
    }
    return rows;
}

std::string to_csv(const std::vector<DimensionSweepRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "D,avg_exec_ms,min_exec_ms\n";
    for (const auto& r : rows) out << r.dims << ',' << r.avg_exec_ms << ',' << r.min_exec_ms << '\n';
    return out.str();
}

std::string to_csv(const std::vector<ThresholdSweepRow>& rows) {
    std::ostringstream out;
    out.precision(10);
    out << "T,L,AUC,avg_exec_ms,retrains\n";
    for (const auto& r : rows) {
        out << r.threshold << ',' << r.horizon << ',';
        if (r.auc) out << *r.auc;
        out << ',' << r.avg_exec_ms << ',' << r.retrains << '\n';
    }
    return out.str();
}

}  // namespace streamguard::harness
