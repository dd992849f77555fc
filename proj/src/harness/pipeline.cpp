#include "streamguard/pipeline.hpp"

#include "streamguard/error.hpp"
#include "streamguard/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>

namespace streamguard::harness {

using Clock = std::chrono::steady_clock;

namespace {

double ms_between(Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
}

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

template <typename Records>
std::vector<Vector> last_contexts(const Records& records, std::size_t end, std::size_t steps) {
    std::vector<Vector> context;
    context.reserve(steps);
    for (std::size_t k = end - steps; k < end; ++k) context.push_back(records[k].features);
    return context;
}

}  // namespace

ModelSlot::ModelSlot(predictor::LstmModel model)
    : model_(std::make_shared<const predictor::LstmModel>(std::move(model))) {}

std::shared_ptr<const predictor::LstmModel> ModelSlot::load() const {
    std::lock_guard lock(mutex_);
    return model_;
}

void ModelSlot::store(predictor::LstmModel model) {
    auto next = std::make_shared<const predictor::LstmModel>(std::move(model));
    std::lock_guard lock(mutex_);
    model_ = std::move(next);
    ++swaps_;
}

int ModelSlot::swaps() const {
    std::lock_guard lock(mutex_);
    return swaps_;
}

std::size_t offline_length(const PipelineConfig& config, std::size_t stream_length) {
    const auto n = static_cast<std::size_t>(std::floor(config.offline_fraction * static_cast<double>(stream_length)));
    return std::max<std::size_t>(1, n);
}

std::vector<detector::WsdRow> replay_wsd_rows(const predictor::LstmModel& model,
                                              const std::vector<ProcessedRecord>& records,
                                              std::size_t horizon) {
    detector::PredictionBuffer buffer(horizon);
    std::vector<detector::WsdRow> rows;
    const std::size_t steps = model.time_step();
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto row = buffer.observe(records[i].index, records[i].normalized, false);
        if (std::any_of(row.begin(), row.end(), [](double w) { return !std::isnan(w); })) {
            rows.push_back(std::move(row));
        }
        if (i + 1 >= steps) {
            buffer.push(model.forward(last_contexts(records, i + 1, steps), records[i].index));
        }
    }
    return rows;
}

OfflineModel fit_offline(const PipelineConfig& config, const RawStream& offline) {
    config.validate();
    const auto horizon = static_cast<std::size_t>(config.detector.horizon);
    const auto steps = static_cast<std::size_t>(config.lstm.time_step);
    if (offline.size() < steps + horizon + 1) {
        throw DataError("offline split of " + std::to_string(offline.size()) +
                        " records is too small for time_step + L = " + std::to_string(steps + horizon));
    }

    OfflineModel out;
    out.offline_records = offline.size();
    out.preprocessor = preprocess::Preprocessor::fit(offline, config.preprocess);
    const RawStream cleaned = preprocess::clean(offline);
    const std::vector<ProcessedRecord> records = out.preprocessor.transform_all(cleaned);

    const auto pairs = predictor::build_pairs(records, steps, horizon);
    if (pairs.empty()) {
        throw DataError("offline split holds no training pair");
    }
    auto model = predictor::LstmModel::init(config.lstm, out.preprocessor.feature_dim(),
                                            out.preprocessor.raw_dim(), horizon, config.lstm.seed);
    out.model = predictor::train(model, pairs, config.lstm, &out.train_report);
    out.model.set_trained_on(static_cast<std::int64_t>(offline.size()));

    auto rows = replay_wsd_rows(out.model, records, horizon);
    if (rows.size() > static_cast<std::size_t>(config.detector.reference_length)) {
        rows.resize(static_cast<std::size_t>(config.detector.reference_length));
    }
    // Rows before L lack some of their sources.
    const std::size_t first = rows.size() >= horizon + 2 ? horizon : 0;
    out.calibration = detector::calibrate(
        rows, {first, config.detector.calibration_tolerance, config.detector.max_calibration_iterations});

    const std::size_t keep = std::min(records.size(), static_cast<std::size_t>(config.drift.sliding_window) + 1);
    out.tail.assign(records.end() - static_cast<std::ptrdiff_t>(keep), records.end());
    out.last_values = cleaned.back().values;
    return out;
}

RunResult run_realtime(const PipelineConfig& config, const OfflineModel& offline, const RawStream& live,
                       std::int64_t start_position, const RunOptions& options) {
    config.validate();
    const auto horizon = static_cast<std::size_t>(config.detector.horizon);
    const auto steps = static_cast<std::size_t>(config.lstm.time_step);
    const auto ring_capacity = static_cast<std::size_t>(config.drift.sliding_window) + 1;
    const auto& pre = offline.preprocessor;
    if (offline.model.time_step() != steps || offline.model.horizon() != horizon) {
        throw ConfigError("fitted model does not match the configured time_step and horizon");
    }

    RunResult result;
    RunReport& report = result.report;
    report.config = config.to_json();
    report.offline_records = offline.offline_records;
    report.realtime_records = live.size();
    report.offline_fraction = config.offline_fraction;
    report.offline_train_loss = offline.train_report.final_loss;
    report.live_record_bound =
        static_cast<std::size_t>(config.drift.max_adaptive_window + config.drift.sliding_window + 1);

    ModelSlot slot(offline.model);
    detector::Detector det(config.detector, offline.calibration);
    drift::DriftConfig drift_config = config.drift;
    if (drift_config.min_retrain_records == 0) {
        drift_config.min_retrain_records = static_cast<int>(steps + horizon);
    }
    drift::DriftStateMachine machine(drift_config);
    drift::SlidingArWindow window(config.drift.sliding_window, config.detector.threshold);

    // Warm the record ring and the prediction buffer on the offline tail so
    // the first live record already has all of its sources.
    std::deque<ProcessedRecord> ring;
    const std::int64_t warm_from =
        offline.tail.empty() ? 0 : offline.tail.back().index - 2 * static_cast<std::int64_t>(horizon);
    for (const auto& r : offline.tail) {
        ring.push_back(r);
        if (ring.size() > ring_capacity) ring.pop_front();
        if (r.index < warm_from) continue;
        det.score(r.index, r.normalized);
        if (ring.size() >= steps) {
            det.push_prediction(slot.load()->forward(last_contexts(ring, ring.size(), steps), r.index));
        }
    }

    double update_ms = 0.0;
    const drift::RetrainFn retrain_fn = [&](std::span<const ProcessedRecord> data) {
        const auto t0 = Clock::now();
        auto res = predictor::retrain(*slot.load(), data, config.lstm, config.retrain_mode);
        slot.store(std::move(res.model));
        det.request_recalibration();
        const double ms = ms_between(t0, Clock::now());
        update_ms += ms;
        return ms;
    };

    double t_pre = 0.0, t_pred = 0.0, t_det = 0.0, t_drift = 0.0, t_total = 0.0;
    double window_ar_sum = 0.0;
    std::size_t window_ar_count = 0;
    std::size_t above = 0;
    std::vector<double> previous = offline.last_values;
    if (options.keep_verdicts) result.verdicts.reserve(live.size());

    for (std::size_t k = 0; k < live.size(); ++k) {
        const std::int64_t position = start_position + static_cast<std::int64_t>(k);
        const auto t0 = Clock::now();

        std::vector<double> values = live[k].values;
        if (values.size() != pre.raw_dim()) {
            throw DataError("live record " + std::to_string(position) + " has " + std::to_string(values.size()) +
                            " values, expected " + std::to_string(pre.raw_dim()));
        }
        preprocess::fill_missing(values, previous);
        previous = values;
        ProcessedRecord processed = pre.transform(position, values);
        ring.push_back(processed);
        if (ring.size() > ring_capacity) ring.pop_front();
        const auto t1 = Clock::now();

        const detector::AnomalyVerdict verdict = det.score(position, processed.normalized);
        const auto t2 = Clock::now();

        if (ring.size() >= steps) {
            det.push_prediction(slot.load()->forward(last_contexts(ring, ring.size(), steps), position));
        }
        const auto t3 = Clock::now();

        const double update_before = update_ms;
        const double ar = window.push(verdict.ap);
        if (window.full()) {
            window_ar_sum += ar;
            ++window_ar_count;
            if (config.drift_adaptation) {
                machine.step(ar, processed, ring, retrain_fn);
            }
        }
        const auto t4 = Clock::now();

        const double stage_update = update_ms - update_before;
        t_pre += ms_between(t0, t1);
        t_det += ms_between(t1, t2);
        t_pred += ms_between(t2, t3);
        t_drift += ms_between(t3, t4) - stage_update;
        t_total += ms_between(t0, t4);

        report.max_live_records = std::max(report.max_live_records, ring.size() + machine.adapt_window().size());
        if (!verdict.unscored) {
            ++report.scored_records;
            if (verdict.ap > config.detector.threshold) ++above;
        }

        VerdictRow row;
        row.verdict = verdict;
        row.warmup = position < static_cast<std::int64_t>(horizon);
        row.label = live[k].label;
        row.condition = machine.condition();
        row.elapsed_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(t4 - t0).count();
        if (options.on_verdict) options.on_verdict(row);
        if (options.keep_verdicts) result.verdicts.push_back(row);
    }

    const double n = live.empty() ? 1.0 : static_cast<double>(live.size());
    report.avg_exec_ms = t_total / n;
    report.proc_rate = report.avg_exec_ms > 0.0 ? 1000.0 / report.avg_exec_ms : 0.0;
    report.latency = {t_pre / n, t_pred / n, t_det / n, t_drift / n, update_ms / n};
    report.overall_ar =
        report.scored_records ? static_cast<double>(above) / static_cast<double>(report.scored_records) : 0.0;
    report.mean_window_ar = window_ar_count ? window_ar_sum / static_cast<double>(window_ar_count) : 0.0;
    report.retrain_indices = machine.retrain_indices();
    report.alert_entries = machine.alert_entries();
    for (const auto& e : machine.events()) {
        if (e.transition == "alert->drift") {
            report.first_drift_index = e.index;
            break;
        }
    }
    report.recalibrations = det.recalibrations();
    report.failed_recalibrations = det.failed_recalibrations();
    report.calibration = det.calibration();
    report.calibration.reference_sids.clear();
    result.events = machine.events();

    if (options.keep_verdicts) {
        if (auto auc = auc_between(result.verdicts, std::numeric_limits<std::int64_t>::min(),
                                   std::numeric_limits<std::int64_t>::max())) {
            report.auc = *auc;
            report.auc_available = true;
        }
    }
    return result;
}

RunResult run_pipeline(const PipelineConfig& config, const RawStream& stream, const RunOptions& options) {
    config.validate();
    const std::size_t n_off = offline_length(config, stream.size());
    if (n_off >= stream.size()) {
        throw DataError("stream of " + std::to_string(stream.size()) + " records leaves no real-time segment");
    }
    const RawStream offline(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(n_off));
    const RawStream live(stream.begin() + static_cast<std::ptrdiff_t>(n_off), stream.end());
    const OfflineModel model = fit_offline(config, offline);
    return run_realtime(config, model, live, static_cast<std::int64_t>(n_off), options);
}

std::optional<double> auc_between(const std::vector<VerdictRow>& rows, std::int64_t from, std::int64_t to) {
    std::vector<double> scores;
    std::vector<int> labels;
    bool pos = false;
    bool neg = false;
    for (const auto& r : rows) {
        const auto i = r.verdict.index;
        if (i < from || i >= to || r.verdict.unscored || r.warmup || !r.label) continue;
        const int y = *r.label == Label::anomalous ? 1 : 0;
        scores.push_back(r.verdict.ap);
        labels.push_back(y);
        pos = pos || y == 1;
        neg = neg || y == 0;
    }
    if (!pos || !neg) return std::nullopt;
    return compute_auc(scores, labels);
}

nlohmann::json RunReport::to_json() const {
    nlohmann::json j;
    j["format"] = "streamguard.report";
    j["version"] = 1;
    j["auc"] = auc_available ? nlohmann::json(auc) : nlohmann::json(nullptr);
    j["avg_exec_ms"] = avg_exec_ms;
    j["proc_rate"] = proc_rate;
    j["offline_fraction"] = offline_fraction;
    j["offline_records"] = offline_records;
    j["realtime_records"] = realtime_records;
    j["scored_records"] = scored_records;
    j["overall_ar"] = overall_ar;
    j["mean_window_ar"] = mean_window_ar;
    j["retrain_indices"] = retrain_indices;
    j["first_drift_index"] = first_drift_index ? nlohmann::json(*first_drift_index) : nlohmann::json(nullptr);
    j["alert_entries"] = alert_entries;
    j["recalibrations"] = recalibrations;
    j["failed_recalibrations"] = failed_recalibrations;
    j["latency_ms"] = {{"preprocess", latency.preprocess_ms},
                       {"predict", latency.predict_ms},
                       {"detect", latency.detect_ms},
                       {"drift", latency.drift_ms},
                       {"update", latency.update_ms}};
    j["max_live_records"] = max_live_records;
    j["live_record_bound"] = live_record_bound;
    j["offline_train_loss"] = offline_train_loss;
    j["calibration"] = {{"mu", calibration.mu},
                        {"C", calibration.c},
                        {"converged", calibration.converged},
                        {"iterations", calibration.iterations}};
    j["config"] = config;
    return j;
}

nlohmann::json OfflineModel::to_json() const {
    nlohmann::json tail_json = nlohmann::json::array();
    for (const auto& r : tail) {
        tail_json.push_back({{"index", r.index}, {"normalized", vector_json(r.normalized)},
                             {"features", vector_json(r.features)}});
    }
    return {{"format", "streamguard.offline_model"},
            {"version", 1},
            {"preprocessor", preprocessor.to_json()},
            {"model", model.to_json()},
            {"calibration",
             {{"mu", calibration.mu},
              {"C", calibration.c},
              {"converged", calibration.converged},
              {"iterations", calibration.iterations}}},
            {"train_loss", {{"initial", train_report.initial_loss}, {"final", train_report.final_loss}}},
            {"offline_records", offline_records},
            {"tail", tail_json},
            {"last_values", last_values}};
}

OfflineModel OfflineModel::from_json(const nlohmann::json& j) {
    OfflineModel out;
    try {
        if (j.at("format").get<std::string>() != "streamguard.offline_model" || j.at("version").get<int>() != 1) {
            throw DataError("not a version-1 offline model document");
        }
        out.preprocessor = preprocess::Preprocessor::from_json(j.at("preprocessor"));
        out.model = predictor::LstmModel::from_json(j.at("model"));
        const auto& c = j.at("calibration");
        out.calibration.mu = c.at("mu").get<double>();
        out.calibration.c = c.at("C").get<double>();
        out.calibration.converged = c.at("converged").get<bool>();
        out.calibration.iterations = c.at("iterations").get<int>();
        out.train_report.initial_loss = j.at("train_loss").at("initial").get<double>();
        out.train_report.final_loss = j.at("train_loss").at("final").get<double>();
        out.offline_records = j.at("offline_records").get<std::size_t>();
        for (const auto& r : j.at("tail")) {
            out.tail.push_back(ProcessedRecord{r.at("index").get<std::int64_t>(), vector_from(r.at("normalized")),
                                               vector_from(r.at("features"))});
        }
        out.last_values = j.at("last_values").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed offline model document: ") + e.what());
    }
    return out;
}

}  // namespace streamguard::harness
