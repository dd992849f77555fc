#include "streamguard/config.hpp"
#include "streamguard/csv.hpp"
#include "streamguard/error.hpp"
#include "streamguard/pipeline.hpp"
#include "streamguard/sweep.hpp"
#include "streamguard/synth.hpp"
#include "streamguard/tuner.hpp"
#include "streamguard/tuning.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

namespace sg = streamguard;
using nlohmann::json;

namespace {

struct Common {
    std::string config_path;
    std::string input;
    std::uint64_t seed{0};
    bool seed_set{false};
    std::string label_col;
    std::string timestamp_col;
    bool no_header{false};
    std::vector<std::string> ordinal_cols;
    std::vector<std::string> drop_cols;
    bool no_drift_adapt{false};
    bool no_pca{false};
    std::string semantics;
};

void add_config_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "Pipeline config JSON");
    cmd->add_option("--seed", c.seed, "Overrides the config seed")->each([&c](const std::string&) { c.seed_set = true; });
    cmd->add_flag("--no-drift-adapt", c.no_drift_adapt, "Score only; never retrain");
    cmd->add_flag("--no-pca", c.no_pca, "Feed standardized features to the predictor");
    cmd->add_option("--semantics", c.semantics, "Threshold comparison")->check(CLI::IsMember({"difference", "ratio"}));
}

void add_input_flags(CLI::App* cmd, Common& c) {
    cmd->add_option("-i,--input", c.input, "Input CSV")->required();
    cmd->add_option("--label-col", c.label_col, "Label column (evaluation only)");
    cmd->add_option("--timestamp-col", c.timestamp_col, "Timestamp column");
    cmd->add_flag("--no-header", c.no_header, "Columns are named c0, c1, ...");
    cmd->add_option("--ordinal", c.ordinal_cols, "Categorical columns to encode as level indices");
    cmd->add_option("--drop", c.drop_cols, "Columns to ignore");
}

sg::harness::PipelineConfig resolve_config(const Common& c) {
    auto config = c.config_path.empty() ? sg::harness::PipelineConfig{} : sg::harness::PipelineConfig::load(c.config_path);
    if (c.seed_set) {
        config.seed = c.seed;
        config.lstm.seed = c.seed;
    }
    if (c.no_drift_adapt) config.drift_adaptation = false;
    if (c.no_pca) config.preprocess.use_pca = false;
    if (!c.semantics.empty()) config.drift.semantics = sg::drift::semantics_from_string(c.semantics);
    config.validate();
    return config;
}

sg::harness::CsvDataset load_input(const Common& c) {
    sg::harness::CsvSchema schema;
    schema.has_header = !c.no_header;
    schema.label_col = c.label_col;
    schema.timestamp_col = c.timestamp_col;
    schema.ordinal_cols.insert(c.ordinal_cols.begin(), c.ordinal_cols.end());
    schema.drop_cols.insert(c.drop_cols.begin(), c.drop_cols.end());
    auto data = sg::harness::load_csv(c.input, schema);
    std::fprintf(stderr, "loaded %zu records, %zu features", data.stream.size(), data.feature_names.size());
    if (data.labelled) std::fprintf(stderr, ", anomaly fraction %.2f%%", 100.0 * data.anomaly_fraction());
    std::fprintf(stderr, "\n");
    return data;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw sg::DataError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw sg::DataError("'" + path + "': " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw sg::DataError("cannot write '" + path + "'");
    out << text;
}

template <typename T>
std::vector<T> parse_list(const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto v = sg::harness::parse_number(item);
        if (!v) throw sg::ConfigError("bad list entry '" + item + "'");
        out.push_back(static_cast<T>(*v));
    }
    if (out.empty()) throw sg::ConfigError("empty list");
    return out;
}

/// Verdict stream sink: CSV rows or JSON lines.
class VerdictWriter {
public:
    VerdictWriter(const std::string& path, std::string format) : format_(std::move(format)) {
        if (!path.empty() && path != "-") {
            file_ = std::make_unique<std::ofstream>(path);
            if (!*file_) throw sg::DataError("cannot write '" + path + "'");
        }
        out().precision(10);
        if (format_ == "csv") out() << "index,sid,ap,flag,sources_used,condition,elapsed_ns\n";
    }

    void write(const sg::harness::VerdictRow& r) {
        const auto& v = r.verdict;
        const bool scored = !v.unscored;
        if (format_ == "csv") {
            out() << v.index << ',';
            if (scored) out() << v.sid;
            out() << ',' << v.ap << ',' << (v.is_anomalous ? 1 : 0) << ',' << v.sources_used << ','
                  << sg::drift::to_string(r.condition) << ',' << r.elapsed_ns << '\n';
        } else {
            json j = {{"index", v.index},
                      {"sid", scored ? json(v.sid) : json(nullptr)},
                      {"ap", v.ap},
                      {"flag", v.is_anomalous},
                      {"sources_used", v.sources_used},
                      {"condition", sg::drift::to_string(r.condition)},
                      {"elapsed_ns", r.elapsed_ns}};
            out() << j.dump() << '\n';
        }
    }

private:
    std::ostream& out() { return file_ ? *file_ : std::cout; }

    std::string format_;
    std::unique_ptr<std::ofstream> file_;
};

void write_drift_log(const std::string& path, const std::vector<sg::drift::DriftEvent>& events) {
    if (path.empty()) return;
    std::ostringstream out;
    for (const auto& e : events) out << e.to_json().dump() << '\n';
    write_text(path, out.str());
}

void print_summary(const sg::harness::RunReport& r) {
    std::fprintf(stderr, "records: %zu offline, %zu real-time, %zu scored\n", r.offline_records, r.realtime_records,
                 r.scored_records);
    if (r.auc_available) std::fprintf(stderr, "AUC: %.4f\n", r.auc);
    std::fprintf(stderr, "avg_exec_ms: %.4f (%.0f records/s)\n", r.avg_exec_ms, r.proc_rate);
    std::fprintf(stderr, "retrains: %zu, alerts: %d\n", r.retrain_indices.size(), r.alert_entries);
}

sg::harness::StreamSpec synth_spec_from_flags(const std::string& spec_path, std::size_t length, std::size_t dims,
                                              double anomaly_rate, std::int64_t drift_at, double drift_sigma,
                                              std::uint64_t seed) {
    if (!spec_path.empty()) return sg::harness::StreamSpec::from_json(read_json(spec_path));
    sg::harness::StreamSpec spec;
    spec.length = length;
    spec.dims = dims;
    spec.anomaly_rate = anomaly_rate;
    spec.seed = seed;
    if (drift_at >= 0) {
        sg::harness::DriftSpec d;
        d.start = drift_at;
        d.magnitude = drift_sigma * sg::harness::FeatureSpec{}.stationary_std();
        spec.drifts.push_back(d);
    }
    spec.validate();
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Streaming multivariate anomaly detection with drift adaptation"};
    app.require_subcommand(1);
    Common c;

    // fit
    std::string model_out = "model.json";
    auto* fit = app.add_subcommand("fit", "Run the offline phase and save the fitted model");
    add_config_flags(fit, c);
    add_input_flags(fit, c);
    fit->add_option("-o,--output", model_out, "Fitted model JSON");

    // run
    std::string model_in;
    std::string verdicts_out = "-";
    std::string emit = "csv";
    std::string drift_log;
    std::string report_out;
    bool live_only = false;
    auto* run = app.add_subcommand("run", "Run the real-time phase (fits first unless --model is given)");
    add_config_flags(run, c);
    add_input_flags(run, c);
    run->add_option("--model", model_in, "Model from `fit`; the input then holds the full stream");
    run->add_flag("--live-only", live_only, "With --model: the input holds only the records after the offline segment");
    run->add_option("--emit", emit, "Verdict format")->check(CLI::IsMember({"csv", "jsonl"}));
    run->add_option("--verdicts", verdicts_out, "Verdict stream destination ('-' = stdout, '' = none)");
    run->add_option("--drift-log", drift_log, "Drift event log (JSON lines)");
    run->add_option("--report", report_out, "Run report JSON");

    // synth
    std::string spec_path;
    std::string synth_out = "-";
    std::size_t length = 20000;
    std::size_t dims = 6;
    double anomaly_rate = 0.02;
    std::int64_t drift_at = -1;
    double drift_sigma = 5.0;
    std::uint64_t synth_seed = 1;
    std::string truth_out;
    auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic stream");
    synth->add_option("--spec", spec_path, "StreamSpec JSON (overrides the shape flags)");
    synth->add_option("--length", length);
    synth->add_option("--dims", dims);
    synth->add_option("--anomaly-rate", anomaly_rate);
    synth->add_option("--drift-at", drift_at, "Index of a sudden level shift on all features");
    synth->add_option("--drift-sigma", drift_sigma, "Shift size in stationary standard deviations");
    synth->add_option("--seed", synth_seed);
    synth->add_option("-o,--output", synth_out, "CSV destination");
    synth->add_option("--truth", truth_out, "Ground truth JSON (spec, anomaly indices)");

    // tune
    std::string target = "realtimeoaw";
    sg::tuner::GaSettings ga;
    std::string history_out;
    std::string tuned_out;
    double val_fraction = 0.2;
    auto* tune = app.add_subcommand("tune", "Genetic search over drift or LSTM settings, or seasonal period selection");
    add_config_flags(tune, c);
    add_input_flags(tune, c);
    tune->add_option("--target", target)->check(CLI::IsMember({"realtimeoaw", "lstm", "seasonal"}));
    std::vector<int> periods{24, 72, 168};
    tune->add_option("--periods", periods, "Seasonal target: candidate periods")->delimiter(',');
    tune->add_option("--population", ga.population);
    tune->add_option("--generations", ga.max_time, "Generation budget, initial population included");
    tune->add_option("--crossover", ga.crossover_rate);
    tune->add_option("--mutation", ga.mutation_rate);
    tune->add_option("--threads", ga.threads);
    tune->add_option("--ga-seed", ga.seed);
    tune->add_option("--val-fraction", val_fraction, "LSTM and seasonal targets: trailing share of offline data held out");
    tune->add_option("--history", history_out, "Per-generation CSV");
    tune->add_option("-o,--output", tuned_out, "Config with the best genome applied");

    // sweep-dim
    std::string dims_list = "6,12,18,24,30";
    int repeats = 3;
    std::string sweep_out = "-";
    auto* sweep_dim = app.add_subcommand("sweep-dim", "Execution time against dimensionality");
    add_config_flags(sweep_dim, c);
    add_input_flags(sweep_dim, c);
    sweep_dim->add_option("--dims", dims_list, "Comma-separated D values");
    sweep_dim->add_option("--repeats", repeats);
    sweep_dim->add_option("-o,--output", sweep_out);

    // sweep-threshold
    std::string thresholds = "0.55,0.6,0.65,0.7,0.75";
    std::string horizons = "10,15,20,30";
    auto* sweep_thr = app.add_subcommand("sweep-threshold", "AUC and execution time over T and L");
    add_config_flags(sweep_thr, c);
    add_input_flags(sweep_thr, c);
    sweep_thr->add_option("--thresholds", thresholds);
    sweep_thr->add_option("--horizons", horizons);
    sweep_thr->add_option("-o,--output", sweep_out);

    // report
    std::string report_in;
    auto* report = app.add_subcommand("report", "Summarize a run report JSON");
    report->add_option("report", report_in)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*fit) {
            const auto config = resolve_config(c);
            const auto data = load_input(c);
            const std::size_t n_off = sg::harness::offline_length(config, data.stream.size());
            const sg::RawStream offline(data.stream.begin(), data.stream.begin() + static_cast<std::ptrdiff_t>(n_off));
            const auto model = sg::harness::fit_offline(config, offline);
            json doc = {{"config", config.to_json()}, {"model", model.to_json()}};
            write_text(model_out, doc.dump() + "\n");
            std::fprintf(stderr, "fitted on %zu records, train loss %.6g, mu %.6g, C %.6g\n", n_off,
                         model.train_report.final_loss, model.calibration.mu, model.calibration.c);
        } else if (*run) {
            auto config = resolve_config(c);
            const auto data = load_input(c);
            sg::harness::RunOptions options;
            options.keep_verdicts = true;
            std::unique_ptr<VerdictWriter> writer;
            if (!verdicts_out.empty()) {
                writer = std::make_unique<VerdictWriter>(verdicts_out, emit);
                options.on_verdict = [&writer](const sg::harness::VerdictRow& r) { writer->write(r); };
            }
            sg::harness::RunResult result;
            if (model_in.empty()) {
                result = sg::harness::run_pipeline(config, data.stream, options);
            } else {
                const json doc = read_json(model_in);
                const auto model = sg::harness::OfflineModel::from_json(doc.at("model"));
                const auto start = static_cast<std::int64_t>(model.offline_records);
                sg::RawStream live = data.stream;
                if (!live_only) {
                    if (live.size() <= model.offline_records) throw sg::DataError("input ends inside the offline segment");
                    live.erase(live.begin(), live.begin() + static_cast<std::ptrdiff_t>(model.offline_records));
                }
                result = sg::harness::run_realtime(config, model, live, start, options);
            }
            write_drift_log(drift_log, result.events);
            if (!report_out.empty()) write_text(report_out, result.report.to_json().dump(2) + "\n");
            print_summary(result.report);
        } else if (*synth) {
            const auto spec = synth_spec_from_flags(spec_path, length, dims, anomaly_rate, drift_at, drift_sigma, synth_seed);
            const auto stream = sg::harness::synth_stream(spec);
            std::ostringstream out;
            sg::harness::write_csv(stream.stream, out);
            write_text(synth_out, out.str());
            if (!truth_out.empty()) {
                json truth = {{"spec", spec.to_json()}, {"anomaly_indices", stream.anomaly_indices}};
                write_text(truth_out, truth.dump(2) + "\n");
            }
        } else if (*tune) {
            auto config = resolve_config(c);
            const auto data = load_input(c);
            const std::size_t n_off = sg::harness::offline_length(config, data.stream.size());
            const sg::RawStream offline(data.stream.begin(), data.stream.begin() + static_cast<std::ptrdiff_t>(n_off));
            if (target == "seasonal") {
                const auto pick = sg::tuner::select_seasonal_period(config, offline, periods, val_fraction);
                for (const auto& cand : pick.candidates) {
                    std::fprintf(stderr, "period %4d  validation mse %.6g%s%s\n", cand.period, cand.validation_mse,
                                 cand.note.empty() ? "" : "  ", cand.note.c_str());
                }
                std::fprintf(stderr, "selected period %d\n", pick.period);
                config.preprocess.seasonal_period = pick.period;
                write_text(tuned_out, config.to_json().dump(2) + "\n");
                return 0;
            }
            ga.validate();
            sg::tuner::SearchSpace space;
            sg::tuner::GaResult result;
            if (target == "realtimeoaw") {
                space = sg::tuner::SearchSpace::realtimeoaw();
                sg::tuner::OawEvaluationContext ctx;
                ctx.config = config;
                ctx.offline = sg::harness::fit_offline(config, offline);
                ctx.live.assign(data.stream.begin() + static_cast<std::ptrdiff_t>(n_off), data.stream.end());
                ctx.start_position = static_cast<std::int64_t>(n_off);
                result = sg::tuner::ga_optimize(
                    space, [&](const sg::tuner::Genome& g) { return sg::tuner::evaluate_realtimeoaw_config(space, g, ctx); },
                    ga);
                config.drift = sg::tuner::decode_drift_config(space, result.best.genome, config.drift);
            } else {
                space = sg::tuner::SearchSpace::lstm();
                const auto pre = sg::preprocess::Preprocessor::fit(offline, config.preprocess);
                const auto records = pre.transform_all(sg::preprocess::clean(offline));
                const auto cut = static_cast<std::size_t>((1.0 - val_fraction) * static_cast<double>(records.size()));
                const std::span<const sg::ProcessedRecord> all(records);
                const auto steps = static_cast<std::size_t>(config.lstm.time_step);
                const auto horizon = static_cast<std::size_t>(config.detector.horizon);
                const auto train_set = sg::predictor::build_pairs(all.first(cut), steps, horizon);
                const auto val_set = sg::predictor::build_pairs(all.subspan(cut), steps, horizon);
                result = sg::tuner::ga_optimize(
                    space,
                    [&](const sg::tuner::Genome& g) {
                        return sg::tuner::evaluate_lstm_config(space, g, config.lstm, pre.feature_dim(), pre.raw_dim(),
                                                               horizon, train_set, val_set);
                    },
                    ga);
                config.lstm = sg::tuner::decode_lstm_hyperparams(space, result.best.genome, config.lstm);
            }
            for (const auto& d : result.diagnostics) std::fprintf(stderr, "%s\n", d.c_str());
            if (!history_out.empty()) write_text(history_out, sg::tuner::history_csv(space, result));
            std::fprintf(stderr, "best fitness %.6g after %d evaluations\n", result.best.fitness.value, result.evaluations);
            write_text(tuned_out, config.to_json().dump(2) + "\n");
        } else if (*sweep_dim) {
            const auto config = resolve_config(c);
            const auto data = load_input(c);
            const auto rows = sg::harness::dimension_sweep(config, data.stream, parse_list<std::size_t>(dims_list), repeats);
            write_text(sweep_out, sg::harness::to_csv(rows));
        } else if (*sweep_thr) {
            const auto config = resolve_config(c);
            const auto data = load_input(c);
            const auto rows = sg::harness::threshold_horizon_sweep(config, data.stream, parse_list<double>(thresholds),
                                                                   parse_list<int>(horizons));
            write_text(sweep_out, sg::harness::to_csv(rows));
        } else if (*report) {
            const json r = read_json(report_in);
            std::cout << "offline records   " << r.value("offline_records", 0) << '\n'
                      << "real-time records " << r.value("realtime_records", 0) << '\n'
                      << "AUC               " << (r.contains("auc") && !r["auc"].is_null() ? r["auc"].dump() : "n/a") << '\n'
                      << "avg_exec_ms       " << r.value("avg_exec_ms", 0.0) << '\n'
                      << "proc_rate         " << r.value("proc_rate", 0.0) << '\n'
                      << "retrains          " << r.value("retrain_indices", json::array()).size() << '\n';
            if (r.contains("latency_ms")) {
                for (const auto& [stage, ms] : r["latency_ms"].items()) std::cout << "  " << stage << "  " << ms.dump() << '\n';
            }
        }
    } catch (const sg::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const sg::NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const sg::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    }
    return 0;
}
