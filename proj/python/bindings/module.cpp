#include "streamguard/config.hpp"
#include "streamguard/csv.hpp"
#include "streamguard/detector.hpp"
#include "streamguard/drift.hpp"
#include "streamguard/error.hpp"
#include "streamguard/metrics.hpp"
#include "streamguard/pipeline.hpp"
#include "streamguard/synth.hpp"
#include "streamguard/tuner.hpp"

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <deque>

namespace py = pybind11;
namespace sg = streamguard;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

json parse(const std::string& text) {
    try {
        return text.empty() ? json::object() : json::parse(text);
    } catch (const json::exception& e) {
        throw sg::ConfigError(std::string("malformed JSON: ") + e.what());
    }
}

sg::harness::PipelineConfig config_from(const std::string& text) {
    return text.empty() ? sg::harness::PipelineConfig{} : sg::harness::PipelineConfig::from_json(parse(text));
}

// Labels: 0 normal, 1 anomalous, -1 unknown.
sg::RawStream to_stream(const Array& values, const std::optional<Labels>& labels) {
    if (values.ndim() != 2) throw sg::DataError("values must be a 2-D array (records x features)");
    const auto m = values.shape(0), d = values.shape(1);
    if (labels && labels->size() != m) throw sg::DataError("labels and values differ in length");
    auto v = values.unchecked<2>();
    sg::RawStream out(static_cast<std::size_t>(m));
    for (py::ssize_t t = 0; t < m; ++t) {
        auto& r = out[static_cast<std::size_t>(t)];
        r.timestamp = t;
        r.values.resize(static_cast<std::size_t>(d));
        for (py::ssize_t c = 0; c < d; ++c) r.values[static_cast<std::size_t>(c)] = v(t, c);
        if (labels) {
            const int y = labels->at(t);
            if (y >= 0) r.label = y ? sg::Label::anomalous : sg::Label::normal;
        }
    }
    return out;
}

py::tuple from_stream(const sg::RawStream& stream) {
    const auto m = static_cast<py::ssize_t>(stream.size());
    const auto d = static_cast<py::ssize_t>(stream.empty() ? 0 : stream.front().values.size());
    Array values({m, d});
    Labels labels(m);
    py::array_t<std::int64_t> ts(m);
    auto v = values.mutable_unchecked<2>();
    for (py::ssize_t t = 0; t < m; ++t) {
        const auto& r = stream[static_cast<std::size_t>(t)];
        for (py::ssize_t c = 0; c < d; ++c) v(t, c) = r.values[static_cast<std::size_t>(c)];
        labels.mutable_at(t) = r.label ? static_cast<int>(*r.label) : -1;
        ts.mutable_at(t) = r.timestamp;
    }
    return py::make_tuple(values, labels, ts);
}

py::dict run_output(const sg::harness::RunResult& run) {
    const auto n = static_cast<py::ssize_t>(run.verdicts.size());
    py::array_t<std::int64_t> index(n);
    Array sid(n), ap(n);
    py::array_t<bool> flag(n), scored(n);
    py::list condition;
    for (py::ssize_t k = 0; k < n; ++k) {
        const auto& v = run.verdicts[static_cast<std::size_t>(k)];
        index.mutable_at(k) = v.verdict.index;
        sid.mutable_at(k) = v.verdict.sid;
        ap.mutable_at(k) = v.verdict.ap;
        flag.mutable_at(k) = v.verdict.is_anomalous;
        scored.mutable_at(k) = !v.verdict.unscored;
        condition.append(sg::drift::to_string(v.condition));
    }
    json events = json::array();
    for (const auto& e : run.events) events.push_back(e.to_json());
    py::dict out;
    out["report"] = run.report.to_json().dump();
    out["events"] = events.dump();
    out["index"] = index;
    out["sid"] = sid;
    out["ap"] = ap;
    out["flag"] = flag;
    out["scored"] = scored;
    out["condition"] = condition;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Streaming multivariate anomaly detection with drift adaptation (native core)";

    auto base = py::register_exception<sg::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<sg::DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<sg::NumericError>(m, "NumericError", PyExc_ArithmeticError);
    (void)base;

    m.def("default_config", [] { return sg::harness::PipelineConfig{}.to_json().dump(); });
    m.def("normalize_config", [](const std::string& text) {
        const auto c = config_from(text);
        c.validate();
        return c.to_json().dump();
    });

    m.def("synth", [](const std::string& spec_text) {
        const auto spec = sg::harness::StreamSpec::from_json(parse(spec_text));
        const auto s = sg::harness::synth_stream(spec);
        auto t = from_stream(s.stream);
        return py::make_tuple(t[0], t[1], t[2], s.anomaly_indices, spec.to_json().dump());
    }, py::arg("spec"));

    m.def("load_csv", [](const std::string& path, const std::string& label_col, const std::string& timestamp_col,
                         bool has_header, const std::vector<std::string>& ordinal, const std::vector<std::string>& drop) {
        sg::harness::CsvSchema schema;
        schema.label_col = label_col;
        schema.timestamp_col = timestamp_col;
        schema.has_header = has_header;
        schema.ordinal_cols = {ordinal.begin(), ordinal.end()};
        schema.drop_cols = {drop.begin(), drop.end()};
        const auto d = sg::harness::load_csv(path, schema);
        auto t = from_stream(d.stream);
        return py::make_tuple(t[0], t[1], t[2], d.feature_names);
    }, py::arg("path"), py::arg("label_col") = "", py::arg("timestamp_col") = "", py::arg("has_header") = true,
       py::arg("ordinal") = std::vector<std::string>{}, py::arg("drop") = std::vector<std::string>{});

    py::class_<sg::harness::OfflineModel>(m, "OfflineModel")
        .def_property_readonly("offline_records", [](const sg::harness::OfflineModel& o) { return o.offline_records; })
        .def_property_readonly("mu", [](const sg::harness::OfflineModel& o) { return o.calibration.mu; })
        .def_property_readonly("c", [](const sg::harness::OfflineModel& o) { return o.calibration.c; })
        .def_property_readonly("reference_sids", [](const sg::harness::OfflineModel& o) { return o.calibration.reference_sids; })
        .def("to_json", [](const sg::harness::OfflineModel& o) { return o.to_json().dump(); })
        .def_static("from_json", [](const std::string& text) { return sg::harness::OfflineModel::from_json(parse(text)); });

    m.def("fit_offline", [](const Array& values, const std::string& config) {
        const auto c = config_from(config);
        const auto stream = to_stream(values, std::nullopt);
        py::gil_scoped_release release;
        return sg::harness::fit_offline(c, stream);
    }, py::arg("values"), py::arg("config") = "");

    m.def("run_pipeline", [](const Array& values, std::optional<Labels> labels, const std::string& config) {
        const auto c = config_from(config);
        const auto stream = to_stream(values, labels);
        sg::harness::RunResult run;
        {
            py::gil_scoped_release release;
            run = sg::harness::run_pipeline(c, stream);
        }
        return run_output(run);
    }, py::arg("values"), py::arg("labels") = py::none(), py::arg("config") = "");

    m.def("run_realtime", [](const sg::harness::OfflineModel& model, const Array& values, std::optional<Labels> labels,
                             std::int64_t start, const std::string& config) {
        const auto c = config_from(config);
        const auto stream = to_stream(values, labels);
        sg::harness::RunResult run;
        {
            py::gil_scoped_release release;
            run = sg::harness::run_realtime(c, model, stream, start);
        }
        return run_output(run);
    }, py::arg("model"), py::arg("values"), py::arg("labels") = py::none(), py::arg("start") = 0,
       py::arg("config") = "");

    m.def("compute_auc", [](const std::vector<double>& scores, const std::vector<int>& labels) {
        return sg::harness::compute_auc(scores, labels);
    });
    m.def("record_distance", [](const std::vector<double>& a, const std::vector<double>& b) {
        return sg::detector::record_distance(Eigen::Map<const sg::Vector>(a.data(), static_cast<Eigen::Index>(a.size())),
                                             Eigen::Map<const sg::Vector>(b.data(), static_cast<Eigen::Index>(b.size())));
    });
    m.def("weighted_sequence_distance", [](const std::vector<double>& rd_newest_first) {
        return sg::detector::weighted_sequence_distance(rd_newest_first);
    });
    m.def("sequence_inconsistency", [](const std::vector<double>& wsd, const std::vector<double>& prior_ap) {
        return sg::detector::sequence_inconsistency(wsd, prior_ap);
    });
    m.def("anomaly_probability", [](double sid, double mu, double c) {
        sg::detector::LogisticCalibration cal;
        cal.mu = mu;
        cal.c = c;
        return sg::detector::anomaly_probability(sid, cal);
    });
    m.def("calibrate", [](const std::vector<std::vector<double>>& table, std::size_t first_row, double tolerance,
                          int max_iterations) {
        const auto cal = sg::detector::calibrate(table, {first_row, tolerance, max_iterations});
        py::dict out;
        out["mu"] = cal.mu;
        out["c"] = cal.c;
        out["converged"] = cal.converged;
        out["iterations"] = cal.iterations;
        out["reference_sids"] = cal.reference_sids;
        return out;
    }, py::arg("table"), py::arg("first_row") = 0, py::arg("tolerance") = 1e-4, py::arg("max_iterations") = 100);

    // Runs the state machine over precomputed window rates; retraining is a no-op recorder.
    m.def("replay_drift", [](const std::vector<double>& rates, const std::string& drift_config, std::int64_t first_index) {
        sg::drift::DriftConfig c;
        try {
            c = sg::drift::DriftConfig::from_json(parse(drift_config));
        } catch (const json::exception& e) {
            throw sg::ConfigError(e.what());
        }
        c.validate();
        sg::drift::DriftStateMachine machine(c);
        std::deque<sg::ProcessedRecord> ring;
        std::vector<std::size_t> sizes;
        const sg::drift::RetrainFn fn = [&](std::span<const sg::ProcessedRecord> d) {
            sizes.push_back(d.size());
            return 0.0;
        };
        for (std::size_t k = 0; k < rates.size(); ++k) {
            sg::ProcessedRecord r;
            r.index = first_index + static_cast<std::int64_t>(k);
            ring.push_back(r);
            if (ring.size() > static_cast<std::size_t>(c.sliding_window) + 1) ring.pop_front();
            machine.step(rates[k], r, ring, fn);
        }
        py::list events;
        for (const auto& e : machine.events()) events.append(py::make_tuple(e.index, e.transition));
        py::dict out;
        out["events"] = events;
        out["retrains"] = machine.retrain_indices();
        out["retrain_sizes"] = sizes;
        out["condition"] = sg::drift::to_string(machine.condition());
        return out;
    }, py::arg("rates"), py::arg("drift_config") = "", py::arg("first_index") = 0);

    // Minimizes a Python callable over a box; evaluation stays on the calling thread.
    m.def("ga_minimize", [](const std::function<double(const std::vector<double>&)>& fn,
                            const std::vector<std::pair<double, double>>& bounds, int population, int generations,
                            double crossover, double mutation, std::uint64_t seed) {
        sg::tuner::SearchSpace space;
        for (std::size_t g = 0; g < bounds.size(); ++g) {
            space.genes.push_back(sg::tuner::Domain::real("x" + std::to_string(g), bounds[g].first, bounds[g].second));
        }
        sg::tuner::GaSettings s;
        s.population = population;
        s.max_time = generations;
        s.crossover_rate = crossover;
        s.mutation_rate = mutation;
        s.seed = seed;
        const auto r = sg::tuner::ga_optimize(space, [&](const sg::tuner::Genome& g) {
            return sg::tuner::Fitness{fn(g), 0.0};
        }, s);
        std::vector<double> history;
        for (const auto& h : r.history) history.push_back(h.best_fitness);
        py::dict out;
        out["best"] = r.best.genome;
        out["fitness"] = r.best.fitness.value;
        out["history"] = history;
        out["evaluations"] = r.evaluations;
        return out;
    }, py::arg("fn"), py::arg("bounds"), py::arg("population") = 70, py::arg("generations") = 50,
       py::arg("crossover") = 0.7, py::arg("mutation") = 0.15, py::arg("seed") = 1);
}
