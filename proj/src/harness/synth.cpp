#include "streamguard/synth.hpp"

#include "streamguard/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <set>

namespace streamguard::harness {

double FeatureSpec::stationary_std() const {
    return std::sqrt(amplitude * amplitude / 2.0 + noise * noise);
}

std::string to_string(DriftKind k) {
    switch (k) {
        case DriftKind::sudden: return "sudden";
        case DriftKind::gradual: return "gradual";
        case DriftKind::recurring: return "recurring";
    }
    return "unknown";
}

DriftKind drift_kind_from_string(const std::string& s) {
    if (s == "sudden") return DriftKind::sudden;
    if (s == "gradual") return DriftKind::gradual;
    if (s == "recurring") return DriftKind::recurring;
    throw ConfigError("unknown drift kind '" + s + "'");
}

double DriftSpec::offset_at(std::int64_t t) const {
    if (t < start) return 0.0;
    switch (kind) {
        case DriftKind::sudden:
            return magnitude;
        case DriftKind::gradual:
            if (t >= start + span) return magnitude;
            return magnitude * static_cast<double>(t - start + 1) / static_cast<double>(span);
        case DriftKind::recurring:
            return t < start + span ? magnitude : 0.0;
    }
    return 0.0;
}

bool DriftSpec::touches(std::size_t feature) const {
    return features.empty() || std::find(features.begin(), features.end(), feature) != features.end();
}

void StreamSpec::validate() const {
    if (length == 0 || dims == 0) throw ConfigError("stream length and dimension must be positive");
    if (!features.empty() && features.size() != dims) {
        throw ConfigError("feature list has " + std::to_string(features.size()) + " entries for " +
                          std::to_string(dims) + " dimensions");
    }
    for (const auto& f : features) {
        if (!(f.period > 0.0) || f.noise < 0.0) throw ConfigError("feature period must be > 0 and noise >= 0");
    }
    if (anomaly_rate < 0.0 || anomaly_rate > 1.0) throw ConfigError("anomaly rate must lie in [0, 1]");
    const auto m = static_cast<std::int64_t>(length);
    auto check_features = [&](const std::vector<std::size_t>& fs) {
        for (auto f : fs) {
            if (f >= dims) throw ConfigError("injection names feature " + std::to_string(f) + " of " + std::to_string(dims));
        }
    };
    std::vector<std::pair<std::int64_t, std::int64_t>> intervals;
    for (const auto& d : drifts) {
        if (d.start < 0 || d.start >= m) throw ConfigError("drift start lies outside [0, M)");
        if (d.kind != DriftKind::sudden && d.span <= 0) {
            throw ConfigError(to_string(d.kind) + " drift needs a positive span");
        }
        check_features(d.features);
        const std::int64_t end = d.kind == DriftKind::sudden ? d.start + 1 : d.start + d.span;
        intervals.emplace_back(d.start, end);
    }
    std::sort(intervals.begin(), intervals.end());
    for (std::size_t k = 1; k < intervals.size(); ++k) {
        if (intervals[k].first < intervals[k - 1].second) {
            throw ConfigError("drift transitions overlap at index " + std::to_string(intervals[k].first));
        }
    }
    for (const auto& a : anomalies) {
        if (a.begin < 0 || a.end > m || a.begin >= a.end) throw ConfigError("anomaly range lies outside [0, M)");
        check_features(a.features);
    }
}

std::vector<FeatureSpec> StreamSpec::resolved_features() const {
    if (!features.empty()) return features;
    std::mt19937_64 rng(seed ^ 0x5eedf00dULL);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::vector<FeatureSpec> out(dims);
    for (auto& f : out) f.phase = phase(rng);
    return out;
}

double generating_mean(const StreamSpec& spec, const std::vector<FeatureSpec>& features,
                       std::size_t feature, std::int64_t t) {
    const FeatureSpec& f = features.at(feature);
    const double td = static_cast<double>(t);
    double v = f.level + f.slope * td + f.amplitude * std::sin(2.0 * std::numbers::pi * td / f.period + f.phase);
    for (const auto& d : spec.drifts) {
        if (d.touches(feature)) v += d.offset_at(t);
    }
    return v;
}

SyntheticStream synth_stream(const StreamSpec& spec) {
    spec.validate();
    SyntheticStream out;
    out.features = spec.resolved_features();
    out.drifts = spec.drifts;
    const auto m = static_cast<std::int64_t>(spec.length);

    std::mt19937_64 noise_rng(spec.seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    out.stream.resize(spec.length);
    for (std::int64_t t = 0; t < m; ++t) {
        RawRecord& r = out.stream[static_cast<std::size_t>(t)];
        r.timestamp = t;
        r.values.resize(spec.dims);
        for (std::size_t d = 0; d < spec.dims; ++d) {
            r.values[d] = generating_mean(spec, out.features, d, t) + out.features[d].noise * unit(noise_rng);
        }
        r.label = Label::normal;
    }

    std::set<std::int64_t> anomalous;
    auto apply = [&](std::int64_t t, const std::vector<std::size_t>& fs, double offset, double scale) {
        auto& values = out.stream[static_cast<std::size_t>(t)].values;
        for (std::size_t d = 0; d < spec.dims; ++d) {
            if (!fs.empty() && std::find(fs.begin(), fs.end(), d) == fs.end()) continue;
            values[d] = values[d] * scale + offset;
        }
        anomalous.insert(t);
    };
    for (const auto& a : spec.anomalies) {
        for (std::int64_t t = a.begin; t < a.end; ++t) apply(t, a.features, a.offset, a.scale);
    }

    if (spec.anomaly_rate > 0.0) {
        std::mt19937_64 rng(spec.seed ^ 0xa5a5a5a5ULL);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::size_t max_subset = std::max<std::size_t>(1, spec.dims / 2);
        std::vector<std::size_t> order(spec.dims);
        for (std::int64_t t = 0; t < m; ++t) {
            if (u(rng) >= spec.anomaly_rate) continue;
            const auto count = std::uniform_int_distribution<std::size_t>(1, max_subset)(rng);
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), rng);
            const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
            auto& values = out.stream[static_cast<std::size_t>(t)].values;
            for (std::size_t k = 0; k < count; ++k) {
                const std::size_t d = order[k];
                values[d] += sign * spec.anomaly_magnitude * out.features[d].stationary_std();
            }
            anomalous.insert(t);
        }
    }

    for (auto t : anomalous) out.stream[static_cast<std::size_t>(t)].label = Label::anomalous;
    out.anomaly_indices.assign(anomalous.begin(), anomalous.end());
    return out;
}

nlohmann::json StreamSpec::to_json() const {
    nlohmann::json j;
    j["format"] = "streamguard.stream_spec";
    j["version"] = 1;
    j["length"] = length;
    j["dims"] = dims;
    j["anomaly_rate"] = anomaly_rate;
    j["anomaly_magnitude"] = anomaly_magnitude;
    j["seed"] = seed;
    j["features"] = nlohmann::json::array();
    for (const auto& f : features) {
        j["features"].push_back({{"level", f.level}, {"slope", f.slope}, {"amplitude", f.amplitude},
                                 {"period", f.period}, {"phase", f.phase}, {"noise", f.noise}});
    }
    j["drifts"] = nlohmann::json::array();
    for (const auto& d : drifts) {
        j["drifts"].push_back({{"kind", to_string(d.kind)}, {"start", d.start}, {"span", d.span},
                               {"magnitude", d.magnitude}, {"features", d.features}});
    }
    j["anomalies"] = nlohmann::json::array();
    for (const auto& a : anomalies) {
        j["anomalies"].push_back({{"begin", a.begin}, {"end", a.end}, {"features", a.features},
                                  {"offset", a.offset}, {"scale", a.scale}});
    }
    return j;
}

StreamSpec StreamSpec::from_json(const nlohmann::json& j) {
    StreamSpec s;
    try {
        s.length = j.value("length", s.length);
        s.dims = j.value("dims", s.dims);
        s.anomaly_rate = j.value("anomaly_rate", s.anomaly_rate);
        s.anomaly_magnitude = j.value("anomaly_magnitude", s.anomaly_magnitude);
        s.seed = j.value("seed", s.seed);
        for (const auto& f : j.value("features", nlohmann::json::array())) {
            FeatureSpec fs;
            fs.level = f.value("level", fs.level);
            fs.slope = f.value("slope", fs.slope);
            fs.amplitude = f.value("amplitude", fs.amplitude);
            fs.period = f.value("period", fs.period);
            fs.phase = f.value("phase", fs.phase);
            fs.noise = f.value("noise", fs.noise);
            s.features.push_back(fs);
        }
        for (const auto& d : j.value("drifts", nlohmann::json::array())) {
            DriftSpec ds;
            ds.kind = drift_kind_from_string(d.value("kind", std::string("sudden")));
            ds.start = d.value("start", ds.start);
            ds.span = d.value("span", ds.span);
            ds.magnitude = d.value("magnitude", ds.magnitude);
            ds.features = d.value("features", ds.features);
            s.drifts.push_back(ds);
        }
        for (const auto& a : j.value("anomalies", nlohmann::json::array())) {
            AnomalySpec as;
            as.begin = a.value("begin", as.begin);
            as.end = a.value("end", as.begin + 1);
            as.features = a.value("features", as.features);
            as.offset = a.value("offset", as.offset);
            as.scale = a.value("scale", as.scale);
            s.anomalies.push_back(as);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed stream spec: ") + e.what());
    }
    s.validate();
    return s;
}

void write_csv(const RawStream& stream, std::ostream& out) {
    const std::size_t dims = stream.empty() ? 0 : stream.front().values.size();
    out << "timestamp";
    for (std::size_t d = 0; d < dims; ++d) out << ",f" << d;
    out << ",label\n";
    out.precision(17);
    for (const auto& r : stream) {
        out << r.timestamp;
        for (double v : r.values) out << ',' << v;
        out << ',' << (r.label && *r.label == Label::anomalous ? 1 : 0) << '\n';
    }
}

}  // namespace streamguard::harness
