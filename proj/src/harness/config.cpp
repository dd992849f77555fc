#include "streamguard/config.hpp"

#include "streamguard/error.hpp"

#include <algorithm>
#include <fstream>

namespace streamguard::harness {

namespace {

constexpr int kConfigVersion = 1;

}  // namespace

void PipelineConfig::validate() const {
    lstm.validate();
    detector.validate();
    drift.validate();
    if (!(offline_fraction > 0.0 && offline_fraction < 1.0)) {
        throw ConfigError("offline_fraction must lie in (0, 1)");
    }
    if (!(preprocess.variance_target > 0.0 && preprocess.variance_target <= 1.0)) {
        throw ConfigError("PCA variance target must lie in (0, 1]");
    }
    if (preprocess.seasonal_period == 1 || preprocess.seasonal_period < 0) {
        throw ConfigError("seasonal period must be 0 (disabled) or >= 2");
    }
    const int needed = std::max(lstm.time_step, detector.horizon);
    if (drift.sliding_window + 1 < needed) {
        throw ConfigError("sliding window L_s + 1 = " + std::to_string(drift.sliding_window + 1) +
                          " must cover max(time_step, L) = " + std::to_string(needed));
    }
}

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j;
    j["format"] = "streamguard.config";
    j["version"] = kConfigVersion;
    j["preprocess"] = {{"use_pca", preprocess.use_pca},
                       {"variance_target", preprocess.variance_target},
                       {"pca_components", preprocess.pca_components},
                       {"seasonal_period", preprocess.seasonal_period},
                       {"seasonal_features", preprocess.seasonal_features}};
    j["lstm"] = lstm.to_json();
    j["detector"] = {{"horizon", detector.horizon},
                     {"reference_length", detector.reference_length},
                     {"threshold", detector.threshold},
                     {"calibration_tolerance", detector.calibration_tolerance},
                     {"max_calibration_iterations", detector.max_calibration_iterations},
                     {"parallel", detector.parallel}};
    j["drift"] = drift.to_json();
    j["pipeline"] = {{"offline_fraction", offline_fraction},
                     {"drift_adaptation", drift_adaptation},
                     {"retrain_mode", retrain_mode == predictor::RetrainMode::warm ? "warm" : "cold"},
                     {"seed", seed}};
    return j;
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        if (j.contains("format") && j.at("format").get<std::string>() != "streamguard.config") {
            throw ConfigError("not a pipeline config document");
        }
        if (j.value("version", kConfigVersion) != kConfigVersion) {
            throw ConfigError("unsupported config version " + std::to_string(j.at("version").get<int>()));
        }
        if (j.contains("preprocess")) {
            const auto& p = j.at("preprocess");
            c.preprocess.use_pca = p.value("use_pca", c.preprocess.use_pca);
            c.preprocess.variance_target = p.value("variance_target", c.preprocess.variance_target);
            c.preprocess.pca_components = p.value("pca_components", c.preprocess.pca_components);
            c.preprocess.seasonal_period = p.value("seasonal_period", c.preprocess.seasonal_period);
            c.preprocess.seasonal_features = p.value("seasonal_features", c.preprocess.seasonal_features);
        }
        if (j.contains("lstm")) c.lstm = predictor::LstmHyperparams::from_json(j.at("lstm"));
        if (j.contains("detector")) {
            const auto& d = j.at("detector");
            c.detector.horizon = d.value("horizon", c.detector.horizon);
            c.detector.reference_length = d.value("reference_length", c.detector.reference_length);
            c.detector.threshold = d.value("threshold", c.detector.threshold);
            c.detector.calibration_tolerance = d.value("calibration_tolerance", c.detector.calibration_tolerance);
            c.detector.max_calibration_iterations =
                d.value("max_calibration_iterations", c.detector.max_calibration_iterations);
            c.detector.parallel = d.value("parallel", c.detector.parallel);
        }
        if (j.contains("drift")) c.drift = drift::DriftConfig::from_json(j.at("drift"));
        if (j.contains("pipeline")) {
            const auto& p = j.at("pipeline");
            c.offline_fraction = p.value("offline_fraction", c.offline_fraction);
            c.drift_adaptation = p.value("drift_adaptation", c.drift_adaptation);
            const auto mode = p.value("retrain_mode", std::string("warm"));
            if (mode != "warm" && mode != "cold") throw ConfigError("retrain_mode must be warm or cold");
            c.retrain_mode = mode == "warm" ? predictor::RetrainMode::warm : predictor::RetrainMode::cold;
            c.seed = p.value("seed", c.seed);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void PipelineConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config '" + path + "'");
    out << to_json().dump(2) << '\n';
}

}  // namespace streamguard::harness
