#pragma once

#include "streamguard/detector.hpp"
#include "streamguard/drift.hpp"
#include "streamguard/lstm.hpp"
#include "streamguard/preprocess.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>

namespace streamguard::harness {

/// Every tunable of a run, stored as one versioned JSON document.
struct PipelineConfig {
    preprocess::PreprocessOptions preprocess;
    predictor::LstmHyperparams lstm;
    detector::DetectorConfig detector;
    drift::DriftConfig drift;
    /// Leading fraction of the stream used for the offline phase.
    double offline_fraction{0.1};
    bool drift_adaptation{true};
    predictor::RetrainMode retrain_mode{predictor::RetrainMode::warm};
    std::uint64_t seed{7};

    /// Checks each section and the cross-section constraint
    /// L_s + 1 >= max(time_step, L): the record ring doubles as predictor context.
    void validate() const;

    nlohmann::json to_json() const;
    static PipelineConfig from_json(const nlohmann::json& doc);
    static PipelineConfig load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace streamguard::harness
