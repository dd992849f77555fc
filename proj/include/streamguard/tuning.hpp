#pragma once

#include "streamguard/pipeline.hpp"
#include "streamguard/tuner.hpp"

#include <string>

namespace streamguard::tuner {

/// Fixed inputs for scoring RealTimeOAW genomes: a fitted offline phase and
/// the evaluation stream that follows it.
struct OawEvaluationContext {
    harness::PipelineConfig config;
    harness::OfflineModel offline;
    RawStream live;
    std::int64_t start_position{0};
};

/// Runs detection and adaptation under the decoded drift config. Fitness is
/// the overall AR (fraction of scored APs above T); ties go to fewer retrains.
/// Any failure, including a genome that does not decode, scores +inf.
Fitness evaluate_realtimeoaw_config(const SearchSpace& space, const Genome& genome,
                                    const OawEvaluationContext& context, std::string* diagnostic = nullptr);

/// Trains a fresh model with the decoded hyperparameters and returns its
/// validation MSE. A genome outside the space throws ConfigError; NaN
/// training scores +inf.
Fitness evaluate_lstm_config(const SearchSpace& space, const Genome& genome,
                             const predictor::LstmHyperparams& base, std::size_t input_dim, std::size_t raw_dim,
                             std::size_t horizon, const predictor::SupervisedSet& train_split,
                             const predictor::SupervisedSet& val_split);

struct SeasonalCandidate {
    int period{0};
    /// Validation MSE; +inf when the offline segment cannot support the period.
    double validation_mse{0.0};
    std::string note;
};

struct SeasonalSelection {
    int period{0};
    std::vector<SeasonalCandidate> candidates;
};

/// Picks the seasonal period with the lowest validation prediction loss.
/// For each candidate the preprocessor is fitted on the offline segment, a
/// fresh model is trained on the leading pairs and scored on the trailing
/// `val_fraction`. Ties go to the shorter period. Throws DataError when no
/// candidate is feasible.
SeasonalSelection select_seasonal_period(const harness::PipelineConfig& config, const RawStream& offline,
                                         const std::vector<int>& periods = {24, 72, 168}, double val_fraction = 0.2);

/// Mean squared error of the model over a set, whatever loss it trains with.
double validation_mse(const predictor::LstmModel& model, const predictor::SupervisedSet& data);

}  // namespace streamguard::tuner
