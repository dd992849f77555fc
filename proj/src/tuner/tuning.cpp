#include "streamguard/tuning.hpp"

#include "streamguard/error.hpp"

#include <cmath>
#include <limits>

namespace streamguard::tuner {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

Fitness evaluate_realtimeoaw_config(const SearchSpace& space, const Genome& genome,
                                    const OawEvaluationContext& context, std::string* diagnostic) {
    try {
        harness::PipelineConfig config = context.config;
        config.drift = decode_drift_config(space, genome, context.config.drift);
        harness::RunOptions options;
        options.keep_verdicts = false;
        const auto run = harness::run_realtime(config, context.offline, context.live, context.start_position, options);
        return {run.report.overall_ar, static_cast<double>(run.report.retrain_indices.size())};
    } catch (const std::exception& e) {
        if (diagnostic) *diagnostic = e.what();
        return {kInf, kInf};
    }
}

double validation_mse(const predictor::LstmModel& model, const predictor::SupervisedSet& data) {
    if (data.empty()) throw DataError("validation split is empty");
    double total = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
        total += (model.predict(data.contexts[k]) - data.targets[k]).squaredNorm();
    }
    return total / static_cast<double>(data.size() * model.output_dim());
}

Fitness evaluate_lstm_config(const SearchSpace& space, const Genome& genome,
                             const predictor::LstmHyperparams& base, std::size_t input_dim, std::size_t raw_dim,
                             std::size_t horizon, const predictor::SupervisedSet& train_split,
                             const predictor::SupervisedSet& val_split) {
    if (train_split.empty() || val_split.empty()) throw DataError("training and validation splits must be non-empty");
    const auto hp = decode_lstm_hyperparams(space, genome, base);
    try {
        auto model = predictor::LstmModel::init(hp, input_dim, raw_dim, horizon, hp.seed);
        model = predictor::train(model, train_split, hp);
        const double loss = validation_mse(model, val_split);
        return {std::isfinite(loss) ? loss : kInf, 0.0};
    } catch (const NumericError&) {
        return {kInf, 0.0};
    }
}

SeasonalSelection select_seasonal_period(const harness::PipelineConfig& config, const RawStream& offline,
                                         const std::vector<int>& periods, double val_fraction) {
    if (periods.empty()) throw ConfigError("no seasonal period candidates");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must lie in (0, 1)");
    const auto steps = static_cast<std::size_t>(config.lstm.time_step);
    const auto horizon = static_cast<std::size_t>(config.detector.horizon);
    const RawStream cleaned = preprocess::clean(offline);

    SeasonalSelection out;
    double best = kInf;
    for (int period : periods) {
        SeasonalCandidate cand{period, kInf, {}};
        try {
            auto options = config.preprocess;
            options.seasonal_period = period;
            const auto pre = preprocess::Preprocessor::fit(offline, options);
            const auto records = pre.transform_all(cleaned);
            const auto cut = static_cast<std::size_t>((1.0 - val_fraction) * static_cast<double>(records.size()));
            const std::span<const ProcessedRecord> all(records);
            const auto train_set = predictor::build_pairs(all.first(cut), steps, horizon);
            const auto val_set = predictor::build_pairs(all.subspan(cut), steps, horizon);
            if (train_set.empty() || val_set.empty()) throw DataError("too few records for a train/validation split");
            auto model = predictor::LstmModel::init(config.lstm, pre.feature_dim(), pre.raw_dim(), horizon, config.lstm.seed);
            model = predictor::train(model, train_set, config.lstm);
            cand.validation_mse = validation_mse(model, val_set);
            if (!std::isfinite(cand.validation_mse)) cand.validation_mse = kInf;
        } catch (const DataError& e) {
            cand.note = e.what();
        } catch (const NumericError& e) {
            cand.note = e.what();
        }
        if (cand.validation_mse < best || (cand.validation_mse == best && std::isfinite(best) && period < out.period)) {
            best = cand.validation_mse;
            out.period = period;
        }
        out.candidates.push_back(std::move(cand));
    }
    if (!std::isfinite(best)) throw DataError("no seasonal period candidate fits the offline segment");
    return out;
}

}  // namespace streamguard::tuner
