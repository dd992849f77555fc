#include "streamguard/error.hpp"
#include "streamguard/pipeline.hpp"
#include "streamguard/tuner.hpp"
#include "streamguard/tuning.hpp"

#include "../support/fixtures.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>

using namespace streamguard;
using namespace streamguard::tuner;

namespace {

SearchSpace box(std::size_t n, double lo, double hi) {
    SearchSpace s;
    for (std::size_t g = 0; g < n; ++g) s.genes.push_back(Domain::real("x" + std::to_string(g), lo, hi));
    return s;
}

Fitness sphere(const Genome& g) {
    double v = 0.0;
    for (double x : g) v += x * x;
    return {v, 0.0};
}

}  // namespace

TEST(Ga, SphereConverges) {
    GaSettings s;
    s.population = 70;
    s.max_time = 50;
    s.seed = 3;
    const auto r = ga_optimize(box(4, -5.0, 5.0), sphere, s);
    EXPECT_LT(r.best.fitness.value, 0.1);
    EXPECT_EQ(static_cast<int>(r.history.size()), s.max_time);
}

TEST(Ga, HistoryIsMonotoneAndBudgetHolds) {
    std::atomic<int> calls{0};
    const FitnessFn f = [&](const Genome& g) {
        ++calls;
        return sphere(g);
    };
    GaSettings s;
    s.population = 20;
    s.max_time = 15;
    s.seed = 9;
    const auto r = ga_optimize(box(3, -2.0, 2.0), f, s);
    for (std::size_t k = 1; k < r.history.size(); ++k) {
        EXPECT_LE(r.history[k].best_fitness, r.history[k - 1].best_fitness);
        EXPECT_LE(r.history[k].best_fitness, r.history[k].mean_fitness);
    }
    EXPECT_EQ(r.evaluations, calls.load());
    EXPECT_LE(r.evaluations, s.population * s.max_time);
    EXPECT_EQ(r.history.back().best_fitness, r.best.fitness.value);
}

TEST(Ga, GenomesStayInsideTheSpace) {
    SearchSpace space = SearchSpace::lstm();
    bool outside = false;
    const FitnessFn f = [&](const Genome& g) {
        if (!space.contains(g)) outside = true;
        return Fitness{g[1], 0.0};
    };
    GaSettings s;
    s.population = 16;
    s.max_time = 10;
    s.mutation_rate = 0.9;
    ga_optimize(space, f, s);
    EXPECT_FALSE(outside);
}

TEST(Ga, MinimalPopulationSingleGeneration) {
    GaSettings s;
    s.population = 2;
    s.max_time = 1;
    s.elitism = 1;
    const auto r = ga_optimize(box(2, -1.0, 1.0), sphere, s);
    EXPECT_EQ(r.evaluations, 2);
    EXPECT_EQ(r.history.size(), 1u);
}

TEST(Ga, DeterministicAcrossThreadCounts) {
    GaSettings s;
    s.population = 24;
    s.max_time = 12;
    s.seed = 5;
    const auto a = ga_optimize(box(3, -3.0, 3.0), sphere, s);
    s.threads = 4;
    const auto b = ga_optimize(box(3, -3.0, 3.0), sphere, s);
    EXPECT_EQ(a.best.genome, b.best.genome);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t k = 0; k < a.history.size(); ++k) EXPECT_EQ(a.history[k].mean_fitness, b.history[k].mean_fitness);
}

TEST(Ga, NanFitnessBecomesInfinityWithDiagnostic) {
    const FitnessFn f = [](const Genome& g) {
        return g[0] > 0.0 ? Fitness{std::nan(""), 0.0} : sphere(g);
    };
    GaSettings s;
    s.population = 10;
    s.max_time = 3;
    const auto r = ga_optimize(box(1, -1.0, 1.0), f, s);
    EXPECT_FALSE(r.diagnostics.empty());
    EXPECT_LE(r.best.genome[0], 0.0);
    EXPECT_TRUE(std::isfinite(r.best.fitness.value));
}

TEST(Ga, TiebreakPrefersLowerSecondaryKey) {
    const FitnessFn f = [](const Genome& g) { return Fitness{1.0, std::abs(g[0])}; };
    GaSettings s;
    s.population = 30;
    s.max_time = 20;
    const auto r = ga_optimize(box(1, -1.0, 1.0), f, s);
    EXPECT_LT(std::abs(r.best.genome[0]), 0.1);
}

TEST(Ga, SettingsValidation) {
    GaSettings s;
    s.population = 1;
    EXPECT_THROW(s.validate(), ConfigError);
    s = {};
    s.crossover_rate = 1.5;
    EXPECT_THROW(s.validate(), ConfigError);
    s = {};
    s.max_time = 0;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(SearchSpaceDecode, PublishedDriftGenomeRoundTrips) {
    const auto space = SearchSpace::realtimeoaw();
    drift::DriftConfig base;
    base.alert_threshold = 0.092;
    base.drift_threshold = 0.03;
    base.sliding_window = 270;
    base.max_adaptive_window = 2500;
    const Genome g = encode_drift_config(space, base);
    ASSERT_TRUE(space.contains(g));
    const auto d = decode_drift_config(space, g, drift::DriftConfig{});
    EXPECT_EQ(d.alert_threshold, 0.092);
    EXPECT_EQ(d.drift_threshold, 0.03);
    EXPECT_EQ(d.sliding_window, 270);
    EXPECT_EQ(d.max_adaptive_window, 2500);
}

TEST(SearchSpaceDecode, RejectsOutOfRangeAndInvertedWindows) {
    const auto space = SearchSpace::realtimeoaw();
    EXPECT_THROW(decode_drift_config(space, {0.5, 0.03, 270, 2500}, {}), ConfigError);
    EXPECT_THROW(decode_drift_config(space, {0.05, 0.03, 270.5, 2500}, {}), ConfigError);
    EXPECT_THROW(decode_drift_config(space, {0.05, 0.03, 500, 450}, {}), ConfigError);
    EXPECT_THROW(decode_drift_config(space, {0.05, 0.03, 270}, {}), ConfigError);
}

TEST(SearchSpaceDecode, LstmCategoricals) {
    const auto space = SearchSpace::lstm();
    const auto hp = decode_lstm_hyperparams(space, {30, 1e-3, 1, 0, 1, 20}, {});
    EXPECT_EQ(hp.epochs, 30);
    EXPECT_EQ(hp.optimizer, predictor::Optimizer::sgd);
    EXPECT_EQ(hp.activation, predictor::Activation::relu);
    EXPECT_EQ(hp.loss, predictor::Loss::mae);
    EXPECT_EQ(hp.batch_size, 20);
    EXPECT_THROW(decode_lstm_hyperparams(space, {30, 1e-3, 2, 0, 1, 20}, {}), ConfigError);
}

namespace {

struct LstmSplits {
    predictor::SupervisedSet train, val;
    std::size_t input_dim{0}, raw_dim{0};
};

LstmSplits lstm_splits() {
    std::vector<ProcessedRecord> records;
    for (int t = 0; t < 160; ++t) {
        ProcessedRecord r;
        r.index = t;
        r.normalized = Vector::Constant(1, std::sin(0.3 * t));
        r.features = Vector::Constant(1, std::sin(0.3 * t));
        records.push_back(r);
    }
    LstmSplits s;
    s.train = predictor::build_pairs(std::span(records).first(120), 8, 2);
    s.val = predictor::build_pairs(std::span(records).subspan(120), 8, 2);
    s.input_dim = 1;
    s.raw_dim = 1;
    return s;
}

}  // namespace

TEST(LstmFitness, DeterministicAndEpochSensitive) {
    const auto space = SearchSpace::lstm();
    const auto s = lstm_splits();
    predictor::LstmHyperparams base;
    base.hidden_units = 6;
    base.time_step = 8;
    const Genome few{20, 5e-3, 0, 1, 0, 16};
    const Genome many{100, 5e-3, 0, 1, 0, 16};
    const auto a = evaluate_lstm_config(space, few, base, 1, 1, 2, s.train, s.val);
    const auto b = evaluate_lstm_config(space, few, base, 1, 1, 2, s.train, s.val);
    EXPECT_EQ(a.value, b.value);
    const auto c = evaluate_lstm_config(space, many, base, 1, 1, 2, s.train, s.val);
    EXPECT_LT(c.value, a.value);
    EXPECT_THROW(evaluate_lstm_config(space, {5, 5e-3, 0, 1, 0, 16}, base, 1, 1, 2, s.train, s.val), ConfigError);
}

TEST(OawFitness, DriftGenomeCannotChangeScoresBeforeTheFirstRetrain) {
    auto config = fixture::small_config();
    const auto synth = harness::synth_stream(fixture::small_spec(2500, 3));
    const auto off = harness::offline_length(config, synth.stream.size());
    OawEvaluationContext ctx;
    ctx.config = config;
    ctx.offline = harness::fit_offline(config, RawStream(synth.stream.begin(), synth.stream.begin() + off));
    ctx.live = RawStream(synth.stream.begin() + off, synth.stream.end());
    ctx.start_position = static_cast<std::int64_t>(off);
    const auto space = SearchSpace::realtimeoaw();
    const Genome g1{0.1, 0.08, 100, 400};
    const Genome g2{0.02, 0.01, 150, 900};

    std::string diag;
    const auto a = evaluate_realtimeoaw_config(space, g1, ctx, &diag);
    ASSERT_TRUE(std::isfinite(a.value)) << diag;
    EXPECT_EQ(evaluate_realtimeoaw_config(space, g1, ctx).value, a.value);

    auto run_with = [&](const Genome& g) {
        auto c = config;
        c.drift = decode_drift_config(space, g, config.drift);
        return harness::run_realtime(c, ctx.offline, ctx.live, ctx.start_position);
    };
    const auto r1 = run_with(g1);
    const auto r2 = run_with(g2);
    auto first_retrain = [](const harness::RunResult& r) {
        return r.report.retrain_indices.empty() ? std::numeric_limits<std::int64_t>::max()
                                                : r.report.retrain_indices.front();
    };
    const auto cut = std::min(first_retrain(r1), first_retrain(r2));
    ASSERT_EQ(r1.verdicts.size(), r2.verdicts.size());
    std::size_t compared = 0;
    for (std::size_t k = 0; k < r1.verdicts.size() && r1.verdicts[k].verdict.index <= cut; ++k, ++compared) {
        EXPECT_EQ(r1.verdicts[k].verdict.ap, r2.verdicts[k].verdict.ap) << "index " << r1.verdicts[k].verdict.index;
    }
    EXPECT_GT(compared, 100u);

    const auto bad = evaluate_realtimeoaw_config(space, {0.05, 0.03, 500, 450}, ctx, &diag);
    EXPECT_TRUE(std::isinf(bad.value));
    EXPECT_FALSE(diag.empty());
}

TEST(SeasonalSelection, PicksAFeasibleCandidateDeterministically) {
    auto config = fixture::small_config();
    const auto synth = harness::synth_stream(fixture::small_spec(1200, 2));
    const RawStream offline(synth.stream.begin(), synth.stream.begin() + 600);
    // 600 records cannot host two full cycles of 400, so that candidate is skipped.
    const auto a = select_seasonal_period(config, offline, {24, 48, 400});
    ASSERT_EQ(a.candidates.size(), 3u);
    EXPECT_TRUE(std::isinf(a.candidates[2].validation_mse));
    EXPECT_FALSE(a.candidates[2].note.empty());
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : a.candidates) best = std::min(best, c.validation_mse);
    ASSERT_TRUE(std::isfinite(best));
    for (const auto& c : a.candidates) {
        if (c.period == a.period) EXPECT_EQ(c.validation_mse, best);
    }
    EXPECT_EQ(select_seasonal_period(config, offline, {24, 48, 400}).period, a.period);
    EXPECT_THROW(select_seasonal_period(config, offline, {400}), DataError);
    EXPECT_THROW(select_seasonal_period(config, offline, {}), ConfigError);
}
