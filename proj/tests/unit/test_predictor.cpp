#include "streamguard/error.hpp"
#include "streamguard/lstm.hpp"

#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace streamguard;
using namespace streamguard::predictor;

namespace {

std::vector<ProcessedRecord> sine_records(int n, int dims, double noise, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<ProcessedRecord> out;
    for (int t = 0; t < n; ++t) {
        ProcessedRecord r;
        r.index = t;
        r.normalized.resize(dims);
        for (int d = 0; d < dims; ++d) r.normalized[d] = std::sin(0.3 * t + d) + noise * nd(rng);
        r.features = r.normalized;
        out.push_back(r);
    }
    return out;
}

LstmHyperparams small_hp() {
    LstmHyperparams hp;
    hp.hidden_units = 4;
    hp.time_step = 4;
    hp.epochs = 20;
    hp.batch_size = 16;
    hp.learning_rate = 0.01;
    return hp;
}

double max_relative_gradient_error(const LstmModel& model, const SupervisedSet& data) {
    std::vector<std::size_t> all(data.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    LstmParameters grad = model.parameters().zeros_like();
    model.loss_and_gradient(data, all, grad);
    const auto analytic = grad.flatten();

    LstmModel probe = model;
    auto theta = model.parameters().flatten();
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t p = 0; p < theta.size(); ++p) {
        const double keep = theta[p];
        LstmParameters scratch = probe.parameters().zeros_like();
        theta[p] = keep + h;
        probe.parameters().unflatten(theta);
        const double up = probe.loss_and_gradient(data, all, scratch);
        theta[p] = keep - h;
        probe.parameters().unflatten(theta);
        const double down = probe.loss_and_gradient(data, all, scratch);
        theta[p] = keep;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(numeric), std::abs(analytic[p]), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic[p]) / scale);
    }
    return worst;
}

}  // namespace

TEST(Hyperparams, ValidateAndJson) {
    LstmHyperparams hp;
    EXPECT_NO_THROW(hp.validate());
    const auto back = LstmHyperparams::from_json(hp.to_json());
    EXPECT_EQ(back.to_json(), hp.to_json());
    hp.hidden_units = 0;
    EXPECT_THROW(hp.validate(), ConfigError);
    EXPECT_THROW(optimizer_from_string("rmsprop"), ConfigError);
}

TEST(Init, DeterministicBoundedForgetBiasOne) {
    LstmHyperparams hp;
    hp.hidden_units = 16;
    const auto a = LstmModel::init(hp, 5, 3, 10, 42);
    const auto b = LstmModel::init(hp, 5, 3, 10, 42);
    EXPECT_TRUE(a == b);
    EXPECT_EQ(a.output_dim(), 30u);
    const auto& layer = a.parameters().layers[0];
    EXPECT_LE(layer.input_weights.cwiseAbs().maxCoeff(), 0.25);
    EXPECT_LE(layer.recurrent_weights.cwiseAbs().maxCoeff(), 0.25);
    EXPECT_TRUE(layer.bias.middleRows(16, 16).isOnes(0.0));
    EXPECT_THROW(LstmModel::init(hp, 0, 3, 10, 1), ConfigError);
}

TEST(Forward, ZeroNetworkPredictsZero) {
    LstmHyperparams hp;
    hp.hidden_units = 3;
    hp.time_step = 2;
    auto m = LstmModel::init(hp, 2, 2, 3, 1);
    auto flat = m.parameters().flatten();
    std::fill(flat.begin(), flat.end(), 0.0);
    m.parameters().unflatten(flat);
    const std::vector<Vector> ctx{Vector::Ones(2), Vector::Ones(2)};
    const auto seq = m.forward(ctx, 7);
    EXPECT_EQ(seq.origin, 7);
    EXPECT_EQ(seq.values.rows(), 3);
    EXPECT_EQ(seq.values.cols(), 2);
    EXPECT_TRUE(seq.values.isZero(0.0));
}

TEST(Forward, MatchesHandUnrolledRecurrence) {
    LstmHyperparams hp;
    hp.hidden_units = 2;
    hp.time_step = 2;
    auto m = LstmModel::init(hp, 1, 1, 1, 3);

    oracle::TinyLstm tiny;
    tiny.hidden = 2;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    tiny.w.assign(4, std::vector<double>(2));
    tiny.u.assign(4, std::vector<std::vector<double>>(2, std::vector<double>(2)));
    tiny.b.assign(4, std::vector<double>(2));
    tiny.head_w.assign(2, 0.0);
    auto& layer = m.parameters().layers[0];
    for (int g = 0; g < 4; ++g) {
        for (int j = 0; j < 2; ++j) {
            tiny.w[g][j] = layer.input_weights(g * 2 + j, 0) = u(rng);
            tiny.b[g][j] = layer.bias(g * 2 + j, 0) = u(rng);
            for (int q = 0; q < 2; ++q) tiny.u[g][j][q] = layer.recurrent_weights(g * 2 + j, q) = u(rng);
        }
    }
    for (int j = 0; j < 2; ++j) tiny.head_w[j] = m.parameters().head_weights(0, j) = u(rng);
    tiny.head_b = m.parameters().head_bias(0, 0) = u(rng);

    const std::vector<Vector> ctx{Vector::Constant(1, 0.7), Vector::Constant(1, -1.3)};
    EXPECT_NEAR(m.forward(ctx, 0).values(0, 0), tiny.predict({0.7, -1.3}), 1e-12);
    // Pure: the same context twice gives the same output.
    EXPECT_EQ(m.forward(ctx, 0).values, m.forward(ctx, 1).values);
}

TEST(Forward, ShapeErrors) {
    LstmHyperparams hp;
    hp.time_step = 3;
    const auto m = LstmModel::init(hp, 2, 2, 4, 1);
    EXPECT_THROW(m.forward(std::vector<Vector>{Vector::Zero(2)}, 0), DataError);
    EXPECT_THROW(m.forward(std::vector<Vector>(3, Vector::Zero(5)), 0), DataError);
}

TEST(Pairs, SplitOnIndexGaps) {
    auto recs = sine_records(20, 2, 0.0, 1);
    EXPECT_EQ(build_pairs(recs, 4, 3).size(), 20u - 7u + 1u);
    recs.erase(recs.begin() + 10);
    // Segments 0..9 and 11..19 of lengths 10 and 9.
    EXPECT_EQ(build_pairs(recs, 4, 3).size(), (10u - 6u) + (9u - 6u));
    EXPECT_TRUE(build_pairs(std::span(recs).first(6), 4, 3).empty());
}

TEST(Gradient, MatchesCentralDifferences) {
    const auto recs = sine_records(30, 2, 0.1, 5);
    const auto data = build_pairs(recs, 3, 2);
    for (auto act : {Activation::tanh}) {
        for (int layers : {1, 2}) {
            LstmHyperparams hp;
            hp.hidden_units = 2;
            hp.layers = layers;
            hp.time_step = 3;
            hp.activation = act;
            hp.weight_decay = 1e-3;
            const auto m = LstmModel::init(hp, 2, 2, 2, 11);
            EXPECT_LT(max_relative_gradient_error(m, data), 1e-4) << "layers " << layers;
        }
    }
}

TEST(Train, EpochsZeroLeavesModelUnchanged) {
    auto hp = small_hp();
    const auto data = build_pairs(sine_records(60, 2, 0.1, 1), 4, 2);
    const auto m = LstmModel::init(hp, 2, 2, 2, 1);
    hp.epochs = 0;
    EXPECT_EQ(train(m, data, hp).parameters().flatten(), m.parameters().flatten());
}

TEST(Train, LearnsConstantSeries) {
    std::vector<ProcessedRecord> recs;
    for (int t = 0; t < 80; ++t) recs.push_back({t, Vector::Constant(2, 0.6), Vector::Constant(2, 0.6)});
    auto hp = small_hp();
    hp.epochs = 100;
    const auto data = build_pairs(recs, 4, 2);
    const auto m = train(LstmModel::init(hp, 2, 2, 2, 3), data, hp);
    EXPECT_LT(m.loss(data), 1e-3);
}

TEST(Train, LossDecreasesAndIsDeterministic) {
    auto hp = small_hp();
    hp.learning_rate = 0.001;
    hp.epochs = 100;
    const auto data = build_pairs(sine_records(120, 2, 0.05, 2), 4, 2);
    const auto init = LstmModel::init(hp, 2, 2, 2, 9);
    TrainReport report;
    const auto a = train(init, data, hp, &report);
    ASSERT_EQ(report.epoch_loss.size(), 100u);
    EXPECT_LE(report.epoch_loss.back(), report.epoch_loss.front());
    EXPECT_LE(a.loss(data), init.loss(data));
    EXPECT_TRUE(train(init, data, hp) == a);

    hp.optimizer = Optimizer::sgd;
    hp.learning_rate = 0.01;
    EXPECT_LE(train(init, data, hp).loss(data), init.loss(data));
}

TEST(Train, NanLossIsANumericError) {
    auto hp = small_hp();
    auto data = build_pairs(sine_records(40, 2, 0.0, 1), 4, 2);
    data.targets[0][0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(train(LstmModel::init(hp, 2, 2, 2, 1), data, hp), NumericError);
}

TEST(Train, DecayIsInertAtTheOrigin) {
    auto hp = small_hp();
    auto m = LstmModel::init(hp, 2, 2, 2, 1);
    auto flat = m.parameters().flatten();
    std::fill(flat.begin(), flat.end(), 0.0);
    m.parameters().unflatten(flat);
    const auto data = build_pairs(sine_records(40, 2, 0.0, 1), 4, 2);
    std::vector<std::size_t> all(data.size());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    auto g0 = m.parameters().zeros_like();
    auto g1 = m.parameters().zeros_like();
    hp.weight_decay = 0.0;
    m.set_hyperparams(hp);
    const double l0 = m.loss_and_gradient(data, all, g0);
    hp.weight_decay = 6e-6;
    m.set_hyperparams(hp);
    const double l1 = m.loss_and_gradient(data, all, g1);
    EXPECT_EQ(l0, l1);
    EXPECT_EQ(g0.flatten(), g1.flatten());
}

TEST(Retrain, ShortWindowIsInsufficient) {
    auto hp = small_hp();
    const auto m = LstmModel::init(hp, 2, 2, 3, 1);
    const auto recs = sine_records(4 + 3 - 1, 2, 0.0, 1);
    EXPECT_THROW(retrain(m, recs, hp, RetrainMode::warm), InsufficientDataError);
}

TEST(Retrain, ColdMatchesInitialTrainingAndWarmDoesNotDegrade) {
    auto hp = small_hp();
    const auto recs = sine_records(100, 2, 0.05, 4);
    const auto data = build_pairs(recs, 4, 2);
    const auto trained = train(LstmModel::init(hp, 2, 2, 2, hp.seed), data, hp);

    const auto cold = retrain(trained, recs, hp, RetrainMode::cold);
    EXPECT_EQ(cold.model.parameters().flatten(), trained.parameters().flatten());
    EXPECT_EQ(cold.model.trained_on(), recs.back().index + 1);
    EXPECT_GE(cold.wall_ms, 0.0);

    const auto warm = retrain(trained, recs, hp, RetrainMode::warm);
    EXPECT_LE(warm.model.loss(data), 1.1 * trained.loss(data));
    EXPECT_EQ(warm.report.epoch_loss.size(), 5u);  // max(5, 20 / 4)
}

TEST(Serialization, BinaryIsBitExactAndJsonIsValueExact) {
    auto hp = small_hp();
    hp.layers = 2;
    auto m = LstmModel::init(hp, 3, 2, 4, 8);
    m.set_trained_on(1234);

    std::stringstream buf;
    m.write_binary(buf);
    const auto back = LstmModel::read_binary(buf);
    EXPECT_TRUE(back == m);
    EXPECT_EQ(back.trained_on(), 1234);

    const auto from_json = LstmModel::from_json(nlohmann::json::parse(m.to_json().dump()));
    const auto a = m.parameters().flatten();
    const auto b = from_json.parameters().flatten();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-15);

    std::stringstream junk("not a model");
    EXPECT_THROW(LstmModel::read_binary(junk), DataError);
}
