#pragma once

#include "streamguard/record.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace streamguard::predictor {

enum class Optimizer { adam, sgd };
enum class Activation { tanh, relu };
enum class Loss { mse, mae };

std::string to_string(Optimizer v);
std::string to_string(Activation v);
std::string to_string(Loss v);
Optimizer optimizer_from_string(const std::string& s);
Activation activation_from_string(const std::string& s);
Loss loss_from_string(const std::string& s);

/// Training and architecture settings. validate() only checks structural
/// sanity; the tuner's search space holds the narrower tuning ranges.
struct LstmHyperparams {
    int epochs{50};
    double learning_rate{0.005};
    Optimizer optimizer{Optimizer::adam};
    /// Cell activation (candidate and cell output). The dense head is linear.
    Activation activation{Activation::tanh};
    Loss loss{Loss::mse};
    int batch_size{32};
    int hidden_units{16};
    int layers{1};
    /// Input window length S.
    int time_step{24};
    double weight_decay{6e-6};
    /// Global gradient-norm clip; 0 disables.
    double gradient_threshold{5.0};
    std::uint64_t seed{7};

    /// Throws ConfigError when a value leaves its declared range.
    void validate() const;

    nlohmann::json to_json() const;
    static LstmHyperparams from_json(const nlohmann::json& doc);
};

struct LstmLayer {
    Matrix input_weights;      // 4H x in, gate order i, f, o, g
    Matrix recurrent_weights;  // 4H x H
    Matrix bias;               // 4H x 1
};

struct LstmParameters {
    std::vector<LstmLayer> layers;
    Matrix head_weights;  // out x H
    Matrix head_bias;     // out x 1

    std::size_t count() const;
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);
    LstmParameters zeros_like() const;
};

/// L consecutive predicted records emitted when record `origin` arrived;
/// `values` is horizon x raw_dim, row k targets record origin + 1 + k.
struct PredictedSequence {
    std::int64_t origin{0};
    Matrix values;

    std::size_t horizon() const { return static_cast<std::size_t>(values.rows()); }
};

/// Self-labelled supervised pairs: the S feature vectors before a cut and
/// the L normalized raw records after it.
struct SupervisedSet {
    std::vector<Matrix> contexts;  // input_dim x S
    std::vector<Vector> targets;   // raw_dim * L, record-major

    std::size_t size() const { return contexts.size(); }
    bool empty() const { return contexts.empty(); }
};

/// Builds every pair whose S + L records are consecutive by index.
SupervisedSet build_pairs(std::span<const ProcessedRecord> records, std::size_t time_step,
                          std::size_t horizon);

class LstmModel {
public:
    LstmModel() = default;

    static LstmModel init(const LstmHyperparams& hp, std::size_t input_dim, std::size_t raw_dim,
                          std::size_t horizon, std::uint64_t seed);

    /// One prediction from a context of exactly time_step feature vectors.
    PredictedSequence forward(std::span<const Vector> context, std::int64_t origin) const;
    /// Raw D*L output for an input_dim x S context.
    Vector predict(const Matrix& context) const;

    /// Mean data loss (no weight decay) over a set.
    double loss(const SupervisedSet& data) const;

    /// Loss including the L2 penalty and its gradient for a batch. Used by
    /// training and the finite-difference check.
    double loss_and_gradient(const SupervisedSet& data, std::span<const std::size_t> batch,
                             LstmParameters& gradient) const;

    std::size_t input_dim() const { return input_dim_; }
    std::size_t raw_dim() const { return raw_dim_; }
    std::size_t horizon() const { return horizon_; }
    std::size_t output_dim() const { return raw_dim_ * horizon_; }
    std::size_t time_step() const { return static_cast<std::size_t>(hp_.time_step); }
    const LstmHyperparams& hyperparams() const { return hp_; }
    void set_hyperparams(const LstmHyperparams& hp);

    LstmParameters& parameters() { return params_; }
    const LstmParameters& parameters() const { return params_; }

    std::int64_t trained_on() const { return trained_on_; }
    void set_trained_on(std::int64_t watermark) { trained_on_ = watermark; }

    bool all_finite() const;

    nlohmann::json to_json() const;
    static LstmModel from_json(const nlohmann::json& doc);
    void write_binary(std::ostream& out) const;
    static LstmModel read_binary(std::istream& in);

    friend bool operator==(const LstmModel& a, const LstmModel& b);

private:
    Matrix forward_batch(const SupervisedSet& data, std::span<const std::size_t> batch) const;

    LstmHyperparams hp_;
    std::size_t input_dim_{0};
    std::size_t raw_dim_{0};
    std::size_t horizon_{0};
    std::int64_t trained_on_{0};
    LstmParameters params_;
};

struct TrainReport {
    std::vector<double> epoch_loss;  // full training-set data loss after each epoch
    double initial_loss{0.0};
    double final_loss{0.0};
    int best_epoch{0};  // 0 means the entry model was kept
};

/// Mini-batch BPTT with a fixed-seed permutation per epoch. Returns the
/// model with the lowest training loss seen, the entry model included.
LstmModel train(const LstmModel& model, const SupervisedSet& data, const LstmHyperparams& hp,
                TrainReport* report = nullptr);

enum class RetrainMode { warm, cold };

struct RetrainResult {
    LstmModel model;
    double wall_ms{0.0};
    TrainReport report;
};

/// Retrains on a window of recent records. Warm mode fine-tunes for
/// max(5, epochs / 4) epochs; cold mode re-initializes and trains fully.
/// Throws InsufficientDataError when no supervised pair can be formed.
RetrainResult retrain(const LstmModel& model, std::span<const ProcessedRecord> window,
                      const LstmHyperparams& hp, RetrainMode mode);

}  // namespace streamguard::predictor
