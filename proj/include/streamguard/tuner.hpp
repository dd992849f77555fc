#pragma once

#include "streamguard/drift.hpp"
#include "streamguard/lstm.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace streamguard::tuner {

/// One gene's domain. Categorical genes store the choice index.
struct Domain {
    enum class Kind { continuous, integer, categorical };

    std::string name;
    Kind kind{Kind::continuous};
    double lo{0.0};
    double hi{1.0};
    std::vector<std::string> choices;

    static Domain real(std::string name, double lo, double hi);
    static Domain integer(std::string name, long lo, long hi);
    static Domain categorical(std::string name, std::vector<std::string> choices);

    bool contains(double value) const;
    double range() const { return hi - lo; }
};

using Genome = std::vector<double>;

struct SearchSpace {
    std::vector<Domain> genes;

    /// Throws ConfigError on an empty or non-finite domain.
    void validate() const;
    bool contains(const Genome& genome) const;
    std::size_t index_of(const std::string& name) const;
    std::size_t size() const { return genes.size(); }

    /// A_th, D_th, L_s, L_a over the published tuning ranges.
    static SearchSpace realtimeoaw();
    /// Epochs, learning rate, optimizer, activation, loss, batch size.
    static SearchSpace lstm();
};

/// Rejects genomes outside the space, or with L_a <= L_s.
drift::DriftConfig decode_drift_config(const SearchSpace& space, const Genome& genome,
                                       const drift::DriftConfig& base);
Genome encode_drift_config(const SearchSpace& space, const drift::DriftConfig& config);

predictor::LstmHyperparams decode_lstm_hyperparams(const SearchSpace& space, const Genome& genome,
                                                   const predictor::LstmHyperparams& base);

struct GaSettings {
    int population{70};
    double crossover_rate{0.7};
    double mutation_rate{0.15};
    /// Generation budget, the initial population included.
    int max_time{50};
    int tournament_size{3};
    int elitism{1};
    /// Worker threads for fitness evaluation; results are indexed, so the
    /// outcome does not depend on this.
    int threads{1};
    std::uint64_t seed{1};

    void validate() const;
};

/// Fitness is minimized. `tiebreak` orders equal fitness values (lower wins).
struct Fitness {
    double value{std::numeric_limits<double>::infinity()};
    double tiebreak{0.0};
};

struct Candidate {
    Genome genome;
    Fitness fitness;
    bool evaluated{false};
};

struct GenerationStats {
    int generation{0};
    double best_fitness{0.0};
    double mean_fitness{0.0};
    Genome best_genome;
};

struct GaResult {
    Candidate best;
    std::vector<GenerationStats> history;
    int evaluations{0};
    /// One line per NaN fitness replaced by +inf.
    std::vector<std::string> diagnostics;
};

using FitnessFn = std::function<Fitness(const Genome&)>;

/// Tournament selection, uniform crossover, per-gene mutation (Gaussian with
/// sigma = 10% of the range for continuous genes, resampling otherwise) and
/// elitism. Returns the best candidate ever evaluated.
GaResult ga_optimize(const SearchSpace& space, const FitnessFn& fitness, const GaSettings& settings);

/// The per-generation report as CSV: generation,best_fitness,mean_fitness,best_genome.
std::string history_csv(const SearchSpace& space, const GaResult& result);

}  // namespace streamguard::tuner
