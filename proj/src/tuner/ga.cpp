#include "streamguard/tuner.hpp"

#include "streamguard/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

namespace streamguard::tuner {

Domain Domain::real(std::string name, double lo, double hi) {
    return Domain{std::move(name), Kind::continuous, lo, hi, {}};
}

Domain Domain::integer(std::string name, long lo, long hi) {
    return Domain{std::move(name), Kind::integer, static_cast<double>(lo), static_cast<double>(hi), {}};
}

Domain Domain::categorical(std::string name, std::vector<std::string> choices) {
    const double hi = choices.empty() ? -1.0 : static_cast<double>(choices.size() - 1);
    return Domain{std::move(name), Kind::categorical, 0.0, hi, std::move(choices)};
}

bool Domain::contains(double value) const {
    if (!std::isfinite(value) || value < lo || value > hi) return false;
    return kind == Kind::continuous || value == std::round(value);
}

void SearchSpace::validate() const {
    if (genes.empty()) throw ConfigError("search space has no genes");
    for (const auto& d : genes) {
        if (!std::isfinite(d.lo) || !std::isfinite(d.hi) || d.lo > d.hi) {
            throw ConfigError("gene '" + d.name + "' has an empty or unbounded domain");
        }
        if (d.kind == Domain::Kind::categorical && d.choices.empty()) {
            throw ConfigError("categorical gene '" + d.name + "' has no choices");
        }
    }
}

bool SearchSpace::contains(const Genome& genome) const {
    if (genome.size() != genes.size()) return false;
    for (std::size_t g = 0; g < genes.size(); ++g) {
        if (!genes[g].contains(genome[g])) return false;
    }
    return true;
}

std::size_t SearchSpace::index_of(const std::string& name) const {
    for (std::size_t g = 0; g < genes.size(); ++g) {
        if (genes[g].name == name) return g;
    }
    throw ConfigError("search space has no gene '" + name + "'");
}

SearchSpace SearchSpace::realtimeoaw() {
    // The published ranges for A_th and D_th are open at 0.
    return SearchSpace{{Domain::real("alert_threshold", 1e-3, 0.1),
                        Domain::real("drift_threshold", 1e-3, 0.08),
                        Domain::integer("sliding_window", 100, 600),
                        Domain::integer("max_adaptive_window", 400, 4000)}};
}

SearchSpace SearchSpace::lstm() {
    return SearchSpace{{Domain::integer("epochs", 20, 100),
                        Domain::real("learning_rate", 1e-4, 1e-2),
                        Domain::categorical("optimizer", {"adam", "sgd"}),
                        Domain::categorical("activation", {"relu", "tanh"}),
                        Domain::categorical("loss", {"mse", "mae"}),
                        Domain::integer("batch_size", 10, 50)}};
}

namespace {

void require_inside(const SearchSpace& space, const Genome& genome) {
    if (genome.size() != space.size()) {
        throw ConfigError("genome has " + std::to_string(genome.size()) + " genes, space has " +
                          std::to_string(space.size()));
    }
    for (std::size_t g = 0; g < genome.size(); ++g) {
        if (!space.genes[g].contains(genome[g])) {
            throw ConfigError("gene '" + space.genes[g].name + "' value " + std::to_string(genome[g]) +
                              " lies outside its domain");
        }
    }
}

}  // namespace

drift::DriftConfig decode_drift_config(const SearchSpace& space, const Genome& genome,
                                       const drift::DriftConfig& base) {
    require_inside(space, genome);
    drift::DriftConfig c = base;
    c.alert_threshold = genome[space.index_of("alert_threshold")];
    c.drift_threshold = genome[space.index_of("drift_threshold")];
    c.sliding_window = static_cast<int>(genome[space.index_of("sliding_window")]);
    c.max_adaptive_window = static_cast<int>(genome[space.index_of("max_adaptive_window")]);
    c.validate();
    return c;
}

Genome encode_drift_config(const SearchSpace& space, const drift::DriftConfig& config) {
    Genome g(space.size());
    g[space.index_of("alert_threshold")] = config.alert_threshold;
    g[space.index_of("drift_threshold")] = config.drift_threshold;
    g[space.index_of("sliding_window")] = config.sliding_window;
    g[space.index_of("max_adaptive_window")] = config.max_adaptive_window;
    return g;
}

predictor::LstmHyperparams decode_lstm_hyperparams(const SearchSpace& space, const Genome& genome,
                                                   const predictor::LstmHyperparams& base) {
    require_inside(space, genome);
    auto choice = [&](const char* name) {
        const auto g = space.index_of(name);
        return space.genes[g].choices[static_cast<std::size_t>(genome[g])];
    };
    predictor::LstmHyperparams hp = base;
    hp.epochs = static_cast<int>(genome[space.index_of("epochs")]);
    hp.learning_rate = genome[space.index_of("learning_rate")];
    hp.optimizer = predictor::optimizer_from_string(choice("optimizer"));
    hp.activation = predictor::activation_from_string(choice("activation"));
    hp.loss = predictor::loss_from_string(choice("loss"));
    hp.batch_size = static_cast<int>(genome[space.index_of("batch_size")]);
    hp.validate();
    return hp;
}

void GaSettings::validate() const {
    if (population < 2) throw ConfigError("GA population must be >= 2");
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw ConfigError("crossover rate must lie in [0, 1]");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ConfigError("mutation rate must lie in [0, 1]");
    if (max_time < 1) throw ConfigError("GA generation budget must be >= 1");
    if (tournament_size < 1) throw ConfigError("tournament size must be >= 1");
    if (elitism < 0 || elitism >= population) throw ConfigError("elitism must lie in [0, population)");
    if (threads < 1) throw ConfigError("GA threads must be >= 1");
}

namespace {

using Rng = std::mt19937_64;

double sample_gene(const Domain& d, Rng& rng) {
    if (d.kind == Domain::Kind::continuous) {
        return std::uniform_real_distribution<double>(d.lo, d.hi)(rng);
    }
    return static_cast<double>(std::uniform_int_distribution<long>(static_cast<long>(d.lo),
                                                                    static_cast<long>(d.hi))(rng));
}

bool better(const Candidate& a, const Candidate& b) {
    if (a.fitness.value != b.fitness.value) return a.fitness.value < b.fitness.value;
    return a.fitness.tiebreak < b.fitness.tiebreak;
}

std::string genome_text(const SearchSpace& space, const Genome& genome) {
    std::ostringstream out;
    for (std::size_t g = 0; g < genome.size(); ++g) {
        if (g) out << ';';
        const auto& d = space.genes[g];
        out << d.name << '=';
        if (d.kind == Domain::Kind::categorical) {
            out << d.choices[static_cast<std::size_t>(genome[g])];
        } else {
            out << genome[g];
        }
    }
    return out.str();
}

class Evaluator {
public:
    Evaluator(const FitnessFn& fn, int threads, GaResult& result)
        : fn_(fn), threads_(threads), result_(result) {}

    void run(std::vector<Candidate>& pop) {
        std::vector<std::size_t> todo;
        for (std::size_t c = 0; c < pop.size(); ++c) {
            if (!pop[c].evaluated) todo.push_back(c);
        }
        std::vector<Fitness> out(todo.size());
        std::vector<std::exception_ptr> errors(todo.size());
        auto work = [&](std::size_t t) {
            try {
                out[t] = fn_(pop[todo[t]].genome);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        };
        if (threads_ <= 1 || todo.size() < 2) {
            for (std::size_t t = 0; t < todo.size(); ++t) work(t);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::jthread> pool;
            const auto n = std::min<std::size_t>(static_cast<std::size_t>(threads_), todo.size());
            for (std::size_t w = 0; w < n; ++w) {
                pool.emplace_back([&] {
                    for (std::size_t t = next++; t < todo.size(); t = next++) work(t);
                });
            }
        }
        for (std::size_t t = 0; t < todo.size(); ++t) {
            if (errors[t]) std::rethrow_exception(errors[t]);
            Candidate& c = pop[todo[t]];
            c.fitness = out[t];
            if (std::isnan(c.fitness.value)) {
                result_.diagnostics.push_back("evaluation " + std::to_string(result_.evaluations + 1) +
                                              " returned NaN; fitness set to +inf");
                c.fitness.value = std::numeric_limits<double>::infinity();
            }
            c.evaluated = true;
            ++result_.evaluations;
        }
    }

private:
    const FitnessFn& fn_;
    int threads_;
    GaResult& result_;
};

}  // namespace

GaResult ga_optimize(const SearchSpace& space, const FitnessFn& fitness, const GaSettings& settings) {
    space.validate();
    settings.validate();
    GaResult result;
    Rng rng(settings.seed);
    Evaluator evaluator(fitness, settings.threads, result);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto pop_size = static_cast<std::size_t>(settings.population);

    std::vector<Candidate> pop(pop_size);
    for (auto& c : pop) {
        c.genome.resize(space.size());
        for (std::size_t g = 0; g < space.size(); ++g) c.genome[g] = sample_gene(space.genes[g], rng);
    }

    auto record = [&](int generation) {
        double sum = 0.0;
        std::size_t finite = 0;
        for (const auto& c : pop) {
            if (better(c, result.best) || !result.best.evaluated) result.best = c;
            if (std::isfinite(c.fitness.value)) {
                sum += c.fitness.value;
                ++finite;
            }
        }
        const double mean = finite ? sum / static_cast<double>(finite)
                                   : std::numeric_limits<double>::infinity();
        result.history.push_back({generation, result.best.fitness.value, mean, result.best.genome});
    };

    evaluator.run(pop);
    record(1);

    auto tournament = [&]() -> const Candidate& {
        std::uniform_int_distribution<std::size_t> pick(0, pop_size - 1);
        const Candidate* winner = &pop[pick(rng)];
        for (int t = 1; t < settings.tournament_size; ++t) {
            const Candidate* other = &pop[pick(rng)];
            if (better(*other, *winner)) winner = other;
        }
        return *winner;
    };
    auto mutate = [&](Genome& genome) {
        for (std::size_t g = 0; g < genome.size(); ++g) {
            if (unit(rng) >= settings.mutation_rate) continue;
            const Domain& d = space.genes[g];
            if (d.kind == Domain::Kind::continuous) {
                std::normal_distribution<double> jitter(0.0, 0.1 * d.range());
                genome[g] = std::clamp(genome[g] + jitter(rng), d.lo, d.hi);
            } else {
                genome[g] = sample_gene(d, rng);
            }
        }
    };

    for (int generation = 2; generation <= settings.max_time; ++generation) {
        std::vector<Candidate> sorted = pop;
        std::stable_sort(sorted.begin(), sorted.end(), better);
        std::vector<Candidate> next(sorted.begin(), sorted.begin() + settings.elitism);
        while (next.size() < pop_size) {
            Candidate a{tournament().genome, {}, false};
            Candidate b{tournament().genome, {}, false};
            if (unit(rng) < settings.crossover_rate) {
                for (std::size_t g = 0; g < space.size(); ++g) {
                    if (unit(rng) < 0.5) std::swap(a.genome[g], b.genome[g]);
                }
            }
            mutate(a.genome);
            mutate(b.genome);
            next.push_back(std::move(a));
            if (next.size() < pop_size) next.push_back(std::move(b));
        }
        pop = std::move(next);
        evaluator.run(pop);
        record(generation);
    }
    return result;
}

std::string history_csv(const SearchSpace& space, const GaResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "generation,best_fitness,mean_fitness,best_genome\n";
    for (const auto& h : result.history) {
        out << h.generation << ',' << h.best_fitness << ',' << h.mean_fitness << ",\""
            << genome_text(space, h.best_genome) << "\"\n";
    }
    return out.str();
}

}  // namespace streamguard::tuner
