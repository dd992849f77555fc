#include "streamguard/lstm.hpp"

#include "streamguard/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>

namespace streamguard::predictor {

std::string to_string(Optimizer v) { return v == Optimizer::adam ? "adam" : "sgd"; }
std::string to_string(Activation v) { return v == Activation::tanh ? "tanh" : "relu"; }
std::string to_string(Loss v) { return v == Loss::mse ? "mse" : "mae"; }

Optimizer optimizer_from_string(const std::string& s) {
    if (s == "adam") return Optimizer::adam;
    if (s == "sgd") return Optimizer::sgd;
    throw ConfigError("unknown optimizer '" + s + "'");
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + s + "'");
}

Loss loss_from_string(const std::string& s) {
    if (s == "mse" || s == "MSE") return Loss::mse;
    if (s == "mae" || s == "MAE") return Loss::mae;
    throw ConfigError("unknown loss '" + s + "'");
}

void LstmHyperparams::validate() const {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string("invalid LSTM hyperparameter: ") + what);
    };
    require(epochs >= 0, "epochs must be >= 0");
    require(learning_rate > 0.0 && learning_rate <= 1.0, "learning_rate must lie in (0, 1]");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(hidden_units >= 1, "hidden_units must be >= 1");
    require(layers >= 1, "layers must be >= 1");
    require(time_step >= 1, "time_step must be >= 1");
    require(weight_decay >= 0.0, "weight_decay must be >= 0");
    require(gradient_threshold >= 0.0, "gradient_threshold must be >= 0");
}

nlohmann::json LstmHyperparams::to_json() const {
    return {{"epochs", epochs},
            {"learning_rate", learning_rate},
            {"optimizer", to_string(optimizer)},
            {"activation", to_string(activation)},
            {"loss", to_string(loss)},
            {"batch_size", batch_size},
            {"hidden_units", hidden_units},
            {"layers", layers},
            {"time_step", time_step},
            {"weight_decay", weight_decay},
            {"gradient_threshold", gradient_threshold},
            {"seed", seed}};
}

LstmHyperparams LstmHyperparams::from_json(const nlohmann::json& doc) {
    LstmHyperparams hp;
    try {
        hp.epochs = doc.value("epochs", hp.epochs);
        hp.learning_rate = doc.value("learning_rate", hp.learning_rate);
        hp.optimizer = optimizer_from_string(doc.value("optimizer", to_string(hp.optimizer)));
        hp.activation = activation_from_string(doc.value("activation", to_string(hp.activation)));
        hp.loss = loss_from_string(doc.value("loss", to_string(hp.loss)));
        hp.batch_size = doc.value("batch_size", hp.batch_size);
        hp.hidden_units = doc.value("hidden_units", hp.hidden_units);
        hp.layers = doc.value("layers", hp.layers);
        hp.time_step = doc.value("time_step", hp.time_step);
        hp.weight_decay = doc.value("weight_decay", hp.weight_decay);
        hp.gradient_threshold = doc.value("gradient_threshold", hp.gradient_threshold);
        hp.seed = doc.value("seed", hp.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed LSTM hyperparameters: ") + e.what());
    }
    hp.validate();
    return hp;
}

namespace {

template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
    for (auto& layer : p.layers) {
        fn(layer.input_weights, true);
        fn(layer.recurrent_weights, true);
        fn(layer.bias, false);
    }
    fn(p.head_weights, true);
    fn(p.head_bias, false);
}

template <typename Fn>
void visit_pair(LstmParameters& a, LstmParameters& b, Fn&& fn) {
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        fn(a.layers[l].input_weights, b.layers[l].input_weights, true);
        fn(a.layers[l].recurrent_weights, b.layers[l].recurrent_weights, true);
        fn(a.layers[l].bias, b.layers[l].bias, false);
    }
    fn(a.head_weights, b.head_weights, true);
    fn(a.head_bias, b.head_bias, false);
}

}  // namespace

std::size_t LstmParameters::count() const {
    std::size_t n = 0;
    visit(*this, [&](const Matrix& m, bool) { n += static_cast<std::size_t>(m.size()); });
    return n;
}

std::vector<double> LstmParameters::flatten() const {
    std::vector<double> flat;
    flat.reserve(count());
    visit(*this, [&](const Matrix& m, bool) { flat.insert(flat.end(), m.data(), m.data() + m.size()); });
    return flat;
}

void LstmParameters::unflatten(std::span<const double> flat) {
    if (flat.size() != count()) {
        throw DataError("parameter vector has " + std::to_string(flat.size()) +
                        " entries, model needs " + std::to_string(count()));
    }
    std::size_t offset = 0;
    visit(*this, [&](Matrix& m, bool) {
        std::copy_n(flat.data() + offset, m.size(), m.data());
        offset += static_cast<std::size_t>(m.size());
    });
}

LstmParameters LstmParameters::zeros_like() const {
    LstmParameters z = *this;
    visit(z, [](Matrix& m, bool) { m.setZero(); });
    return z;
}

SupervisedSet build_pairs(std::span<const ProcessedRecord> records, std::size_t time_step,
                          std::size_t horizon) {
    SupervisedSet set;
    if (time_step == 0 || horizon == 0) {
        throw ConfigError("time_step and horizon must be positive");
    }
    const std::size_t span = time_step + horizon;
    std::size_t run_start = 0;
    auto emit_run = [&](std::size_t begin, std::size_t end) {
        if (end - begin < span) return;
        const auto in = records[begin].features.size();
        const auto raw = records[begin].normalized.size();
        for (std::size_t s = begin; s + span <= end; ++s) {
            Matrix context(in, static_cast<Eigen::Index>(time_step));
            for (std::size_t t = 0; t < time_step; ++t) {
                context.col(static_cast<Eigen::Index>(t)) = records[s + t].features;
            }
            Vector target(raw * static_cast<Eigen::Index>(horizon));
            for (std::size_t k = 0; k < horizon; ++k) {
                target.segment(static_cast<Eigen::Index>(k) * raw, raw) =
                    records[s + time_step + k].normalized;
            }
            set.contexts.push_back(std::move(context));
            set.targets.push_back(std::move(target));
        }
    };
    for (std::size_t r = 1; r <= records.size(); ++r) {
        if (r == records.size() || records[r].index != records[r - 1].index + 1) {
            emit_run(run_start, r);
            run_start = r;
        }
    }
    return set;
}

namespace {

using Array = Eigen::ArrayXXd;

Array sigmoid(const Array& z) { return 1.0 / (1.0 + (-z).exp()); }

Array activate(const Array& z, Activation act) {
    if (act == Activation::tanh) {
        return z.tanh();
    }
    return z.max(0.0);
}

/// Derivative of the activation expressed through its output.
Array activate_grad(const Array& out, Activation act) {
    if (act == Activation::tanh) {
        return 1.0 - out.square();
    }
    return (out > 0.0).cast<double>();
}

/// Per-layer forward values, time-major column blocks of width B.
struct LayerTrace {
    Matrix input;  // in x S*B
    Matrix gates;  // 4H x S*B, activated i, f, o, g
    Matrix cell;   // H x S*B
    Matrix cell_act;
    Matrix hidden;  // H x S*B
};

Matrix stack_batch(const SupervisedSet& data, std::span<const std::size_t> batch,
                   std::size_t steps) {
    const auto b = static_cast<Eigen::Index>(batch.size());
    const Eigen::Index in = data.contexts[batch.front()].rows();
    Matrix x(in, static_cast<Eigen::Index>(steps) * b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const Matrix& ctx = data.contexts[batch[static_cast<std::size_t>(j)]];
        if (ctx.cols() != static_cast<Eigen::Index>(steps) || ctx.rows() != in) {
            throw DataError("context shape does not match the model");
        }
        for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(steps); ++t) {
            x.col(t * b + j) = ctx.col(t);
        }
    }
    return x;
}

/// Runs one LSTM layer over S steps. Returns the stacked hidden states.
Matrix layer_forward(const LstmLayer& layer, const Matrix& input, Eigen::Index steps,
                     Eigen::Index batch, Activation act, LayerTrace* trace) {
    const Eigen::Index h = layer.recurrent_weights.cols();
    Matrix zx = layer.input_weights * input;
    zx.colwise() += layer.bias.col(0);

    Matrix hidden(h, steps * batch);
    Matrix h_prev = Matrix::Zero(h, batch);
    Matrix c_prev = Matrix::Zero(h, batch);
    if (trace) {
        trace->input = input;
        trace->gates.resize(4 * h, steps * batch);
        trace->cell.resize(h, steps * batch);
        trace->cell_act.resize(h, steps * batch);
    }
    for (Eigen::Index t = 0; t < steps; ++t) {
        Matrix z = zx.middleCols(t * batch, batch);
        z.noalias() += layer.recurrent_weights * h_prev;
        const Array i = sigmoid(z.topRows(h).array());
        const Array f = sigmoid(z.middleRows(h, h).array());
        const Array o = sigmoid(z.middleRows(2 * h, h).array());
        const Array g = activate(z.bottomRows(h).array(), act);
        const Array c = f * c_prev.array() + i * g;
        const Array a = activate(c, act);
        c_prev = c.matrix();
        h_prev = (o * a).matrix();
        hidden.middleCols(t * batch, batch) = h_prev;
        if (trace) {
            auto gates = trace->gates.middleCols(t * batch, batch);
            gates.topRows(h) = i.matrix();
            gates.middleRows(h, h) = f.matrix();
            gates.middleRows(2 * h, h) = o.matrix();
            gates.bottomRows(h) = g.matrix();
            trace->cell.middleCols(t * batch, batch) = c_prev;
            trace->cell_act.middleCols(t * batch, batch) = a.matrix();
        }
    }
    if (trace) {
        trace->hidden = hidden;
    }
    return hidden;
}

/// Backpropagates through one layer. `d_hidden` holds the gradient arriving
/// at every hidden output; returns the gradient w.r.t. the layer input.
Matrix layer_backward(const LstmLayer& layer, const LayerTrace& trace, const Matrix& d_hidden,
                      Eigen::Index steps, Eigen::Index batch, Activation act,
                      LstmLayer& grad) {
    const Eigen::Index h = layer.recurrent_weights.cols();
    Matrix dz(4 * h, steps * batch);
    Matrix dh_next = Matrix::Zero(h, batch);
    Array dc_next = Array::Zero(h, batch);
    for (Eigen::Index t = steps - 1; t >= 0; --t) {
        const auto cols = t * batch;
        const auto gates = trace.gates.middleCols(cols, batch);
        const Array i = gates.topRows(h).array();
        const Array f = gates.middleRows(h, h).array();
        const Array o = gates.middleRows(2 * h, h).array();
        const Array g = gates.bottomRows(h).array();
        const Array a = trace.cell_act.middleCols(cols, batch).array();
        const Array c_prev = t > 0 ? Array(trace.cell.middleCols(cols - batch, batch).array())
                                   : Array(Array::Zero(h, batch));

        const Array dh = (d_hidden.middleCols(cols, batch) + dh_next).array();
        const Array d_o = dh * a;
        const Array dc = dc_next + dh * o * activate_grad(a, act);
        const Array d_i = dc * g;
        const Array d_g = dc * i;
        const Array d_f = dc * c_prev;
        dc_next = dc * f;

        auto block = dz.middleCols(cols, batch);
        block.topRows(h) = (d_i * i * (1.0 - i)).matrix();
        block.middleRows(h, h) = (d_f * f * (1.0 - f)).matrix();
        block.middleRows(2 * h, h) = (d_o * o * (1.0 - o)).matrix();
        block.bottomRows(h) = (d_g * activate_grad(g, act)).matrix();
        dh_next.noalias() = layer.recurrent_weights.transpose() * block;
    }

    Matrix h_prev = Matrix::Zero(h, steps * batch);
    if (steps > 1) {
        h_prev.rightCols((steps - 1) * batch) = trace.hidden.leftCols((steps - 1) * batch);
    }
    grad.input_weights.noalias() += dz * trace.input.transpose();
    grad.recurrent_weights.noalias() += dz * h_prev.transpose();
    grad.bias.col(0) += dz.rowwise().sum();
    return layer.input_weights.transpose() * dz;
}

}  // namespace

LstmModel LstmModel::init(const LstmHyperparams& hp, std::size_t input_dim, std::size_t raw_dim,
                          std::size_t horizon, std::uint64_t seed) {
    hp.validate();
    if (input_dim == 0 || raw_dim == 0 || horizon == 0) {
        throw ConfigError("LSTM dimensions must be positive");
    }
    LstmModel model;
    model.hp_ = hp;
    model.input_dim_ = input_dim;
    model.raw_dim_ = raw_dim;
    model.horizon_ = horizon;

    const auto h = static_cast<Eigen::Index>(hp.hidden_units);
    Eigen::Index in = static_cast<Eigen::Index>(input_dim);
    for (int l = 0; l < hp.layers; ++l) {
        LstmLayer layer;
        layer.input_weights.resize(4 * h, in);
        layer.recurrent_weights.resize(4 * h, h);
        layer.bias.resize(4 * h, 1);
        model.params_.layers.push_back(std::move(layer));
        in = h;
    }
    model.params_.head_weights.resize(static_cast<Eigen::Index>(raw_dim * horizon), h);
    model.params_.head_bias.resize(static_cast<Eigen::Index>(raw_dim * horizon), 1);

    const double bound = 1.0 / std::sqrt(static_cast<double>(hp.hidden_units));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-bound, bound);
    visit(model.params_, [&](Matrix& m, bool) {
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            m.data()[k] = uniform(rng);
        }
    });
    for (auto& layer : model.params_.layers) {
        layer.bias.middleRows(h, h).setOnes();
    }
    return model;
}

void LstmModel::set_hyperparams(const LstmHyperparams& hp) {
    hp.validate();
    if (hp.hidden_units != hp_.hidden_units || hp.layers != hp_.layers ||
        hp.time_step != hp_.time_step || hp.activation != hp_.activation) {
        throw ConfigError("hyperparameters change the model structure; re-initialize instead");
    }
    hp_ = hp;
}

Matrix LstmModel::forward_batch(const SupervisedSet& data,
                                std::span<const std::size_t> batch) const {
    const auto steps = static_cast<Eigen::Index>(time_step());
    const auto b = static_cast<Eigen::Index>(batch.size());
    Matrix x = stack_batch(data, batch, time_step());
    if (static_cast<std::size_t>(x.rows()) != input_dim_) {
        throw DataError("context feature width does not match the model input");
    }
    for (const auto& layer : params_.layers) {
        x = layer_forward(layer, x, steps, b, hp_.activation, nullptr);
    }
    Matrix y = params_.head_weights * x.rightCols(b);
    y.colwise() += params_.head_bias.col(0);
    return y;
}

Vector LstmModel::predict(const Matrix& context) const {
    if (static_cast<std::size_t>(context.rows()) != input_dim_ ||
        static_cast<std::size_t>(context.cols()) != time_step()) {
        throw DataError("context must be input_dim x time_step (" + std::to_string(input_dim_) +
                        " x " + std::to_string(time_step()) + "), got " +
                        std::to_string(context.rows()) + " x " + std::to_string(context.cols()));
    }
    const auto steps = static_cast<Eigen::Index>(time_step());
    Matrix x = context;
    for (const auto& layer : params_.layers) {
        x = layer_forward(layer, x, steps, 1, hp_.activation, nullptr);
    }
    Vector y = params_.head_weights * x.col(steps - 1);
    y += params_.head_bias.col(0);
    return y;
}

PredictedSequence LstmModel::forward(std::span<const Vector> context, std::int64_t origin) const {
    if (context.size() != time_step()) {
        throw DataError("context has " + std::to_string(context.size()) +
                        " records, model expects " + std::to_string(time_step()));
    }
    Matrix x(static_cast<Eigen::Index>(input_dim_), static_cast<Eigen::Index>(context.size()));
    for (std::size_t t = 0; t < context.size(); ++t) {
        if (static_cast<std::size_t>(context[t].size()) != input_dim_) {
            throw DataError("context record width does not match the model input");
        }
        x.col(static_cast<Eigen::Index>(t)) = context[t];
    }
    const Vector y = predict(x);
    PredictedSequence seq;
    seq.origin = origin;
    seq.values.resize(static_cast<Eigen::Index>(horizon_), static_cast<Eigen::Index>(raw_dim_));
    for (std::size_t k = 0; k < horizon_; ++k) {
        seq.values.row(static_cast<Eigen::Index>(k)) =
            y.segment(static_cast<Eigen::Index>(k * raw_dim_), static_cast<Eigen::Index>(raw_dim_))
                .transpose();
    }
    return seq;
}

double LstmModel::loss(const SupervisedSet& data) const {
    if (data.empty()) {
        throw DataError("loss over an empty set");
    }
    constexpr std::size_t chunk = 256;
    double total = 0.0;
    std::vector<std::size_t> batch;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        batch.resize(std::min(chunk, data.size() - start));
        std::iota(batch.begin(), batch.end(), start);
        const Matrix y = forward_batch(data, batch);
        for (std::size_t j = 0; j < batch.size(); ++j) {
            const auto diff = (y.col(static_cast<Eigen::Index>(j)) - data.targets[batch[j]]).array();
            total += hp_.loss == Loss::mse ? diff.square().sum() : diff.abs().sum();
        }
    }
    return total / static_cast<double>(data.size() * output_dim());
}

double LstmModel::loss_and_gradient(const SupervisedSet& data, std::span<const std::size_t> batch,
                                    LstmParameters& gradient) const {
    if (batch.empty()) {
        throw DataError("empty training batch");
    }
    const auto steps = static_cast<Eigen::Index>(time_step());
    const auto b = static_cast<Eigen::Index>(batch.size());

    std::vector<LayerTrace> traces(params_.layers.size());
    Matrix x = stack_batch(data, batch, time_step());
    for (std::size_t l = 0; l < params_.layers.size(); ++l) {
        x = layer_forward(params_.layers[l], x, steps, b, hp_.activation, &traces[l]);
    }
    const Matrix last = x.rightCols(b);
    Matrix y = params_.head_weights * last;
    y.colwise() += params_.head_bias.col(0);

    Matrix target(y.rows(), b);
    for (Eigen::Index j = 0; j < b; ++j) {
        target.col(j) = data.targets[batch[static_cast<std::size_t>(j)]];
    }
    const double scale = 1.0 / static_cast<double>(y.size());
    const Array diff = (y - target).array();
    double loss = 0.0;
    Matrix dy;
    if (hp_.loss == Loss::mse) {
        loss = diff.square().sum() * scale;
        dy = (2.0 * scale * diff).matrix();
    } else {
        loss = diff.abs().sum() * scale;
        dy = (scale * diff.sign()).matrix();
    }

    gradient = params_.zeros_like();
    gradient.head_weights.noalias() += dy * last.transpose();
    gradient.head_bias.col(0) += dy.rowwise().sum();

    const Eigen::Index h = params_.head_weights.cols();
    Matrix d_hidden = Matrix::Zero(h, steps * b);
    d_hidden.rightCols(b) = params_.head_weights.transpose() * dy;
    for (std::size_t l = params_.layers.size(); l-- > 0;) {
        d_hidden = layer_backward(params_.layers[l], traces[l], d_hidden, steps, b, hp_.activation,
                                  gradient.layers[l]);
    }

    if (hp_.weight_decay > 0.0) {
        const double decay = hp_.weight_decay;
        double penalty = 0.0;
        LstmParameters& params = const_cast<LstmParameters&>(params_);
        visit_pair(params, gradient, [&](Matrix& p, Matrix& g, bool weight) {
            if (weight) {
                penalty += p.squaredNorm();
                g += 2.0 * decay * p;
            }
        });
        loss += decay * penalty;
    }
    return loss;
}

bool LstmModel::all_finite() const {
    bool finite = true;
    visit(params_, [&](const Matrix& m, bool) { finite = finite && m.allFinite(); });
    return finite;
}

namespace {

constexpr int kModelVersion = 1;
constexpr char kMagic[8] = {'S', 'G', 'L', 'S', 'T', 'M', '\0', '\1'};

}  // namespace

nlohmann::json LstmModel::to_json() const {
    return {{"format", "streamguard.lstm"},
            {"version", kModelVersion},
            {"hyperparams", hp_.to_json()},
            {"input_dim", input_dim_},
            {"raw_dim", raw_dim_},
            {"horizon", horizon_},
            {"trained_on", trained_on_},
            {"parameters", params_.flatten()}};
}

LstmModel LstmModel::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != "streamguard.lstm" ||
            doc.at("version").get<int>() != kModelVersion) {
            throw DataError("not a version-1 LSTM model document");
        }
        const auto hp = LstmHyperparams::from_json(doc.at("hyperparams"));
        LstmModel model = init(hp, doc.at("input_dim").get<std::size_t>(),
                               doc.at("raw_dim").get<std::size_t>(),
                               doc.at("horizon").get<std::size_t>(), 0);
        model.trained_on_ = doc.at("trained_on").get<std::int64_t>();
        model.params_.unflatten(doc.at("parameters").get<std::vector<double>>());
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed LSTM model document: ") + e.what());
    }
}

namespace {

template <typename T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw DataError("truncated binary model");
    }
    return v;
}

}  // namespace

void LstmModel::write_binary(std::ostream& out) const {
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kModelVersion);
    const std::string hp = hp_.to_json().dump();
    put<std::uint64_t>(out, hp.size());
    out.write(hp.data(), static_cast<std::streamsize>(hp.size()));
    put<std::uint64_t>(out, input_dim_);
    put<std::uint64_t>(out, raw_dim_);
    put<std::uint64_t>(out, horizon_);
    put<std::int64_t>(out, trained_on_);
    const auto flat = params_.flatten();
    put<std::uint64_t>(out, flat.size());
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(flat.size() * sizeof(double)));
}

LstmModel LstmModel::read_binary(std::istream& in) {
    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a binary LSTM model");
    }
    if (get<std::uint32_t>(in) != kModelVersion) {
        throw DataError("unsupported binary model version");
    }
    std::string hp(get<std::uint64_t>(in), '\0');
    in.read(hp.data(), static_cast<std::streamsize>(hp.size()));
    const auto input_dim = get<std::uint64_t>(in);
    const auto raw_dim = get<std::uint64_t>(in);
    const auto horizon = get<std::uint64_t>(in);
    LstmModel model = init(LstmHyperparams::from_json(nlohmann::json::parse(hp)), input_dim,
                           raw_dim, horizon, 0);
    model.trained_on_ = get<std::int64_t>(in);
    std::vector<double> flat(get<std::uint64_t>(in));
    in.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(flat.size() * sizeof(double)));
    if (!in) {
        throw DataError("truncated binary model");
    }
    model.params_.unflatten(flat);
    return model;
}

bool operator==(const LstmModel& a, const LstmModel& b) {
    return a.hp_.to_json() == b.hp_.to_json() && a.input_dim_ == b.input_dim_ &&
           a.raw_dim_ == b.raw_dim_ && a.horizon_ == b.horizon_ &&
           a.trained_on_ == b.trained_on_ && a.params_.flatten() == b.params_.flatten();
}

namespace {

struct AdamState {
    LstmParameters m;
    LstmParameters v;
    long step{0};
};

void clip(LstmParameters& grad, double threshold) {
    if (threshold <= 0.0) return;
    double sq = 0.0;
    visit(grad, [&](const Matrix& g, bool) { sq += g.squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (norm > threshold) {
        const double s = threshold / norm;
        visit(grad, [&](Matrix& g, bool) { g *= s; });
    }
}

}  // namespace

LstmModel train(const LstmModel& model, const SupervisedSet& data, const LstmHyperparams& hp,
                TrainReport* report) {
    hp.validate();
    if (data.empty()) {
        throw DataError("training set is empty");
    }
    LstmModel current = model;
    current.set_hyperparams(hp);

    TrainReport local;
    TrainReport& rep = report ? *report : local;
    rep = TrainReport{};
    rep.initial_loss = current.loss(data);
    rep.final_loss = rep.initial_loss;
    if (!std::isfinite(rep.initial_loss)) {
        throw NumericError("initial training loss is not finite");
    }
    LstmModel best = current;
    double best_loss = rep.initial_loss;

    std::mt19937_64 rng(hp.seed);
    std::vector<std::size_t> order(data.size());
    AdamState adam{current.parameters().zeros_like(), current.parameters().zeros_like(), 0};
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    const auto batch_size = static_cast<std::size_t>(hp.batch_size);

    LstmParameters grad;
    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch_size) {
            const std::span<const std::size_t> batch(
                order.data() + start, std::min(batch_size, order.size() - start));
            const double batch_loss = current.loss_and_gradient(data, batch, grad);
            if (!std::isfinite(batch_loss)) {
                throw NumericError("training loss became NaN at epoch " + std::to_string(epoch) +
                                   "; the learning rate " + std::to_string(hp.learning_rate) +
                                   " is likely too high");
            }
            clip(grad, hp.gradient_threshold);
            if (hp.optimizer == Optimizer::adam) {
                ++adam.step;
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
                auto& params = current.parameters();
                std::size_t slot = 0;
                std::vector<Matrix*> ms;
                std::vector<Matrix*> vs;
                visit(adam.m, [&](Matrix& m, bool) { ms.push_back(&m); });
                visit(adam.v, [&](Matrix& v, bool) { vs.push_back(&v); });
                visit_pair(params, grad, [&](Matrix& p, Matrix& g, bool) {
                    Matrix& m = *ms[slot];
                    Matrix& v = *vs[slot];
                    ++slot;
                    m = beta1 * m + (1.0 - beta1) * g;
                    v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
                    p.array() -= hp.learning_rate * (m.array() / c1) /
                                 ((v.array() / c2).sqrt() + eps);
                });
            } else {
                visit_pair(current.parameters(), grad,
                           [&](Matrix& p, Matrix& g, bool) { p -= hp.learning_rate * g; });
            }
        }
        const double epoch_loss = current.loss(data);
        if (!std::isfinite(epoch_loss)) {
            throw NumericError("training loss became NaN after epoch " + std::to_string(epoch));
        }
        rep.epoch_loss.push_back(epoch_loss);
        if (epoch_loss < best_loss) {
            best_loss = epoch_loss;
            best = current;
            rep.best_epoch = epoch;
        }
    }
    rep.final_loss = best_loss;
    return best;
}

RetrainResult retrain(const LstmModel& model, std::span<const ProcessedRecord> window,
                      const LstmHyperparams& hp, RetrainMode mode) {
    const auto start = std::chrono::steady_clock::now();
    const SupervisedSet pairs = build_pairs(window, model.time_step(), model.horizon());
    if (pairs.empty()) {
        throw InsufficientDataError("retraining window of " + std::to_string(window.size()) +
                                    " records holds no run of " +
                                    std::to_string(model.time_step() + model.horizon()) +
                                    " consecutive records");
    }
    RetrainResult result;
    if (mode == RetrainMode::warm) {
        LstmHyperparams warm = model.hyperparams();
        warm.epochs = std::max(5, hp.epochs / 4);
        warm.learning_rate = hp.learning_rate;
        warm.optimizer = hp.optimizer;
        warm.loss = hp.loss;
        warm.batch_size = hp.batch_size;
        warm.weight_decay = hp.weight_decay;
        warm.gradient_threshold = hp.gradient_threshold;
        warm.seed = hp.seed;
        result.model = train(model, pairs, warm, &result.report);
        result.model.set_hyperparams(model.hyperparams());
    } else {
        const LstmModel fresh =
            LstmModel::init(hp, model.input_dim(), model.raw_dim(), model.horizon(), hp.seed);
        result.model = train(fresh, pairs, hp, &result.report);
    }
    result.model.set_trained_on(window.back().index + 1);
    result.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    return result;
}

}  // namespace streamguard::predictor
