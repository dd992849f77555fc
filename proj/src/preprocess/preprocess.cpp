#include "streamguard/preprocess.hpp"

#include "streamguard/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace streamguard {

Matrix to_matrix(const RawStream& stream) {
    if (stream.empty()) {
        return Matrix(0, 0);
    }
    const auto cols = static_cast<Eigen::Index>(stream.front().values.size());
    Matrix out(static_cast<Eigen::Index>(stream.size()), cols);
    for (std::size_t r = 0; r < stream.size(); ++r) {
        if (static_cast<Eigen::Index>(stream[r].values.size()) != cols) {
            throw DataError("record " + std::to_string(r) + " has " +
                            std::to_string(stream[r].values.size()) + " values, expected " +
                            std::to_string(cols));
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            out(static_cast<Eigen::Index>(r), c) = stream[r].values[static_cast<std::size_t>(c)];
        }
    }
    return out;
}

namespace preprocess {
namespace {

constexpr double kConstantStd = 1e-12;

double population_std(const Vector& column, double mean) {
    return std::sqrt((column.array() - mean).square().mean());
}

}  // namespace

RawStream clean(const RawStream& stream) {
    if (stream.empty()) {
        throw DataError("cannot clean an empty stream");
    }
    RawStream out = stream;
    const std::size_t dims = stream.front().values.size();
    for (std::size_t f = 0; f < dims; ++f) {
        double sum = 0.0;
        std::size_t present = 0;
        for (const auto& rec : out) {
            if (rec.values.size() != dims) {
                throw DataError("inconsistent record width in stream");
            }
            if (!std::isnan(rec.values[f])) {
                sum += rec.values[f];
                ++present;
            }
        }
        if (present == 0) {
            throw DataError("feature column " + std::to_string(f) + " is entirely missing");
        }
        const double fill = sum / static_cast<double>(present);

        double last = std::numeric_limits<double>::quiet_NaN();
        for (auto& rec : out) {
            double& v = rec.values[f];
            if (std::isnan(v)) {
                v = std::isnan(last) ? fill : last;
            }
            last = v;
        }

        Vector column(static_cast<Eigen::Index>(out.size()));
        for (std::size_t r = 0; r < out.size(); ++r) {
            column[static_cast<Eigen::Index>(r)] = out[r].values[f];
        }
        const double mean = column.mean();
        const double bound = 4.0 * population_std(column, mean);
        for (auto& rec : out) {
            rec.values[f] = std::clamp(rec.values[f], mean - bound, mean + bound);
        }
    }
    return out;
}

void fill_missing(std::vector<double>& values, std::span<const double> previous) {
    for (std::size_t f = 0; f < values.size(); ++f) {
        if (std::isnan(values[f])) {
            values[f] = f < previous.size() ? previous[f] : 0.0;
        }
    }
}

Vector StandardizationStats::apply(std::span<const double> values) const {
    if (values.size() != dim()) {
        throw DataError("record has " + std::to_string(values.size()) + " features, expected " +
                        std::to_string(dim()));
    }
    Vector out(mean.size());
    for (Eigen::Index f = 0; f < mean.size(); ++f) {
        out[f] = (values[static_cast<std::size_t>(f)] - mean[f]) / std[f];
    }
    return out;
}

Matrix StandardizationStats::apply(const Matrix& data) const {
    if (static_cast<std::size_t>(data.cols()) != dim()) {
        throw DataError("data width does not match standardization stats");
    }
    return (data.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

Standardized fit_standardize(const Matrix& data) {
    if (data.rows() == 0) {
        throw DataError("cannot standardize an empty stream");
    }
    StandardizationStats stats;
    stats.mean = data.colwise().mean().transpose();
    stats.std.resize(data.cols());
    stats.constant.assign(static_cast<std::size_t>(data.cols()), false);
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        const double s = population_std(data.col(c), stats.mean[c]);
        if (s < kConstantStd) {
            stats.std[c] = 1.0;
            stats.constant[static_cast<std::size_t>(c)] = true;
        } else {
            stats.std[c] = s;
        }
    }
    Matrix standardized = stats.apply(data);
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
        if (stats.constant[static_cast<std::size_t>(c)]) {
            standardized.col(c).setZero();
        }
    }
    return {std::move(stats), std::move(standardized)};
}

Correlation pearson_matrix(const Matrix& data) {
    if (data.rows() < 2) {
        throw DataError("correlation needs at least 2 records");
    }
    const Eigen::Index d = data.cols();
    const Matrix centered = data.rowwise() - data.colwise().mean();
    const Matrix cov = centered.transpose() * centered;
    Correlation out;
    out.rho = Matrix::Identity(d, d);
    out.zero_variance.assign(static_cast<std::size_t>(d), false);
    for (Eigen::Index l = 0; l < d; ++l) {
        out.zero_variance[static_cast<std::size_t>(l)] =
            cov(l, l) <= kConstantStd * kConstantStd * static_cast<double>(data.rows());
    }
    for (Eigen::Index l = 0; l < d; ++l) {
        for (Eigen::Index m = l + 1; m < d; ++m) {
            double r = 0.0;
            if (!out.zero_variance[static_cast<std::size_t>(l)] &&
                !out.zero_variance[static_cast<std::size_t>(m)]) {
                r = std::clamp(cov(l, m) / std::sqrt(cov(l, l) * cov(m, m)), -1.0, 1.0);
            }
            out.rho(l, m) = r;
            out.rho(m, l) = r;
        }
    }
    return out;
}

Matrix covariance(const Matrix& data) {
    if (data.rows() < 2) {
        throw DataError("covariance needs at least 2 records");
    }
    const Matrix centered = data.rowwise() - data.colwise().mean();
    return (centered.transpose() * centered) / static_cast<double>(data.rows() - 1);
}

double PcaModel::explained_variance() const {
    const double total = all_eigenvalues.sum();
    return total > 0.0 ? eigenvalues.sum() / total : 0.0;
}

namespace {

PcaModel eigen_basis(const Matrix& standardized) {
    if (standardized.rows() < standardized.cols() + 1) {
        throw DataError("PCA needs at least D+1 = " + std::to_string(standardized.cols() + 1) +
                        " records, got " + std::to_string(standardized.rows()));
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(covariance(standardized));
    if (solver.info() != Eigen::Success) {
        throw NumericError("symmetric eigensolver failed");
    }
    const Eigen::Index d = standardized.cols();
    PcaModel model;
    model.fitted_dim = static_cast<std::size_t>(d);
    model.all_eigenvalues.resize(d);
    model.components.resize(d, d);
    // Eigen returns ascending order.
    for (Eigen::Index k = 0; k < d; ++k) {
        const Eigen::Index src = d - 1 - k;
        model.all_eigenvalues[k] = std::max(0.0, solver.eigenvalues()[src]);
        Vector v = solver.eigenvectors().col(src);
        Eigen::Index pivot = 0;
        v.cwiseAbs().maxCoeff(&pivot);
        if (v[pivot] < 0.0) {
            v = -v;
        }
        model.components.col(k) = v;
    }
    if (model.all_eigenvalues.sum() <= 0.0) {
        throw DataError("PCA input has zero total variance");
    }
    return model;
}

void truncate(PcaModel& model, std::size_t keep) {
    const auto b = static_cast<Eigen::Index>(keep);
    model.components = model.components.leftCols(b).eval();
    model.eigenvalues = model.all_eigenvalues.head(b);
}

}  // namespace

PcaModel fit_pca(const Matrix& standardized, double variance_target) {
    if (!(variance_target > 0.0 && variance_target <= 1.0)) {
        throw ConfigError("variance_target must lie in (0, 1], got " +
                          std::to_string(variance_target));
    }
    PcaModel model = eigen_basis(standardized);
    model.variance_target = variance_target;
    const double total = model.all_eigenvalues.sum();
    const double slack = 1e-12 * total;
    std::size_t keep = model.fitted_dim;
    double cumulative = 0.0;
    for (std::size_t k = 0; k < model.fitted_dim; ++k) {
        cumulative += model.all_eigenvalues[static_cast<Eigen::Index>(k)];
        if (cumulative >= variance_target * total - slack) {
            keep = k + 1;
            break;
        }
    }
    truncate(model, keep);
    return model;
}

PcaModel fit_pca_fixed(const Matrix& standardized, std::size_t components) {
    if (components == 0 || components > static_cast<std::size_t>(standardized.cols())) {
        throw ConfigError("PCA component count must lie in [1, D]");
    }
    PcaModel model = eigen_basis(standardized);
    truncate(model, components);
    model.variance_target = model.explained_variance();
    return model;
}

Vector apply_pca(const PcaModel& model, const Vector& record) {
    if (static_cast<std::size_t>(record.size()) != model.fitted_dim) {
        throw DataError("PCA input has dimension " + std::to_string(record.size()) +
                        ", model was fitted on " + std::to_string(model.fitted_dim));
    }
    return model.components.transpose() * record;
}

Vector apply_pca(const PcaModel& model, std::span<const double> record) {
    return apply_pca(model, Eigen::Map<const Vector>(record.data(),
                                                     static_cast<Eigen::Index>(record.size()))
                                .eval());
}

Vector inverse_pca(const PcaModel& model, const Vector& reduced) {
    if (static_cast<std::size_t>(reduced.size()) != model.retained()) {
        throw DataError("reduced vector does not match the number of components");
    }
    return model.components * reduced;
}

SeasonalDecomposition seasonal_decompose(std::span<const double> series, int period) {
    if (period < 2) {
        throw ConfigError("seasonal period must be at least 2");
    }
    const std::size_t n = series.size();
    const auto p = static_cast<std::size_t>(period);
    if (n < 2 * p) {
        throw DataError("series of length " + std::to_string(n) +
                        " is shorter than two periods of " + std::to_string(period));
    }

    // Centred moving average; even periods use the 2 x p weighted filter.
    std::vector<double> weights;
    if (p % 2 == 0) {
        weights.assign(p + 1, 1.0 / static_cast<double>(p));
        weights.front() *= 0.5;
        weights.back() *= 0.5;
    } else {
        weights.assign(p, 1.0 / static_cast<double>(p));
    }
    const std::size_t half = weights.size() / 2;

    SeasonalDecomposition out;
    out.period = period;
    out.trend.assign(n, std::nullopt);
    for (std::size_t t = half; t + half < n; ++t) {
        double acc = 0.0;
        for (std::size_t w = 0; w < weights.size(); ++w) {
            acc += weights[w] * series[t - half + w];
        }
        out.trend[t] = acc;
    }

    std::vector<double> phase_sum(p, 0.0);
    std::vector<std::size_t> phase_count(p, 0);
    for (std::size_t t = 0; t < n; ++t) {
        if (out.trend[t]) {
            phase_sum[t % p] += series[t] - *out.trend[t];
            ++phase_count[t % p];
        }
    }
    out.profile.resize(p);
    for (std::size_t k = 0; k < p; ++k) {
        out.profile[k] = phase_sum[k] / static_cast<double>(phase_count[k]);
    }
    const double centre =
        std::accumulate(out.profile.begin(), out.profile.end(), 0.0) / static_cast<double>(p);
    for (double& v : out.profile) {
        v -= centre;
    }

    out.seasonal.resize(n);
    out.residual.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < n; ++t) {
        out.seasonal[t] = out.profile[t % p];
        if (out.trend[t]) {
            out.residual[t] = series[t] - *out.trend[t] - out.seasonal[t];
        }
    }
    return out;
}

Vector build_feature_vector(const Vector& reduced, std::span<const double> seasonal) {
    Vector out(reduced.size() + static_cast<Eigen::Index>(seasonal.size()));
    out.head(reduced.size()) = reduced;
    for (std::size_t k = 0; k < seasonal.size(); ++k) {
        out[reduced.size() + static_cast<Eigen::Index>(k)] = seasonal[k];
    }
    return out;
}

Preprocessor Preprocessor::fit(const RawStream& offline, const PreprocessOptions& options) {
    const RawStream cleaned = clean(offline);
    const Matrix raw = to_matrix(cleaned);
    Standardized standardized = fit_standardize(raw);

    Preprocessor pre;
    pre.stats_ = std::move(standardized.stats);
    if (options.use_pca) {
        pre.pca_ = options.pca_components > 0
                       ? fit_pca_fixed(standardized.data, options.pca_components)
                       : fit_pca(standardized.data, options.variance_target);
    }
    pre.period_ = options.seasonal_period;
    if (pre.period_ > 0) {
        if (options.seasonal_features.empty()) {
            pre.seasonal_features_.resize(pre.raw_dim());
            std::iota(pre.seasonal_features_.begin(), pre.seasonal_features_.end(), 0);
        } else {
            pre.seasonal_features_ = options.seasonal_features;
        }
        for (const std::size_t f : pre.seasonal_features_) {
            if (f >= pre.raw_dim()) {
                throw ConfigError("seasonal feature index " + std::to_string(f) +
                                  " out of range");
            }
            const Vector column = standardized.data.col(static_cast<Eigen::Index>(f));
            auto decomposition = seasonal_decompose(
                std::span<const double>(column.data(), static_cast<std::size_t>(column.size())),
                pre.period_);
            pre.profiles_.push_back(std::move(decomposition.profile));
        }
    }
    return pre;
}

std::size_t Preprocessor::feature_dim() const {
    return (pca_ ? pca_->retained() : raw_dim()) + seasonal_dim();
}

ProcessedRecord Preprocessor::transform(std::int64_t position,
                                        std::span<const double> values) const {
    ProcessedRecord out;
    out.index = position;
    out.normalized = stats_.apply(values);
    for (std::size_t f = 0; f < stats_.constant.size(); ++f) {
        if (stats_.constant[f]) {
            out.normalized[static_cast<Eigen::Index>(f)] = 0.0;
        }
    }
    const Vector reduced = pca_ ? apply_pca(*pca_, out.normalized) : out.normalized;
    std::vector<double> seasonal(profiles_.size());
    if (period_ > 0) {
        const auto phase = static_cast<std::size_t>(position % period_);
        for (std::size_t k = 0; k < profiles_.size(); ++k) {
            seasonal[k] = profiles_[k][phase];
        }
    }
    out.features = build_feature_vector(reduced, seasonal);
    return out;
}

std::vector<ProcessedRecord> Preprocessor::transform_all(const RawStream& cleaned) const {
    std::vector<ProcessedRecord> out;
    out.reserve(cleaned.size());
    for (std::size_t r = 0; r < cleaned.size(); ++r) {
        out.push_back(transform(static_cast<std::int64_t>(r), cleaned[r].values));
    }
    return out;
}

namespace {

constexpr int kPreprocessorVersion = 1;

nlohmann::json to_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const nlohmann::json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

nlohmann::json Preprocessor::to_json() const {
    nlohmann::json doc;
    doc["format"] = "streamguard.preprocessor";
    doc["version"] = kPreprocessorVersion;
    doc["mean"] = preprocess::to_json(stats_.mean);
    doc["std"] = preprocess::to_json(stats_.std);
    doc["constant"] = stats_.constant;
    if (pca_) {
        std::vector<std::vector<double>> rows;
        for (Eigen::Index r = 0; r < pca_->components.rows(); ++r) {
            const Vector row = pca_->components.row(r).transpose();
            rows.emplace_back(row.data(), row.data() + row.size());
        }
        doc["pca"] = {{"components", rows},
                      {"eigenvalues", preprocess::to_json(pca_->eigenvalues)},
                      {"all_eigenvalues", preprocess::to_json(pca_->all_eigenvalues)},
                      {"variance_target", pca_->variance_target},
                      {"fitted_dim", pca_->fitted_dim}};
    } else {
        doc["pca"] = nullptr;
    }
    doc["seasonal"] = {{"period", period_},
                       {"features", seasonal_features_},
                       {"profiles", profiles_}};
    return doc;
}

Preprocessor Preprocessor::from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format").get<std::string>() != "streamguard.preprocessor") {
            throw DataError("not a preprocessor document");
        }
        if (doc.at("version").get<int>() != kPreprocessorVersion) {
            throw DataError("unsupported preprocessor version");
        }
        Preprocessor pre;
        pre.stats_.mean = vector_from_json(doc.at("mean"));
        pre.stats_.std = vector_from_json(doc.at("std"));
        pre.stats_.constant = doc.at("constant").get<std::vector<bool>>();
        if (!doc.at("pca").is_null()) {
            const auto& p = doc.at("pca");
            PcaModel model;
            const auto rows = p.at("components").get<std::vector<std::vector<double>>>();
            model.fitted_dim = p.at("fitted_dim").get<std::size_t>();
            const auto cols = rows.empty() ? 0 : rows.front().size();
            model.components.resize(static_cast<Eigen::Index>(rows.size()),
                                    static_cast<Eigen::Index>(cols));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    model.components(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                        rows[r].at(c);
                }
            }
            model.eigenvalues = vector_from_json(p.at("eigenvalues"));
            model.all_eigenvalues = vector_from_json(p.at("all_eigenvalues"));
            model.variance_target = p.at("variance_target").get<double>();
            pre.pca_ = std::move(model);
        }
        const auto& s = doc.at("seasonal");
        pre.period_ = s.at("period").get<int>();
        pre.seasonal_features_ = s.at("features").get<std::vector<std::size_t>>();
        pre.profiles_ = s.at("profiles").get<std::vector<std::vector<double>>>();
        return pre;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed preprocessor document: ") + e.what());
    }
}

}  // namespace preprocess
}  // namespace streamguard
