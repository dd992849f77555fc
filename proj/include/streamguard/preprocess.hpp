#pragma once

#include "streamguard/record.hpp"

#include "json.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace streamguard::preprocess {

/// Per-feature population mean and standard deviation. Constant features
/// carry std = 1 and are flagged so they standardize to 0.
struct StandardizationStats {
    Vector mean;
    Vector std;
    std::vector<bool> constant;

    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
    Vector apply(std::span<const double> values) const;
    Matrix apply(const Matrix& data) const;
};

/// Truncated eigenbasis of the sample covariance of standardized data.
/// `components` is fitted_dim x B, one unit eigenvector per column.
struct PcaModel {
    Matrix components;
    Vector eigenvalues;          // retained, non-increasing
    Vector all_eigenvalues;      // every eigenvalue, non-increasing
    double variance_target{0.95};
    std::size_t fitted_dim{0};

    std::size_t retained() const { return static_cast<std::size_t>(components.cols()); }
    double explained_variance() const;
};

struct SeasonalDecomposition {
    int period{0};
    std::vector<std::optional<double>> trend;  // nullopt at the edges
    std::vector<double> seasonal;
    std::vector<double> residual;
    std::vector<double> profile;  // one value per phase, sums to 0
};

/// Fills missing values (forward fill, leading gaps take the column mean)
/// and clips every value to mean +/- 4 std of its column.
RawStream clean(const RawStream& stream);

/// Forward fill only, against a previous record. Used on live records where
/// clipping against offline statistics would erase real shifts.
void fill_missing(std::vector<double>& values, std::span<const double> previous);

struct Standardized {
    StandardizationStats stats;
    Matrix data;
};
Standardized fit_standardize(const Matrix& data);

struct Correlation {
    Matrix rho;
    std::vector<bool> zero_variance;
};
Correlation pearson_matrix(const Matrix& data);

/// Sample covariance (1/(M-1)) of the columns of `data`.
Matrix covariance(const Matrix& data);

PcaModel fit_pca(const Matrix& standardized, double variance_target);
PcaModel fit_pca_fixed(const Matrix& standardized, std::size_t components);
Vector apply_pca(const PcaModel& model, std::span<const double> record);
Vector apply_pca(const PcaModel& model, const Vector& record);
/// Maps a reduced vector back into the fitted space.
Vector inverse_pca(const PcaModel& model, const Vector& reduced);

/// Classical additive decomposition with a centred moving-average trend.
SeasonalDecomposition seasonal_decompose(std::span<const double> series, int period);

Vector build_feature_vector(const Vector& reduced, std::span<const double> seasonal);

struct PreprocessOptions {
    bool use_pca{true};
    double variance_target{0.95};
    /// Fixed component count; 0 selects by variance_target.
    std::size_t pca_components{0};
    /// 0 disables seasonal features.
    int seasonal_period{24};
    /// Indices of raw features to decompose; empty means all.
    std::vector<std::size_t> seasonal_features;
};

/// The fitted offline preprocessing chain applied record by record in the
/// real-time phase. Immutable after fit; transform is safe to call
/// concurrently.
class Preprocessor {
public:
    Preprocessor() = default;

    /// Fits on an offline segment. The stream is cleaned first.
    static Preprocessor fit(const RawStream& offline, const PreprocessOptions& options);

    /// Transforms a live record at stream position `position` (drives the
    /// seasonal phase). Missing values must already be filled.
    ProcessedRecord transform(std::int64_t position, std::span<const double> values) const;

    /// Transforms a cleaned offline stream, positions 0..M-1.
    std::vector<ProcessedRecord> transform_all(const RawStream& cleaned) const;

    std::size_t raw_dim() const { return stats_.dim(); }
    std::size_t feature_dim() const;
    std::size_t seasonal_dim() const { return seasonal_features_.size(); }
    const StandardizationStats& stats() const { return stats_; }
    const std::optional<PcaModel>& pca() const { return pca_; }
    int seasonal_period() const { return period_; }
    const std::vector<std::vector<double>>& seasonal_profiles() const { return profiles_; }

    nlohmann::json to_json() const;
    static Preprocessor from_json(const nlohmann::json& doc);

private:
    StandardizationStats stats_;
    std::optional<PcaModel> pca_;
    int period_{0};
    std::vector<std::size_t> seasonal_features_;
    std::vector<std::vector<double>> profiles_;
};

}  // namespace streamguard::preprocess
