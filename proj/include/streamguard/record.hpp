#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace streamguard {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Label : std::uint8_t { normal = 0, anomalous = 1 };

/// One timestamped observation as ingested. Missing values are NaN.
struct RawRecord {
    std::int64_t timestamp{0};
    std::vector<double> values;
    std::optional<Label> label;
};

using RawStream = std::vector<RawRecord>;

/// A record after preprocessing: the standardized raw features (prediction
/// target space) and the predictor input features (reduced + seasonal).
struct ProcessedRecord {
    std::int64_t index{0};
    Vector normalized;
    Vector features;
};

/// Stacks the values of a stream into an M x D matrix.
Matrix to_matrix(const RawStream& stream);

}  // namespace streamguard
