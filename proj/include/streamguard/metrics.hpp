#pragma once

#include <span>
#include <vector>

namespace streamguard::harness {

/// ROC AUC as the normalized Mann-Whitney statistic: the probability that a
/// random positive outscores a random negative, ties counting one half.
/// `labels` are 0/1. Throws DataError when only one class is present.
double compute_auc(std::span<const double> scores, std::span<const int> labels);

struct LinearFit {
    double slope{0.0};
    double intercept{0.0};
    double r2{0.0};
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);

}  // namespace streamguard::harness
