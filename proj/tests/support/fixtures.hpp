#pragma once

#include "streamguard/config.hpp"
#include "streamguard/synth.hpp"

#include <cmath>
#include <vector>

namespace fixture {

// Small enough to run the full pipeline in well under a second.
inline streamguard::harness::PipelineConfig small_config() {
    streamguard::harness::PipelineConfig c;
    c.lstm.hidden_units = 8;
    c.lstm.epochs = 8;
    c.lstm.time_step = 12;
    c.lstm.batch_size = 16;
    c.detector.horizon = 5;
    c.detector.reference_length = 150;
    c.drift.sliding_window = 40;
    c.drift.max_adaptive_window = 160;
    c.preprocess.seasonal_period = 24;
    return c;
}

inline streamguard::harness::StreamSpec small_spec(std::size_t length = 3000, std::size_t dims = 3) {
    streamguard::harness::StreamSpec s;
    s.length = length;
    s.dims = dims;
    s.seed = 11;
    return s;
}

// 2D rows +-a * l_k from the Cholesky factor of sigma: the sample covariance
// (n - 1 denominator) of these rows is exactly sigma.
inline streamguard::Matrix data_with_covariance(const std::vector<std::vector<double>>& sigma) {
    const int d = static_cast<int>(sigma.size());
    std::vector<std::vector<double>> l(d, std::vector<double>(d, 0.0));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = sigma[i][j];
            for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
            l[i][j] = i == j ? std::sqrt(s) : s / l[j][j];
        }
    }
    const int m = 2 * d;
    const double a = std::sqrt((m - 1) / 2.0);
    streamguard::Matrix x(m, d);
    for (int k = 0; k < d; ++k) {
        for (int i = 0; i < d; ++i) {
            x(2 * k, i) = a * l[i][k];
            x(2 * k + 1, i) = -a * l[i][k];
        }
    }
    return x;
}

}  // namespace fixture
