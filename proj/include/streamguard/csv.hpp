#pragma once

#include "streamguard/record.hpp"

#include <cstddef>
#include <istream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace streamguard::harness {

struct CsvSchema {
    bool has_header{true};
    /// Column names; without a header, columns are named c0, c1, ...
    std::string timestamp_col;
    std::string label_col;
    /// A string label equal to one of these is normal; anything else is anomalous.
    /// Numeric labels: 0 is normal.
    std::vector<std::string> normal_labels{"normal", "normal."};
    /// Non-numeric columns are one-hot encoded unless listed here.
    std::set<std::string> ordinal_cols;
    std::set<std::string> drop_cols;
    /// One-hot level cap; beyond it the rarest levels share one "other" column.
    std::size_t max_levels{20};
    /// Reject the file when the label column is missing.
    bool require_label{false};
};

struct CsvDataset {
    RawStream stream;
    std::vector<std::string> feature_names;
    std::size_t labelled{0};
    std::size_t anomalous{0};

    /// Fraction of labelled records that are anomalous.
    double anomaly_fraction() const;
};

/// Two-pass load: the first pass types the columns and collects categorical
/// levels, the second builds records. Missing tokens ("", NA, NaN, ?) become NaN.
CsvDataset load_csv(const std::string& path, const CsvSchema& schema);

/// Parses a decimal number independent of the C locale.
std::optional<double> parse_number(std::string_view token);

}  // namespace streamguard::harness
