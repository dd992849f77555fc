#include "streamguard/csv.hpp"

#include "streamguard/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

namespace streamguard::harness {

double CsvDataset::anomaly_fraction() const {
    return labelled == 0 ? 0.0 : static_cast<double>(anomalous) / static_cast<double>(labelled);
}

namespace {

bool is_missing(std::string_view t) {
    return t.empty() || t == "NA" || t == "NaN" || t == "nan" || t == "?" || t == "null";
}

std::string_view trim(std::string_view t) {
    while (!t.empty() && (t.front() == ' ' || t.front() == '\t')) t.remove_prefix(1);
    while (!t.empty() && (t.back() == ' ' || t.back() == '\t' || t.back() == '\r')) t.remove_suffix(1);
    return t;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t k = 0; k < line.size(); ++k) {
        const char ch = line[k];
        if (quoted) {
            if (ch == '"' && k + 1 < line.size() && line[k + 1] == '"') {
                cell += '"';
                ++k;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cell += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            cells.emplace_back(trim(cell));
            cell.clear();
        } else {
            cell += ch;
        }
    }
    cells.emplace_back(trim(cell));
    return cells;
}

enum class Role { feature, timestamp, label, dropped };

struct Column {
    explicit Column(std::string n) : name(std::move(n)) {}

    std::string name;
    Role role{Role::feature};
    bool numeric{true};
    bool ordinal{false};
    std::map<std::string, std::size_t> counts;
    std::vector<std::string> kept;  // one-hot levels in output order
    bool pooled{false};
};

class Reader {
public:
    Reader(const std::string& path, bool header) : path_(path), header_(header) { rewind(); }

    void rewind() {
        in_ = std::ifstream(path_);
        if (!in_) throw DataError("cannot open '" + path_ + "'");
        row_ = 0;
        if (header_ && std::getline(in_, line_)) header_cells_ = split(line_);
    }

    bool next(std::vector<std::string>& cells) {
        while (std::getline(in_, line_)) {
            if (trim(line_).empty()) continue;
            cells = split(line_);
            ++row_;
            return true;
        }
        return false;
    }

    const std::vector<std::string>& header() const { return header_cells_; }
    std::size_t row() const { return row_ + (header_ ? 1 : 0); }

private:
    std::string path_;
    bool header_;
    std::ifstream in_;
    std::string line_;
    std::vector<std::string> header_cells_;
    std::size_t row_{0};
};

}  // namespace

std::optional<double> parse_number(std::string_view token) {
    token = trim(token);
    if (!token.empty() && token.front() == '+') token.remove_prefix(1);
    double v = 0.0;
    const auto* end = token.data() + token.size();
    const auto res = std::from_chars(token.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || token.empty()) return std::nullopt;
    return v;
}

CsvDataset load_csv(const std::string& path, const CsvSchema& schema) {
    Reader reader(path, schema.has_header);
    std::vector<std::string> cells;

    std::vector<Column> columns;
    std::size_t width = 0;
    if (schema.has_header) {
        width = reader.header().size();
        if (width == 0) throw DataError("'" + path + "' has an empty header");
        for (const auto& n : reader.header()) columns.emplace_back(n);
    } else {
        if (!reader.next(cells)) throw DataError("'" + path + "' holds no records");
        width = cells.size();
        for (std::size_t c = 0; c < width; ++c) columns.emplace_back("c" + std::to_string(c));
        reader.rewind();
    }

    auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            if (columns[c].name == name) return c;
        }
        return std::nullopt;
    };
    std::optional<std::size_t> ts_col;
    std::optional<std::size_t> label_col;
    if (!schema.timestamp_col.empty()) {
        ts_col = find(schema.timestamp_col);
        if (!ts_col) throw DataError("timestamp column '" + schema.timestamp_col + "' not found");
        columns[*ts_col].role = Role::timestamp;
    }
    if (!schema.label_col.empty()) {
        label_col = find(schema.label_col);
        if (!label_col && schema.require_label) {
            throw DataError("label column '" + schema.label_col + "' not found");
        }
        if (label_col) columns[*label_col].role = Role::label;
    } else if (schema.require_label) {
        throw DataError("evaluation needs a label column");
    }
    for (const auto& name : schema.drop_cols) {
        if (auto c = find(name)) columns[*c].role = Role::dropped;
    }
    for (const auto& name : schema.ordinal_cols) {
        if (auto c = find(name)) columns[*c].ordinal = true;
    }

    // Pass 1: column types.
    std::size_t rows = 0;
    while (reader.next(cells)) {
        if (cells.size() != width) {
            throw DataError("row " + std::to_string(reader.row()) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(width));
        }
        for (std::size_t c = 0; c < width; ++c) {
            if (!columns[c].numeric || is_missing(cells[c])) continue;
            if (!parse_number(cells[c])) {
                if (columns[c].role == Role::timestamp) {
                    throw DataError("row " + std::to_string(reader.row()) + ", column '" + columns[c].name +
                                    "': unparseable timestamp '" + cells[c] + "'");
                }
                columns[c].numeric = false;
            }
        }
        ++rows;
    }

    // Pass 2: categorical levels.
    reader.rewind();
    while (reader.next(cells)) {
        for (std::size_t c = 0; c < width; ++c) {
            if (columns[c].role == Role::feature && !columns[c].numeric && !is_missing(cells[c])) {
                ++columns[c].counts[cells[c]];
            }
        }
    }

    CsvDataset out;
    for (auto& col : columns) {
        if (col.role != Role::feature) continue;
        if (col.numeric) {
            out.feature_names.push_back(col.name);
        } else if (col.ordinal) {
            out.feature_names.push_back(col.name);
        } else {
            std::vector<std::pair<std::string, std::size_t>> levels(col.counts.begin(), col.counts.end());
            if (levels.size() > schema.max_levels && schema.max_levels >= 2) {
                std::stable_sort(levels.begin(), levels.end(),
                                 [](const auto& a, const auto& b) { return a.second > b.second; });
                levels.resize(schema.max_levels - 1);
                col.pooled = true;
            }
            for (const auto& [level, _] : levels) col.kept.push_back(level);
            std::sort(col.kept.begin(), col.kept.end());
            for (const auto& level : col.kept) out.feature_names.push_back(col.name + "=" + level);
            if (col.pooled) out.feature_names.push_back(col.name + "=<other>");
        }
    }

    // Pass 3: records.
    reader.rewind();
    out.stream.reserve(rows);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::int64_t position = 0;
    while (reader.next(cells)) {
        RawRecord r;
        r.timestamp = position++;
        r.values.reserve(out.feature_names.size());
        for (std::size_t c = 0; c < width; ++c) {
            const Column& col = columns[c];
            const std::string& cell = cells[c];
            switch (col.role) {
                case Role::dropped:
                    break;
                case Role::timestamp:
                    if (is_missing(cell)) {
                        throw DataError("row " + std::to_string(reader.row()) + ": missing timestamp");
                    }
                    r.timestamp = static_cast<std::int64_t>(*parse_number(cell));
                    break;
                case Role::label:
                    if (is_missing(cell)) break;
                    if (col.numeric) {
                        r.label = *parse_number(cell) == 0.0 ? Label::normal : Label::anomalous;
                    } else {
                        const bool normal = std::find(schema.normal_labels.begin(), schema.normal_labels.end(),
                                                      cell) != schema.normal_labels.end();
                        r.label = normal ? Label::normal : Label::anomalous;
                    }
                    break;
                case Role::feature:
                    if (col.numeric) {
                        r.values.push_back(is_missing(cell) ? nan : *parse_number(cell));
                    } else if (col.ordinal) {
                        if (is_missing(cell)) {
                            r.values.push_back(nan);
                        } else {
                            const auto it = col.counts.find(cell);
                            r.values.push_back(static_cast<double>(std::distance(col.counts.begin(), it)));
                        }
                    } else {
                        bool matched = false;
                        for (const auto& level : col.kept) {
                            const bool hit = !is_missing(cell) && cell == level;
                            matched = matched || hit;
                            r.values.push_back(hit ? 1.0 : 0.0);
                        }
                        if (col.pooled) r.values.push_back(!matched && !is_missing(cell) ? 1.0 : 0.0);
                    }
                    break;
            }
        }
        if (r.label) {
            ++out.labelled;
            if (*r.label == Label::anomalous) ++out.anomalous;
        }
        if (!out.stream.empty() && r.timestamp <= out.stream.back().timestamp) {
            throw DataError("row " + std::to_string(reader.row()) + ": timestamps must increase strictly");
        }
        out.stream.push_back(std::move(r));
    }
    if (out.stream.empty()) throw DataError("'" + path + "' holds no records");
    if (out.feature_names.empty()) throw DataError("'" + path + "' has no feature columns");
    return out;
}

}  // namespace streamguard::harness
