#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ksembed/common.hpp"
#include "ksembed/rng.hpp"
#include "ksembed/sparse_matrix.hpp"

namespace ksembed {

enum class DataFormat { Csv, Libsvm };
enum class NormalizeMode { None, Standardize, ScaleMaxAbs };

struct NormalizationInfo {
    NormalizeMode mode = NormalizeMode::None;
    std::vector<double> feature_shift;  // empty unless standardized
    std::vector<double> feature_scale;  // per-feature divisor
    double global_scale = 1.0;          // applied after per-feature scaling
    double radius = 0.0;                // declared max column squared norm, 0 = none
};

struct Dataset {
    SparseDataMatrix features;  // d x n, columns are points
    Vector targets;
    std::optional<SparseDataMatrix> test_features;
    std::optional<Vector> test_targets;
    NormalizationInfo normalization;

    index_t n_points() const { return features.n_cols(); }
    index_t n_features() const { return features.n_rows(); }
};

struct LoadOptions {
    index_t target_column = -1;  // CSV: negative counts from the end (-1 = last)
    bool has_header = false;     // CSV only
    char separator = ',';        // CSV only
    NormalizeMode normalize = NormalizeMode::None;
    double radius = 0.0;         // > 0: rescale so the max column squared norm equals it
};

namespace detail {

inline double parse_number(const std::string& tok, index_t line_no, const char* what) {
    try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
        if (pos != tok.size()) throw std::invalid_argument("trailing characters");
        if (!std::isfinite(v)) throw std::invalid_argument("not finite");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("load_dataset: line " + std::to_string(line_no) +
                                    ": cannot parse " + std::string(what) + " '" + tok + "'");
    }
}

struct RawData {
    index_t d = 0;
    std::vector<std::vector<SparseEntry>> columns;
    std::vector<double> targets;
};

inline RawData parse_csv(std::istream& in, index_t target_column, bool has_header, char sep) {
    RawData raw;
    std::string line;
    index_t line_no = 0;
    index_t width = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (has_header && line_no == 1) continue;
        if (line.empty()) continue;
        std::vector<std::string> toks;
        std::string tok;
        std::stringstream ss(line);
        while (std::getline(ss, tok, sep)) toks.push_back(tok);
        if (!line.empty() && line.back() == sep) toks.push_back("");
        if (width < 0) {
            width = static_cast<index_t>(toks.size());
            if (width < 2)
                throw std::invalid_argument("load_dataset: line " + std::to_string(line_no) +
                                            ": need at least one feature and a target");
        } else if (static_cast<index_t>(toks.size()) != width) {
            throw std::invalid_argument("load_dataset: line " + std::to_string(line_no) +
                                        ": expected " + std::to_string(width) + " fields, got " +
                                        std::to_string(toks.size()));
        }
        index_t tcol = target_column >= 0 ? target_column : width + target_column;
        if (tcol < 0 || tcol >= width)
            throw std::invalid_argument("load_dataset: target column out of range");
        std::vector<SparseEntry> col;
        index_t feature = 0;
        double target = 0;
        for (index_t i = 0; i < width; ++i) {
            if (i == tcol) {
                target = parse_number(toks[static_cast<size_t>(i)], line_no, "target");
            } else {
                double v = parse_number(toks[static_cast<size_t>(i)], line_no, "feature");
                if (v != 0.0) col.push_back({feature, v});
                ++feature;
            }
        }
        raw.columns.push_back(std::move(col));
        raw.targets.push_back(target);
    }
    if (raw.columns.empty()) throw std::invalid_argument("load_dataset: no data rows");
    raw.d = width - 1;
    return raw;
}

inline RawData parse_libsvm(std::istream& in) {
    RawData raw;
    std::string line;
    index_t line_no = 0;
    index_t max_index = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string tok;
        if (!(ss >> tok))
            throw std::invalid_argument("load_dataset: line " + std::to_string(line_no) +
                                        ": missing target");
        raw.targets.push_back(parse_number(tok, line_no, "target"));
        std::vector<SparseEntry> col;
        while (ss >> tok) {
            auto colon = tok.find(':');
            if (colon == std::string::npos)
                throw std::invalid_argument("load_dataset: line " + std::to_string(line_no) +
                                            ": expected index:value, got '" + tok + "'");
            double idx_raw = parse_number(tok.substr(0, colon), line_no, "feature index");
            index_t idx = static_cast<index_t>(idx_raw);
            if (idx < 1 || static_cast<double>(idx) != idx_raw)
                throw std::invalid_argument("load_dataset: line " + std::to_string(line_no) +
                                            ": feature indices are 1-based integers");
            double v = parse_number(tok.substr(colon + 1), line_no, "feature value");
            if (v != 0.0) col.push_back({idx - 1, v});  // to 0-based
            max_index = std::max(max_index, idx);
        }
        std::sort(col.begin(), col.end(),
                  [](const SparseEntry& a, const SparseEntry& b) { return a.index < b.index; });
        raw.columns.push_back(std::move(col));
    }
    if (raw.columns.empty()) throw std::invalid_argument("load_dataset: no data rows");
    raw.d = std::max<index_t>(max_index, 1);
    return raw;
}

}  // namespace detail

// Load a CSV or libsvm regression dataset; zero entries are dropped, optional
// per-feature normalization, then a global rescale so the maximum column
// squared norm equals the declared radius.
inline Dataset load_dataset(const std::string& path, DataFormat format,
                            const LoadOptions& options = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_dataset: cannot open '" + path + "'");
    detail::RawData raw = format == DataFormat::Csv
                              ? detail::parse_csv(in, options.target_column, options.has_header, options.separator)
                              : detail::parse_libsvm(in);

    const index_t d = raw.d;
    const index_t n = static_cast<index_t>(raw.columns.size());
    NormalizationInfo info;
    info.mode = options.normalize;
    info.feature_scale.assign(static_cast<size_t>(d), 1.0);

    if (options.normalize == NormalizeMode::Standardize) {
        info.feature_shift.assign(static_cast<size_t>(d), 0.0);
        std::vector<double> mean(static_cast<size_t>(d), 0.0), sq(static_cast<size_t>(d), 0.0);
        for (const auto& col : raw.columns)
            for (const auto& e : col) {
                mean[static_cast<size_t>(e.index)] += e.value;
                sq[static_cast<size_t>(e.index)] += e.value * e.value;
            }
        for (index_t i = 0; i < d; ++i) {
            double m = mean[static_cast<size_t>(i)] / static_cast<double>(n);
            double var = sq[static_cast<size_t>(i)] / static_cast<double>(n) - m * m;
            info.feature_shift[static_cast<size_t>(i)] = m;
            info.feature_scale[static_cast<size_t>(i)] = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
        // Centering densifies; rebuild every column with shifted entries.
        for (auto& col : raw.columns) {
            std::vector<double> dense(static_cast<size_t>(d), 0.0);
            for (const auto& e : col) dense[static_cast<size_t>(e.index)] = e.value;
            col.clear();
            for (index_t i = 0; i < d; ++i) {
                double v = (dense[static_cast<size_t>(i)] - info.feature_shift[static_cast<size_t>(i)]) /
                           info.feature_scale[static_cast<size_t>(i)];
                if (v != 0.0) col.push_back({i, v});
            }
        }
    } else if (options.normalize == NormalizeMode::ScaleMaxAbs) {
        std::vector<double> amax(static_cast<size_t>(d), 0.0);
        for (const auto& col : raw.columns)
            for (const auto& e : col)
                amax[static_cast<size_t>(e.index)] =
                    std::max(amax[static_cast<size_t>(e.index)], std::abs(e.value));
        for (index_t i = 0; i < d; ++i)
            info.feature_scale[static_cast<size_t>(i)] =
                amax[static_cast<size_t>(i)] > 0 ? amax[static_cast<size_t>(i)] : 1.0;
        for (auto& col : raw.columns)
            for (auto& e : col) e.value /= info.feature_scale[static_cast<size_t>(e.index)];
    }

    if (options.radius > 0) {
        double max_sq = 0;
        for (const auto& col : raw.columns) {
            double s = 0;
            for (const auto& e : col) s += e.value * e.value;
            max_sq = std::max(max_sq, s);
        }
        if (max_sq > 0) {
            info.global_scale = std::sqrt(options.radius / max_sq);
            for (auto& col : raw.columns)
                for (auto& e : col) e.value *= info.global_scale;
        }
        info.radius = options.radius;
    }

    Dataset ds;
    ds.features = SparseDataMatrix(d, std::move(raw.columns));
    ds.targets = Eigen::Map<Vector>(raw.targets.data(), static_cast<index_t>(raw.targets.size()));
    ds.normalization = std::move(info);
    return ds;
}

// Seeded shuffle split; the held-out part moves into test_features/targets.
inline void split_dataset(Dataset& ds, double test_fraction, RandomSeed seed) {
    if (!(test_fraction >= 0) || test_fraction >= 1)
        throw std::invalid_argument("split_dataset: test fraction must lie in [0,1)");
    if (test_fraction == 0) return;
    const index_t n = ds.n_points();
    index_t n_test = static_cast<index_t>(std::floor(test_fraction * static_cast<double>(n)));
    if (n_test == 0 || n_test >= n) return;
    auto perm = RngStream(seed).derive("split").permutation(n);

    std::vector<std::vector<SparseEntry>> train_cols, test_cols;
    std::vector<double> train_y, test_y;
    for (index_t k = 0; k < n; ++k) {
        index_t c = perm[static_cast<size_t>(k)];
        std::vector<SparseEntry> col = ds.features.col(c);
        if (k < n_test) {
            test_cols.push_back(std::move(col));
            test_y.push_back(ds.targets[c]);
        } else {
            train_cols.push_back(std::move(col));
            train_y.push_back(ds.targets[c]);
        }
    }
    ds.test_features = SparseDataMatrix(ds.n_features(), std::move(test_cols));
    ds.test_targets = Eigen::Map<Vector>(test_y.data(), static_cast<index_t>(test_y.size()));
    ds.features = SparseDataMatrix(ds.n_features(), std::move(train_cols));
    ds.targets = Eigen::Map<Vector>(train_y.data(), static_cast<index_t>(train_y.size()));
}

}  // namespace ksembed
