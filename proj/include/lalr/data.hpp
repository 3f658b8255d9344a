#pragma once

// Datasets: CSV ingestion, standardization, deterministic splits and the
// heteroscedastic synthetic generator.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lalr/error.hpp"
#include "lalr/format.hpp"
#include "lalr/rng.hpp"

namespace lalr {

struct ScalerStats
{
    Eigen::RowVectorXd x_mean, x_std;
    Eigen::RowVectorXd y_mean, y_std;
    std::vector<std::size_t> dropped_features;  // zero-variance columns (original indices)
};

struct Dataset
{
    Eigen::MatrixXd x;
    Eigen::MatrixXd y;
    std::vector<std::string> feature_names;
    std::vector<std::string> target_names;
    std::optional<ScalerStats> scaler;
    std::string name;
    std::string provenance;

    std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
    std::size_t features() const { return static_cast<std::size_t>(x.cols()); }
    std::size_t labels() const { return static_cast<std::size_t>(y.cols()); }

    Dataset subset(const std::vector<std::size_t>& idx) const
    {
        Dataset out;
        out.x = x(idx, Eigen::all);
        out.y = y(idx, Eigen::all);
        out.feature_names = feature_names;
        out.target_names = target_names;
        out.scaler = scaler;
        out.name = name;
        out.provenance = provenance;
        return out;
    }

    // Keeps only the listed target columns.
    Dataset select_targets(const std::vector<std::size_t>& cols) const
    {
        Dataset out = *this;
        out.y = y(Eigen::all, cols);
        out.target_names.clear();
        for (auto c : cols) out.target_names.push_back(target_names.at(c));
        return out;
    }

    void validate() const
    {
        if (x.rows() != y.rows())
            throw DataError(name + ": feature rows (" + std::to_string(x.rows()) + ") != target rows (" +
                            std::to_string(y.rows()) + ")");
        if (!x.allFinite() || !y.allFinite()) throw DataError(name + ": non-finite values");
    }
};

struct CsvSchema
{
    // Column names (or zero-based indices when there is no header).
    std::vector<std::string> target_columns;
    bool header = true;
    char delimiter = ',';
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, delim)) out.push_back(cell);
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

inline std::string trim(std::string s)
{
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

inline double parse_cell(const std::string& raw, std::size_t line_no, std::size_t col, const std::string& path)
{
    const std::string cell = trim(raw);
    auto fail = [&](const std::string& why) {
        return DataError(path + ": row " + std::to_string(line_no) + ", column " + std::to_string(col + 1) + ": " + why);
    };
    if (cell.empty()) throw fail("missing value");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size()) throw fail("cannot parse '" + cell + "' as a number");
    if (!std::isfinite(v)) throw fail("non-finite value");
    return v;
}

}  // namespace detail

// X = non-target columns in file order, Y = target columns in the order given
// by the schema. Row numbers in errors are 1-based file line numbers.
inline Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
    if (schema.target_columns.empty()) throw ConfigError("CSV schema needs at least one target column");

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (detail::trim(line).empty()) continue;
        auto cells = detail::split_line(line, schema.delimiter);
        if (schema.header && names.empty()) {
            for (auto& c : cells) names.push_back(detail::trim(c));
            width = names.size();
            continue;
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width)
            throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " fields, expected " + std::to_string(width));
        std::vector<double> row(width);
        for (std::size_t c = 0; c < width; ++c) row[c] = detail::parse_cell(cells[c], line_no, c, path.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError(path.string() + ": no data rows");
    if (names.empty())
        for (std::size_t c = 0; c < width; ++c) names.push_back(std::to_string(c));

    std::vector<std::size_t> target_idx;
    for (const auto& t : schema.target_columns) {
        auto it = std::find(names.begin(), names.end(), t);
        if (it == names.end()) throw DataError(path.string() + ": target column '" + t + "' not found");
        target_idx.push_back(static_cast<std::size_t>(it - names.begin()));
    }
    std::vector<std::size_t> feature_idx;
    for (std::size_t c = 0; c < width; ++c)
        if (std::find(target_idx.begin(), target_idx.end(), c) == target_idx.end()) feature_idx.push_back(c);
    if (feature_idx.empty()) throw DataError(path.string() + ": no feature columns left after removing targets");

    Dataset ds;
    ds.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_idx.size()));
    ds.y.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(target_idx.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t j = 0; j < feature_idx.size(); ++j)
            ds.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][feature_idx[j]];
        for (std::size_t j = 0; j < target_idx.size(); ++j)
            ds.y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][target_idx[j]];
    }
    for (auto c : feature_idx) ds.feature_names.push_back(names[c]);
    for (auto c : target_idx) ds.target_names.push_back(names[c]);
    ds.name = path.stem().string();
    ds.provenance = path.string();
    return ds;
}

// Features then targets, shortest round-trip float formatting.
inline void write_csv(const Dataset& ds, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    std::vector<std::string> header = ds.feature_names;
    for (std::size_t j = header.size(); j < ds.features(); ++j) header.push_back("x" + std::to_string(j));
    for (std::size_t j = 0; j < ds.labels(); ++j)
        header.push_back(j < ds.target_names.size() ? ds.target_names[j] : "y" + std::to_string(j));
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
    for (Eigen::Index r = 0; r < ds.x.rows(); ++r) {
        for (Eigen::Index c = 0; c < ds.x.cols(); ++c) out << (c ? "," : "") << format_double(ds.x(r, c));
        for (Eigen::Index c = 0; c < ds.y.cols(); ++c)
            out << ((ds.x.cols() + c) ? "," : "") << format_double(ds.y(r, c));
        out << '\n';
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct Standardized
{
    Dataset train;
    std::vector<Dataset> others;
    ScalerStats stats;
};

// Population (ddof = 0) statistics of the training split only; applied to
// train and every dataset in `others`. Zero-variance feature columns are
// dropped everywhere and listed in stats.dropped_features.
inline Standardized standardize(const Dataset& train, const std::vector<Dataset>& others = {})
{
    if (train.rows() == 0) throw DataError("cannot standardize an empty training set");
    const double n = static_cast<double>(train.rows());
    ScalerStats s;
    auto col_stats = [n](const Eigen::MatrixXd& m, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& sd) {
        mean = m.colwise().sum() / n;
        sd = ((m.rowwise() - mean).array().square().colwise().sum() / n).sqrt().matrix();
    };
    Eigen::RowVectorXd xm, xs;
    col_stats(train.x, xm, xs);
    col_stats(train.y, s.y_mean, s.y_std);
    for (Eigen::Index j = 0; j < s.y_std.size(); ++j)
        if (!(s.y_std(j) > 0.0))
            throw DataError(train.name + ": target column '" +
                            (static_cast<std::size_t>(j) < train.target_names.size() ? train.target_names[j]
                                                                                      : std::to_string(j)) +
                            "' has zero variance");

    std::vector<std::size_t> keep;
    for (Eigen::Index j = 0; j < xs.size(); ++j) {
        if (xs(j) > 0.0)
            keep.push_back(static_cast<std::size_t>(j));
        else
            s.dropped_features.push_back(static_cast<std::size_t>(j));
    }
    if (keep.empty()) throw DataError(train.name + ": every feature column has zero variance");
    s.x_mean = xm(keep);
    s.x_std = xs(keep);

    auto apply = [&](const Dataset& d) {
        if (d.features() != train.features() || d.labels() != train.labels())
            throw ShapeError(d.name + ": column count differs from the training split");
        Dataset out = d;
        out.x = ((d.x(Eigen::all, keep).rowwise() - s.x_mean).array().rowwise() / s.x_std.array()).matrix();
        out.y = ((d.y.rowwise() - s.y_mean).array().rowwise() / s.y_std.array()).matrix();
        out.feature_names.clear();
        for (auto j : keep)
            if (j < d.feature_names.size()) out.feature_names.push_back(d.feature_names[j]);
        out.scaler = s;
        return out;
    };

    Standardized result;
    result.train = apply(train);
    for (const auto& o : others) result.others.push_back(apply(o));
    result.stats = s;
    return result;
}

struct Split
{
    Dataset first;
    Dataset second;
};

// Deterministic row partition: the first part gets round(fraction * rows)
// rows. Both parts keep the original relative row order.
inline Split split(const Dataset& ds, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
    const std::size_t total = ds.rows();
    const auto head = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
    if (head == 0 || head == total)
        throw DataError(ds.name + ": split of " + std::to_string(total) + " rows at " + format_double(fraction) +
                        " leaves an empty part");
    auto perm = permutation(total, derive_seed(seed, streams::split));
    std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(head));
    std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(head), perm.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {ds.subset(a), ds.subset(b)};
}

// Deterministic row subsample keeping round(fraction * rows) rows (at least one).
inline Dataset subsample(const Dataset& ds, double fraction, std::uint64_t seed)
{
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("subsample fraction must lie in (0, 1]");
    if (fraction == 1.0) return ds;
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ds.rows()))));
    auto perm = permutation(ds.rows(), derive_seed(seed, streams::subsample));
    perm.resize(keep);
    std::sort(perm.begin(), perm.end());
    Dataset out = ds.subset(perm);
    out.provenance += " [subsample " + format_double(fraction) + " seed " + std::to_string(seed) + "]";
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic heteroscedastic data: y = f(x) + eps, eps ~ N(0, sigma(x)^2),
// sigma(x) = 0.1 exp(1 - x), x ~ U[lo, hi].

enum class SyntheticFunction { sine_ramp, linear };

inline double noise_sigma(double x) { return 0.1 * std::exp(1.0 - x); }

inline double synthetic_mean(SyntheticFunction f, double x)
{
    switch (f) {
    case SyntheticFunction::sine_ramp: return std::sin(2.0 * std::numbers::pi * x) * x + 0.5;
    case SyntheticFunction::linear: return 2.0 * x + 0.5;
    }
    return 0.0;
}

inline std::string to_string(SyntheticFunction f)
{
    return f == SyntheticFunction::sine_ramp ? "sine_ramp" : "linear";
}

inline SyntheticFunction parse_synthetic_function(const std::string& s)
{
    if (s == "sine_ramp") return SyntheticFunction::sine_ramp;
    if (s == "linear") return SyntheticFunction::linear;
    throw ConfigError("unknown synthetic function '" + s + "'");
}

inline Dataset gen_heteroscedastic(std::size_t count, std::uint64_t seed,
                                   SyntheticFunction f = SyntheticFunction::sine_ramp, double lo = 0.0,
                                   double hi = 1.0)
{
    if (count == 0) throw ConfigError("synthetic dataset needs at least one row");
    if (!(lo < hi)) throw ConfigError("synthetic interval must satisfy lo < hi");
    Rng rng(derive_seed(seed, streams::generator));
    Dataset ds;
    ds.x.resize(static_cast<Eigen::Index>(count), 1);
    ds.y.resize(static_cast<Eigen::Index>(count), 1);
    for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
        const double x = rng.uniform(lo, hi);
        ds.x(i, 0) = x;
        ds.y(i, 0) = synthetic_mean(f, x) + noise_sigma(x) * rng.normal();
    }
    ds.feature_names = {"x"};
    ds.target_names = {"y"};
    ds.name = "synthetic";
    ds.provenance = "heteroscedastic f=" + to_string(f) + " sigma=0.1*exp(1-x) x~U[" + format_double(lo) + "," +
                    format_double(hi) + "] count=" + std::to_string(count) + " seed=" + std::to_string(seed);
    return ds;
}

// ---------------------------------------------------------------------------
// Dataset manifests (one JSON document per shipped dataset).

struct DatasetManifest
{
    std::string name;
    std::string file;  // relative to the manifest
    std::string origin;
    std::vector<std::string> target_columns;
    std::size_t rows = 0;
    std::size_t features = 0;
    std::string notes;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

inline nlohmann::json to_json(const DatasetManifest& m)
{
    return {{"name", m.name},         {"file", m.file},         {"origin", m.origin}, {"target_columns", m.target_columns},
            {"rows", m.rows},         {"features", m.features}, {"notes", m.notes}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j)
{
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        m.file = j.at("file").get<std::string>();
        m.origin = j.value("origin", "");
        m.target_columns = j.at("target_columns").get<std::vector<std::string>>();
        m.rows = j.value("rows", std::size_t{0});
        m.features = j.value("features", std::size_t{0});
        m.notes = j.value("notes", "");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad dataset manifest: ") + e.what());
    }
    return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
    try {
        return manifest_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline void write_manifest(const DatasetManifest& m, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << to_json(m).dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Acklam's rational approximation refined by one Halley step; |error| < 1e-15
// over (0, 1).
inline double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal quantile needs p in (0, 1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double lo = 0.02425;
    double x;
    if (p < lo) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - lo) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

}  // namespace lalr
