#pragma once

// Experiment config files (JSON). Unknown keys anywhere in the document are
// rejected with their full path; relative file paths are resolved against the
// directory containing the config file.
//
// {
//   "name": "california_mae",
//   "dataset": {"manifest": "../data/california_housing.json"},
//   "subsample": 1.0,
//   "network": {"hidden": [{"width": 20, "activation": "relu"}], "output_activation": "softsign"},
//   "loss": {"kind": "mae"},
//   "batch_size": 256,
//   "epochs": 2500,
//   "threshold": "ols",
//   "seeds": [1, 2, 3, 4, 5],
//   "lr": {"constant_eta": 0.1, "eta_max": 10, "eta_min": 0.0001},
//   "policy": "lalr",
//   "validation_fraction": 0.2,
//   "standardize": true,
//   "kz_sample_rows": 0,
//   "taus": [0.05, 0.95],
//   "aic": {"epochs": 200, "batch_size": 64, "eta": 0.1, "seed": 1}
// }
//
// "dataset" is one of
//   {"manifest": path, "targets": [...]}       targets override the manifest
//   {"csv": path, "targets": [...]}            targets default to the last column
//   {"synthetic": {"count": n, "seed": s, "function": "sine_ramp", "lo": 0, "hi": 1}}

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lalr/bench.hpp"
#include "lalr/data.hpp"
#include "lalr/error.hpp"
#include "lalr/serialize.hpp"

namespace lalr {

struct SyntheticSource
{
    std::size_t count = 1000;
    std::uint64_t seed = 1;
    SyntheticFunction function = SyntheticFunction::sine_ramp;
    double lo = 0.0;
    double hi = 1.0;
};

struct DatasetSource
{
    std::optional<std::filesystem::path> manifest;
    std::optional<std::filesystem::path> csv;
    std::optional<SyntheticSource> synthetic;
    std::vector<std::string> targets;  // empty = manifest default / last column
};

struct AicSettings
{
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double eta = 0.1;
    std::uint64_t seed = 1;
};

struct CliConfig
{
    ExperimentSpec experiment;
    DatasetSource dataset;
    double subsample = 1.0;
    std::string policy = "lalr";  // used by `train`
    std::vector<double> taus;     // used by `quantiles`
    std::optional<AicSettings> aic;
};

namespace detail {

inline std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base)
{
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

inline DatasetSource dataset_source_from_json(const nlohmann::json& j, const std::filesystem::path& base)
{
    JsonObject o(j, "dataset");
    DatasetSource src;
    int kinds = 0;
    if (o.has("manifest")) {
        src.manifest = resolve_path(o.get<std::string>("manifest"), base);
        ++kinds;
    }
    if (o.has("csv")) {
        src.csv = resolve_path(o.get<std::string>("csv"), base);
        ++kinds;
    }
    if (o.has("synthetic")) {
        JsonObject s(o.raw("synthetic"), "dataset.synthetic");
        SyntheticSource syn;
        syn.count = s.get<std::size_t>("count", syn.count);
        syn.seed = s.get<std::uint64_t>("seed", syn.seed);
        syn.function = parse_synthetic_function(s.get<std::string>("function", "sine_ramp"));
        syn.lo = s.get<double>("lo", syn.lo);
        syn.hi = s.get<double>("hi", syn.hi);
        s.finish();
        src.synthetic = syn;
        ++kinds;
    }
    if (kinds != 1) throw ConfigError("'dataset' needs exactly one of manifest, csv or synthetic");
    src.targets = o.get<std::vector<std::string>>("targets", {});
    o.finish();
    return src;
}

}  // namespace detail

inline CliConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {})
{
    JsonObject o(j, "");
    CliConfig c;
    auto& e = c.experiment;
    e.name = o.get<std::string>("name", e.name);
    if (o.has("dataset")) c.dataset = detail::dataset_source_from_json(o.raw("dataset"), base_dir);
    c.subsample = o.get<double>("subsample", 1.0);
    if (o.has("network")) e.network = network_spec_from_json(o.raw("network"), "network");
    if (o.has("loss")) e.loss = loss_from_json(o.raw("loss"), "loss");
    e.batch_size = o.get<std::size_t>("batch_size", e.batch_size);
    e.epochs = o.get<std::size_t>("epochs", e.epochs);
    e.threshold = parse_threshold(o.get<std::string>("threshold", "ols"));
    if (o.has("seeds")) {
        const auto& seeds = o.raw("seeds");
        if (!seeds.is_array()) throw ConfigError("key 'seeds' must be an array");
        e.seeds.clear();
        for (const auto& s : seeds) {
            if (!s.is_number_unsigned()) throw ConfigError("key 'seeds' must hold non-negative integers");
            e.seeds.push_back(s.get<std::uint64_t>());
        }
    }
    if (o.has("lr")) {
        JsonObject lr(o.raw("lr"), "lr");
        e.constant_eta = lr.get<double>("constant_eta", e.constant_eta);
        e.eta_max = lr.get<double>("eta_max", e.eta_max);
        e.eta_min = lr.get<double>("eta_min", e.eta_min);
        lr.finish();
    }
    c.policy = o.get<std::string>("policy", c.policy);
    if (c.policy != "lalr" && c.policy != "constant")
        throw ConfigError("key 'policy' must be \"lalr\" or \"constant\", got '" + c.policy + "'");
    e.validation_fraction = o.get<double>("validation_fraction", e.validation_fraction);
    e.standardize = o.get<bool>("standardize", e.standardize);
    e.kz_sample_rows = o.get<std::size_t>("kz_sample_rows", e.kz_sample_rows);
    c.taus = o.get<std::vector<double>>("taus", {});
    if (o.has("aic")) {
        JsonObject a(o.raw("aic"), "aic");
        AicSettings s;
        s.epochs = a.get<std::size_t>("epochs", s.epochs);
        s.batch_size = a.get<std::size_t>("batch_size", s.batch_size);
        s.eta = a.get<double>("eta", s.eta);
        s.seed = a.get<std::uint64_t>("seed", s.seed);
        a.finish();
        c.aic = s;
    }
    o.finish();
    if (!(c.subsample > 0.0 && c.subsample <= 1.0)) throw ConfigError("key 'subsample' must lie in (0, 1]");
    for (double t : c.taus)
        if (!(t > 0.0 && t < 1.0)) throw ConfigError("key 'taus': every tau must lie in (0, 1)");
    return c;
}

inline CliConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& err) {
        throw ConfigError(path.string() + ": " + err.what());
    }
    return config_from_json(j, path.parent_path());
}

// Loads the data described by `src`; the result is unstandardized.
inline Dataset load_dataset(const DatasetSource& src)
{
    if (src.synthetic) {
        const auto& s = *src.synthetic;
        return gen_heteroscedastic(s.count, s.seed, s.function, s.lo, s.hi);
    }
    if (src.manifest) {
        const auto m = read_manifest(*src.manifest);
        const auto file = detail::resolve_path(m.file, src.manifest->parent_path());
        if (!std::filesystem::exists(file))
            throw DataError("dataset file '" + file.string() + "' named by manifest '" + src.manifest->string() +
                            "' does not exist");
        auto ds = load_csv(file, {src.targets.empty() ? m.target_columns : src.targets});
        ds.name = m.name;
        ds.provenance = m.origin;
        return ds;
    }
    if (src.csv) {
        std::vector<std::string> targets = src.targets;
        if (targets.empty()) {
            std::ifstream in(*src.csv);
            std::string header;
            if (!in || !std::getline(in, header)) throw DataError("cannot open dataset '" + src.csv->string() + "'");
            if (!header.empty() && header.back() == '\r') header.pop_back();
            auto names = detail::split_line(header, ',');
            if (names.empty()) throw DataError(src.csv->string() + ": empty header");
            targets.push_back(detail::trim(names.back()));
        }
        return load_csv(*src.csv, {targets});
    }
    throw ConfigError("no dataset given (set 'dataset' in the config or pass --dataset)");
}

// A --dataset argument: a manifest (.json) or a CSV file. Targets already in
// the config are kept.
inline DatasetSource dataset_from_argument(const std::string& arg, const DatasetSource& current)
{
    DatasetSource src;
    src.targets = current.targets;
    std::filesystem::path p(arg);
    if (p.extension() == ".json")
        src.manifest = p;
    else
        src.csv = p;
    return src;
}

}  // namespace lalr
