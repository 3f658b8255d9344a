#pragma once

// Paired constant-vs-LALR experiments and their reports.
//
// A paired run trains two copies of the same initial network on the same
// split and the same batch order; only the learning-rate policy differs.
// Runs always go to the full epoch budget so one pair yields both the
// epochs-to-threshold and the loss-after-N comparisons.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lalr/baselines.hpp"
#include "lalr/data.hpp"
#include "lalr/error.hpp"
#include "lalr/format.hpp"
#include "lalr/lipschitz.hpp"
#include "lalr/losses.hpp"
#include "lalr/network.hpp"
#include "lalr/parallel.hpp"
#include "lalr/serialize.hpp"
#include "lalr/trainer.hpp"

namespace lalr {

// ---------------------------------------------------------------------------
// Thresholds

enum class ThresholdSource { ols, heuristic, value };

struct ThresholdSpec
{
    ThresholdSource source = ThresholdSource::ols;
    double value = 0.0;  // ThresholdSource::value only

    friend bool operator==(const ThresholdSpec&, const ThresholdSpec&) = default;
};

inline std::string to_string(const ThresholdSpec& t)
{
    switch (t.source) {
    case ThresholdSource::ols: return "ols";
    case ThresholdSource::heuristic: return "heuristic";
    case ThresholdSource::value: return "value:" + format_double(t.value);
    }
    return "ols";
}

// "ols", "heuristic" or "value:<x>".
inline ThresholdSpec parse_threshold(const std::string& s)
{
    if (s == "ols") return {ThresholdSource::ols, 0.0};
    if (s == "heuristic") return {ThresholdSource::heuristic, 0.0};
    if (s.starts_with("value:")) {
        const std::string num = s.substr(6);
        double v = 0.0;
        std::size_t used = 0;
        try {
            v = std::stod(num, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != num.size() || !std::isfinite(v))
            throw ConfigError("threshold value '" + num + "' is not a finite number");
        return {ThresholdSource::value, v};
    }
    throw ConfigError("threshold source must be ols, heuristic or value:<x>, got '" + s + "'");
}

// First 1-based epoch whose training loss is <= t.
inline std::optional<std::size_t> epochs_to_threshold(const RunRecord& record, double t)
{
    if (!std::isfinite(t)) throw ConfigError("threshold must be finite");
    for (const auto& r : record.rows)
        if (r.train_loss <= t) return r.epoch;
    return std::nullopt;
}

// Fraction of rows whose target lies at or below the prediction, per output
// column `col`.
inline double coverage(const Network& model, const Dataset& data, std::size_t col = 0)
{
    if (data.rows() == 0) throw DataError("coverage of an empty dataset");
    check_dataset_matches(model, data);
    if (col >= data.labels()) throw ShapeError("coverage: target column out of range");
    const Matrix pred = predict(model, data.x);
    std::size_t below = 0;
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        if (data.y(i, static_cast<Eigen::Index>(col)) <= pred(i, static_cast<Eigen::Index>(col))) ++below;
    return static_cast<double>(below) / static_cast<double>(data.rows());
}

// ---------------------------------------------------------------------------
// Experiment description

struct ExperimentSpec
{
    std::string name = "experiment";
    std::string dataset;
    NetworkSpec network;  // input/output dims of 0 are taken from the data
    LossSpec loss = LossSpec::mae();
    std::size_t batch_size = 32;
    std::size_t epochs = 100;
    ThresholdSpec threshold;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
    double constant_eta = 0.1;
    double eta_max = 10.0;
    double eta_min = 1e-4;
    double validation_fraction = 0.2;
    bool standardize = true;
    std::size_t kz_sample_rows = 0;

    void validate() const
    {
        if (seeds.empty()) throw ConfigError(name + ": at least one seed is required");
        if (epochs == 0) throw ConfigError(name + ": epochs must be at least 1");
        if (batch_size == 0) throw ConfigError(name + ": batch size must be positive");
        if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
            throw ConfigError(name + ": validation_fraction must lie in (0, 1)");
        loss.validate();
        constant_policy().validate();
        adaptive_policy().validate();
        for (std::size_t i = 0; i < network.hidden.size(); ++i)
            if (network.hidden[i].width == 0 || !(network.hidden[i].dropout_rate >= 0.0 && network.hidden[i].dropout_rate < 1.0))
                throw ConfigError(name + ": hidden layer " + std::to_string(i) + " is invalid");
    }

    LrPolicy constant_policy() const { return LrPolicy::constant(constant_eta); }
    LrPolicy adaptive_policy() const { return LrPolicy::lalr(eta_max, eta_min); }
};

inline nlohmann::json to_json(const ExperimentSpec& s)
{
    return {{"name", s.name},
            {"dataset", s.dataset},
            {"network", to_json(s.network)},
            {"loss", to_json(s.loss)},
            {"batch_size", s.batch_size},
            {"epochs", s.epochs},
            {"threshold", to_string(s.threshold)},
            {"seeds", s.seeds},
            {"constant_eta", s.constant_eta},
            {"eta_max", s.eta_max},
            {"eta_min", s.eta_min},
            {"validation_fraction", s.validation_fraction},
            {"standardize", s.standardize},
            {"kz_sample_rows", s.kz_sample_rows}};
}

// ---------------------------------------------------------------------------
// Paired runs

struct SeedResult
{
    std::uint64_t seed = 0;
    double threshold = 0.0;
    RunRecord constant;
    RunRecord adaptive;
    Network constant_net;
    Network adaptive_net;
    // Held-out split on the standardized scale, kept for coverage.
    Dataset validation;
};

struct ComparisonRecord
{
    ExperimentSpec spec;
    std::vector<SeedResult> seeds;
};

namespace detail {

struct PreparedSeed
{
    Dataset train;
    Dataset val;
    Network init;
    TrainConfig base;
};

inline PreparedSeed prepare_seed(const ExperimentSpec& spec, const Dataset& raw, std::uint64_t seed)
{
    auto parts = split(raw, 1.0 - spec.validation_fraction, seed);
    PreparedSeed p;
    if (spec.standardize) {
        auto z = standardize(parts.first, {parts.second});
        p.train = std::move(z.train);
        p.val = std::move(z.others.front());
    } else {
        p.train = std::move(parts.first);
        p.val = std::move(parts.second);
    }
    NetworkSpec net = spec.network;
    if (net.input_dim == 0) net.input_dim = p.train.features();
    if (net.output_dim == 0) net.output_dim = p.train.labels();
    net.validate();
    p.init = init_network(net, seed);

    p.base.epochs = spec.epochs;
    p.base.batch_size = spec.batch_size;
    p.base.loss = spec.loss;
    p.base.loss.label_count = p.train.labels();
    p.base.shuffle_seed = seed;
    p.base.stop_at_threshold = false;
    p.base.validation_fraction = spec.validation_fraction;
    p.base.kz_sample_rows = spec.kz_sample_rows;
    return p;
}

// Loss of the linear least-squares fit under the experiment's loss.
inline double linear_threshold(const Dataset& train, const LossSpec& loss)
{
    const auto model = ols_fit(train.x, train.y);
    LossSpec l = loss;
    l.label_count = train.labels();
    return loss_value(l, model.predict(train.x), train.y);
}

inline void mark_threshold(RunRecord& rec, double t)
{
    rec.threshold = t;
    rec.reached_threshold = epochs_to_threshold(rec, t);
}

}  // namespace detail

// Runs every seed of `spec` on `raw` (unstandardized) data. Up to `jobs`
// training runs execute concurrently. Divergence is recorded in the affected
// RunRecord and does not stop the other runs.
inline ComparisonRecord paired_run(const ExperimentSpec& spec, const Dataset& raw, std::size_t jobs = 1)
{
    spec.validate();
    raw.validate();

    std::vector<detail::PreparedSeed> prepared;
    prepared.reserve(spec.seeds.size());
    for (auto seed : spec.seeds) prepared.push_back(detail::prepare_seed(spec, raw, seed));

    ComparisonRecord out;
    out.spec = spec;
    out.seeds.resize(spec.seeds.size());

    parallel_for(2 * spec.seeds.size(), jobs, [&](std::size_t task) {
        const std::size_t i = task / 2;
        const bool adaptive = task % 2 == 1;
        const auto& p = prepared[i];
        TrainConfig cfg = p.base;
        cfg.lr_policy = adaptive ? spec.adaptive_policy() : spec.constant_policy();
        auto result = train_recorded(p.init, p.train, p.val, cfg);
        auto& slot = out.seeds[i];
        if (adaptive) {
            slot.adaptive = std::move(result.record);
            slot.adaptive_net = std::move(result.network);
        } else {
            slot.constant = std::move(result.record);
            slot.constant_net = std::move(result.network);
        }
    });

    for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
        auto& s = out.seeds[i];
        s.seed = spec.seeds[i];
        s.validation = std::move(prepared[i].val);
        switch (spec.threshold.source) {
        case ThresholdSource::ols: s.threshold = detail::linear_threshold(prepared[i].train, spec.loss); break;
        case ThresholdSource::value: s.threshold = spec.threshold.value; break;
        case ThresholdSource::heuristic:
            s.threshold = s.constant.rows.empty() ? std::numeric_limits<double>::infinity()
                                                  : min_loss_threshold(s.constant);
            break;
        }
        if (std::isfinite(s.threshold)) {
            detail::mark_threshold(s.constant, s.threshold);
            detail::mark_threshold(s.adaptive, s.threshold);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Summaries

struct Stat
{
    double mean = 0.0;
    std::optional<double> std;  // sample std; absent for a single value
    std::size_t n = 0;

    friend bool operator==(const Stat&, const Stat&) = default;
};

inline std::optional<Stat> stat_of(const std::vector<double>& values)
{
    if (values.empty()) return std::nullopt;
    Stat s;
    s.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(s.n - 1));
    }
    return s;
}

inline std::optional<double> median_of(std::vector<double> values)
{
    if (values.empty()) return std::nullopt;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct RunSummary
{
    std::string policy;
    std::size_t epochs_run = 0;
    std::optional<std::size_t> epochs_to_threshold;
    std::optional<double> final_train_loss;
    std::optional<double> final_val_loss;
    std::optional<double> lr_first;
    std::optional<double> lr_final50_mean;
    std::optional<double> kz_first;
    std::string initial_digest;
    std::string final_digest;
    std::optional<std::string> diverged;

    friend bool operator==(const RunSummary&, const RunSummary&) = default;
};

struct SeedSummary
{
    std::uint64_t seed = 0;
    double threshold = 0.0;
    RunSummary constant;
    RunSummary adaptive;
    // constant / adaptive epochs; present only when both reached the threshold.
    std::optional<double> speedup;
    // Adaptive reached the threshold but constant did not: the speedup is at
    // least epochs_cap / adaptive epochs.
    std::optional<double> speedup_lower_bound;

    friend bool operator==(const SeedSummary&, const SeedSummary&) = default;
};

struct PolicyAggregate
{
    std::optional<Stat> final_train_loss;
    std::optional<Stat> final_val_loss;
    std::optional<Stat> epochs_to_threshold;  // over seeds that reached it
    std::size_t reached = 0;
    std::size_t diverged = 0;

    friend bool operator==(const PolicyAggregate&, const PolicyAggregate&) = default;
};

struct CoverageEntry
{
    double tau = 0.5;
    std::string policy;
    std::uint64_t seed = 0;
    double coverage = 0.0;
    std::size_t rows = 0;

    friend bool operator==(const CoverageEntry&, const CoverageEntry&) = default;
};

struct AicComparison
{
    double tau = 0.5;
    AicReport network;
    AicReport baseline;
    double loss_rel_diff = 0.0;
    double aic_rel_diff = 0.0;
    bool baseline_converged = false;

    friend bool operator==(const AicComparison&, const AicComparison&) = default;
};

struct ExperimentSummary
{
    std::string name;
    std::string dataset;
    nlohmann::json spec;
    std::string threshold_source;
    std::vector<SeedSummary> seeds;
    PolicyAggregate constant;
    PolicyAggregate adaptive;
    // Median of the defined per-seed speedups.
    std::optional<double> speedup;
    // Median over all seeds where the adaptive run reached the threshold,
    // using the lower bound where the constant run was censored.
    std::optional<double> speedup_censored;
    std::vector<CoverageEntry> coverage;
    std::vector<AicComparison> aic;

    friend bool operator==(const ExperimentSummary&, const ExperimentSummary&) = default;
};

struct Summary
{
    std::vector<ExperimentSummary> experiments;

    friend bool operator==(const Summary&, const Summary&) = default;
};

inline RunSummary summarize_run(const RunRecord& r)
{
    RunSummary s;
    s.policy = r.policy;
    s.epochs_run = r.epochs_run;
    s.epochs_to_threshold = r.reached_threshold;
    if (!r.rows.empty()) {
        s.final_train_loss = r.final_train_loss();
        if (!std::isnan(r.final_val_loss())) s.final_val_loss = r.final_val_loss();
        s.lr_first = r.rows.front().lr;
        s.kz_first = r.rows.front().kz;
        const std::size_t tail = std::min<std::size_t>(50, r.rows.size());
        double sum = 0.0;
        for (std::size_t i = r.rows.size() - tail; i < r.rows.size(); ++i) sum += r.rows[i].lr;
        s.lr_final50_mean = sum / static_cast<double>(tail);
    }
    s.initial_digest = r.initial_digest;
    s.final_digest = r.final_digest;
    s.diverged = r.diverged;
    return s;
}

inline PolicyAggregate aggregate(const std::vector<RunSummary>& runs)
{
    PolicyAggregate a;
    std::vector<double> train, val, epochs;
    for (const auto& r : runs) {
        if (r.diverged) {
            ++a.diverged;
            continue;
        }
        if (r.final_train_loss) train.push_back(*r.final_train_loss);
        if (r.final_val_loss) val.push_back(*r.final_val_loss);
        if (r.epochs_to_threshold) {
            ++a.reached;
            epochs.push_back(static_cast<double>(*r.epochs_to_threshold));
        }
    }
    a.final_train_loss = stat_of(train);
    a.final_val_loss = stat_of(val);
    a.epochs_to_threshold = stat_of(epochs);
    return a;
}

inline ExperimentSummary summarize(const ComparisonRecord& rec)
{
    ExperimentSummary out;
    out.name = rec.spec.name;
    out.dataset = rec.spec.dataset;
    out.spec = to_json(rec.spec);
    out.threshold_source = to_string(rec.spec.threshold);
    std::vector<RunSummary> constant, adaptive;
    std::vector<double> speedups, censored;
    for (const auto& s : rec.seeds) {
        SeedSummary ss;
        ss.seed = s.seed;
        ss.threshold = s.threshold;
        ss.constant = summarize_run(s.constant);
        ss.adaptive = summarize_run(s.adaptive);
        const auto& ce = ss.constant.epochs_to_threshold;
        const auto& ae = ss.adaptive.epochs_to_threshold;
        if (ce && ae) {
            ss.speedup = static_cast<double>(*ce) / static_cast<double>(*ae);
            speedups.push_back(*ss.speedup);
            censored.push_back(*ss.speedup);
        } else if (ae && !ss.constant.diverged) {
            ss.speedup_lower_bound = static_cast<double>(rec.spec.epochs) / static_cast<double>(*ae);
            censored.push_back(*ss.speedup_lower_bound);
        }
        constant.push_back(ss.constant);
        adaptive.push_back(ss.adaptive);
        out.seeds.push_back(std::move(ss));
    }
    out.constant = aggregate(constant);
    out.adaptive = aggregate(adaptive);
    out.speedup = median_of(speedups);
    out.speedup_censored = median_of(censored);
    return out;
}

// ---------------------------------------------------------------------------
// Quantile extras: coverage and AIC against the linear baseline

inline std::vector<CoverageEntry> coverage_entries(const ComparisonRecord& rec)
{
    std::vector<CoverageEntry> out;
    for (const auto& s : rec.seeds) {
        if (s.validation.rows() == 0) continue;
        if (!s.constant.diverged)
            out.push_back({rec.spec.loss.tau, "constant", s.seed, coverage(s.constant_net, s.validation), s.validation.rows()});
        if (!s.adaptive.diverged)
            out.push_back({rec.spec.loss.tau, "lalr", s.seed, coverage(s.adaptive_net, s.validation), s.validation.rows()});
    }
    return out;
}

struct AicOptions
{
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    LrPolicy policy = LrPolicy::constant(0.1);
    std::uint64_t seed = 1;
    QuantileFitOptions baseline;
};

// Fits a zero-hidden-layer network with the check loss by mini-batch descent
// and the linear quantile baseline on the same (single target) training data,
// then compares in-sample ALD AIC. Both models have d + 1 parameters.
inline AicComparison compare_aic(const Dataset& train, double tau, const AicOptions& opt = {})
{
    if (train.labels() != 1) throw ShapeError("AIC comparison needs exactly one target column");
    NetworkSpec spec;
    spec.input_dim = train.features();
    spec.output_dim = 1;
    spec.output_activation = ActivationKind::linear();

    TrainConfig cfg;
    cfg.epochs = opt.epochs;
    cfg.batch_size = std::min(opt.batch_size, train.rows());
    cfg.loss = LossSpec::check(tau);
    cfg.lr_policy = opt.policy;
    cfg.shuffle_seed = opt.seed;
    cfg.stop_at_threshold = false;
    auto fitted = train_recorded(init_network(spec, opt.seed), train, Dataset{}, cfg);
    if (fitted.record.diverged) throw DivergenceError(*fitted.record.diverged, fitted.record.epochs_run, cfg.lr_policy.eta);

    const std::size_t k = train.features() + 1;
    AicComparison c;
    c.tau = tau;
    c.network = aic_ald(predict(fitted.network, train.x), train.y, tau, k);
    const auto base = linear_qr_fit(train.x, train.y.col(0), tau, opt.baseline);
    c.baseline = aic_ald(base.predict(train.x), train.y, tau, k);
    c.baseline_converged = base.converged;
    auto rel = [](double a, double b) {
        const double scale = std::max(std::abs(a), std::abs(b));
        return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
    };
    c.loss_rel_diff = rel(c.network.mean_check_loss, c.baseline.mean_check_loss);
    c.aic_rel_diff = rel(c.network.aic, c.baseline.aic);
    return c;
}

// ---------------------------------------------------------------------------
// JSON encoding of summaries

namespace detail {

template <typename T>
nlohmann::json opt_json(const std::optional<T>& v)
{
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_from(JsonObject& o, const std::string& key)
{
    const auto& v = o.raw(key);
    if (v.is_null()) return std::nullopt;
    return o.get<T>(key);
}

inline double aic_number(const nlohmann::json& v, double degenerate_value)
{
    return v.is_null() ? degenerate_value : v.get<double>();
}

}  // namespace detail

inline nlohmann::json to_json(const Stat& s)
{
    return {{"mean", s.mean}, {"std", detail::opt_json(s.std)}, {"n", s.n}};
}

inline nlohmann::json to_json(const std::optional<Stat>& s) { return s ? to_json(*s) : nlohmann::json(nullptr); }

inline std::optional<Stat> stat_from_json(const nlohmann::json& j, const std::string& path)
{
    if (j.is_null()) return std::nullopt;
    JsonObject o(j, path);
    Stat s;
    s.mean = o.get<double>("mean");
    s.std = detail::opt_from<double>(o, "std");
    s.n = o.get<std::size_t>("n");
    o.finish();
    return s;
}

inline nlohmann::json to_json(const RunSummary& r)
{
    using detail::opt_json;
    return {{"policy", r.policy},
            {"epochs_run", r.epochs_run},
            {"epochs_to_threshold", opt_json(r.epochs_to_threshold)},
            {"final_train_loss", opt_json(r.final_train_loss)},
            {"final_val_loss", opt_json(r.final_val_loss)},
            {"lr_first", opt_json(r.lr_first)},
            {"lr_final50_mean", opt_json(r.lr_final50_mean)},
            {"kz_first", opt_json(r.kz_first)},
            {"initial_digest", r.initial_digest},
            {"final_digest", r.final_digest},
            {"diverged", opt_json(r.diverged)}};
}

inline RunSummary run_summary_from_json(const nlohmann::json& j, const std::string& path)
{
    using detail::opt_from;
    JsonObject o(j, path);
    RunSummary r;
    r.policy = o.get<std::string>("policy");
    r.epochs_run = o.get<std::size_t>("epochs_run");
    r.epochs_to_threshold = opt_from<std::size_t>(o, "epochs_to_threshold");
    r.final_train_loss = opt_from<double>(o, "final_train_loss");
    r.final_val_loss = opt_from<double>(o, "final_val_loss");
    r.lr_first = opt_from<double>(o, "lr_first");
    r.lr_final50_mean = opt_from<double>(o, "lr_final50_mean");
    r.kz_first = opt_from<double>(o, "kz_first");
    r.initial_digest = o.get<std::string>("initial_digest");
    r.final_digest = o.get<std::string>("final_digest");
    r.diverged = opt_from<std::string>(o, "diverged");
    o.finish();
    return r;
}

inline nlohmann::json to_json(const PolicyAggregate& a)
{
    return {{"final_train_loss", to_json(a.final_train_loss)},
            {"final_val_loss", to_json(a.final_val_loss)},
            {"epochs_to_threshold", to_json(a.epochs_to_threshold)},
            {"reached", a.reached},
            {"diverged", a.diverged}};
}

inline PolicyAggregate aggregate_from_json(const nlohmann::json& j, const std::string& path)
{
    JsonObject o(j, path);
    PolicyAggregate a;
    a.final_train_loss = stat_from_json(o.raw("final_train_loss"), o.path("final_train_loss"));
    a.final_val_loss = stat_from_json(o.raw("final_val_loss"), o.path("final_val_loss"));
    a.epochs_to_threshold = stat_from_json(o.raw("epochs_to_threshold"), o.path("epochs_to_threshold"));
    a.reached = o.get<std::size_t>("reached");
    a.diverged = o.get<std::size_t>("diverged");
    o.finish();
    return a;
}

// A degenerate report carries aic = -inf and log_likelihood = +inf, which
// JSON cannot hold; both are written as null.
inline nlohmann::json to_json(const AicReport& r)
{
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"aic", num(r.aic)},
            {"log_likelihood", num(r.log_likelihood)},
            {"tau", r.tau},
            {"k", r.k},
            {"n_obs", r.n_obs},
            {"mean_check_loss", r.mean_check_loss},
            {"degenerate", r.degenerate}};
}

inline AicReport aic_report_from_json(const nlohmann::json& j, const std::string& path)
{
    JsonObject o(j, path);
    AicReport r;
    r.degenerate = o.get<bool>("degenerate");
    r.aic = detail::aic_number(o.raw("aic"), -std::numeric_limits<double>::infinity());
    r.log_likelihood = detail::aic_number(o.raw("log_likelihood"), std::numeric_limits<double>::infinity());
    r.tau = o.get<double>("tau");
    r.k = o.get<std::size_t>("k");
    r.n_obs = o.get<std::size_t>("n_obs");
    r.mean_check_loss = o.get<double>("mean_check_loss");
    o.finish();
    return r;
}

inline nlohmann::json to_json(const ExperimentSummary& e)
{
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : e.seeds)
        seeds.push_back({{"seed", s.seed},
                         {"threshold", s.threshold},
                         {"constant", to_json(s.constant)},
                         {"adaptive", to_json(s.adaptive)},
                         {"speedup", detail::opt_json(s.speedup)},
                         {"speedup_lower_bound", detail::opt_json(s.speedup_lower_bound)}});
    nlohmann::json cov = nlohmann::json::array();
    for (const auto& c : e.coverage)
        cov.push_back({{"tau", c.tau}, {"policy", c.policy}, {"seed", c.seed}, {"coverage", c.coverage}, {"rows", c.rows}});
    nlohmann::json aic = nlohmann::json::array();
    for (const auto& a : e.aic)
        aic.push_back({{"tau", a.tau},
                       {"network", to_json(a.network)},
                       {"baseline", to_json(a.baseline)},
                       {"loss_rel_diff", a.loss_rel_diff},
                       {"aic_rel_diff", a.aic_rel_diff},
                       {"baseline_converged", a.baseline_converged}});
    return {{"name", e.name},
            {"dataset", e.dataset},
            {"spec", e.spec},
            {"threshold_source", e.threshold_source},
            {"seeds", seeds},
            {"constant", to_json(e.constant)},
            {"adaptive", to_json(e.adaptive)},
            {"speedup", detail::opt_json(e.speedup)},
            {"speedup_censored", detail::opt_json(e.speedup_censored)},
            {"coverage", cov},
            {"aic", aic}};
}

inline constexpr const char* summary_format = "lalr-summary";
inline constexpr int summary_version = 1;

inline nlohmann::json to_json(const Summary& s)
{
    nlohmann::json exps = nlohmann::json::array();
    for (const auto& e : s.experiments) exps.push_back(to_json(e));
    return {{"format", summary_format}, {"version", summary_version}, {"experiments", exps}};
}

inline ExperimentSummary experiment_summary_from_json(const nlohmann::json& j, const std::string& path)
{
    using detail::opt_from;
    JsonObject o(j, path);
    ExperimentSummary e;
    e.name = o.get<std::string>("name");
    e.dataset = o.get<std::string>("dataset");
    e.spec = o.raw("spec");
    e.threshold_source = o.get<std::string>("threshold_source");
    const auto& seeds = o.raw("seeds");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        JsonObject so(seeds[i], o.path("seeds") + "[" + std::to_string(i) + "]");
        SeedSummary s;
        s.seed = so.get<std::uint64_t>("seed");
        s.threshold = so.get<double>("threshold");
        s.constant = run_summary_from_json(so.raw("constant"), so.path("constant"));
        s.adaptive = run_summary_from_json(so.raw("adaptive"), so.path("adaptive"));
        s.speedup = opt_from<double>(so, "speedup");
        s.speedup_lower_bound = opt_from<double>(so, "speedup_lower_bound");
        so.finish();
        e.seeds.push_back(std::move(s));
    }
    e.constant = aggregate_from_json(o.raw("constant"), o.path("constant"));
    e.adaptive = aggregate_from_json(o.raw("adaptive"), o.path("adaptive"));
    e.speedup = opt_from<double>(o, "speedup");
    e.speedup_censored = opt_from<double>(o, "speedup_censored");
    const auto& cov = o.raw("coverage");
    for (std::size_t i = 0; i < cov.size(); ++i) {
        JsonObject co(cov[i], o.path("coverage") + "[" + std::to_string(i) + "]");
        CoverageEntry c;
        c.tau = co.get<double>("tau");
        c.policy = co.get<std::string>("policy");
        c.seed = co.get<std::uint64_t>("seed");
        c.coverage = co.get<double>("coverage");
        c.rows = co.get<std::size_t>("rows");
        co.finish();
        e.coverage.push_back(c);
    }
    const auto& aic = o.raw("aic");
    for (std::size_t i = 0; i < aic.size(); ++i) {
        JsonObject ao(aic[i], o.path("aic") + "[" + std::to_string(i) + "]");
        AicComparison a;
        a.tau = ao.get<double>("tau");
        a.network = aic_report_from_json(ao.raw("network"), ao.path("network"));
        a.baseline = aic_report_from_json(ao.raw("baseline"), ao.path("baseline"));
        a.loss_rel_diff = ao.get<double>("loss_rel_diff");
        a.aic_rel_diff = ao.get<double>("aic_rel_diff");
        a.baseline_converged = ao.get<bool>("baseline_converged");
        ao.finish();
        e.aic.push_back(a);
    }
    o.finish();
    return e;
}

inline Summary summary_from_json(const nlohmann::json& j)
{
    JsonObject o(j, "");
    if (o.get<std::string>("format") != summary_format) throw DataError("not a summary document");
    if (o.get<int>("version") != summary_version) throw DataError("unsupported summary version");
    Summary s;
    const auto& exps = o.raw("experiments");
    if (!exps.is_array()) throw DataError("summary 'experiments' must be an array");
    for (std::size_t i = 0; i < exps.size(); ++i)
        s.experiments.push_back(experiment_summary_from_json(exps[i], "experiments[" + std::to_string(i) + "]"));
    o.finish();
    return s;
}

inline Summary read_summary(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    try {
        return summary_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    } catch (const ConfigError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Report files
//
//   <out>/summary.json                          always (json format)
//   <out>/curves/<experiment>_seed<s>_<policy>.csv   per run (csv format)
//   <out>/plots/loss_long.csv                   experiment,seed,policy,epoch,train_loss,val_loss
//   <out>/plots/lr_long.csv                     experiment,seed,policy,epoch,lr,kz

struct ReportFormats
{
    bool csv = true;
    bool json = true;
    bool strip_timing = false;
};

struct ReportInput
{
    const ComparisonRecord* record = nullptr;
    std::vector<CoverageEntry> coverage;
    std::vector<AicComparison> aic;
};

inline std::string file_stem(const std::string& name)
{
    std::string out;
    for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
    return out.empty() ? "experiment" : out;
}

inline std::string curve_file_name(const std::string& experiment, std::uint64_t seed, const std::string& policy)
{
    return file_stem(experiment) + "_seed" + std::to_string(seed) + "_" + policy + ".csv";
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    return out;
}

inline void make_dir(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

}  // namespace detail

// Writes the report files and returns the summary that was written.
inline Summary report(const std::vector<ReportInput>& inputs, const std::filesystem::path& out_dir,
                      const ReportFormats& formats = {})
{
    detail::make_dir(out_dir);
    Summary summary;
    for (const auto& in : inputs) {
        if (!in.record) throw ConfigError("report input without a record");
        auto e = summarize(*in.record);
        e.coverage = in.coverage;
        e.aic = in.aic;
        summary.experiments.push_back(std::move(e));
    }

    if (formats.csv && !inputs.empty()) {
        detail::make_dir(out_dir / "curves");
        detail::make_dir(out_dir / "plots");
        auto loss = detail::open_out(out_dir / "plots" / "loss_long.csv");
        auto lr = detail::open_out(out_dir / "plots" / "lr_long.csv");
        loss << "experiment,seed,policy,epoch,train_loss,val_loss\n";
        lr << "experiment,seed,policy,epoch,lr,kz\n";
        for (const auto& in : inputs) {
            const auto& name = in.record->spec.name;
            for (const auto& s : in.record->seeds) {
                for (const RunRecord* r : {&s.constant, &s.adaptive}) {
                    write_curve_csv(*r, out_dir / "curves" / curve_file_name(name, s.seed, r->policy),
                                    formats.strip_timing);
                    for (const auto& row : r->rows) {
                        loss << name << ',' << s.seed << ',' << r->policy << ',' << row.epoch << ','
                             << format_loss(row.train_loss) << ',' << format_loss(row.val_loss) << '\n';
                        lr << name << ',' << s.seed << ',' << r->policy << ',' << row.epoch << ','
                           << format_double(row.lr) << ',' << format_double(row.kz) << '\n';
                    }
                }
            }
        }
        if (!loss || !lr) throw IoError("write failed under '" + (out_dir / "plots").string() + "'");
    }

    if (formats.json) {
        const auto path = out_dir / "summary.json";
        auto out = detail::open_out(path);
        out << to_json(summary).dump(2) << '\n';
        if (!out) throw IoError("write failed for '" + path.string() + "'");
    }
    return summary;
}

inline Summary report(const std::vector<ComparisonRecord>& records, const std::filesystem::path& out_dir,
                      const ReportFormats& formats = {})
{
    std::vector<ReportInput> inputs;
    for (const auto& r : records) inputs.push_back({&r, {}, {}});
    return report(inputs, out_dir, formats);
}

// Plain-text speedup table, one line per experiment.
inline void print_speedup_table(const Summary& s, std::ostream& out)
{
    auto cell = [](const std::optional<double>& v, int precision) {
        if (!v) return std::string("-");
        std::ostringstream o;
        o << std::fixed << std::setprecision(precision) << *v;
        return o.str();
    };
    auto epochs = [&](const PolicyAggregate& a, std::size_t seeds) {
        if (!a.epochs_to_threshold) return std::string("-");
        return cell(a.epochs_to_threshold->mean, 1) + " (" + std::to_string(a.reached) + "/" +
               std::to_string(seeds) + ")";
    };
    out << std::left << std::setw(28) << "experiment" << std::setw(12) << "threshold" << std::setw(18)
        << "epochs const" << std::setw(18) << "epochs lalr" << std::setw(10) << "speedup" << std::setw(12)
        << "loss const" << "loss lalr\n";
    for (const auto& e : s.experiments) {
        std::vector<double> thresholds;
        for (const auto& sd : e.seeds) thresholds.push_back(sd.threshold);
        const auto t = stat_of(thresholds);
        auto loss = [&](const PolicyAggregate& a) {
            return a.final_train_loss ? std::optional<double>(a.final_train_loss->mean) : std::nullopt;
        };
        out << std::left << std::setw(28) << e.name << std::setw(12)
            << cell(t ? std::optional<double>(t->mean) : std::nullopt, 4) << std::setw(18)
            << epochs(e.constant, e.seeds.size()) << std::setw(18) << epochs(e.adaptive, e.seeds.size())
            << std::setw(10) << (e.speedup ? cell(e.speedup, 2) : e.speedup_censored ? ">=" + cell(e.speedup_censored, 2) : "-")
            << std::setw(12)
            << cell(loss(e.constant), 4) << cell(loss(e.adaptive), 4) << '\n';
    }
}

}  // namespace lalr
