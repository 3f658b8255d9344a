#pragma once

// Deterministic mini-batch gradient descent with a learning rate evaluated
// once at the start of every epoch.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lalr/data.hpp"
#include "lalr/error.hpp"
#include "lalr/format.hpp"
#include "lalr/lipschitz.hpp"
#include "lalr/losses.hpp"
#include "lalr/network.hpp"
#include "lalr/rng.hpp"
#include "lalr/serialize.hpp"

namespace lalr {

struct TrainConfig
{
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    LossSpec loss = LossSpec::mae();
    LrPolicy lr_policy = LrPolicy::lalr();
    std::uint64_t shuffle_seed = 0;
    std::optional<double> threshold;
    bool stop_at_threshold = true;
    // Used by callers that split a single dataset; train() itself receives
    // the split already made.
    double validation_fraction = 0.2;
    // 0 = compute K_z over every training row.
    std::size_t kz_sample_rows = 0;
};

inline nlohmann::json to_json(const TrainConfig& c)
{
    nlohmann::json j = {{"epochs", c.epochs},
                        {"batch_size", c.batch_size},
                        {"loss", to_json(c.loss)},
                        {"lr", to_json(c.lr_policy)},
                        {"shuffle_seed", c.shuffle_seed},
                        {"stop_at_threshold", c.stop_at_threshold},
                        {"validation_fraction", c.validation_fraction},
                        {"kz_sample_rows", c.kz_sample_rows}};
    j["threshold"] = c.threshold ? nlohmann::json(*c.threshold) : nlohmann::json(nullptr);
    return j;
}

inline std::string config_hash(const TrainConfig& cfg, const NetworkSpec& spec)
{
    const nlohmann::json j = {{"train", to_json(cfg)}, {"network", to_json(spec)}};
    return hex64(fnv1a(j.dump()));
}

struct EpochRow
{
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    double lr = 0.0;
    double kz = 0.0;
    bool clamped = false;
    double wall_ms = 0.0;
};

struct RunRecord
{
    std::string policy;  // "constant" or "lalr"
    std::vector<EpochRow> rows;
    std::size_t epochs_run = 0;
    std::optional<std::size_t> reached_threshold;
    std::optional<double> threshold;
    std::string initial_digest;
    std::string final_digest;
    std::string config_hash;
    std::uint64_t seed = 0;
    // Set when training aborted on a non-finite loss.
    std::optional<std::string> diverged;

    double final_train_loss() const
    {
        return rows.empty() ? std::numeric_limits<double>::quiet_NaN() : rows.back().train_loss;
    }
    double final_val_loss() const
    {
        return rows.empty() ? std::numeric_limits<double>::quiet_NaN() : rows.back().val_loss;
    }
};

// Shuffled mini-batches of row indices for one epoch. The permutation depends
// only on (shuffle_seed, epoch); the last batch may be short.
inline std::vector<std::vector<std::size_t>> batches(std::size_t rows, std::size_t batch_size,
                                                     std::uint64_t shuffle_seed, std::size_t epoch)
{
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    auto perm = permutation(rows, derive_seed(shuffle_seed, streams::shuffle, epoch));
    std::vector<std::vector<std::size_t>> out;
    out.reserve((rows + batch_size - 1) / batch_size);
    for (std::size_t start = 0; start < rows; start += batch_size) {
        const std::size_t end = std::min(rows, start + batch_size);
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

inline std::vector<std::vector<std::size_t>> batches(const Dataset& ds, std::size_t batch_size,
                                                     std::uint64_t shuffle_seed, std::size_t epoch)
{
    return batches(ds.rows(), batch_size, shuffle_seed, epoch);
}

inline void check_dataset_matches(const Network& net, const Dataset& ds)
{
    if (ds.features() != net.spec.input_dim)
        throw ShapeError(ds.name + ": " + std::to_string(ds.features()) + " features, network expects " +
                         std::to_string(net.spec.input_dim));
    if (ds.labels() != net.spec.output_dim)
        throw ShapeError(ds.name + ": " + std::to_string(ds.labels()) + " targets, network has " +
                         std::to_string(net.spec.output_dim) + " outputs");
}

// Loss over the whole dataset in a single eval-mode pass.
inline double evaluate(const Network& net, const Dataset& data, const LossSpec& loss)
{
    check_dataset_matches(net, data);
    if (data.rows() == 0) throw DataError("cannot evaluate on an empty dataset");
    return loss_value(loss, predict(net, data.x), data.y);
}

struct TrainResult
{
    Network network;
    RunRecord record;
};

struct Divergence
{
    std::string message;
    std::size_t epoch = 0;
    double lr = 0.0;
};

// Like train(), but a non-finite loss ends the run and is reported in
// record.diverged instead of being thrown. The record keeps every epoch that
// completed before the failure.
inline TrainResult train_recorded(Network net, const Dataset& train_set, const Dataset& val_set,
                                  const TrainConfig& cfg, Divergence* divergence = nullptr)
{
    cfg.loss.validate();
    cfg.lr_policy.validate();
    if (cfg.epochs == 0) throw ConfigError("epochs must be at least 1");
    if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
    check_dataset_matches(net, train_set);
    if (train_set.rows() == 0) throw DataError("empty training set");
    if (cfg.batch_size > train_set.rows())
        throw ConfigError("batch size " + std::to_string(cfg.batch_size) + " exceeds training rows " +
                          std::to_string(train_set.rows()));
    if (cfg.loss.label_count != train_set.labels())
        throw ConfigError("loss label_count " + std::to_string(cfg.loss.label_count) + " != dataset targets " +
                          std::to_string(train_set.labels()));
    const bool has_val = val_set.rows() > 0;
    if (has_val) check_dataset_matches(net, val_set);

    RunRecord rec;
    rec.policy = to_string(cfg.lr_policy);
    rec.threshold = cfg.threshold;
    rec.seed = cfg.shuffle_seed;
    rec.config_hash = config_hash(cfg, net.spec);
    rec.initial_digest = network_digest(net);
    rec.rows.reserve(cfg.epochs);

    auto diverge = [&](std::string what, std::size_t epoch, double lr) {
        if (divergence) *divergence = {what, epoch, lr};
        rec.diverged = std::move(what);
        rec.final_digest = network_digest(net);
        return TrainResult{std::move(net), std::move(rec)};
    };

    using clock = std::chrono::steady_clock;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = clock::now();
        EpochRow row;
        row.epoch = epoch;
        row.kz = penultimate_max(net, train_set.x, cfg.kz_sample_rows, derive_seed(cfg.shuffle_seed, epoch));
        double lipschitz = 0.0;
        if (cfg.lr_policy.kind == LrKind::lalr)
            lipschitz = lipschitz_constant({row.kz, cfg.batch_size, train_set.labels(), cfg.loss});
        const auto lr = learning_rate(cfg.lr_policy, lipschitz);
        row.lr = lr.eta;
        row.clamped = lr.clamped;

        const auto plan = batches(train_set, cfg.batch_size, cfg.shuffle_seed, epoch);
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < plan.size(); ++b) {
            const Matrix xb = train_set.x(plan[b], Eigen::all);
            const Matrix yb = train_set.y(plan[b], Eigen::all);
            const auto trace =
                forward(net, xb, Mode::train, derive_seed(cfg.shuffle_seed, streams::dropout, epoch, b));
            const double batch_loss = loss_value(cfg.loss, trace.output(), yb);
            if (!std::isfinite(batch_loss))
                return diverge("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b) + " (lr " + format_double(lr.eta) + ")",
                               epoch, lr.eta);
            loss_sum += batch_loss;
            apply_update_in_place(net, backward(net, trace, loss_grad(cfg.loss, trace.output(), yb)), lr.eta);
        }
        row.train_loss = loss_sum / static_cast<double>(plan.size());
        if (has_val) {
            row.val_loss = evaluate(net, val_set, cfg.loss);
            if (!std::isfinite(row.val_loss))
                return diverge("non-finite validation loss at epoch " + std::to_string(epoch) + " (lr " +
                                   format_double(lr.eta) + ")",
                               epoch, lr.eta);
        }
        row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        rec.rows.push_back(row);
        rec.epochs_run = epoch;

        if (cfg.threshold && !rec.reached_threshold && row.train_loss <= *cfg.threshold) {
            rec.reached_threshold = epoch;
            if (cfg.stop_at_threshold) break;
        }
    }
    rec.final_digest = network_digest(net);
    return {std::move(net), std::move(rec)};
}

// Trains `net` on `train_set`; `val_set` may have zero rows, in which case
// the validation column is NaN. Throws DivergenceError on a non-finite loss.
inline TrainResult train(Network net, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg)
{
    Divergence d;
    auto result = train_recorded(std::move(net), train_set, val_set, cfg, &d);
    if (result.record.diverged) throw DivergenceError(d.message, d.epoch, d.lr);
    return result;
}

// ---------------------------------------------------------------------------
// RunRecord serialization.
//
// Curves CSV: header `epoch,train_loss,val_loss,lr,kz,clamped,ms`, one row per
// epoch, floats in shortest round-trip form, clamped as 0/1. With
// strip_timing the ms column is written as 0 so files are byte-stable.

inline constexpr const char* curve_csv_header = "epoch,train_loss,val_loss,lr,kz,clamped,ms";

inline std::string format_loss(double v) { return std::isnan(v) ? "nan" : format_double(v); }

inline void write_curve_csv(const RunRecord& rec, std::ostream& out, bool strip_timing)
{
    out << curve_csv_header << '\n';
    for (const auto& r : rec.rows) {
        out << r.epoch << ',' << format_loss(r.train_loss) << ',' << format_loss(r.val_loss) << ','
            << format_double(r.lr) << ',' << format_double(r.kz) << ',' << (r.clamped ? 1 : 0) << ','
            << (strip_timing ? std::string("0") : format_double(r.wall_ms)) << '\n';
    }
}

inline void write_curve_csv(const RunRecord& rec, const std::filesystem::path& path, bool strip_timing)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    write_curve_csv(rec, out, strip_timing);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline std::vector<EpochRow> read_curve_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != curve_csv_header)
        throw DataError(path.string() + ": not a curves file (bad header)");
    std::vector<EpochRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto cells = detail::split_line(line, ',');
        if (cells.size() != 7) throw DataError(path.string() + ": row " + std::to_string(line_no) + " malformed");
        auto num = [&](const std::string& s) { return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s); };
        EpochRow r;
        try {
            r.epoch = static_cast<std::size_t>(std::stoull(cells[0]));
            r.train_loss = num(cells[1]);
            r.val_loss = num(cells[2]);
            r.lr = num(cells[3]);
            r.kz = num(cells[4]);
            r.clamped = cells[5] == "1";
            r.wall_ms = num(cells[6]);
        } catch (const std::exception&) {
            throw DataError(path.string() + ": row " + std::to_string(line_no) + " malformed");
        }
        rows.push_back(r);
    }
    return rows;
}

inline nlohmann::json terminal_json(const RunRecord& rec)
{
    auto opt = [](const auto& o) { return o ? nlohmann::json(*o) : nlohmann::json(nullptr); };
    return {{"policy", rec.policy},
            {"epochs_run", rec.epochs_run},
            {"reached_threshold", opt(rec.reached_threshold)},
            {"threshold", opt(rec.threshold)},
            {"final_train_loss", rec.rows.empty() ? nlohmann::json(nullptr) : nlohmann::json(rec.final_train_loss())},
            {"initial_network_digest", rec.initial_digest},
            {"final_network_digest", rec.final_digest},
            {"config_hash", rec.config_hash},
            {"seed", rec.seed},
            {"diverged", opt(rec.diverged)}};
}

}  // namespace lalr
