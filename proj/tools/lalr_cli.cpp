// lalr: train, compare and report constant vs Lipschitz-adaptive learning rates.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 config, 3 data, 4 divergence, 5 io.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lalr/lalr.hpp"

namespace fs = std::filesystem;
using namespace lalr;

namespace {

enum Exit { ok = 0, unexpected = 1, config_error = 2, data_error = 3, divergence_error = 4, io_error = 5 };

struct CommonOptions
{
    std::string config;
    std::string dataset;
    std::string out = "out";
    std::string seeds;
    std::string threshold;
    std::size_t jobs = 1;
    bool strip_timing = false;
    std::size_t epochs = 0;
    double subsample = 0.0;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_pairing)
{
    cmd->add_option("--config", o.config, "Experiment config file (JSON)")->required();
    cmd->add_option("--dataset", o.dataset, "Dataset manifest (.json) or CSV; overrides the config");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--seeds", o.seeds, "Seed count N (seeds 1..N) or comma list; overrides the config");
    cmd->add_option("--threshold-source", o.threshold, "ols | heuristic | value:<x>; overrides the config");
    cmd->add_option("--epochs", o.epochs, "Epoch budget; 0 keeps the config value");
    cmd->add_option("--subsample", o.subsample, "Row fraction in (0, 1]; 0 keeps the config value");
    cmd->add_flag("--strip-timing", o.strip_timing, "Write 0 in the ms column of curve files");
    if (with_pairing) cmd->add_option("--jobs", o.jobs, "Maximum concurrent training runs")->check(CLI::PositiveNumber);
}

std::vector<std::uint64_t> parse_seeds(const std::string& s)
{
    std::vector<std::uint64_t> out;
    auto number = [&](const std::string& cell) {
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            if (cell.empty() || cell.front() == '-') throw std::invalid_argument("negative");
            v = std::stoull(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != cell.size()) throw ConfigError("--seeds: '" + cell + "' is not a non-negative integer");
        return static_cast<std::uint64_t>(v);
    };
    if (s.find(',') == std::string::npos) {
        const auto n = number(s);
        if (n == 0) throw ConfigError("--seeds: count must be at least 1");
        for (std::uint64_t i = 1; i <= n; ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(number(detail::trim(cell)));
    return out;
}

std::vector<double> parse_taus(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell = detail::trim(cell);
        if (cell.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != cell.size() || used == 0) throw ConfigError("--taus: '" + cell + "' is not a number");
        if (!(v > 0.0 && v < 1.0)) throw ConfigError("--taus: every tau must lie in (0, 1)");
        out.push_back(v);
    }
    return out;
}

struct Loaded
{
    CliConfig config;
    Dataset data;
};

Loaded load(const CommonOptions& o)
{
    Loaded l;
    l.config = load_config(o.config);
    auto& e = l.config.experiment;
    if (!o.dataset.empty()) l.config.dataset = dataset_from_argument(o.dataset, l.config.dataset);
    if (!o.seeds.empty()) e.seeds = parse_seeds(o.seeds);
    if (!o.threshold.empty()) e.threshold = parse_threshold(o.threshold);
    if (o.epochs > 0) e.epochs = o.epochs;
    if (o.subsample != 0.0) l.config.subsample = o.subsample;
    if (!(l.config.subsample > 0.0 && l.config.subsample <= 1.0))
        throw ConfigError("--subsample must lie in (0, 1]");
    e.validate();

    l.data = load_dataset(l.config.dataset);
    if (l.config.subsample < 1.0) l.data = subsample(l.data, l.config.subsample, 0);
    e.dataset = l.data.name;
    return l;
}

void write_json(const nlohmann::json& j, const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void make_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

int cmd_train(const CommonOptions& o, const std::string& policy_override)
{
    auto l = load(o);
    const auto& e = l.config.experiment;
    const std::string policy = policy_override.empty() ? l.config.policy : policy_override;
    if (policy != "lalr" && policy != "constant") throw ConfigError("--policy must be lalr or constant");
    const auto seed = e.seeds.front();

    auto prepared = detail::prepare_seed(e, l.data, seed);
    TrainConfig cfg = prepared.base;
    cfg.lr_policy = policy == "lalr" ? e.adaptive_policy() : e.constant_policy();
    if (e.threshold.source == ThresholdSource::ols)
        cfg.threshold = detail::linear_threshold(prepared.train, e.loss);
    else if (e.threshold.source == ThresholdSource::value)
        cfg.threshold = e.threshold.value;

    Divergence div;
    auto result = train_recorded(prepared.init, prepared.train, prepared.val, cfg, &div);

    make_dir(o.out);
    const fs::path out(o.out);
    const std::string stem = file_stem(e.name) + "_seed" + std::to_string(seed) + "_" + policy;
    write_curve_csv(result.record, out / (stem + ".csv"), o.strip_timing);
    nlohmann::json doc = terminal_json(result.record);
    doc["experiment"] = to_json(e);
    doc["final_val_loss"] = std::isnan(result.record.final_val_loss()) ? nlohmann::json(nullptr)
                                                                        : nlohmann::json(result.record.final_val_loss());
    write_json(doc, out / (stem + ".json"));

    if (result.record.diverged) {
        std::cerr << "lalr: diverged: " << *result.record.diverged << '\n';
        return divergence_error;
    }
    std::cout << e.name << " seed " << seed << " " << policy << ": " << result.record.epochs_run
              << " epochs, final train loss " << format_double(result.record.final_train_loss());
    if (result.record.reached_threshold)
        std::cout << ", threshold " << format_double(*result.record.threshold) << " reached at epoch "
                  << *result.record.reached_threshold;
    std::cout << '\n';
    return ok;
}

void warn_divergence(const ComparisonRecord& rec)
{
    for (const auto& s : rec.seeds)
        for (const RunRecord* r : {&s.constant, &s.adaptive})
            if (r->diverged)
                std::cerr << "lalr: " << rec.spec.name << " seed " << s.seed << " " << r->policy
                          << " diverged: " << *r->diverged << '\n';
}

int cmd_compare(const CommonOptions& o)
{
    auto l = load(o);
    const auto rec = paired_run(l.config.experiment, l.data, o.jobs);
    warn_divergence(rec);
    const auto summary = report(std::vector<ComparisonRecord>{rec}, o.out, {true, true, o.strip_timing});
    print_speedup_table(summary, std::cout);
    return ok;
}

std::string tau_suffix(double tau)
{
    std::string s = format_double(tau);
    for (char& c : s)
        if (c == '.') c = 'p';
    return "_tau" + s;
}

int cmd_quantiles(const CommonOptions& o, const std::string& taus_arg)
{
    auto l = load(o);
    std::vector<double> taus = taus_arg.empty() ? l.config.taus : parse_taus(taus_arg);
    if (taus.empty()) throw ConfigError("no quantiles given (set 'taus' in the config or pass --taus)");

    std::vector<ComparisonRecord> records;
    std::vector<ReportInput> inputs;
    records.reserve(taus.size());
    for (double tau : taus) {
        ExperimentSpec spec = l.config.experiment;
        spec.loss = LossSpec::check(tau, l.data.labels());
        spec.name += tau_suffix(tau);
        records.push_back(paired_run(spec, l.data, o.jobs));
        warn_divergence(records.back());
    }
    for (std::size_t i = 0; i < taus.size(); ++i) {
        ReportInput in{&records[i], coverage_entries(records[i]), {}};
        if (l.config.aic && l.data.labels() == 1) {
            const auto& a = *l.config.aic;
            auto prepared = detail::prepare_seed(records[i].spec, l.data, records[i].spec.seeds.front());
            AicOptions opt;
            opt.epochs = a.epochs;
            opt.batch_size = a.batch_size;
            opt.policy = LrPolicy::constant(a.eta);
            opt.seed = a.seed;
            in.aic.push_back(compare_aic(prepared.train, taus[i], opt));
        }
        inputs.push_back(std::move(in));
    }
    const auto summary = report(inputs, o.out, {true, true, o.strip_timing});
    print_speedup_table(summary, std::cout);
    for (const auto& e : summary.experiments) {
        for (const auto& c : e.coverage)
            std::cout << "coverage " << e.name << " seed " << c.seed << " " << c.policy << ": "
                      << format_double(c.coverage) << " (tau " << format_double(c.tau) << ")\n";
        for (const auto& a : e.aic)
            std::cout << "aic " << e.name << ": network " << format_double(a.network.aic) << ", baseline "
                      << format_double(a.baseline.aic) << '\n';
    }
    return ok;
}

int cmd_synth(std::size_t count, std::uint64_t seed, const std::string& function, const std::string& out_path)
{
    auto ds = gen_heteroscedastic(count, seed, parse_synthetic_function(function));
    const fs::path csv(out_path);
    if (csv.has_parent_path()) make_dir(csv.parent_path());
    write_csv(ds, csv);
    DatasetManifest m;
    m.name = csv.stem().string();
    m.file = csv.filename().string();
    m.origin = ds.provenance;
    m.target_columns = ds.target_names;
    m.rows = ds.rows();
    m.features = ds.features();
    m.notes = "generated by `lalr synth`";
    fs::path manifest = csv;
    manifest.replace_extension(".json");
    write_manifest(m, manifest);
    std::cout << "wrote " << csv.string() << " (" << count << " rows) and " << manifest.string() << '\n';
    return ok;
}

int cmd_report(const std::string& in, const std::string& out)
{
    fs::path path(in);
    if (fs::is_directory(path)) path /= "summary.json";
    const auto summary = read_summary(path);
    std::ostringstream text;
    print_speedup_table(summary, text);
    for (const auto& e : summary.experiments) {
        for (const auto& c : e.coverage)
            text << "coverage " << e.name << " seed " << c.seed << " " << c.policy << ": " << format_double(c.coverage)
                 << " (tau " << format_double(c.tau) << ")\n";
        for (const auto& a : e.aic)
            text << "aic " << e.name << " tau " << format_double(a.tau) << ": network "
                 << format_double(a.network.aic) << ", baseline " << format_double(a.baseline.aic)
                 << ", relative difference " << format_double(a.aic_rel_diff) << '\n';
    }
    std::cout << text.str();
    if (!out.empty()) {
        make_dir(out);
        const fs::path file = fs::path(out) / "report.txt";
        std::ofstream f(file, std::ios::binary);
        if (!f) throw IoError("cannot write '" + file.string() + "'");
        f << text.str();
        if (!f) throw IoError("write failed for '" + file.string() + "'");
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Constant vs Lipschitz-adaptive learning rate experiments"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every command");

    CommonOptions train_opt, compare_opt, quant_opt;
    std::string policy;
    auto* train = app.add_subcommand("train", "Train one network and write its curve CSV and run JSON");
    add_common(train, train_opt, false);
    train->add_option("--policy", policy, "lalr or constant; overrides the config");

    auto* compare = app.add_subcommand("compare", "Paired constant vs LALR runs with speedup table and report");
    add_common(compare, compare_opt, true);

    std::string taus;
    auto* quantiles = app.add_subcommand("quantiles", "Paired runs per quantile with coverage and AIC");
    add_common(quantiles, quant_opt, true);
    quantiles->add_option("--taus", taus, "Comma-separated quantiles; overrides the config");

    std::size_t count = 1000;
    std::uint64_t seed = 1;
    std::string function = "sine_ramp";
    std::string synth_out = "synthetic.csv";
    auto* synth = app.add_subcommand("synth", "Generate the heteroscedastic synthetic dataset (CSV + manifest)");
    synth->add_option("--count", count, "Number of rows");
    synth->add_option("--seed", seed, "Generator seed");
    synth->add_option("--function", function, "Mean function: sine_ramp or linear");
    synth->add_option("--out", synth_out, "Output CSV path; the manifest is written next to it");

    std::string report_in, report_out;
    auto* rep = app.add_subcommand("report", "Print tables from a summary.json (or a directory containing one)");
    rep->add_option("--in", report_in, "summary.json or its directory")->required();
    rep->add_option("--out", report_out, "Directory for report.txt (optional)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*train) return cmd_train(train_opt, policy);
        if (*compare) return cmd_compare(compare_opt);
        if (*quantiles) return cmd_quantiles(quant_opt, taus);
        if (*synth) return cmd_synth(count, seed, function, synth_out);
        if (*rep) return cmd_report(report_in, report_out);
    } catch (const ConfigError& e) {
        std::cerr << "lalr: config error: " << e.what() << '\n';
        return config_error;
    } catch (const UnsupportedLoss& e) {
        std::cerr << "lalr: config error: " << e.what() << '\n';
        return config_error;
    } catch (const DataError& e) {
        std::cerr << "lalr: data error: " << e.what() << '\n';
        return data_error;
    } catch (const ShapeError& e) {
        std::cerr << "lalr: data error: " << e.what() << '\n';
        return data_error;
    } catch (const DivergenceError& e) {
        std::cerr << "lalr: diverged: " << e.what() << '\n';
        return divergence_error;
    } catch (const IoError& e) {
        std::cerr << "lalr: io error: " << e.what() << '\n';
        return io_error;
    } catch (const std::exception& e) {
        std::cerr << "lalr: " << e.what() << '\n';
        return unexpected;
    }
    return unexpected;
}
