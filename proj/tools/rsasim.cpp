#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include <rsasim/empirical.hpp>
#include <rsasim/harness.hpp>

namespace fs = std::filesystem;

namespace {

constexpr int kConfigExit = 2;
constexpr int kRuntimeExit = 3;

int run_simulate(const fs::path& config_path, const fs::path& out, std::optional<int> workers,
                 std::optional<std::uint64_t> seed) {
    rsasim::ExperimentConfig cfg = rsasim::load_experiment_config(config_path);
    if (workers) cfg.workers = *workers;
    if (seed) cfg.base_seed = *seed;
    cfg.validate();
    const rsasim::ExperimentResult result = rsasim::run_experiment(cfg);
    const auto files = rsasim::write_outputs(result.records, result.summary, out);
    std::cerr << "wrote " << result.records.size() << " records to " << files.results.string() << '\n';
    return 0;
}

int run_empirical(const fs::path& data_path, const fs::path& config_path, const fs::path& out,
                  std::optional<int> workers) {
    rsasim::EmpiricalConfig cfg = rsasim::load_empirical_config(config_path);
    if (workers) cfg.workers = *workers;
    std::vector<rsasim::CompositeSpec> specs = cfg.composites;
    rsasim::NormDataset data = rsasim::load_norms(data_path, cfg.response_column, specs, cfg.item_column);
    std::cerr << "loaded " << data.rows() << " complete rows (" << data.dropped << " dropped)\n";
    if (cfg.standardize) rsasim::standardize_predictors(data);
    const auto records = rsasim::subsample_compare(data, cfg);
    const auto summary = rsasim::summarize_records(records);
    const auto files = rsasim::write_outputs(records, summary, out);
    std::cerr << "wrote " << records.size() << " records to " << files.results.string() << '\n';
    return 0;
}

int run_synth(const fs::path& out, int rows, std::uint64_t seed, const std::optional<fs::path>& config_out) {
    rsasim::SynthNormsSpec spec;
    spec.rows = rows;
    spec.seed = seed;
    {
        std::ofstream os(out, std::ios::binary);
        if (!os) throw std::runtime_error("cannot write " + out.string());
        rsasim::write_synthetic_norms(os, spec);
    }
    if (config_out) {
        const rsasim::EmpiricalConfig c = rsasim::synthetic_norms_config(spec);
        nlohmann::ordered_json j;
        j["response_column"] = c.response_column;
        j["item_column"] = c.item_column;
        for (const auto& comp : c.composites) j["composites"][comp.name] = comp.columns;
        std::ofstream os(*config_out);
        if (!os) throw std::runtime_error("cannot write " + config_out->string());
        os << j.dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo comparison of RSA and regression for model selection"};
    app.set_version_flag("--version", std::string("rsasim ") + RSASIM_VERSION);
    app.require_subcommand(1);

    fs::path config, out, data;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;

    auto* sim = app.add_subcommand("simulate", "run a simulation experiment grid");
    sim->add_option("--config", config, "experiment JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--out", out, "output directory")->required();
    sim->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed, "override base_seed");

    auto* emp = app.add_subcommand("empirical", "subsampling comparison on a norm dataset");
    emp->add_option("--data", data, "norm CSV")->required()->check(CLI::ExistingFile);
    emp->add_option("--config", config, "empirical JSON")->required()->check(CLI::ExistingFile);
    emp->add_option("--out", out, "output directory")->required();
    emp->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

    int rows = 4000;
    std::uint64_t synth_seed = 1;
    std::optional<fs::path> config_out;
    auto* synth = app.add_subcommand("synth-norms", "write the synthetic stand-in norm table");
    synth->add_option("--out", out, "CSV path")->required();
    synth->add_option("--rows", rows, "row count")->check(CLI::PositiveNumber);
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--config-out", config_out, "also write a matching empirical config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigExit;
    }

    try {
        if (*sim) return run_simulate(config, out, workers, seed);
        if (*emp) return run_empirical(data, config, out, workers);
        if (*synth) return run_synth(out, rows, synth_seed, config_out);
    } catch (const rsasim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeExit;
    }
    return 0;
}
