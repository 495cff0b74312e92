#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "shefields/config.hpp"
#include "shefields/error.hpp"
#include "shefields/experiment.hpp"
#include "shefields/io.hpp"
#include "shefields/noise.hpp"
#include "shefields/solver.hpp"

using namespace shefields;

namespace {

int cmd_validate(const std::string& path) {
    const auto parsed = load_config(path);
    if (!parsed.ok()) {
        for (const auto& e : parsed.errors) std::cerr << path << ": " << e << '\n';
        return 2;
    }
    const auto& cfg = *parsed.config;
    std::cout << "ok " << experiment_name(cfg.experiment) << " hash=" << hex64(cfg.hash) << " nx=" << cfg.grid.nx
              << " nt=" << cfg.grid.nt << " paths=" << cfg.paths << '\n';
    return 0;
}

int cmd_run(const std::string& path, const RunOptions& opts) {
    const auto parsed = load_config(path);
    if (!parsed.ok()) {
        for (const auto& e : parsed.errors) std::cerr << path << ": " << e << '\n';
        return 2;
    }
    const auto m = run_experiment(*parsed.config, opts);
    std::cout << m.experiment << ' ' << m.status << " in " << m.wall_time_seconds << " s, " << m.outputs.size()
              << " files in " << opts.out_dir << '\n';
    for (const auto& f : m.failures) std::cerr << "  " << f << '\n';
    return m.ok() ? 0 : 1;
}

// Recomputes u_t from a dumped noise grid; sigma and t come from the config when given.
int cmd_replay(const std::string& dump, const std::optional<std::string>& config, const std::string& out_path) {
    std::ifstream in(dump, std::ios::binary);
    if (!in) throw Error("cannot open " + dump);
    const NoiseGrid noise = read_noise_dump(in);
    const GridSpec& g = noise.spec();
    SigmaSpec sigma = SigmaSpec::pam(1.0);
    double t = static_cast<double>(g.nt) * g.dt;
    if (config) {
        const auto cfg = parse_config_or_throw([&] {
            std::ifstream c(*config);
            if (!c) throw Error("cannot open " + *config);
            return std::string(std::istreambuf_iterator<char>(c), {});
        }());
        sigma = cfg.sigma;
        t = cfg.t;
    }
    const FieldSnapshot f = solve_full(g, sigma, noise, t);
    if (out_path.empty()) {
        write_snapshot_csv(f, std::cout);
    } else {
        std::ofstream out(out_path, std::ios::binary);
        write_snapshot_csv(f, out);
        std::cout << "wrote " << out_path << (f.censored ? " (censored)" : "") << '\n';
    }
    return 0;
}

int cmd_dump_noise(const std::string& path, std::size_t p, std::optional<std::uint64_t> seed,
                   const std::string& out_path) {
    const auto cfg = parse_config_or_throw([&] {
        std::ifstream c(path);
        if (!c) throw Error("cannot open " + path);
        return std::string(std::istreambuf_iterator<char>(c), {});
    }());
    const NoiseGrid noise = sample_noise_grid(cfg.grid, seed.value_or(cfg.base_seed) + p);
    std::ofstream out(out_path, std::ios::binary);
    write_noise_dump(noise, out);
    if (!out) throw Error("cannot write " + out_path);
    std::cout << "wrote " << out_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Monte Carlo experiments for the stochastic heat equation"};
    app.set_version_flag("--version", std::string(code_version()));
    app.require_subcommand(1);

    std::string config_path;
    RunOptions opts;
    std::optional<std::uint64_t> seed_override;
    auto* run = app.add_subcommand("run", "run the configured experiment");
    run->add_option("config", config_path, "config file (INI or JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--workers", opts.workers, "worker threads, 0 for all cores; results do not depend on it");
    run->add_option("--out", opts.out_dir, "output directory");
    run->add_option("--seed-override", seed_override, "replace run.base_seed");

    auto* validate = app.add_subcommand("validate", "check a config and report every error");
    validate->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);

    std::string dump_path, replay_out;
    std::optional<std::string> replay_config;
    auto* replay = app.add_subcommand("replay", "solve the full equation on a dumped noise grid");
    replay->add_option("noise-dump", dump_path, "binary noise dump")->required()->check(CLI::ExistingFile);
    replay->add_option("--config", replay_config, "take sigma and t from this config (default PAM q=1, t=nt*dt)");
    replay->add_option("--out", replay_out, "snapshot CSV (default stdout)");

    std::size_t dump_index = 0;
    std::string dump_out = "noise.bin";
    auto* dump = app.add_subcommand("dump-noise", "write the noise grid of one path");
    dump->add_option("config", config_path, "config file")->required()->check(CLI::ExistingFile);
    dump->add_option("--path", dump_index, "path index p (seed base_seed + p)");
    dump->add_option("--seed-override", seed_override, "replace run.base_seed");
    dump->add_option("--out", dump_out, "output file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            opts.seed_override = seed_override;
            return cmd_run(config_path, opts);
        }
        if (*validate) return cmd_validate(config_path);
        if (*replay) return cmd_replay(dump_path, replay_config, replay_out);
        if (*dump) return cmd_dump_noise(config_path, dump_index, seed_override, dump_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
