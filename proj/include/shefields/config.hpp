#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shefields/noise.hpp"
#include "shefields/solver.hpp"

namespace shefields {

enum class Experiment {
    Coupling,
    CorrelationLength,
    Exceedance,
    Islands,
    Sojourn,
    Tails,
    SmallBall,
    Comparison,
    GoodIndex,
};

std::string experiment_name(Experiment e);
std::optional<Experiment> experiment_from_name(std::string_view name);

/// Parsed and validated run description. Flat keys "section.key" map onto
/// the fields below; see the README for the full key list.
struct ExperimentConfig {
    Experiment experiment = Experiment::Tails;
    GridSpec grid;
    double dx = 0.01;
    double dt = 5e-5;
    double t = 0.25;
    SigmaSpec sigma = SigmaSpec::pam(1.0);
    std::optional<CaseKind> case_kind;
    std::size_t paths = 2000;
    std::uint64_t base_seed = 1;
    std::size_t sites = 32;
    std::size_t sites_per_path = 1;

    // experiment parameters; unused ones keep their defaults
    double alpha = 0.2;
    std::vector<double> alphas;
    double a = 1.2;
    double b = 2.0;
    double delta = 0.05;
    double spacing_c = 1.0;
    double zeta = 0.0;
    std::vector<double> R_grid;
    std::vector<double> eps_grid;
    std::vector<double> deltas{0.01, 0.05, 0.1};
    std::vector<double> lambda_grid;
    double lambda_lo = 0.0;
    std::size_t lambda_points = 12;
    std::size_t min_count = 10;
    std::vector<double> envelope_n;
    std::vector<int> k_list{2};
    std::vector<std::pair<double, int>> schedule;  // (beta, n)
    std::vector<int> ln_schedule{1, 2, 3, 4, 6, 8, 12, 16};
    std::size_t bootstrap = 1000;
    std::size_t cone_trials = 5;
    // sojourn
    std::optional<double> beta;
    std::optional<int> picard_n;
    int blocks = 16;
    int multiplier = 4;
    std::size_t calibration = 40;
    std::size_t lag_paths = 200;
    double lag_eps = 0.05;
    // comparison: v0 = level on (-halfwidth, halfwidth), 0 elsewhere
    double low_halfwidth = 1.0;
    double low_level = 1.0;

    /// Sorted "key=value" lines of the input, the basis of the hash.
    std::string canonical;
    std::uint64_t hash = 0;
};

/// Flat key-value view of a config file, keys "section.key" ("experiment" at top level).
using FlatConfig = std::map<std::string, std::string>;

/// INI-style text or, if the first non-blank character is '{', a JSON object
/// whose members are scalars, arrays or one level of nested objects.
FlatConfig flatten_config_text(std::string_view text);

struct ConfigParse {
    std::optional<ExperimentConfig> config;
    std::vector<std::string> errors;  // every problem found, not just the first
    bool ok() const { return errors.empty(); }
};

ConfigParse parse_config(std::string_view text);
ConfigParse load_config(const std::string& path);

/// Throws ConfigError listing every error.
ExperimentConfig parse_config_or_throw(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace shefields
