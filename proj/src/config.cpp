#include "shefields/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "shefields/error.hpp"
#include "shefields/io.hpp"

namespace shefields {

namespace {

const std::vector<std::pair<Experiment, std::string>> kNames{
    {Experiment::Coupling, "coupling"},     {Experiment::CorrelationLength, "correlation_length"},
    {Experiment::Exceedance, "exceedance"}, {Experiment::Islands, "islands"},
    {Experiment::Sojourn, "sojourn"},       {Experiment::Tails, "tails"},
    {Experiment::SmallBall, "small_ball"},  {Experiment::Comparison, "comparison"},
    {Experiment::GoodIndex, "good_index"},
};

const std::set<std::string> kCommonKeys{
    "experiment",   "grid.dx",         "grid.dt",      "grid.length",    "run.t",
    "run.paths",    "run.base_seed",   "run.sites",    "run.sites_per_path",
    "sigma.kind",   "sigma.q",         "sigma.value",  "sigma.lo",       "sigma.hi",
    "sigma.shape",  "sigma.slope",     "sigma.intercept", "sigma.case",  "sigma.bounded",
};

std::set<std::string> param_keys(Experiment e) {
    switch (e) {
        case Experiment::Coupling: return {"schedule", "k", "deltas", "bootstrap"};
        case Experiment::CorrelationLength: return {"eps", "deltas", "schedule", "cone_trials"};
        case Experiment::Exceedance: return {"alpha", "alphas", "R", "bootstrap"};
        case Experiment::Islands: return {"a", "b", "R"};
        case Experiment::Sojourn:
            return {"alpha", "beta", "n", "blocks", "multiplier", "calibration", "lag_paths", "lag_eps",
                    "delta", "k", "schedule"};
        case Experiment::Tails: return {"lambda", "lambda_lo", "lambda_points", "min_count"};
        case Experiment::SmallBall: return {"eps", "k", "zeta", "envelope_n"};
        case Experiment::Comparison: return {"low_halfwidth", "low_level"};
        case Experiment::GoodIndex: return {"a", "b", "delta", "c", "R"};
    }
    return {};
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(v);
    while (std::getline(in, cur, ',')) {
        auto t = trim(cur);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

// Typed reads that record problems instead of throwing.
class Reader {
public:
    Reader(const FlatConfig& flat, std::vector<std::string>& errors) : flat_(flat), errors_(errors) {}

    bool has(const std::string& key) const { return flat_.count(key) > 0; }

    std::string text(const std::string& key, const std::string& def) const {
        auto it = flat_.find(key);
        return it == flat_.end() ? def : it->second;
    }

    double real(const std::string& key, double def) const {
        auto it = flat_.find(key);
        if (it == flat_.end()) return def;
        double v = def;
        if (!parse_real(it->second, v)) errors_.push_back(key + ": '" + it->second + "' is not a number");
        return v;
    }

    template <class Int>
    Int integer(const std::string& key, Int def) const {
        auto it = flat_.find(key);
        if (it == flat_.end()) return def;
        Int v = def;
        if (!parse_int(it->second, v)) errors_.push_back(key + ": '" + it->second + "' is not an integer");
        return v;
    }

    bool flag(const std::string& key, bool def) const {
        auto it = flat_.find(key);
        if (it == flat_.end()) return def;
        if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
        if (it->second == "false" || it->second == "0" || it->second == "no") return false;
        errors_.push_back(key + ": '" + it->second + "' is not a boolean");
        return def;
    }

    std::vector<double> reals(const std::string& key, std::vector<double> def) const {
        auto it = flat_.find(key);
        if (it == flat_.end()) return def;
        std::vector<double> out;
        for (const auto& item : split_list(it->second)) {
            double v = 0.0;
            if (!parse_real(item, v)) {
                errors_.push_back(key + ": '" + item + "' is not a number");
                continue;
            }
            out.push_back(v);
        }
        return out;
    }

    std::vector<int> ints(const std::string& key, std::vector<int> def) const {
        auto it = flat_.find(key);
        if (it == flat_.end()) return def;
        std::vector<int> out;
        for (const auto& item : split_list(it->second)) {
            int v = 0;
            if (!parse_int(item, v)) {
                errors_.push_back(key + ": '" + item + "' is not an integer");
                continue;
            }
            out.push_back(v);
        }
        return out;
    }

    std::vector<std::pair<double, int>> pairs(const std::string& key) const {
        auto it = flat_.find(key);
        std::vector<std::pair<double, int>> out;
        if (it == flat_.end()) return out;
        for (const auto& item : split_list(it->second)) {
            const auto colon = item.find(':');
            double beta = 0.0;
            int n = 0;
            if (colon == std::string::npos || !parse_real(trim(item.substr(0, colon)), beta) ||
                !parse_int(trim(item.substr(colon + 1)), n)) {
                errors_.push_back(key + ": '" + item + "' is not a beta:n pair");
                continue;
            }
            out.emplace_back(beta, n);
        }
        return out;
    }

private:
    static bool parse_real(const std::string& s, double& v) {
        const char* b = s.data();
        const char* e = b + s.size();
        auto [p, ec] = std::from_chars(b, e, v);
        return ec == std::errc() && p == e && std::isfinite(v);
    }
    template <class Int>
    static bool parse_int(const std::string& s, Int& v) {
        const char* b = s.data();
        const char* e = b + s.size();
        auto [p, ec] = std::from_chars(b, e, v);
        return ec == std::errc() && p == e;
    }

    const FlatConfig& flat_;
    std::vector<std::string>& errors_;
};

std::string json_scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

FlatConfig flatten_json(std::string_view text) {
    const auto doc = nlohmann::json::parse(text);
    if (!doc.is_object()) throw ConfigError("JSON config must be an object");
    FlatConfig flat;
    auto put = [&](const std::string& key, const nlohmann::json& v) {
        if (v.is_object()) throw ConfigError(key + ": objects nest at most one level");
        if (v.is_array()) {
            std::string joined;
            for (const auto& item : v) {
                if (item.is_object() || item.is_array()) throw ConfigError(key + ": lists hold scalars only");
                if (!joined.empty()) joined += ", ";
                joined += json_scalar(item);
            }
            flat[key] = joined;
        } else {
            flat[key] = json_scalar(v);
        }
    };
    for (const auto& [k, v] : doc.items()) {
        if (v.is_object()) {
            for (const auto& [k2, v2] : v.items()) put(k + "." + k2, v2);
        } else {
            put(k, v);
        }
    }
    return flat;
}

FlatConfig flatten_ini(std::string_view text) {
    boost::property_tree::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    FlatConfig flat;
    for (const auto& [key, node] : tree) {
        if (node.empty()) {
            flat[key] = trim(node.data());
        } else {
            for (const auto& [k2, leaf] : node) flat[key + "." + k2] = trim(leaf.data());
        }
    }
    return flat;
}

std::optional<CaseKind> parse_case(const std::string& s) {
    if (s == "case1") return CaseKind::Case1;
    if (s == "case2") return CaseKind::Case2;
    return std::nullopt;
}

SigmaSpec build_sigma(const Reader& r, std::vector<std::string>& errors) {
    const std::string kind = r.text("sigma.kind", "pam");
    try {
        if (kind == "pam") return SigmaSpec::pam(r.real("sigma.q", 1.0));
        if (kind == "constant") return SigmaSpec::constant(r.real("sigma.value", 1.0));
        if (kind == "bounded") {
            const std::string shape = r.text("sigma.shape", "sine");
            BoundedShape bs = BoundedShape::Sine;
            if (shape == "sine") bs = BoundedShape::Sine;
            else if (shape == "logistic") bs = BoundedShape::Logistic;
            else if (shape == "constant") bs = BoundedShape::Constant;
            else errors.push_back("sigma.shape: unknown shape '" + shape + "' (sine, logistic, constant)");
            return SigmaSpec::bounded(r.real("sigma.lo", 0.5), r.real("sigma.hi", 1.5), bs);
        }
        if (kind == "affine") return SigmaSpec::affine(r.real("sigma.slope", 1.0), r.real("sigma.intercept", 0.0));
        errors.push_back("sigma.kind: unknown kind '" + kind + "' (pam, constant, bounded, affine)");
    } catch (const Error& e) {
        errors.push_back(std::string("sigma: ") + e.what());
    }
    return SigmaSpec::pam(1.0);
}

std::string fmt(double v) { return format_double(v); }

}  // namespace

std::string experiment_name(Experiment e) {
    for (const auto& [k, n] : kNames)
        if (k == e) return n;
    return "unknown";
}

std::optional<Experiment> experiment_from_name(std::string_view name) {
    for (const auto& [k, n] : kNames)
        if (n == name) return k;
    return std::nullopt;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

FlatConfig flatten_config_text(std::string_view text) {
    FlatConfig flat;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string_view::npos && text[first] == '{') {
        try {
            flat = flatten_json(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("JSON config: ") + e.what());
        }
    } else {
        flat = flatten_ini(text);
    }
    // lists in one spelling, so INI and JSON forms of a config hash alike
    for (auto& [k, v] : flat) {
        if (v.find(',') == std::string::npos) continue;
        std::string joined;
        for (const auto& item : split_list(v)) joined += (joined.empty() ? "" : ", ") + item;
        v = joined;
    }
    return flat;
}

ConfigParse parse_config(std::string_view text) {
    ConfigParse out;
    FlatConfig flat;
    try {
        flat = flatten_config_text(text);
    } catch (const ConfigError& e) {
        out.errors.push_back(e.what());
        return out;
    }
    auto& errors = out.errors;
    Reader r(flat, errors);
    ExperimentConfig c;

    const std::string name = r.text("experiment", "");
    std::optional<Experiment> exp = experiment_from_name(name);
    if (name.empty()) {
        errors.push_back("experiment: missing");
    } else if (!exp) {
        std::string list;
        for (const auto& [k, n] : kNames) list += (list.empty() ? "" : ", ") + n;
        errors.push_back("experiment: unknown experiment '" + name + "' (" + list + ")");
    }
    if (exp) c.experiment = *exp;

    const auto params = exp ? param_keys(*exp) : std::set<std::string>{};
    for (const auto& [key, value] : flat) {
        if (kCommonKeys.count(key)) continue;
        if (key.rfind("params.", 0) == 0 && params.count(key.substr(7))) continue;
        if (!exp && key.rfind("params.", 0) == 0) continue;
        errors.push_back(key + ": unknown key");
    }

    c.dx = r.real("grid.dx", 0.01);
    c.dt = r.real("grid.dt", 5e-5);
    c.t = r.real("run.t", 0.25);
    c.paths = r.integer<std::size_t>("run.paths", 2000);
    c.base_seed = r.integer<std::uint64_t>("run.base_seed", 1);
    c.sites = r.integer<std::size_t>("run.sites", 32);
    c.sites_per_path = r.integer<std::size_t>("run.sites_per_path", 1);
    c.sigma = build_sigma(r, errors);

    if (!(c.dx > 0.0)) errors.push_back("grid.dx: must be positive");
    if (!(c.dt > 0.0)) errors.push_back("grid.dt: must be positive");
    if (c.dx > 0.0 && c.dt > c.dx * c.dx)
        errors.push_back("stability: dt=" + fmt(c.dt) + " exceeds dx^2=" + fmt(c.dx * c.dx) +
                         "; the scheme needs dt <= dx^2");
    if (!(c.t > 0.0)) errors.push_back("run.t: must be positive");
    if (c.dt > 0.0 && c.t > 0.0) {
        const double steps = c.t / c.dt;
        if (std::abs(steps - std::round(steps)) > 1e-9 * steps)
            errors.push_back("run.t: t=" + fmt(c.t) + " is not a whole number of steps dt=" + fmt(c.dt));
    }
    if (c.paths < 1) errors.push_back("run.paths: must be at least 1");
    if (c.sites_per_path < 1) errors.push_back("run.sites_per_path: must be at least 1");

    // Case declaration and the bounded flag must agree with each other and with sigma.
    const std::string case_text = r.text("sigma.case", "");
    std::optional<CaseKind> declared;
    if (!case_text.empty()) {
        declared = parse_case(case_text);
        if (!declared) errors.push_back("sigma.case: '" + case_text + "' is not case1 or case2");
    }
    const bool bounded_flag = r.flag("sigma.bounded", false);
    if (declared == CaseKind::Case1 && bounded_flag)
        errors.push_back("sigma: conflict, case1 (sigma = q z) cannot be combined with bounded = true");
    const auto derived = sigma_case(c.sigma);
    if (declared && derived && *declared != *derived)
        errors.push_back("sigma.case: declared " + case_text + " but sigma.kind gives " +
                         (*derived == CaseKind::Case1 ? "case1" : "case2"));
    if (bounded_flag && derived == CaseKind::Case1)
        errors.push_back("sigma: conflict, bounded = true with a linear sigma");
    c.case_kind = declared ? declared : derived;
    if (!c.case_kind && bounded_flag) c.case_kind = CaseKind::Case2;

    const std::string P = "params.";
    double reach = 0.0;       // analysis window the domain has to hold
    double max_window = 0.0;  // largest sqrt(beta t)
    if (exp) {
        switch (*exp) {
            case Experiment::Coupling: {
                c.schedule = r.pairs(P + "schedule");
                if (!r.has(P + "schedule"))
                    c.schedule = {{1, 8}, {2, 8}, {4, 8}, {8, 8}, {8, 1}, {8, 2}, {8, 4}};
                c.k_list = r.ints(P + "k", {2});
                c.deltas = r.reals(P + "deltas", c.deltas);
                c.bootstrap = r.integer<std::size_t>(P + "bootstrap", 1000);
                if (c.paths < 100) errors.push_back("run.paths: coupling needs at least 100 paths");
                for (const auto& [beta, n] : c.schedule) {
                    if (!(beta > 0.0) || n < 0) errors.push_back("params.schedule: needs beta > 0 and n >= 0");
                    max_window = std::max(max_window, std::sqrt(std::max(beta, 0.0) * c.t));
                }
                for (int k : c.k_list)
                    if (k < 1) errors.push_back("params.k: moment orders must be positive");
                break;
            }
            case Experiment::CorrelationLength: {
                c.eps_grid = r.reals(P + "eps", {0.1, 0.05, 0.02, 0.01});
                c.deltas = r.reals(P + "deltas", {0.05});
                c.ln_schedule = r.ints(P + "schedule", c.ln_schedule);
                c.cone_trials = r.integer<std::size_t>(P + "cone_trials", 5);
                for (double e : c.eps_grid) {
                    if (!(e > 0.0 && e < 1.0)) errors.push_back("params.eps: values must lie in (0, 1)");
                    else if (e < 5.0 / static_cast<double>(c.paths))
                        errors.push_back("params.eps: " + fmt(e) + " is below 5/paths; raise run.paths");
                }
                for (int n : c.ln_schedule) {
                    if (n < 1) errors.push_back("params.schedule: entries must be positive");
                    max_window = std::max(max_window, std::sqrt(std::max(n, 0) * c.t));
                }
                break;
            }
            case Experiment::Exceedance: {
                c.alpha = r.real(P + "alpha", 0.2);
                c.alphas = r.reals(P + "alphas", {});
                c.R_grid = r.reals(P + "R", {64, 128, 256, 512});
                c.bootstrap = r.integer<std::size_t>(P + "bootstrap", 2000);
                if (!(c.alpha > 0.0)) errors.push_back("params.alpha: must be positive");
                for (double a : c.alphas)
                    if (!(a > 0.0)) errors.push_back("params.alphas: values must be positive");
                if (c.R_grid.size() < 4) errors.push_back("params.R: needs at least 4 values");
                if (!c.case_kind) errors.push_back("sigma: exceedance needs a case1 or case2 nonlinearity");
                break;
            }
            case Experiment::Islands: {
                c.a = r.real(P + "a", 1.2);
                c.b = r.real(P + "b", 2.0);
                c.R_grid = r.reals(P + "R", {64, 128, 256, 512, 1024});
                if (!(c.a > 1.0) || !(c.b > c.a)) errors.push_back("params.a, params.b: need 1 < a < b");
                break;
            }
            case Experiment::Sojourn: {
                c.alpha = r.real(P + "alpha", 0.25);
                if (r.has(P + "beta")) c.beta = r.real(P + "beta", 1.0);
                if (r.has(P + "n")) c.picard_n = r.integer<int>(P + "n", 1);
                c.blocks = r.integer<int>(P + "blocks", 16);
                c.multiplier = r.integer<int>(P + "multiplier", 4);
                c.calibration = r.integer<std::size_t>(P + "calibration", 40);
                c.lag_paths = r.integer<std::size_t>(P + "lag_paths", 200);
                c.lag_eps = r.real(P + "lag_eps", 0.05);
                c.delta = r.real(P + "delta", 0.05);
                c.k_list = r.ints(P + "k", {2, 4});
                c.ln_schedule = r.ints(P + "schedule", {1, 2, 3, 4});
                if (!(c.alpha > 0.0 && c.alpha < 0.5)) errors.push_back("params.alpha: must lie in (0, 1/2)");
                if (c.beta.has_value() != c.picard_n.has_value())
                    errors.push_back("params.beta, params.n: give both or neither (neither measures the lag)");
                if (c.blocks < 4) errors.push_back("params.blocks: needs at least 4");
                if (c.multiplier < 2) errors.push_back("params.multiplier: needs at least 2");
                for (int k : c.k_list)
                    if (k < 2 || k % 2) errors.push_back("params.k: block moments need even k >= 2");
                double ell = 0.0;
                if (c.beta && c.picard_n) {
                    if (!(*c.beta > 0.0) || *c.picard_n < 1) errors.push_back("params.beta, params.n: need beta > 0, n >= 1");
                    ell = 2.0 * *c.picard_n * std::sqrt(std::max(*c.beta, 0.0) * c.t);
                    max_window = std::sqrt(std::max(*c.beta, 0.0) * c.t);
                } else {
                    if (!(c.lag_eps > 0.0 && c.lag_eps < 1.0)) errors.push_back("params.lag_eps: must lie in (0, 1)");
                    else if (c.lag_eps < 5.0 / static_cast<double>(c.lag_paths))
                        errors.push_back("params.lag_eps: below 5/lag_paths");
                    for (int n : c.ln_schedule) {
                        if (n < 1) errors.push_back("params.schedule: entries must be positive");
                        ell = std::max(ell, 2.0 * n * std::sqrt(std::max(n, 0) * c.t));
                        max_window = std::max(max_window, std::sqrt(std::max(n, 0) * c.t));
                    }
                }
                if (ell > 0.0 && ell < 1.0) errors.push_back("params: block width 2 n sqrt(beta t) is below 1");
                reach = ell * c.blocks * c.multiplier;
                break;
            }
            case Experiment::Tails: {
                c.lambda_grid = r.reals(P + "lambda", {});
                c.lambda_points = r.integer<std::size_t>(P + "lambda_points", 12);
                c.min_count = r.integer<std::size_t>(P + "min_count", 10);
                if (!c.case_kind) errors.push_back("sigma: tails needs a case1 or case2 nonlinearity");
                c.lambda_lo = r.real(P + "lambda_lo", c.case_kind == CaseKind::Case1 ? 1.2 : 0.2);
                if (c.lambda_points < 3) errors.push_back("params.lambda_points: needs at least 3");
                if (c.paths * c.sites_per_path < 10000)
                    errors.push_back("run.paths: tail fits need at least 1e4 samples (paths x sites_per_path)");
                break;
            }
            case Experiment::SmallBall: {
                c.eps_grid = r.reals(P + "eps", {0.5, 0.3, 0.1, 0.03, 0.01});
                c.k_list = r.ints(P + "k", {2, 4, 8});
                c.zeta = r.real(P + "zeta", 0.0);
                c.envelope_n = r.reals(P + "envelope_n", {});
                for (double e : c.eps_grid)
                    if (!(e > 0.0)) errors.push_back("params.eps: values must be positive");
                for (int k : c.k_list)
                    if (k < 1 || k > 20) errors.push_back("params.k: negative moment orders must lie in [1, 20]");
                if (c.sigma.value_at_zero() != 0.0)
                    errors.push_back("sigma: small-ball statistics need sigma(0) = 0");
                if (!(c.zeta >= 0.0)) errors.push_back("params.zeta: must be nonnegative");
                double prev = 0.0;
                for (double n : c.envelope_n) {
                    if (!(n > prev)) errors.push_back("params.envelope_n: must be positive and increasing");
                    prev = n;
                    reach = std::max(reach, 2.0 * n);
                }
                break;
            }
            case Experiment::Comparison: {
                c.low_halfwidth = r.real(P + "low_halfwidth", 1.0);
                c.low_level = r.real(P + "low_level", 1.0);
                if (!(c.low_halfwidth > 0.0)) errors.push_back("params.low_halfwidth: must be positive");
                if (!(c.low_level >= 0.0 && c.low_level <= 1.0)) errors.push_back("params.low_level: must lie in [0, 1]");
                if (c.sigma.value_at_zero() != 0.0) errors.push_back("sigma: the comparison check needs sigma(0) = 0");
                reach = 2.0 * c.low_halfwidth;
                break;
            }
            case Experiment::GoodIndex: {
                c.a = r.real(P + "a", 1.2);
                c.b = r.real(P + "b", 2.0);
                c.delta = r.real(P + "delta", 0.05);
                c.spacing_c = r.real(P + "c", 1.0);
                c.R_grid = r.reals(P + "R", {64, 128, 256, 512});
                if (!(c.a > 1.0) || !(c.b > c.a)) errors.push_back("params.a, params.b: need 1 < a < b");
                if (!(c.delta >= 0.0) || !(c.a - 2.0 * c.delta > 1.0)) errors.push_back("params.delta: needs a - 2 delta > 1");
                if (!(c.spacing_c > 0.0)) errors.push_back("params.c: must be positive");
                for (double R : c.R_grid)
                    if (R > 1.0 && c.spacing_c > 0.0 && R / (c.spacing_c * std::log(R)) < 5.0)
                        errors.push_back("params.R: fewer than 6 indices fit in [0, " + fmt(R) + "]");
                break;
            }
        }
    }
    if (exp == Experiment::Exceedance || exp == Experiment::Islands || exp == Experiment::GoodIndex) {
        for (double R : c.R_grid) {
            if (!(R > 0.0)) errors.push_back("params.R: values must be positive");
            reach = std::max(reach, R);
        }
    }

    // Domain: either given, or the analysis reach plus 20 sqrt(t), rounded up to 8 cells.
    if (c.dx > 0.0 && c.dt > 0.0 && c.t > 0.0 && c.dt <= c.dx * c.dx) {
        const double slack = 20.0 * std::sqrt(c.t);
        double length = r.real("grid.length", 0.0);
        std::size_t nx = 0;
        if (r.has("grid.length")) {
            if (!(length > 0.0)) errors.push_back("grid.length: must be positive");
            nx = static_cast<std::size_t>(std::llround(length / c.dx));
            if (reach > length)
                errors.push_back("grid.length: " + fmt(length) + " is shorter than the analysis window " + fmt(reach));
        } else {
            const double want = reach + slack;
            nx = static_cast<std::size_t>(std::ceil(want / c.dx / 8.0 - 1e-9)) * 8;
        }
        if (nx >= 2) {
            length = static_cast<double>(nx) * c.dx;
            c.grid = GridSpec::from_resolution(c.dx, length, c.dt, c.t);
            if (max_window > length / 2.0)
                errors.push_back("window: sqrt(beta t)=" + fmt(max_window) + " exceeds half the domain " +
                                 fmt(length / 2.0));
        } else {
            errors.push_back("grid: fewer than 2 cells");
        }
    }

    std::string canon;
    for (const auto& [k, v] : flat) canon += k + "=" + v + "\n";
    c.canonical = canon;
    c.hash = fnv1a64(canon);
    if (errors.empty()) out.config = std::move(c);
    return out;
}

ConfigParse load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        ConfigParse p;
        p.errors.push_back("cannot read config file '" + path + "'");
        return p;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

ExperimentConfig parse_config_or_throw(std::string_view text) {
    auto p = parse_config(text);
    if (!p.ok()) {
        std::string msg = "invalid config:";
        for (const auto& e : p.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    return std::move(*p.config);
}

}  // namespace shefields
