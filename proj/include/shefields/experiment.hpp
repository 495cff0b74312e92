#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shefields/config.hpp"

namespace shefields {

struct RunOptions {
    std::string out_dir = "out";
    std::size_t workers = 0;  // 0: hardware concurrency; never changes results
    std::optional<std::uint64_t> seed_override;
};

struct RunManifest {
    std::string config_hash;
    std::string code_version;
    std::string experiment;
    double wall_time_seconds = 0.0;
    std::vector<std::string> outputs;  // file names relative to the output directory
    std::size_t censored = 0;
    std::string status = "ok";         // ok | invariant_failed | failed
    std::vector<std::string> failures;
    bool ok() const { return status == "ok"; }
};

const char* code_version();

/// Runs the configured experiment, writing data files and manifest.json into
/// opts.out_dir. Module errors are caught and recorded as status "failed"
/// after flushing whatever was already written.
RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

std::string manifest_json(const RunManifest& m);

}  // namespace shefields
