#pragma once

// Flat "key = value" run configuration.
//
//   # comment
//   optim.learning_rate = 0.1
//   run.modes = baseline, extended, anatomical
//
// Keys are fixed; unknown keys and malformed values are errors. Reals are
// written with 17 significant digits so a file round-trips bit-exactly.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adaug/phantom.hpp"
#include "adaug/ssl.hpp"

namespace adaug {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    PhantomSpec phantom;  // phantom.seed also fixes the dataset split
    DatasetOptions dataset;
    PipelineConfig pipeline;
    std::vector<TrainingMode> modes;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "runs/desk";
    int workers = 1;

    /// Desk-scale defaults: every mode, five seeds.
    RunConfig();
    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

/// Canonical text, one key per line, grouped with section comments.
std::string format_config(const RunConfig& config);

/// Starts from the defaults and applies every key present in the text.
RunConfig parse_config(std::string_view text);

/// Applies a single "key=value" override.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// SHA-256 (hex) of the canonical text minus run.output_dir and run.workers,
/// which do not affect results.
std::string config_digest(const RunConfig& config);

/// SHA-256 hex digest of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

/// Worker count: ADAUG_WORKERS when set, else the config value.
int effective_workers(const RunConfig& config);

}  // namespace adaug
