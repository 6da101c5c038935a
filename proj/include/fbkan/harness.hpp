#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fbkan/training.hpp"

namespace fbkan {

// Parsed key-value config: [section] headers with key = value lines, '#' or
// ';' comments. Keys are validated against the known schema on resolve;
// unknown keys are an error so typos cannot silently change a run.
struct ConfigMap {
    std::map<std::string, std::map<std::string, std::string>> sections;

    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections[section][key] = value;
    }
    const std::string* find(const std::string& section, const std::string& key) const;
};

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);

// "section.key=value" override strings (CLI --set).
void apply_overrides(ConfigMap& config, const std::vector<std::string>& overrides);

struct RunConfig {
    ProblemSpec problem;        // defaults already overlaid with config values
    std::uint64_t seed = 0;
    std::string out_dir = "runs/out";
    std::string checkpoint;     // optional model to resume from
    std::string config_echo;    // canonical resolved text, hashed and archived
};

// Validates keys, constructs the problem, overlays every override. fast_factor
// scales iteration counts (and grid event iterations proportionally).
RunConfig resolve_config(const ConfigMap& config, double fast_factor = 1.0);

struct RunSummary {
    std::string problem;
    std::uint64_t seed = 0;
    int iterations = 0;
    double final_rel_l2 = 0.0;
    LossParts final_loss;
    std::size_t param_count = 0;
    double mean_relative_noise = 0.0;
    double wall_seconds = 0.0;
    std::string out_dir;
    std::map<std::string, std::string> artifacts;  // name -> path
    std::string hash;  // code + resolved config + seed; excludes timing
};

// Executes one training run and writes metrics.csv, predictions.csv,
// checkpoint.json and summary.json into the output directory.
RunSummary run(const RunConfig& config);

RunSummary read_summary(const std::string& path);

// Locates a preset config: literal path, ./configs/<name>.ini, then the
// build-time config directory.
std::string find_preset(const std::string& name);

struct CellResult {
    std::string id;
    std::string label;
    double paper = 0.0;
    double obtained = 0.0;
    double ratio = 0.0;
    bool required = false;
    bool checked = false;  // has a pass/fail bound
    bool passed = true;
};

struct ReproduceReport {
    std::string table;
    std::vector<CellResult> cells;
    std::vector<std::string> relation_lines;
    bool required_ok = true;
};

// Re-runs every row of a published result table ("data2", "pi2", "ml-pi") and
// compares against the recorded values. Rows matching `row_filter` only, when
// given. Required rows decide the exit status; the rest are informational.
ReproduceReport reproduce(const std::string& table, const std::string& out_root,
                          std::uint64_t seed, double fast_factor = 1.0,
                          const std::string& row_filter = "");

struct SweepRow {
    double value = 0.0;
    double rel_l2 = 0.0;
    double mean_relative_noise = 0.0;
};

struct SweepReport {
    std::string axis;
    std::vector<SweepRow> rows;
};

// One run per value along the given axis. "subdomains" overrides the per-level
// total; "noise" interprets values as target mean-relative-noise levels and
// derives the Gaussian sigma from the clean data targets.
SweepReport sweep(const std::string& axis, const std::string& preset,
                  const std::vector<double>& values, const std::string& out_root,
                  std::uint64_t seed, double fast_factor = 1.0,
                  const std::vector<std::string>& overrides = {});

}  // namespace fbkan
