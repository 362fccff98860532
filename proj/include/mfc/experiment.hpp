#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfc/verify.hpp"

namespace mfc {

inline constexpr const char* kVersion = "0.1.0";

enum class ExitCode : int { Pass = 0, RuntimeFailure = 1, ConfigError = 2 };

/// A fully validated experiment: every task is ready to run, every path is absolute.
struct ExperimentConfig {
    std::string kind;  // simulate | solve-hjb | verify | mollify | sweep
    std::optional<ModelSpec> model;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::filesystem::path output;
    nlohmann::json document;  // the config as read, after command line overrides
};

/// Validates the document. Relative paths resolve against base_dir.
/// Throws ConfigError with a JSON pointer on any schema violation.
ExperimentConfig parse_experiment(const nlohmann::json& doc, const std::filesystem::path& base_dir);

struct ArtifactFile {
    std::string name;
    std::string contents;
};

struct ExperimentResult {
    std::vector<ProbeReport> probes;
    std::string csv;               // results.csv
    nlohmann::json summary;        // summary.json
    std::vector<ArtifactFile> extra_files;
    bool pass = true;              // all hard-assert probes passed
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// results.csv, summary.json, extra files and manifest.json, each written to a
/// temporary name and renamed into place.
void write_artifacts(const ExperimentConfig& cfg, const ExperimentResult& result);

void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// FNV-1a of the canonical (sorted-key) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

struct RunOptions {
    std::filesystem::path config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::string format = "csv";  // what goes to standard output
};

/// The whole `run` subcommand: read, validate, execute, write. Never throws.
ExitCode run_command(const RunOptions& options, std::ostream& out, std::ostream& err);

/// Sorted catalog of models, functionals, probes and experiment kinds.
nlohmann::json registry_listing();
void print_registry(std::ostream& out, bool as_json);

} // namespace mfc
