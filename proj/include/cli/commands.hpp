#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cli/config.hpp"

namespace cli {

enum ExitStatus : int { exit_ok = 0, exit_validation = 1, exit_io = 2, exit_single_class = 3 };

/// figure2.csv + effective_config.json in `out_dir`.
int cmd_sord_sweep(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                   const Overrides& overrides, std::ostream& out, std::ostream& err);

/// run.csv, load_bins.csv, effective_config.json, and trace.jsonl when `trace` is set.
int cmd_sord_run(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                 const Overrides& overrides, bool trace, std::ostream& out, std::ostream& err);

/// immunisation.xml, figure4.csv, effective_config.json.
int cmd_i3_pipeline(const std::filesystem::path& config, const std::filesystem::path& out_dir,
                    const Overrides& overrides, std::ostream& out, std::ostream& err);

/// Prints `verdict,distance`. Prior and threshold default to the document's.
int cmd_i3_classify(const std::filesystem::path& immunisation, const std::filesystem::path& trace,
                    std::optional<double> prior, std::optional<double> threshold, std::ostream& out,
                    std::ostream& err);

/// Prints `clustering,avg_path,diameter`.
int cmd_topology_stats(std::size_t n, std::size_t k_near, std::size_t n_far, std::uint64_t seed,
                       std::ostream& out, std::ostream& err);

/// Writes each (name, content) pair to a temporary file in `dir`, then
/// renames them into place once every write has succeeded.
void write_outputs(const std::filesystem::path& dir,
                   const std::vector<std::pair<std::string, std::string>>& files);

/// Full command-line front ends, as used by the `sord` and `i3` binaries.
int run_sord_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_i3_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cli
