#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "i3/immune.hpp"
#include "sord/simkernel.hpp"

namespace cli {

using nlohmann::json;

/// Bad config content or flag value. Exit status 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable input or unwritable output. Exit status 2.
class IoFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flags that adjust a config document before it is parsed.
struct Overrides {
  std::vector<std::string> set;       // "dotted.key=value"; value is JSON or a bare string
  std::optional<std::uint64_t> seed;  // beats SORD_SEED, which beats the file
};

json load_config(const std::filesystem::path& path);

/// Applies `--set` pairs, then the seed (flag, else SORD_SEED).
void apply_overrides(json& doc, const Overrides& overrides);

/// Reads SORD_SEED. Throws ValidationError when it is set but not an integer.
std::optional<std::uint64_t> env_seed();

struct SordSweepConfig {
  sord::SimConfig base;
  sord::SweepSpec sweep{{0.5, 0.6, 0.7, 0.75, 0.82, 0.85, 0.88, 0.95}};
};

struct SordRunConfig {
  sord::SimConfig sim;
};

struct ThresholdGrid {
  double min = 0.0;
  std::optional<double> max;  // default: 1.05 x the largest test distance
  std::size_t steps = 201;
};

/// A prior value, or the test set's true normal fraction.
using PriorSpec = std::variant<double, std::string>;

struct I3PipelineConfig {
  std::uint64_t seed = 1;
  double threshold_quantile = 0.95;
  std::string source = "synthetic";  // or "manifest"
  std::size_t length = 256;
  std::size_t train_normal = 50;
  std::size_t test_normal = 75;
  std::size_t test_abnormal = 25;
  i3::TraceProfile normal_profile = i3::SyntheticSpec{}.normal;
  i3::TraceProfile abnormal_profile = i3::SyntheticSpec{}.abnormal;
  std::optional<std::filesystem::path> train_manifest;
  std::optional<std::filesystem::path> test_manifest;
  ThresholdGrid thresholds;
  std::vector<PriorSpec> priors{0.5, std::string("tuned")};
  PriorSpec immunisation_prior = std::string("tuned");
};

/// Each parser rejects unknown keys, wrong types and out-of-range values
/// with ValidationError naming the key.
SordSweepConfig parse_sord_sweep(const json& doc);
SordRunConfig parse_sord_run(const json& doc);
I3PipelineConfig parse_i3_pipeline(const json& doc, const std::filesystem::path& base_dir = {});

/// Fully expanded form: every default spelled out, `kind` included.
json to_json(const SordSweepConfig& c);
json to_json(const SordRunConfig& c);
json to_json(const I3PipelineConfig& c);

}  // namespace cli
