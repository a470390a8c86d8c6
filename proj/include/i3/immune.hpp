#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace i3 {

/// Malformed immunisation document: schema, range or version problems.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labelled set that does not contain both classes.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or unwritable file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Label { normal, abnormal };
enum class Verdict { normal, abnormal };

std::string to_string(Label l);
Label parse_label(std::string_view s);

struct Sample {
  double cpu = 0.0;
  double mem = 0.0;
  double net = 0.0;
};

struct ProcessTrace {
  std::string process_id;
  std::vector<Sample> samples;
  std::optional<Label> label;

  /// At least two samples, every channel in [0, 1]. Throws std::invalid_argument.
  void validate() const;
};

inline constexpr std::size_t kFeatureDims = 12;

/// (cpu, mem, net) x (mean, std, min, max), in that order.
using FeatureVector = std::array<double, kFeatureDims>;

const std::array<std::string_view, kFeatureDims>& feature_names();

/// Sample mean, population standard deviation, min and max per channel.
FeatureVector extract_features(const ProcessTrace& trace);

struct Normalisation {
  FeatureVector center{};
  FeatureVector scale{};

  FeatureVector apply(const FeatureVector& raw) const;
};

struct ImmuneModel {
  std::vector<FeatureVector> prototypes;  // normalised
  double threshold = 0.0;
  Normalisation normalisation;
  double beta = 0.0;  // prior scale

  void validate() const;
};

/// Distance from each point to its nearest other point.
std::vector<double> loo_nearest_distances(std::span<const FeatureVector> points);

/// Nearest-rank quantile: the ceil(q * n)-th smallest value, q in (0, 1].
double quantile_nearest_rank(std::vector<double> values, double q);

ImmuneModel train_from_features(std::span<const FeatureVector> normals, double threshold_quantile = 0.95);
ImmuneModel train(std::span<const ProcessTrace> normals, double threshold_quantile = 0.95);

double euclidean(const FeatureVector& a, const FeatureVector& b);

/// Distance from an already-normalised vector to its nearest prototype.
double nearest_prototype_distance(const ImmuneModel& model, const FeatureVector& normalised);

struct Classification {
  Verdict verdict = Verdict::normal;
  double distance = 0.0;
};

/// Normal iff d - beta * ln(p / (1 - p)) <= threshold. `raw` is an
/// unnormalised feature vector; prior p in (0, 1).
Classification classify(const ImmuneModel& model, const FeatureVector& raw, double prior);
Classification classify(const ImmuneModel& model, const FeatureVector& raw, double prior,
                        double threshold);

struct ErrorPoint {
  double threshold = 0.0;
  std::size_t false_positives = 0;  // normal flagged abnormal
  std::size_t false_negatives = 0;  // abnormal passed as normal
  double error_rate_pct = 0.0;
};

/// One row per threshold, overriding the model's own threshold. Throws
/// DatasetError unless both labels are present.
std::vector<ErrorPoint> evaluate(const ImmuneModel& model, std::span<const ProcessTrace> labelled,
                                 std::span<const double> thresholds, double prior);

/// `threshold,fp,fn,error_rate_pct`
void write_error_csv(std::ostream& out, std::span<const ErrorPoint> rows);

struct TraceProfile {
  double mean = 0.25;
  double jitter = 0.05;       // stationary standard deviation of the AR path
  double ar_coeff = 0.7;
  double mean_spread = 0.03;  // per-process offset of the mean
  double burst_prob = 0.0;
  double burst_size = 0.0;

  void validate() const;
};

struct SyntheticSpec {
  std::size_t n_normal = 0;
  std::size_t n_abnormal = 0;
  std::size_t length = 256;
  std::uint64_t seed = 1;
  TraceProfile normal{};
  TraceProfile abnormal{0.7, 0.2, 0.7, 0.1, 0.1, 0.25};

  void validate() const;
};

/// Normal traces first, then abnormal; deterministic in the seed.
std::vector<ProcessTrace> generate_synthetic_traces(const SyntheticSpec& spec);

// --- immunisation exchange ------------------------------------------------

struct Immunisation {
  ImmuneModel model;
  double prior = 0.5;
};

/// Canonical XML form; numbers carry 17 significant digits.
std::string export_immunisation(const ImmuneModel& model, double prior);

/// Throws SchemaError on any schema, range or version violation.
Immunisation import_immunisation(std::string_view xml);

// --- trace files ----------------------------------------------------------

/// CSV with header `t,cpu,mem,net`.
ProcessTrace read_trace_csv(const std::filesystem::path& path);
void write_trace_csv(const std::filesystem::path& path, const ProcessTrace& trace);

/// Manifest CSV with header `path,label`; relative paths resolve against the
/// manifest's directory.
std::vector<ProcessTrace> read_manifest(const std::filesystem::path& manifest);

}  // namespace i3
