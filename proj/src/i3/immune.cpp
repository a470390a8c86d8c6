#include "i3/immune.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "sord/rng.hpp"

namespace i3 {

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

void check_prior(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("prior must lie in (0, 1)");
}

}  // namespace

std::string to_string(Label l) { return l == Label::normal ? "normal" : "abnormal"; }

Label parse_label(std::string_view s) {
  if (s == "normal") return Label::normal;
  if (s == "abnormal") return Label::abnormal;
  throw std::invalid_argument("unknown label '" + std::string(s) + "'");
}

void ProcessTrace::validate() const {
  if (samples.size() < 2) {
    throw std::invalid_argument("trace '" + process_id + "' needs at least 2 samples");
  }
  for (const auto& s : samples) {
    if (!in_unit(s.cpu) || !in_unit(s.mem) || !in_unit(s.net)) {
      throw std::invalid_argument("trace '" + process_id + "' has a channel value outside [0, 1]");
    }
  }
}

const std::array<std::string_view, kFeatureDims>& feature_names() {
  static constexpr std::array<std::string_view, kFeatureDims> names{
      "cpu_mean", "cpu_std", "cpu_min", "cpu_max", "mem_mean", "mem_std",
      "mem_min",  "mem_max", "net_mean", "net_std", "net_min", "net_max"};
  return names;
}

FeatureVector extract_features(const ProcessTrace& trace) {
  trace.validate();
  FeatureVector f{};
  const double n = static_cast<double>(trace.samples.size());
  auto channel = [&](std::size_t base, double Sample::*field) {
    double sum = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : trace.samples) {
      const double v = s.*field;
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& s : trace.samples) ss += (s.*field - mean) * (s.*field - mean);
    // Rounding can push the mean a hair outside [min, max] for constant input.
    f[base + 0] = std::clamp(mean, lo, hi);
    f[base + 1] = std::sqrt(ss / n);
    f[base + 2] = lo;
    f[base + 3] = hi;
  };
  channel(0, &Sample::cpu);
  channel(4, &Sample::mem);
  channel(8, &Sample::net);
  return f;
}

FeatureVector Normalisation::apply(const FeatureVector& raw) const {
  FeatureVector out{};
  for (std::size_t i = 0; i < kFeatureDims; ++i) out[i] = (raw[i] - center[i]) / scale[i];
  return out;
}

void ImmuneModel::validate() const {
  if (prototypes.empty()) throw std::invalid_argument("model needs at least one prototype");
  if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
    throw std::invalid_argument("threshold must be a finite non-negative number");
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("beta must be a finite non-negative number");
  }
  for (std::size_t i = 0; i < kFeatureDims; ++i) {
    if (!(normalisation.scale[i] > 0.0) || !std::isfinite(normalisation.scale[i]) ||
        !std::isfinite(normalisation.center[i])) {
      throw std::invalid_argument("normalisation for " + std::string(feature_names()[i]) +
                                  " is invalid");
    }
  }
}

double euclidean(const FeatureVector& a, const FeatureVector& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kFeatureDims; ++i) sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum);
}

std::vector<double> loo_nearest_distances(std::span<const FeatureVector> points) {
  if (points.size() < 2) throw std::invalid_argument("need at least two points");
  std::vector<double> out(points.size(), std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i != j) out[i] = std::min(out[i], euclidean(points[i], points[j]));
    }
  }
  return out;
}

double quantile_nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile of an empty set");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

ImmuneModel train_from_features(std::span<const FeatureVector> normals, double threshold_quantile) {
  if (normals.size() < 2) throw std::invalid_argument("training needs at least two normal traces");
  if (!(threshold_quantile > 0.0 && threshold_quantile <= 1.0)) {
    throw std::invalid_argument("threshold_quantile must lie in (0, 1]");
  }

  ImmuneModel model;
  const double n = static_cast<double>(normals.size());
  for (std::size_t d = 0; d < kFeatureDims; ++d) {
    double sum = 0.0;
    for (const auto& f : normals) sum += f[d];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& f : normals) ss += (f[d] - mean) * (f[d] - mean);
    const double sd = std::sqrt(ss / n);
    model.normalisation.center[d] = mean;
    model.normalisation.scale[d] = sd > 0.0 ? sd : 1.0;
  }

  model.prototypes.reserve(normals.size());
  for (const auto& f : normals) model.prototypes.push_back(model.normalisation.apply(f));

  const auto loo = loo_nearest_distances(model.prototypes);
  model.threshold = quantile_nearest_rank(loo, threshold_quantile);

  double sum = 0.0;
  for (double d : loo) sum += d;
  const double mean = sum / static_cast<double>(loo.size());
  double ss = 0.0;
  for (double d : loo) ss += (d - mean) * (d - mean);
  model.beta = std::sqrt(ss / static_cast<double>(loo.size()));
  return model;
}

ImmuneModel train(std::span<const ProcessTrace> normals, double threshold_quantile) {
  std::vector<FeatureVector> features;
  features.reserve(normals.size());
  for (const auto& t : normals) features.push_back(extract_features(t));
  return train_from_features(features, threshold_quantile);
}

double nearest_prototype_distance(const ImmuneModel& model, const FeatureVector& normalised) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : model.prototypes) best = std::min(best, euclidean(p, normalised));
  return best;
}

Classification classify(const ImmuneModel& model, const FeatureVector& raw, double prior,
                        double threshold) {
  check_prior(prior);
  const double d = nearest_prototype_distance(model, model.normalisation.apply(raw));
  const double shift = model.beta * std::log(prior / (1.0 - prior));
  return {d - shift <= threshold ? Verdict::normal : Verdict::abnormal, d};
}

Classification classify(const ImmuneModel& model, const FeatureVector& raw, double prior) {
  return classify(model, raw, prior, model.threshold);
}

std::vector<ErrorPoint> evaluate(const ImmuneModel& model, std::span<const ProcessTrace> labelled,
                                 std::span<const double> thresholds, double prior) {
  check_prior(prior);
  std::size_t normals = 0;
  std::size_t abnormals = 0;
  std::vector<FeatureVector> features;
  features.reserve(labelled.size());
  for (const auto& t : labelled) {
    if (!t.label) throw std::invalid_argument("trace '" + t.process_id + "' has no label");
    (*t.label == Label::normal ? normals : abnormals)++;
    features.push_back(extract_features(t));
  }
  if (normals == 0 || abnormals == 0) {
    throw DatasetError("evaluation set must contain both normal and abnormal traces");
  }

  // Distances do not depend on the threshold; compute them once.
  std::vector<double> distances;
  distances.reserve(features.size());
  for (const auto& f : features) {
    distances.push_back(nearest_prototype_distance(model, model.normalisation.apply(f)));
  }
  const double shift = model.beta * std::log(prior / (1.0 - prior));

  std::vector<ErrorPoint> rows;
  rows.reserve(thresholds.size());
  for (double tau : thresholds) {
    ErrorPoint row;
    row.threshold = tau;
    for (std::size_t i = 0; i < labelled.size(); ++i) {
      const bool flagged = !(distances[i] - shift <= tau);
      if (*labelled[i].label == Label::normal && flagged) ++row.false_positives;
      if (*labelled[i].label == Label::abnormal && !flagged) ++row.false_negatives;
    }
    row.error_rate_pct = 100.0 * static_cast<double>(row.false_positives + row.false_negatives) /
                         static_cast<double>(labelled.size());
    rows.push_back(row);
  }
  return rows;
}

void write_error_csv(std::ostream& out, std::span<const ErrorPoint> rows) {
  out << "threshold,fp,fn,error_rate_pct\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    out << r.threshold << ',' << r.false_positives << ',' << r.false_negatives << ','
        << r.error_rate_pct << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

void TraceProfile::validate() const {
  if (!in_unit(mean)) throw std::invalid_argument("profile mean must lie in [0, 1]");
  if (!(jitter >= 0.0)) throw std::invalid_argument("profile jitter must be >= 0");
  if (!(ar_coeff >= 0.0 && ar_coeff < 1.0)) {
    throw std::invalid_argument("profile ar_coeff must lie in [0, 1)");
  }
  if (!(mean_spread >= 0.0)) throw std::invalid_argument("profile mean_spread must be >= 0");
  if (!in_unit(burst_prob)) throw std::invalid_argument("profile burst_prob must lie in [0, 1]");
  if (!(burst_size >= 0.0)) throw std::invalid_argument("profile burst_size must be >= 0");
}

void SyntheticSpec::validate() const {
  if (length < 2) throw std::invalid_argument("synthetic length must be >= 2");
  normal.validate();
  abnormal.validate();
}

std::vector<ProcessTrace> generate_synthetic_traces(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<ProcessTrace> out;
  out.reserve(spec.n_normal + spec.n_abnormal);

  auto make = [&](const TraceProfile& profile, Label label, std::size_t index) {
    sord::Rng rng(sord::mix_seed(spec.seed, (label == Label::normal ? 0ULL : 1ULL << 40) + index));
    const double innovation = profile.jitter * std::sqrt(1.0 - profile.ar_coeff * profile.ar_coeff);

    std::array<double, 3> level{};
    std::array<double, 3> dev{};
    for (std::size_t c = 0; c < 3; ++c) {
      level[c] = std::clamp(profile.mean + profile.mean_spread * rng.normal(), 0.0, 1.0);
      dev[c] = profile.jitter * rng.normal();
    }

    ProcessTrace t;
    t.process_id = to_string(label) + "-" + std::to_string(index);
    t.label = label;
    t.samples.reserve(spec.length);
    for (std::size_t k = 0; k < spec.length; ++k) {
      std::array<double, 3> v{};
      for (std::size_t c = 0; c < 3; ++c) {
        if (k > 0) dev[c] = profile.ar_coeff * dev[c] + innovation * rng.normal();
        double x = level[c] + dev[c];
        if (rng.uniform() < profile.burst_prob) x += profile.burst_size;
        v[c] = std::clamp(x, 0.0, 1.0);
      }
      t.samples.push_back({v[0], v[1], v[2]});
    }
    out.push_back(std::move(t));
  };

  for (std::size_t i = 0; i < spec.n_normal; ++i) make(spec.normal, Label::normal, i);
  for (std::size_t i = 0; i < spec.n_abnormal; ++i) make(spec.abnormal, Label::abnormal, i);
  return out;
}

}  // namespace i3
