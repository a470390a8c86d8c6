#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "../support/harness.hpp"
#include "i3/immune.hpp"
#include "sord/rng.hpp"

using namespace i3;

namespace {

std::vector<FeatureVector> features_of(const std::vector<ProcessTrace>& traces) {
  std::vector<FeatureVector> out;
  for (const auto& t : traces) out.push_back(extract_features(t));
  return out;
}

}  // namespace

TEST_CASE("per-dimension affine rescaling of the features changes nothing") {
  sord::Rng rng(sord::mix_seed(31, 0));
  for (int trial = 0; trial < 20; ++trial) {
    const auto normals = features_of(generate_synthetic_traces({15, 0, 64, 100u + trial}));
    const auto probes = features_of(generate_synthetic_traces({10, 10, 64, 200u + trial}));
    FeatureVector a{}, b{};
    for (std::size_t d = 0; d < kFeatureDims; ++d) {
      a[d] = std::exp(-3.0 + 6.0 * rng.uniform());
      b[d] = -5.0 + 10.0 * rng.uniform();
    }
    auto warp = [&](FeatureVector f) {
      for (std::size_t d = 0; d < kFeatureDims; ++d) f[d] = a[d] * f[d] + b[d];
      return f;
    };
    std::vector<FeatureVector> warped;
    for (const auto& f : normals) warped.push_back(warp(f));

    const auto m = train_from_features(normals);
    const auto mw = train_from_features(warped);
    CHECK(mw.threshold == doctest::Approx(m.threshold).epsilon(1e-9));
    CHECK(mw.beta == doctest::Approx(m.beta).epsilon(1e-9));
    for (const auto& p : probes) {
      const auto c = classify(m, p, 0.5);
      const auto cw = classify(mw, warp(p), 0.5);
      CHECK(cw.distance == doctest::Approx(c.distance).epsilon(1e-9));
      if (std::abs(c.distance - m.threshold) > 1e-6 * (1.0 + m.threshold)) {
        CHECK(cw.verdict == c.verdict);
      }
    }
  }
}

TEST_CASE("an even prior reduces to the plain threshold test") {
  const auto m = train(generate_synthetic_traces({25, 0, 64, 3}));
  for (const auto& t : generate_synthetic_traces({40, 40, 64, 4})) {
    const auto c = classify(m, extract_features(t), 0.5);
    CHECK((c.verdict == Verdict::normal) == (c.distance <= m.threshold));
  }
}

TEST_CASE("error counts are bounded and monotone in the threshold") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = train(generate_synthetic_traces({20, 0, 48, seed}));
    auto spec = SyntheticSpec{12, 8, 48, seed + 1000};
    spec.abnormal.mean = 0.35;  // overlap the classes so the curve is not trivial
    const auto test_set = generate_synthetic_traces(spec);
    std::vector<double> thresholds;
    for (int i = 0; i <= 60; ++i) thresholds.push_back(0.25 * i);
    for (double prior : {0.2, 0.5, 0.8}) {
      const auto rows = evaluate(m, test_set, thresholds, prior);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].false_positives <= 12);
        CHECK(rows[i].false_negatives <= 8);
        CHECK(rows[i].error_rate_pct >= 0.0);
        CHECK(rows[i].error_rate_pct <= 100.0);
        if (i > 0) {
          CHECK(rows[i].false_positives <= rows[i - 1].false_positives);
          CHECK(rows[i].false_negatives >= rows[i - 1].false_negatives);
        }
      }
    }
  }
}

TEST_CASE("classify distance matches brute force on random models") {
  const auto report = harness::run_classifier_oracle(300, 5);
  CHECK(report.pairs == 300);
  CHECK(report.exact == report.pairs);
}

TEST_CASE("an imported immunisation classifies like the original") {
  const auto report = harness::run_immunisation_fidelity(300, 6);
  CHECK(report.round_trip_identical);
  CHECK(report.verdict_matches == report.points);
  CHECK(report.distance_matches == report.points);
}
