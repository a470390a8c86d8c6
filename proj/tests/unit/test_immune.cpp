#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "../support/harness.hpp"
#include "i3/immune.hpp"

using namespace i3;

namespace {

ProcessTrace trace_of(std::vector<Sample> samples, std::optional<Label> label = std::nullopt,
                      std::string id = "p") {
  return ProcessTrace{std::move(id), std::move(samples), label};
}

FeatureVector on_axis(double x) {
  FeatureVector f{};
  f[0] = x;
  return f;
}

// One prototype at the origin, identity normalisation.
ImmuneModel unit_model(double threshold, double beta) {
  ImmuneModel m;
  m.prototypes = {FeatureVector{}};
  m.threshold = threshold;
  m.beta = beta;
  m.normalisation.scale.fill(1.0);
  return m;
}

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("i3_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("features of a constant trace") {
  const auto f = extract_features(trace_of({{0.3, 0.5, 0.1}, {0.3, 0.5, 0.1}, {0.3, 0.5, 0.1}}));
  const FeatureVector want{0.3, 0.0, 0.3, 0.3, 0.5, 0.0, 0.5, 0.5, 0.1, 0.0, 0.1, 0.1};
  for (std::size_t i = 0; i < kFeatureDims; ++i) CHECK(f[i] == doctest::Approx(want[i]).epsilon(1e-15));
}

TEST_CASE("features of an alternating cpu channel") {
  const auto f = extract_features(trace_of({{0, 0, 0}, {1, 0, 0}, {0, 0, 0}, {1, 0, 0}}));
  CHECK(f[0] == 0.5);
  CHECK(f[1] == 0.5);
  CHECK(f[2] == 0.0);
  CHECK(f[3] == 1.0);
}

TEST_CASE("features ignore sample order") {
  std::vector<Sample> s{{0.1, 0.9, 0.3}, {0.7, 0.2, 0.4}, {0.5, 0.5, 0.0}, {0.2, 0.3, 1.0}};
  const auto a = extract_features(trace_of(s));
  std::reverse(s.begin(), s.end());
  std::rotate(s.begin(), s.begin() + 1, s.end());
  const auto b = extract_features(trace_of(s));
  for (std::size_t i = 0; i < kFeatureDims; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("feature names follow channel then statistic") {
  CHECK(feature_names()[0] == "cpu_mean");
  CHECK(feature_names()[5] == "mem_std");
  CHECK(feature_names()[11] == "net_max");
}

TEST_CASE("trace validation") {
  CHECK_THROWS_AS(trace_of({{0.1, 0.1, 0.1}}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(trace_of({{0.1, 0.1, 0.1}, {0.1, 1.5, 0.1}}).validate(), std::invalid_argument);
  CHECK_NOTHROW(trace_of({{0, 0, 0}, {1, 1, 1}}).validate());
}

TEST_CASE("leave-one-out nearest distances") {
  const std::vector<FeatureVector> pts{on_axis(0), on_axis(1), on_axis(2)};
  CHECK(loo_nearest_distances(pts) == std::vector<double>{1, 1, 1});
  const std::vector<FeatureVector> uneven{on_axis(0), on_axis(1), on_axis(5)};
  CHECK(loo_nearest_distances(uneven) == std::vector<double>{1, 1, 4});
  const std::vector<FeatureVector> one{on_axis(0)};
  CHECK_THROWS_AS(loo_nearest_distances(one), std::invalid_argument);
}

TEST_CASE("nearest-rank quantile") {
  const std::vector<double> v{4, 0.5, 2, 1};
  CHECK(quantile_nearest_rank(v, 0.5) == 1.0);
  CHECK(quantile_nearest_rank(v, 0.95) == 4.0);
  CHECK(quantile_nearest_rank(v, 0.25) == 0.5);
  CHECK(quantile_nearest_rank(v, 1.0) == 4.0);
  CHECK_THROWS_AS(quantile_nearest_rank(v, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(quantile_nearest_rank({}, 0.5), std::invalid_argument);
}

TEST_CASE("two identical training traces give a zero threshold") {
  const auto t = trace_of({{0.2, 0.3, 0.4}, {0.4, 0.3, 0.2}});
  const std::vector<ProcessTrace> normals{t, t};
  const auto m = train(normals);
  CHECK(m.threshold == 0.0);
  CHECK(m.beta == 0.0);
  CHECK(m.prototypes.size() == 2);
  for (double s : m.normalisation.scale) CHECK(s == 1.0);
}

TEST_CASE("training normalises to zero mean and unit spread") {
  std::vector<FeatureVector> pts;
  for (int i = 0; i < 5; ++i) {
    FeatureVector f{};
    for (std::size_t d = 0; d < kFeatureDims; ++d) f[d] = 0.1 * i + 0.01 * static_cast<double>(d * d);
    pts.push_back(f);
  }
  const auto m = train_from_features(pts, 0.5);
  for (std::size_t d = 0; d < kFeatureDims; ++d) {
    double mean = 0, sq = 0;
    for (const auto& p : m.prototypes) mean += p[d] / 5.0;
    for (const auto& p : m.prototypes) sq += (p[d] - mean) * (p[d] - mean) / 5.0;
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::sqrt(sq) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("classification against a hand-built model") {
  const auto m = unit_model(1.0, 0.5);
  SUBCASE("neutral prior compares the raw distance") {
    auto c = classify(m, on_axis(1.2), 0.5);
    CHECK(c.verdict == Verdict::abnormal);
    CHECK(c.distance == doctest::Approx(1.2));
    CHECK(classify(m, on_axis(0.8), 0.5).verdict == Verdict::normal);
    CHECK(classify(m, on_axis(1.0), 0.5).verdict == Verdict::normal);
  }
  SUBCASE("a confident normal prior relaxes the test") {
    // 1.2 - 0.5 ln 9 = 0.101
    CHECK(classify(m, on_axis(1.2), 0.9).verdict == Verdict::normal);
  }
  SUBCASE("a suspicious prior tightens it") {
    // 0.8 + 0.5 ln 9 = 1.899
    CHECK(classify(m, on_axis(0.8), 0.1).verdict == Verdict::abnormal);
  }
  SUBCASE("explicit threshold overrides the model's") {
    CHECK(classify(m, on_axis(1.2), 0.5, 2.0).verdict == Verdict::normal);
  }
  SUBCASE("prior outside (0, 1) is rejected") {
    CHECK_THROWS_AS(classify(m, on_axis(0.0), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(classify(m, on_axis(0.0), 1.0), std::invalid_argument);
  }
}

TEST_CASE("raising the prior never turns a normal verdict abnormal") {
  const auto m = unit_model(1.0, 0.7);
  for (double x = 0.0; x < 4.0; x += 0.05) {
    bool seen_normal = false;
    for (double p = 0.01; p < 1.0; p += 0.01) {
      const bool normal = classify(m, on_axis(x), p).verdict == Verdict::normal;
      if (seen_normal) CHECK(normal);
      seen_normal = seen_normal || normal;
    }
  }
}

TEST_CASE("classify distance equals a brute-force nearest prototype") {
  const auto normals = generate_synthetic_traces({20, 0, 32, 5});
  const auto m = train(normals);
  const auto probes = generate_synthetic_traces({5, 5, 32, 6});
  for (const auto& t : probes) {
    const auto raw = extract_features(t);
    CHECK(classify(m, raw, 0.5).distance == harness::brute_nearest(m, raw));
  }
}

TEST_CASE("error curve endpoints") {
  const auto train_set = generate_synthetic_traces({30, 0, 128, 11});
  const auto m = train(train_set);
  const auto test_set = generate_synthetic_traces({15, 5, 128, 12});
  const std::vector<double> thresholds{0.0, 1e9};
  const auto rows = evaluate(m, test_set, thresholds, 0.5);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].false_positives == 15);
  CHECK(rows[0].false_negatives == 0);
  CHECK(rows[0].error_rate_pct == 75.0);
  CHECK(rows[1].false_positives == 0);
  CHECK(rows[1].false_negatives == 5);
  CHECK(rows[1].error_rate_pct == 25.0);
}

TEST_CASE("evaluation needs both classes and labels") {
  const auto m = train(generate_synthetic_traces({10, 0, 32, 1}));
  const std::vector<double> thresholds{1.0};
  const auto only_normal = generate_synthetic_traces({5, 0, 32, 2});
  CHECK_THROWS_AS(evaluate(m, only_normal, thresholds, 0.5), DatasetError);
  auto unlabeled = generate_synthetic_traces({3, 3, 32, 2});
  unlabeled[0].label.reset();
  CHECK_THROWS_AS(evaluate(m, unlabeled, thresholds, 0.5), std::invalid_argument);
}

TEST_CASE("error csv format") {
  const std::vector<ErrorPoint> rows{{0.5, 3, 1, 16.0}};
  std::ostringstream out;
  write_error_csv(out, rows);
  CHECK(out.str() == "threshold,fp,fn,error_rate_pct\n0.500000,3,1,16.000000\n");
}

TEST_CASE("synthetic generator") {
  SUBCASE("empty spec yields nothing") {
    CHECK(generate_synthetic_traces({}).empty());
  }
  SUBCASE("labels, ids and lengths") {
    const auto t = generate_synthetic_traces({2, 3, 40, 7});
    REQUIRE(t.size() == 5);
    CHECK(t[0].label == Label::normal);
    CHECK(t[1].process_id == "normal-1");
    CHECK(t[2].label == Label::abnormal);
    CHECK(t[4].process_id == "abnormal-2");
    for (const auto& p : t) {
      CHECK(p.samples.size() == 40);
      CHECK_NOTHROW(p.validate());
    }
  }
  SUBCASE("deterministic in the seed") {
    const auto a = generate_synthetic_traces({4, 4, 64, 9});
    const auto b = generate_synthetic_traces({4, 4, 64, 9});
    const auto c = generate_synthetic_traces({4, 4, 64, 10});
    CHECK(extract_features(a[5]) == extract_features(b[5]));
    CHECK(extract_features(a[5]) != extract_features(c[5]));
  }
  SUBCASE("invalid profiles are rejected") {
    SyntheticSpec s{1, 1, 32, 1};
    s.abnormal.ar_coeff = 1.0;
    CHECK_THROWS_AS(generate_synthetic_traces(s), std::invalid_argument);
  }
}

TEST_CASE("default profiles separate well at length 256") {
  const auto m = train(generate_synthetic_traces({50, 0, 256, 21}));
  const auto test_set = generate_synthetic_traces({50, 50, 256, 22});
  std::vector<double> thresholds;
  for (int i = 0; i <= 200; ++i) thresholds.push_back(0.1 * i);
  const auto rows = evaluate(m, test_set, thresholds, 0.5);
  double best = 100.0;
  for (const auto& r : rows) best = std::min(best, r.error_rate_pct);
  CHECK(best < 10.0);
}

TEST_CASE("immunisation round trip") {
  const auto m = train(generate_synthetic_traces({12, 0, 64, 3}));
  const auto xml = export_immunisation(m, 0.75);
  CHECK(xml.rfind("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<immunisation version=\"1\">", 0) == 0);
  const auto back = import_immunisation(xml);
  CHECK(back.prior == 0.75);
  CHECK(back.model.threshold == m.threshold);
  CHECK(back.model.beta == m.beta);
  CHECK(back.model.prototypes == m.prototypes);
  CHECK(back.model.normalisation.center == m.normalisation.center);
  CHECK(back.model.normalisation.scale == m.normalisation.scale);
  CHECK(export_immunisation(back.model, back.prior) == xml);
}

TEST_CASE("immunisation schema violations") {
  const auto xml = export_immunisation(train(generate_synthetic_traces({4, 0, 16, 3})), 0.5);
  SUBCASE("missing threshold") {
    const std::regex threshold_line("  <threshold value=\"[^\"]*\"/>\n");
    CHECK_THROWS_AS(import_immunisation(std::regex_replace(xml, threshold_line, "")), SchemaError);
  }
  SUBCASE("unknown version") {
    CHECK_THROWS_AS(import_immunisation(replace_once(xml, "version=\"1\">", "version=\"2\">")), SchemaError);
  }
  SUBCASE("prior out of range") {
    CHECK_THROWS_AS(import_immunisation(replace_once(xml, "<prior normal=\"0.5\"", "<prior normal=\"1.5\"")),
                    SchemaError);
  }
  SUBCASE("feature in the wrong order") {
    CHECK_THROWS_AS(import_immunisation(replace_once(xml, "<f name=\"cpu_mean\"", "<f name=\"cpu_std\"")),
                    SchemaError);
  }
  SUBCASE("non-numeric value") {
    CHECK_THROWS_AS(import_immunisation(std::regex_replace(xml, std::regex("<beta value=\"[^\"]*\""),
                                                           "<beta value=\"lots\"")),
                    SchemaError);
  }
  SUBCASE("unknown element") {
    CHECK_THROWS_AS(import_immunisation(replace_once(xml, "</immunisation>", "<extra/></immunisation>")),
                    SchemaError);
  }
  SUBCASE("not xml") {
    CHECK_THROWS_AS(import_immunisation("<immunisation"), SchemaError);
  }
}

TEST_CASE("trace csv and manifest io") {
  const auto dir = scratch_dir("io");
  const auto traces = generate_synthetic_traces({1, 1, 8, 4});
  write_trace_csv(dir / "a.csv", traces[0]);
  write_trace_csv(dir / "b.csv", traces[1]);
  const auto back = read_trace_csv(dir / "a.csv");
  REQUIRE(back.samples.size() == 8);
  CHECK(back.samples[3].cpu == traces[0].samples[3].cpu);
  CHECK(back.samples[7].net == traces[0].samples[7].net);

  std::ofstream(dir / "manifest.csv") << "path,label\na.csv,normal\nb.csv,abnormal\n";
  const auto listed = read_manifest(dir / "manifest.csv");
  REQUIRE(listed.size() == 2);
  CHECK(listed[0].label == Label::normal);
  CHECK(listed[1].label == Label::abnormal);
  CHECK(extract_features(listed[1]) == extract_features(traces[1]));

  std::ofstream(dir / "bad_header.csv") << "time,cpu,mem,net\n0,0.1,0.1,0.1\n1,0.1,0.1,0.1\n";
  CHECK_THROWS(read_trace_csv(dir / "bad_header.csv"));
  CHECK_THROWS_AS(read_trace_csv(dir / "missing.csv"), IoError);
  std::ofstream(dir / "bad_label.csv") << "path,label\na.csv,weird\n";
  CHECK_THROWS(read_manifest(dir / "bad_label.csv"));
  std::filesystem::remove_all(dir);
}
