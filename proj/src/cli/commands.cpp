#include "cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sord/rng.hpp"
#include "sord/topology.hpp"

namespace cli {

namespace {

namespace fs = std::filesystem;

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const i3::DatasetError& e) {
    err << "error: " << e.what() << '\n';
    return exit_single_class;
  } catch (const IoFailure& e) {
    err << "error: " << e.what() << '\n';
    return exit_io;
  } catch (const i3::IoError& e) {
    err << "error: " << e.what() << '\n';
    return exit_io;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_io;
  } catch (const std::exception& e) {
    // ValidationError, std::invalid_argument, SchemaError, TopologyError.
    err << "error: " << e.what() << '\n';
    return exit_validation;
  }
}

json prepared(const fs::path& config, const Overrides& overrides) {
  json doc = load_config(config);
  apply_overrides(doc, overrides);
  return doc;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

fs::path temp_name(const fs::path& dir, const std::string& name) { return dir / ("." + name + ".tmp"); }

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double resolve_prior(const PriorSpec& p, double normal_fraction) {
  return std::holds_alternative<double>(p) ? std::get<double>(p) : normal_fraction;
}

struct Dataset {
  std::vector<i3::ProcessTrace> train;
  std::vector<i3::ProcessTrace> test;
};

Dataset load_dataset(const I3PipelineConfig& c) {
  Dataset d;
  if (c.source == "synthetic") {
    i3::SyntheticSpec train;
    train.n_normal = c.train_normal;
    train.length = c.length;
    train.seed = sord::mix_seed(c.seed, 1);
    train.normal = c.normal_profile;
    train.abnormal = c.abnormal_profile;
    d.train = i3::generate_synthetic_traces(train);

    i3::SyntheticSpec test = train;
    test.n_normal = c.test_normal;
    test.n_abnormal = c.test_abnormal;
    test.seed = sord::mix_seed(c.seed, 2);
    d.test = i3::generate_synthetic_traces(test);
  } else {
    for (auto& t : i3::read_manifest(*c.train_manifest)) {
      if (t.label == i3::Label::normal) d.train.push_back(std::move(t));
    }
    if (d.train.size() < 2) throw ValidationError("train manifest must list at least two normal traces");
    d.test = i3::read_manifest(*c.test_manifest);
  }
  return d;
}

}  // namespace

void write_outputs(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create output directory " + dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  auto cleanup = [&] {
    for (const auto& p : written) fs::remove(p, ec);
  };
  for (const auto& [name, content] : files) {
    const fs::path tmp = temp_name(dir, name);
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (f) written.push_back(tmp);
    f << content;
    f.close();
    if (!f) {
      cleanup();
      throw IoFailure("cannot write " + (dir / name).string());
    }
  }
  for (std::size_t i = 0; i < files.size(); ++i) {
    fs::rename(written[i], dir / files[i].first, ec);
    if (ec) {
      cleanup();
      throw IoFailure("cannot move " + files[i].first + " into place: " + ec.message());
    }
  }
}

int cmd_sord_sweep(const fs::path& config, const fs::path& out_dir, const Overrides& overrides,
                   std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SordSweepConfig cfg = parse_sord_sweep(prepared(config, overrides));
    const auto rows = sord::sweep_load(cfg.base, cfg.sweep);
    std::ostringstream csv;
    sord::write_sweep_csv(csv, rows);
    write_outputs(out_dir, {{"figure2.csv", csv.str()}, {"effective_config.json", dump(to_json(cfg))}});
    out << "wrote " << (out_dir / "figure2.csv").string() << " (" << rows.size() << " rows)\n";
    return int{exit_ok};
  });
}

int cmd_sord_run(const fs::path& config, const fs::path& out_dir, const Overrides& overrides, bool trace,
                 std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SordRunConfig cfg = parse_sord_run(prepared(config, overrides));

    std::optional<std::ofstream> trace_file;
    const fs::path trace_tmp = temp_name(out_dir, "trace.jsonl");
    sord::RunOptions options;
    if (trace) {
      fs::create_directories(out_dir);
      trace_file.emplace(trace_tmp, std::ios::binary | std::ios::trunc);
      if (!*trace_file) throw IoFailure("cannot write " + (out_dir / "trace.jsonl").string());
      options.trace = &*trace_file;
    }
    sord::Metrics m;
    try {
      m = sord::run_experiment(cfg.sim, options);
      if (trace_file) {
        trace_file->close();
        if (!*trace_file) throw IoFailure("cannot write " + (out_dir / "trace.jsonl").string());
      }
    } catch (...) {
      std::error_code ec;
      if (trace_file) fs::remove(trace_tmp, ec);
      throw;
    }

    std::ostringstream run;
    run << "variant,target_load,arrival_rate,requests,successes,success_rate,mean_load,"
           "msgs_query,msgs_reply,msgs_advert,msgs_per_request\n";
    run << sord::to_string(cfg.sim.policy.variant) << ','
        << (cfg.sim.target_load ? fixed6(*cfg.sim.target_load) : std::string()) << ','
        << fixed6(cfg.sim.effective_arrival_rate()) << ',' << m.requests << ',' << m.successes << ','
        << fixed6(m.success_rate()) << ',' << fixed6(m.mean_load) << ',' << m.messages_sent.query << ','
        << m.messages_sent.reply << ',' << m.messages_sent.advert << ',' << fixed6(m.messages_per_request())
        << '\n';

    std::ostringstream bins;
    bins << "load_lo,load_hi,requests,successes,success_rate\n";
    const double width = 1.0 / static_cast<double>(sord::Metrics::kLoadBins);
    for (std::size_t b = 0; b < sord::Metrics::kLoadBins; ++b) {
      const auto& bin = m.per_load_bin[b];
      const double rate = bin.requests == 0 ? 0.0
                                            : static_cast<double>(bin.successes) / static_cast<double>(bin.requests);
      bins << fixed6(width * static_cast<double>(b)) << ',' << fixed6(width * static_cast<double>(b + 1)) << ','
           << bin.requests << ',' << bin.successes << ',' << fixed6(rate) << '\n';
    }

    try {
      write_outputs(out_dir, {{"run.csv", run.str()},
                              {"load_bins.csv", bins.str()},
                              {"effective_config.json", dump(to_json(cfg))}});
      if (trace_file) fs::rename(trace_tmp, out_dir / "trace.jsonl");
    } catch (...) {
      std::error_code ec;
      if (trace_file) fs::remove(trace_tmp, ec);
      throw;
    }
    out << "success_rate=" << fixed6(m.success_rate()) << " mean_load=" << fixed6(m.mean_load)
        << " requests=" << m.requests << '\n';
    return int{exit_ok};
  });
}

int cmd_i3_pipeline(const fs::path& config, const fs::path& out_dir, const Overrides& overrides,
                    std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const I3PipelineConfig cfg = parse_i3_pipeline(prepared(config, overrides), config.parent_path());
    const Dataset data = load_dataset(cfg);

    const auto normals = static_cast<std::size_t>(
        std::count_if(data.test.begin(), data.test.end(), [](const auto& t) { return t.label == i3::Label::normal; }));
    if (normals == 0 || normals == data.test.size()) {
      throw i3::DatasetError("test set must contain both normal and abnormal traces");
    }
    const double normal_fraction = static_cast<double>(normals) / static_cast<double>(data.test.size());

    const i3::ImmuneModel model = i3::train(data.train, cfg.threshold_quantile);
    const std::string xml = i3::export_immunisation(model, resolve_prior(cfg.immunisation_prior, normal_fraction));

    // The evaluating node sees only the immunisation document.
    const i3::Immunisation immunised = i3::import_immunisation(xml);

    double max_tau = 0.0;
    if (cfg.thresholds.max) {
      max_tau = *cfg.thresholds.max;
    } else {
      for (const auto& t : data.test) {
        const auto f = immunised.model.normalisation.apply(i3::extract_features(t));
        max_tau = std::max(max_tau, i3::nearest_prototype_distance(immunised.model, f));
      }
      max_tau = max_tau > cfg.thresholds.min ? 1.05 * max_tau : cfg.thresholds.min + 1.0;
    }
    std::vector<double> grid(cfg.thresholds.steps);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      grid[i] = cfg.thresholds.min +
                (max_tau - cfg.thresholds.min) * static_cast<double>(i) / static_cast<double>(grid.size() - 1);
    }

    std::ostringstream csv;
    csv << "prior,threshold,fp,fn,error_rate_pct\n";
    for (const auto& spec : cfg.priors) {
      const double p = resolve_prior(spec, normal_fraction);
      const auto rows = i3::evaluate(immunised.model, data.test, grid, p);
      double best = 100.0;
      for (const auto& r : rows) {
        csv << fixed6(p) << ',' << fixed6(r.threshold) << ',' << r.false_positives << ',' << r.false_negatives
            << ',' << fixed6(r.error_rate_pct) << '\n';
        best = std::min(best, r.error_rate_pct);
      }
      out << "prior=" << fixed6(p) << " best_error_pct=" << fixed6(best) << '\n';
    }

    write_outputs(out_dir, {{"immunisation.xml", xml},
                            {"figure4.csv", csv.str()},
                            {"effective_config.json", dump(to_json(cfg))}});
    return int{exit_ok};
  });
}

int cmd_i3_classify(const fs::path& immunisation, const fs::path& trace, std::optional<double> prior,
                    std::optional<double> threshold, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(immunisation, std::ios::binary);
    if (!in) throw IoFailure("cannot read " + immunisation.string());
    std::ostringstream text;
    text << in.rdbuf();
    const i3::Immunisation imm = i3::import_immunisation(text.str());
    const auto f = i3::extract_features(i3::read_trace_csv(trace));
    const double p = prior.value_or(imm.prior);
    const auto c = i3::classify(imm.model, f, p, threshold.value_or(imm.model.threshold));
    out << (c.verdict == i3::Verdict::normal ? "normal" : "abnormal") << ',' << fixed6(c.distance) << '\n';
    return int{exit_ok};
  });
}

int cmd_topology_stats(std::size_t n, std::size_t k_near, std::size_t n_far, std::uint64_t seed,
                       std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto g = sord::build_small_world(n, k_near, n_far, seed);
    const auto s = sord::graph_stats(g);
    out << fixed6(s.clustering) << ',' << fixed6(s.avg_path) << ',' << s.diameter << '\n';
    return int{exit_ok};
  });
}

}  // namespace cli
