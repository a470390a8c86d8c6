#include "cli/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>

namespace cli {

namespace {

namespace fs = std::filesystem;

/// One JSON object being consumed; finish() rejects whatever was not read.
class Section {
 public:
  Section(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
    if (!j.is_object()) throw ValidationError(label() + " must be an object");
  }

  bool has(const std::string& key) const { return j_->contains(key); }

  Section child(const std::string& key) {
    used_.insert(key);
    static const json empty = json::object();
    auto it = j_->find(key);
    return Section(it == j_->end() ? empty : *it, join(key));
  }

  void read(const std::string& key, std::size_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer() || v->get<std::int64_t>() < 0) fail(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }

  void read(const std::string& key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      out = v->get<int>();
    }
  }

  void read(const std::string& key, std::int64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      out = v->get<std::int64_t>();
    }
  }

  void read_seed(const std::string& key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }

  void read(const std::string& key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }

  void read(const std::string& key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }

  void read(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    if (const json* v = take(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      T value{};
      Section one(*j_, path_);
      one.read(key, value);
      out = value;
    }
  }

  const json* take(const std::string& key) {
    used_.insert(key);
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& expected) const {
    throw ValidationError(join(key) + " must be " + expected);
  }

  void finish() const {
    for (const auto& [key, value] : j_->items()) {
      if (!used_.count(key)) throw ValidationError("unknown key " + join(key));
    }
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

template <typename F>
void rethrow_as_validation(F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

void expect_kind(Section& root, const std::string& kind) {
  std::string got;
  root.read("kind", got);
  if (got != kind) throw ValidationError("kind must be \"" + kind + "\" (got \"" + got + "\")");
}

void read_policy(Section s, sord::PolicyConfig& p) {
  s.read("qttl_init", p.qttl_init);
  s.read("attl_init", p.attl_init);
  s.read("cache_max", p.cache_max);
  s.read("cache_lifetime", p.cache_lifetime);
  s.read("adv_delta", p.adv_delta);
  s.read("fanout", p.fanout);
  s.read("collect_window", p.collect_window);
  std::string variant = sord::to_string(p.variant);
  s.read("variant", variant);
  std::string tie = sord::to_string(p.tie_break);
  s.read("tie_break", tie);
  s.finish();
  rethrow_as_validation([&] {
    p.variant = sord::parse_variant(variant);
    p.tie_break = sord::parse_tie_break(tie);
  });
}

json policy_json(const sord::PolicyConfig& p) {
  return {{"qttl_init", p.qttl_init},
          {"attl_init", p.attl_init},
          {"cache_max", p.cache_max},
          {"cache_lifetime", p.cache_lifetime},
          {"adv_delta", p.adv_delta},
          {"fanout", p.fanout},
          {"collect_window", p.collect_window},
          {"variant", sord::to_string(p.variant)},
          {"tie_break", sord::to_string(p.tie_break)}};
}

void read_sim(Section s, sord::SimConfig& c, bool allow_load) {
  s.read("n", c.n);
  s.read("k_near", c.k_near);
  s.read("n_far", c.n_far);
  if (allow_load) {
    s.read("arrival_rate", c.arrival_rate);
    s.read("target_load", c.target_load);
  } else if (s.has("target_load") || s.has("arrival_rate")) {
    throw ValidationError(s.join("target_load") + " and arrival_rate are set per load point; use sweep.load_points");
  }
  s.read("job_duration_mean", c.job_duration_mean);
  s.read("node_capacity", c.node_capacity);
  s.read("horizon", c.horizon);
  s.read("warmup", c.warmup);
  s.read("evict_interval", c.evict_interval);
  s.read("drain", c.drain);
  s.read("warm_start", c.warm_start);
  s.finish();
}

json opt(const auto& v) { return v ? json(*v) : json(nullptr); }

json sim_json(const sord::SimConfig& c, bool with_load) {
  json j = {{"n", c.n},
            {"k_near", c.k_near},
            {"n_far", c.n_far},
            {"job_duration_mean", c.job_duration_mean},
            {"node_capacity", c.node_capacity},
            {"horizon", c.horizon},
            {"warmup", opt(c.warmup)},
            {"evict_interval", c.evict_interval},
            {"drain", c.drain},
            {"warm_start", c.warm_start}};
  if (with_load) {
    j["target_load"] = opt(c.target_load);
    j["arrival_rate"] = opt(c.arrival_rate);
  }
  return j;
}

void read_profile(Section s, i3::TraceProfile& p) {
  s.read("mean", p.mean);
  s.read("jitter", p.jitter);
  s.read("ar_coeff", p.ar_coeff);
  s.read("mean_spread", p.mean_spread);
  s.read("burst_prob", p.burst_prob);
  s.read("burst_size", p.burst_size);
  s.finish();
  rethrow_as_validation([&] { p.validate(); });
}

json profile_json(const i3::TraceProfile& p) {
  return {{"mean", p.mean},         {"jitter", p.jitter},         {"ar_coeff", p.ar_coeff},
          {"mean_spread", p.mean_spread}, {"burst_prob", p.burst_prob}, {"burst_size", p.burst_size}};
}

PriorSpec read_prior(const json& v, const std::string& where) {
  if (v.is_number()) {
    const double p = v.get<double>();
    if (!(p > 0.0 && p < 1.0)) throw ValidationError(where + " must lie in (0, 1)");
    return p;
  }
  if (v.is_string() && v.get<std::string>() == "tuned") return std::string("tuned");
  throw ValidationError(where + " must be a number in (0, 1) or \"tuned\"");
}

json prior_json(const PriorSpec& p) {
  return std::holds_alternative<double>(p) ? json(std::get<double>(p)) : json(std::get<std::string>(p));
}

/// Parses `text` as JSON when it is a JSON scalar/array/object, else keeps it as a string.
json parse_value(const std::string& text) {
  json v = json::parse(text, nullptr, false);
  return v.is_discarded() ? json(text) : v;
}

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    throw ValidationError(where + " must be a non-negative integer (got '" + text + "')");
  }
  return v;
}

}  // namespace

json load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot read config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ValidationError(path.string() + " is not valid JSON");
  if (!doc.is_object()) throw ValidationError(path.string() + " must hold a JSON object");
  return doc;
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("SORD_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  return parse_seed(raw, "SORD_SEED");
}

void apply_overrides(json& doc, const Overrides& overrides) {
  for (const auto& item : overrides.set) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ValidationError("--set expects key=value (got '" + item + "')");
    }
    json* node = &doc;
    std::string key = item.substr(0, eq);
    std::size_t start = 0;
    for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
      const std::string part = key.substr(start, dot - start);
      if (!node->contains(part)) (*node)[part] = json::object();
      node = &(*node)[part];
      if (!node->is_object()) throw ValidationError("--set " + key + ": '" + part + "' is not a section");
    }
    (*node)[key.substr(start)] = parse_value(item.substr(eq + 1));
  }
  if (overrides.seed) {
    doc["seed"] = *overrides.seed;
  } else if (auto s = env_seed()) {
    doc["seed"] = *s;
  }
}

SordSweepConfig parse_sord_sweep(const json& doc) {
  SordSweepConfig c;
  Section root(doc, "");
  expect_kind(root, "sord_sweep");
  root.read_seed("seed", c.base.seed);
  read_sim(root.child("sim"), c.base, false);
  read_policy(root.child("policy"), c.base.policy);

  Section sweep = root.child("sweep");
  if (const json* pts = sweep.take("load_points")) {
    if (!pts->is_array() || pts->empty()) sweep.fail("load_points", "a non-empty array of numbers");
    c.sweep.load_points.clear();
    for (const auto& p : *pts) {
      if (!p.is_number()) sweep.fail("load_points", "a non-empty array of numbers");
      c.sweep.load_points.push_back(p.get<double>());
    }
  }
  if (const json* vs = sweep.take("variants")) {
    if (!vs->is_array() || vs->empty()) sweep.fail("variants", "a non-empty array of variant names");
    c.sweep.variants.clear();
    for (const auto& v : *vs) {
      if (!v.is_string()) sweep.fail("variants", "a non-empty array of variant names");
      rethrow_as_validation([&] { c.sweep.variants.push_back(sord::parse_variant(v.get<std::string>())); });
    }
  }
  sweep.read("seeds_per_point", c.sweep.seeds_per_point);
  sweep.read("threads", c.sweep.threads);
  sweep.finish();
  root.finish();

  for (double p : c.sweep.load_points) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("sweep.load_points must lie in (0, 1)");
  }
  if (c.sweep.seeds_per_point < 1) throw ValidationError("sweep.seeds_per_point must be >= 1");
  rethrow_as_validation([&] {
    sord::SimConfig probe = c.base;
    probe.target_load = c.sweep.load_points.front();
    probe.validate();
    probe.policy.validate();
  });
  return c;
}

SordRunConfig parse_sord_run(const json& doc) {
  SordRunConfig c;
  Section root(doc, "");
  expect_kind(root, "sord_run");
  root.read_seed("seed", c.sim.seed);
  read_sim(root.child("sim"), c.sim, true);
  read_policy(root.child("policy"), c.sim.policy);
  root.finish();
  rethrow_as_validation([&] {
    c.sim.validate();
    c.sim.policy.validate();
  });
  return c;
}

I3PipelineConfig parse_i3_pipeline(const json& doc, const fs::path& base_dir) {
  I3PipelineConfig c;
  Section root(doc, "");
  expect_kind(root, "i3_pipeline");
  root.read_seed("seed", c.seed);
  root.read("threshold_quantile", c.threshold_quantile);
  root.read("source", c.source);

  Section syn = root.child("synthetic");
  syn.read("length", c.length);
  syn.read("train_normal", c.train_normal);
  syn.read("test_normal", c.test_normal);
  syn.read("test_abnormal", c.test_abnormal);
  read_profile(syn.child("normal"), c.normal_profile);
  read_profile(syn.child("abnormal"), c.abnormal_profile);
  syn.finish();

  Section man = root.child("manifest");
  for (auto [key, slot] : {std::pair{"train", &c.train_manifest}, std::pair{"test", &c.test_manifest}}) {
    std::optional<std::string> p;
    man.read(key, p);
    if (p) {
      fs::path path(*p);
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      *slot = fs::absolute(path).lexically_normal();
    }
  }
  man.finish();

  Section grid = root.child("thresholds");
  grid.read("min", c.thresholds.min);
  grid.read("max", c.thresholds.max);
  grid.read("steps", c.thresholds.steps);
  grid.finish();

  if (const json* ps = root.take("priors")) {
    if (!ps->is_array() || ps->empty()) root.fail("priors", "a non-empty array");
    c.priors.clear();
    for (const auto& p : *ps) c.priors.push_back(read_prior(p, "priors[]"));
  }
  if (const json* p = root.take("immunisation_prior")) c.immunisation_prior = read_prior(*p, "immunisation_prior");
  root.finish();

  if (!(c.threshold_quantile > 0.0 && c.threshold_quantile <= 1.0)) {
    throw ValidationError("threshold_quantile must lie in (0, 1]");
  }
  if (c.source == "synthetic") {
    if (c.length < 2) throw ValidationError("synthetic.length must be >= 2");
    if (c.train_normal < 2) throw ValidationError("synthetic.train_normal must be >= 2");
  } else if (c.source == "manifest") {
    if (!c.train_manifest || !c.test_manifest) {
      throw ValidationError("source \"manifest\" needs manifest.train and manifest.test");
    }
  } else {
    throw ValidationError("source must be \"synthetic\" or \"manifest\"");
  }
  if (c.thresholds.steps < 2) throw ValidationError("thresholds.steps must be >= 2");
  if (!(c.thresholds.min >= 0.0)) throw ValidationError("thresholds.min must be >= 0");
  if (c.thresholds.max && !(*c.thresholds.max > c.thresholds.min)) {
    throw ValidationError("thresholds.max must exceed thresholds.min");
  }
  return c;
}

json to_json(const SordSweepConfig& c) {
  json variants = json::array();
  for (auto v : c.sweep.variants) variants.push_back(sord::to_string(v));
  return {{"kind", "sord_sweep"},
          {"seed", c.base.seed},
          {"sim", sim_json(c.base, false)},
          {"policy", policy_json(c.base.policy)},
          {"sweep",
           {{"load_points", c.sweep.load_points},
            {"variants", variants},
            {"seeds_per_point", c.sweep.seeds_per_point},
            {"threads", c.sweep.threads}}}};
}

json to_json(const SordRunConfig& c) {
  return {{"kind", "sord_run"},
          {"seed", c.sim.seed},
          {"sim", sim_json(c.sim, true)},
          {"policy", policy_json(c.sim.policy)}};
}

json to_json(const I3PipelineConfig& c) {
  json priors = json::array();
  for (const auto& p : c.priors) priors.push_back(prior_json(p));
  auto path_or_null = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  return {{"kind", "i3_pipeline"},
          {"seed", c.seed},
          {"threshold_quantile", c.threshold_quantile},
          {"source", c.source},
          {"synthetic",
           {{"length", c.length},
            {"train_normal", c.train_normal},
            {"test_normal", c.test_normal},
            {"test_abnormal", c.test_abnormal},
            {"normal", profile_json(c.normal_profile)},
            {"abnormal", profile_json(c.abnormal_profile)}}},
          {"manifest", {{"train", path_or_null(c.train_manifest)}, {"test", path_or_null(c.test_manifest)}}},
          {"thresholds", {{"min", c.thresholds.min}, {"max", opt(c.thresholds.max)}, {"steps", c.thresholds.steps}}},
          {"priors", priors},
          {"immunisation_prior", prior_json(c.immunisation_prior)}};
}

}  // namespace cli
