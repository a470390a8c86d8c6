#include "sord/simkernel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <iomanip>
#include <map>
#include <ostream>
#include <thread>
#include <unordered_map>
#include <variant>

#include "sord/rng.hpp"

namespace sord {

void SimConfig::validate() const {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (n >= 2) {
    const bool two_ring = n == 2 && k_near == 2;
    if (k_near < 2 || k_near % 2 != 0 || (k_near >= n && !two_ring)) {
      throw std::invalid_argument("k_near must be even with 2 <= k_near < n");
    }
  }
  policy.validate();
  if (node_capacity < 1) throw std::invalid_argument("node_capacity must be >= 1");
  if (!(job_duration_mean > 0.0)) throw std::invalid_argument("job_duration_mean must be > 0");
  if (target_load && !(*target_load > 0.0 && *target_load < 1.0)) {
    throw std::invalid_argument("target_load must be in (0, 1)");
  }
  if (!target_load && !arrival_rate) {
    throw std::invalid_argument("one of target_load or arrival_rate is required");
  }
  if (arrival_rate && !(*arrival_rate > 0.0)) {
    throw std::invalid_argument("arrival_rate must be > 0");
  }
  if (horizon <= 0) throw std::invalid_argument("horizon must be > 0");
  const Tick w = effective_warmup();
  if (w < 0 || w >= horizon) throw std::invalid_argument("warmup must satisfy 0 <= warmup < horizon");
  if (evict_interval < 1) throw std::invalid_argument("evict_interval must be >= 1");
}

double SimConfig::effective_arrival_rate() const {
  if (target_load) {
    return *target_load * static_cast<double>(n) * static_cast<double>(node_capacity) /
           job_duration_mean;
  }
  return *arrival_rate;
}

OracleResult oracle_best(std::span<const ServerNode> nodes) {
  OracleResult result;
  if (nodes.empty()) return result;
  result.min_load = nodes[0].load();
  for (const auto& s : nodes) result.min_load = std::min(result.min_load, s.load());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].load() == result.min_load) result.argmin.push_back(static_cast<NodeId>(i));
  }
  return result;
}

bool score_request(NodeId chosen, std::span<const ServerNode> nodes, const OracleResult& oracle) {
  return nodes[chosen].load() == oracle.min_load;
}

namespace {

using Payload = std::variant<std::monostate, Query, QueryReply, Advertisement>;

struct Event {
  EventKind kind = EventKind::request_arrival;
  NodeId node = 0;
  NodeId from = 0;
  MessageId round = 0;  // round_timeout
  bool deferred = false;
  Payload payload;
};

Event make_event(EventKind kind, NodeId node = 0, NodeId from = 0) {
  Event ev;
  ev.kind = kind;
  ev.node = node;
  ev.from = from;
  return ev;
}

const char* kind_name(EventKind k) {
  switch (k) {
    case EventKind::request_arrival: return "request_arrival";
    case EventKind::message_delivery: return "message_delivery";
    case EventKind::job_completion: return "job_completion";
    case EventKind::round_timeout: return "round_timeout";
    case EventKind::periodic_evict: return "periodic_evict";
  }
  return "unknown";
}

struct ActiveRound {
  DiscoveryRound round;
  Tick job_duration = 0;
};

class Simulation {
 public:
  Simulation(const SimConfig& cfg, const RunOptions& options)
      : cfg_(cfg),
        options_(options),
        arrivals_(mix_seed(cfg.seed, 1)),
        origins_(mix_seed(cfg.seed, 2)),
        durations_(mix_seed(cfg.seed, 3)),
        warmup_(cfg.effective_warmup()),
        rate_(cfg.effective_arrival_rate()) {
    cpu_ = catalog_.add({"cpu", ResourceKind::dynamic_resource});
    Adjacency adj(cfg.n);
    if (cfg.n >= 2) adj = build_small_world(cfg.n, cfg.k_near, cfg.n_far, cfg.seed).adjacency;
    nodes_.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
      nodes_.emplace_back(static_cast<NodeId>(i), std::move(adj[i]), cfg.policy, catalog_.size(),
                          mix_seed(cfg.seed, 1000 + i));
    }
    servers_.assign(cfg.n, ServerNode{0, cfg.node_capacity, 0});
    waiting_.resize(cfg.n);
  }

  Metrics run() {
    if (cfg_.warm_start) seed_initial_jobs();
    for (auto& node : nodes_) advertise_if_needed(node.id, 0);
    next_arrival_time_ = arrivals_.exponential(1.0 / rate_);
    schedule_arrival();
    push(cfg_.evict_interval, make_event(EventKind::periodic_evict));

    while (!queue_.empty()) {
      auto it = queue_.begin();
      now_ = it->first;
      if (now_ >= cfg_.horizon) break;
      // Handlers may append to this bucket; index access stays valid.
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        Event ev = std::move(it->second[i]);
        dispatch(std::move(ev));
      }
      queue_.erase(it);
    }
    account_load(cfg_.horizon);

    if (cfg_.drain) drain();
    metrics_.busy_at_end = 0;
    for (const auto& s : servers_) metrics_.busy_at_end += s.busy_slots;

    const double window = static_cast<double>(cfg_.horizon - warmup_);
    metrics_.mean_load = busy_integral_ / (window * static_cast<double>(cfg_.n) *
                                           static_cast<double>(cfg_.node_capacity));
    return metrics_;
  }

 private:
  bool in_window() const { return now_ >= warmup_ && now_ < cfg_.horizon; }

  void push(Tick at, Event ev) { queue_[at].push_back(std::move(ev)); }

  void schedule_arrival() {
    const auto tick = static_cast<Tick>(std::floor(next_arrival_time_));
    if (tick >= cfg_.horizon) return;
    push(tick, make_event(EventKind::request_arrival));
  }

  template <typename Message>
  void send(NodeId from, NodeId to, Message msg) {
    if constexpr (std::is_same_v<Message, Query>) {
      if (in_window()) ++metrics_.messages_sent.query;
    } else if constexpr (std::is_same_v<Message, QueryReply>) {
      if (in_window()) ++metrics_.messages_sent.reply;
    } else {
      if (in_window()) ++metrics_.messages_sent.advert;
    }
    Event ev = make_event(EventKind::message_delivery, to, from);
    ev.payload = std::move(msg);
    push(now_ + 1, std::move(ev));
  }

  void trace(const Event& ev) {
    if (!options_.trace) return;
    nlohmann::json j{{"at", now_}, {"kind", kind_name(ev.kind)}, {"node", ev.node}};
    if (auto* q = std::get_if<Query>(&ev.payload)) {
      j["message"] = encode(*q, catalog_);
    } else if (auto* r = std::get_if<QueryReply>(&ev.payload)) {
      j["message"] = encode(*r, catalog_);
    } else if (auto* a = std::get_if<Advertisement>(&ev.payload)) {
      j["message"] = encode(*a, catalog_);
      j["from"] = ev.from;
    }
    if (ev.kind == EventKind::round_timeout) j["round"] = ev.round;
    *options_.trace << j.dump() << '\n';
  }

  void dispatch(Event ev) {
    switch (ev.kind) {
      case EventKind::request_arrival: trace(ev); on_arrival(); break;
      case EventKind::message_delivery: trace(ev); on_message(ev); break;
      case EventKind::job_completion: trace(ev); on_completion(ev.node); break;
      case EventKind::round_timeout:
        // Yield once so replies arriving on the deadline tick are collected.
        if (!ev.deferred) {
          ev.deferred = true;
          push(now_, std::move(ev));
        } else {
          trace(ev);
          on_timeout(ev.round);
        }
        break;
      case EventKind::periodic_evict:
        trace(ev);
        for (auto& node : nodes_) evict_stale(node, now_);
        push(now_ + cfg_.evict_interval, make_event(EventKind::periodic_evict));
        break;
    }
  }

  void on_arrival() {
    const auto origin = static_cast<NodeId>(origins_.index(cfg_.n));
    const Tick duration = draw_duration(durations_);

    DiscoveryStart start = run_discovery(nodes_[origin], cpu_, cfg_.demand(), now_);
    const MessageId id = start.round.query_id;
    const Tick deadline = start.round.deadline;
    for (auto& fwd : start.forwards) send(origin, fwd.to, std::move(fwd.message));
    rounds_.emplace(id, ActiveRound{std::move(start.round), duration});
    Event timeout = make_event(EventKind::round_timeout, origin);
    timeout.round = id;
    push(deadline, std::move(timeout));

    next_arrival_time_ += arrivals_.exponential(1.0 / rate_);
    schedule_arrival();
  }

  void on_message(Event& ev) {
    NodeState& node = nodes_[ev.node];
    if (auto* q = std::get_if<Query>(&ev.payload)) {
      QueryEffects fx = handle_query(node, *q, now_);
      if (fx.reply) {
        const NodeId hop = fx.reply->return_path.front();
        send(node.id, hop, std::move(*fx.reply));
      }
      for (auto& fwd : fx.forwards) send(node.id, fwd.to, std::move(fwd.message));
    } else if (auto* r = std::get_if<QueryReply>(&ev.payload)) {
      ReplyEffects fx = handle_reply(node, *r, now_);
      if (fx.deliver) {
        auto it = rounds_.find(fx.deliver->query_id);
        if (it != rounds_.end()) it->second.round.record(*fx.deliver, now_);
      } else if (fx.forward) {
        send(node.id, fx.forward->to, std::move(fx.forward->message));
      }
    } else if (auto* a = std::get_if<Advertisement>(&ev.payload)) {
      for (auto& out : handle_advertisement(node, *a, ev.from, now_)) {
        send(node.id, out.to, std::move(out.message));
      }
    }
  }

  void on_timeout(MessageId id) {
    auto it = rounds_.find(id);
    if (it == rounds_.end()) return;
    ActiveRound active = std::move(it->second);
    rounds_.erase(it);

    const NodeId origin = active.round.origin;
    const NodeId chosen = conclude_discovery(active.round, nodes_[origin], now_);
    if (in_window()) {
      const OracleResult oracle = oracle_best(servers_);
      const bool ok = score_request(chosen, servers_, oracle);
      ++metrics_.requests;
      if (ok) ++metrics_.successes;
      const double net_load = static_cast<double>(total_busy_) /
                              static_cast<double>(cfg_.n * cfg_.node_capacity);
      auto bin = static_cast<std::size_t>(net_load * static_cast<double>(Metrics::kLoadBins));
      bin = std::min(bin, Metrics::kLoadBins - 1);
      ++metrics_.per_load_bin[bin].requests;
      if (ok) ++metrics_.per_load_bin[bin].successes;
    }
    place_job(chosen, active.job_duration);
  }

  // Starts each slot busy with probability equal to the offered load; the
  // exponential residual duration keeps the initial state stationary.
  void seed_initial_jobs() {
    Rng rng(mix_seed(cfg_.seed, 4));
    const double rho = std::min(0.999, rate_ * cfg_.job_duration_mean /
                                           static_cast<double>(cfg_.n * cfg_.node_capacity));
    for (std::size_t i = 0; i < cfg_.n; ++i) {
      for (std::size_t slot = 0; slot < cfg_.node_capacity; ++slot) {
        if (rng.uniform() < rho) start_job(static_cast<NodeId>(i), draw_duration(rng));
      }
      nodes_[i].local[cpu_.value] = servers_[i].availability();
    }
  }

  Tick draw_duration(Rng& rng) const {
    return std::max<Tick>(1, static_cast<Tick>(std::llround(rng.exponential(cfg_.job_duration_mean))));
  }

  void place_job(NodeId target, Tick duration) {
    ServerNode& s = servers_[target];
    if (s.busy_slots < s.capacity) {
      start_job(target, duration);
      on_load_change(target);
    } else {
      waiting_[target].push_back(duration);
      ++s.queued;
    }
  }

  void start_job(NodeId target, Tick duration) {
    account_load(now_);
    ++servers_[target].busy_slots;
    ++total_busy_;
    ++metrics_.jobs_started;
    push(now_ + duration, make_event(EventKind::job_completion, target));
  }

  void on_completion(NodeId target) {
    account_load(now_);
    ServerNode& s = servers_[target];
    --s.busy_slots;
    --total_busy_;
    ++metrics_.jobs_completed;
    if (!waiting_[target].empty()) {
      const Tick duration = waiting_[target].front();
      waiting_[target].pop_front();
      --s.queued;
      start_job(target, duration);
    }
    if (now_ < cfg_.horizon) on_load_change(target);
  }

  void on_load_change(NodeId target) {
    nodes_[target].local[cpu_.value] = servers_[target].availability();
    advertise_if_needed(target, now_);
  }

  void advertise_if_needed(NodeId target, Tick at) {
    NodeState& node = nodes_[target];
    auto ad = maybe_advertise(node, cpu_, at);
    if (!ad) return;
    for (auto& out : handle_advertisement(node, *ad, node.id, at)) {
      send(node.id, out.to, std::move(out.message));
    }
  }

  // Integrates busy slots over [warmup, horizon).
  void account_load(Tick until) {
    const Tick lo = std::max(last_account_, warmup_);
    const Tick hi = std::min(until, cfg_.horizon);
    if (hi > lo) busy_integral_ += static_cast<double>(total_busy_) * static_cast<double>(hi - lo);
    last_account_ = std::max(last_account_, until);
  }

  void drain() {
    // Only running and queued jobs remain; protocol traffic has stopped.
    while (!queue_.empty()) {
      auto it = queue_.begin();
      now_ = it->first;
      for (std::size_t i = 0; i < it->second.size(); ++i) {
        if (it->second[i].kind == EventKind::job_completion) on_completion(it->second[i].node);
      }
      queue_.erase(it);
    }
  }

  SimConfig cfg_;
  RunOptions options_;
  ResourceCatalog catalog_;
  ResourceId cpu_;
  std::vector<NodeState> nodes_;
  std::vector<ServerNode> servers_;
  std::vector<std::deque<Tick>> waiting_;
  std::map<Tick, std::vector<Event>> queue_;
  std::unordered_map<MessageId, ActiveRound> rounds_;
  Rng arrivals_;
  Rng origins_;
  Rng durations_;
  Tick warmup_;
  double rate_;
  double next_arrival_time_ = 0.0;
  Tick now_ = 0;
  std::uint64_t total_busy_ = 0;
  Tick last_account_ = 0;
  double busy_integral_ = 0.0;
  Metrics metrics_;
};

}  // namespace

Metrics run_experiment(const SimConfig& cfg, const RunOptions& options) {
  cfg.validate();
  Simulation sim(cfg, options);
  return sim.run();
}

std::uint64_t sweep_seed(std::uint64_t base, std::size_t load_index, std::size_t rep) {
  return mix_seed(mix_seed(base, load_index), rep);
}

std::vector<SweepRow> sweep_load(const SimConfig& base, const SweepSpec& spec) {
  for (double p : spec.load_points) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("load points must lie in (0, 1)");
  }
  if (spec.seeds_per_point < 1) throw std::invalid_argument("seeds_per_point must be >= 1");

  struct Cell {
    SimConfig cfg;
    Metrics metrics;
  };
  std::vector<Cell> cells;
  for (Variant v : spec.variants) {
    for (std::size_t li = 0; li < spec.load_points.size(); ++li) {
      for (std::size_t rep = 0; rep < spec.seeds_per_point; ++rep) {
        SimConfig cfg = base;
        cfg.policy.variant = v;
        cfg.target_load = spec.load_points[li];
        cfg.arrival_rate.reset();
        cfg.seed = sweep_seed(base.seed, li, rep);
        cfg.validate();
        cells.push_back({cfg, {}});
      }
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      cells[i].metrics = run_experiment(cells[i].cfg);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(spec.threads, cells.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  std::vector<SweepRow> rows;
  const std::size_t k = spec.seeds_per_point;
  for (std::size_t start = 0; start < cells.size(); start += k) {
    SweepRow row;
    row.variant = cells[start].cfg.policy.variant;
    row.target_load = *cells[start].cfg.target_load;
    row.seed_count = k;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = start; i < start + k; ++i) {
      const Metrics& m = cells[i].metrics;
      const double rate = m.success_rate();
      sum += rate;
      sum_sq += rate * rate;
      row.mean_load += m.mean_load;
      row.msgs_per_request += m.messages_per_request();
    }
    const double kd = static_cast<double>(k);
    row.success_rate = sum / kd;
    row.mean_load /= kd;
    row.msgs_per_request /= kd;
    if (k > 1) {
      const double var = std::max(0.0, (sum_sq - kd * row.success_rate * row.success_rate) / (kd - 1));
      row.stderr_success = std::sqrt(var / kd);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "variant,target_load,mean_load,success_rate,stderr,msgs_per_request,seed_count\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << r.target_load << ',' << r.mean_load << ','
        << r.success_rate << ',' << r.stderr_success << ',' << r.msgs_per_request << ','
        << r.seed_count << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

}  // namespace sord
