#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "sord/protocol.hpp"

namespace sord {

/// A slot server: load = busy / capacity. Jobs that arrive while all slots
/// are busy wait in a FIFO queue and start as slots free up.
struct ServerNode {
  std::size_t busy_slots = 0;
  std::size_t capacity = 1;
  std::size_t queued = 0;

  double load() const { return static_cast<double>(busy_slots) / static_cast<double>(capacity); }
  double availability() const {
    return static_cast<double>(capacity - busy_slots) / static_cast<double>(capacity);
  }
};

struct SimConfig {
  std::size_t n = 1600;
  std::size_t k_near = 4;
  std::size_t n_far = 1;
  PolicyConfig policy;
  std::optional<double> arrival_rate;  // requests per tick, whole network
  std::optional<double> target_load;   // when set, arrival_rate is derived
  double job_duration_mean = 30000.0;
  std::size_t node_capacity = 1;
  Tick horizon = 300000;
  std::optional<Tick> warmup;          // default: 10% of horizon
  std::uint64_t seed = 1;
  Tick evict_interval = 200;           // periodic evict_stale sweep
  bool drain = true;                   // finish running jobs after the horizon
  bool warm_start = true;              // start slots busy at the offered load

  /// Throws std::invalid_argument on the first violated constraint.
  void validate() const;
  Tick effective_warmup() const { return warmup ? *warmup : horizon / 10; }
  /// target_load * n * capacity / job_duration_mean, or the explicit rate.
  double effective_arrival_rate() const;
  /// Minimum availability a request asks for: one free slot.
  double demand() const { return 1.0 / static_cast<double>(node_capacity); }
};

enum class EventKind { request_arrival, message_delivery, job_completion, round_timeout, periodic_evict };

struct MessageCounts {
  std::uint64_t query = 0;
  std::uint64_t reply = 0;
  std::uint64_t advert = 0;
  std::uint64_t total() const { return query + reply + advert; }
  friend bool operator==(const MessageCounts&, const MessageCounts&) = default;
};

struct LoadBin {
  std::uint64_t requests = 0;
  std::uint64_t successes = 0;
  friend bool operator==(const LoadBin&, const LoadBin&) = default;
};

struct Metrics {
  static constexpr std::size_t kLoadBins = 20;

  std::uint64_t requests = 0;
  std::uint64_t successes = 0;
  MessageCounts messages_sent;
  // Indexed by instantaneous network mean load at decision time, width 0.05.
  std::array<LoadBin, kLoadBins> per_load_bin{};
  double mean_load = 0.0;  // time-averaged over the metric window

  std::uint64_t jobs_started = 0;
  std::uint64_t jobs_completed = 0;
  std::uint64_t busy_at_end = 0;

  double success_rate() const {
    return requests == 0 ? 1.0 : static_cast<double>(successes) / static_cast<double>(requests);
  }
  double messages_per_request() const {
    return requests == 0 ? 0.0
                         : static_cast<double>(messages_sent.total()) / static_cast<double>(requests);
  }
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct OracleResult {
  double min_load = 0.0;
  std::vector<NodeId> argmin;
};

/// Exact global minimum load and every node attaining it.
OracleResult oracle_best(std::span<const ServerNode> nodes);

/// Success iff the chosen node's load equals the oracle minimum.
bool score_request(NodeId chosen, std::span<const ServerNode> nodes, const OracleResult& oracle);

struct RunOptions {
  std::ostream* trace = nullptr;  // JSON-lines event dump when set
};

Metrics run_experiment(const SimConfig& cfg, const RunOptions& options = {});

struct SweepRow {
  Variant variant = Variant::query_only;
  double target_load = 0.0;
  double mean_load = 0.0;
  double success_rate = 0.0;
  double stderr_success = 0.0;
  double msgs_per_request = 0.0;
  std::size_t seed_count = 0;
};

struct SweepSpec {
  std::vector<double> load_points;
  std::vector<Variant> variants{Variant::query_only, Variant::query_and_advert};
  std::size_t seeds_per_point = 5;
  std::size_t threads = 1;
};

/// Seed used for replicate `rep` of load point `load_index`. Shared across
/// variants so variants are compared on identical arrival streams.
std::uint64_t sweep_seed(std::uint64_t base, std::size_t load_index, std::size_t rep);

/// One run_experiment per (variant, load, seed); rows ordered by variant then
/// load point regardless of completion order.
std::vector<SweepRow> sweep_load(const SimConfig& base, const SweepSpec& spec);

/// `variant,target_load,mean_load,success_rate,stderr,msgs_per_request,seed_count`
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

}  // namespace sord
