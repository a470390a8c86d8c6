#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "sord/topology.hpp"

namespace sord {

using Tick = std::int64_t;
using MessageId = std::uint64_t;

class ProtocolViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ResourceKind { static_resource, dynamic_resource };

struct ResourceType {
  std::string name;
  ResourceKind kind = ResourceKind::dynamic_resource;
};

/// Index of a ResourceType in a ResourceCatalog. Messages and caches carry
/// the index; the catalog resolves names for encoding.
struct ResourceId {
  std::uint16_t value = 0;
  friend bool operator==(ResourceId, ResourceId) = default;
};

class ResourceCatalog {
 public:
  ResourceId add(ResourceType type);
  const ResourceType& at(ResourceId id) const { return types_.at(id.value); }
  std::optional<ResourceId> find(const std::string& name) const;
  std::size_t size() const { return types_.size(); }

 private:
  std::vector<ResourceType> types_;
};

struct ResourceSnapshot {
  NodeId node = 0;
  ResourceId rtype;
  double availability = 0.0;  // 1 = fully free
  Tick observed_at = 0;
};

struct Query {
  MessageId id = 0;
  NodeId origin = 0;
  ResourceId rtype;
  double demand = 0.0;
  int qttl = 0;
  std::vector<NodeId> path;
};

struct QueryReply {
  MessageId query_id = 0;
  NodeId responder = 0;
  ResourceSnapshot snapshot;
  // Front is the node that must receive this reply next; back is the origin.
  std::vector<NodeId> return_path;
};

struct Advertisement {
  MessageId id = 0;
  ResourceSnapshot snapshot;
  int attl = 0;
};

template <typename Message>
struct Outgoing {
  NodeId to = 0;
  Message message;
};

struct CacheEntry {
  ResourceSnapshot snapshot;
  Tick inserted_at = 0;
};

enum class Variant { query_only, query_and_advert };

/// How candidates of equal availability are ordered. `lowest_id` is fully
/// predictable; `hashed` orders ties by a hash of (node id, message id), so
/// concurrent discoveries do not all converge on the same node.
enum class TieBreak { lowest_id, hashed };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
std::string to_string(TieBreak t);
TieBreak parse_tie_break(const std::string& s);

/// Every protocol knob. Values are defaults, not measurements.
struct PolicyConfig {
  int qttl_init = 2;
  int attl_init = 3;
  std::size_t cache_max = 32;
  Tick cache_lifetime = 600;
  double adv_delta = 0.1;
  std::size_t fanout = 4;
  Tick collect_window = 4;  // 2 * qttl_init: one full round trip
  Variant variant = Variant::query_and_advert;
  TieBreak tie_break = TieBreak::hashed;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Snapshots for one resource type, at most one per node.
class ResourceCache {
 public:
  /// Newer observed_at wins for an existing node. When a new node would
  /// exceed `capacity`, the entry with the oldest inserted_at is evicted
  /// first (ties: lowest node id). Returns the number of evictions.
  std::size_t insert(const ResourceSnapshot& snap, Tick now, std::size_t capacity);

  /// Drops entries with now - inserted_at > lifetime, then trims the oldest
  /// entries until size <= capacity. Returns the number removed.
  std::size_t evict(Tick now, Tick lifetime, std::size_t capacity);

  const CacheEntry* find(NodeId node) const;
  const std::vector<CacheEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<CacheEntry> entries_;
};

/// Duplicate-suppression set for message ids of the form origin<<32 | seq.
/// Per origin, tracks the highest sequence seen plus a 64-wide window below
/// it; anything older than the window reads as seen. The logical set never
/// shrinks.
class SeenSet {
 public:
  /// Returns true when `id` was not yet seen (and records it).
  bool insert(MessageId id);
  bool contains(MessageId id) const;
  std::size_t origins() const { return windows_.size(); }

 private:
  struct Window {
    std::uint32_t high = 0;
    std::uint64_t mask = 0;  // bit i set => seq (high - i) seen
  };
  std::unordered_map<std::uint32_t, Window> windows_;
};

constexpr MessageId make_message_id(NodeId origin, std::uint32_t seq) {
  return (static_cast<MessageId>(origin) << 32) | seq;
}

struct NodeState {
  NodeState() = default;
  NodeState(NodeId id, std::vector<NodeId> neighbours, PolicyConfig policy,
            std::size_t resource_count, std::uint64_t seed);

  NodeId id = 0;
  std::vector<NodeId> base_neighbours;
  std::vector<ResourceCache> caches;             // indexed by ResourceId
  std::vector<double> local;                     // current availability per resource
  PolicyConfig policy;
  SeenSet seen_ads;
  std::vector<std::optional<double>> last_advertised;
  std::uint64_t seed = 0;                        // fallback shuffle seed
  std::uint32_t next_seq = 0;                    // message id sequence

  MessageId next_message_id() { return make_message_id(id, next_seq++); }
};

struct QueryEffects {
  std::optional<QueryReply> reply;
  std::vector<Outgoing<Query>> forwards;
};

struct ReplyEffects {
  std::optional<QueryReply> deliver;           // set when this node is the origin
  std::optional<Outgoing<QueryReply>> forward; // next hop with the head popped

  std::optional<NodeId> forward_to() const {
    return forward ? std::optional<NodeId>(forward->to) : std::nullopt;
  }
};

/// Replies when local availability meets the demand; forwards up to `fanout`
/// copies with qttl - 1 to targets outside the path.
QueryEffects handle_query(const NodeState& node, const Query& q, Tick now);

/// Caches the carried snapshot, then either delivers (at the origin) or
/// forwards along the reverse path.
ReplyEffects handle_reply(NodeState& node, const QueryReply& r, Tick now);

/// Flood step with duplicate suppression. `from == node.id` marks the
/// originating node.
std::vector<Outgoing<Advertisement>> handle_advertisement(NodeState& node, const Advertisement& a,
                                                          NodeId from, Tick now);

/// Fresh cached candidates meeting the demand (availability desc, ties per
/// policy.tie_break), followed by the remaining base neighbours in a seeded
/// shuffle order. `salt` (the query id) varies both the hashed tie order and
/// the shuffle between calls at the same node and tick.
std::vector<NodeId> select_target(const NodeState& node, ResourceId rtype, double demand,
                                  std::span<const NodeId> exclude, Tick now,
                                  std::uint64_t salt = 0);

/// Hysteresis-gated advertisement of the node's own availability.
std::optional<Advertisement> maybe_advertise(NodeState& node, ResourceId rtype, Tick now);

std::size_t evict_stale(NodeState& node, Tick now);

/// Origin-side bookkeeping of one discovery.
struct DiscoveryRound {
  MessageId query_id = 0;
  NodeId origin = 0;
  ResourceId rtype;
  double demand = 0.0;
  Tick started_at = 0;
  Tick deadline = 0;
  std::vector<ResourceSnapshot> replies;

  /// Accepts replies for this round that arrive no later than the deadline.
  bool record(const QueryReply& reply, Tick now);
};

struct DiscoveryStart {
  DiscoveryRound round;
  std::vector<Outgoing<Query>> forwards;
};

/// Issues the initial query at the origin. The origin's own reply (if its
/// availability meets the demand) is recorded in the round directly.
DiscoveryStart run_discovery(NodeState& origin, ResourceId rtype, double demand, Tick now);

/// Best reply (max availability, ties per policy.tie_break keyed on the
/// query id); else best fresh cache entry meeting the demand; else the
/// origin itself.
NodeId conclude_discovery(const DiscoveryRound& round, const NodeState& origin, Tick now);

nlohmann::json encode(const ResourceSnapshot& s, const ResourceCatalog& catalog);
nlohmann::json encode(const Query& q, const ResourceCatalog& catalog);
nlohmann::json encode(const QueryReply& r, const ResourceCatalog& catalog);
nlohmann::json encode(const Advertisement& a, const ResourceCatalog& catalog);

}  // namespace sord
