#include "sord/protocol.hpp"

#include <algorithm>
#include <cmath>

#include "sord/rng.hpp"

namespace sord {

namespace {

bool contains(std::span<const NodeId> ids, NodeId id) {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

bool expired(const CacheEntry& e, Tick now, Tick lifetime) {
  return now - e.inserted_at > lifetime;
}

void check_path(const Query& q) {
  if (q.qttl < 0) throw ProtocolViolation("query " + std::to_string(q.id) + " has negative qttl");
  if (q.path.empty() || q.path.front() != q.origin) {
    throw ProtocolViolation("query " + std::to_string(q.id) + " path does not start at origin");
  }
  std::vector<NodeId> sorted = q.path;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ProtocolViolation("query " + std::to_string(q.id) + " has a cyclic path");
  }
}

// Strict weak order on (availability desc, tie key asc).
struct CandidateOrder {
  TieBreak tie_break;
  std::uint64_t salt;

  std::uint64_t key(NodeId node) const {
    return tie_break == TieBreak::hashed ? mix_seed(node, salt) : node;
  }
  bool better(double avail_a, NodeId a, double avail_b, NodeId b) const {
    if (avail_a != avail_b) return avail_a > avail_b;
    const auto ka = key(a), kb = key(b);
    return ka != kb ? ka < kb : a < b;
  }
};

ResourceSnapshot own_snapshot(const NodeState& node, ResourceId rtype, Tick now) {
  return ResourceSnapshot{node.id, rtype, node.local.at(rtype.value), now};
}

}  // namespace

ResourceId ResourceCatalog::add(ResourceType type) {
  if (type.name.empty()) throw std::invalid_argument("resource type name must be non-empty");
  if (find(type.name)) throw std::invalid_argument("duplicate resource type " + type.name);
  types_.push_back(std::move(type));
  return ResourceId{static_cast<std::uint16_t>(types_.size() - 1)};
}

std::optional<ResourceId> ResourceCatalog::find(const std::string& name) const {
  for (std::size_t i = 0; i < types_.size(); ++i) {
    if (types_[i].name == name) return ResourceId{static_cast<std::uint16_t>(i)};
  }
  return std::nullopt;
}

std::string to_string(TieBreak t) {
  return t == TieBreak::lowest_id ? "lowest_id" : "hashed";
}

TieBreak parse_tie_break(const std::string& s) {
  if (s == "lowest_id") return TieBreak::lowest_id;
  if (s == "hashed") return TieBreak::hashed;
  throw std::invalid_argument("unknown tie_break '" + s + "'");
}

std::string to_string(Variant v) {
  return v == Variant::query_only ? "query_only" : "query_and_advert";
}

Variant parse_variant(const std::string& s) {
  if (s == "query_only") return Variant::query_only;
  if (s == "query_and_advert") return Variant::query_and_advert;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

void PolicyConfig::validate() const {
  if (qttl_init < 0) throw std::invalid_argument("policy.qttl_init must be >= 0");
  if (attl_init < 0) throw std::invalid_argument("policy.attl_init must be >= 0");
  if (cache_lifetime < 0) throw std::invalid_argument("policy.cache_lifetime must be >= 0");
  if (collect_window < 0) throw std::invalid_argument("policy.collect_window must be >= 0");
  if (!(adv_delta > 0.0 && adv_delta <= 1.0)) {
    throw std::invalid_argument("policy.adv_delta must be in (0, 1]");
  }
  if (fanout < 1) throw std::invalid_argument("policy.fanout must be >= 1");
}

// --- ResourceCache -------------------------------------------------------

std::size_t ResourceCache::insert(const ResourceSnapshot& snap, Tick now, std::size_t capacity) {
  for (auto& e : entries_) {
    if (e.snapshot.node == snap.node) {
      if (snap.observed_at >= e.snapshot.observed_at) e = CacheEntry{snap, now};
      return 0;
    }
  }
  if (capacity == 0) return 0;
  std::size_t evicted = 0;
  while (entries_.size() >= capacity) {
    auto oldest = std::min_element(entries_.begin(), entries_.end(),
                                   [](const CacheEntry& a, const CacheEntry& b) {
                                     if (a.inserted_at != b.inserted_at) {
                                       return a.inserted_at < b.inserted_at;
                                     }
                                     return a.snapshot.node < b.snapshot.node;
                                   });
    entries_.erase(oldest);
    ++evicted;
  }
  entries_.push_back(CacheEntry{snap, now});
  return evicted;
}

std::size_t ResourceCache::evict(Tick now, Tick lifetime, std::size_t capacity) {
  const std::size_t before = entries_.size();
  std::erase_if(entries_, [&](const CacheEntry& e) { return expired(e, now, lifetime); });
  if (entries_.size() > capacity) {
    std::stable_sort(entries_.begin(), entries_.end(), [](const CacheEntry& a, const CacheEntry& b) {
      if (a.inserted_at != b.inserted_at) return a.inserted_at < b.inserted_at;
      return a.snapshot.node < b.snapshot.node;
    });
    entries_.erase(entries_.begin(),
                   entries_.begin() + static_cast<std::ptrdiff_t>(entries_.size() - capacity));
  }
  return before - entries_.size();
}

const CacheEntry* ResourceCache::find(NodeId node) const {
  for (const auto& e : entries_) {
    if (e.snapshot.node == node) return &e;
  }
  return nullptr;
}

// --- SeenSet -------------------------------------------------------------

bool SeenSet::insert(MessageId id) {
  const auto origin = static_cast<std::uint32_t>(id >> 32);
  const auto seq = static_cast<std::uint32_t>(id & 0xffffffffULL);
  auto [it, fresh] = windows_.try_emplace(origin);
  Window& w = it->second;
  if (fresh) {
    w.high = seq;
    w.mask = 1;
    return true;
  }
  if (seq > w.high) {
    const std::uint32_t shift = seq - w.high;
    w.mask = shift >= 64 ? 0 : (w.mask << shift);
    w.mask |= 1;
    w.high = seq;
    return true;
  }
  const std::uint32_t back = w.high - seq;
  if (back >= 64) return false;
  const std::uint64_t bit = 1ULL << back;
  if (w.mask & bit) return false;
  w.mask |= bit;
  return true;
}

bool SeenSet::contains(MessageId id) const {
  const auto origin = static_cast<std::uint32_t>(id >> 32);
  const auto seq = static_cast<std::uint32_t>(id & 0xffffffffULL);
  auto it = windows_.find(origin);
  if (it == windows_.end()) return false;
  const Window& w = it->second;
  if (seq > w.high) return false;
  const std::uint32_t back = w.high - seq;
  return back >= 64 || (w.mask & (1ULL << back)) != 0;
}

// --- NodeState -----------------------------------------------------------

NodeState::NodeState(NodeId node_id, std::vector<NodeId> neighbours, PolicyConfig pol,
                     std::size_t resource_count, std::uint64_t node_seed)
    : id(node_id),
      base_neighbours(std::move(neighbours)),
      caches(resource_count),
      local(resource_count, 1.0),
      policy(pol),
      last_advertised(resource_count),
      seed(node_seed) {}

// --- handlers ------------------------------------------------------------

std::vector<NodeId> select_target(const NodeState& node, ResourceId rtype, double demand,
                                  std::span<const NodeId> exclude, Tick now, std::uint64_t salt) {
  std::vector<const CacheEntry*> cached;
  for (const auto& e : node.caches.at(rtype.value).entries()) {
    if (expired(e, now, node.policy.cache_lifetime)) continue;
    if (e.snapshot.availability < demand) continue;
    if (e.snapshot.node == node.id || contains(exclude, e.snapshot.node)) continue;
    cached.push_back(&e);
  }
  const CandidateOrder order{node.policy.tie_break, salt};
  std::sort(cached.begin(), cached.end(), [&](const CacheEntry* a, const CacheEntry* b) {
    return order.better(a->snapshot.availability, a->snapshot.node, b->snapshot.availability,
                        b->snapshot.node);
  });

  std::vector<NodeId> out;
  out.reserve(cached.size() + node.base_neighbours.size());
  for (const CacheEntry* e : cached) out.push_back(e->snapshot.node);

  std::vector<NodeId> fallback;
  for (NodeId nb : node.base_neighbours) {
    if (contains(exclude, nb) || contains(out, nb)) continue;
    fallback.push_back(nb);
  }
  Rng rng(mix_seed(mix_seed(node.seed, static_cast<std::uint64_t>(now)), salt));
  rng.shuffle(fallback);
  out.insert(out.end(), fallback.begin(), fallback.end());
  return out;
}

QueryEffects handle_query(const NodeState& node, const Query& q, Tick now) {
  check_path(q);
  if (q.path.back() != node.id) {
    throw ProtocolViolation("query " + std::to_string(q.id) + " delivered to node " +
                            std::to_string(node.id) + " which is not the path tail");
  }

  QueryEffects fx;
  if (node.local.at(q.rtype.value) >= q.demand) {
    QueryReply reply;
    reply.query_id = q.id;
    reply.responder = node.id;
    reply.snapshot = own_snapshot(node, q.rtype, now);
    if (q.path.size() == 1) {
      reply.return_path = {node.id};
    } else {
      reply.return_path.assign(q.path.rbegin() + 1, q.path.rend());
    }
    fx.reply = std::move(reply);
  }

  if (q.qttl > 0) {
    const auto targets = select_target(node, q.rtype, q.demand, q.path, now, q.id);
    const std::size_t count = std::min(targets.size(), node.policy.fanout);
    fx.forwards.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Query copy = q;
      copy.qttl = q.qttl - 1;
      copy.path.push_back(targets[i]);
      fx.forwards.push_back({targets[i], std::move(copy)});
    }
  }
  return fx;
}

ReplyEffects handle_reply(NodeState& node, const QueryReply& r, Tick now) {
  if (r.return_path.empty() || r.return_path.front() != node.id) {
    throw ProtocolViolation("reply to query " + std::to_string(r.query_id) +
                            " received by node " + std::to_string(node.id) +
                            " which is not on its return path");
  }
  if (r.snapshot.node != r.responder) {
    throw ProtocolViolation("reply snapshot does not belong to its responder");
  }
  if (r.snapshot.node != node.id) {
    node.caches.at(r.snapshot.rtype.value).insert(r.snapshot, now, node.policy.cache_max);
  }

  ReplyEffects fx;
  if (r.return_path.size() == 1) {
    fx.deliver = r;
  } else {
    QueryReply next = r;
    next.return_path.erase(next.return_path.begin());
    const NodeId hop = next.return_path.front();
    fx.forward = Outgoing<QueryReply>{hop, std::move(next)};
  }
  return fx;
}

std::vector<Outgoing<Advertisement>> handle_advertisement(NodeState& node, const Advertisement& a,
                                                          NodeId from, Tick now) {
  if (a.attl < 0) {
    throw ProtocolViolation("advertisement " + std::to_string(a.id) + " has negative attl");
  }
  std::vector<Outgoing<Advertisement>> out;
  if (!node.seen_ads.insert(a.id)) return out;

  if (a.snapshot.node != node.id) {
    node.caches.at(a.snapshot.rtype.value).insert(a.snapshot, now, node.policy.cache_max);
  }
  if (a.attl == 0) return out;

  out.reserve(node.base_neighbours.size());
  for (NodeId nb : node.base_neighbours) {
    if (nb == from) continue;
    Advertisement copy = a;
    copy.attl = a.attl - 1;
    out.push_back({nb, copy});
  }
  return out;
}

std::optional<Advertisement> maybe_advertise(NodeState& node, ResourceId rtype, Tick now) {
  if (node.policy.variant != Variant::query_and_advert) return std::nullopt;
  const double current = node.local.at(rtype.value);
  auto& last = node.last_advertised.at(rtype.value);
  if (last && std::abs(current - *last) < node.policy.adv_delta) return std::nullopt;
  last = current;
  return Advertisement{node.next_message_id(), own_snapshot(node, rtype, now),
                       node.policy.attl_init};
}

std::size_t evict_stale(NodeState& node, Tick now) {
  std::size_t removed = 0;
  for (auto& cache : node.caches) {
    removed += cache.evict(now, node.policy.cache_lifetime, node.policy.cache_max);
  }
  return removed;
}

// --- discovery rounds ----------------------------------------------------

bool DiscoveryRound::record(const QueryReply& reply, Tick now) {
  if (reply.query_id != query_id || now > deadline) return false;
  replies.push_back(reply.snapshot);
  return true;
}

DiscoveryStart run_discovery(NodeState& origin, ResourceId rtype, double demand, Tick now) {
  Query q;
  q.id = origin.next_message_id();
  q.origin = origin.id;
  q.rtype = rtype;
  q.demand = demand;
  q.qttl = origin.policy.qttl_init;
  q.path = {origin.id};

  DiscoveryStart start;
  start.round.query_id = q.id;
  start.round.origin = origin.id;
  start.round.rtype = rtype;
  start.round.demand = demand;
  start.round.started_at = now;
  start.round.deadline = now + origin.policy.collect_window;

  QueryEffects fx = handle_query(origin, q, now);
  if (fx.reply) start.round.record(*fx.reply, now);
  start.forwards = std::move(fx.forwards);
  return start;
}

NodeId conclude_discovery(const DiscoveryRound& round, const NodeState& origin, Tick now) {
  const CandidateOrder order{origin.policy.tie_break, round.query_id};
  const ResourceSnapshot* best = nullptr;
  for (const auto& s : round.replies) {
    if (!best || order.better(s.availability, s.node, best->availability, best->node)) best = &s;
  }
  if (best) return best->node;

  const CacheEntry* best_cached = nullptr;
  for (const auto& e : origin.caches.at(round.rtype.value).entries()) {
    if (expired(e, now, origin.policy.cache_lifetime)) continue;
    if (e.snapshot.availability < round.demand) continue;
    const auto& s = e.snapshot;
    if (!best_cached || order.better(s.availability, s.node, best_cached->snapshot.availability,
                                     best_cached->snapshot.node)) {
      best_cached = &e;
    }
  }
  if (best_cached) return best_cached->snapshot.node;
  return origin.id;
}

// --- trace encoding ------------------------------------------------------

nlohmann::json encode(const ResourceSnapshot& s, const ResourceCatalog& catalog) {
  return {{"node", s.node},
          {"rtype", catalog.at(s.rtype).name},
          {"availability", s.availability},
          {"observed_at", s.observed_at}};
}

nlohmann::json encode(const Query& q, const ResourceCatalog& catalog) {
  return {{"id", q.id},     {"origin", q.origin}, {"rtype", catalog.at(q.rtype).name},
          {"demand", q.demand}, {"qttl", q.qttl}, {"path", q.path}};
}

nlohmann::json encode(const QueryReply& r, const ResourceCatalog& catalog) {
  return {{"query_id", r.query_id},
          {"responder", r.responder},
          {"snapshot", encode(r.snapshot, catalog)},
          {"return_path", r.return_path}};
}

nlohmann::json encode(const Advertisement& a, const ResourceCatalog& catalog) {
  return {{"id", a.id}, {"snapshot", encode(a.snapshot, catalog)}, {"attl", a.attl}};
}

}  // namespace sord
