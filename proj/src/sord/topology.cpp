#include "sord/topology.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <set>
#include <string>

#include "sord/rng.hpp"

namespace sord {

namespace {

constexpr int kMaxConnectRetries = 32;

bool has_edge(const Adjacency& adj, NodeId a, NodeId b) {
  const auto& na = adj[a];
  return std::find(na.begin(), na.end(), b) != na.end();
}

void add_edge(Adjacency& adj, NodeId a, NodeId b) {
  adj[a].push_back(b);
  adj[b].push_back(a);
}

void sort_lists(Adjacency& adj) {
  for (auto& list : adj) std::sort(list.begin(), list.end());
}

Adjacency build_once(std::size_t n, std::size_t k_near, std::size_t n_far, std::uint64_t seed) {
  Adjacency adj(n);
  const std::size_t half = k_near / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 1; d <= half; ++d) {
      const auto j = static_cast<NodeId>((i + d) % n);
      // Guards tiny rings where i+d wraps onto an existing neighbour.
      if (j != i && !has_edge(adj, static_cast<NodeId>(i), j)) {
        add_edge(adj, static_cast<NodeId>(i), j);
      }
    }
  }

  Rng rng(seed);
  std::vector<NodeId> pool;
  for (std::size_t i = 0; i < n; ++i) {
    const auto self = static_cast<NodeId>(i);
    for (std::size_t f = 0; f < n_far; ++f) {
      if (adj[i].size() + 1 >= n) break;  // already adjacent to everyone
      // Rejection sampling is fast while the node is far from saturated;
      // fall back to an explicit candidate pool otherwise.
      NodeId target = self;
      bool found = false;
      for (int attempt = 0; attempt < 64 && !found; ++attempt) {
        target = static_cast<NodeId>(rng.index(n));
        found = target != self && !has_edge(adj, self, target);
      }
      if (!found) {
        pool.clear();
        for (std::size_t j = 0; j < n; ++j) {
          const auto cand = static_cast<NodeId>(j);
          if (cand != self && !has_edge(adj, self, cand)) pool.push_back(cand);
        }
        target = pool[rng.index(pool.size())];
      }
      add_edge(adj, self, target);
    }
  }
  sort_lists(adj);
  return adj;
}

}  // namespace

std::size_t OverlayGraph::edge_count() const {
  std::size_t total = 0;
  for (const auto& list : adjacency) total += list.size();
  return total / 2;
}

std::size_t OverlayGraph::max_degree() const {
  std::size_t best = 0;
  for (const auto& list : adjacency) best = std::max(best, list.size());
  return best;
}

double OverlayGraph::mean_degree() const {
  return n == 0 ? 0.0 : 2.0 * static_cast<double>(edge_count()) / static_cast<double>(n);
}

OverlayGraph build_small_world(std::size_t n, std::size_t k_near, std::size_t n_far,
                               std::uint64_t seed) {
  if (n < 2) throw TopologyError("build_small_world: n must be >= 2");
  // A two-node ring collapses to its single edge, so k_near == n == 2 is allowed.
  const bool two_ring = n == 2 && k_near == 2;
  if (k_near < 2 || k_near % 2 != 0 || (k_near >= n && !two_ring)) {
    throw TopologyError("build_small_world: k_near must be even with 2 <= k_near < n, got " +
                        std::to_string(k_near));
  }

  std::uint64_t attempt_seed = seed;
  for (int attempt = 0; attempt <= kMaxConnectRetries; ++attempt) {
    Adjacency adj = build_once(n, k_near, n_far, attempt_seed);
    if (is_connected(adj)) return OverlayGraph{n, std::move(adj), seed};
    attempt_seed = mix_seed(seed, static_cast<std::uint64_t>(attempt) + 1);
  }
  throw TopologyError("build_small_world: no connected graph after " +
                      std::to_string(kMaxConnectRetries) + " retries");
}

Adjacency build_uniform_random(std::size_t n, std::size_t edges, std::uint64_t seed) {
  const std::size_t max_edges = n * (n - 1) / 2;
  if (n < 2 || edges > max_edges) {
    throw TopologyError("build_uniform_random: edge count out of range");
  }
  Adjacency adj(n);
  std::set<std::pair<NodeId, NodeId>> chosen;
  Rng rng(seed);
  while (chosen.size() < edges) {
    auto a = static_cast<NodeId>(rng.index(n));
    auto b = static_cast<NodeId>(rng.index(n));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (chosen.emplace(a, b).second) add_edge(adj, a, b);
  }
  sort_lists(adj);
  return adj;
}

OverlayGraph graph_from_edges(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges) {
  Adjacency adj(n);
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw TopologyError("graph_from_edges: node id out of range");
    if (a == b) throw TopologyError("graph_from_edges: self-loop");
    if (has_edge(adj, a, b)) throw TopologyError("graph_from_edges: duplicate edge");
    add_edge(adj, a, b);
  }
  sort_lists(adj);
  if (!is_connected(adj)) throw TopologyError("graph_from_edges: graph is disconnected");
  return OverlayGraph{n, std::move(adj), 0};
}

std::vector<std::size_t> bfs_distances(const Adjacency& adj, NodeId source) {
  constexpr auto kUnreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(adj.size(), kUnreached);
  std::vector<NodeId> frontier{source};
  dist[source] = 0;
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const NodeId u = frontier[head];
    for (NodeId v : adj[u]) {
      if (dist[v] == kUnreached) {
        dist[v] = dist[u] + 1;
        frontier.push_back(v);
      }
    }
  }
  return dist;
}

bool is_connected(const Adjacency& adj) {
  if (adj.empty()) return true;
  const auto dist = bfs_distances(adj, 0);
  return std::none_of(dist.begin(), dist.end(),
                      [](std::size_t d) { return d == std::numeric_limits<std::size_t>::max(); });
}

double clustering_coefficient(const Adjacency& adj) {
  if (adj.empty()) return 0.0;
  double total = 0.0;
  for (const auto& nbrs : adj) {
    const std::size_t k = nbrs.size();
    if (k < 2) continue;
    std::size_t links = 0;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) {
        // Lists are sorted, so binary search is valid here.
        const auto& na = adj[nbrs[a]];
        if (std::binary_search(na.begin(), na.end(), nbrs[b])) ++links;
      }
    }
    total += 2.0 * static_cast<double>(links) / static_cast<double>(k * (k - 1));
  }
  return total / static_cast<double>(adj.size());
}

GraphStats graph_stats(const OverlayGraph& g) {
  GraphStats stats;
  stats.clustering = clustering_coefficient(g.adjacency);
  if (g.n < 2) return stats;

  double path_sum = 0.0;
  for (std::size_t s = 0; s < g.n; ++s) {
    const auto dist = bfs_distances(g.adjacency, static_cast<NodeId>(s));
    for (std::size_t t = 0; t < g.n; ++t) {
      if (dist[t] == std::numeric_limits<std::size_t>::max()) {
        throw TopologyError("graph_stats: graph is disconnected");
      }
      path_sum += static_cast<double>(dist[t]);
      stats.diameter = std::max(stats.diameter, dist[t]);
    }
  }
  const double pairs = static_cast<double>(g.n) * static_cast<double>(g.n - 1);
  stats.avg_path = path_sum / pairs;
  return stats;
}

void write_edge_list(std::ostream& out, const OverlayGraph& g) {
  for (std::size_t i = 0; i < g.n; ++i) {
    for (NodeId j : g.adjacency[i]) {
      if (i < j) out << i << ' ' << j << '\n';
    }
  }
}

}  // namespace sord
