#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace sord {

using NodeId = std::uint32_t;
using Adjacency = std::vector<std::vector<NodeId>>;

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Static base overlay. Undirected, simple, connected; neighbour lists are
/// sorted ascending.
struct OverlayGraph {
  std::size_t n = 0;
  Adjacency adjacency;
  std::uint64_t seed = 0;

  std::size_t edge_count() const;
  std::size_t max_degree() const;
  double mean_degree() const;
};

struct GraphStats {
  double clustering = 0.0;
  double avg_path = 0.0;
  std::size_t diameter = 0;
};

/// Ring lattice with k_near/2 neighbours per side plus n_far random long
/// links per node. Rebuilds with derived seeds (at most 32 times) until the
/// result is connected.
OverlayGraph build_small_world(std::size_t n, std::size_t k_near, std::size_t n_far,
                               std::uint64_t seed);

/// Uniform random simple graph with exactly `edges` edges (G(n, m)).
/// Not necessarily connected.
Adjacency build_uniform_random(std::size_t n, std::size_t edges, std::uint64_t seed);

/// Builds a graph from an explicit edge list; validates it as an overlay.
OverlayGraph graph_from_edges(std::size_t n,
                              const std::vector<std::pair<NodeId, NodeId>>& edges);

bool is_connected(const Adjacency& adj);

/// Mean local clustering coefficient; nodes of degree < 2 count as 0.
double clustering_coefficient(const Adjacency& adj);

/// Hop distances from `source`; unreachable nodes get SIZE_MAX.
std::vector<std::size_t> bfs_distances(const Adjacency& adj, NodeId source);

/// Exact all-pairs statistics. Throws TopologyError on a disconnected graph.
GraphStats graph_stats(const OverlayGraph& g);

/// "i j" per line with i < j, ascending.
void write_edge_list(std::ostream& out, const OverlayGraph& g);

}  // namespace sord
