#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stoneage/errors.hpp"
#include "stoneage/rng.hpp"

namespace stoneage {

using NodeId = std::uint32_t;

/// Undirected connected graph with its all-pairs hop distances.
///
/// Node ids are dense 0..n-1 and exist for the harness only: protocols see
/// states and signals, never identities.
class Graph {
 public:
  using Edge = std::pair<NodeId, NodeId>;

  /// Builds a graph from an edge list. Throws std::invalid_argument on
  /// self-loops, duplicate edges, out-of-range ids or a disconnected result.
  Graph(std::size_t n, const std::vector<Edge>& edges) : adjacency_(n) {
    if (n == 0) throw std::invalid_argument("graph must have at least one node");
    std::set<Edge> seen;
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) throw std::invalid_argument("edge endpoint out of range");
      if (u == v) throw std::invalid_argument("self-loop at node " + std::to_string(u));
      Edge key{std::min(u, v), std::max(u, v)};
      if (!seen.insert(key).second)
        throw std::invalid_argument("duplicate edge " + std::to_string(key.first) + " " +
                                    std::to_string(key.second));
      adjacency_[u].push_back(v);
      adjacency_[v].push_back(u);
    }
    for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
    edges_.assign(seen.begin(), seen.end());
    compute_distances();
  }

  std::size_t size() const noexcept { return adjacency_.size(); }
  const std::vector<NodeId>& neighbors(NodeId v) const { return adjacency_.at(v); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t degree(NodeId v) const { return adjacency_.at(v).size(); }

  std::uint32_t distance(NodeId u, NodeId v) const { return dist_.at(u * size() + v); }
  std::uint32_t diameter() const noexcept { return diameter_; }

  /// Row-major n×n hop-distance matrix.
  std::vector<std::vector<std::uint32_t>> distances() const {
    std::vector<std::vector<std::uint32_t>> out(size(), std::vector<std::uint32_t>(size()));
    for (std::size_t u = 0; u < size(); ++u)
      for (std::size_t v = 0; v < size(); ++v) out[u][v] = dist_[u * size() + v];
    return out;
  }

  bool operator==(const Graph& other) const { return adjacency_ == other.adjacency_; }

 private:
  void compute_distances() {
    const std::size_t n = size();
    constexpr auto unreached = std::numeric_limits<std::uint32_t>::max();
    dist_.assign(n * n, unreached);
    diameter_ = 0;
    std::deque<NodeId> queue;
    for (NodeId s = 0; s < n; ++s) {
      std::uint32_t* row = &dist_[s * n];
      row[s] = 0;
      queue.assign(1, s);
      while (!queue.empty()) {
        NodeId u = queue.front();
        queue.pop_front();
        for (NodeId w : adjacency_[u]) {
          if (row[w] != unreached) continue;
          row[w] = row[u] + 1;
          queue.push_back(w);
        }
      }
      for (std::size_t v = 0; v < n; ++v) {
        if (row[v] == unreached) throw std::invalid_argument("graph is not connected");
        diameter_ = std::max(diameter_, row[v]);
      }
    }
  }

  std::vector<std::vector<NodeId>> adjacency_;
  std::vector<Edge> edges_;
  std::vector<std::uint32_t> dist_;
  std::uint32_t diameter_ = 0;
};

enum class GraphKind { complete, path, cycle, wheel, random_bounded, edge_list };

/// Declarative graph description consumed by build_graph().
struct GraphSpec {
  GraphKind kind = GraphKind::complete;
  std::size_t n = 1;
  std::uint32_t diameter_bound = 0;  // random_bounded only
  std::uint64_t seed = 0;
  double extra_edge_probability = 0.3;
  std::size_t max_retries = 100;
  std::string path;                  // edge_list only
};

namespace detail {

inline std::vector<Graph::Edge> sample_bounded_edges(std::size_t n, std::uint32_t bound,
                                                     double p, CounterRng& rng) {
  // Random recursive tree of bounded depth: attach every node (in random
  // order) to a uniformly chosen earlier node whose depth is below the cap.
  const std::uint32_t depth_cap = std::max<std::uint32_t>(1, bound / 2);
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform(i)]);

  std::vector<std::uint32_t> depth(n, 0);
  std::vector<NodeId> attachable{order[0]};
  std::set<Graph::Edge> edges;
  for (std::size_t i = 1; i < n; ++i) {
    NodeId v = order[i];
    NodeId parent = attachable[rng.uniform(attachable.size())];
    depth[v] = depth[parent] + 1;
    edges.insert({std::min(v, parent), std::max(v, parent)});
    if (depth[v] < depth_cap) attachable.push_back(v);
  }
  for (NodeId u = 0; u < n; ++u)
    for (NodeId v = u + 1; v < n; ++v)
      if (!edges.count({u, v}) && rng.unit() < p) edges.insert({u, v});
  return {edges.begin(), edges.end()};
}

}  // namespace detail

/// Parses the `u v` per line edge-list format (`#` starts a comment).
/// The node count is one more than the largest id mentioned.
inline Graph parse_edge_list(std::istream& in) {
  std::vector<Graph::Edge> edges;
  std::set<Graph::Edge> seen;
  std::size_t n = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    long long u = 0, v = 0;
    if (!(fields >> u)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ParseError("expected `u v` pair", lineno);
    }
    if (!(fields >> v)) throw ParseError("missing second endpoint", lineno);
    std::string rest;
    if (fields >> rest) throw ParseError("trailing content `" + rest + "`", lineno);
    if (u < 0 || v < 0) throw ParseError("negative node id", lineno);
    if (u == v) throw ParseError("self-loop at node " + std::to_string(u), lineno);
    Graph::Edge key{static_cast<NodeId>(std::min(u, v)), static_cast<NodeId>(std::max(u, v))};
    if (!seen.insert(key).second) throw ParseError("duplicate edge", lineno);
    edges.push_back(key);
    n = std::max<std::size_t>(n, static_cast<std::size_t>(std::max(u, v)) + 1);
  }
  if (n == 0) throw ParseError("edge list is empty", 0);
  try {
    return Graph(n, edges);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 0);
  }
}

inline void write_edge_list(std::ostream& out, const Graph& g) {
  out << "# n=" << g.size() << " diameter=" << g.diameter() << "\n";
  for (auto [u, v] : g.edges()) out << u << " " << v << "\n";
}

inline Graph build_graph(const GraphSpec& spec) {
  const std::size_t n = spec.n;
  std::vector<Graph::Edge> edges;
  switch (spec.kind) {
    case GraphKind::complete:
      for (NodeId u = 0; u < n; ++u)
        for (NodeId v = u + 1; v < n; ++v) edges.push_back({u, v});
      return Graph(n, edges);
    case GraphKind::path:
      for (NodeId u = 0; u + 1 < n; ++u) edges.push_back({u, u + 1});
      return Graph(n, edges);
    case GraphKind::cycle:
      if (n < 3) throw std::invalid_argument("cycle needs n >= 3");
      for (NodeId u = 0; u < n; ++u) edges.push_back({u, static_cast<NodeId>((u + 1) % n)});
      return Graph(n, edges);
    case GraphKind::wheel: {
      // Hub 0, rim 1..n-1 in cyclic order.
      if (n < 4) throw std::invalid_argument("wheel needs n >= 4");
      const auto rim = static_cast<NodeId>(n - 1);
      for (NodeId i = 1; i <= rim; ++i) {
        edges.push_back({0, i});
        edges.push_back({i, static_cast<NodeId>(i % rim + 1)});
      }
      return Graph(n, edges);
    }
    case GraphKind::random_bounded: {
      if (n < 1 || spec.diameter_bound < 1)
        throw std::invalid_argument("random graph needs n >= 1 and D >= 1");
      CounterRng rng(spec.seed, streams::graph);
      for (std::size_t attempt = 0; attempt < spec.max_retries; ++attempt) {
        Graph g(n, detail::sample_bounded_edges(n, spec.diameter_bound,
                                                spec.extra_edge_probability, rng));
        if (g.diameter() <= spec.diameter_bound) return g;
      }
      throw GenerationError("generation failed after " + std::to_string(spec.max_retries) +
                            " retries (n=" + std::to_string(n) +
                            ", D=" + std::to_string(spec.diameter_bound) + ")");
    }
    case GraphKind::edge_list: {
      std::ifstream in(spec.path);
      if (!in) throw ParseError("cannot open edge list `" + spec.path + "`", 0);
      return parse_edge_list(in);
    }
  }
  throw std::invalid_argument("unknown graph kind");
}

}  // namespace stoneage
