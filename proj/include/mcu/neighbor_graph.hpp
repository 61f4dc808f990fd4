#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "mcu/core_data.hpp"

namespace mcu {

/// union: (i,j) is an edge if either endpoint lists the other among its k
/// nearest. mutual: both must.
enum class NeighborRule { Union, Mutual };

inline const char* to_string(NeighborRule rule) { return rule == NeighborRule::Union ? "union" : "mutual"; }

struct Edge {
  Index i = 0;
  Index j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Undirected kNN graph; edges are stored once with i < j, sorted.
template <typename Scalar>
struct NeighborGraph {
  Index node_count = 0;
  Index k = 0;
  NeighborRule rule = NeighborRule::Union;
  std::vector<Edge> edges;
  std::vector<Scalar> squared_distances;  // parallel to edges
  std::vector<std::string> warnings;

  std::size_t edge_count() const { return edges.size(); }
};

/// Indices of the k rows nearest to `query` among `rows` (excluding
/// `exclude`, pass -1 for none). Ties resolve to the smaller index.
template <typename Derived, typename QueryDerived>
std::vector<Index> nearest_rows(const Eigen::MatrixBase<Derived>& rows, const Eigen::MatrixBase<QueryDerived>& query,
                                Index k, Index exclude = -1) {
  using Scalar = typename Derived::Scalar;
  std::vector<std::pair<Scalar, Index>> order;
  order.reserve(static_cast<std::size_t>(rows.rows()));
  for (Index r = 0; r < rows.rows(); ++r) {
    if (r == exclude) continue;
    order.emplace_back((rows.row(r) - query.derived().reshaped().transpose()).squaredNorm(), r);
  }
  const auto take = static_cast<std::size_t>(std::min<Index>(k, static_cast<Index>(order.size())));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
  std::vector<Index> out(take);
  for (std::size_t t = 0; t < take; ++t) out[t] = order[t].second;
  return out;
}

template <typename Derived>
NeighborGraph<typename Derived::Scalar> build_knn_graph(const Eigen::MatrixBase<Derived>& rows, Index k,
                                                        NeighborRule rule = NeighborRule::Union) {
  using Scalar = typename Derived::Scalar;
  const Index n = rows.rows();
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  if (k >= n) throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " must be below N=" + std::to_string(n));
  require_finite(rows, "response matrix");

  MatrixX<Scalar> dist2(n, n);
  for (Index i = 0; i < n; ++i) {
    dist2(i, i) = Scalar(0);
    for (Index j = i + 1; j < n; ++j) dist2(i, j) = dist2(j, i) = (rows.row(i) - rows.row(j)).squaredNorm();
  }

  // adjacency(i, j) counts how many endpoints list the other as a neighbor.
  Eigen::MatrixXi listed = Eigen::MatrixXi::Zero(n, n);
  std::vector<std::pair<Scalar, Index>> order(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    std::size_t t = 0;
    for (Index j = 0; j < n; ++j)
      if (j != i) order[t++] = {dist2(i, j), j};
    std::partial_sort(order.begin(), order.begin() + k, order.end());
    for (Index t2 = 0; t2 < k; ++t2) listed(i, order[static_cast<std::size_t>(t2)].second) = 1;
  }

  NeighborGraph<Scalar> graph;
  graph.node_count = n;
  graph.k = k;
  graph.rule = rule;
  Index duplicates = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const int votes = listed(i, j) + listed(j, i);
      const bool keep = rule == NeighborRule::Union ? votes >= 1 : votes == 2;
      if (dist2(i, j) == Scalar(0)) ++duplicates;
      if (!keep) continue;
      graph.edges.push_back({i, j});
      graph.squared_distances.push_back(dist2(i, j));
    }
  }
  if (duplicates > 0)
    graph.warnings.push_back("DuplicateRows: " + std::to_string(duplicates) + " pair(s) of identical responses");
  return graph;
}

template <typename Scalar>
NeighborGraph<Scalar> build_knn_graph(const ResponseMatrix<Scalar>& responses, Index k,
                                      NeighborRule rule = NeighborRule::Union) {
  return build_knn_graph(responses.values, k, rule);
}

/// Connected components as sorted index lists, ordered by smallest member.
template <typename Scalar>
std::vector<std::vector<Index>> connected_components(const NeighborGraph<Scalar>& graph) {
  const Index n = graph.node_count;
  std::vector<std::vector<Index>> adjacency(static_cast<std::size_t>(n));
  for (const Edge& e : graph.edges) {
    adjacency[static_cast<std::size_t>(e.i)].push_back(e.j);
    adjacency[static_cast<std::size_t>(e.j)].push_back(e.i);
  }
  std::vector<int> seen(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<Index>> components;
  for (Index start = 0; start < n; ++start) {
    if (seen[static_cast<std::size_t>(start)]) continue;
    std::vector<Index> component{start};
    seen[static_cast<std::size_t>(start)] = 1;
    for (std::size_t head = 0; head < component.size(); ++head) {
      for (Index next : adjacency[static_cast<std::size_t>(component[head])]) {
        if (seen[static_cast<std::size_t>(next)]) continue;
        seen[static_cast<std::size_t>(next)] = 1;
        component.push_back(next);
      }
    }
    std::sort(component.begin(), component.end());
    components.push_back(std::move(component));
  }
  return components;
}

}  // namespace mcu
