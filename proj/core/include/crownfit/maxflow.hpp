#pragma once

#include <cstdint>
#include <vector>

namespace crownfit {

/// Dinic max-flow on a directed graph with real capacities.
class MaxFlow {
public:
    explicit MaxFlow(std::size_t nodes);

    std::size_t add_node();
    /// Adds u->v with capacity `cap` and v->u with capacity `reverse_cap`.
    void add_edge(std::size_t u, std::size_t v, double cap, double reverse_cap = 0.0);
    double solve(std::size_t source, std::size_t sink);
    /// After solve(): true when `v` is reachable from the source in the
    /// residual graph (source side of the minimum cut).
    bool source_side(std::size_t v) const { return reachable_[v] != 0; }

private:
    struct Arc {
        std::uint32_t to;
        double cap;
    };
    bool bfs(std::size_t s, std::size_t t);
    double dfs(std::size_t v, std::size_t t, double pushed);

    std::vector<Arc> arcs_;
    std::vector<std::vector<std::uint32_t>> adj_;
    std::vector<int> level_;
    std::vector<std::size_t> next_;
    std::vector<char> reachable_;
};

}  // namespace crownfit
