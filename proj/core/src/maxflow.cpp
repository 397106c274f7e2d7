#include "crownfit/maxflow.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "crownfit/error.hpp"

namespace crownfit {

namespace {
constexpr double kEps = 1e-12;
}

MaxFlow::MaxFlow(std::size_t nodes) : adj_(nodes) {}

std::size_t MaxFlow::add_node() {
    adj_.emplace_back();
    return adj_.size() - 1;
}

void MaxFlow::add_edge(std::size_t u, std::size_t v, double cap, double reverse_cap) {
    if (u >= adj_.size() || v >= adj_.size()) throw Error(ErrorKind::Argument, "MaxFlow: node out of range");
    if (!(cap >= 0.0) || !(reverse_cap >= 0.0)) throw Error(ErrorKind::Argument, "MaxFlow: negative capacity");
    adj_[u].push_back(std::uint32_t(arcs_.size()));
    arcs_.push_back({std::uint32_t(v), cap});
    adj_[v].push_back(std::uint32_t(arcs_.size()));
    arcs_.push_back({std::uint32_t(u), reverse_cap});
}

bool MaxFlow::bfs(std::size_t s, std::size_t t) {
    level_.assign(adj_.size(), -1);
    std::queue<std::size_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
        const std::size_t v = q.front();
        q.pop();
        for (auto a : adj_[v])
            if (arcs_[a].cap > kEps && level_[arcs_[a].to] < 0) {
                level_[arcs_[a].to] = level_[v] + 1;
                q.push(arcs_[a].to);
            }
    }
    return level_[t] >= 0;
}

double MaxFlow::dfs(std::size_t v, std::size_t t, double pushed) {
    if (v == t) return pushed;
    for (auto& i = next_[v]; i < adj_[v].size(); ++i) {
        const auto a = adj_[v][i];
        const std::size_t to = arcs_[a].to;
        if (arcs_[a].cap <= kEps || level_[to] != level_[v] + 1) continue;
        const double got = dfs(to, t, std::min(pushed, arcs_[a].cap));
        if (got > 0.0) {
            arcs_[a].cap -= got;
            arcs_[a ^ 1].cap += got;
            return got;
        }
    }
    return 0.0;
}

double MaxFlow::solve(std::size_t s, std::size_t t) {
    if (s >= adj_.size() || t >= adj_.size() || s == t) throw Error(ErrorKind::Argument, "MaxFlow: bad terminals");
    double flow = 0.0;
    while (bfs(s, t)) {
        next_.assign(adj_.size(), 0);
        while (true) {
            const double f = dfs(s, t, std::numeric_limits<double>::infinity());
            if (f <= 0.0) break;
            flow += f;
        }
    }
    reachable_.assign(adj_.size(), 0);
    std::queue<std::size_t> q;
    reachable_[s] = 1;
    q.push(s);
    while (!q.empty()) {
        const std::size_t v = q.front();
        q.pop();
        for (auto a : adj_[v])
            if (arcs_[a].cap > kEps && !reachable_[arcs_[a].to]) {
                reachable_[arcs_[a].to] = 1;
                q.push(arcs_[a].to);
            }
    }
    return flow;
}

}  // namespace crownfit
