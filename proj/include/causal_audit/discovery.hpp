#pragma once

// Score-based structure learning for linear-Gaussian data: decomposable BIC,
// Greedy Equivalence Search over CPDAGs, and the PDAG machinery it needs
// (v-structure detection, Meek rules R1-R4, DAG <-> CPDAG conversion).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "causal_audit/dataset.hpp"
#include "causal_audit/error.hpp"
#include "causal_audit/graph.hpp"

namespace causal_audit {

// ---------------------------------------------------------------------------
// Sufficient statistics and the local score

struct SufficientStats {
    std::vector<std::string> names;
    std::size_t n = 0;
    Eigen::VectorXd means;
    Eigen::MatrixXd cov;                  // maximum-likelihood (divides by n)
    std::vector<std::string> degenerate;  // zero-variance columns, reported not fatal
};

inline SufficientStats sufficient_stats(const Dataset& d) {
    require_analysable(d);
    SufficientStats s;
    s.names = d.names;
    s.n = d.rows();
    s.means = d.values.colwise().mean().transpose();
    Eigen::MatrixXd centered = d.values.rowwise() - s.means.transpose();
    s.cov = (centered.transpose() * centered) / static_cast<double>(s.n);
    s.cov = 0.5 * (s.cov + s.cov.transpose());
    for (Eigen::Index c = 0; c < s.cov.rows(); ++c)
        if (!(s.cov(c, c) > 0.0)) s.degenerate.push_back(d.names[c]);
    return s;
}

inline constexpr double kResidualVarianceFloor = 1e-12;
inline constexpr double kSingularRidge = 1e-10;

struct LocalScore {
    double value = 0.0;
    bool ridged = false;  // the parent covariance was singular and a ridge was added
};

/// MLE residual variance of `node` regressed on `parents`.
inline std::pair<double, bool> residual_variance(const SufficientStats& s, std::size_t node,
                                                 std::span<const std::size_t> parents) {
    const double syy = s.cov(node, node);
    if (parents.empty()) return {syy, false};
    const auto k = static_cast<Eigen::Index>(parents.size());
    Eigen::MatrixXd spp(k, k);
    Eigen::VectorXd spy(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        spy(i) = s.cov(parents[i], node);
        for (Eigen::Index j = 0; j < k; ++j) spp(i, j) = s.cov(parents[i], parents[j]);
    }
    bool ridged = false;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(spp);
    const double scale = std::max(spp.diagonal().cwiseAbs().maxCoeff(), 1e-300);
    const auto d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-12 * scale) {
        ridged = true;
        spp.diagonal().array() += kSingularRidge * std::max(spp.diagonal().mean(), 1.0);
        ldlt.compute(spp);
    }
    Eigen::VectorXd beta = ldlt.solve(spy);
    return {syy - spy.dot(beta), ridged};
}

/// Gaussian BIC of one node given its parents:
///   -(n/2) ln(sigma^2) - penalty * ((|parents| + 1) / 2) ln(n)
/// Structure-independent constants are dropped; only differences matter.
inline LocalScore bic_local(const SufficientStats& s, std::size_t node, std::span<const std::size_t> parents,
                            double penalty = 1.0) {
    if (node >= s.names.size()) fail("UnknownNode", "node index out of range");
    for (auto p : parents) {
        if (p == node) fail("InvalidParents", "a node cannot be its own parent");
        if (p >= s.names.size()) fail("UnknownNode", "parent index out of range");
    }
    auto [var, ridged] = residual_variance(s, node, parents);
    const double n = static_cast<double>(s.n);
    const double value = -0.5 * n * std::log(std::max(var, kResidualVarianceFloor)) -
                         penalty * 0.5 * static_cast<double>(parents.size() + 1) * std::log(n);
    return {value, ridged};
}

/// Sum of local scores of a DAG whose node names match the statistics'
/// columns (in any order).
inline double bic_score(const SufficientStats& s, const MixedGraph& dag, double penalty = 1.0) {
    require_dag(dag);
    std::vector<std::size_t> column(dag.size());
    for (NodeIndex v = 0; v < dag.size(); ++v) {
        auto it = std::find(s.names.begin(), s.names.end(), dag.name(v));
        if (it == s.names.end()) fail("UnknownColumn", "no column for node '" + dag.name(v) + "'");
        column[v] = static_cast<std::size_t>(it - s.names.begin());
    }
    double total = 0.0;
    for (NodeIndex v = 0; v < dag.size(); ++v) {
        std::vector<std::size_t> pa;
        for (auto p : dag.parents(v)) pa.push_back(column[p]);
        total += bic_local(s, column[v], pa, penalty).value;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Mutable PDAG used by the algorithms below

namespace detail {

class Pdag {
public:
    explicit Pdag(std::size_t n) : n_(n), m_(n * n, 0) {}

    static Pdag from(const MixedGraph& g) {
        Pdag p(g.size());
        for (NodeIndex a = 0; a < g.size(); ++a)
            for (NodeIndex b = 0; b < g.size(); ++b) {
                if (g.has_directed(a, b)) p.orient(a, b);
                else if (a < b && g.has_undirected(a, b)) p.undirect(a, b);
            }
        return p;
    }

    MixedGraph to_graph(const std::vector<std::string>& names) const {
        std::vector<Edge> edges;
        for (std::size_t a = 0; a < n_; ++a)
            for (std::size_t b = 0; b < n_; ++b) {
                if (directed(a, b)) edges.push_back({names[a], names[b], EdgeKind::directed});
                else if (a < b && undirected(a, b)) edges.push_back({names[a], names[b], EdgeKind::undirected});
            }
        return MixedGraph::build(names, edges);
    }

    std::size_t size() const { return n_; }
    // m_[a*n+b] == 1 means an arrowhead-free tail at a towards b exists: a->b or a--b.
    bool directed(std::size_t a, std::size_t b) const { return at(a, b) && !at(b, a); }
    bool undirected(std::size_t a, std::size_t b) const { return at(a, b) && at(b, a); }
    bool adjacent(std::size_t a, std::size_t b) const { return at(a, b) || at(b, a); }

    void orient(std::size_t a, std::size_t b) { set(a, b, 1); set(b, a, 0); }
    void undirect(std::size_t a, std::size_t b) { set(a, b, 1); set(b, a, 1); }
    void remove(std::size_t a, std::size_t b) { set(a, b, 0); set(b, a, 0); }

    std::vector<std::size_t> parents(std::size_t v) const {
        std::vector<std::size_t> out;
        for (std::size_t u = 0; u < n_; ++u)
            if (directed(u, v)) out.push_back(u);
        return out;
    }
    std::vector<std::size_t> neighbors(std::size_t v) const {
        std::vector<std::size_t> out;
        for (std::size_t u = 0; u < n_; ++u)
            if (u != v && undirected(u, v)) out.push_back(u);
        return out;
    }

    bool is_clique(std::span<const std::size_t> nodes) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            for (std::size_t j = i + 1; j < nodes.size(); ++j)
                if (!adjacent(nodes[i], nodes[j])) return false;
        return true;
    }

    bool has_undirected() const {
        for (std::size_t a = 0; a < n_; ++a)
            for (std::size_t b = a + 1; b < n_; ++b)
                if (undirected(a, b)) return true;
        return false;
    }

    /// Acyclicity of the directed part.
    bool acyclic() const {
        std::vector<int> state(n_, 0);
        std::vector<std::pair<std::size_t, std::size_t>> stack;
        for (std::size_t s = 0; s < n_; ++s) {
            if (state[s]) continue;
            stack.push_back({s, 0});
            state[s] = 1;
            while (!stack.empty()) {
                auto& [v, next] = stack.back();
                if (next == n_) {
                    state[v] = 2;
                    stack.pop_back();
                    continue;
                }
                auto u = next++;
                if (!directed(v, u)) continue;
                if (state[u] == 1) return false;
                if (state[u] == 0) {
                    state[u] = 1;
                    stack.push_back({u, 0});
                }
            }
        }
        return true;
    }

    /// Is there a path from `from` to `to` whose edges are undirected or point
    /// forward, with no interior node in `blocked`?
    bool semi_directed_path(std::size_t from, std::size_t to, const std::vector<bool>& blocked) const {
        std::vector<bool> seen(n_, false);
        std::vector<std::size_t> stack{from};
        seen[from] = true;
        while (!stack.empty()) {
            auto v = stack.back();
            stack.pop_back();
            for (std::size_t u = 0; u < n_; ++u) {
                if (!at(v, u) || seen[u]) continue;  // needs v->u or v--u
                if (u == to) return true;
                if (blocked[u]) continue;
                seen[u] = true;
                stack.push_back(u);
            }
        }
        return false;
    }

    /// v-structures a -> c <- b with a < b nonadjacent, as (a, c, b).
    std::vector<std::array<std::size_t, 3>> v_structures() const {
        std::vector<std::array<std::size_t, 3>> out;
        for (std::size_t c = 0; c < n_; ++c) {
            auto pa = parents(c);
            for (std::size_t i = 0; i < pa.size(); ++i)
                for (std::size_t j = i + 1; j < pa.size(); ++j)
                    if (!adjacent(pa[i], pa[j])) out.push_back({pa[i], c, pa[j]});
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    friend bool operator==(const Pdag&, const Pdag&) = default;

private:
    bool at(std::size_t a, std::size_t b) const { return m_[a * n_ + b] != 0; }
    void set(std::size_t a, std::size_t b, std::uint8_t v) { m_[a * n_ + b] = v; }

    std::size_t n_;
    std::vector<std::uint8_t> m_;
};

/// One sweep of a Meek rule over all undirected edges; returns true if
/// anything was oriented.
inline bool meek_pass(Pdag& g) {
    const auto n = g.size();
    bool changed = false;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b || !g.undirected(a, b)) continue;
            bool orient = false;
            for (std::size_t c = 0; c < n && !orient; ++c) {
                if (c == a || c == b) continue;
                // R1: c -> a, a -- b, c and b nonadjacent  =>  a -> b
                if (g.directed(c, a) && !g.adjacent(c, b)) orient = true;
                // R2: a -> c -> b, a -- b  =>  a -> b
                else if (g.directed(a, c) && g.directed(c, b)) orient = true;
            }
            // R3: a -- c, a -- d, c -> b, d -> b, c and d nonadjacent  =>  a -> b
            for (std::size_t c = 0; c < n && !orient; ++c) {
                if (c == a || c == b || !g.undirected(a, c) || !g.directed(c, b)) continue;
                for (std::size_t d = c + 1; d < n && !orient; ++d) {
                    if (d == a || d == b || !g.undirected(a, d) || !g.directed(d, b)) continue;
                    if (!g.adjacent(c, d)) orient = true;
                }
            }
            // R4: a -- d, a adjacent to c, c -> d -> b, c and b nonadjacent  =>  a -> b
            for (std::size_t d = 0; d < n && !orient; ++d) {
                if (d == a || d == b || !g.undirected(a, d) || !g.directed(d, b)) continue;
                for (std::size_t c = 0; c < n && !orient; ++c) {
                    if (c == a || c == b || c == d) continue;
                    if (g.adjacent(a, c) && g.directed(c, d) && !g.adjacent(c, b)) orient = true;
                }
            }
            if (orient) {
                g.orient(a, b);
                changed = true;
            }
        }
    }
    return changed;
}

inline void meek_close(Pdag& g) {
    if (!g.acyclic()) fail("Inconsistent", "the directed part already contains a cycle");
    while (meek_pass(g)) {
    }
    if (!g.acyclic()) fail("Inconsistent", "Meek rule application forced a directed cycle");
}

/// CPDAG of a DAG: keep v-structure edges directed, close under Meek rules.
inline Pdag cpdag_of(const Pdag& dag) {
    Pdag out(dag.size());
    for (std::size_t a = 0; a < dag.size(); ++a)
        for (std::size_t b = a + 1; b < dag.size(); ++b)
            if (dag.adjacent(a, b)) out.undirect(a, b);
    for (const auto& v : dag.v_structures()) {
        out.orient(v[0], v[1]);
        out.orient(v[2], v[1]);
    }
    meek_close(out);
    return out;
}

/// Lexicographic consistent extension; throws NotExtendable.
inline Pdag extend(const Pdag& input) {
    Pdag g = input;
    try {
        meek_close(g);
        for (std::size_t a = 0; a < g.size(); ++a) {
            for (std::size_t b = a + 1; b < g.size(); ++b) {
                if (!g.undirected(a, b)) continue;
                Pdag attempt = g;
                attempt.orient(a, b);
                try {
                    meek_close(attempt);
                } catch (const CausalError&) {
                    attempt = g;
                    attempt.orient(b, a);
                    meek_close(attempt);
                }
                g = std::move(attempt);
                a = 0;
                b = 0;  // rescan from the smallest pair; closure may have changed earlier edges
            }
        }
    } catch (const CausalError& e) {
        fail("NotExtendable", std::string("PDAG has no consistent extension: ") + e.what());
    }
    // Same skeleton is structural; check directed edges kept and no new v-structures.
    for (std::size_t a = 0; a < g.size(); ++a)
        for (std::size_t b = 0; b < g.size(); ++b)
            if (input.directed(a, b) && !g.directed(a, b))
                fail("NotExtendable", "extension had to reverse a directed edge");
    for (const auto& v : g.v_structures())
        if (!input.directed(v[0], v[1]) || !input.directed(v[2], v[1]))
            fail("NotExtendable", "every extension introduces a new v-structure");
    if (!g.acyclic()) fail("NotExtendable", "extension is cyclic");
    return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Public CPDAG operations

inline MixedGraph meek_closure(const MixedGraph& g) {
    auto p = detail::Pdag::from(g);
    detail::meek_close(p);
    return p.to_graph(g.names());
}

inline MixedGraph dag_to_cpdag(const MixedGraph& g) {
    require_dag(g);
    return detail::cpdag_of(detail::Pdag::from(g)).to_graph(g.names());
}

inline MixedGraph consistent_extension(const MixedGraph& g) {
    return detail::extend(detail::Pdag::from(g)).to_graph(g.names());
}

/// Structural Hamming distance between two graphs over the same node names:
/// one per node pair whose adjacency or edge mark differs.
inline std::size_t structural_hamming_distance(const MixedGraph& a, const MixedGraph& b) {
    if (a.names() != b.names()) fail("NodeMismatch", "graphs have different node sets");
    std::size_t d = 0;
    for (NodeIndex u = 0; u < a.size(); ++u)
        for (NodeIndex v = u + 1; v < a.size(); ++v) {
            bool same = a.has_directed(u, v) == b.has_directed(u, v) &&
                        a.has_directed(v, u) == b.has_directed(v, u) &&
                        a.has_undirected(u, v) == b.has_undirected(u, v);
            if (!same) ++d;
        }
    return d;
}

// ---------------------------------------------------------------------------
// Greedy Equivalence Search

struct GesConfig {
    double penalty = 1.0;
    std::optional<std::size_t> max_parents;  // default: p - 1
    bool forward = true;
    bool backward = true;
};

struct GesResult {
    MixedGraph cpdag;
    double score = 0.0;
    std::size_t inserts = 0;
    std::size_t deletes = 0;
    bool ridged = false;  // some local score hit a singular parent covariance
};

namespace detail {

class ScoreCache {
public:
    ScoreCache(const SufficientStats& s, double penalty) : s_(s), penalty_(penalty) {}

    double operator()(std::size_t node, std::uint64_t parent_mask) {
        auto key = std::make_pair(node, parent_mask);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        std::vector<std::size_t> pa;
        for (std::size_t i = 0; i < 64; ++i)
            if (parent_mask >> i & 1u) pa.push_back(i);
        auto r = bic_local(s_, node, pa, penalty_);
        ridged_ = ridged_ || r.ridged;
        cache_.emplace(key, r.value);
        return r.value;
    }

    bool ridged() const { return ridged_; }

private:
    struct KeyHash {
        std::size_t operator()(const std::pair<std::size_t, std::uint64_t>& k) const {
            return std::hash<std::uint64_t>()(k.second * 0x9E3779B97F4A7C15ull ^ k.first);
        }
    };
    const SufficientStats& s_;
    double penalty_;
    bool ridged_ = false;
    std::unordered_map<std::pair<std::size_t, std::uint64_t>, double, KeyHash> cache_;
};

inline std::uint64_t mask_of(std::span<const std::size_t> nodes) {
    std::uint64_t m = 0;
    for (auto v : nodes) m |= (std::uint64_t{1} << v);
    return m;
}

inline std::vector<std::size_t> nodes_of(std::uint64_t m) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < 64; ++i)
        if (m >> i & 1u) out.push_back(i);
    return out;
}

struct Operator {
    double delta = -std::numeric_limits<double>::infinity();
    std::size_t x = 0, y = 0;
    std::vector<std::size_t> set;  // T for Insert, H for Delete
    bool valid = false;

    /// Higher delta wins; exact ties go to the lexicographically smallest
    /// (x, y, set) by node name (index order is name order).
    bool better_than(const Operator& o) const {
        if (!o.valid) return true;
        if (delta != o.delta) return delta > o.delta;
        return std::tie(x, y, set) < std::tie(o.x, o.y, o.set);
    }
};

inline Pdag recomplete(const Pdag& g) { return cpdag_of(extend(g)); }

inline Operator best_insert(const Pdag& g, ScoreCache& score, std::size_t max_parents) {
    Operator best;
    const auto n = g.size();
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
            if (x == y || g.adjacent(x, y)) continue;
            auto pa = g.parents(y);
            std::vector<std::size_t> na, t0;
            for (auto u : g.neighbors(y)) (g.adjacent(u, x) ? na : t0).push_back(u);
            const std::uint64_t base = mask_of(pa) | mask_of(na);
            for (std::uint64_t tm = 0; tm < (std::uint64_t{1} << t0.size()); ++tm) {
                std::vector<std::size_t> t, s = na;
                for (std::size_t i = 0; i < t0.size(); ++i)
                    if (tm >> i & 1u) t.push_back(t0[i]);
                s.insert(s.end(), t.begin(), t.end());
                std::sort(s.begin(), s.end());
                if (pa.size() + s.size() + 1 > max_parents) continue;
                if (!g.is_clique(s)) continue;
                std::vector<bool> blocked(n, false);
                for (auto v : s) blocked[v] = true;
                if (g.semi_directed_path(y, x, blocked)) continue;
                const std::uint64_t without = base | mask_of(t);
                Operator op{score(y, without | (std::uint64_t{1} << x)) - score(y, without), x, y, t, true};
                if (op.better_than(best)) best = std::move(op);
            }
        }
    }
    return best;
}

inline void apply_insert(Pdag& g, const Operator& op) {
    g.orient(op.x, op.y);
    for (auto t : op.set) g.orient(t, op.y);
    g = recomplete(g);
}

inline Operator best_delete(const Pdag& g, ScoreCache& score) {
    Operator best;
    const auto n = g.size();
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
            if (x == y || !(g.directed(x, y) || g.undirected(x, y))) continue;
            auto pa = g.parents(y);
            std::vector<std::size_t> na;
            for (auto u : g.neighbors(y))
                if (u != x && g.adjacent(u, x)) na.push_back(u);
            const std::uint64_t xbit = std::uint64_t{1} << x;
            for (std::uint64_t hm = 0; hm < (std::uint64_t{1} << na.size()); ++hm) {
                std::vector<std::size_t> h, rest;
                for (std::size_t i = 0; i < na.size(); ++i) (hm >> i & 1u ? h : rest).push_back(na[i]);
                if (!g.is_clique(rest)) continue;
                const std::uint64_t with = mask_of(rest) | mask_of(pa) | xbit;
                const std::uint64_t without = with & ~xbit;
                Operator op{score(y, without) - score(y, with), x, y, h, true};
                if (op.better_than(best)) best = std::move(op);
            }
        }
    }
    return best;
}

inline void apply_delete(Pdag& g, const Operator& op) {
    g.remove(op.x, op.y);
    for (auto h : op.set) {
        g.orient(op.y, h);
        if (g.undirected(op.x, h)) g.orient(op.x, h);
    }
    g = recomplete(g);
}

}  // namespace detail

inline GesResult ges(const Dataset& d, const GesConfig& cfg = {}) {
    require_analysable(d);
    if (!(cfg.penalty > 0.0)) fail("InvalidConfig", "penalty multiplier must be positive");
    const auto p = d.cols();
    if (p > 64) fail("InvalidConfig", "at most 64 variables are supported");
    if (d.rows() <= p) fail("InsufficientRows", "GES needs more rows than columns");
    for (const auto& name : d.names)
        if (!is_valid_node_name(name)) fail("InvalidNodeName", "column '" + name + "' is not a valid node name");

    // Work in name order so tie-breaks by index are tie-breaks by name.
    std::vector<std::size_t> order(p);
    for (std::size_t i = 0; i < p; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d.names[a] < d.names[b]; });
    Dataset sorted{{}, Eigen::MatrixXd(d.rows(), p)};
    for (std::size_t i = 0; i < p; ++i) {
        sorted.names.push_back(d.names[order[i]]);
        sorted.values.col(i) = d.values.col(order[i]);
    }

    const auto stats = sufficient_stats(sorted);
    detail::ScoreCache score(stats, cfg.penalty);
    const std::size_t max_parents = cfg.max_parents.value_or(p - 1);
    detail::Pdag g(p);
    GesResult result;

    if (cfg.forward) {
        while (true) {
            auto op = detail::best_insert(g, score, max_parents);
            if (!op.valid || !(op.delta > 0.0)) break;
            detail::apply_insert(g, op);
            ++result.inserts;
        }
    }
    if (cfg.backward) {
        while (true) {
            auto op = detail::best_delete(g, score);
            if (!op.valid || !(op.delta > 0.0)) break;
            detail::apply_delete(g, op);
            ++result.deletes;
        }
    }
    result.cpdag = g.to_graph(sorted.names);
    result.score = bic_score(stats, consistent_extension(result.cpdag), cfg.penalty);
    result.ridged = score.ridged();
    return result;
}

}  // namespace causal_audit
