#pragma once

// Mixed graph store (directed + undirected edges) and the path semantics that
// everything else is built on: ancestry, simple-path enumeration, the
// directed / backdoor / closed path classification and d-separation.

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "causal_audit/error.hpp"

namespace causal_audit {

using NodeIndex = std::size_t;
using NodeList = std::vector<NodeIndex>;

enum class EdgeKind { directed, undirected };

struct Edge {
    std::string tail;
    std::string head;
    EdgeKind kind = EdgeKind::directed;

    friend bool operator==(const Edge&, const Edge&) = default;
};

/// A simple path, stored as node indices into the graph it was taken from.
struct Path {
    NodeList nodes;

    std::size_t length() const { return nodes.empty() ? 0 : nodes.size() - 1; }
    friend bool operator==(const Path&, const Path&) = default;
};

enum class PathClass { directed, backdoor, closed };

inline const char* to_string(PathClass c) {
    switch (c) {
        case PathClass::directed: return "directed";
        case PathClass::backdoor: return "backdoor";
        case PathClass::closed: return "closed";
    }
    return "closed";
}

inline bool is_valid_node_name(std::string_view name) {
    if (name.empty()) return false;
    return std::none_of(name.begin(), name.end(),
                        [](unsigned char c) { return std::isspace(c) != 0; });
}

/// Immutable node/edge store. Nodes are kept sorted by name (byte order), so
/// index order and lexicographic name order coincide; every deterministic
/// tie-break in the library relies on this.
class MixedGraph {
public:
    MixedGraph() = default;

    /// Validates and builds a graph. Byte-identical duplicate node names
    /// collapse to one node.
    static MixedGraph build(std::vector<std::string> nodes, std::span<const Edge> edges) {
        for (const auto& n : nodes) {
            if (!is_valid_node_name(n))
                fail("InvalidNodeName", "node name '" + n + "' is empty or contains whitespace");
        }
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

        MixedGraph g;
        g.names_ = std::move(nodes);
        g.marks_.assign(g.names_.size() * g.names_.size(), Mark::none);
        for (const auto& e : edges) {
            auto t = g.find(e.tail);
            auto h = g.find(e.head);
            if (!t) fail("UnknownEndpoint", "edge endpoint '" + e.tail + "' is not a node");
            if (!h) fail("UnknownEndpoint", "edge endpoint '" + e.head + "' is not a node");
            if (*t == *h) fail("SelfLoop", "self-loop on '" + e.tail + "'");
            if (g.adjacent(*t, *h))
                fail("DuplicateEdge", "more than one edge between '" + e.tail + "' and '" + e.head + "'");
            g.set_edge(*t, *h, e.kind);
        }
        return g;
    }

    static MixedGraph build(std::vector<std::string> nodes, std::initializer_list<Edge> edges) {
        return build(std::move(nodes), std::span<const Edge>(edges.begin(), edges.size()));
    }

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(NodeIndex i) const { return names_.at(i); }

    std::optional<NodeIndex> find(std::string_view name) const {
        auto it = std::lower_bound(names_.begin(), names_.end(), name);
        if (it == names_.end() || *it != name) return std::nullopt;
        return static_cast<NodeIndex>(it - names_.begin());
    }

    NodeIndex index(std::string_view name) const {
        auto i = find(name);
        if (!i) fail("UnknownNode", "unknown node '" + std::string(name) + "'");
        return *i;
    }

    NodeList indices(std::span<const std::string> names) const {
        NodeList out;
        out.reserve(names.size());
        for (const auto& n : names) out.push_back(index(n));
        return out;
    }

    std::vector<std::string> names_of(std::span<const NodeIndex> nodes) const {
        std::vector<std::string> out;
        out.reserve(nodes.size());
        for (auto i : nodes) out.push_back(name(i));
        return out;
    }

    /// tail -> head
    bool has_directed(NodeIndex tail, NodeIndex head) const {
        return mark(tail, head) == Mark::out;
    }
    bool has_undirected(NodeIndex a, NodeIndex b) const {
        return mark(a, b) == Mark::undirected;
    }
    bool adjacent(NodeIndex a, NodeIndex b) const { return mark(a, b) != Mark::none; }

    NodeList parents(NodeIndex v) const { return collect(v, Mark::in); }
    NodeList children(NodeIndex v) const { return collect(v, Mark::out); }
    NodeList undirected_neighbors(NodeIndex v) const { return collect(v, Mark::undirected); }
    NodeList adjacents(NodeIndex v) const {
        NodeList out;
        for (NodeIndex u = 0; u < size(); ++u)
            if (u != v && adjacent(v, u)) out.push_back(u);
        return out;
    }

    bool has_undirected_edges() const {
        return std::find(marks_.begin(), marks_.end(), Mark::undirected) != marks_.end();
    }

    /// Canonical edge list: directed edges as stored, undirected edges with
    /// tail < head, sorted by (tail, head).
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        for (NodeIndex a = 0; a < size(); ++a) {
            for (NodeIndex b = 0; b < size(); ++b) {
                auto m = mark(a, b);
                if (m == Mark::out) out.push_back({names_[a], names_[b], EdgeKind::directed});
                else if (m == Mark::undirected && a < b)
                    out.push_back({names_[a], names_[b], EdgeKind::undirected});
            }
        }
        return out;
    }

    std::size_t edge_count() const {
        std::size_t c = 0;
        for (NodeIndex a = 0; a < size(); ++a)
            for (NodeIndex b = a + 1; b < size(); ++b)
                if (adjacent(a, b)) ++c;
        return c;
    }

    /// A copy keeping only the edges for which `keep(tail, head, kind)` holds.
    template <typename Pred>
    MixedGraph filter_edges(Pred keep) const {
        MixedGraph g = *this;
        for (NodeIndex a = 0; a < size(); ++a) {
            for (NodeIndex b = 0; b < size(); ++b) {
                auto m = mark(a, b);
                bool drop = (m == Mark::out && !keep(a, b, EdgeKind::directed)) ||
                            (m == Mark::undirected && a < b && !keep(a, b, EdgeKind::undirected));
                if (drop) {
                    g.marks_[a * size() + b] = Mark::none;
                    g.marks_[b * size() + a] = Mark::none;
                }
            }
        }
        return g;
    }

    friend bool operator==(const MixedGraph&, const MixedGraph&) = default;

private:
    enum class Mark : std::uint8_t { none, out, in, undirected };

    Mark mark(NodeIndex a, NodeIndex b) const { return marks_[a * size() + b]; }

    void set_edge(NodeIndex t, NodeIndex h, EdgeKind kind) {
        if (kind == EdgeKind::directed) {
            marks_[t * size() + h] = Mark::out;
            marks_[h * size() + t] = Mark::in;
        } else {
            marks_[t * size() + h] = Mark::undirected;
            marks_[h * size() + t] = Mark::undirected;
        }
    }

    NodeList collect(NodeIndex v, Mark m) const {
        NodeList out;
        for (NodeIndex u = 0; u < size(); ++u)
            if (u != v && mark(v, u) == m) out.push_back(u);
        return out;
    }

    std::vector<std::string> names_;
    std::vector<Mark> marks_;
};

// ---------------------------------------------------------------------------
// Acyclicity and ancestry

/// Kahn's algorithm over directed edges; undirected edges are ignored.
/// Returns std::nullopt when the directed part has a cycle. Ties resolve to
/// the smallest index, so the order is deterministic.
inline std::optional<NodeList> topological_order(const MixedGraph& g) {
    const auto n = g.size();
    std::vector<std::size_t> indegree(n, 0);
    for (NodeIndex v = 0; v < n; ++v) indegree[v] = g.parents(v).size();
    NodeList order;
    order.reserve(n);
    std::vector<bool> done(n, false);
    for (std::size_t step = 0; step < n; ++step) {
        std::optional<NodeIndex> next;
        for (NodeIndex v = 0; v < n; ++v) {
            if (!done[v] && indegree[v] == 0) {
                next = v;
                break;
            }
        }
        if (!next) return std::nullopt;
        done[*next] = true;
        order.push_back(*next);
        for (auto c : g.children(*next)) --indegree[c];
    }
    return order;
}

inline bool is_acyclic(const MixedGraph& g) { return topological_order(g).has_value(); }

/// Throws NotADag unless the graph is fully directed and acyclic.
inline void require_dag(const MixedGraph& g) {
    if (g.has_undirected_edges())
        fail("NotADag", "graph has undirected edges; orient them (or take a consistent extension) first");
    if (!is_acyclic(g)) fail("NotADag", "graph has a directed cycle");
}

namespace detail {

inline std::vector<bool> closure(const MixedGraph& g, std::span<const NodeIndex> seeds, bool upward) {
    std::vector<bool> seen(g.size(), false);
    std::deque<NodeIndex> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
        auto v = queue.front();
        queue.pop_front();
        for (auto u : upward ? g.parents(v) : g.children(v)) {
            if (!seen[u]) {
                seen[u] = true;
                queue.push_back(u);
            }
        }
    }
    return seen;
}

inline NodeList mask_to_list(const std::vector<bool>& mask) {
    NodeList out;
    for (NodeIndex i = 0; i < mask.size(); ++i)
        if (mask[i]) out.push_back(i);
    return out;
}

inline void check_index(const MixedGraph& g, NodeIndex v) {
    if (v >= g.size()) fail("UnknownNode", "node index " + std::to_string(v) + " out of range");
}

}  // namespace detail

/// Strict ancestors of x along directed edges (x itself excluded unless it
/// lies on a cycle).
inline NodeList ancestors(const MixedGraph& g, NodeIndex x) {
    detail::check_index(g, x);
    NodeIndex seed[] = {x};
    return detail::mask_to_list(detail::closure(g, seed, true));
}

inline NodeList descendants(const MixedGraph& g, NodeIndex x) {
    detail::check_index(g, x);
    NodeIndex seed[] = {x};
    return detail::mask_to_list(detail::closure(g, seed, false));
}

/// Union of descendants of all seeds, as a membership mask.
inline std::vector<bool> descendant_mask(const MixedGraph& g, std::span<const NodeIndex> seeds) {
    return detail::closure(g, seeds, false);
}

inline std::vector<bool> ancestor_mask(const MixedGraph& g, std::span<const NodeIndex> seeds) {
    return detail::closure(g, seeds, true);
}

// ---------------------------------------------------------------------------
// Paths

/// All simple paths between x and y with at most `max_len` edges, traversing
/// edges regardless of direction. Ordered by length, then lexicographically by
/// node-name sequence.
inline std::vector<Path> enumerate_paths(const MixedGraph& g, NodeIndex x, NodeIndex y,
                                         std::size_t max_len) {
    detail::check_index(g, x);
    detail::check_index(g, y);
    if (x == y) fail("SameEndpoints", "path endpoints must differ");
    std::vector<Path> out;
    if (max_len == 0) return out;

    std::vector<NodeList> adj(g.size());
    for (NodeIndex v = 0; v < g.size(); ++v) adj[v] = g.adjacents(v);

    std::vector<bool> on_path(g.size(), false);
    NodeList stack{x};
    on_path[x] = true;
    // Iterative DFS keeping, per depth, the position in the adjacency list.
    std::vector<std::size_t> cursor{0};
    while (!stack.empty()) {
        auto v = stack.back();
        auto& pos = cursor.back();
        if (pos >= adj[v].size() || stack.size() - 1 >= max_len) {
            on_path[v] = false;
            stack.pop_back();
            cursor.pop_back();
            continue;
        }
        auto u = adj[v][pos++];
        if (on_path[u]) continue;
        if (u == y) {
            Path p{stack};
            p.nodes.push_back(y);
            out.push_back(std::move(p));
            continue;
        }
        on_path[u] = true;
        stack.push_back(u);
        cursor.push_back(0);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Path& a, const Path& b) { return a.nodes.size() < b.nodes.size(); });
    return out;
}

inline void validate_path(const MixedGraph& g, const Path& p) {
    if (p.nodes.size() < 2) fail("InvalidPath", "a path needs at least two nodes");
    std::vector<bool> seen(g.size(), false);
    for (std::size_t i = 0; i < p.nodes.size(); ++i) {
        detail::check_index(g, p.nodes[i]);
        if (seen[p.nodes[i]]) fail("InvalidPath", "path repeats node '" + g.name(p.nodes[i]) + "'");
        seen[p.nodes[i]] = true;
        if (i > 0 && !g.adjacent(p.nodes[i - 1], p.nodes[i]))
            fail("InvalidPath", "'" + g.name(p.nodes[i - 1]) + "' and '" + g.name(p.nodes[i]) +
                                    "' are not adjacent");
    }
}

/// A conditioning set prepared for repeated path queries: membership plus the
/// "is, or has a descendant, in the set" test used for colliders.
class Conditioning {
public:
    Conditioning(const MixedGraph& g, std::span<const NodeIndex> z)
        : member_(g.size(), false), activates_(ancestor_mask(g, z)) {
        for (auto v : z) {
            detail::check_index(g, v);
            member_[v] = true;
            activates_[v] = true;
        }
    }

    bool contains(NodeIndex v) const { return member_[v]; }
    /// True if conditioning on this set opens a collider at v.
    bool opens_collider(NodeIndex v) const { return activates_[v]; }

private:
    std::vector<bool> member_;
    std::vector<bool> activates_;
};

inline bool is_collider(const MixedGraph& g, const Path& p, std::size_t i) {
    return i > 0 && i + 1 < p.nodes.size() && g.has_directed(p.nodes[i - 1], p.nodes[i]) &&
           g.has_directed(p.nodes[i + 1], p.nodes[i]);
}

/// d-connection of a single path. Precondition (not rechecked here): g is a
/// DAG and p is a valid path in g.
inline bool path_open(const MixedGraph& g, const Path& p, const Conditioning& z) {
    if (z.contains(p.nodes.front()) || z.contains(p.nodes.back()))
        fail("EndpointConditioned", "a path endpoint is in the conditioning set");
    for (std::size_t i = 1; i + 1 < p.nodes.size(); ++i) {
        const auto v = p.nodes[i];
        if (is_collider(g, p, i)) {
            if (!z.opens_collider(v)) return false;
        } else if (z.contains(v)) {
            return false;
        }
    }
    return true;
}

inline bool path_open(const MixedGraph& g, const Path& p, std::span<const NodeIndex> z) {
    require_dag(g);
    validate_path(g, p);
    return path_open(g, p, Conditioning(g, z));
}

inline bool is_directed_path(const MixedGraph& g, const Path& p) {
    for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i)
        if (!g.has_directed(p.nodes[i], p.nodes[i + 1])) return false;
    return true;
}

inline PathClass classify_path(const MixedGraph& g, const Path& p, NodeIndex x,
                               std::span<const NodeIndex> z) {
    require_dag(g);
    validate_path(g, p);
    if (p.nodes.front() != x) fail("InvalidPath", "path does not start at '" + g.name(x) + "'");
    Conditioning cond(g, z);
    // Evaluate openness first so a conditioned endpoint is always reported.
    const bool open = path_open(g, p, cond);
    if (is_directed_path(g, p)) return PathClass::directed;
    return open ? PathClass::backdoor : PathClass::closed;
}

// ---------------------------------------------------------------------------
// d-separation

/// Nodes d-connected to `sources` given `z` (Bayes-ball style reachability
/// over (node, direction) states). Sources themselves are not reported.
inline std::vector<bool> d_connected_mask(const MixedGraph& g, std::span<const NodeIndex> sources,
                                          const std::vector<bool>& in_z) {
    const auto n = g.size();
    std::vector<NodeIndex> zlist;
    for (NodeIndex v = 0; v < n; ++v)
        if (in_z[v]) zlist.push_back(v);
    auto z_or_anc = ancestor_mask(g, zlist);
    for (auto v : zlist) z_or_anc[v] = true;

    std::vector<bool> reachable(n, false);
    // visited[2v] = arrived from a child (moving up), visited[2v+1] = from a parent.
    std::vector<bool> visited(2 * n, false);
    std::deque<std::pair<NodeIndex, bool>> queue;
    for (auto s : sources) queue.emplace_back(s, true);
    while (!queue.empty()) {
        auto [v, up] = queue.front();
        queue.pop_front();
        auto slot = 2 * v + (up ? 0 : 1);
        if (visited[slot]) continue;
        visited[slot] = true;
        if (!in_z[v]) reachable[v] = true;
        if (up && !in_z[v]) {
            for (auto p : g.parents(v)) queue.emplace_back(p, true);
            for (auto c : g.children(v)) queue.emplace_back(c, false);
        } else if (!up) {
            if (!in_z[v])
                for (auto c : g.children(v)) queue.emplace_back(c, false);
            if (z_or_anc[v])
                for (auto p : g.parents(v)) queue.emplace_back(p, true);
        }
    }
    for (auto s : sources) reachable[s] = false;
    return reachable;
}

/// True iff every path between xs and ys is blocked given z.
inline bool d_separated(const MixedGraph& g, std::span<const NodeIndex> xs,
                        std::span<const NodeIndex> ys, std::span<const NodeIndex> z) {
    require_dag(g);
    std::vector<int> owner(g.size(), 0);
    auto claim = [&](std::span<const NodeIndex> set, int tag) {
        for (auto v : set) {
            detail::check_index(g, v);
            if (owner[v] != 0 && owner[v] != tag)
                fail("OverlappingSets", "node '" + g.name(v) + "' appears in more than one set");
            owner[v] = tag;
        }
    };
    claim(xs, 1);
    claim(ys, 2);
    claim(z, 3);
    std::vector<bool> in_z(g.size(), false);
    for (auto v : z) in_z[v] = true;
    auto reach = d_connected_mask(g, xs, in_z);
    return std::none_of(ys.begin(), ys.end(), [&](NodeIndex y) { return reach[y]; });
}

inline bool d_separated(const MixedGraph& g, std::span<const std::string> xs,
                        std::span<const std::string> ys, std::span<const std::string> z) {
    auto xi = g.indices(xs), yi = g.indices(ys), zi = g.indices(z);
    return d_separated(g, xi, yi, zi);
}

}  // namespace causal_audit
