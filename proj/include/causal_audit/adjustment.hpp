#pragma once

// Backdoor-style adjustment: sufficiency checks, enumeration of (minimal)
// sufficient adjustment sets, and the feature-set bias audit.
//
// Two effect kinds are supported:
//   total  - the usual backdoor criterion: no descendant of an exposure in Z,
//            and every path entering an exposure through an arrowhead is
//            blocked by Z.
//   direct - the single-door criterion for direct effects: no descendant of
//            the outcome in Z, and every path between an exposure and the
//            outcome other than a direct exposure -> outcome edge is blocked.
//            Mediators may (and usually must) be adjusted for.
//
// Paths that pass through a second exposure are not considered on their own:
// their exposure-to-outcome suffix is already covered.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "causal_audit/error.hpp"
#include "causal_audit/graph.hpp"
#include "causal_audit/graph_io.hpp"

namespace causal_audit {

enum class EffectKind { total, direct };

inline const char* to_string(EffectKind k) { return k == EffectKind::total ? "total" : "direct"; }

inline EffectKind parse_effect_kind(const std::string& s) {
    if (s == "total") return EffectKind::total;
    if (s == "direct") return EffectKind::direct;
    fail("InvalidQuery", "effect kind must be 'total' or 'direct', got '" + s + "'");
}

struct CausalQuery {
    NodeList exposures;  // in the order given; the first is the primary exposure
    NodeIndex outcome = 0;
    NodeList observed;   // sorted candidate covariates
    EffectKind effect = EffectKind::total;
};

/// Builds and validates a query. When `observed` is empty every node other
/// than the exposures, the outcome and `unobserved` is a candidate covariate.
inline CausalQuery make_query(const MixedGraph& g, const std::vector<std::string>& exposures,
                              const std::string& outcome, EffectKind effect = EffectKind::total,
                              const std::vector<std::string>& observed = {},
                              const std::vector<std::string>& unobserved = {}) {
    if (exposures.empty()) fail("InvalidQuery", "at least one exposure is required");
    CausalQuery q;
    q.effect = effect;
    q.outcome = g.index(outcome);
    std::vector<bool> taken(g.size(), false);
    for (const auto& e : exposures) {
        auto i = g.index(e);
        if (i == q.outcome) fail("InvalidQuery", "'" + e + "' is both exposure and outcome");
        if (taken[i]) fail("InvalidQuery", "exposure '" + e + "' listed twice");
        taken[i] = true;
        q.exposures.push_back(i);
    }
    taken[q.outcome] = true;
    if (observed.empty()) {
        std::vector<bool> hidden(g.size(), false);
        for (const auto& u : unobserved) hidden[g.index(u)] = true;
        for (NodeIndex v = 0; v < g.size(); ++v)
            if (!taken[v] && !hidden[v]) q.observed.push_back(v);
    } else {
        for (const auto& o : observed) {
            auto i = g.index(o);
            if (taken[i]) fail("InvalidQuery", "observed set must exclude exposures and outcome ('" + o + "')");
            q.observed.push_back(i);
        }
        std::sort(q.observed.begin(), q.observed.end());
        q.observed.erase(std::unique(q.observed.begin(), q.observed.end()), q.observed.end());
    }
    return q;
}

inline bool is_exposure(const CausalQuery& q, NodeIndex v) {
    return std::find(q.exposures.begin(), q.exposures.end(), v) != q.exposures.end();
}

struct AdjustmentSet {
    NodeList members;
    bool minimal = false;

    friend bool operator==(const AdjustmentSet&, const AdjustmentSet&) = default;
};

inline constexpr std::size_t kMaxCandidates = 25;

namespace detail {

/// Every path between an exposure and the outcome with no other exposure in
/// its interior, in deterministic order (by exposure, then path order).
inline std::vector<Path> exposure_outcome_paths(const MixedGraph& g, const CausalQuery& q) {
    std::vector<Path> out;
    for (auto x : q.exposures) {
        for (auto& p : enumerate_paths(g, x, q.outcome, g.size())) {
            bool through_exposure = std::any_of(p.nodes.begin() + 1, p.nodes.end() - 1,
                                                [&](NodeIndex v) { return is_exposure(q, v); });
            if (!through_exposure) out.push_back(std::move(p));
        }
    }
    return out;
}

inline bool is_direct_edge_path(const MixedGraph& g, const Path& p) {
    return p.nodes.size() == 2 && g.has_directed(p.nodes[0], p.nodes[1]);
}

/// The paths an adjustment set has to block for this effect kind.
inline std::vector<Path> paths_to_block(const MixedGraph& g, const CausalQuery& q) {
    std::vector<Path> out;
    for (auto& p : exposure_outcome_paths(g, q)) {
        bool keep = q.effect == EffectKind::total ? g.has_directed(p.nodes[1], p.nodes[0])
                                                  : !is_direct_edge_path(g, p);
        if (keep) out.push_back(std::move(p));
    }
    return out;
}

/// Nodes that may never appear in an adjustment set for this effect kind.
inline std::vector<bool> forbidden_mask(const MixedGraph& g, const CausalQuery& q) {
    if (q.effect == EffectKind::total) return descendant_mask(g, q.exposures);
    NodeIndex y[] = {q.outcome};
    return descendant_mask(g, y);
}

inline void check_query(const MixedGraph& g, const CausalQuery& q) {
    require_dag(g);
    detail::check_index(g, q.outcome);
    for (auto x : q.exposures) detail::check_index(g, x);
    if (q.exposures.empty()) fail("InvalidQuery", "at least one exposure is required");
}

inline void check_subset_of_observed(const MixedGraph& g, const CausalQuery& q,
                                     std::span<const NodeIndex> z, const char* error) {
    for (auto v : z) {
        detail::check_index(g, v);
        if (!std::binary_search(q.observed.begin(), q.observed.end(), v))
            fail(error, "'" + g.name(v) + "' is not an observed covariate of the query");
    }
}

/// Path blocking compiled to bitmasks over the observed candidates: a path is
/// blocked by Z iff Z hits one of its non-colliders, or some collider has no
/// member of Z among itself and its descendants.
struct CompiledPath {
    std::uint32_t noncolliders = 0;
    std::vector<std::uint32_t> colliders;  // per collider: {c} ∪ desc(c), observed part

    bool blocked_by(std::uint32_t z) const {
        if (z & noncolliders) return true;
        return std::any_of(colliders.begin(), colliders.end(),
                           [&](std::uint32_t m) { return (z & m) == 0; });
    }
};

inline std::uint32_t to_mask(const NodeList& observed, const std::vector<bool>& members) {
    std::uint32_t m = 0;
    for (std::size_t k = 0; k < observed.size(); ++k)
        if (members[observed[k]]) m |= (1u << k);
    return m;
}

inline CompiledPath compile_path(const MixedGraph& g, const Path& p, const NodeList& observed) {
    CompiledPath c;
    std::vector<bool> single(g.size(), false);
    for (std::size_t i = 1; i + 1 < p.nodes.size(); ++i) {
        const auto v = p.nodes[i];
        if (is_collider(g, p, i)) {
            NodeIndex seed[] = {v};
            auto desc = descendant_mask(g, seed);
            desc[v] = true;
            c.colliders.push_back(to_mask(observed, desc));
        } else {
            std::fill(single.begin(), single.end(), false);
            single[v] = true;
            c.noncolliders |= to_mask(observed, single);
        }
    }
    return c;
}

}  // namespace detail

/// Directed paths from any exposure to the outcome.
inline std::vector<Path> proper_causal_paths(const MixedGraph& g, const CausalQuery& q) {
    detail::check_query(g, q);
    std::vector<Path> out;
    for (auto& p : detail::exposure_outcome_paths(g, q))
        if (is_directed_path(g, p)) out.push_back(std::move(p));
    return out;
}

/// Sufficiency of `z` for the query's effect kind, checked path by path.
inline bool satisfies_backdoor(const MixedGraph& g, const CausalQuery& q, std::span<const NodeIndex> z) {
    detail::check_query(g, q);
    detail::check_subset_of_observed(g, q, z, "InvalidAdjustmentSet");
    auto forbidden = detail::forbidden_mask(g, q);
    for (auto v : z)
        if (forbidden[v]) return false;
    Conditioning cond(g, z);
    for (const auto& p : detail::paths_to_block(g, q))
        if (path_open(g, p, cond)) return false;
    return true;
}

/// Every sufficient subset of the observed covariates, ordered by size and
/// then lexicographically by node name.
inline std::vector<AdjustmentSet> all_sufficient_sets(const MixedGraph& g, const CausalQuery& q) {
    detail::check_query(g, q);
    const auto& obs = q.observed;
    if (obs.size() > kMaxCandidates)
        fail("TooManyCandidates", std::to_string(obs.size()) + " observed covariates exceed the limit of " +
                                      std::to_string(kMaxCandidates));
    const std::uint32_t forbidden = detail::to_mask(obs, detail::forbidden_mask(g, q));
    std::vector<detail::CompiledPath> paths;
    for (const auto& p : detail::paths_to_block(g, q)) paths.push_back(detail::compile_path(g, p, obs));

    std::vector<AdjustmentSet> out;
    const std::size_t m = obs.size();
    // Combinations of each size in lexicographic order of positions; since
    // `obs` is sorted by name this is lexicographic by name as well.
    for (std::size_t k = 0; k <= m; ++k) {
        std::vector<std::size_t> pick(k);
        for (std::size_t i = 0; i < k; ++i) pick[i] = i;
        while (true) {
            std::uint32_t z = 0;
            for (auto i : pick) z |= (1u << i);
            if ((z & forbidden) == 0 &&
                std::all_of(paths.begin(), paths.end(), [&](const auto& p) { return p.blocked_by(z); })) {
                AdjustmentSet s;
                for (auto i : pick) s.members.push_back(obs[i]);
                out.push_back(std::move(s));
            }
            // advance to the next combination
            std::size_t i = k;
            while (i > 0 && pick[i - 1] == m - k + i - 1) --i;
            if (i == 0) break;
            ++pick[i - 1];
            for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
        }
    }
    return out;
}

inline std::vector<AdjustmentSet> minimal_sufficient_sets(const MixedGraph& g, const CausalQuery& q) {
    auto all = all_sufficient_sets(g, q);
    std::vector<AdjustmentSet> out;
    for (const auto& s : all) {
        bool has_smaller = std::any_of(out.begin(), out.end(), [&](const AdjustmentSet& m) {
            return std::includes(s.members.begin(), s.members.end(), m.members.begin(), m.members.end());
        });
        if (!has_smaller) out.push_back({s.members, true});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Feature-set audit

enum class SuggestionAction { add, remove };

struct Suggestion {
    SuggestionAction action;
    NodeIndex node;

    friend bool operator==(const Suggestion&, const Suggestion&) = default;
};

struct AuditReport {
    bool unbiased = true;
    std::vector<Path> open_biasing_paths;
    std::vector<Path> blocked_causal_paths;
    NodeList conditioned_colliders;
    std::vector<Suggestion> suggestions;
    std::vector<AdjustmentSet> minimal_sets;
};

namespace detail {

struct AuditCore {
    std::vector<Path> open_biasing;
    std::vector<Path> blocked_causal;
    NodeList conditioned_colliders;

    bool unbiased() const { return open_biasing.empty() && blocked_causal.empty(); }
};

inline AuditCore audit_core(const MixedGraph& g, const CausalQuery& q, const std::vector<Path>& paths,
                            std::span<const NodeIndex> features) {
    AuditCore core;
    Conditioning cond(g, features);
    std::vector<bool> collider_seen(g.size(), false);
    for (const auto& p : paths) {
        for (std::size_t i = 1; i + 1 < p.nodes.size(); ++i)
            if (is_collider(g, p, i) && cond.opens_collider(p.nodes[i])) collider_seen[p.nodes[i]] = true;

        const bool causal = q.effect == EffectKind::total ? is_directed_path(g, p) : is_direct_edge_path(g, p);
        const bool open = path_open(g, p, cond);
        if (causal) {
            // Only the total effect cares about intermediate nodes on causal
            // paths; a direct edge has none.
            if (!open) core.blocked_causal.push_back(p);
        } else if (open) {
            core.open_biasing.push_back(p);
        }
    }
    core.conditioned_colliders = mask_to_list(collider_seen);
    return core;
}

}  // namespace detail

/// Audits a regression feature set: features are treated as conditioned
/// (held fixed while the exposures vary), omitted covariates as marginalized.
inline AuditReport audit_feature_set(const MixedGraph& g, const CausalQuery& q,
                                     std::span<const NodeIndex> features) {
    detail::check_query(g, q);
    for (auto v : features) {
        detail::check_index(g, v);
        if (v == q.outcome || is_exposure(q, v))
            fail("FeatureIsExposureOrOutcome", "'" + g.name(v) + "' is an exposure or the outcome");
    }
    detail::check_subset_of_observed(g, q, features, "FeatureNotObserved");
    NodeList fs(features.begin(), features.end());
    std::sort(fs.begin(), fs.end());
    fs.erase(std::unique(fs.begin(), fs.end()), fs.end());

    const auto paths = detail::exposure_outcome_paths(g, q);
    auto core = detail::audit_core(g, q, paths, fs);

    AuditReport report;
    report.unbiased = core.unbiased();
    report.open_biasing_paths = std::move(core.open_biasing);
    report.blocked_causal_paths = std::move(core.blocked_causal);
    report.conditioned_colliders = std::move(core.conditioned_colliders);

    if (!report.unbiased) {
        for (auto v : q.observed) {
            if (std::binary_search(fs.begin(), fs.end(), v)) continue;
            NodeList edited = fs;
            edited.insert(std::upper_bound(edited.begin(), edited.end(), v), v);
            if (detail::audit_core(g, q, paths, edited).unbiased())
                report.suggestions.push_back({SuggestionAction::add, v});
        }
        for (auto v : fs) {
            NodeList edited;
            std::copy_if(fs.begin(), fs.end(), std::back_inserter(edited), [&](NodeIndex u) { return u != v; });
            if (detail::audit_core(g, q, paths, edited).unbiased())
                report.suggestions.push_back({SuggestionAction::remove, v});
        }
    }
    if (q.observed.size() <= kMaxCandidates) report.minimal_sets = minimal_sufficient_sets(g, q);
    return report;
}

// ---------------------------------------------------------------------------
// Name-level query description, as carried in query files and request bodies:
//   {"exposures": [...], "outcome": "...", "effect_kind": "total"|"direct",
//    "observed": [...], "t0": 0, "t1": 1, "format_version": 1}

struct QuerySpec {
    std::vector<std::string> exposures;
    std::string outcome;
    EffectKind effect = EffectKind::direct;  // the file-level default; see query_from_json
    std::vector<std::string> observed;  // empty: every other node
    double t0 = 0.0;
    double t1 = 1.0;

    CausalQuery resolve(const GraphDocument& doc) const {
        return make_query(doc.graph, exposures, outcome, effect, observed, doc.nodes_with(Role::unobserved));
    }
};

inline QuerySpec query_from_json(const json& j) {
    if (!j.is_object()) fail("ParseError", "query must be a JSON object");
    if (j.contains("format_version") && j["format_version"] != kFormatVersion)
        fail("UnsupportedFormatVersion", "format_version must be 1");
    QuerySpec q;
    try {
        q.exposures = j.at("exposures").get<std::vector<std::string>>();
        q.outcome = j.at("outcome").get<std::string>();
        q.effect = parse_effect_kind(j.value("effect_kind", std::string("direct")));
        q.observed = j.value("observed", std::vector<std::string>{});
        q.t0 = j.value("t0", 0.0);
        q.t1 = j.value("t1", 1.0);
    } catch (const json::exception& ex) {
        fail("ParseError", std::string("malformed query: ") + ex.what());
    }
    return q;
}

inline json to_json(const QuerySpec& q) {
    json j = {{"format_version", kFormatVersion},
              {"exposures", q.exposures},
              {"outcome", q.outcome},
              {"effect_kind", to_string(q.effect)},
              {"t0", q.t0},
              {"t1", q.t1}};
    if (!q.observed.empty()) j["observed"] = q.observed;
    return j;
}

// ---------------------------------------------------------------------------
// JSON

inline json sets_to_json(const MixedGraph& g, const std::vector<AdjustmentSet>& sets) {
    json out = json::array();
    for (const auto& s : sets) out.push_back(g.names_of(s.members));
    return out;
}

inline json to_json(const MixedGraph& g, const AuditReport& r) {
    auto paths = [&](const std::vector<Path>& ps) {
        json a = json::array();
        for (const auto& p : ps) a.push_back(path_to_json(g, p));
        return a;
    };
    json suggestions = json::array();
    for (const auto& s : r.suggestions)
        suggestions.push_back({{"action", s.action == SuggestionAction::add ? "add" : "remove"},
                               {"node", g.name(s.node)}});
    return {{"format_version", kFormatVersion},
            {"verdict", r.unbiased ? "unbiased" : "biased"},
            {"open_biasing_paths", paths(r.open_biasing_paths)},
            {"blocked_causal_paths", paths(r.blocked_causal_paths)},
            {"conditioned_colliders", g.names_of(r.conditioned_colliders)},
            {"suggestions", suggestions},
            {"minimal_sets", sets_to_json(g, r.minimal_sets)}};
}

}  // namespace causal_audit
