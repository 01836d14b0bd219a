#pragma once

// Request handlers shared by the command line and the HTTP service. Each
// handler takes already-parsed inputs and returns the canonical JSON payload,
// so both surfaces serialize through the same code.

#include <cctype>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "causal_audit/adjustment.hpp"
#include "causal_audit/dataset.hpp"
#include "causal_audit/discovery.hpp"
#include "causal_audit/estimator.hpp"
#include "causal_audit/graph_io.hpp"
#include "causal_audit/scm.hpp"

namespace causal_audit::service {

/// Exposures/outcome not given explicitly fall back to the roles stored in the graph.
inline QuerySpec query_for(const GraphDocument& doc, std::vector<std::string> exposures,
                           std::optional<std::string> outcome, EffectKind effect) {
    QuerySpec q;
    q.exposures = exposures.empty() ? doc.nodes_with(Role::exposure) : std::move(exposures);
    if (outcome) {
        q.outcome = *outcome;
    } else {
        auto outs = doc.nodes_with(Role::outcome);
        if (outs.size() != 1) fail("InvalidQuery", "no outcome given and the graph does not mark exactly one @outcome");
        q.outcome = outs.front();
    }
    if (q.exposures.empty()) fail("InvalidQuery", "no exposures given and the graph marks none");
    q.effect = effect;
    return q;
}

inline json graph_check(const GraphDocument& doc) {
    const auto& g = doc.graph;
    return {{"format_version", kFormatVersion},
            {"nodes", g.size()},
            {"edges", g.edge_count()},
            {"acyclic", is_acyclic(g)},
            {"has_undirected", g.has_undirected_edges()},
            {"is_dag", is_acyclic(g) && !g.has_undirected_edges()}};
}

inline json dsep(const GraphDocument& doc, const std::vector<std::string>& x, const std::vector<std::string>& y,
                 const std::vector<std::string>& given) {
    return {{"format_version", kFormatVersion}, {"d_separated", d_separated(doc.graph, x, y, given)}};
}

inline json adjustment_sets(const GraphDocument& doc, const QuerySpec& spec, bool minimal_only) {
    const auto q = spec.resolve(doc);
    const auto sets = minimal_only ? minimal_sufficient_sets(doc.graph, q) : all_sufficient_sets(doc.graph, q);
    return {{"format_version", kFormatVersion},
            {"exposures", spec.exposures},
            {"outcome", spec.outcome},
            {"effect_kind", to_string(spec.effect)},
            {"minimal", minimal_only},
            {"sets", sets_to_json(doc.graph, sets)}};
}

inline json audit(const GraphDocument& doc, const QuerySpec& spec, const std::vector<std::string>& features) {
    const auto q = spec.resolve(doc);
    NodeList f;
    for (const auto& name : features) f.push_back(doc.graph.index(name));
    return to_json(doc.graph, audit_feature_set(doc.graph, q, f));
}

inline json discover(const Dataset& data, const GesConfig& cfg) {
    return to_json(make_document(ges(data, cfg).cpdag));
}

inline json fallout(const ScmSpec& scm, const QuerySpec& query, const std::vector<FalloutArmSpec>& arms, std::size_t n,
                    std::uint64_t seed) {
    return to_json(fallout_experiment(scm, query, arms, n, seed));
}

inline json error_payload(const CausalError& e) {
    return {{"format_version", kFormatVersion}, {"error", e.name()}, {"detail", e.detail()}};
}

/// In-memory named graphs.
/// Concurrent writers race; the last one wins.
class GraphStore {
public:
    static bool valid_name(const std::string& name) {
        if (name.empty() || name.size() > 128) return false;
        for (char c : name)
            if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
        return name.front() != '.';
    }

    void put(const std::string& name, GraphDocument doc) {
        if (!valid_name(name)) fail("InvalidGraphName", "graph names use letters, digits, '_', '-' and '.'");
        std::unique_lock lock(mu_);
        graphs_.insert_or_assign(name, std::move(doc));
    }

    GraphDocument get(const std::string& name) const {
        std::shared_lock lock(mu_);
        auto it = graphs_.find(name);
        if (it == graphs_.end()) fail("UnknownGraph", "no graph named '" + name + "'");
        return it->second;
    }

    std::vector<std::string> names() const {
        std::shared_lock lock(mu_);
        std::vector<std::string> out;
        for (const auto& [k, v] : graphs_) out.push_back(k);
        return out;
    }

private:
    mutable std::shared_mutex mu_;
    std::map<std::string, GraphDocument> graphs_;
};

}  // namespace causal_audit::service
