#include <gtest/gtest.h>

#include "causal_audit/adjustment.hpp"
#include "test_support.hpp"

using namespace causal_audit;
using test_support::dag;

namespace {

template <typename F>
std::string error_name(F&& f) {
    try {
        f();
    } catch (const CausalError& e) {
        return e.name();
    }
    return "";
}

using Names = std::vector<std::string>;

std::vector<Names> set_names(const MixedGraph& g, const std::vector<AdjustmentSet>& sets) {
    std::vector<Names> out;
    for (const auto& s : sets) out.push_back(g.names_of(s.members));
    return out;
}

bool sufficient(const MixedGraph& g, const CausalQuery& q, const Names& z) {
    return satisfies_backdoor(g, q, g.indices(z));
}

MixedGraph without_edges(const MixedGraph& g, std::function<bool(NodeIndex, NodeIndex)> drop) {
    return g.filter_edges([&](NodeIndex t, NodeIndex h, EdgeKind) { return !drop(t, h); });
}

// Independent oracles. Total effect: no descendant of any exposure in z, and
// z d-separates exposures from outcome once every exposure's outgoing edges
// are cut. Direct effect (single exposure): no descendant of the outcome in
// z, and z d-separates exposure and outcome once the direct edge is cut.
bool total_oracle(const MixedGraph& g, const CausalQuery& q, const NodeList& z) {
    auto desc = descendant_mask(g, q.exposures);
    for (auto v : z)
        if (desc[v]) return false;
    auto cut = without_edges(g, [&](NodeIndex t, NodeIndex) { return is_exposure(q, t); });
    return d_separated(cut, q.exposures, NodeList{q.outcome}, z);
}

bool direct_oracle(const MixedGraph& g, const CausalQuery& q, const NodeList& z) {
    auto desc = descendant_mask(g, NodeList{q.outcome});
    for (auto v : z)
        if (desc[v]) return false;
    const auto x = q.exposures.front();
    auto cut = without_edges(g, [&](NodeIndex t, NodeIndex h) { return t == x && h == q.outcome; });
    return d_separated(cut, NodeList{x}, NodeList{q.outcome}, z);
}

MixedGraph confounder_with_w() { return dag({"T", "W", "Y", "Z"}, {{"Z", "T"}, {"Z", "Y"}, {"T", "Y"}}); }

MixedGraph m_structure() {
    return dag({"T", "U", "Y", "Z1", "Z2"}, {{"Z1", "T"}, {"Z1", "U"}, {"Z2", "U"}, {"Z2", "Y"}, {"T", "Y"}});
}

const Names kScenarioII{"HeatingSetpoint", "ACH", "PPA", "Volume", "Area",
                        "WWRNorth", "WWREast", "WWRSouth", "WWRWest"};

CausalQuery building_query(const GraphDocument& doc, EffectKind k = EffectKind::direct) {
    return make_query(doc.graph, {"InsulationStandard", "HeatingSystem"}, "EUIHeating", k);
}

}  // namespace

TEST(Query, Validation) {
    auto g = confounder_with_w();
    EXPECT_EQ(error_name([&] { make_query(g, {}, "Y"); }), "InvalidQuery");
    EXPECT_EQ(error_name([&] { make_query(g, {"Y"}, "Y"); }), "InvalidQuery");
    EXPECT_EQ(error_name([&] { make_query(g, {"T"}, "Y", EffectKind::total, {"T"}); }), "InvalidQuery");
    EXPECT_EQ(error_name([&] { make_query(g, {"Q"}, "Y"); }), "UnknownNode");
    auto q = make_query(g, {"T"}, "Y", EffectKind::total, {}, {"W"});
    EXPECT_EQ(g.names_of(q.observed), (Names{"Z"}));
}

TEST(ProperCausalPaths, Examples) {
    auto g = dag({"T", "Y"}, {{"T", "Y"}});
    auto ps = proper_causal_paths(g, make_query(g, {"T"}, "Y"));
    ASSERT_EQ(ps.size(), 1u);
    EXPECT_EQ(test_support::names(g, ps[0]), (Names{"T", "Y"}));

    auto m = dag({"M", "T", "Y"}, {{"T", "M"}, {"M", "Y"}, {"T", "Y"}});
    EXPECT_EQ(proper_causal_paths(m, make_query(m, {"T"}, "Y")).size(), 2u);
}

TEST(ProperCausalPaths, BuildingIncludesConstructionAreaPath) {
    auto doc = test_support::building();
    auto ps = proper_causal_paths(doc.graph, make_query(doc.graph, {"InsulationStandard"}, "EUIHeating"));
    bool found = false;
    for (const auto& p : ps)
        found |= test_support::names(doc.graph, p) == Names{"InsulationStandard", "ConstructionArea", "EUIHeating"};
    EXPECT_TRUE(found);
}

TEST(Backdoor, Confounder) {
    auto g = confounder_with_w();
    auto q = make_query(g, {"T"}, "Y");
    EXPECT_TRUE(sufficient(g, q, {"Z"}));
    EXPECT_FALSE(sufficient(g, q, {}));
}

TEST(Backdoor, MediatorIsForbiddenForTotal) {
    auto g = dag({"M", "T", "Y"}, {{"T", "M"}, {"M", "Y"}});
    EXPECT_FALSE(sufficient(g, make_query(g, {"T"}, "Y"), {"M"}));
    EXPECT_TRUE(sufficient(g, make_query(g, {"T"}, "Y"), {}));
}

TEST(Backdoor, BuildingFigureSet) {
    auto doc = test_support::building();
    EXPECT_TRUE(sufficient(doc.graph, building_query(doc), {"ConstructionArea", "FloorHeight", "Volume"}));
}

TEST(Backdoor, BuildingTotalEffectCannotUseMediator) {
    // ConstructionArea is a child of InsulationStandard, so no set containing
    // it is admissible for the total effect.
    auto doc = test_support::building();
    EXPECT_FALSE(sufficient(doc.graph, building_query(doc, EffectKind::total),
                            {"ConstructionArea", "FloorHeight", "Volume"}));
}

TEST(Backdoor, Errors) {
    auto g = confounder_with_w();
    auto q = make_query(g, {"T"}, "Y", EffectKind::total, {"Z"});
    EXPECT_EQ(error_name([&] { satisfies_backdoor(g, q, g.indices(Names{"W"})); }), "InvalidAdjustmentSet");
    EXPECT_EQ(error_name([&] { satisfies_backdoor(g, q, NodeList{42}); }), "UnknownNode");
}

TEST(AllSets, Examples) {
    auto g = confounder_with_w();
    EXPECT_EQ(set_names(g, all_sufficient_sets(g, make_query(g, {"T"}, "Y"))), (std::vector<Names>{{"Z"}, {"W", "Z"}}));

    auto h = dag({"T", "W", "Y"}, {{"T", "Y"}});
    EXPECT_EQ(set_names(h, all_sufficient_sets(h, make_query(h, {"T"}, "Y"))), (std::vector<Names>{{}, {"W"}}));
}

TEST(AllSets, BuildingContainsFigureSet) {
    auto doc = test_support::building();
    auto sets = set_names(doc.graph, all_sufficient_sets(doc.graph, building_query(doc)));
    EXPECT_NE(std::find(sets.begin(), sets.end(), Names{"ConstructionArea", "FloorHeight", "Volume"}), sets.end());
}

TEST(AllSets, TooManyCandidates) {
    std::vector<std::string> nodes{"T", "Y"};
    for (int i = 0; i < 26; ++i) nodes.push_back("C" + std::to_string(i));
    auto g = MixedGraph::build(nodes, {{"T", "Y", EdgeKind::directed}});
    EXPECT_EQ(error_name([&] { all_sufficient_sets(g, make_query(g, {"T"}, "Y")); }), "TooManyCandidates");
}

TEST(MinimalSets, Examples) {
    auto g = confounder_with_w();
    auto mins = minimal_sufficient_sets(g, make_query(g, {"T"}, "Y"));
    EXPECT_EQ(set_names(g, mins), (std::vector<Names>{{"Z"}}));
    EXPECT_TRUE(mins[0].minimal);

    auto m = m_structure();
    auto qm = make_query(m, {"T"}, "Y");
    EXPECT_EQ(set_names(m, minimal_sufficient_sets(m, qm)), (std::vector<Names>{{}}));
    EXPECT_FALSE(sufficient(m, qm, {"U"}));
    EXPECT_TRUE(sufficient(m, qm, {"U", "Z1"}));
}

TEST(MinimalSets, BuildingIncludesFigureSet) {
    auto doc = test_support::building();
    auto sets = set_names(doc.graph, minimal_sufficient_sets(doc.graph, building_query(doc)));
    EXPECT_EQ(sets, (std::vector<Names>{{"Area", "ConstructionArea"}, {"ConstructionArea", "FloorHeight", "Volume"}}));
}

// The enumeration agrees with the cut-graph oracles on the random corpus, and
// every minimal set has no sufficient proper subset.
TEST(Oracle, RandomCorpusSingleExposure) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        auto g = test_support::random_dag(seed, 3, 7);
        for (NodeIndex x = 0; x < g.size(); ++x)
            for (NodeIndex y = 0; y < g.size(); ++y) {
                if (x == y) continue;
                for (auto kind : {EffectKind::total, EffectKind::direct}) {
                    auto q = make_query(g, {g.name(x)}, g.name(y), kind);
                    auto sets = all_sufficient_sets(g, q);
                    std::vector<NodeList> expected;
                    for (const auto& z : test_support::subsets(q.observed)) {
                        bool ok = kind == EffectKind::total ? total_oracle(g, q, z) : direct_oracle(g, q, z);
                        ASSERT_EQ(satisfies_backdoor(g, q, z), ok) << "seed " << seed;
                        if (ok) expected.push_back(z);
                    }
                    std::vector<NodeList> got;
                    for (const auto& s : sets) got.push_back(s.members);
                    std::sort(expected.begin(), expected.end());
                    std::sort(got.begin(), got.end());
                    ASSERT_EQ(got, expected) << "seed " << seed;

                    for (const auto& m : minimal_sufficient_sets(g, q))
                        for (const auto& sub : test_support::subsets(m.members))
                            if (sub.size() < m.members.size()) {
                                ASSERT_FALSE(satisfies_backdoor(g, q, sub));
                            }
                }
            }
    }
}

TEST(Oracle, RandomCorpusTwoExposuresTotal) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto g = test_support::random_dag(seed, 4, 7);
        auto q = make_query(g, {g.name(0), g.name(1)}, g.name(g.size() - 1));
        for (const auto& z : test_support::subsets(q.observed))
            ASSERT_EQ(satisfies_backdoor(g, q, z), total_oracle(g, q, z)) << "seed " << seed;
    }
}

TEST(Ordering, BySizeThenLexicographic) {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto g = test_support::random_dag(seed, 4, 7);
        auto sets = all_sufficient_sets(g, make_query(g, {g.name(0)}, g.name(g.size() - 1)));
        for (std::size_t i = 1; i < sets.size(); ++i) {
            const auto& a = sets[i - 1].members;
            const auto& b = sets[i].members;
            ASSERT_TRUE(a.size() < b.size() || (a.size() == b.size() && a < b));
        }
    }
}

TEST(Audit, ScenarioIIIsBiasedThroughAreaAndVolume) {
    auto doc = test_support::building();
    const auto& g = doc.graph;
    auto r = audit_feature_set(g, building_query(doc), g.indices(kScenarioII));
    EXPECT_FALSE(r.unbiased);
    bool via_ca = false, via_area_volume = false;
    for (const auto& p : r.open_biasing_paths) {
        auto n = test_support::names(g, p);
        via_ca |= n == Names{"InsulationStandard", "ConstructionArea", "EUIHeating"};
        via_area_volume |= std::find(n.begin(), n.end(), "Area") != n.end() &&
                           std::find(n.begin(), n.end(), "Volume") != n.end();
    }
    EXPECT_TRUE(via_ca);
    EXPECT_TRUE(via_area_volume);
    ASSERT_EQ(r.suggestions.size(), 1u);
    EXPECT_EQ(r.suggestions[0], (Suggestion{SuggestionAction::add, g.index("ConstructionArea")}));
    EXPECT_EQ(set_names(g, r.minimal_sets).size(), 2u);
}

TEST(Audit, ScenarioIIWithConstructionAreaIsUnbiased) {
    auto doc = test_support::building();
    auto f = kScenarioII;
    f.push_back("ConstructionArea");
    auto r = audit_feature_set(doc.graph, building_query(doc), doc.graph.indices(f));
    EXPECT_TRUE(r.unbiased);
    EXPECT_TRUE(r.open_biasing_paths.empty());
    EXPECT_TRUE(r.suggestions.empty());
}

TEST(Audit, MediatorBlocksTotalEffect) {
    auto g = dag({"M", "T", "Y"}, {{"T", "M"}, {"M", "Y"}});
    auto r = audit_feature_set(g, make_query(g, {"T"}, "Y"), g.indices(Names{"M"}));
    EXPECT_FALSE(r.unbiased);
    ASSERT_EQ(r.blocked_causal_paths.size(), 1u);
    EXPECT_EQ(test_support::names(g, r.blocked_causal_paths[0]), (Names{"T", "M", "Y"}));
    EXPECT_EQ(r.suggestions, (std::vector<Suggestion>{{SuggestionAction::remove, g.index("M")}}));

    auto direct = audit_feature_set(g, make_query(g, {"T"}, "Y", EffectKind::direct), g.indices(Names{"M"}));
    EXPECT_TRUE(direct.unbiased);
}

TEST(Audit, ConditionedColliderReported) {
    auto m = m_structure();
    auto r = audit_feature_set(m, make_query(m, {"T"}, "Y"), m.indices(Names{"U"}));
    EXPECT_FALSE(r.unbiased);
    EXPECT_EQ(m.names_of(r.conditioned_colliders), (Names{"U"}));
    // either dropping U or adding a side of the M repairs it
    EXPECT_EQ(r.suggestions.size(), 3u);
    EXPECT_EQ(r.suggestions.back(), (Suggestion{SuggestionAction::remove, m.index("U")}));
}

TEST(Audit, Errors) {
    auto g = confounder_with_w();
    auto q = make_query(g, {"T"}, "Y", EffectKind::total, {"Z"});
    EXPECT_EQ(error_name([&] { audit_feature_set(g, q, g.indices(Names{"T"})); }), "FeatureIsExposureOrOutcome");
    EXPECT_EQ(error_name([&] { audit_feature_set(g, q, g.indices(Names{"Y"})); }), "FeatureIsExposureOrOutcome");
    EXPECT_EQ(error_name([&] { audit_feature_set(g, q, g.indices(Names{"W"})); }), "FeatureNotObserved");
}

TEST(Audit, VerdictMatchesDefinitionAndSoundness) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto g = test_support::random_dag(seed, 3, 6);
        auto q = make_query(g, {g.name(0)}, g.name(g.size() - 1));
        auto desc = descendant_mask(g, q.exposures);
        for (const auto& f : test_support::subsets(q.observed)) {
            auto r = audit_feature_set(g, q, f);
            ASSERT_EQ(r.unbiased, r.open_biasing_paths.empty() && r.blocked_causal_paths.empty());
            if (r.unbiased) {
                NodeList nd;
                for (auto v : f)
                    if (!desc[v]) nd.push_back(v);
                ASSERT_TRUE(satisfies_backdoor(g, q, nd)) << "seed " << seed;
            }
            for (const auto& s : r.suggestions) {
                NodeList edited = f;
                if (s.action == SuggestionAction::add)
                    edited.push_back(s.node);
                else
                    edited.erase(std::find(edited.begin(), edited.end(), s.node));
                ASSERT_TRUE(audit_feature_set(g, q, edited).unbiased);
            }
        }
    }
}

TEST(Audit, IrrelevantNodeNeverChangesVerdict) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        auto base = test_support::random_dag(seed, 3, 6);
        // add an isolated node and a node hanging off nothing on the X..Y paths
        auto names = base.names();
        names.push_back("Ziso");
        names.push_back("Zleaf");
        auto edges = base.edges();
        edges.push_back({"Ziso", "Zleaf", EdgeKind::directed});
        auto g = MixedGraph::build(names, edges);
        auto q = make_query(g, {base.name(0)}, base.name(base.size() - 1));
        NodeList pool;
        for (auto v : q.observed)
            if (g.name(v)[0] != 'Z') pool.push_back(v);
        for (const auto& f : test_support::subsets(pool)) {
            const bool v0 = audit_feature_set(g, q, f).unbiased;
            for (const char* extra : {"Ziso", "Zleaf"}) {
                auto f2 = f;
                f2.push_back(g.index(extra));
                ASSERT_EQ(audit_feature_set(g, q, f2).unbiased, v0) << "seed " << seed;
            }
        }
    }
}

TEST(Json, AuditReportFields) {
    auto doc = test_support::building();
    auto r = audit_feature_set(doc.graph, building_query(doc), doc.graph.indices(kScenarioII));
    auto j = to_json(doc.graph, r);
    EXPECT_EQ(j["format_version"], 1);
    EXPECT_EQ(j["verdict"], "biased");
    for (const char* k : {"open_biasing_paths", "blocked_causal_paths", "conditioned_colliders", "suggestions",
                          "minimal_sets"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["suggestions"][0]["action"], "add");
    EXPECT_EQ(j["suggestions"][0]["node"], "ConstructionArea");
}

TEST(Json, QuerySpecRoundTrip) {
    QuerySpec q{{"InsulationStandard", "HeatingSystem"}, "EUIHeating", EffectKind::total, {}, 0.0, 2.0};
    auto back = query_from_json(to_json(q));
    EXPECT_EQ(back.exposures, q.exposures);
    EXPECT_EQ(back.effect, EffectKind::total);
    EXPECT_EQ(back.t1, 2.0);
    EXPECT_EQ(query_from_json(json{{"exposures", {"A"}}, {"outcome", "B"}}).effect, EffectKind::direct);
    EXPECT_EQ(error_name([] { query_from_json(json{{"exposures", {"A"}}}); }), "ParseError");
    EXPECT_EQ(error_name([] { query_from_json(json{{"exposures", {"A"}}, {"outcome", "B"}, {"effect_kind", "x"}}); }),
              "InvalidQuery");
}
