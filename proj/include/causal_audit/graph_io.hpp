#pragma once

// Graph interchange: a line-oriented text format and its JSON equivalent.
//
//   # comment
//   node InsulationStandard @exposure
//   node EUIHeating @outcome
//   edge InsulationStandard -> EUIHeating
//   edge Area -- Volume
//
// Both writers emit nodes sorted by name and edges sorted by (tail, head) with
// undirected edges normalized to tail < head, so save -> load -> save is
// byte-identical.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "causal_audit/error.hpp"
#include "causal_audit/graph.hpp"

namespace causal_audit {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

enum class Role { none, exposure, outcome, adjusted, unobserved };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::none: return "none";
        case Role::exposure: return "exposure";
        case Role::outcome: return "outcome";
        case Role::adjusted: return "adjusted";
        case Role::unobserved: return "unobserved";
    }
    return "none";
}

inline Role parse_role(const std::string& s) {
    if (s == "exposure") return Role::exposure;
    if (s == "outcome") return Role::outcome;
    if (s == "adjusted") return Role::adjusted;
    if (s == "unobserved") return Role::unobserved;
    if (s == "none") return Role::none;
    fail("ParseError", "unknown role '" + s + "'");
}

/// A graph plus the per-node roles carried by the file formats.
struct GraphDocument {
    MixedGraph graph;
    std::map<std::string, Role> roles;  // nodes without a role are absent

    Role role(const std::string& node) const {
        auto it = roles.find(node);
        return it == roles.end() ? Role::none : it->second;
    }

    std::vector<std::string> nodes_with(Role r) const {
        std::vector<std::string> out;
        for (const auto& [name, role] : roles)
            if (role == r) out.push_back(name);
        return out;
    }

    friend bool operator==(const GraphDocument&, const GraphDocument&) = default;
};

inline GraphDocument make_document(const MixedGraph& g, std::map<std::string, Role> roles = {}) {
    GraphDocument doc{g, {}};
    for (auto& [name, role] : roles) {
        if (!g.find(name)) fail("UnknownNode", "role assigned to unknown node '" + name + "'");
        if (role != Role::none) doc.roles.emplace(name, role);
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Text format

inline GraphDocument parse_graph_text(std::istream& in) {
    std::vector<std::string> nodes;
    std::vector<Edge> edges;
    std::map<std::string, Role> roles;
    std::string line;
    int lineno = 0;
    auto parse_error = [&](const std::string& msg) {
        fail("ParseError", "line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream tokens(line);
        std::vector<std::string> tok;
        for (std::string t; tokens >> t;) tok.push_back(t);
        if (tok.empty()) continue;
        if (tok[0] == "node") {
            if (tok.size() < 2 || tok.size() > 3) parse_error("expected 'node <name> [@role]'");
            nodes.push_back(tok[1]);
            if (tok.size() == 3) {
                if (tok[2].size() < 2 || tok[2][0] != '@') parse_error("role must look like @exposure");
                auto role = parse_role(tok[2].substr(1));
                auto [it, inserted] = roles.emplace(tok[1], role);
                if (!inserted && it->second != role) parse_error("conflicting roles for '" + tok[1] + "'");
            }
        } else if (tok[0] == "edge") {
            if (tok.size() != 4) parse_error("expected 'edge <a> -> <b>' or 'edge <a> -- <b>'");
            if (tok[2] == "->") edges.push_back({tok[1], tok[3], EdgeKind::directed});
            else if (tok[2] == "--") edges.push_back({tok[1], tok[3], EdgeKind::undirected});
            else parse_error("unknown edge operator '" + tok[2] + "'");
        } else {
            parse_error("unknown directive '" + tok[0] + "'");
        }
    }
    return make_document(MixedGraph::build(std::move(nodes), edges), std::move(roles));
}

inline GraphDocument parse_graph_text(const std::string& text) {
    std::istringstream in(text);
    return parse_graph_text(in);
}

inline std::string to_graph_text(const GraphDocument& doc) {
    std::ostringstream out;
    for (const auto& n : doc.graph.names()) {
        out << "node " << n;
        if (auto r = doc.role(n); r != Role::none) out << " @" << to_string(r);
        out << '\n';
    }
    for (const auto& e : doc.graph.edges())
        out << "edge " << e.tail << (e.kind == EdgeKind::directed ? " -> " : " -- ") << e.head << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// JSON format

inline json to_json(const GraphDocument& doc) {
    json nodes = json::array();
    for (const auto& n : doc.graph.names()) {
        auto r = doc.role(n);
        nodes.push_back({{"name", n}, {"role", r == Role::none ? json(nullptr) : json(to_string(r))}});
    }
    json edges = json::array();
    for (const auto& e : doc.graph.edges())
        edges.push_back({{"tail", e.tail},
                         {"head", e.head},
                         {"kind", e.kind == EdgeKind::directed ? "directed" : "undirected"}});
    return {{"format_version", kFormatVersion}, {"nodes", nodes}, {"edges", edges}};
}

inline void check_format_version(const json& j) {
    if (!j.is_object()) fail("ParseError", "expected a JSON object");
    if (!j.contains("format_version") || j["format_version"] != kFormatVersion)
        fail("UnsupportedFormatVersion", "format_version must be 1");
}

inline GraphDocument graph_from_json(const json& j) {
    check_format_version(j);
    try {
        std::vector<std::string> nodes;
        std::map<std::string, Role> roles;
        for (const auto& n : j.at("nodes")) {
            auto name = n.at("name").get<std::string>();
            nodes.push_back(name);
            if (n.contains("role") && !n["role"].is_null()) {
                auto role = parse_role(n["role"].get<std::string>());
                auto [it, inserted] = roles.emplace(name, role);
                if (!inserted && it->second != role)
                    fail("ParseError", "conflicting roles for '" + name + "'");
            }
        }
        std::vector<Edge> edges;
        for (const auto& e : j.at("edges")) {
            auto kind = e.value("kind", std::string("directed"));
            if (kind != "directed" && kind != "undirected")
                fail("ParseError", "unknown edge kind '" + kind + "'");
            edges.push_back({e.at("tail").get<std::string>(), e.at("head").get<std::string>(),
                             kind == "directed" ? EdgeKind::directed : EdgeKind::undirected});
        }
        return make_document(MixedGraph::build(std::move(nodes), edges), std::move(roles));
    } catch (const json::exception& ex) {
        fail("ParseError", std::string("malformed graph JSON: ") + ex.what());
    }
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("FileNotFound", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("FileNotWritable", "cannot write '" + path + "'");
    out << content;
}

inline json parse_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& ex) {
        fail("ParseError", std::string("invalid JSON: ") + ex.what());
    }
}

/// Loads a graph file; `.json` files use the JSON format, anything else the
/// text format.
inline GraphDocument load_graph(const std::string& path) {
    auto text = read_file(path);
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
        return graph_from_json(parse_json_text(text));
    return parse_graph_text(text);
}

inline void save_graph(const std::string& path, const GraphDocument& doc) {
    if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0)
        write_file(path, to_json(doc).dump() + "\n");
    else
        write_file(path, to_graph_text(doc));
}

inline json path_to_json(const MixedGraph& g, const Path& p) { return g.names_of(p.nodes); }

}  // namespace causal_audit
