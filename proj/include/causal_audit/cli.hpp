#pragma once

// The causal_audit command line. run_cli is kept separate from main() so the
// tests can drive it in-process. Exit codes: 0 success, 1 domain error (a
// JSON {error, detail} payload on stdout), 2 usage error.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "causal_audit/service.hpp"
#include "causal_audit/http.hpp"

#include <CLI11.hpp>

namespace causal_audit {

namespace detail {

inline std::pair<std::string, double> parse_assignment(const std::string& s) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) fail("UsageError", "expected VAR=VALUE, got '" + s + "'");
    double v = 0.0;
    if (!parse_number(s.substr(eq + 1), v)) fail("UsageError", "'" + s.substr(eq + 1) + "' is not a number");
    return {s.substr(0, eq), v};
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Causal graph queries, structure discovery, feature-set audits and fallout experiments"};
    app.require_subcommand(1);

    std::string graph_file, data_file, scm_file, query_file, arms_file, output, encoding_file, effect = "direct";
    std::vector<std::string> xs, ys, given, exposures, features, interventions;
    std::optional<std::string> outcome;
    bool minimal = false, table = false;
    double penalty = 1.0;
    std::size_t n = 0, max_parents = 0;
    std::uint64_t seed = 0;
    int port = 8080;
    std::string graph_dir;

    auto* graph = app.add_subcommand("graph", "Inspect a graph file");
    graph->require_subcommand(1);
    auto* check = graph->add_subcommand("check", "Validate a graph and summarize it");
    check->add_option("graph", graph_file, "Graph file (.graph text or .json)")->required();
    auto* dsep = graph->add_subcommand("dsep", "Test d-separation of X and Y given Z");
    dsep->add_option("graph", graph_file)->required();
    dsep->add_option("--x", xs)->required()->delimiter(',');
    dsep->add_option("--y", ys)->required()->delimiter(',');
    dsep->add_option("--given", given)->delimiter(',');

    auto add_query_flags = [&](CLI::App* cmd) {
        cmd->add_option("--exposure", exposures, "Exposures (default: nodes marked @exposure)")->delimiter(',');
        cmd->add_option("--outcome", outcome, "Outcome (default: the node marked @outcome)");
        cmd->add_option("--effect", effect, "Effect kind")->check(CLI::IsMember({"total", "direct"}));
    };
    auto* adjust = app.add_subcommand("adjust", "Adjustment sets");
    adjust->require_subcommand(1);
    auto* sets = adjust->add_subcommand("sets", "Enumerate sufficient adjustment sets");
    sets->add_option("graph", graph_file)->required();
    add_query_flags(sets);
    sets->add_flag("--minimal", minimal, "Only inclusion-minimal sets");

    auto* audit = app.add_subcommand("audit", "Audit a regression feature set for structural bias");
    audit->add_option("graph", graph_file)->required();
    add_query_flags(audit);
    audit->add_option("--features", features)->required()->delimiter(',');

    auto* discover = app.add_subcommand("discover", "Learn a CPDAG from a CSV file with GES");
    discover->add_option("data", data_file)->required();
    discover->add_option("--penalty", penalty)->check(CLI::PositiveNumber);
    discover->add_option("--max-parents", max_parents);
    discover->add_option("--encoding", encoding_file, "Ordinal level encoding (JSON)");
    discover->add_option("-o,--output", output, "Write the learned graph here (.graph or .json)");

    auto* simulate = app.add_subcommand("simulate", "Sample from a linear-Gaussian SCM");
    simulate->add_option("scm", scm_file)->required();
    simulate->add_option("--n", n)->required();
    simulate->add_option("--seed", seed);
    simulate->add_option("-o,--output", output, "CSV destination (default: stdout)");
    simulate->add_option("--do", interventions, "Intervention VAR=VALUE (repeatable)");

    auto* fallout = app.add_subcommand("fallout", "Compare feature-set arms against the SCM ground truth");
    fallout->add_option("scm", scm_file)->required();
    fallout->add_option("--query", query_file)->required();
    fallout->add_option("--arms", arms_file)->required();
    fallout->add_option("--n", n)->required();
    fallout->add_option("--seed", seed);
    fallout->add_flag("--table", table, "Print a text table instead of JSON");

    auto* serve = app.add_subcommand("serve", "Run the HTTP JSON service");
    serve->add_option("--port", port)->envname("CAUSAL_AUDIT_PORT")->check(CLI::Range(1, 65535));
    serve->add_option("--graph-dir", graph_dir, "Preload *.graph and *.json files from this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    auto emit = [&](const json& payload) { out << payload.dump() << "\n"; };
    try {
        const auto kind = parse_effect_kind(effect);
        auto exposure_list = exposures;
        if (*check) {
            emit(service::graph_check(load_graph(graph_file)));
        } else if (*dsep) {
            emit(service::dsep(load_graph(graph_file), xs, ys, given));
        } else if (*sets) {
            auto doc = load_graph(graph_file);
            emit(service::adjustment_sets(doc, service::query_for(doc, exposure_list, outcome, kind), minimal));
        } else if (*audit) {
            auto doc = load_graph(graph_file);
            emit(service::audit(doc, service::query_for(doc, exposure_list, outcome, kind), features));
        } else if (*discover) {
            OrdinalEncoding enc;
            if (!encoding_file.empty()) enc = encoding_from_json(parse_json_text(read_file(encoding_file)));
            GesConfig cfg;
            cfg.penalty = penalty;
            if (max_parents > 0) cfg.max_parents = max_parents;
            auto payload = service::discover(load_csv(data_file, enc), cfg);
            if (!output.empty()) save_graph(output, graph_from_json(payload));
            emit(payload);
        } else if (*simulate) {
            auto spec = load_scm(scm_file);
            InterventionSpec iv;
            for (const auto& s : interventions) iv.insert(detail::parse_assignment(s));
            auto data = iv.empty() ? sample(spec, n, seed) : sample_do(spec, iv, n, seed);
            if (output.empty()) {
                out << to_csv(data);
            } else {
                write_file(output, to_csv(data));
                emit({{"format_version", kFormatVersion},
                      {"rows", data.rows()},
                      {"columns", data.names},
                      {"output", output}});
            }
        } else if (*fallout) {
            auto report = fallout_experiment(load_scm(scm_file), query_from_json(parse_json_text(read_file(query_file))),
                                             arms_from_json(parse_json_text(read_file(arms_file))), n, seed);
            if (table)
                out << render_fallout_table(report);
            else
                emit(to_json(report));
        } else if (*serve) {
            service::GraphStore store;
            if (!graph_dir.empty()) http::preload(store, graph_dir, err);
            httplib::Server server;
            http::install_routes(server, store);
            err << "listening on 127.0.0.1:" << port << "\n";
            if (!server.listen("127.0.0.1", port)) fail("PortUnavailable", "cannot bind port " + std::to_string(port));
        }
    } catch (const CausalError& e) {
        if (e.name() == "UsageError") {
            err << e.what() << "\n";
            return 2;
        }
        emit(service::error_payload(e));
        err << "error: " << e.name() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        emit(service::error_payload(CausalError("InternalError", e.what())));
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace causal_audit
