#pragma once

// JSON-over-HTTP front end. Routes parse the request body, call the shared
// handlers in service.hpp and map error names to status codes:
// 400 for malformed bodies, 404 for unknown graphs, 422 for every other
// domain error.

#include <filesystem>
#include <iostream>
#include <string>

// service.hpp pulls in Eigen, which must come before httplib: <resolv.h>
// defines a `_res` macro that collides with Eigen parameter names.
#include "causal_audit/service.hpp"

#include <httplib.h>

namespace causal_audit::http {

inline int status_for(const CausalError& e) {
    const std::string n = e.name();
    if (n == "BadRequest" || n == "ParseError" || n == "UnsupportedFormatVersion" || n == "InvalidGraphName")
        return 400;
    if (n == "UnknownGraph") return 404;
    return 422;
}

namespace detail {

inline json body_json(const httplib::Request& req) {
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) fail("BadRequest", "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& ex) {
        fail("BadRequest", std::string("request body is not valid JSON: ") + ex.what());
    }
}

template <typename T>
T field(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception&) {
        fail("BadRequest", std::string("field '") + key + "' has the wrong type");
    }
}

template <typename T>
T required(const json& j, const char* key) {
    if (!j.contains(key)) fail("BadRequest", std::string("missing field '") + key + "'");
    return field<T>(j, key, T{});
}

inline void reply(httplib::Response& res, const json& payload, int status = 200) {
    res.status = status;
    res.set_content(payload.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& f) {
    return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const CausalError& e) {
            reply(res, service::error_payload(e), status_for(e));
        } catch (const std::exception& e) {
            reply(res, service::error_payload(CausalError("InternalError", e.what())), 500);
        }
    };
}

inline QuerySpec query_from_body(const json& body, const GraphDocument& doc) {
    auto exposures = field<std::vector<std::string>>(body, "exposures", {});
    std::optional<std::string> outcome;
    if (body.contains("outcome") && !body["outcome"].is_null()) outcome = required<std::string>(body, "outcome");
    auto q = service::query_for(doc, std::move(exposures), outcome,
                                parse_effect_kind(field<std::string>(body, "effect_kind", "direct")));
    q.observed = field<std::vector<std::string>>(body, "observed", {});
    return q;
}

}  // namespace detail

/// Loads every *.graph and *.json file in `dir` into the store, named by file stem.
inline void preload(service::GraphStore& store, const std::string& dir, std::ostream& log = std::cerr) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) fail("FileNotFound", "'" + dir + "' is not a directory");
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto ext = entry.path().extension().string();
        if (!entry.is_regular_file() || (ext != ".graph" && ext != ".json")) continue;
        try {
            store.put(entry.path().stem().string(), load_graph(entry.path().string()));
        } catch (const CausalError& e) {
            log << "skipping " << entry.path().string() << ": " << e.what() << "\n";
        }
    }
}

inline void install_routes(httplib::Server& server, service::GraphStore& store) {
    using detail::guarded;
    using detail::reply;
    using httplib::Request;
    using httplib::Response;

    server.Get("/api/health", guarded([](const Request&, Response& res) {
                   reply(res, {{"format_version", kFormatVersion}, {"status", "ok"}});
               }));

    server.Put(R"(/api/graphs/([^/]+))", guarded([&store](const Request& req, Response& res) {
                   auto doc = graph_from_json(detail::body_json(req));
                   store.put(req.matches[1], doc);
                   reply(res, to_json(doc));
               }));

    server.Get(R"(/api/graphs/([^/]+))", guarded([&store](const Request& req, Response& res) {
                   reply(res, to_json(store.get(req.matches[1])));
               }));

    server.Post(R"(/api/graphs/([^/]+)/dsep)", guarded([&store](const Request& req, Response& res) {
                    auto doc = store.get(req.matches[1]);
                    auto body = detail::body_json(req);
                    reply(res, service::dsep(doc, detail::required<std::vector<std::string>>(body, "x"),
                                             detail::required<std::vector<std::string>>(body, "y"),
                                             detail::field<std::vector<std::string>>(body, "given", {})));
                }));

    server.Post(R"(/api/graphs/([^/]+)/adjustment-sets)", guarded([&store](const Request& req, Response& res) {
                    auto doc = store.get(req.matches[1]);
                    auto body = detail::body_json(req);
                    reply(res, service::adjustment_sets(doc, detail::query_from_body(body, doc),
                                                        detail::field<bool>(body, "minimal", false)));
                }));

    server.Post(R"(/api/graphs/([^/]+)/audit)", guarded([&store](const Request& req, Response& res) {
                    auto doc = store.get(req.matches[1]);
                    auto body = detail::body_json(req);
                    reply(res, service::audit(doc, detail::query_from_body(body, doc),
                                              detail::required<std::vector<std::string>>(body, "features")));
                }));

    // multipart fields: csv (required), penalty, max_parents, encoding (JSON text)
    server.Post("/api/discover", guarded([](const Request& req, Response& res) {
                    if (!req.is_multipart_form_data()) fail("BadRequest", "expected multipart/form-data");
                    if (!req.has_file("csv")) fail("BadRequest", "missing multipart field 'csv'");
                    GesConfig cfg;
                    try {
                        if (req.has_file("penalty")) cfg.penalty = std::stod(req.get_file_value("penalty").content);
                        if (req.has_file("max_parents"))
                            cfg.max_parents = std::stoul(req.get_file_value("max_parents").content);
                    } catch (const std::logic_error&) {
                        fail("BadRequest", "penalty and max_parents must be numbers");
                    }
                    OrdinalEncoding enc;
                    if (req.has_file("encoding"))
                        enc = encoding_from_json(parse_json_text(req.get_file_value("encoding").content));
                    reply(res, service::discover(parse_csv(req.get_file_value("csv").content, enc), cfg));
                }));

    server.Post("/api/fallout", guarded([](const Request& req, Response& res) {
                    auto body = detail::body_json(req);
                    auto scm = scm_from_json(detail::required<json>(body, "scm"));
                    auto query = query_from_json(detail::required<json>(body, "query"));
                    auto arms = arms_from_json(detail::required<json>(body, "arms"));
                    reply(res, service::fallout(scm, query, arms, detail::required<std::size_t>(body, "n"),
                                                detail::field<std::uint64_t>(body, "seed", 0)));
                }));
}

}  // namespace causal_audit::http
