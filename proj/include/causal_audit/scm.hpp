#pragma once

// Linear-Gaussian structural causal models: specification, ancestral
// sampling, do-interventions and analytic ground-truth effects.
//
// Each variable is   value = intercept + sum(coefficient * parent) + noise_std * e,
// with e ~ N(0, 1) drawn from a seeded mt19937_64 stream via inverse-CDF
// normal variates (see Rng). Within this implementation a (spec, n, seed)
// triple always yields bit-identical data.

#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "causal_audit/dataset.hpp"
#include "causal_audit/error.hpp"
#include "causal_audit/graph.hpp"
#include "causal_audit/graph_io.hpp"

namespace causal_audit {

/// Seeded 64-bit generator with a fixed normal-variate algorithm: uniforms
/// from the top 53 bits of mt19937_64, normals by inverting the standard
/// normal CDF (Acklam's rational approximation polished by one Halley step).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }

    double normal() { return inverse_normal_cdf(uniform()); }

    /// Uniform integer in [0, bound) by rejection, so the stream is portable.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) fail("InvalidArgument", "bound must be positive");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t r;
        do {
            r = engine_();
        } while (r >= limit);
        return r % bound;
    }

    static double inverse_normal_cdf(double p) {
        static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                       1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
        static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                       6.680131188771972e+01,  -1.328068155288572e+01};
        static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                       -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
        static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                       3.754408661907416e+00};
        constexpr double plow = 0.02425;
        double x;
        if (p < plow) {
            double q = std::sqrt(-2 * std::log(p));
            x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
        } else if (p <= 1 - plow) {
            double q = p - 0.5, r = q * q;
            x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
                (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
        } else {
            double q = std::sqrt(-2 * std::log(1 - p));
            x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
                ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
        }
        // Halley refinement against the exact CDF.
        double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
        double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
        return x - u / (1 + x * u / 2);
    }

private:
    std::mt19937_64 engine_;
};

struct ScmVariable {
    std::string name;
    std::vector<std::string> parents;
    std::vector<double> coefficients;
    double intercept = 0.0;
    double noise_std = 1.0;
};

struct ScmSpec {
    std::vector<ScmVariable> variables;  // parents always precede children
    std::map<std::string, std::pair<double, double>> ranges;

    std::optional<std::size_t> find(const std::string& name) const {
        for (std::size_t i = 0; i < variables.size(); ++i)
            if (variables[i].name == name) return i;
        return std::nullopt;
    }

    std::size_t index(const std::string& name) const {
        auto i = find(name);
        if (!i) fail("UnknownVariable", "no SCM variable named '" + name + "'");
        return *i;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& v : variables) out.push_back(v.name);
        return out;
    }
};

inline void validate(const ScmSpec& spec) {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < spec.variables.size(); ++i) {
        const auto& v = spec.variables[i];
        if (!is_valid_node_name(v.name)) fail("InvalidScm", "invalid variable name '" + v.name + "'");
        if (!seen.emplace(v.name, i).second) fail("InvalidScm", "duplicate variable '" + v.name + "'");
        if (v.parents.size() != v.coefficients.size())
            fail("InvalidScm", "'" + v.name + "': coefficients and parents differ in length");
        if (!(v.noise_std >= 0.0) || !std::isfinite(v.noise_std) || !std::isfinite(v.intercept))
            fail("InvalidScm", "'" + v.name + "': noise_std must be finite and nonnegative");
        for (std::size_t k = 0; k < v.parents.size(); ++k) {
            if (seen.find(v.parents[k]) == seen.end() || v.parents[k] == v.name)
                fail("InvalidScm", "'" + v.name + "': parent '" + v.parents[k] + "' must be declared earlier");
            if (!std::isfinite(v.coefficients[k])) fail("InvalidScm", "'" + v.name + "': non-finite coefficient");
        }
        std::vector<std::string> ps = v.parents;
        std::sort(ps.begin(), ps.end());
        if (std::adjacent_find(ps.begin(), ps.end()) != ps.end())
            fail("InvalidScm", "'" + v.name + "' lists a parent twice");
    }
    for (const auto& [name, r] : spec.ranges) {
        if (seen.find(name) == seen.end()) fail("InvalidScm", "range for unknown variable '" + name + "'");
        if (!(r.first <= r.second)) fail("InvalidScm", "empty range for '" + name + "'");
    }
}

inline MixedGraph scm_graph(const ScmSpec& spec) {
    validate(spec);
    std::vector<Edge> edges;
    for (const auto& v : spec.variables)
        for (const auto& p : v.parents) edges.push_back({p, v.name, EdgeKind::directed});
    return MixedGraph::build(spec.names(), edges);
}

struct SampleOptions {
    bool clamp = false;  // clamp to spec.ranges after noise (breaks linearity)
};

using InterventionSpec = std::map<std::string, double>;

namespace detail {

inline Dataset simulate(const ScmSpec& spec, const InterventionSpec& iv, std::size_t n, std::uint64_t seed,
                        SampleOptions opts) {
    validate(spec);
    if (n < 1) fail("InvalidArgument", "sample size must be at least 1");
    const auto p = spec.variables.size();
    std::vector<std::optional<double>> fixed(p);
    for (const auto& [name, value] : iv) fixed[spec.index(name)] = value;

    std::vector<std::vector<std::size_t>> parent_idx(p);
    std::vector<std::optional<std::pair<double, double>>> range(p);
    for (std::size_t i = 0; i < p; ++i) {
        for (const auto& pn : spec.variables[i].parents) parent_idx[i].push_back(spec.index(pn));
        if (auto it = spec.ranges.find(spec.variables[i].name); opts.clamp && it != spec.ranges.end())
            range[i] = it->second;
    }

    Rng rng(seed);
    Eigen::MatrixXd m(n, p);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < p; ++i) {
            const auto& v = spec.variables[i];
            // Always consume the noise draw, so intervening on one variable
            // leaves every other variable's noise stream untouched.
            const double e = rng.normal();
            if (fixed[i]) {
                m(r, i) = *fixed[i];
                continue;
            }
            double x = v.intercept + v.noise_std * e;
            for (std::size_t k = 0; k < parent_idx[i].size(); ++k) x += v.coefficients[k] * m(r, parent_idx[i][k]);
            if (range[i]) x = std::clamp(x, range[i]->first, range[i]->second);
            m(r, i) = x;
        }
    }
    return make_dataset(spec.names(), std::move(m));
}

}  // namespace detail

inline Dataset sample(const ScmSpec& spec, std::size_t n, std::uint64_t seed, SampleOptions opts = {}) {
    return detail::simulate(spec, {}, n, seed, opts);
}

inline Dataset sample_do(const ScmSpec& spec, const InterventionSpec& iv, std::size_t n, std::uint64_t seed,
                         SampleOptions opts = {}) {
    return detail::simulate(spec, iv, n, seed, opts);
}

/// Total effect of every variable's unit shift on each variable: the sum over
/// directed paths of the product of edge coefficients, computed by
/// propagation in variable order.
inline std::vector<double> total_effects_of(const ScmSpec& spec, std::size_t source) {
    std::vector<double> effect(spec.variables.size(), 0.0);
    effect[source] = 1.0;
    for (std::size_t i = source + 1; i < spec.variables.size(); ++i) {
        const auto& v = spec.variables[i];
        for (std::size_t k = 0; k < v.parents.size(); ++k) effect[i] += v.coefficients[k] * effect[spec.index(v.parents[k])];
    }
    return effect;
}

/// Analytic average causal effect E[Y | do(X=t1)] - E[Y | do(X=t0)].
inline double true_ace(const ScmSpec& spec, const std::string& exposure, double t1, double t0,
                       const std::string& outcome) {
    validate(spec);
    const auto x = spec.index(exposure);
    const auto y = spec.index(outcome);
    if (x == y) fail("InvalidArgument", "exposure and outcome must differ");
    return (t1 - t0) * total_effects_of(spec, x)[y];
}

/// Controlled direct effect: the exposure's own coefficient in the outcome's
/// structural equation, times (t1 - t0). Zero when it is not a parent.
inline double true_direct_effect(const ScmSpec& spec, const std::string& exposure, double t1, double t0,
                                 const std::string& outcome) {
    validate(spec);
    spec.index(exposure);
    const auto& y = spec.variables[spec.index(outcome)];
    if (exposure == outcome) fail("InvalidArgument", "exposure and outcome must differ");
    for (std::size_t k = 0; k < y.parents.size(); ++k)
        if (y.parents[k] == exposure) return (t1 - t0) * y.coefficients[k];
    return 0.0;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const ScmSpec& spec) {
    json vars = json::array();
    for (const auto& v : spec.variables)
        vars.push_back({{"name", v.name},
                        {"parents", v.parents},
                        {"coefficients", v.coefficients},
                        {"intercept", v.intercept},
                        {"noise_std", v.noise_std}});
    json ranges = json::object();
    for (const auto& [name, r] : spec.ranges) ranges[name] = {r.first, r.second};
    return {{"format_version", kFormatVersion}, {"variables", vars}, {"ranges", ranges}};
}

inline ScmSpec scm_from_json(const json& j) {
    check_format_version(j);
    ScmSpec spec;
    try {
        for (const auto& v : j.at("variables")) {
            ScmVariable var;
            var.name = v.at("name").get<std::string>();
            var.parents = v.value("parents", std::vector<std::string>{});
            var.coefficients = v.value("coefficients", std::vector<double>{});
            var.intercept = v.value("intercept", 0.0);
            var.noise_std = v.value("noise_std", 1.0);
            spec.variables.push_back(std::move(var));
        }
        if (j.contains("ranges"))
            for (const auto& [name, r] : j["ranges"].items())
                spec.ranges[name] = {r.at(0).get<double>(), r.at(1).get<double>()};
    } catch (const json::exception& ex) {
        fail("ParseError", std::string("malformed SCM JSON: ") + ex.what());
    }
    validate(spec);
    return spec;
}

inline ScmSpec load_scm(const std::string& path) { return scm_from_json(parse_json_text(read_file(path))); }

}  // namespace causal_audit
