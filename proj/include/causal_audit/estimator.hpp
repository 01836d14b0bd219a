#pragma once

// Regression fitting, accuracy metrics, k-fold cross-validation, scenario
// prediction and the fallout experiment: fit several feature sets on data
// simulated from an SCM and compare each one's estimated exposure effect with
// the analytic ground truth and with the structural audit.

#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causal_audit/adjustment.hpp"
#include "causal_audit/dataset.hpp"
#include "causal_audit/error.hpp"
#include "causal_audit/scm.hpp"

namespace causal_audit {

struct LinearModel {
    std::vector<std::string> feature_names;
    Eigen::VectorXd coefficients;
    double intercept = 0.0;
    Eigen::VectorXd std_errors;  // homoskedastic standard errors of the coefficients

    double coefficient(const std::string& feature) const {
        for (std::size_t i = 0; i < feature_names.size(); ++i)
            if (feature_names[i] == feature) return coefficients(static_cast<Eigen::Index>(i));
        fail("MissingFeature", "'" + feature + "' is not a model feature");
    }

    double predict(const std::map<std::string, double>& row) const {
        double y = intercept;
        for (std::size_t i = 0; i < feature_names.size(); ++i) {
            auto it = row.find(feature_names[i]);
            if (it == row.end()) fail("MissingFeature", "row lacks feature '" + feature_names[i] + "'");
            y += coefficients(static_cast<Eigen::Index>(i)) * it->second;
        }
        return y;
    }

    /// Predictions for every row of `d` (columns looked up by name).
    Eigen::VectorXd predict(const Dataset& d) const {
        Eigen::VectorXd y = Eigen::VectorXd::Constant(d.values.rows(), intercept);
        for (std::size_t i = 0; i < feature_names.size(); ++i)
            y += coefficients(static_cast<Eigen::Index>(i)) * d.values.col(d.column_index(feature_names[i]));
        return y;
    }
};

inline constexpr double kOlsRidge = 1e-8;

/// Least squares with intercept via the centered normal equations. A ridge
/// of 1e-8 on the diagonal keeps collinear designs solvable; two steps of
/// iterative refinement remove its bias on well-posed problems.
inline LinearModel ols_fit(const Dataset& d, const std::vector<std::string>& features, const std::string& target) {
    const auto y_col = d.column_index(target);
    std::vector<std::size_t> cols;
    for (const auto& f : features) {
        if (f == target) fail("InvalidArgument", "target '" + target + "' cannot also be a feature");
        cols.push_back(d.column_index(f));
    }
    const auto k = static_cast<Eigen::Index>(cols.size());
    if (d.rows() <= cols.size() + 1)
        fail("InsufficientRows", "need more than " + std::to_string(cols.size() + 1) + " rows");

    const auto n = static_cast<Eigen::Index>(d.rows());
    Eigen::MatrixXd x(n, k);
    for (Eigen::Index j = 0; j < k; ++j) x.col(j) = d.values.col(cols[j]);
    const Eigen::VectorXd y = d.values.col(y_col);
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;

    const Eigen::MatrixXd gram = xc.transpose() * xc;
    const Eigen::VectorXd rhs = xc.transpose() * yc;
    Eigen::MatrixXd regularized = gram;
    regularized.diagonal().array() += kOlsRidge;
    Eigen::LDLT<Eigen::MatrixXd> solver(regularized);
    Eigen::VectorXd beta = solver.solve(rhs);
    for (int step = 0; step < 2; ++step) beta += solver.solve(rhs - gram * beta);

    LinearModel m;
    m.feature_names = features;
    m.coefficients = beta;
    m.intercept = y_mean - x_mean.dot(beta);
    const Eigen::VectorXd resid = yc - xc * beta;
    const double dof = static_cast<double>(n - k - 1);
    const double sigma2 = resid.squaredNorm() / dof;
    m.std_errors = (sigma2 * solver.solve(Eigen::MatrixXd::Identity(k, k)).diagonal()).cwiseMax(0.0).cwiseSqrt();
    if (!beta.allFinite() || !std::isfinite(m.intercept)) fail("NumericalFailure", "OLS produced non-finite values");
    return m;
}

// ---------------------------------------------------------------------------
// Metrics

enum class NrmseNormalization { mean, range };

struct Metrics {
    double r2 = 0.0;
    double nrmse = 0.0;
    double smape = 0.0;  // a fraction in [0, 2]
};

inline Metrics metrics(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat,
                       NrmseNormalization norm = NrmseNormalization::mean) {
    if (y.size() != yhat.size()) fail("InvalidArgument", "y and yhat differ in length");
    if (y.size() < 2) fail("InvalidArgument", "at least two observations are required");
    const double n = static_cast<double>(y.size());
    const double mean = y.mean();
    const double ss_tot = (y.array() - mean).square().sum();
    const double ss_res = (y - yhat).squaredNorm();
    if (ss_tot == 0.0) fail("ConstantTarget", "r2 is undefined for a constant target");

    Metrics m;
    m.r2 = 1.0 - ss_res / ss_tot;
    const double rmse = std::sqrt(ss_res / n);
    if (norm == NrmseNormalization::mean) {
        if (mean == 0.0) fail("ZeroMeanTarget", "NRMSE is undefined for a zero-mean target");
        m.nrmse = rmse / std::abs(mean);
    } else {
        m.nrmse = rmse / (y.maxCoeff() - y.minCoeff());
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double denom = std::abs(y(i)) + std::abs(yhat(i));
        if (denom == 0.0) fail("ZeroPair", "SMAPE is undefined when y and yhat are both zero");
        acc += 2.0 * std::abs(yhat(i) - y(i)) / denom;
    }
    m.smape = acc / n;
    return m;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvReport {
    std::size_t k = 0;
    std::vector<Metrics> per_fold;
    Metrics mean;
};

/// Seeded Fisher-Yates shuffle of row indices.
inline std::vector<std::size_t> shuffled_rows(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    return idx;
}

inline CvReport kfold_cv(const Dataset& d, const std::vector<std::string>& features, const std::string& target,
                         std::size_t k = 5, std::uint64_t seed = 0,
                         NrmseNormalization norm = NrmseNormalization::mean) {
    if (k < 2) fail("InvalidArgument", "k must be at least 2");
    if (d.rows() < 2 * k) fail("TooFewRows", "k-fold CV needs at least 2k rows");
    const auto order = shuffled_rows(d.rows(), seed);
    const std::size_t base = d.rows() / k, extra = d.rows() % k;

    CvReport report;
    report.k = k;
    std::size_t start = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        std::vector<std::size_t> test(order.begin() + start, order.begin() + start + size);
        std::vector<std::size_t> train(order.begin(), order.begin() + start);
        train.insert(train.end(), order.begin() + start + size, order.end());
        start += size;

        auto model = ols_fit(d.subset(train), features, target);
        auto held_out = d.subset(test);
        report.per_fold.push_back(metrics(held_out.column(target), model.predict(held_out), norm));
    }
    for (const auto& m : report.per_fold) {
        report.mean.r2 += m.r2 / static_cast<double>(k);
        report.mean.nrmse += m.nrmse / static_cast<double>(k);
        report.mean.smape += m.smape / static_cast<double>(k);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Scenario prediction

/// predict(base with exposure = t1) - predict(base with exposure = t0), all
/// other features held at their base values.
inline double scenario_effect(const LinearModel& m, const std::map<std::string, double>& base_row,
                              const std::string& exposure, double t0, double t1) {
    if (std::find(m.feature_names.begin(), m.feature_names.end(), exposure) == m.feature_names.end())
        fail("MissingFeature", "exposure '" + exposure + "' is not a model feature");
    auto row = base_row;
    row[exposure] = t1;
    const double high = m.predict(row);
    row[exposure] = t0;
    return high - m.predict(row);
}

/// Features whose scenario value lies outside the training range.
inline std::vector<std::string> out_of_range_features(const Dataset& train, const std::map<std::string, double>& row) {
    std::vector<std::string> out;
    for (const auto& [name, value] : row) {
        auto c = train.find(name);
        if (!c) continue;
        if (value < train.values.col(*c).minCoeff() || value > train.values.col(*c).maxCoeff()) out.push_back(name);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fallout experiment

struct FalloutArmSpec {
    std::string name;
    std::vector<std::string> features;
};

struct FalloutArm {
    std::string name;
    std::vector<std::string> features;
    double estimated_effect = 0.0;
    double std_error = 0.0;
    double cv_r2 = 0.0;
    bool audit_unbiased = true;
    bool sign_agreement = true;
};

struct FalloutReport {
    std::string exposure;
    std::string outcome;
    EffectKind effect = EffectKind::total;
    double true_effect = 0.0;
    std::vector<FalloutArm> arms;
};

inline int sign_of(double v) { return (v > 0) - (v < 0); }

/// Samples `n` rows from `spec`, fits one OLS model per arm (exposures are
/// always model inputs), and compares the primary exposure's scenario effect
/// to the ground truth for the query's effect kind: the path-sum average
/// causal effect for `total`, the structural coefficient for `direct`.
inline FalloutReport fallout_experiment(const ScmSpec& spec, const QuerySpec& query,
                                        const std::vector<FalloutArmSpec>& arms, std::size_t n, std::uint64_t seed,
                                        std::size_t folds = 5) {
    if (arms.empty()) fail("InvalidArgument", "at least one arm is required");
    if (query.exposures.empty()) fail("InvalidQuery", "at least one exposure is required");
    const auto doc = make_document(scm_graph(spec));
    const auto q = query.resolve(doc);
    const auto data = sample(spec, n, seed);

    FalloutReport report;
    report.exposure = query.exposures.front();
    report.outcome = query.outcome;
    report.effect = query.effect;
    report.true_effect = query.effect == EffectKind::total
                             ? true_ace(spec, report.exposure, query.t1, query.t0, query.outcome)
                             : true_direct_effect(spec, report.exposure, query.t1, query.t0, query.outcome);

    std::map<std::string, double> base;
    for (std::size_t c = 0; c < data.cols(); ++c) base[data.names[c]] = data.values.col(c).mean();

    for (const auto& arm : arms) {
        std::vector<std::string> model_features = query.exposures;
        std::vector<NodeIndex> audit_features;
        for (const auto& f : arm.features) {
            spec.index(f);
            if (f == query.outcome) fail("InvalidArm", "arm '" + arm.name + "' uses the outcome as a feature");
            if (std::find(model_features.begin(), model_features.end(), f) != model_features.end()) continue;
            model_features.push_back(f);
            audit_features.push_back(doc.graph.index(f));
        }
        const auto model = ols_fit(data, model_features, query.outcome);
        FalloutArm out;
        out.name = arm.name;
        out.features = arm.features;
        out.estimated_effect = scenario_effect(model, base, report.exposure, query.t0, query.t1);
        out.std_error = std::abs(query.t1 - query.t0) * model.std_errors(0);  // primary exposure is the first feature
        out.cv_r2 = kfold_cv(data, model_features, query.outcome, folds, seed).mean.r2;
        out.audit_unbiased = audit_feature_set(doc.graph, q, audit_features).unbiased;
        out.sign_agreement = sign_of(out.estimated_effect) == sign_of(report.true_effect);
        report.arms.push_back(std::move(out));
    }
    return report;
}

inline std::vector<FalloutArmSpec> arms_from_json(const json& j) {
    const json* list = &j;
    if (j.is_object()) {
        if (j.contains("format_version") && j["format_version"] != kFormatVersion)
            fail("UnsupportedFormatVersion", "format_version must be 1");
        if (!j.contains("arms")) fail("ParseError", "arms file needs an 'arms' array");
        list = &j["arms"];
    }
    if (!list->is_array()) fail("ParseError", "arms must be an array");
    std::vector<FalloutArmSpec> arms;
    try {
        for (const auto& a : *list)
            arms.push_back({a.at("name").get<std::string>(), a.at("features").get<std::vector<std::string>>()});
    } catch (const json::exception& ex) {
        fail("ParseError", std::string("malformed arm: ") + ex.what());
    }
    return arms;
}

inline json to_json(const FalloutReport& r) {
    json arms = json::array();
    for (const auto& a : r.arms)
        arms.push_back({{"name", a.name},
                        {"features", a.features},
                        {"estimated_effect", a.estimated_effect},
                        {"std_error", a.std_error},
                        {"cv_r2", a.cv_r2},
                        {"audit_verdict", a.audit_unbiased ? "unbiased" : "biased"},
                        {"sign_agreement", a.sign_agreement}});
    return {{"format_version", kFormatVersion},
            {"exposure", r.exposure},
            {"outcome", r.outcome},
            {"effect_kind", to_string(r.effect)},
            {"true_ace", r.true_effect},
            {"arms", arms}};
}

/// Plain-text comparison table, one row per arm.
inline std::string render_fallout_table(const FalloutReport& r) {
    std::ostringstream out;
    out << "Effect of " << r.exposure << " on " << r.outcome << " (" << to_string(r.effect)
        << "), ground truth " << std::fixed << std::setprecision(3) << r.true_effect << "\n";
    out << std::left << std::setw(24) << "Arm" << std::right << std::setw(10) << "CV R2" << std::setw(12)
        << "Estimate" << std::setw(10) << "SE" << std::setw(8) << "Sign" << std::setw(10) << "Audit" << "\n";
    for (const auto& a : r.arms) {
        out << std::left << std::setw(24) << a.name << std::right << std::setw(10) << a.cv_r2 << std::setw(12)
            << a.estimated_effect << std::setw(10) << a.std_error << std::setw(8) << (a.sign_agreement ? "ok" : "FLIP")
            << std::setw(10) << (a.audit_unbiased ? "unbiased" : "biased") << "\n";
    }
    return out.str();
}

}  // namespace causal_audit
