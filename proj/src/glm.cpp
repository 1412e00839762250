#include "sluaudit/glm.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "sluaudit/errors.hpp"

namespace sluaudit {

using nlohmann::json;

namespace {

constexpr double kPiClamp = 1e-12;
constexpr double kPivotRatio = 1e-10;

double clamp_pi(double p) { return std::clamp(p, kPiClamp, 1.0 - kPiClamp); }

Eigen::VectorXd probabilities(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta) {
    Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd pi(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        pi[i] = clamp_pi(1.0 / (1.0 + std::exp(-eta[i])));
    }
    return pi;
}

// Rank check on a column-pivoted QR: every |R_ii| must clear the threshold.
void require_full_rank(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                       Eigen::Index cols) {
    Eigen::VectorXd diag = qr.matrixR().diagonal().cwiseAbs();
    double largest = diag.size() > 0 ? diag[0] : 0.0;
    for (Eigen::Index i = 0; i < cols; ++i) {
        if (i >= diag.size() || diag[i] < kPivotRatio * largest) {
            throw RankDeficiencyError(
                "information matrix is rank deficient (collinear columns)");
        }
    }
}

}  // namespace

void ModelSpec::validate(const DemographicSchema& schema) const {
    if (covariates.empty()) throw DataError("model spec: no covariates");
    std::set<std::string> seen;
    for (const auto& var : covariates) {
        if (!seen.insert(var).second) {
            throw DataError("model spec: duplicate covariate '" + var + "'");
        }
        const auto* v = schema.find(var);
        if (v == nullptr) throw DataError("model spec: unknown variable '" + var + "'");
        auto it = reference_levels.find(var);
        if (it != reference_levels.end() && !schema.has_level(var, it->second)) {
            throw DataError("model spec: reference '" + it->second +
                            "' is not a level of '" + var + "'");
        }
    }
}

std::string ModelSpec::reference_for(const std::string& variable,
                                     const DemographicSchema& schema) const {
    auto it = reference_levels.find(variable);
    if (it != reference_levels.end()) return it->second;
    const auto* v = schema.find(variable);
    if (v == nullptr) throw DataError("model spec: unknown variable '" + variable + "'");
    return v->reference;
}

DesignMatrix build_design(const DatasetManifest& manifest,
                          const std::vector<UtteranceScore>& scores,
                          const ModelSpec& spec, const DemographicSchema& schema) {
    spec.validate(schema);

    std::unordered_map<std::string, int> em_by_id;
    em_by_id.reserve(scores.size());
    for (const auto& s : scores) em_by_id.emplace(s.utterance_id, s.em);

    DesignMatrix design;
    std::vector<const UtteranceRecord*> rows;
    for (const auto& rec : manifest.records) {
        if (em_by_id.find(rec.utterance_id) == em_by_id.end()) {
            throw DataError("build_design: no score for record '" + rec.utterance_id + "'");
        }
        bool complete = true;
        for (const auto& var : spec.covariates) {
            if (rec.tags.find(var) == rec.tags.end()) {
                complete = false;
                break;
            }
        }
        if (complete) {
            rows.push_back(&rec);
        } else {
            ++design.excluded;
        }
    }
    if (rows.empty()) throw DataError("build_design: every row was excluded");

    // Column plan: observed non-reference levels, schema level order.
    struct Block {
        std::string variable;
        std::vector<std::string> levels;  // column per entry
    };
    std::vector<Block> blocks;
    for (const auto& var : spec.covariates) {
        const auto* v = schema.find(var);
        std::string ref = spec.reference_for(var, schema);
        std::set<std::string> observed;
        for (const auto* rec : rows) observed.insert(rec->tags.at(var));
        if (observed.size() < 2) {
            throw DataError("build_design: variable '" + var +
                            "' has fewer than 2 observed levels");
        }
        if (observed.find(ref) == observed.end()) {
            throw DataError("build_design: reference level '" + ref + "' of '" + var +
                            "' is not observed; pick another with --reference");
        }
        Block block{var, {}};
        for (const auto& level : v->levels) {
            if (level != ref && observed.count(level)) block.levels.push_back(level);
        }
        blocks.push_back(std::move(block));
    }

    Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    Eigen::Index p = 1;
    design.column_labels.push_back("intercept");
    for (const auto& block : blocks) {
        for (const auto& level : block.levels) {
            design.column_labels.push_back(block.variable + "=" + level);
            ++p;
        }
    }

    design.X = Eigen::MatrixXd::Zero(n, p);
    design.y = Eigen::VectorXd::Zero(n);
    design.X.col(0).setOnes();
    for (Eigen::Index i = 0; i < n; ++i) {
        const UtteranceRecord* rec = rows[i];
        design.row_ids.push_back(rec->utterance_id);
        design.y[i] = em_by_id.at(rec->utterance_id);
        Eigen::Index col = 1;
        for (const auto& block : blocks) {
            const std::string& value = rec->tags.at(block.variable);
            for (const auto& level : block.levels) {
                if (value == level) design.X(i, col) = 1.0;
                ++col;
            }
        }
    }
    return design;
}

double log_likelihood(const DesignMatrix& design, const Eigen::VectorXd& beta) {
    Eigen::VectorXd pi = probabilities(design.X, beta);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < design.y.size(); ++i) {
        ll += design.y[i] * std::log(pi[i]) + (1.0 - design.y[i]) * std::log(1.0 - pi[i]);
    }
    return ll;
}

FittedLogit fit(const DesignMatrix& design, const AuditConfig& config) {
    const Eigen::Index n = design.X.rows();
    const Eigen::Index p = design.X.cols();
    if (n == 0 || p == 0) throw DataError("fit: empty design");

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    double ll = log_likelihood(design, beta);

    FittedLogit model;
    model.column_labels = design.column_labels;
    model.n_obs = n;
    model.loglik_trace.push_back(ll);

    bool converged = false;
    int iter = 0;
    while (iter < config.max_iterations) {
        ++iter;
        Eigen::VectorXd pi = probabilities(design.X, beta);
        Eigen::VectorXd w = pi.array() * (1.0 - pi.array());
        Eigen::VectorXd sqrt_w = w.cwiseSqrt();

        // Newton step as a weighted least-squares solve on the working response.
        Eigen::VectorXd z = design.X * beta + (design.y - pi).cwiseQuotient(w);
        Eigen::MatrixXd Aw = sqrt_w.asDiagonal() * design.X;
        Eigen::VectorXd bw = sqrt_w.asDiagonal() * z;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Aw);
        require_full_rank(qr, p);
        Eigen::VectorXd proposal = qr.solve(bw);

        // Step-halving keeps the log-likelihood non-decreasing.
        Eigen::VectorXd step = proposal - beta;
        double new_ll = log_likelihood(design, proposal);
        int halvings = 0;
        while (new_ll < ll && halvings < 30) {
            step *= 0.5;
            proposal = beta + step;
            new_ll = log_likelihood(design, proposal);
            ++halvings;
        }
        if (new_ll < ll) break;  // no ascent direction left

        beta = proposal;
        model.loglik_trace.push_back(new_ll);
        double change = new_ll - ll;
        ll = new_ll;

        if (beta.cwiseAbs().maxCoeff() > config.divergence_bound) {
            throw SeparationError(
                "separation: a coefficient exceeded the divergence bound " +
                std::to_string(config.divergence_bound));
        }
        if (change < config.loglik_tolerance) {
            converged = true;
            break;
        }
    }

    model.coefficients = beta;
    model.log_likelihood = ll;
    model.converged = converged;
    model.iterations = iter;

    // Covariance = inverse Fisher information at the fitted coefficients.
    Eigen::VectorXd pi = probabilities(design.X, beta);
    Eigen::VectorXd w = pi.array() * (1.0 - pi.array());
    Eigen::MatrixXd info = design.X.transpose() * w.asDiagonal() * design.X;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info);
    require_full_rank(qr, p);
    model.covariance = qr.solve(Eigen::MatrixXd::Identity(p, p));
    model.covariance = 0.5 * (model.covariance + model.covariance.transpose().eval());
    return model;
}

double predict(const FittedLogit& model, const Eigen::VectorXd& row) {
    if (row.size() != model.coefficients.size()) {
        throw DataError("predict: row length does not match coefficient count");
    }
    return 1.0 / (1.0 + std::exp(-row.dot(model.coefficients)));
}

OddsRatio odds_ratio(const FittedLogit& model, int k, const AuditConfig& config) {
    if (!model.converged) throw StatError("odds_ratio: model did not converge");
    if (k < 1 || k >= model.coefficients.size()) {
        throw DataError("odds_ratio: coefficient index out of range (intercept excluded)");
    }
    OddsRatio out;
    double beta = model.coefficients[k];
    out.se = std::sqrt(model.covariance(k, k));
    out.or_value = std::exp(beta);
    double zcrit = normal_quantile(1.0 - config.alpha / 2.0);
    out.ci_low = std::exp(beta - zcrit * out.se);
    out.ci_high = std::exp(beta + zcrit * out.se);
    out.wald_z = beta / out.se;
    double p = 2.0 * (1.0 - normal_cdf(std::fabs(out.wald_z)).p);
    out.wald_p = {p, "Wald z-test, " + model.column_labels[static_cast<size_t>(k)]};
    return out;
}

json model_to_json(const FittedLogit& model) {
    json j;
    j["column_labels"] = model.column_labels;
    j["coefficients"] = std::vector<double>(
        model.coefficients.data(), model.coefficients.data() + model.coefficients.size());
    json cov = json::array();
    for (Eigen::Index i = 0; i < model.covariance.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < model.covariance.cols(); ++k) {
            row.push_back(model.covariance(i, k));
        }
        cov.push_back(std::move(row));
    }
    j["covariance"] = std::move(cov);
    j["log_likelihood"] = model.log_likelihood;
    j["n_obs"] = model.n_obs;
    j["converged"] = model.converged;
    j["iterations"] = model.iterations;
    return j;
}

}  // namespace sluaudit
