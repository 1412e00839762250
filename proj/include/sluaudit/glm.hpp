#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "sluaudit/ingest.hpp"
#include "sluaudit/metrics.hpp"
#include "sluaudit/specfun.hpp"
#include "sluaudit/types.hpp"

namespace sluaudit {

// EM ~ covariates, dummy-coded against per-variable reference levels.
struct ModelSpec {
    std::string response = "em";
    std::vector<std::string> covariates;
    std::map<std::string, std::string> reference_levels;  // unset ⇒ schema default

    void validate(const DemographicSchema& schema) const;
    std::string reference_for(const std::string& variable,
                              const DemographicSchema& schema) const;
};

struct DesignMatrix {
    Eigen::MatrixXd X;                        // first column all ones
    Eigen::VectorXd y;                        // binary response
    std::vector<std::string> column_labels;   // "intercept", "var=level", ...
    std::vector<std::string> row_ids;
    long excluded = 0;                        // rows dropped for missing tags
};

struct FittedLogit {
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;       // inverse Fisher information at the MLE
    double log_likelihood = 0.0;
    long n_obs = 0;
    bool converged = false;
    int iterations = 0;
    std::vector<std::string> column_labels;
    std::vector<double> loglik_trace;  // one entry per accepted IRLS step
};

struct OddsRatio {
    double or_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double se = 0.0;
    double wald_z = 0.0;
    TailProbability wald_p;
};

// Dummy coding: one indicator per observed non-reference level, covariates in
// spec order, levels in schema order. Rows missing any covariate tag are
// excluded (listwise). The reference level must be observed.
DesignMatrix build_design(const DatasetManifest& manifest,
                          const std::vector<UtteranceScore>& scores,
                          const ModelSpec& spec, const DemographicSchema& schema);

// Log-likelihood of the logit model, probabilities clamped away from {0,1}.
double log_likelihood(const DesignMatrix& design, const Eigen::VectorXd& beta);

// Maximum likelihood via IRLS (Newton-Raphson) with step-halving whenever a
// full step would decrease the log-likelihood. Throws SeparationError when a
// coefficient passes the divergence bound and RankDeficiencyError when the
// weighted design loses rank (pivot < 1e-10 x largest).
FittedLogit fit(const DesignMatrix& design, const AuditConfig& config);

// pi = 1 / (1 + exp(-row . beta))
double predict(const FittedLogit& model, const Eigen::VectorXd& row);

// Wald machinery for one non-intercept coefficient.
OddsRatio odds_ratio(const FittedLogit& model, int k, const AuditConfig& config);

nlohmann::json model_to_json(const FittedLogit& model);

}  // namespace sluaudit
