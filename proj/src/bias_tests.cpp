#include "sluaudit/bias_tests.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "sluaudit/errors.hpp"

namespace sluaudit {

using nlohmann::json;

namespace {

// Maximized log-likelihood of the intercept-only model: the MLE puts
// pi = mean(y) for every row.
double intercept_only_loglik(const Eigen::VectorXd& y) {
    double n = static_cast<double>(y.size());
    double n1 = y.sum();
    double p = std::clamp(n1 / n, 1e-12, 1.0 - 1e-12);
    return n1 * std::log(p) + (n - n1) * std::log(1.0 - p);
}

LlrResult make_llr(double t, int r, const AuditConfig& config) {
    LlrResult llr;
    llr.statistic_T = std::max(t, 0.0);  // nested fits; clamp tiny negatives
    llr.df_r = r;
    if (r <= 0) {
        llr.critical_value = 0.0;
        llr.p_value = {1.0, "LLR, degenerate nesting (r=0)"};
        llr.significant = false;
        return llr;
    }
    llr.critical_value = chi2_quantile(1.0 - config.alpha, r);
    double p = 1.0 - chi2_cdf(llr.statistic_T, r).p;
    llr.p_value = {p, "LLR vs chi2, df=" + std::to_string(r)};
    llr.significant = llr.statistic_T > llr.critical_value;
    return llr;
}

std::vector<EffectEstimate> effects_for(const FittedLogit& model,
                                        const std::string& variable,
                                        const AuditConfig& config) {
    std::vector<EffectEstimate> effects;
    const std::string prefix = variable + "=";
    for (int k = 1; k < static_cast<int>(model.column_labels.size()); ++k) {
        const std::string& label = model.column_labels[static_cast<size_t>(k)];
        if (label.rfind(prefix, 0) != 0) continue;
        OddsRatio orr = odds_ratio(model, k, config);
        EffectEstimate e;
        e.variable = variable;
        e.level = label.substr(prefix.size());
        e.or_value = orr.or_value;
        e.ci_low = orr.ci_low;
        e.ci_high = orr.ci_high;
        e.se = orr.se;
        e.wald_z = orr.wald_z;
        e.wald_p = orr.wald_p;
        e.significant = orr.wald_p.p < config.alpha;
        effects.push_back(std::move(e));
    }
    return effects;
}

// Sub-manifest of records carrying every listed tag; scores follow by id.
DatasetManifest tagged_subset(const DatasetManifest& manifest,
                              const std::vector<std::string>& variables) {
    DatasetManifest sub;
    sub.schema_version = manifest.schema_version;
    sub.source_descriptor = manifest.source_descriptor;
    for (const auto& rec : manifest.records) {
        bool complete = true;
        for (const auto& var : variables) {
            if (rec.tags.find(var) == rec.tags.end()) {
                complete = false;
                break;
            }
        }
        if (complete) sub.records.push_back(rec);
    }
    return sub;
}

int observed_level_count(const DatasetManifest& manifest, const std::string& variable) {
    std::set<std::string> levels;
    for (const auto& rec : manifest.records) {
        auto it = rec.tags.find(variable);
        if (it != rec.tags.end()) levels.insert(it->second);
    }
    return static_cast<int>(levels.size());
}

json llr_to_json(const LlrResult& llr) {
    return json{{"statistic_T", llr.statistic_T},
                {"df_r", llr.df_r},
                {"critical_value", llr.critical_value},
                {"p_value", llr.p_value.p},
                {"significant", llr.significant}};
}

}  // namespace

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::no_added_information: return "no_added_information";
        case Verdict::confounder: return "confounder";
        case Verdict::cross_effect: return "cross_effect";
        case Verdict::independent_effects: return "independent_effects";
    }
    throw StatError("to_string: unknown verdict");
}

UnivariateAuditResult univariate_audit(const DatasetManifest& manifest,
                                       const std::vector<UtteranceScore>& scores,
                                       const std::string& variable,
                                       const AuditConfig& config,
                                       const DemographicSchema& schema) {
    ModelSpec spec;
    spec.covariates = {variable};
    spec.reference_levels = config.reference_levels;
    DesignMatrix design = build_design(manifest, scores, spec, schema);

    UnivariateAuditResult result;
    result.variable = variable;
    result.alpha = config.alpha;
    result.model = fit(design, config);
    result.effects = effects_for(result.model, variable, config);
    result.n_obs = result.model.n_obs;
    result.excluded = design.excluded;

    double l_null = intercept_only_loglik(design.y);
    double t = 2.0 * (result.model.log_likelihood - l_null);
    result.omnibus = make_llr(t, static_cast<int>(design.X.cols()) - 1, config);
    return result;
}

ConfoundingVerdict adjustment_test(const DatasetManifest& manifest,
                                   const std::vector<UtteranceScore>& scores,
                                   const std::string& target_variable,
                                   const std::string& adjusting_variable,
                                   const AuditConfig& config,
                                   const DemographicSchema& schema) {
    if (target_variable == adjusting_variable) {
        throw DataError("adjustment_test: target and adjusting variable are identical");
    }
    DatasetManifest common = tagged_subset(manifest, {target_variable, adjusting_variable});
    if (observed_level_count(common, target_variable) < 2) {
        throw DataError("adjustment_test: target variable '" + target_variable +
                        "' has fewer than 2 observed levels on the common subset");
    }

    ConfoundingVerdict out;
    out.target_variable = target_variable;
    out.adjusting_variable = adjusting_variable;
    out.alpha = config.alpha;

    ModelSpec uni_spec;
    uni_spec.covariates = {target_variable};
    uni_spec.reference_levels = config.reference_levels;
    DesignMatrix uni_design = build_design(common, scores, uni_spec, schema);
    FittedLogit uni = fit(uni_design, config);
    out.univariate_effects = effects_for(uni, target_variable, config);
    out.n_obs = uni.n_obs;

    if (observed_level_count(common, adjusting_variable) < 2) {
        // Degenerate nesting: the adjusting variable adds no parameters.
        out.llr = make_llr(0.0, 0, config);
        out.adjusted_effects = out.univariate_effects;
        for (const auto& e : out.univariate_effects) out.or_shifts[e.level] = 0.0;
        out.verdict = Verdict::no_added_information;
        return out;
    }

    ModelSpec multi_spec;
    multi_spec.covariates = {target_variable, adjusting_variable};
    multi_spec.reference_levels = config.reference_levels;
    DesignMatrix multi_design = build_design(common, scores, multi_spec, schema);
    FittedLogit multi = fit(multi_design, config);
    out.adjusted_effects = effects_for(multi, target_variable, config);

    int r = static_cast<int>(multi_design.X.cols() - uni_design.X.cols());
    double t = 2.0 * (multi.log_likelihood - uni.log_likelihood);
    out.llr = make_llr(t, r, config);

    // Same rows, same reference ⇒ the two fits expose the same target levels.
    std::map<std::string, const EffectEstimate*> uni_by_level;
    for (const auto& e : out.univariate_effects) uni_by_level[e.level] = &e;
    for (const auto& adj : out.adjusted_effects) {
        const EffectEstimate* base = uni_by_level.at(adj.level);
        out.or_shifts[adj.level] = (adj.or_value - base->or_value) / base->or_value;
        if (adj.significant != base->significant) out.flipped_levels.push_back(adj.level);
    }

    double max_shift = 0.0;
    for (const auto& [level, shift] : out.or_shifts) {
        max_shift = std::max(max_shift, std::fabs(shift));
    }

    if (!out.llr.significant) {
        out.verdict = Verdict::no_added_information;
    } else if (!out.flipped_levels.empty()) {
        out.verdict = Verdict::confounder;
    } else if (max_shift >= config.or_shift_threshold) {
        out.verdict = Verdict::cross_effect;
    } else {
        out.verdict = Verdict::independent_effects;
    }
    return out;
}

std::vector<ConfoundingVerdict> full_adjustment_matrix(
    const DatasetManifest& manifest, const std::vector<UtteranceScore>& scores,
    const std::vector<std::string>& variables, const AuditConfig& config,
    const DemographicSchema& schema) {
    if (variables.size() < 2) {
        throw DataError("full_adjustment_matrix: need at least 2 variables");
    }
    std::set<std::string> distinct(variables.begin(), variables.end());
    if (distinct.size() != variables.size()) {
        throw DataError("full_adjustment_matrix: duplicate variables");
    }
    std::vector<ConfoundingVerdict> matrix;
    for (const auto& target : variables) {
        for (const auto& adjusting : variables) {
            if (target == adjusting) continue;
            matrix.push_back(
                adjustment_test(manifest, scores, target, adjusting, config, schema));
        }
    }
    return matrix;
}

Chi2Result chi2_contingency(const DatasetManifest& manifest,
                            const std::vector<UtteranceScore>& scores,
                            const std::string& variable, const AuditConfig& config,
                            const DemographicSchema& schema) {
    const auto* var = schema.find(variable);
    if (var == nullptr) throw DataError("chi2_contingency: unknown variable '" + variable + "'");

    std::unordered_map<std::string, int> em_by_id;
    for (const auto& s : scores) em_by_id.emplace(s.utterance_id, s.em);

    // Counts per observed level, kept in schema level order.
    std::map<std::string, std::array<long, 2>> table;  // level -> {EM=0, EM=1}
    for (const auto& rec : manifest.records) {
        auto tag = rec.tags.find(variable);
        if (tag == rec.tags.end()) continue;
        auto em = em_by_id.find(rec.utterance_id);
        if (em == em_by_id.end()) {
            throw DataError("chi2_contingency: no score for record '" + rec.utterance_id + "'");
        }
        table[tag->second][em->second == 1 ? 1 : 0] += 1;
    }
    if (table.size() < 2) {
        throw DataError("chi2_contingency: variable '" + variable +
                        "' has fewer than 2 observed levels");
    }

    long n = 0, row0 = 0, row1 = 0;
    for (const auto& [level, cells] : table) {
        n += cells[0] + cells[1];
        row0 += cells[0];
        row1 += cells[1];
    }

    double statistic = 0.0;
    for (const auto& [level, cells] : table) {
        double col = static_cast<double>(cells[0] + cells[1]);
        for (int em = 0; em < 2; ++em) {
            double expected = col * (em == 0 ? row0 : row1) / static_cast<double>(n);
            if (expected > 0.0) {
                double diff = static_cast<double>(cells[static_cast<size_t>(em)]) - expected;
                statistic += diff * diff / expected;
            }
        }
    }

    Chi2Result result;
    result.variable = variable;
    result.statistic = statistic;
    result.df = static_cast<int>(table.size()) - 1;
    result.p = {1.0 - chi2_cdf(statistic, result.df).p,
                "Pearson chi2, df=" + std::to_string(result.df)};
    result.n_obs = n;
    result.alpha = config.alpha;
    return result;
}

AnovaResult one_way_anova(const DatasetManifest& manifest,
                          const std::vector<UtteranceScore>& scores,
                          const std::string& variable, const AuditConfig& config,
                          const DemographicSchema& schema,
                          AnovaGranularity granularity) {
    if (schema.find(variable) == nullptr) {
        throw DataError("one_way_anova: unknown variable '" + variable + "'");
    }
    std::unordered_map<std::string, int> em_by_id;
    for (const auto& s : scores) em_by_id.emplace(s.utterance_id, s.em);

    // Values per level: raw EM, or per-speaker EMRs at speaker granularity.
    std::map<std::string, std::vector<double>> groups;
    if (granularity == AnovaGranularity::utterance) {
        for (const auto& rec : manifest.records) {
            auto tag = rec.tags.find(variable);
            if (tag == rec.tags.end()) continue;
            auto em = em_by_id.find(rec.utterance_id);
            if (em == em_by_id.end()) {
                throw DataError("one_way_anova: no score for record '" + rec.utterance_id + "'");
            }
            groups[tag->second].push_back(static_cast<double>(em->second));
        }
    } else {
        std::map<std::pair<std::string, std::string>, std::pair<long, long>> speaker;
        for (const auto& rec : manifest.records) {
            auto tag = rec.tags.find(variable);
            if (tag == rec.tags.end()) continue;
            auto em = em_by_id.find(rec.utterance_id);
            if (em == em_by_id.end()) {
                throw DataError("one_way_anova: no score for record '" + rec.utterance_id + "'");
            }
            auto& acc = speaker[{tag->second, rec.speaker_id}];
            acc.first += em->second;
            acc.second += 1;
        }
        for (const auto& [key, acc] : speaker) {
            groups[key.first].push_back(static_cast<double>(acc.first) / acc.second);
        }
    }

    if (groups.size() < 2) {
        throw DataError("one_way_anova: variable '" + variable +
                        "' has fewer than 2 observed levels");
    }
    long n = 0;
    double grand_sum = 0.0;
    for (const auto& [level, values] : groups) {
        if (values.size() < 2) {
            throw DataError("one_way_anova: level '" + level +
                            "' has fewer than 2 observations");
        }
        n += static_cast<long>(values.size());
        for (double v : values) grand_sum += v;
    }
    double grand_mean = grand_sum / static_cast<double>(n);

    double ssb = 0.0, ssw = 0.0;
    for (const auto& [level, values] : groups) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        ssb += static_cast<double>(values.size()) * (mean - grand_mean) * (mean - grand_mean);
        for (double v : values) ssw += (v - mean) * (v - mean);
    }

    AnovaResult result;
    result.variable = variable;
    result.df1 = static_cast<int>(groups.size()) - 1;
    result.df2 = static_cast<int>(n - static_cast<long>(groups.size()));
    result.n_obs = n;
    result.alpha = config.alpha;
    result.granularity = granularity;
    if (ssw == 0.0) {
        if (ssb == 0.0) {
            result.f_statistic = 0.0;
            result.p = {1.0, "one-way ANOVA F, degenerate"};
        } else {
            result.f_statistic = std::numeric_limits<double>::infinity();
            result.p = {0.0, "one-way ANOVA F, zero within-group variance"};
        }
        return result;
    }
    result.f_statistic = (ssb / result.df1) / (ssw / result.df2);
    result.p = {1.0 - f_cdf(result.f_statistic, result.df1, result.df2).p,
                "one-way ANOVA F(" + std::to_string(result.df1) + "," +
                    std::to_string(result.df2) + ")"};
    return result;
}

json effect_to_json(const EffectEstimate& e) {
    return json{{"variable", e.variable},
                {"level", e.level},
                {"or", e.or_value},
                {"ci_low", e.ci_low},
                {"ci_high", e.ci_high},
                {"se", e.se},
                {"wald_z", e.wald_z},
                {"wald_p", e.wald_p.p},
                {"significant", e.significant}};
}

json univariate_to_json(const UnivariateAuditResult& r) {
    json effects = json::array();
    for (const auto& e : r.effects) effects.push_back(effect_to_json(e));
    return json{{"test_type", "univariate_logit"},
                {"variable", r.variable},
                {"statistic", r.omnibus.statistic_T},
                {"df", r.omnibus.df_r},
                {"p_value", r.omnibus.p_value.p},
                {"alpha", r.alpha},
                {"decision", r.omnibus.significant ? "significant" : "not_significant"},
                {"effects", std::move(effects)},
                {"n_obs", r.n_obs},
                {"excluded", r.excluded},
                {"log_likelihood", r.model.log_likelihood},
                {"converged", r.model.converged},
                {"iterations", r.model.iterations}};
}

json verdict_to_json(const ConfoundingVerdict& v) {
    json uni = json::array();
    for (const auto& e : v.univariate_effects) uni.push_back(effect_to_json(e));
    json adj = json::array();
    for (const auto& e : v.adjusted_effects) adj.push_back(effect_to_json(e));
    return json{{"test_type", "llr_adjustment"},
                {"target_variable", v.target_variable},
                {"adjusting_variable", v.adjusting_variable},
                {"statistic", v.llr.statistic_T},
                {"df", v.llr.df_r},
                {"p_value", v.llr.p_value.p},
                {"critical_value", v.llr.critical_value},
                {"alpha", v.alpha},
                {"decision", v.llr.significant ? "significant" : "not_significant"},
                {"llr", llr_to_json(v.llr)},
                {"flipped_levels", v.flipped_levels},
                {"or_shifts", v.or_shifts},
                {"verdict", to_string(v.verdict)},
                {"n_obs", v.n_obs},
                {"effects", std::move(uni)},
                {"adjusted_effects", std::move(adj)}};
}

json chi2_to_json(const Chi2Result& r) {
    return json{{"test_type", "chi2_contingency"},
                {"variable", r.variable},
                {"statistic", r.statistic},
                {"df", r.df},
                {"p_value", r.p.p},
                {"alpha", r.alpha},
                {"decision", r.p.p < r.alpha ? "significant" : "not_significant"},
                {"n_obs", r.n_obs}};
}

json anova_to_json(const AnovaResult& r) {
    return json{{"test_type", "one_way_anova"},
                {"variable", r.variable},
                {"statistic", r.f_statistic},
                {"df", json::array({r.df1, r.df2})},
                {"p_value", r.p.p},
                {"alpha", r.alpha},
                {"decision", r.p.p < r.alpha ? "significant" : "not_significant"},
                {"granularity",
                 r.granularity == AnovaGranularity::utterance ? "utterance" : "speaker"},
                {"n_obs", r.n_obs}};
}

}  // namespace sluaudit
