#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sluaudit/bias_tests.hpp"
#include "sluaudit/metrics.hpp"

namespace sluaudit {

struct LevelSummary {
    long n_utterances = 0;
    long n_speakers = 0;
};

struct AuditReport {
    // Dataset summary
    long total_records = 0;
    long total_speakers = 0;
    std::map<std::string, long> split_counts;
    std::map<std::string, std::map<std::string, LevelSummary>> variable_counts;

    // Metric summary
    double overall_emr = 0.0;
    std::optional<double> overall_wer;
    std::map<std::string, double> per_intent_emr;
    std::map<std::string, long> per_intent_n;

    // Test battery
    std::vector<UnivariateAuditResult> univariate_results;
    std::vector<ConfoundingVerdict> adjustment_matrix;

    AuditConfig config_echo;
    std::string tool_version;
};

// Runs the full battery (univariate audit per variable, adjustment matrix
// over all ordered pairs) and collects the dataset/metric summaries.
AuditReport build_report(const DatasetManifest& manifest,
                         const std::vector<UtteranceScore>& scores,
                         const std::vector<std::string>& variables,
                         const AuditConfig& config, const DemographicSchema& schema);

// Display formatting: ORs and CI bounds to 2 decimals; p-values in scientific
// notation with 2 significant digits, clamped to "<1e-300" at underflow.
std::string format_or(double v);
std::string format_p(double p);

// Deterministic document; no timestamps anywhere in the body.
std::string render_markdown(const AuditReport& report);

nlohmann::json report_to_json(const AuditReport& report);

// One CSV per variable, header exactly:
// level,speaker_id,speaker_emr,speaker_wer,n_utterances
std::map<std::string, std::string> export_boxplot_data(
    const std::vector<UtteranceScore>& scores, const DatasetManifest& manifest,
    const std::vector<std::string>& variables);

}  // namespace sluaudit
