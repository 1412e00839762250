#include "sluaudit/report.hpp"

#include <cstdio>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "sluaudit/errors.hpp"
#include "sluaudit/version.hpp"

namespace sluaudit {

using nlohmann::json;

namespace {

std::string format_fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string ci_label(double alpha) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g%% CI", (1.0 - alpha) * 100.0);
    return buf;
}

std::string decision_word(bool significant) {
    return significant ? "significant" : "not significant";
}

}  // namespace

std::string format_or(double v) { return format_fixed(v, 2); }

std::string format_p(double p) {
    if (p < 1e-300) return "<1e-300";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1e", p);
    // "2.8e-05" -> "2.8e-5": drop leading zeros in the exponent.
    std::string s = buf;
    auto e = s.find('e');
    size_t digits = e + 2;  // skip the sign
    while (digits + 1 < s.size() && s[digits] == '0') s.erase(digits, 1);
    return s;
}

AuditReport build_report(const DatasetManifest& manifest,
                         const std::vector<UtteranceScore>& scores,
                         const std::vector<std::string>& variables,
                         const AuditConfig& config, const DemographicSchema& schema) {
    AuditReport report;
    report.config_echo = config;
    report.tool_version = kVersion;

    report.total_records = static_cast<long>(manifest.records.size());
    std::set<std::string> speakers;
    std::map<std::string, std::map<std::string, std::set<std::string>>> level_speakers;
    for (const auto& rec : manifest.records) {
        speakers.insert(rec.speaker_id);
        report.split_counts[rec.split] += 1;
        for (const auto& [var, level] : rec.tags) {
            report.variable_counts[var][level].n_utterances += 1;
            level_speakers[var][level].insert(rec.speaker_id);
        }
    }
    report.total_speakers = static_cast<long>(speakers.size());
    for (auto& [var, levels] : report.variable_counts) {
        for (auto& [level, summary] : levels) {
            summary.n_speakers = static_cast<long>(level_speakers[var][level].size());
        }
    }

    std::unordered_map<std::string, const UtteranceScore*> by_id;
    for (const auto& s : scores) by_id.emplace(s.utterance_id, &s);
    long em_sum = 0;
    long err_sum = 0, ref_word_sum = 0;
    bool any_wer = false;
    std::map<std::string, std::pair<long, long>> intent_em;  // intent -> (em_sum, n)
    for (const auto& rec : manifest.records) {
        auto it = by_id.find(rec.utterance_id);
        if (it == by_id.end()) {
            throw DataError("build_report: no score for record '" + rec.utterance_id + "'");
        }
        const UtteranceScore& s = *it->second;
        em_sum += s.em;
        if (s.wer.has_value()) {
            any_wer = true;
            err_sum += s.wer->total();
            ref_word_sum += s.wer->ref_word_count;
        }
        auto& acc = intent_em[rec.reference_parse.intent];
        acc.first += s.em;
        acc.second += 1;
    }
    if (!manifest.records.empty()) {
        report.overall_emr = static_cast<double>(em_sum) / manifest.records.size();
    }
    if (any_wer && ref_word_sum > 0) {
        report.overall_wer = static_cast<double>(err_sum) / ref_word_sum;
    }
    for (const auto& [intent, acc] : intent_em) {
        report.per_intent_emr[intent] = static_cast<double>(acc.first) / acc.second;
        report.per_intent_n[intent] = acc.second;
    }

    for (const auto& var : variables) {
        report.univariate_results.push_back(
            univariate_audit(manifest, scores, var, config, schema));
    }
    if (variables.size() >= 2) {
        report.adjustment_matrix =
            full_adjustment_matrix(manifest, scores, variables, config, schema);
    }
    return report;
}

std::string render_markdown(const AuditReport& report) {
    std::ostringstream out;
    const double alpha = report.config_echo.alpha;
    out << "# Demographic bias audit\n\n";
    out << "Generated by " << kToolName << " " << report.tool_version << ".\n\n";

    out << "## Dataset\n\n";
    out << "- Records: " << report.total_records << "\n";
    out << "- Speakers: " << report.total_speakers << "\n";
    for (const auto& [split, n] : report.split_counts) {
        out << "- Split `" << split << "`: " << n << "\n";
    }
    out << "\n";
    for (const auto& [var, levels] : report.variable_counts) {
        out << "### " << var << "\n\n";
        out << "| level | n_utterances | n_speakers |\n";
        out << "|---|---:|---:|\n";
        for (const auto& [level, s] : levels) {
            out << "| " << level << " | " << s.n_utterances << " | " << s.n_speakers
                << " |\n";
        }
        out << "\n";
    }

    out << "## Metrics\n\n";
    out << "- Overall EMR: " << format_fixed(report.overall_emr, 4) << "\n";
    if (report.overall_wer.has_value()) {
        out << "- Overall WER: " << format_fixed(*report.overall_wer, 4) << "\n";
    } else {
        out << "- Overall WER: not available (no hypothesis transcripts)\n";
    }
    out << "\n";
    if (!report.per_intent_emr.empty()) {
        out << "| intent | n | EMR |\n";
        out << "|---|---:|---:|\n";
        for (const auto& [intent, emr] : report.per_intent_emr) {
            out << "| " << intent << " | " << report.per_intent_n.at(intent) << " | "
                << format_fixed(emr, 4) << " |\n";
        }
        out << "\n";
    }

    out << "## Univariate audits\n\n";
    if (report.univariate_results.empty()) {
        out << "No variables audited.\n\n";
    }
    for (const auto& r : report.univariate_results) {
        out << "### " << r.variable << "\n\n";
        out << "n = " << r.n_obs << " (excluded " << r.excluded
            << " untagged records), log-likelihood = "
            << format_fixed(r.model.log_likelihood, 5) << "\n\n";
        out << "| level | OR | " << ci_label(alpha) << " | p | decision |\n";
        out << "|---|---:|---|---:|---|\n";
        for (const auto& e : r.effects) {
            out << "| " << e.level << " | " << format_or(e.or_value) << " | ["
                << format_or(e.ci_low) << ", " << format_or(e.ci_high) << "] | "
                << format_p(e.wald_p.p) << " | " << decision_word(e.significant)
                << " |\n";
        }
        out << "\n";
        out << "Omnibus LLR vs intercept-only: T = "
            << format_fixed(r.omnibus.statistic_T, 2) << ", df = " << r.omnibus.df_r
            << ", critical = " << format_fixed(r.omnibus.critical_value, 2)
            << ", p = " << format_p(r.omnibus.p_value.p) << " ("
            << decision_word(r.omnibus.significant) << ").\n\n";
    }

    out << "## Adjustment matrix\n\n";
    if (report.adjustment_matrix.empty()) {
        out << "No pairs analyzed.\n\n";
    } else {
        out << "| target | adjusted by | T | df | critical | p | verdict | flipped levels "
               "|\n";
        out << "|---|---|---:|---:|---:|---:|---|---|\n";
        for (const auto& v : report.adjustment_matrix) {
            out << "| " << v.target_variable << " | " << v.adjusting_variable << " | "
                << format_fixed(v.llr.statistic_T, 2) << " | " << v.llr.df_r << " | "
                << format_fixed(v.llr.critical_value, 2) << " | "
                << format_p(v.llr.p_value.p) << " | " << to_string(v.verdict) << " | ";
            for (size_t i = 0; i < v.flipped_levels.size(); ++i) {
                if (i > 0) out << ", ";
                out << v.flipped_levels[i];
            }
            out << " |\n";
        }
        out << "\n";
    }

    out << "## Verdict rules\n\n";
    out << "- `no_added_information`: the LLR statistic does not exceed the chi-squared "
           "critical value at alpha = "
        << format_fixed(alpha, 3) << ".\n";
    out << "- `confounder`: LLR significant and at least one Wald conclusion flips at "
           "alpha = "
        << format_fixed(alpha, 3) << ".\n";
    out << "- `cross_effect`: LLR significant, no flips, and max |relative OR shift| >= "
        << format_fixed(report.config_echo.or_shift_threshold, 3) << ".\n";
    out << "- `independent_effects`: LLR significant with stable conclusions and ORs.\n";
    return out.str();
}

json report_to_json(const AuditReport& report) {
    json j;
    j["tool"] = kToolName;
    j["tool_version"] = report.tool_version;
    j["config"] = report.config_echo.to_json();

    json dataset;
    dataset["total_records"] = report.total_records;
    dataset["total_speakers"] = report.total_speakers;
    dataset["split_counts"] = report.split_counts;
    json vars = json::object();
    for (const auto& [var, levels] : report.variable_counts) {
        json lv = json::object();
        for (const auto& [level, s] : levels) {
            lv[level] = {{"n_utterances", s.n_utterances}, {"n_speakers", s.n_speakers}};
        }
        vars[var] = std::move(lv);
    }
    dataset["variables"] = std::move(vars);
    j["dataset"] = std::move(dataset);

    json metrics;
    metrics["overall_emr"] = report.overall_emr;
    if (report.overall_wer.has_value()) {
        metrics["overall_wer"] = *report.overall_wer;
    } else {
        metrics["overall_wer"] = nullptr;
    }
    json intents = json::object();
    for (const auto& [intent, emr] : report.per_intent_emr) {
        intents[intent] = {{"emr", emr}, {"n", report.per_intent_n.at(intent)}};
    }
    metrics["per_intent"] = std::move(intents);
    j["metrics"] = std::move(metrics);

    json uni = json::array();
    for (const auto& r : report.univariate_results) uni.push_back(univariate_to_json(r));
    j["univariate"] = std::move(uni);
    json matrix = json::array();
    for (const auto& v : report.adjustment_matrix) matrix.push_back(verdict_to_json(v));
    j["adjustment_matrix"] = std::move(matrix);
    return j;
}

std::map<std::string, std::string> export_boxplot_data(
    const std::vector<UtteranceScore>& scores, const DatasetManifest& manifest,
    const std::vector<std::string>& variables) {
    std::unordered_map<std::string, const UtteranceScore*> by_id;
    for (const auto& s : scores) by_id.emplace(s.utterance_id, &s);

    std::map<std::string, std::string> bundle;
    for (const auto& var : variables) {
        struct SpeakerAccum {
            long em_sum = 0;
            long n = 0;
            long err_sum = 0;
            long ref_word_sum = 0;
            bool any_wer = false;
        };
        std::map<std::pair<std::string, std::string>, SpeakerAccum> cells;
        for (const auto& rec : manifest.records) {
            auto tag = rec.tags.find(var);
            if (tag == rec.tags.end()) continue;
            auto it = by_id.find(rec.utterance_id);
            if (it == by_id.end()) {
                throw DataError("export_boxplot_data: no score for record '" +
                                rec.utterance_id + "'");
            }
            SpeakerAccum& acc = cells[{tag->second, rec.speaker_id}];
            acc.em_sum += it->second->em;
            acc.n += 1;
            if (it->second->wer.has_value()) {
                acc.any_wer = true;
                acc.err_sum += it->second->wer->total();
                acc.ref_word_sum += it->second->wer->ref_word_count;
            }
        }
        std::ostringstream csv;
        csv << "level,speaker_id,speaker_emr,speaker_wer,n_utterances\n";
        csv.setf(std::ios::fixed);
        csv.precision(6);
        for (const auto& [key, acc] : cells) {
            csv << key.first << ',' << key.second << ','
                << static_cast<double>(acc.em_sum) / acc.n << ',';
            if (acc.any_wer && acc.ref_word_sum > 0) {
                csv << static_cast<double>(acc.err_sum) / acc.ref_word_sum;
            }
            csv << ',' << acc.n << '\n';
        }
        bundle[var] = csv.str();
    }
    return bundle;
}

}  // namespace sluaudit
