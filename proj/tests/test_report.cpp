#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sluaudit/errors.hpp"
#include "sluaudit/metrics.hpp"
#include "sluaudit/report.hpp"
#include "sluaudit/version.hpp"

using namespace sluaudit;
using doctest::Approx;

namespace {

DatasetManifest two_by_two() {  // female 30/100, male 60/100
    DatasetManifest manifest;
    long id = 0;
    for (const auto& [level, k] : std::vector<std::pair<std::string, long>>{
             {"female", 30}, {"male", 60}}) {
        for (long i = 0; i < 100; ++i) {
            UtteranceRecord r;
            r.utterance_id = "u" + std::to_string(id);
            r.speaker_id = level + "-s" + std::to_string(i % 10);
            r.split = i % 4 == 0 ? "dev" : "test";
            r.reference_transcript = "turn the lights on";
            r.reference_parse = {id % 2 == 0 ? "lights_on" : "volume_up", {}};
            r.tags["gender"] = level;
            r.em_override = i < k ? 1 : 0;
            manifest.records.push_back(std::move(r));
            ++id;
        }
    }
    return manifest;
}

}  // namespace

TEST_CASE("format_or renders two decimals") {
    CHECK(format_or(3.5) == "3.50");
    CHECK(format_or(1.948601063) == "1.95");
    CHECK(format_or(6.286561283) == "6.29");
    CHECK(format_or(0.2882856) == "0.29");
    CHECK(format_or(12.0) == "12.00");
}

TEST_CASE("format_p renders two significant digits and strips exponent zeros") {
    CHECK(format_p(2.75840160769973e-5) == "2.8e-5");
    CHECK(format_p(0.4293263) == "4.3e-1");
    CHECK(format_p(0.45) == "4.5e-1");
    CHECK(format_p(1.0) == "1.0e+0");
    CHECK(format_p(3.2e-12) == "3.2e-12");
    CHECK(format_p(1e-310) == "<1e-300");
    CHECK(format_p(0.0) == "<1e-300");
}

TEST_CASE("build_report summarizes the dataset and runs the battery") {
    auto schema = DemographicSchema::builtin_default();
    auto manifest = two_by_two();
    auto scores = score_manifest(manifest);
    AuditConfig config;

    auto report = build_report(manifest, scores, {"gender"}, config, schema);
    CHECK(report.total_records == 200);
    CHECK(report.total_speakers == 20);
    CHECK(report.split_counts.at("dev") == 50);
    CHECK(report.split_counts.at("test") == 150);
    CHECK(report.variable_counts.at("gender").at("female").n_utterances == 100);
    CHECK(report.variable_counts.at("gender").at("male").n_speakers == 10);
    CHECK(report.overall_emr == Approx(0.45));
    CHECK_FALSE(report.overall_wer.has_value());
    CHECK(report.per_intent_emr.size() == 2);
    CHECK(report.per_intent_n.at("lights_on") == 100);
    REQUIRE(report.univariate_results.size() == 1);
    CHECK(report.adjustment_matrix.empty());  // one variable, no pairs
    CHECK(report.tool_version == kVersion);
}

TEST_CASE("markdown report pins the audited effect rows") {
    auto schema = DemographicSchema::builtin_default();
    auto manifest = two_by_two();
    auto scores = score_manifest(manifest);
    auto report = build_report(manifest, scores, {"gender"}, AuditConfig{}, schema);
    auto md = render_markdown(report);

    CHECK(md.rfind("# Demographic bias audit\n", 0) == 0);
    CHECK(md.find(std::string("Generated by ") + kToolName + " " + kVersion + ".\n") !=
          std::string::npos);
    CHECK(md.find("## Dataset\n") != std::string::npos);
    CHECK(md.find("- Records: 200\n") != std::string::npos);
    CHECK(md.find("| female | 100 | 10 |\n") != std::string::npos);
    CHECK(md.find("- Overall EMR: 0.4500\n") != std::string::npos);
    CHECK(md.find("- Overall WER: not available (no hypothesis transcripts)\n") !=
          std::string::npos);
    CHECK(md.find("| level | OR | 95% CI | p | decision |\n") != std::string::npos);
    CHECK(md.find("| male | 3.50 | [1.95, 6.29] | 2.8e-5 | significant |\n") !=
          std::string::npos);
    CHECK(md.find("Omnibus LLR vs intercept-only: T = 18.48, df = 1") != std::string::npos);
    CHECK(md.find("No pairs analyzed.\n") != std::string::npos);
    CHECK(md.find("## Verdict rules\n") != std::string::npos);

    // Deterministic: same inputs, byte-identical document.
    auto again = render_markdown(
        build_report(manifest, scores, {"gender"}, AuditConfig{}, schema));
    CHECK(again == md);
}

TEST_CASE("markdown includes the adjustment matrix for two variables") {
    auto schema = DemographicSchema::builtin_default();
    auto manifest = two_by_two();
    // Alternating age tag, independent of gender and outcome: keeps every cell
    // populated so the adjusted fits stay well away from separation.
    long i = 0;
    for (auto& r : manifest.records) {
        r.tags["age_range"] = i++ % 2 == 0 ? "17-28" : "29-41";
    }
    auto scores = score_manifest(manifest);
    auto report = build_report(manifest, scores, {"age_range", "gender"}, AuditConfig{},
                               schema);
    REQUIRE(report.adjustment_matrix.size() == 2);
    auto md = render_markdown(report);
    CHECK(md.find("| target | adjusted by | T | df | critical | p | verdict | flipped "
                  "levels |\n") != std::string::npos);
    CHECK(md.find("| age_range | gender | ") != std::string::npos);
    CHECK(md.find("| gender | age_range | ") != std::string::npos);
    CHECK(md.find("No pairs analyzed.") == std::string::npos);
}

TEST_CASE("markdown reports WER when transcripts exist") {
    auto schema = DemographicSchema::builtin_default();
    auto manifest = two_by_two();
    for (auto& r : manifest.records) {
        r.hypothesis_transcript = "turn the light on";  // 1 substitution in 4 words
    }
    auto scores = score_manifest(manifest);
    auto report = build_report(manifest, scores, {"gender"}, AuditConfig{}, schema);
    REQUIRE(report.overall_wer.has_value());
    CHECK(*report.overall_wer == Approx(0.25));
    CHECK(render_markdown(report).find("- Overall WER: 0.2500\n") != std::string::npos);
}

TEST_CASE("report JSON carries the battery numerically") {
    auto schema = DemographicSchema::builtin_default();
    auto manifest = two_by_two();
    auto scores = score_manifest(manifest);
    AuditConfig config;
    config.alpha = 0.01;
    auto report = build_report(manifest, scores, {"gender"}, config, schema);
    auto j = report_to_json(report);

    CHECK(j["tool"] == kToolName);
    CHECK(j["tool_version"] == kVersion);
    CHECK(j["config"]["alpha"].get<double>() == Approx(0.01));
    CHECK(j["dataset"]["total_records"] == 200);
    CHECK(j["dataset"]["variables"]["gender"]["female"]["n_utterances"] == 100);
    CHECK(j["metrics"]["overall_emr"].get<double>() == Approx(0.45));
    CHECK(j["metrics"]["overall_wer"].is_null());
    CHECK(j["metrics"]["per_intent"]["lights_on"]["n"] == 100);
    CHECK(j["univariate"][0]["effects"][0]["or"].get<double>() == Approx(3.5).epsilon(1e-6));
    CHECK(j["adjustment_matrix"].is_array());
    CHECK(j["adjustment_matrix"].empty());
}

TEST_CASE("boxplot export: exact header, per-speaker rows, optional wer") {
    DatasetManifest manifest;
    long id = 0;
    auto add = [&](const std::string& gender, const std::string& speaker, int em,
                   bool with_wer) {
        UtteranceRecord r;
        r.utterance_id = "u" + std::to_string(id++);
        r.speaker_id = speaker;
        r.split = "test";
        r.reference_transcript = "play the song";
        if (with_wer) r.hypothesis_transcript = "play a song";  // 1 error in 3
        r.reference_parse = {"play", {}};
        r.tags["gender"] = gender;
        r.em_override = em;
        manifest.records.push_back(std::move(r));
    };
    add("female", "spk-a", 1, true);
    add("female", "spk-a", 0, true);
    add("female", "spk-b", 1, false);
    add("male", "spk-c", 0, false);

    auto scores = score_manifest(manifest);
    auto bundle = export_boxplot_data(scores, manifest, {"gender"});
    REQUIRE(bundle.count("gender") == 1);
    const std::string& csv = bundle.at("gender");

    CHECK(csv.rfind("level,speaker_id,speaker_emr,speaker_wer,n_utterances\n", 0) == 0);
    CHECK(csv.find("female,spk-a,0.500000,0.333333,2\n") != std::string::npos);
    CHECK(csv.find("female,spk-b,1.000000,,1\n") != std::string::npos);
    CHECK(csv.find("male,spk-c,0.000000,,1\n") != std::string::npos);

    // One CSV per requested variable, even when a variable has no tags.
    auto none = export_boxplot_data(scores, manifest, {"age_range"});
    CHECK(none.at("age_range") ==
          "level,speaker_id,speaker_emr,speaker_wer,n_utterances\n");
}

TEST_CASE("build_report refuses scoreless records") {
    auto schema = DemographicSchema::builtin_default();
    auto manifest = two_by_two();
    auto scores = score_manifest(manifest);
    scores.pop_back();
    CHECK_THROWS_WITH_AS(build_report(manifest, scores, {"gender"}, AuditConfig{}, schema),
                         doctest::Contains("no score"), DataError);
}
