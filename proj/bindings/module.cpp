#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "sluaudit/bias_tests.hpp"
#include "sluaudit/errors.hpp"
#include "sluaudit/glm.hpp"
#include "sluaudit/ingest.hpp"
#include "sluaudit/metrics.hpp"
#include "sluaudit/report.hpp"
#include "sluaudit/types.hpp"
#include "sluaudit/version.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace sluaudit;

namespace {

// Route structured values through the Python json module rather than keeping
// two object models in sync by hand.
json to_json(const py::handle& obj) {
    if (obj.is_none()) return json();
    py::object dumps = py::module_::import("json").attr("dumps");
    return json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const json& j) {
    py::object loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

DemographicSchema schema_from(const py::object& schema) {
    if (schema.is_none()) return DemographicSchema::builtin_default();
    return DemographicSchema::from_json(to_json(schema));
}

AuditConfig config_from(double alpha, const py::object& references) {
    AuditConfig config;
    config.alpha = alpha;
    if (!references.is_none()) {
        json refs = to_json(references);  // named: items() must not outlive it
        for (const auto& [var, level] : refs.items()) {
            config.reference_levels[var] = level.get<std::string>();
        }
    }
    config.validate();
    return config;
}

json wer_to_json(const WerCounts& w) {
    return json{{"substitutions", w.substitutions},
                {"deletions", w.deletions},
                {"insertions", w.insertions},
                {"ref_word_count", w.ref_word_count},
                {"total", w.total()},
                {"rate", w.rate()}};
}

json score_to_json(const UtteranceScore& s) {
    json j{{"utterance_id", s.utterance_id}, {"em", s.em}};
    if (s.wer.has_value()) {
        j["wer_errors"] = s.wer->total();
        j["ref_word_count"] = s.wer->ref_word_count;
    }
    return j;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Demographic bias audit for spoken-language-understanding output";
    m.attr("__version__") = kVersion;

    py::register_exception<DataError>(m, "DataError");
    static py::exception<StatError> stat_error(m, "StatError");
    py::register_exception<SeparationError>(m, "SeparationError", stat_error);
    py::register_exception<RankDeficiencyError>(m, "RankDeficiencyError", stat_error);

    m.def("default_schema", [] { return to_py(DemographicSchema::builtin_default().to_json()); },
          "Built-in demographic schema as a dict");

    m.def(
        "tokenize", [](const std::string& text) { return tokenize(text); }, py::arg("text"),
        "Case-folded ASCII-whitespace tokens");

    m.def(
        "exact_match",
        [](const py::dict& reference, const py::dict& hypothesis) {
            json jr = to_json(reference), jh = to_json(hypothesis);
            auto parse = [](const json& j) {
                Parse p;
                p.intent = j.at("intent").get<std::string>();
                if (j.contains("slots")) {
                    for (const auto& s : j.at("slots")) {
                        p.slots.push_back({s.at("name").get<std::string>(),
                                           s.at("value").get<std::string>()});
                    }
                }
                return p;
            };
            return exact_match(parse(jr), parse(jh));
        },
        py::arg("reference"), py::arg("hypothesis"),
        "1 iff intent and slot multiset match (case-folded)");

    m.def(
        "word_error_counts",
        [](const std::vector<std::string>& reference,
           const std::vector<std::string>& hypothesis) {
            return to_py(wer_to_json(word_error_counts(reference, hypothesis)));
        },
        py::arg("reference"), py::arg("hypothesis"),
        "Minimum-edit-distance S/D/I counts");

    m.def(
        "validate",
        [](const std::string& manifest_jsonl, const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            json out = json::array();
            for (const auto& rec : manifest.records) {
                for (const auto& v : validate_record(rec, sc)) {
                    out.push_back(json{{"utterance_id", rec.utterance_id},
                                       {"field", v.field},
                                       {"rule", v.rule},
                                       {"message", v.message}});
                }
            }
            return to_py(out);
        },
        py::arg("manifest_jsonl"), py::arg("schema") = py::none(),
        "Remaining violations of a parsed manifest (empty list = valid)");

    m.def(
        "score",
        [](const std::string& manifest_jsonl, const py::object& schema) {
            DatasetManifest manifest =
                load_manifest_text(manifest_jsonl, schema_from(schema));
            json out = json::array();
            for (const auto& s : score_manifest(manifest)) out.push_back(score_to_json(s));
            return to_py(out);
        },
        py::arg("manifest_jsonl"), py::arg("schema") = py::none(),
        "Per-utterance EM/WER scores");

    m.def(
        "audit",
        [](const std::string& manifest_jsonl, const std::string& variable, double alpha,
           const py::object& references, const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            AuditConfig config = config_from(alpha, references);
            auto scores = score_manifest(manifest);
            return to_py(
                univariate_to_json(univariate_audit(manifest, scores, variable, config, sc)));
        },
        py::arg("manifest_jsonl"), py::arg("variable"), py::arg("alpha") = 0.05,
        py::arg("references") = py::none(), py::arg("schema") = py::none(),
        "Univariate logistic audit of one variable");

    m.def(
        "adjust",
        [](const std::string& manifest_jsonl, const std::string& target,
           const std::string& adjust_by, double alpha, const py::object& references,
           const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            AuditConfig config = config_from(alpha, references);
            auto scores = score_manifest(manifest);
            return to_py(verdict_to_json(
                adjustment_test(manifest, scores, target, adjust_by, config, sc)));
        },
        py::arg("manifest_jsonl"), py::arg("target"), py::arg("adjust_by"),
        py::arg("alpha") = 0.05, py::arg("references") = py::none(),
        py::arg("schema") = py::none(), "LLR adjustment test with confounding verdict");

    m.def(
        "matrix",
        [](const std::string& manifest_jsonl, const std::vector<std::string>& variables,
           double alpha, const py::object& references, const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            AuditConfig config = config_from(alpha, references);
            auto scores = score_manifest(manifest);
            json out = json::array();
            for (const auto& v :
                 full_adjustment_matrix(manifest, scores, variables, config, sc)) {
                out.push_back(verdict_to_json(v));
            }
            return to_py(out);
        },
        py::arg("manifest_jsonl"), py::arg("variables"), py::arg("alpha") = 0.05,
        py::arg("references") = py::none(), py::arg("schema") = py::none(),
        "Adjustment tests for every ordered variable pair");

    m.def(
        "chi2_contingency",
        [](const std::string& manifest_jsonl, const std::string& variable, double alpha,
           const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            AuditConfig config;
            config.alpha = alpha;
            auto scores = score_manifest(manifest);
            return to_py(chi2_to_json(chi2_contingency(manifest, scores, variable, config, sc)));
        },
        py::arg("manifest_jsonl"), py::arg("variable"), py::arg("alpha") = 0.05,
        py::arg("schema") = py::none(), "Pearson chi-squared on the EM x level table");

    m.def(
        "one_way_anova",
        [](const std::string& manifest_jsonl, const std::string& variable, double alpha,
           const std::string& granularity, const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            AuditConfig config;
            config.alpha = alpha;
            auto scores = score_manifest(manifest);
            AnovaGranularity g = granularity == "speaker" ? AnovaGranularity::speaker
                                                          : AnovaGranularity::utterance;
            return to_py(anova_to_json(one_way_anova(manifest, scores, variable, config, sc, g)));
        },
        py::arg("manifest_jsonl"), py::arg("variable"), py::arg("alpha") = 0.05,
        py::arg("granularity") = "utterance", py::arg("schema") = py::none(),
        "One-way ANOVA across levels");

    m.def(
        "simulate",
        [](const py::dict& spec, const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            SyntheticSpec sp = SyntheticSpec::from_json(to_json(spec));
            return manifest_to_jsonl(generate_synthetic(sp, sc));
        },
        py::arg("spec"), py::arg("schema") = py::none(),
        "Deterministic synthetic cohort as manifest JSONL");

    m.def(
        "report_json",
        [](const std::string& manifest_jsonl, const std::vector<std::string>& variables,
           double alpha, const py::object& references, const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            AuditConfig config = config_from(alpha, references);
            auto scores = score_manifest(manifest);
            return to_py(
                report_to_json(build_report(manifest, scores, variables, config, sc)));
        },
        py::arg("manifest_jsonl"), py::arg("variables"), py::arg("alpha") = 0.05,
        py::arg("references") = py::none(), py::arg("schema") = py::none(),
        "Full audit report as a dict");

    m.def(
        "report_markdown",
        [](const std::string& manifest_jsonl, const std::vector<std::string>& variables,
           double alpha, const py::object& references, const py::object& schema) {
            DemographicSchema sc = schema_from(schema);
            DatasetManifest manifest = load_manifest_text(manifest_jsonl, sc);
            AuditConfig config = config_from(alpha, references);
            auto scores = score_manifest(manifest);
            return render_markdown(build_report(manifest, scores, variables, config, sc));
        },
        py::arg("manifest_jsonl"), py::arg("variables"), py::arg("alpha") = 0.05,
        py::arg("references") = py::none(), py::arg("schema") = py::none(),
        "Full audit report as markdown text");
}
