#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sluaudit/bias_tests.hpp"
#include "sluaudit/errors.hpp"
#include "sluaudit/glm.hpp"
#include "sluaudit/ingest.hpp"
#include "sluaudit/metrics.hpp"
#include "sluaudit/report.hpp"
#include "sluaudit/types.hpp"
#include "sluaudit/version.hpp"

namespace {

using namespace sluaudit;
using nlohmann::json;

// Bad invocations that CLI11 cannot catch itself (flag value syntax, format
// choices that make no sense for the command). Exit code 3.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string input;
    std::string hypotheses;
    std::string schema_path;
    std::string output;
    std::string spec_path;
    std::string target;
    std::string adjust_by;
    std::string format = "json";
    std::vector<std::string> variables;
    std::vector<std::string> references;
    double alpha = 0.05;
    std::uint64_t seed = 0;
    bool seed_given = false;
};

std::string one_line(std::string text) {
    for (auto& c : text) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return text;
}

DemographicSchema load_schema(const Options& opts) {
    if (opts.schema_path.empty()) return DemographicSchema::builtin_default();
    return DemographicSchema::from_file(opts.schema_path);
}

AuditConfig make_config(const Options& opts, const DemographicSchema& schema) {
    AuditConfig config;
    config.alpha = opts.alpha;
    for (const auto& entry : opts.references) {
        auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == entry.size()) {
            throw UsageError("--reference expects VAR=LEVEL, got '" + entry + "'");
        }
        std::string var = entry.substr(0, eq);
        std::string level = entry.substr(eq + 1);
        if (!schema.has_level(var, level)) {
            throw DataError("--reference: '" + level + "' is not a level of '" + var + "'");
        }
        config.reference_levels[var] = level;
    }
    config.validate();
    return config;
}

DatasetManifest load_input(const Options& opts, const DemographicSchema& schema) {
    if (opts.input.empty()) throw UsageError("--input is required");
    DatasetManifest manifest = load_manifest(opts.input, schema);
    if (!opts.hypotheses.empty()) {
        manifest = join_hypotheses(manifest, load_hypotheses(opts.hypotheses));
    }
    return manifest;
}

void write_output(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open output file '" + path + "'");
    out << text;
}

// Schema variables usable as covariates on this manifest.
std::vector<std::string> observed_variables(const DatasetManifest& manifest,
                                            const DemographicSchema& schema) {
    std::vector<std::string> usable;
    for (const auto& var : schema.variables()) {
        std::set<std::string> levels;
        for (const auto& rec : manifest.records) {
            auto it = rec.tags.find(var.name);
            if (it != rec.tags.end()) levels.insert(it->second);
        }
        if (levels.size() >= 2) usable.push_back(var.name);
    }
    return usable;
}

void require_format(const Options& opts, std::initializer_list<const char*> allowed) {
    for (const char* f : allowed) {
        if (opts.format == f) return;
    }
    throw UsageError("--format '" + opts.format + "' is not supported by this command");
}

void run_validate(const Options& opts) {
    DemographicSchema schema = load_schema(opts);
    DatasetManifest manifest = load_input(opts, schema);
    std::string problems;
    for (const auto& rec : manifest.records) {
        for (const auto& v : validate_record(rec, schema)) {
            if (!problems.empty()) problems += "; ";
            problems += rec.utterance_id + ": " + v.field + ": " + v.message;
        }
    }
    if (!problems.empty()) throw DataError("validation failed: " + problems);
    std::cout << "validated " << manifest.records.size() << " records\n";
}

void run_score(const Options& opts) {
    require_format(opts, {"json", "csv"});
    DemographicSchema schema = load_schema(opts);
    DatasetManifest manifest = load_input(opts, schema);
    std::vector<UtteranceScore> scores = score_manifest(manifest);
    if (opts.format == "json") {
        write_output(scores_to_jsonl(scores), opts.output);
        return;
    }
    if (opts.variables.empty()) {
        throw UsageError("score --format csv needs at least one --variable to group by");
    }
    write_output(aggregates_to_csv(aggregate(scores, manifest, opts.variables)),
                 opts.output);
}

void run_audit(const Options& opts) {
    require_format(opts, {"json"});
    if (opts.variables.empty()) throw UsageError("audit needs at least one --variable");
    DemographicSchema schema = load_schema(opts);
    DatasetManifest manifest = load_input(opts, schema);
    AuditConfig config = make_config(opts, schema);
    std::vector<UtteranceScore> scores = score_manifest(manifest);
    json results = json::array();
    for (const auto& var : opts.variables) {
        results.push_back(
            univariate_to_json(univariate_audit(manifest, scores, var, config, schema)));
        results.push_back(
            chi2_to_json(chi2_contingency(manifest, scores, var, config, schema)));
        results.push_back(
            anova_to_json(one_way_anova(manifest, scores, var, config, schema)));
    }
    write_output(results.dump(2) + "\n", opts.output);
}

void run_adjust(const Options& opts) {
    require_format(opts, {"json"});
    if (opts.target.empty() || opts.adjust_by.empty()) {
        throw UsageError("adjust needs --target and --adjust-by");
    }
    DemographicSchema schema = load_schema(opts);
    DatasetManifest manifest = load_input(opts, schema);
    AuditConfig config = make_config(opts, schema);
    std::vector<UtteranceScore> scores = score_manifest(manifest);
    ConfoundingVerdict verdict =
        adjustment_test(manifest, scores, opts.target, opts.adjust_by, config, schema);
    write_output(verdict_to_json(verdict).dump(2) + "\n", opts.output);
}

void run_matrix(const Options& opts) {
    require_format(opts, {"json"});
    DemographicSchema schema = load_schema(opts);
    DatasetManifest manifest = load_input(opts, schema);
    AuditConfig config = make_config(opts, schema);
    std::vector<UtteranceScore> scores = score_manifest(manifest);
    std::vector<std::string> variables = opts.variables;
    if (variables.empty()) variables = observed_variables(manifest, schema);
    json results = json::array();
    for (const auto& v :
         full_adjustment_matrix(manifest, scores, variables, config, schema)) {
        results.push_back(verdict_to_json(v));
    }
    write_output(results.dump(2) + "\n", opts.output);
}

void run_simulate(const Options& opts) {
    if (opts.spec_path.empty()) throw UsageError("simulate needs --spec");
    DemographicSchema schema = load_schema(opts);
    SyntheticSpec spec = SyntheticSpec::from_file(opts.spec_path);
    if (opts.seed_given) spec.seed = opts.seed;
    DatasetManifest manifest = generate_synthetic(spec, schema);
    write_output(manifest_to_jsonl(manifest), opts.output);
}

void run_report(const Options& opts) {
    require_format(opts, {"json", "markdown", "csv"});
    DemographicSchema schema = load_schema(opts);
    DatasetManifest manifest = load_input(opts, schema);
    AuditConfig config = make_config(opts, schema);
    std::vector<UtteranceScore> scores = score_manifest(manifest);
    std::vector<std::string> variables = opts.variables;
    if (variables.empty()) variables = observed_variables(manifest, schema);

    if (opts.format == "csv") {
        if (opts.output.empty()) {
            throw UsageError("report --format csv needs --output as a filename prefix");
        }
        for (const auto& [var, csv] : export_boxplot_data(scores, manifest, variables)) {
            std::string path = opts.output + "." + var + ".csv";
            write_output(csv, path);
            std::cout << path << "\n";
        }
        return;
    }
    AuditReport report = build_report(manifest, scores, variables, config, schema);
    if (opts.format == "markdown") {
        write_output(render_markdown(report), opts.output);
    } else {
        write_output(report_to_json(report).dump(2) + "\n", opts.output);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kToolName) + " " + kVersion +
                 " - demographic bias audit for spoken language understanding"};
    app.require_subcommand(1);

    Options opts;
    auto add_io = [&](CLI::App* sub, bool with_hypotheses = true) {
        sub->add_option("--input", opts.input, "Dataset manifest (JSONL)");
        if (with_hypotheses) {
            sub->add_option("--hypotheses", opts.hypotheses,
                            "Hypotheses to join before use (JSONL)");
        }
        sub->add_option("--schema", opts.schema_path,
                        "Demographic schema JSON (default: built-in)");
        sub->add_option("--output", opts.output, "Output path (default: stdout)");
    };
    auto add_stats = [&](CLI::App* sub) {
        sub->add_option("--alpha", opts.alpha, "Significance level (default 0.05)");
        sub->add_option("--reference", opts.references,
                        "Reference level override, VAR=LEVEL (repeatable)");
    };
    auto add_format = [&](CLI::App* sub) {
        sub->add_option("--format", opts.format, "Output format: json, markdown or csv");
    };

    CLI::App* validate = app.add_subcommand("validate", "Check a manifest against the schema");
    add_io(validate);

    CLI::App* score = app.add_subcommand("score", "Per-utterance EM and WER scores");
    add_io(score);
    score->add_option("--variable", opts.variables,
                      "Group-by variable for --format csv (repeatable)");
    add_format(score);

    CLI::App* audit = app.add_subcommand("audit", "Univariate test battery per variable");
    add_io(audit);
    audit->add_option("--variable", opts.variables, "Variable to audit (repeatable)");
    add_stats(audit);
    add_format(audit);

    CLI::App* adjust = app.add_subcommand("adjust", "LLR adjustment test for one pair");
    add_io(adjust);
    adjust->add_option("--target", opts.target, "Variable under audit");
    adjust->add_option("--adjust-by", opts.adjust_by, "Variable adjusted for");
    add_stats(adjust);
    add_format(adjust);

    CLI::App* matrix = app.add_subcommand("matrix", "Adjustment tests for all ordered pairs");
    add_io(matrix);
    matrix->add_option("--variable", opts.variables,
                       "Variables to cross (repeatable; default: all usable)");
    add_stats(matrix);
    add_format(matrix);

    CLI::App* simulate = app.add_subcommand("simulate", "Generate a synthetic cohort");
    simulate->add_option("--spec", opts.spec_path, "Synthetic cohort spec (JSON)");
    simulate->add_option("--schema", opts.schema_path,
                         "Demographic schema JSON (default: built-in)");
    simulate->add_option("--output", opts.output, "Output path (default: stdout)");
    simulate->add_option("--seed", opts.seed, "Override the spec's RNG seed")
        ->trigger_on_parse()
        ->each([&](const std::string&) { opts.seed_given = true; });

    CLI::App* report = app.add_subcommand("report", "Full audit report");
    add_io(report);
    report->add_option("--variable", opts.variables,
                       "Variables to include (repeatable; default: all usable)");
    add_stats(report);
    add_format(report);

    validate->callback([&] { run_validate(opts); });
    score->callback([&] { run_score(opts); });
    audit->callback([&] { run_audit(opts); });
    adjust->callback([&] { run_adjust(opts); });
    matrix->callback([&] { run_matrix(opts); });
    simulate->callback([&] { run_simulate(opts); });
    report->callback([&] { run_report(opts); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << kToolName << ": usage_error: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const UsageError& e) {
        std::cerr << kToolName << ": usage_error: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const StatError& e) {
        std::cerr << kToolName << ": stat_error: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const AuditError& e) {
        std::cerr << kToolName << ": data_error: " << one_line(e.what()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << kToolName << ": internal_error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
