#include "sluaudit/types.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "sluaudit/errors.hpp"

namespace sluaudit {

std::string fold_ascii(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) {
        return static_cast<char>(std::tolower(c));
    });
    return out;
}

bool parses_match(const Parse& a, const Parse& b) {
    if (fold_ascii(a.intent) != fold_ascii(b.intent)) return false;
    if (a.slots.size() != b.slots.size()) return false;

    auto folded = [](const std::vector<Slot>& slots) {
        std::vector<std::pair<std::string, std::string>> out;
        out.reserve(slots.size());
        for (const auto& s : slots) out.emplace_back(fold_ascii(s.name), fold_ascii(s.value));
        std::sort(out.begin(), out.end());
        return out;
    };
    return folded(a.slots) == folded(b.slots);
}

DemographicSchema::DemographicSchema(std::vector<Variable> variables)
    : variables_(std::move(variables)) {
    std::sort(variables_.begin(), variables_.end(),
              [](const Variable& a, const Variable& b) { return a.name < b.name; });
    for (const auto& v : variables_) {
        if (v.name.empty()) throw DataError("schema: variable name must be non-empty");
        if (v.levels.size() < 2)
            throw DataError("schema: variable '" + v.name + "' needs at least 2 levels");
        if (std::find(v.levels.begin(), v.levels.end(), v.reference) == v.levels.end())
            throw DataError("schema: reference '" + v.reference + "' is not a level of '" +
                            v.name + "'");
    }
}

DemographicSchema DemographicSchema::builtin_default() {
    return DemographicSchema{{
        {"age_range", {"9-16", "17-28", "29-41", "42-54", "55-100"}, "17-28"},
        {"dialectal_region",
         {"Asian", "Inland-North", "LatinX", "Mid-Atlantic", "Midland", "New England",
          "Southern", "Western"},
         "Asian"},
        {"ethnicity", {"African American", "Caucasian"}, "African American"},
        {"gender", {"female", "male"}, "female"},
    }};
}

DemographicSchema DemographicSchema::from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw DataError("schema: top-level JSON must be an object");
    std::vector<Variable> vars;
    for (const auto& [name, body] : doc.items()) {
        if (!body.is_object() || !body.contains("levels") || !body["levels"].is_array())
            throw DataError("schema: variable '" + name + "' must have a 'levels' array");
        Variable v;
        v.name = name;
        for (const auto& level : body["levels"]) {
            if (!level.is_string() || level.get<std::string>().empty())
                throw DataError("schema: levels of '" + name + "' must be non-empty strings");
            v.levels.push_back(level.get<std::string>());
        }
        if (body.contains("reference"))
            v.reference = body["reference"].get<std::string>();
        else if (!v.levels.empty())
            v.reference = v.levels.front();
        vars.push_back(std::move(v));
    }
    return DemographicSchema(std::move(vars));
}

DemographicSchema DemographicSchema::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("schema: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("schema: invalid JSON in '" + path + "': " + e.what());
    }
    return from_json(doc);
}

nlohmann::json DemographicSchema::to_json() const {
    nlohmann::json doc = nlohmann::json::object();
    for (const auto& v : variables_)
        doc[v.name] = {{"levels", v.levels}, {"reference", v.reference}};
    return doc;
}

const DemographicSchema::Variable* DemographicSchema::find(std::string_view name) const {
    for (const auto& v : variables_)
        if (v.name == name) return &v;
    return nullptr;
}

bool DemographicSchema::has_level(std::string_view variable, std::string_view level) const {
    const Variable* v = find(variable);
    if (!v) return false;
    return std::find(v->levels.begin(), v->levels.end(), level) != v->levels.end();
}

namespace {

nlohmann::json parse_to_json(const Parse& p) {
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& s : p.slots) slots.push_back({{"name", s.name}, {"value", s.value}});
    return {{"intent", p.intent}, {"slots", slots}};
}

Parse parse_from_json(const nlohmann::json& doc, const std::string& field) {
    if (!doc.is_object() || !doc.contains("intent"))
        throw DataError(field + ": parse object must contain 'intent'");
    Parse p;
    p.intent = doc["intent"].get<std::string>();
    if (doc.contains("slots")) {
        if (!doc["slots"].is_array()) throw DataError(field + ": 'slots' must be an array");
        for (const auto& s : doc["slots"]) {
            if (!s.is_object() || !s.contains("name") || !s.contains("value"))
                throw DataError(field + ": each slot needs 'name' and 'value'");
            p.slots.push_back({s["name"].get<std::string>(), s["value"].get<std::string>()});
        }
    }
    return p;
}

}  // namespace

nlohmann::json record_to_json(const UtteranceRecord& r) {
    nlohmann::json doc = {
        {"utterance_id", r.utterance_id},
        {"speaker_id", r.speaker_id},
        {"split", r.split},
        {"reference_transcript", r.reference_transcript},
        {"reference_parse", parse_to_json(r.reference_parse)},
        {"tags", nlohmann::json(r.tags)},
    };
    if (r.hypothesis_transcript) doc["hypothesis_transcript"] = *r.hypothesis_transcript;
    if (r.hypothesis_parse) doc["hypothesis_parse"] = parse_to_json(*r.hypothesis_parse);
    if (r.em_override) doc["em_override"] = *r.em_override;
    return doc;
}

UtteranceRecord record_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw DataError("record: each line must be a JSON object");
    for (const char* required : {"utterance_id", "speaker_id", "split", "reference_transcript",
                                 "reference_parse"})
        if (!doc.contains(required))
            throw DataError(std::string("record: missing required field '") + required + "'");

    UtteranceRecord r;
    r.utterance_id = doc["utterance_id"].get<std::string>();
    r.speaker_id = doc["speaker_id"].get<std::string>();
    r.split = doc["split"].get<std::string>();
    r.reference_transcript = doc["reference_transcript"].get<std::string>();
    r.reference_parse = parse_from_json(doc["reference_parse"], "reference_parse");
    if (doc.contains("hypothesis_transcript"))
        r.hypothesis_transcript = doc["hypothesis_transcript"].get<std::string>();
    if (doc.contains("hypothesis_parse"))
        r.hypothesis_parse = parse_from_json(doc["hypothesis_parse"], "hypothesis_parse");
    if (doc.contains("tags")) {
        if (!doc["tags"].is_object()) throw DataError("record: 'tags' must be an object");
        for (const auto& [k, v] : doc["tags"].items()) r.tags[k] = v.get<std::string>();
    }
    if (doc.contains("em_override")) {
        if (!doc["em_override"].is_number_integer())
            throw DataError("record: 'em_override' must be the integer 0 or 1");
        r.em_override = doc["em_override"].get<int>();
    }
    return r;
}

namespace {

bool has_whitespace(const std::string& s) {
    return std::any_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

void validate_parse(const Parse& p, const std::string& field, std::vector<Violation>& out) {
    if (p.intent.empty())
        out.push_back({field + ".intent", "empty_intent", "intent must be non-empty"});
    for (const auto& s : p.slots) {
        if (s.name.empty() || has_whitespace(s.name))
            out.push_back({field + ".slots", "bad_slot_name",
                           "slot name '" + s.name + "' must be non-empty without whitespace"});
        if (s.value.empty())
            out.push_back({field + ".slots", "empty_slot_value",
                           "slot '" + s.name + "' has an empty value"});
    }
}

}  // namespace

std::vector<Violation> validate_record(const UtteranceRecord& r,
                                       const DemographicSchema& schema) {
    std::vector<Violation> out;
    if (r.utterance_id.empty())
        out.push_back({"utterance_id", "empty_id", "utterance_id must be non-empty"});
    if (r.speaker_id.empty())
        out.push_back({"speaker_id", "empty_id", "speaker_id must be non-empty"});
    if (r.split != "train" && r.split != "dev" && r.split != "test")
        out.push_back({"split", "unknown_split",
                       "split '" + r.split + "' is not one of train/dev/test"});

    validate_parse(r.reference_parse, "reference_parse", out);
    if (r.hypothesis_parse) validate_parse(*r.hypothesis_parse, "hypothesis_parse", out);

    for (const auto& [variable, level] : r.tags) {
        if (!schema.find(variable)) {
            out.push_back({"tags." + variable, "unknown_variable",
                           "variable '" + variable + "' is not in the schema"});
        } else if (!schema.has_level(variable, level)) {
            out.push_back({"tags." + variable, "unknown_level",
                           "level '" + level + "' is not in the '" + variable + "' level set"});
        }
    }

    if (r.em_override && *r.em_override != 0 && *r.em_override != 1)
        out.push_back({"em_override", "bad_override",
                       "em_override must be 0 or 1, got " + std::to_string(*r.em_override)});
    if (!r.has_response_source())
        out.push_back({"hypothesis_parse", "missing_response",
                       "record has neither hypothesis_parse nor em_override"});
    return out;
}

void AuditConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DataError("config: alpha must be in (0,1)");
    if (max_iterations <= 0) throw DataError("config: max_iterations must be positive");
    if (!(loglik_tolerance > 0.0)) throw DataError("config: loglik_tolerance must be positive");
    if (!(divergence_bound > 0.0)) throw DataError("config: divergence_bound must be positive");
    if (!(or_shift_threshold > 0.0))
        throw DataError("config: or_shift_threshold must be positive");
}

nlohmann::json AuditConfig::to_json() const {
    return {
        {"alpha", alpha},
        {"reference_levels", nlohmann::json(reference_levels)},
        {"max_iterations", max_iterations},
        {"loglik_tolerance", loglik_tolerance},
        {"divergence_bound", divergence_bound},
        {"or_shift_threshold", or_shift_threshold},
    };
}

AuditConfig AuditConfig::from_json(const nlohmann::json& doc) {
    AuditConfig c;
    if (doc.contains("alpha")) c.alpha = doc["alpha"].get<double>();
    if (doc.contains("reference_levels"))
        for (const auto& [k, v] : doc["reference_levels"].items())
            c.reference_levels[k] = v.get<std::string>();
    if (doc.contains("max_iterations")) c.max_iterations = doc["max_iterations"].get<int>();
    if (doc.contains("loglik_tolerance"))
        c.loglik_tolerance = doc["loglik_tolerance"].get<double>();
    if (doc.contains("divergence_bound"))
        c.divergence_bound = doc["divergence_bound"].get<double>();
    if (doc.contains("or_shift_threshold"))
        c.or_shift_threshold = doc["or_shift_threshold"].get<double>();
    c.validate();
    return c;
}

}  // namespace sluaudit
