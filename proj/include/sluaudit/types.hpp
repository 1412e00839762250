#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace sluaudit {

// ASCII lowercase fold. Transcripts and labels in this domain are normalized
// voice commands; no Unicode-aware folding is attempted.
std::string fold_ascii(std::string_view s);

// One intent entity, e.g. {name: "artist_name", value: "abbey road"}.
struct Slot {
    std::string name;
    std::string value;

    bool operator==(const Slot&) const = default;
};

// An intent with its slot multiset. Slot order is not meaningful; semantic
// comparison (see metrics::exact_match) is order-independent and case-folded.
struct Parse {
    std::string intent;
    std::vector<Slot> slots;

    bool operator==(const Parse&) const = default;
};

// Case-folded, order-independent parse comparison.
bool parses_match(const Parse& a, const Parse& b);

// Speaker tags keyed by variable name ("gender", "age_range", ...). Absent
// keys mean the tag was not collected for this speaker.
using DemographicTags = std::map<std::string, std::string>;

// Closed level sets per demographic variable, loaded from a schema file so
// other taxonomies can be audited. Variables are kept sorted by name.
class DemographicSchema {
public:
    struct Variable {
        std::string name;
        std::vector<std::string> levels;  // ordered; drives column order
        std::string reference;            // default reference level

        bool operator==(const Variable&) const = default;
    };

    DemographicSchema() = default;
    explicit DemographicSchema(std::vector<Variable> variables);

    // The taxonomy shipped with the tool: gender, age_range,
    // dialectal_region, ethnicity.
    static DemographicSchema builtin_default();

    // Schema file format: {"<variable>": {"levels": [...], "reference": "..."}}
    static DemographicSchema from_json(const nlohmann::json& doc);
    static DemographicSchema from_file(const std::string& path);
    nlohmann::json to_json() const;

    const std::vector<Variable>& variables() const { return variables_; }
    const Variable* find(std::string_view name) const;
    bool has_level(std::string_view variable, std::string_view level) const;

    bool operator==(const DemographicSchema&) const = default;

private:
    std::vector<Variable> variables_;
};

// One scored utterance. The transcripts are raw strings; tokenization is a
// scoring concern. em_override carries a precomputed binary outcome and takes
// precedence over parse comparison, so audits can run on score-only exports.
struct UtteranceRecord {
    std::string utterance_id;
    std::string speaker_id;
    std::string split;  // train | dev | test
    std::string reference_transcript;
    std::optional<std::string> hypothesis_transcript;
    Parse reference_parse;
    std::optional<Parse> hypothesis_parse;
    DemographicTags tags;
    std::optional<int> em_override;  // 0 or 1

    bool has_response_source() const {
        return hypothesis_parse.has_value() || em_override.has_value();
    }

    bool operator==(const UtteranceRecord&) const = default;
};

// JSON (de)serialization of a single record; field names are the wire format.
nlohmann::json record_to_json(const UtteranceRecord& record);
UtteranceRecord record_from_json(const nlohmann::json& doc);

struct Violation {
    std::string field;
    std::string rule;     // stable identifier, e.g. "unknown_level"
    std::string message;
};

// Pure structural check of a record against the schema. Returns one entry per
// broken rule; an empty list means the record satisfies every invariant,
// including the presence of a response source (hypothesis parse or override).
std::vector<Violation> validate_record(const UtteranceRecord& record,
                                       const DemographicSchema& schema);

// Knobs shared by every statistical procedure.
struct AuditConfig {
    double alpha = 0.05;
    // Per-variable reference overrides; falls back to the schema default.
    std::map<std::string, std::string> reference_levels;
    int max_iterations = 100;
    double loglik_tolerance = 1e-8;
    double divergence_bound = 15.0;    // per-coefficient |beta| limit
    double or_shift_threshold = 0.05;  // relative OR change flagging cross-effects

    // Throws DataError when a knob is out of range.
    void validate() const;

    nlohmann::json to_json() const;
    static AuditConfig from_json(const nlohmann::json& doc);
};

}  // namespace sluaudit
