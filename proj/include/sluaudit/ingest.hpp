#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sluaudit/types.hpp"

namespace sluaudit {

// A validated set of records. Loaded manifests are immutable in practice;
// every transformation returns a new manifest.
struct DatasetManifest {
    std::vector<UtteranceRecord> records;
    std::string schema_version = "1";
    std::string source_descriptor;  // provenance, e.g. the file path

    const UtteranceRecord* find(std::string_view utterance_id) const;
};

// Reads line-delimited JSON (one record per line, UTF-8) and validates every
// record against the schema. Parse failures report the 1-based line number;
// duplicate ids and schema violations are collected and rejected together.
// Records without a response source are accepted here — hypotheses may be
// joined later — but are rejected by scoring.
DatasetManifest load_manifest(const std::string& path, const DemographicSchema& schema);

// Same, from an in-memory JSONL string (used by tests and bindings).
DatasetManifest load_manifest_text(const std::string& text, const DemographicSchema& schema,
                                   const std::string& descriptor = "<memory>");

std::string manifest_to_jsonl(const DatasetManifest& manifest);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

struct HypothesisEntry {
    std::optional<std::string> transcript;
    std::optional<Parse> parse;
};

// Populates hypothesis fields on matching records; records without an entry
// keep their prior values. Keys that match no record raise a DataError
// listing every orphan id.
DatasetManifest join_hypotheses(const DatasetManifest& manifest,
                                const std::map<std::string, HypothesisEntry>& hypotheses);

// Hypotheses file: JSONL of {utterance_id, hypothesis_transcript?, hypothesis_parse?}.
std::map<std::string, HypothesisEntry> load_hypotheses(const std::string& path);

// Forward model for synthetic cohorts: each demographic cell draws its
// em_override values i.i.d. Bernoulli with the cell's success probability.
// Cell keys are level values joined by '|' in `variables` order.
struct SyntheticSpec {
    std::vector<std::string> variables = {"gender", "age_range", "dialectal_region"};
    std::map<std::string, double> group_probabilities;  // cell key -> p in [0,1]
    std::map<std::string, long> cell_counts;            // cell key -> #utterances
    std::uint64_t seed = 0;
    int speakers_per_cell = 10;

    static SyntheticSpec from_json(const nlohmann::json& doc);
    static SyntheticSpec from_file(const std::string& path);
    nlohmann::json to_json() const;

    // Checks ranges and that every cell key decomposes into schema levels.
    void validate(const DemographicSchema& schema) const;
};

// Deterministic given the spec: cells are visited in sorted key order and all
// draws come from one SplitMix64 stream seeded with spec.seed. Speaker ids
// rotate round-robin within each cell.
DatasetManifest generate_synthetic(const SyntheticSpec& spec, const DemographicSchema& schema);

}  // namespace sluaudit
