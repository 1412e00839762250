#include "sluaudit/ingest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "sluaudit/errors.hpp"
#include "sluaudit/rng.hpp"

namespace sluaudit {

const UtteranceRecord* DatasetManifest::find(std::string_view utterance_id) const {
    for (const auto& r : records)
        if (r.utterance_id == utterance_id) return &r;
    return nullptr;
}

namespace {

DatasetManifest load_from_stream(std::istream& in, const DemographicSchema& schema,
                                 const std::string& descriptor) {
    DatasetManifest manifest;
    manifest.source_descriptor = descriptor;

    std::set<std::string> seen_ids;
    std::vector<std::string> problems;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;

        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(descriptor + ":" + std::to_string(line_no) +
                            ": JSON parse error: " + e.what());
        }

        UtteranceRecord record;
        try {
            record = record_from_json(doc);
        } catch (const DataError& e) {
            problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
            continue;
        }

        if (!seen_ids.insert(record.utterance_id).second)
            throw DataError(descriptor + ": duplicate utterance_id '" + record.utterance_id +
                            "' at line " + std::to_string(line_no));

        for (const auto& v : validate_record(record, schema)) {
            if (v.rule == "missing_response") continue;  // joined later
            problems.push_back("line " + std::to_string(line_no) + ": " + v.field + ": " +
                               v.message);
        }
        manifest.records.push_back(std::move(record));
    }

    if (!problems.empty()) {
        std::string msg = descriptor + ": " + std::to_string(problems.size()) +
                          " schema violation(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        throw DataError(msg);
    }
    return manifest;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path, const DemographicSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("manifest: cannot open '" + path + "'");
    return load_from_stream(in, schema, path);
}

DatasetManifest load_manifest_text(const std::string& text, const DemographicSchema& schema,
                                   const std::string& descriptor) {
    std::istringstream in(text);
    return load_from_stream(in, schema, descriptor);
}

std::string manifest_to_jsonl(const DatasetManifest& manifest) {
    std::string out;
    for (const auto& r : manifest.records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("manifest: cannot write '" + path + "'");
    out << manifest_to_jsonl(manifest);
}

DatasetManifest join_hypotheses(const DatasetManifest& manifest,
                                const std::map<std::string, HypothesisEntry>& hypotheses) {
    std::set<std::string> orphans;
    for (const auto& [id, entry] : hypotheses) orphans.insert(id);
    for (const auto& r : manifest.records) orphans.erase(r.utterance_id);
    if (!orphans.empty()) {
        std::string msg = "join: hypothesis ids not present in manifest:";
        for (const auto& id : orphans) msg += " '" + id + "'";
        throw DataError(msg);
    }

    DatasetManifest joined = manifest;
    for (auto& r : joined.records) {
        auto it = hypotheses.find(r.utterance_id);
        if (it == hypotheses.end()) continue;
        if (it->second.transcript) r.hypothesis_transcript = it->second.transcript;
        if (it->second.parse) r.hypothesis_parse = it->second.parse;
    }
    return joined;
}

std::map<std::string, HypothesisEntry> load_hypotheses(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("hypotheses: cannot open '" + path + "'");

    std::map<std::string, HypothesisEntry> out;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": JSON parse error: " + e.what());
        }
        if (!doc.contains("utterance_id"))
            throw DataError(path + ":" + std::to_string(line_no) + ": missing 'utterance_id'");
        // Reuse the record field parsers by faking a minimal record.
        HypothesisEntry entry;
        if (doc.contains("hypothesis_transcript"))
            entry.transcript = doc["hypothesis_transcript"].get<std::string>();
        if (doc.contains("hypothesis_parse")) {
            nlohmann::json wrapper = {
                {"utterance_id", "h"}, {"speaker_id", "h"}, {"split", "test"},
                {"reference_transcript", ""},
                {"reference_parse", doc["hypothesis_parse"]},
            };
            entry.parse = record_from_json(wrapper).reference_parse;
        }
        std::string id = doc["utterance_id"].get<std::string>();
        if (!out.emplace(id, std::move(entry)).second)
            throw DataError(path + ": duplicate hypothesis for utterance_id '" + id + "'");
    }
    return out;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& doc) {
    SyntheticSpec spec;
    if (doc.contains("variables")) {
        spec.variables.clear();
        for (const auto& v : doc["variables"]) spec.variables.push_back(v.get<std::string>());
    }
    if (doc.contains("group_probabilities"))
        for (const auto& [k, v] : doc["group_probabilities"].items())
            spec.group_probabilities[k] = v.get<double>();
    if (doc.contains("cell_counts"))
        for (const auto& [k, v] : doc["cell_counts"].items())
            spec.cell_counts[k] = v.get<long>();
    if (doc.contains("seed")) spec.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("speakers_per_cell"))
        spec.speakers_per_cell = doc["speakers_per_cell"].get<int>();
    return spec;
}

SyntheticSpec SyntheticSpec::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("synthetic spec: cannot open '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("synthetic spec: invalid JSON in '" + path + "': " + e.what());
    }
    return from_json(doc);
}

nlohmann::json SyntheticSpec::to_json() const {
    return {
        {"variables", variables},
        {"group_probabilities", nlohmann::json(group_probabilities)},
        {"cell_counts", nlohmann::json(cell_counts)},
        {"seed", seed},
        {"speakers_per_cell", speakers_per_cell},
    };
}

namespace {

std::vector<std::string> split_cell_key(const std::string& key) {
    std::vector<std::string> parts;
    std::string current;
    for (char c : key) {
        if (c == '|') {
            parts.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    parts.push_back(current);
    return parts;
}

}  // namespace

void SyntheticSpec::validate(const DemographicSchema& schema) const {
    if (variables.empty()) throw DataError("synthetic spec: 'variables' must be non-empty");
    for (const auto& v : variables)
        if (!schema.find(v))
            throw DataError("synthetic spec: variable '" + v + "' is not in the schema");
    if (speakers_per_cell <= 0)
        throw DataError("synthetic spec: speakers_per_cell must be positive");

    for (const auto& [key, count] : cell_counts) {
        if (count < 0)
            throw DataError("synthetic spec: cell '" + key + "' has a negative count");
        auto it = group_probabilities.find(key);
        if (it == group_probabilities.end())
            throw DataError("synthetic spec: cell '" + key + "' has no probability");
        if (!(it->second >= 0.0 && it->second <= 1.0))
            throw DataError("synthetic spec: probability of cell '" + key +
                            "' must be in [0,1]");
        auto parts = split_cell_key(key);
        if (parts.size() != variables.size())
            throw DataError("synthetic spec: cell '" + key + "' has " +
                            std::to_string(parts.size()) + " components, expected " +
                            std::to_string(variables.size()));
        for (std::size_t i = 0; i < parts.size(); ++i)
            if (!schema.has_level(variables[i], parts[i]))
                throw DataError("synthetic spec: '" + parts[i] + "' is not a level of '" +
                                variables[i] + "'");
    }
}

DatasetManifest generate_synthetic(const SyntheticSpec& spec,
                                   const DemographicSchema& schema) {
    spec.validate(schema);

    DatasetManifest manifest;
    manifest.source_descriptor = "synthetic(seed=" + std::to_string(spec.seed) + ")";
    SplitMix64 rng(spec.seed);

    long record_no = 0;
    long cell_no = 0;
    for (const auto& [key, count] : spec.cell_counts) {  // std::map: sorted keys
        const double p = spec.group_probabilities.at(key);
        const auto levels = split_cell_key(key);

        DemographicTags tags;
        for (std::size_t i = 0; i < levels.size(); ++i) tags[spec.variables[i]] = levels[i];

        for (long i = 0; i < count; ++i) {
            UtteranceRecord r;
            char id[32];
            std::snprintf(id, sizeof(id), "syn-%08ld", record_no++);
            r.utterance_id = id;
            r.speaker_id = "spk-" + std::to_string(cell_no) + "-" +
                           std::to_string(i % spec.speakers_per_cell);
            r.split = "test";
            r.reference_transcript = "synthetic utterance";
            r.reference_parse = {"synthetic", {}};
            r.tags = tags;
            r.em_override = rng.bernoulli(p) ? 1 : 0;
            manifest.records.push_back(std::move(r));
        }
        ++cell_no;
    }
    return manifest;
}

}  // namespace sluaudit
