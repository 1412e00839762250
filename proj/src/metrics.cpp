#include "sluaudit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sluaudit/errors.hpp"

namespace sluaudit {

using nlohmann::json;

std::vector<std::string> tokenize(std::string_view text) {
    std::string folded = fold_ascii(text);
    std::vector<std::string> tokens;
    std::string current;
    for (char c : folded) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

int exact_match(const Parse& reference, const Parse& hypothesis) {
    return parses_match(reference, hypothesis) ? 1 : 0;
}

WerCounts word_error_counts(const std::vector<std::string>& reference,
                            const std::vector<std::string>& hypothesis) {
    if (reference.empty()) {
        throw DataError("word_error_counts: reference token sequence is empty");
    }
    const size_t n = reference.size();
    const size_t m = hypothesis.size();

    // cost[i][j] = edit distance between reference[0..i) and hypothesis[0..j).
    std::vector<std::vector<int>> cost(n + 1, std::vector<int>(m + 1, 0));
    for (size_t i = 0; i <= n; ++i) cost[i][0] = static_cast<int>(i);
    for (size_t j = 0; j <= m; ++j) cost[0][j] = static_cast<int>(j);
    for (size_t i = 1; i <= n; ++i) {
        for (size_t j = 1; j <= m; ++j) {
            int match = cost[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0 : 1);
            int del = cost[i - 1][j] + 1;
            int ins = cost[i][j - 1] + 1;
            cost[i][j] = std::min({match, del, ins});
        }
    }

    // Backtrace; on cost ties prefer substitution, then deletion, then insertion.
    WerCounts counts;
    counts.ref_word_count = static_cast<int>(n);
    size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && reference[i - 1] == hypothesis[j - 1] &&
            cost[i][j] == cost[i - 1][j - 1]) {
            --i, --j;
        } else if (i > 0 && j > 0 && cost[i][j] == cost[i - 1][j - 1] + 1) {
            ++counts.substitutions;
            --i, --j;
        } else if (i > 0 && cost[i][j] == cost[i - 1][j] + 1) {
            ++counts.deletions;
            --i;
        } else {
            ++counts.insertions;
            --j;
        }
    }
    return counts;
}

std::vector<UtteranceScore> score_manifest(const DatasetManifest& manifest) {
    std::vector<std::string> missing;
    for (const auto& rec : manifest.records) {
        if (!rec.has_response_source()) missing.push_back(rec.utterance_id);
    }
    if (!missing.empty()) {
        std::string joined;
        for (const auto& id : missing) {
            if (!joined.empty()) joined += ", ";
            joined += id;
        }
        throw DataError("records lack hypothesis_parse and em_override: " + joined);
    }

    std::vector<UtteranceScore> scores;
    scores.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) {
        UtteranceScore s;
        s.utterance_id = rec.utterance_id;
        if (rec.em_override.has_value()) {
            s.em = *rec.em_override;
        } else {
            s.em = exact_match(rec.reference_parse, *rec.hypothesis_parse);
        }
        if (rec.hypothesis_transcript.has_value()) {
            s.wer = word_error_counts(tokenize(rec.reference_transcript),
                                      tokenize(*rec.hypothesis_transcript));
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

AggregateResult aggregate(const std::vector<UtteranceScore>& scores,
                          const DatasetManifest& manifest,
                          const std::vector<std::string>& group_by) {
    if (group_by.empty()) throw DataError("aggregate: group_by is empty");

    struct Accum {
        long n = 0;
        long em_sum = 0;
        long err_sum = 0;
        long ref_word_sum = 0;
        bool any_wer = false;
        std::set<std::string> speakers;
        std::map<std::string, std::pair<long, long>> speaker_em;  // id → (em_sum, n)
    };
    std::map<std::string, Accum> cells;

    AggregateResult result;
    for (const auto& s : scores) {
        const UtteranceRecord* rec = manifest.find(s.utterance_id);
        if (rec == nullptr) {
            throw DataError("aggregate: score id not in manifest: " + s.utterance_id);
        }
        std::string key;
        bool tagged = true;
        for (const auto& var : group_by) {
            auto it = rec->tags.find(var);
            if (it == rec->tags.end()) {
                tagged = false;
                break;
            }
            if (!key.empty()) key += '|';
            key += it->second;
        }
        if (!tagged) {
            ++result.excluded;
            continue;
        }
        Accum& a = cells[key];
        ++a.n;
        a.em_sum += s.em;
        if (s.wer.has_value()) {
            a.any_wer = true;
            a.err_sum += s.wer->total();
            a.ref_word_sum += s.wer->ref_word_count;
        }
        a.speakers.insert(rec->speaker_id);
        auto& se = a.speaker_em[rec->speaker_id];
        se.first += s.em;
        se.second += 1;
    }

    for (const auto& [key, a] : cells) {
        GroupAggregate g;
        g.group_key = key;
        g.n_utterances = a.n;
        g.n_speakers = static_cast<long>(a.speakers.size());
        g.emr = static_cast<double>(a.em_sum) / a.n;
        if (a.any_wer && a.ref_word_sum > 0) {
            g.wer = static_cast<double>(a.err_sum) / a.ref_word_sum;
        }
        for (const auto& [spk, em_n] : a.speaker_em) {
            g.per_speaker_emr[spk] = static_cast<double>(em_n.first) / em_n.second;
        }
        result.groups.push_back(std::move(g));
    }
    return result;
}

std::string scores_to_jsonl(const std::vector<UtteranceScore>& scores) {
    std::string out;
    for (const auto& s : scores) {
        json j;
        j["utterance_id"] = s.utterance_id;
        j["em"] = s.em;
        if (s.wer.has_value()) {
            j["wer_errors"] = s.wer->total();
            j["ref_word_count"] = s.wer->ref_word_count;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<UtteranceScore> scores_from_jsonl(const std::string& text) {
    std::vector<UtteranceScore> scores;
    std::istringstream in(text);
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError("score line " + std::to_string(line_no) + ": " + e.what());
        }
        UtteranceScore s;
        try {
            s.utterance_id = j.at("utterance_id").get<std::string>();
            s.em = j.at("em").get<int>();
            if (j.contains("wer_errors") || j.contains("ref_word_count")) {
                WerCounts w;
                w.substitutions = j.at("wer_errors").get<int>();  // decomposition not exported
                w.ref_word_count = j.at("ref_word_count").get<int>();
                if (w.substitutions < 0 || w.ref_word_count < 1) {
                    throw DataError("score line " + std::to_string(line_no) +
                                    ": wer_errors must be >= 0 and ref_word_count >= 1");
                }
                s.wer = w;
            }
        } catch (const json::exception& e) {
            throw DataError("score line " + std::to_string(line_no) + ": " + e.what());
        }
        if (s.em != 0 && s.em != 1) {
            throw DataError("score line " + std::to_string(line_no) + ": em must be 0 or 1");
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

std::string aggregates_to_csv(const AggregateResult& result) {
    std::ostringstream out;
    out << "group_key,n_utterances,n_speakers,emr,wer\n";
    out.setf(std::ios::fixed);
    out.precision(6);
    for (const auto& g : result.groups) {
        out << g.group_key << ',' << g.n_utterances << ',' << g.n_speakers << ','
            << g.emr << ',';
        if (g.wer.has_value()) out << *g.wer;
        out << '\n';
    }
    return out.str();
}

}  // namespace sluaudit
