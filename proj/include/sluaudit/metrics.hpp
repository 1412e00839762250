#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sluaudit/ingest.hpp"
#include "sluaudit/types.hpp"

namespace sluaudit {

// Minimum-edit-distance error counts against a reference of ref_word_count
// tokens. total() is the edit distance; rate() the per-utterance WER.
struct WerCounts {
    int substitutions = 0;
    int deletions = 0;
    int insertions = 0;
    int ref_word_count = 0;

    int total() const { return substitutions + deletions + insertions; }
    double rate() const { return static_cast<double>(total()) / ref_word_count; }

    bool operator==(const WerCounts&) const = default;
};

struct UtteranceScore {
    std::string utterance_id;
    int em = 0;                    // 1 iff exactly parsed
    std::optional<WerCounts> wer;  // absent when no hypothesis transcript
};

// Case fold, then split on ASCII whitespace. No punctuation stripping.
std::vector<std::string> tokenize(std::string_view text);

// 1 iff intents match and the slot multisets match, both case-folded.
int exact_match(const Parse& reference, const Parse& hypothesis);

// Unit-cost alignment via dynamic programming. Among equal-cost alignments
// the backtrace prefers substitution over deletion over insertion, so the
// S/D/I decomposition is reproducible; the total is minimal either way.
// Throws DataError on an empty reference.
WerCounts word_error_counts(const std::vector<std::string>& reference,
                            const std::vector<std::string>& hypothesis);

// One score per record, in manifest order. em_override wins over parse
// comparison; WER fields are filled only when a hypothesis transcript exists.
// Records with no response source raise a DataError naming every offender.
std::vector<UtteranceScore> score_manifest(const DatasetManifest& manifest);

struct GroupAggregate {
    std::string group_key;  // level, or levels joined by '|' for cells
    long n_utterances = 0;
    long n_speakers = 0;
    double emr = 0.0;
    std::optional<double> wer;  // sum(errors) / sum(ref words), when available
    std::map<std::string, double> per_speaker_emr;
};

struct AggregateResult {
    std::vector<GroupAggregate> groups;  // sorted by group_key
    long excluded = 0;                   // records missing a grouping tag
};

// Groups scores by one variable (per-level) or several (per-cell). Records
// missing any grouping tag are excluded and counted.
AggregateResult aggregate(const std::vector<UtteranceScore>& scores,
                          const DatasetManifest& manifest,
                          const std::vector<std::string>& group_by);

// Line-delimited JSON: utterance_id, em, wer_errors, ref_word_count.
std::string scores_to_jsonl(const std::vector<UtteranceScore>& scores);
std::vector<UtteranceScore> scores_from_jsonl(const std::string& text);

// CSV: group_key,n_utterances,n_speakers,emr,wer
std::string aggregates_to_csv(const AggregateResult& result);

}  // namespace sluaudit
