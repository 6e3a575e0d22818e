#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eae/corpus.hpp"
#include "eae/extract.hpp"

namespace eae::score {

enum class MatchMode { exact_normalized, head_word };

std::string to_string(MatchMode m);
// Accepts "exact", "exact_normalized", "head", "head_word".
MatchMode match_mode_from_string(const std::string& s);

struct ScoreCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    ScoreCounts& operator+=(const ScoreCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
    friend ScoreCounts operator+(ScoreCounts a, const ScoreCounts& b) { return a += b; }
    bool operator==(const ScoreCounts&) const = default;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool operator==(const Prf&) const = default;
};

struct ScoreReport {
    std::string dataset;
    std::string strategy;
    std::string model;
    Prf arg_i;
    Prf arg_c;
    ScoreCounts counts_i;
    ScoreCounts counts_c;
    std::size_t n_documents = 0;
    MatchMode match_mode = MatchMode::exact_normalized;

    bool operator==(const ScoreReport&) const = default;
};

struct TupleCounts {
    ScoreCounts arg_i;
    ScoreCounts arg_c;
};

// Match key of an already-normalized argument text under `mode`.
std::string match_key(std::string_view normalized, MatchMode mode);

// Multiset intersection over match keys (Arg-I) and (role, match key) pairs
// (Arg-C). Gold texts are normalized here.
TupleCounts tuple_counts(const std::vector<extract::PredictedArgument>& preds,
                         const std::vector<corpus::GoldArgument>& golds, MatchMode mode);

// Zero denominators give zero.
Prf micro_f1(const ScoreCounts& counts) noexcept;

// Every gold (document, event) pair contributes, with or without a record.
// Throws GoldMismatch for a record whose document or event is unknown, or a
// second record for the same pair.
ScoreReport score_corpus(const std::vector<extract::ExtractionRecord>& records,
                         const std::vector<corpus::Document>& gold_corpus, MatchMode mode);

nlohmann::json to_json(const ScoreReport& r);
ScoreReport report_from_json(const nlohmann::json& j);

}  // namespace eae::score
