#include "eae/score.hpp"

#include <map>
#include <set>
#include <unordered_map>

#include "eae/error.hpp"
#include "eae/text.hpp"

namespace eae::score {

using nlohmann::json;

std::string to_string(MatchMode m) { return m == MatchMode::exact_normalized ? "exact_normalized" : "head_word"; }

MatchMode match_mode_from_string(const std::string& s) {
    if (s == "exact" || s == "exact_normalized") return MatchMode::exact_normalized;
    if (s == "head" || s == "head_word") return MatchMode::head_word;
    throw ConfigError("unknown match mode '" + s + "' (expected exact or head)");
}

std::string match_key(std::string_view normalized, MatchMode mode) {
    if (mode == MatchMode::exact_normalized) return std::string(normalized);
    // Normalized text has single ASCII spaces between tokens.
    const auto sp = normalized.rfind(' ');
    return std::string(sp == std::string_view::npos ? normalized : normalized.substr(sp + 1));
}

namespace {

template <typename Key>
ScoreCounts multiset_counts(const std::vector<Key>& preds, const std::vector<Key>& golds) {
    std::map<Key, std::size_t> gold_mult;
    for (const auto& g : golds) ++gold_mult[g];
    std::map<Key, std::size_t> pred_mult;
    for (const auto& p : preds) ++pred_mult[p];
    ScoreCounts c;
    for (const auto& [k, n] : pred_mult) {
        const auto it = gold_mult.find(k);
        if (it != gold_mult.end()) c.tp += std::min(n, it->second);
    }
    c.fp = preds.size() - c.tp;
    c.fn = golds.size() - c.tp;
    return c;
}

}  // namespace

TupleCounts tuple_counts(const std::vector<extract::PredictedArgument>& preds,
                         const std::vector<corpus::GoldArgument>& golds, MatchMode mode) {
    using Pair = std::pair<std::string, std::string>;
    std::vector<std::string> pi, gi;
    std::vector<Pair> pc, gc;
    for (const auto& p : preds) {
        auto k = match_key(p.normalized, mode);
        pc.emplace_back(extract::role_key(p.role), k);
        pi.push_back(std::move(k));
    }
    for (const auto& g : golds) {
        auto k = match_key(extract::normalize_text(g.text), mode);
        gc.emplace_back(extract::role_key(g.role), k);
        gi.push_back(std::move(k));
    }
    return TupleCounts{multiset_counts(pi, gi), multiset_counts(pc, gc)};
}

Prf micro_f1(const ScoreCounts& c) noexcept {
    Prf r;
    const auto tp = static_cast<double>(c.tp);
    if (c.tp + c.fp > 0) r.precision = tp / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = tp / static_cast<double>(c.tp + c.fn);
    if (r.precision + r.recall > 0.0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

ScoreReport score_corpus(const std::vector<extract::ExtractionRecord>& records,
                         const std::vector<corpus::Document>& gold_corpus, MatchMode mode) {
    std::unordered_map<std::string, const corpus::Document*> by_id;
    for (const auto& d : gold_corpus) by_id.emplace(d.doc_id, &d);

    std::map<std::pair<std::string, std::size_t>, const extract::ExtractionRecord*> by_event;
    for (const auto& r : records) {
        const auto it = by_id.find(r.doc_id);
        if (it == by_id.end()) throw GoldMismatch(r.doc_id);
        const auto& doc = *it->second;
        if (r.event_index >= doc.events.size()) {
            throw GoldMismatch(r.doc_id, "no event at index " + std::to_string(r.event_index));
        }
        if (doc.events[r.event_index].event_type != r.event_type) {
            throw GoldMismatch(r.doc_id, "event " + std::to_string(r.event_index) + " is '" +
                                             doc.events[r.event_index].event_type + "', record says '" + r.event_type + "'");
        }
        if (!by_event.emplace(std::make_pair(r.doc_id, r.event_index), &r).second) {
            throw GoldMismatch(r.doc_id, "duplicate record for event " + std::to_string(r.event_index));
        }
    }

    ScoreReport report;
    report.match_mode = mode;
    report.n_documents = gold_corpus.size();
    for (const auto& doc : gold_corpus) {
        for (std::size_t ei = 0; ei < doc.events.size(); ++ei) {
            const auto it = by_event.find({doc.doc_id, ei});
            static const std::vector<extract::PredictedArgument> kNone;
            const auto& preds =
                it == by_event.end() ? kNone : it->second->predictions;
            const auto counts = tuple_counts(extract::dedupe_predictions(preds), doc.events[ei].arguments, mode);
            report.counts_i += counts.arg_i;
            report.counts_c += counts.arg_c;
        }
    }
    report.arg_i = micro_f1(report.counts_i);
    report.arg_c = micro_f1(report.counts_c);
    return report;
}

namespace {

json prf_json(const Prf& p) { return json{{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}}; }
json counts_json(const ScoreCounts& c) { return json{{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}; }
Prf prf_from(const json& j) {
    return Prf{j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}
ScoreCounts counts_from(const json& j) {
    return ScoreCounts{j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("fn").get<std::size_t>()};
}

}  // namespace

json to_json(const ScoreReport& r) {
    return json{{"schema", 1},
                {"dataset", r.dataset},
                {"strategy", r.strategy},
                {"model", r.model},
                {"arg_i", prf_json(r.arg_i)},
                {"arg_c", prf_json(r.arg_c)},
                {"counts_i", counts_json(r.counts_i)},
                {"counts_c", counts_json(r.counts_c)},
                {"n_documents", r.n_documents},
                {"match_mode", to_string(r.match_mode)}};
}

ScoreReport report_from_json(const json& j) {
    ScoreReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.strategy = j.value("strategy", std::string{});
    r.model = j.value("model", std::string{});
    r.arg_i = prf_from(j.at("arg_i"));
    r.arg_c = prf_from(j.at("arg_c"));
    r.counts_i = counts_from(j.at("counts_i"));
    r.counts_c = counts_from(j.at("counts_c"));
    r.n_documents = j.value("n_documents", std::size_t{0});
    r.match_mode = match_mode_from_string(j.at("match_mode").get<std::string>());
    return r;
}

}  // namespace eae::score
