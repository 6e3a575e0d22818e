#include "eae/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <random>
#include <regex>
#include <sstream>
#include <unordered_set>

#include "eae/error.hpp"
#include "eae/text.hpp"

namespace eae::corpus {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Dataset d) { return d == Dataset::rams ? "RAMS" : "DocEE"; }

Dataset dataset_from_string(const std::string& s) {
    if (text::iequals(s, "rams")) return Dataset::rams;
    if (text::iequals(s, "docee")) return Dataset::docee;
    throw ConfigError("unknown dataset '" + s + "'");
}

std::string to_string(DocEESetting s) { return s == DocEESetting::normal ? "normal" : "cross_domain"; }

DocEESetting setting_from_string(const std::string& s) {
    if (s == "normal") return DocEESetting::normal;
    if (s == "cross_domain" || s == "cross") return DocEESetting::cross_domain;
    throw ConfigError("unknown DocEE setting '" + s + "'");
}

std::string to_string(IssueKind k) {
    switch (k) {
        case IssueKind::out_of_bounds: return "OutOfBounds";
        case IssueKind::inverted_span: return "InvertedSpan";
        case IssueKind::empty_role: return "EmptyRole";
        case IssueKind::empty_text: return "EmptyText";
        case IssueKind::empty_event_type: return "EmptyEventType";
        case IssueKind::missing_trigger: return "MissingTrigger";
        case IssueKind::unexpected_trigger: return "UnexpectedTrigger";
        case IssueKind::duplicate_doc_id: return "DuplicateDocId";
    }
    return "Unknown";
}

std::size_t Document::token_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.size();
    return n;
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return ss.str();
}

std::string join_tokens(const std::vector<std::string>& tokens, std::size_t start, std::size_t end) {
    std::string out;
    for (std::size_t i = start; i < end; ++i) {
        if (i > start) out += ' ';
        out += tokens[i];
    }
    return out;
}

// RAMS link labels look like "evt089arg01victim".
std::string role_from_link_label(const std::string& label) {
    static const std::regex prefix(R"(^evt\d+arg\d+)");
    std::smatch m;
    if (std::regex_search(label, m, prefix)) return label.substr(static_cast<std::size_t>(m.length(0)));
    return label;
}

Span inclusive_token_span(const json& pair, std::size_t n_tokens, const char* what) {
    if (!pair.is_array() || pair.size() < 2 || !pair[0].is_number_integer() || !pair[1].is_number_integer()) {
        throw std::invalid_argument(std::string(what) + " span must be [start, end]");
    }
    const auto s = pair[0].get<long long>();
    const auto e = pair[1].get<long long>();
    if (s < 0 || e < s || static_cast<std::size_t>(e) >= n_tokens) {
        throw std::invalid_argument(std::string(what) + " span [" + std::to_string(s) + ", " + std::to_string(e) +
                                    "] outside document of " + std::to_string(n_tokens) + " tokens");
    }
    return Span{static_cast<std::size_t>(s), static_cast<std::size_t>(e) + 1, SpanUnit::token};
}

Document parse_rams_record(const json& rec) {
    if (!rec.is_object()) throw std::invalid_argument("record is not an object");
    Document doc;
    doc.dataset = Dataset::rams;
    doc.doc_id = rec.at("doc_key").get<std::string>();
    if (doc.doc_id.empty()) throw std::invalid_argument("empty doc_key");
    doc.sentences = rec.at("sentences").get<std::vector<std::vector<std::string>>>();

    std::vector<std::string> tokens;
    for (const auto& s : doc.sentences) tokens.insert(tokens.end(), s.begin(), s.end());
    doc.text = join_tokens(tokens, 0, tokens.size());

    if (rec.contains("evt_triggers")) {
        for (const auto& trig : rec.at("evt_triggers")) {
            if (!trig.is_array() || trig.size() < 3 || !trig[2].is_array() || trig[2].empty() ||
                !trig[2][0].is_array() || trig[2][0].empty()) {
                throw std::invalid_argument("evt_triggers entry must be [start, end, [[type, score], ...]]");
            }
            const Span span = inclusive_token_span(trig, tokens.size(), "trigger");
            GoldEvent ev;
            ev.event_type = trig[2][0][0].get<std::string>();
            ev.trigger = Trigger{join_tokens(tokens, span.start, span.end), span};
            doc.events.push_back(std::move(ev));
        }
    }
    if (rec.contains("gold_evt_links")) {
        for (const auto& link : rec.at("gold_evt_links")) {
            if (!link.is_array() || link.size() < 3) {
                throw std::invalid_argument("gold_evt_links entry must be [[ts, te], [as, ae], label]");
            }
            const Span trig = inclusive_token_span(link[0], tokens.size(), "link trigger");
            const Span arg = inclusive_token_span(link[1], tokens.size(), "argument");
            auto ev = std::find_if(doc.events.begin(), doc.events.end(),
                                   [&](const GoldEvent& e) { return e.trigger && e.trigger->span == trig; });
            if (ev == doc.events.end()) throw std::invalid_argument("argument link references an unknown trigger");
            ev->arguments.push_back(
                GoldArgument{role_from_link_label(link[2].get<std::string>()), join_tokens(tokens, arg.start, arg.end), arg});
        }
    }
    return doc;
}

std::size_t line_of_offset(std::string_view content, std::size_t byte) {
    byte = std::min(byte, content.size());
    return 1 + static_cast<std::size_t>(std::count(content.begin(), content.begin() + static_cast<long>(byte), '\n'));
}

Document parse_docee_record(const json& rec, std::size_t index) {
    if (!rec.is_object()) throw std::invalid_argument("record is not an object");
    Document doc;
    doc.dataset = Dataset::docee;
    if (rec.contains("id")) {
        doc.doc_id = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
    } else {
        std::ostringstream id;
        id << "docee-" << std::setw(6) << std::setfill('0') << index;
        doc.doc_id = id.str();
    }
    const auto title = rec.value("title", std::string{});
    const auto content = rec.at("text").get<std::string>();
    // Title and body joined by a blank line; character offsets in the record
    // refer to the body and are shifted accordingly.
    const std::size_t shift = title.empty() ? 0 : text::codepoint_count(title) + 2;
    doc.text = title.empty() ? content : title + "\n\n" + content;
    if (rec.contains("domain") && rec["domain"].is_string()) doc.domain_tag = rec["domain"].get<std::string>();

    GoldEvent ev;
    ev.event_type = rec.at("event_type").get<std::string>();
    if (rec.contains("arguments")) {
        for (const auto& a : rec.at("arguments")) {
            GoldArgument arg;
            arg.role = a.contains("role") ? a.at("role").get<std::string>() : a.at("type").get<std::string>();
            arg.text = a.at("text").get<std::string>();
            if (a.contains("start") && a.contains("end") && a["start"].is_number_integer() && a["end"].is_number_integer()) {
                const auto s = a["start"].get<long long>();
                const auto e = a["end"].get<long long>();
                if (s < 0 || e < s) throw std::invalid_argument("argument span must satisfy 0 <= start <= end");
                arg.span = Span{static_cast<std::size_t>(s) + shift, static_cast<std::size_t>(e) + shift, SpanUnit::character};
            }
            ev.arguments.push_back(std::move(arg));
        }
    }
    doc.events.push_back(std::move(ev));
    return doc;
}

void accept_or_skip(LoadResult& out, std::unordered_set<std::string>& seen, Document doc, std::size_t line_no,
                    const LoadOptions& opts) {
    if (!seen.insert(doc.doc_id).second) {
        const std::string reason = "duplicate doc_id '" + doc.doc_id + "'";
        if (!opts.lenient) throw FormatError(line_no, reason);
        ++out.skipped;
        out.warnings.push_back("line " + std::to_string(line_no) + ": " + reason);
        return;
    }
    out.documents.push_back(std::move(doc));
}

void fail_or_skip(LoadResult& out, std::size_t line_no, const std::string& reason, const LoadOptions& opts) {
    if (!opts.lenient) throw FormatError(line_no, reason);
    ++out.skipped;
    out.warnings.push_back("line " + std::to_string(line_no) + ": " + reason);
}

}  // namespace

LoadResult load_rams(const fs::path& path, const LoadOptions& opts) {
    const std::string content = read_file(path);
    LoadResult out;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    for (auto line : text::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        Document doc;
        try {
            doc = parse_rams_record(json::parse(line));
        } catch (const std::exception& e) {
            fail_or_skip(out, line_no, e.what(), opts);
            continue;
        }
        accept_or_skip(out, seen, std::move(doc), line_no, opts);
    }
    out.event_types = event_types(out.documents);
    return out;
}

LoadResult load_docee(const fs::path& path, DocEESetting setting, const LoadOptions& opts) {
    fs::path file = path;
    std::error_code ec;
    if (fs::is_directory(path, ec)) {
        file = path / (setting == DocEESetting::normal ? "normal" : "cross") / "test.json";
        if (!fs::exists(file, ec)) {
            throw SettingError("DocEE " + to_string(setting) + " split not found at '" + file.string() + "'");
        }
    } else if (!fs::exists(path, ec)) {
        throw SettingError("DocEE split file '" + path.string() + "' does not exist");
    }

    const std::string content = read_file(file);
    LoadResult out;
    if (text::trim(content).empty()) return out;

    json records;
    try {
        records = json::parse(content);
    } catch (const json::parse_error& e) {
        throw FormatError(line_of_offset(content, e.byte), e.what());
    }
    if (!records.is_array()) throw FormatError(1, "DocEE split must be a JSON array");

    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        // Records are addressed by 1-based position in the array.
        const std::size_t record_no = i + 1;
        Document doc;
        try {
            doc = parse_docee_record(records[i], i);
        } catch (const std::exception& e) {
            fail_or_skip(out, record_no, e.what(), opts);
            continue;
        }
        accept_or_skip(out, seen, std::move(doc), record_no, opts);
    }
    out.event_types = event_types(out.documents);
    return out;
}

namespace {

// Unbiased draw in [0, bound) from the raw engine output. Avoids
// std::uniform_int_distribution, whose algorithm differs between standard
// libraries and would make subsets platform-dependent.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (true) {
        const std::uint64_t r = rng();
        if (r >= threshold) return r % bound;
    }
}

}  // namespace

std::vector<Document> sample_subset(const std::vector<Document>& docs, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw SampleError("sample size must be positive");
    if (n > docs.size()) {
        throw SampleError("cannot sample " + std::to_string(n) + " documents from a corpus of " +
                          std::to_string(docs.size()));
    }
    std::vector<const Document*> order;
    order.reserve(docs.size());
    for (const auto& d : docs) order.push_back(&d);
    std::stable_sort(order.begin(), order.end(), [](const Document* a, const Document* b) { return a->doc_id < b->doc_id; });

    std::mt19937_64 rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<Document> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(*order[i]);
    return out;
}

namespace {

void check_span(const Document& doc, const Span& span, const std::string& what, std::vector<ValidationIssue>& issues) {
    if (span.start > span.end) {
        issues.push_back({IssueKind::inverted_span, doc.doc_id, what + " span start > end"});
        return;
    }
    const std::size_t limit = span.unit == SpanUnit::token ? doc.token_count() : text::codepoint_count(doc.text);
    if (span.end > limit) {
        issues.push_back({IssueKind::out_of_bounds, doc.doc_id,
                          what + " span end " + std::to_string(span.end) + " exceeds document length " + std::to_string(limit)});
    }
}

}  // namespace

std::vector<ValidationIssue> validate_document(const Document& doc) {
    std::vector<ValidationIssue> issues;
    for (std::size_t ei = 0; ei < doc.events.size(); ++ei) {
        const auto& ev = doc.events[ei];
        const std::string where = "event " + std::to_string(ei);
        if (text::trim(ev.event_type).empty()) issues.push_back({IssueKind::empty_event_type, doc.doc_id, where});
        if (doc.dataset == Dataset::rams && !ev.trigger) issues.push_back({IssueKind::missing_trigger, doc.doc_id, where});
        if (doc.dataset == Dataset::docee && ev.trigger) issues.push_back({IssueKind::unexpected_trigger, doc.doc_id, where});
        if (ev.trigger) check_span(doc, ev.trigger->span, where + " trigger", issues);
        for (std::size_t ai = 0; ai < ev.arguments.size(); ++ai) {
            const auto& arg = ev.arguments[ai];
            const std::string aw = where + " argument " + std::to_string(ai);
            if (text::trim(arg.role).empty()) issues.push_back({IssueKind::empty_role, doc.doc_id, aw});
            if (text::trim(arg.text).empty()) issues.push_back({IssueKind::empty_text, doc.doc_id, aw});
            if (arg.span) check_span(doc, *arg.span, aw, issues);
        }
    }
    return issues;
}

std::vector<ValidationIssue> validate_corpus(const std::vector<Document>& docs) {
    std::vector<ValidationIssue> issues;
    std::unordered_set<std::string> seen;
    for (const auto& d : docs) {
        if (!seen.insert(d.doc_id).second) issues.push_back({IssueKind::duplicate_doc_id, d.doc_id, "doc_id repeated"});
        auto per_doc = validate_document(d);
        issues.insert(issues.end(), per_doc.begin(), per_doc.end());
    }
    return issues;
}

std::set<std::string> event_types(const std::vector<Document>& docs) {
    std::set<std::string> out;
    for (const auto& d : docs)
        for (const auto& e : d.events) out.insert(e.event_type);
    return out;
}

namespace {

json span_json(const Span& s) {
    return json{{"start", s.start}, {"end", s.end}, {"unit", s.unit == SpanUnit::token ? "token" : "character"}};
}

Span span_from_json(const json& j) {
    const auto unit = j.at("unit").get<std::string>();
    if (unit != "token" && unit != "character") throw std::invalid_argument("unknown span unit '" + unit + "'");
    return Span{j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>(),
                unit == "token" ? SpanUnit::token : SpanUnit::character};
}

}  // namespace

json to_json(const Document& doc) {
    json events = json::array();
    for (const auto& ev : doc.events) {
        json args = json::array();
        for (const auto& a : ev.arguments) {
            args.push_back({{"role", a.role}, {"text", a.text}, {"span", a.span ? span_json(*a.span) : json(nullptr)}});
        }
        json trig = nullptr;
        if (ev.trigger) trig = json{{"text", ev.trigger->text}, {"span", span_json(ev.trigger->span)}};
        events.push_back({{"event_type", ev.event_type}, {"trigger", trig}, {"arguments", args}});
    }
    json j{{"schema", kDumpSchema},
           {"doc_id", doc.doc_id},
           {"dataset", to_string(doc.dataset)},
           {"text", doc.text},
           {"events", events},
           {"domain_tag", doc.domain_tag ? json(*doc.domain_tag) : json(nullptr)}};
    if (doc.dataset == Dataset::rams) j["sentences"] = doc.sentences;
    return j;
}

Document document_from_json(const json& j) {
    if (j.at("schema").get<int>() != kDumpSchema) {
        throw std::invalid_argument("unsupported corpus dump schema " + j.at("schema").dump());
    }
    Document doc;
    doc.doc_id = j.at("doc_id").get<std::string>();
    doc.dataset = dataset_from_string(j.at("dataset").get<std::string>());
    doc.text = j.at("text").get<std::string>();
    if (j.contains("sentences")) doc.sentences = j["sentences"].get<std::vector<std::vector<std::string>>>();
    if (j.contains("domain_tag") && j["domain_tag"].is_string()) doc.domain_tag = j["domain_tag"].get<std::string>();
    for (const auto& e : j.at("events")) {
        GoldEvent ev;
        ev.event_type = e.at("event_type").get<std::string>();
        if (e.contains("trigger") && !e["trigger"].is_null()) {
            ev.trigger = Trigger{e["trigger"].at("text").get<std::string>(), span_from_json(e["trigger"].at("span"))};
        }
        for (const auto& a : e.at("arguments")) {
            GoldArgument arg{a.at("role").get<std::string>(), a.at("text").get<std::string>(), std::nullopt};
            if (a.contains("span") && !a["span"].is_null()) arg.span = span_from_json(a["span"]);
            ev.arguments.push_back(std::move(arg));
        }
        doc.events.push_back(std::move(ev));
    }
    return doc;
}

std::string dump_line(const Document& doc) { return to_json(doc).dump(); }

void write_dump(const fs::path& path, const std::vector<Document>& docs) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    for (const auto& d : docs) out << dump_line(d) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<Document> load_dump(const fs::path& path) {
    const std::string content = read_file(path);
    std::vector<Document> docs;
    std::size_t line_no = 0;
    for (auto line : text::split_lines(content)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            docs.push_back(document_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw FormatError(line_no, e.what());
        }
    }
    return docs;
}

}  // namespace eae::corpus
