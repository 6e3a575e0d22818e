#include "eae/extract.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/locid.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "eae/error.hpp"
#include "eae/prompt.hpp"
#include "eae/text.hpp"

namespace eae::extract {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ParseMode m) {
    switch (m) {
        case ParseMode::canonical: return "canonical";
        case ParseMode::lenient: return "lenient";
        case ParseMode::empty: return "empty";
    }
    return "empty";
}

namespace {

ParseMode parse_mode_from_string(const std::string& s) {
    if (s == "canonical") return ParseMode::canonical;
    if (s == "lenient") return ParseMode::lenient;
    if (s == "empty") return ParseMode::empty;
    throw std::invalid_argument("unknown parse mode '" + s + "'");
}

bool is_ascii_punct(char c) { return static_cast<unsigned char>(c) < 0x80 && std::ispunct(static_cast<unsigned char>(c)); }

// One normalization pass. normalize_text iterates it to a fixed point.
std::string normalize_once(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
    icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    if (U_SUCCESS(status)) u = nfkc->normalize(u, status);
    u.toLower(icu::Locale::getRoot());
    if (U_SUCCESS(status)) u = nfkc->normalize(u, status);

    // Collapse whitespace runs (any Unicode White_Space) to one ASCII space.
    icu::UnicodeString collapsed;
    bool in_space = false;
    for (int32_t i = 0; i < u.length();) {
        const UChar32 c = u.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c)) {
            in_space = true;
            continue;
        }
        if (in_space && !collapsed.isEmpty()) collapsed.append(static_cast<UChar>(' '));
        in_space = false;
        collapsed.append(c);
    }
    std::string out;
    collapsed.toUTF8String(out);

    std::size_t b = 0;
    std::size_t e = out.size();
    while (b < e && (is_ascii_punct(out[b]) || out[b] == ' ')) ++b;
    while (e > b && (is_ascii_punct(out[e - 1]) || out[e - 1] == ' ')) --e;
    out = out.substr(b, e - b);

    for (std::string_view article : {"the ", "a ", "an "}) {
        if (out.size() > article.size() && out.compare(0, article.size(), article) == 0) {
            out.erase(0, article.size());
            break;
        }
    }
    return out;
}

std::string_view strip_bullet(std::string_view t) {
    if (t.size() >= 2 && (t[0] == '-' || t[0] == '*' || t[0] == '+') && t[1] == ' ') return text::trim(t.substr(2));
    if (t.rfind("\xE2\x80\xA2", 0) == 0) return text::trim(t.substr(3));  // U+2022 bullet
    std::size_t i = 0;
    while (i < t.size() && i < 3 && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
    if (i > 0 && i + 1 < t.size() && (t[i] == '.' || t[i] == ')') && t[i + 1] == ' ') return text::trim(t.substr(i + 2));
    return t;
}

std::string clean_role(std::string_view role) {
    std::string out;
    for (char c : role) {
        if (c != '*' && c != '`') out += c;  // markdown emphasis around labels
    }
    return std::string(text::trim(out));
}

bool plausible_role(std::string_view role) {
    if (role.empty() || role.size() > 64) return false;
    if (role.find('"') != std::string_view::npos) return false;
    const auto first = static_cast<unsigned char>(role.front());
    if (!(std::isalpha(first) || first >= 0x80)) return false;
    std::size_t words = 1;
    for (char c : role) words += c == ' ' ? 1 : 0;
    return words <= 5;
}

bool none_like(std::string_view v) {
    static const std::set<std::string> kNone = {"none", "(none)", "n/a", "na", "null", "-", "nil", "not mentioned",
                                                "not found", "unknown"};
    std::string l = text::ascii_lower(text::trim(v));
    while (!l.empty() && (l.back() == '.' || l.back() == ',')) l.pop_back();
    return kNone.count(l) > 0;
}

struct Piece {
    std::string text;
    bool quoted;
};

std::string_view strip_quotes(std::string_view v, bool& quoted) {
    quoted = false;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        quoted = true;
        return v.substr(1, v.size() - 2);
    }
    constexpr std::string_view lq = "\xE2\x80\x9C";  // U+201C
    constexpr std::string_view rq = "\xE2\x80\x9D";  // U+201D
    if (v.size() >= lq.size() + rq.size() && v.substr(0, lq.size()) == lq && v.substr(v.size() - rq.size()) == rq) {
        quoted = true;
        return v.substr(lq.size(), v.size() - lq.size() - rq.size());
    }
    return v;
}

// Splits on ';' outside double quotes.
std::vector<Piece> split_values(std::string_view value) {
    std::vector<Piece> out;
    bool in_quote = false;
    std::size_t start = 0;
    auto emit = [&](std::size_t end) {
        auto raw = text::trim(value.substr(start, end - start));
        bool quoted = false;
        auto inner = strip_quotes(raw, quoted);
        out.push_back({std::string(quoted ? inner : text::trim(inner)), quoted});
    };
    for (std::size_t i = 0; i < value.size(); ++i) {
        if (value[i] == '"') in_quote = !in_quote;
        if (value[i] == ';' && !in_quote) {
            emit(i);
            start = i + 1;
        }
    }
    emit(value.size());
    return out;
}

}  // namespace

std::string normalize_text(std::string_view s) {
    std::string cur(s);
    for (int i = 0; i < 16; ++i) {
        auto next = normalize_once(cur);
        if (next == cur) return next;
        cur = std::move(next);
    }
    return cur;
}

std::string role_key(std::string_view role) { return text::ascii_lower(text::trim(role)); }

ParseResult parse_response(std::string_view raw) {
    ParseResult result;
    auto& diag = result.diagnostics;
    const auto lines = text::split_lines(raw);

    std::size_t first = 0;
    bool canonical = false;
    for (std::size_t i = lines.size(); i-- > 0;) {
        if (prompt::is_marker_line(lines[i])) {
            first = i + 1;
            canonical = true;
            break;
        }
    }

    for (std::size_t i = first; i < lines.size(); ++i) {
        auto t = strip_bullet(text::trim(lines[i]));
        if (t.empty()) continue;
        if (none_like(t)) continue;
        const auto colon = t.find(':');
        if (colon == std::string_view::npos) {
            ++diag.skipped_lines;
            continue;
        }
        const auto role = clean_role(t.substr(0, colon));
        const auto value = text::trim(t.substr(colon + 1));
        if (!plausible_role(role) || value.empty()) {
            ++diag.skipped_lines;
            continue;
        }
        std::size_t produced = 0;
        bool explicit_none = false;
        for (auto& piece : split_values(value)) {
            if (!piece.quoted && none_like(piece.text)) {
                explicit_none = true;
                continue;
            }
            if (text::trim(piece.text).empty()) continue;
            auto normalized = normalize_text(piece.text);
            if (normalized.empty()) {
                diag.warnings.push_back("line " + std::to_string(i) + ": value '" + piece.text + "' normalizes to nothing");
                continue;
            }
            result.predictions.push_back({role, std::move(piece.text), std::move(normalized), i});
            ++produced;
        }
        if (produced == 0 && !explicit_none) ++diag.skipped_lines;
    }

    if (canonical) {
        diag.mode_used = ParseMode::canonical;
    } else if (!result.predictions.empty()) {
        diag.mode_used = ParseMode::lenient;
        diag.warnings.push_back("no \"Final Answers:\" line; parsed the whole response");
    } else {
        diag.mode_used = ParseMode::empty;
    }
    return result;
}

std::vector<PredictedArgument> dedupe_predictions(const std::vector<PredictedArgument>& preds) {
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<PredictedArgument> out;
    for (const auto& p : preds) {
        if (seen.emplace(role_key(p.role), p.normalized).second) out.push_back(p);
    }
    return out;
}

void align_roles(std::vector<PredictedArgument>& preds, const std::vector<std::string>& known_roles) {
    for (auto& p : preds) {
        const auto key = role_key(p.role);
        const auto it = std::find_if(known_roles.begin(), known_roles.end(),
                                     [&](const std::string& r) { return role_key(r) == key; });
        if (it != known_roles.end()) p.role = *it;
    }
}

std::string render_canonical(const std::vector<PredictedArgument>& preds) {
    std::string out(prompt::kFinalAnswers);
    for (const auto& p : preds) out += "\n" + p.role + ": \"" + p.text + "\"";
    return out;
}

std::string to_string(RecordStatus s) {
    switch (s) {
        case RecordStatus::ok: return "ok";
        case RecordStatus::parse_empty: return "parse_empty";
        case RecordStatus::provider_error: return "provider_error";
    }
    return "ok";
}

RecordStatus record_status_from_string(const std::string& s) {
    if (s == "ok") return RecordStatus::ok;
    if (s == "parse_empty") return RecordStatus::parse_empty;
    if (s == "provider_error") return RecordStatus::provider_error;
    throw std::invalid_argument("unknown record status '" + s + "'");
}

json to_json(const ExtractionRecord& r) {
    json preds = json::array();
    for (const auto& p : r.predictions) {
        preds.push_back({{"role", p.role}, {"text", p.text}, {"normalized", p.normalized}, {"source_line", p.source_line}});
    }
    return json{{"schema", kPredictionSchema},
                {"doc_id", r.doc_id},
                {"event_index", r.event_index},
                {"event_type", r.event_type},
                {"trigger", r.trigger ? json(*r.trigger) : json(nullptr)},
                {"raw_response", r.raw_response},
                {"status", to_string(r.status)},
                {"predictions", preds},
                {"diagnostics",
                 {{"mode_used", to_string(r.diagnostics.mode_used)},
                  {"skipped_lines", r.diagnostics.skipped_lines},
                  {"warnings", r.diagnostics.warnings}}}};
}

ExtractionRecord record_from_json(const json& j) {
    if (j.at("schema").get<int>() != kPredictionSchema) {
        throw std::invalid_argument("unsupported prediction schema " + j.at("schema").dump());
    }
    ExtractionRecord r;
    r.doc_id = j.at("doc_id").get<std::string>();
    r.event_index = j.value("event_index", std::size_t{0});
    r.event_type = j.at("event_type").get<std::string>();
    if (j.contains("trigger") && j["trigger"].is_string()) r.trigger = j["trigger"].get<std::string>();
    r.raw_response = j.value("raw_response", std::string{});
    r.status = record_status_from_string(j.value("status", std::string("ok")));
    for (const auto& p : j.at("predictions")) {
        PredictedArgument pa;
        pa.role = p.at("role").get<std::string>();
        pa.text = p.at("text").get<std::string>();
        pa.normalized = p.contains("normalized") ? p["normalized"].get<std::string>() : normalize_text(pa.text);
        pa.source_line = p.value("source_line", std::size_t{0});
        r.predictions.push_back(std::move(pa));
    }
    if (j.contains("diagnostics")) {
        const auto& d = j["diagnostics"];
        r.diagnostics.mode_used = parse_mode_from_string(d.at("mode_used").get<std::string>());
        r.diagnostics.skipped_lines = d.value("skipped_lines", std::size_t{0});
        r.diagnostics.warnings = d.value("warnings", std::vector<std::string>{});
    }
    return r;
}

void write_predictions(const fs::path& path, const std::vector<ExtractionRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void append_prediction(const fs::path& path, const ExtractionRecord& record) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to '" + path.string() + "'");
    out << to_json(record).dump() << '\n';
    out.flush();
}

std::vector<ExtractionRecord> load_predictions(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string content = ss.str();
    const auto lines = text::split_lines(content);
    std::vector<ExtractionRecord> out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(lines[i])));
        } catch (const std::exception& e) {
            // A torn final line (interrupted run, no trailing newline) is dropped.
            const bool torn_tail = i + 1 == lines.size() && !content.empty() && content.back() != '\n';
            if (torn_tail) break;
            throw FormatError(i + 1, e.what());
        }
    }
    return out;
}

}  // namespace eae::extract
