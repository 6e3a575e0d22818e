#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace eae::extract {

struct PredictedArgument {
    std::string role;
    std::string text;
    std::string normalized;
    std::size_t source_line = 0;  // 0-based line in the raw response

    bool operator==(const PredictedArgument&) const = default;
};

enum class ParseMode { canonical, lenient, empty };

std::string to_string(ParseMode m);

struct ParseDiagnostics {
    ParseMode mode_used = ParseMode::empty;
    std::size_t skipped_lines = 0;
    std::vector<std::string> warnings;

    bool operator==(const ParseDiagnostics&) const = default;
};

struct ParseResult {
    std::vector<PredictedArgument> predictions;
    ParseDiagnostics diagnostics;
};

/// Total: never throws.
///
/// With a "Final Answers:" line, only the lines after its last occurrence are
/// read (canonical). Without one, every line is tried (lenient). Answer lines
/// look like `Role: "text"` or `Role: text`; several values on one line are
/// separated by `;` outside quotes. Unquoted "none"-like values and a bare
/// "(none)" line mean no answer. Any other non-blank line that does not fit
/// counts as skipped.
ParseResult parse_response(std::string_view raw);

/// NFKC, lowercase, whitespace collapsed and trimmed, surrounding ASCII
/// punctuation stripped, a leading "the "/"a "/"an " removed. Applied to a
/// fixed point so the function is idempotent.
std::string normalize_text(std::string_view s);

// Lowercased, trimmed role label used for Arg-C keys and deduplication.
std::string role_key(std::string_view role);

// Keeps the first prediction per (role_key, normalized).
std::vector<PredictedArgument> dedupe_predictions(const std::vector<PredictedArgument>& preds);

// Rewrites roles that match a known role case-insensitively to its spelling.
// Unknown roles are left untouched.
void align_roles(std::vector<PredictedArgument>& preds, const std::vector<std::string>& known_roles);

// "Final Answers:" followed by one `role: "text"` line per prediction.
std::string render_canonical(const std::vector<PredictedArgument>& preds);

enum class RecordStatus { ok, parse_empty, provider_error };

std::string to_string(RecordStatus s);
RecordStatus record_status_from_string(const std::string& s);

struct ExtractionRecord {
    std::string doc_id;
    std::size_t event_index = 0;
    std::string event_type;
    std::optional<std::string> trigger;
    std::string raw_response;
    std::vector<PredictedArgument> predictions;
    ParseDiagnostics diagnostics;
    RecordStatus status = RecordStatus::ok;

    bool operator==(const ExtractionRecord&) const = default;
};

inline constexpr int kPredictionSchema = 1;

nlohmann::json to_json(const ExtractionRecord& r);
ExtractionRecord record_from_json(const nlohmann::json& j);
void write_predictions(const std::filesystem::path& path, const std::vector<ExtractionRecord>& records);
void append_prediction(const std::filesystem::path& path, const ExtractionRecord& record);
std::vector<ExtractionRecord> load_predictions(const std::filesystem::path& path);

}  // namespace eae::extract
