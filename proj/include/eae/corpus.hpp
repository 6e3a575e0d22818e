#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace eae::corpus {

enum class Dataset { rams, docee };
enum class DocEESetting { normal, cross_domain };
enum class SpanUnit { token, character };

std::string to_string(Dataset d);
Dataset dataset_from_string(const std::string& s);
std::string to_string(DocEESetting s);
DocEESetting setting_from_string(const std::string& s);

// Half-open [start, end). Token spans index into the flattened token list,
// character spans into the document text counted in code points.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    SpanUnit unit = SpanUnit::token;

    bool operator==(const Span&) const = default;
};

struct GoldArgument {
    std::string role;
    std::string text;
    std::optional<Span> span;

    bool operator==(const GoldArgument&) const = default;
};

struct Trigger {
    std::string text;
    Span span;

    bool operator==(const Trigger&) const = default;
};

struct GoldEvent {
    std::string event_type;
    std::optional<Trigger> trigger;  // RAMS only
    std::vector<GoldArgument> arguments;

    bool operator==(const GoldEvent&) const = default;
};

struct Document {
    std::string doc_id;
    Dataset dataset = Dataset::rams;
    std::vector<std::vector<std::string>> sentences;  // RAMS tokens; empty for DocEE
    std::string text;
    std::vector<GoldEvent> events;
    std::optional<std::string> domain_tag;

    std::size_t token_count() const noexcept;
    bool operator==(const Document&) const = default;
};

struct LoadOptions {
    // Skip malformed lines/records instead of failing on the first one.
    bool lenient = false;
};

struct LoadResult {
    std::vector<Document> documents;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
    // Event types present in the loaded documents. Exemplar selection in the
    // cross-domain setting checks demos against this set.
    std::set<std::string> event_types;
};

// RAMS JSON Lines (`doc_key`, `sentences`, `evt_triggers`, `gold_evt_links`).
LoadResult load_rams(const std::filesystem::path& path, const LoadOptions& opts = {});

// DocEE JSON array split. `path` is either a split file or a directory holding
// `normal/test.json` and `cross/test.json`.
LoadResult load_docee(const std::filesystem::path& path, DocEESetting setting, const LoadOptions& opts = {});

// Deterministic draw of `n` documents: sort by doc_id, seeded Fisher-Yates,
// take the first n. Throws SampleError when n exceeds the corpus.
std::vector<Document> sample_subset(const std::vector<Document>& docs, std::size_t n, std::uint64_t seed);

enum class IssueKind { out_of_bounds, inverted_span, empty_role, empty_text, empty_event_type, missing_trigger,
                       unexpected_trigger, duplicate_doc_id };

struct ValidationIssue {
    IssueKind kind;
    std::string doc_id;
    std::string detail;
};

std::string to_string(IssueKind k);

std::vector<ValidationIssue> validate_document(const Document& doc);
// Per-document issues plus corpus-level ones (duplicate doc_id).
std::vector<ValidationIssue> validate_corpus(const std::vector<Document>& docs);

std::set<std::string> event_types(const std::vector<Document>& docs);

// Normalized dump, schema 1. One JSON object per line with sorted keys.
inline constexpr int kDumpSchema = 1;
nlohmann::json to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);
std::string dump_line(const Document& doc);
void write_dump(const std::filesystem::path& path, const std::vector<Document>& docs);
std::vector<Document> load_dump(const std::filesystem::path& path);

}  // namespace eae::corpus
