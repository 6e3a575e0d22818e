#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eae/corpus.hpp"

namespace eae::prompt {

enum class Strategy { dhp, cot, standard };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

// Literal answer marker shared with the response parser.
inline constexpr std::string_view kFinalAnswers = "Final Answers:";
inline constexpr std::string_view kTruncatedMarker = "[TRUNCATED]";
inline constexpr std::string_view kStageNames[3] = {"Initiation", "Expansion", "Verification"};

// ceil(code points / 4). Provider-agnostic and deterministic.
std::size_t count_tokens(std::string_view text) noexcept;

/// Versioned template files with `{placeholder}` slots. The directory carries a
/// manifest.json listing every template id with its SHA-256; loading fails
/// if any file is missing or does not match its digest.
class TemplateSet {
public:
    static TemplateSet load(const std::filesystem::path& dir);

    const std::string& get(const std::string& id) const;
    const std::string& version() const noexcept { return version_; }

private:
    std::string version_;
    std::map<std::string, std::string> templates_;
};

struct RoleSpec {
    std::string role;
    std::string description;
};

/// Event type -> role inventory. Lookup is case-insensitive and falls back to
/// parent types ("conflict.attack.airstrike" -> "conflict.attack").
class Ontology {
public:
    Ontology() = default;
    explicit Ontology(std::map<std::string, std::vector<RoleSpec>> by_type);

    static Ontology load(const std::filesystem::path& path);

    const std::vector<RoleSpec>* find(std::string_view event_type) const;
    std::vector<std::string> role_names(std::string_view event_type) const;

private:
    std::map<std::string, std::vector<RoleSpec>> by_type_;  // lowercase keys
};

struct DefinitionBlock {
    std::string event_definition;
    std::vector<std::pair<std::string, std::string>> terminology;
    std::vector<RoleSpec> ontology_roles;
    std::optional<std::string> fallback;  // set when the event type is unknown

    std::string render(std::string_view event_type) const;
};

enum class RuleCategory { role_relation, morphology, verification };

struct HeuristicRule {
    std::string rule_id;
    std::string statement;
    RuleCategory category;
};

std::string to_string(RuleCategory c);

struct ExemplarDemo {
    std::string document_text;
    std::string event_type;
    std::optional<std::string> trigger;
    std::string worked_reasoning;
    std::vector<std::pair<std::string, std::string>> final_answers;
};

// Accepts a single demo object or an array of them. Throws ExemplarError when a
// demo lacks the three stage names in order or has no answers.
std::vector<ExemplarDemo> load_exemplars(const std::filesystem::path& path);
void check_exemplar(const ExemplarDemo& demo);

enum class BlockKind { task_definition, definitions, heuristics, exemplar, cot_scaffold, query };

std::string to_string(BlockKind k);

/// A block renders as head + join(body, body_sep) + tail. Only `body` is ever
/// shortened by trimming: exemplar reasoning, heuristic rule lines, or the
/// query document.
struct PromptBlock {
    BlockKind kind;
    std::string head;
    std::vector<std::string> body;
    std::string body_sep;
    std::string tail;

    std::string text() const;
    bool operator==(const PromptBlock&) const = default;
};

struct TokenBudget {
    std::size_t max_tokens = 8192;
    std::size_t reserve_for_completion = 1024;

    TokenBudget() = default;
    // Throws ConfigError unless max_tokens > reserve_for_completion.
    TokenBudget(std::size_t max, std::size_t reserve);

    std::size_t prompt_limit() const noexcept { return max_tokens - reserve_for_completion; }
};

struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::vector<PromptBlock> blocks;
    std::size_t token_estimate = 0;
    Strategy strategy = Strategy::dhp;

    std::vector<BlockKind> kinds() const;
    const PromptBlock* find(BlockKind k) const;

    // Re-derives user_text and token_estimate from the blocks.
    void refresh();
    bool operator==(const PromptBundle&) const = default;
};

DefinitionBlock build_definition_block(const std::string& event_type, const Ontology& ontology, const TemplateSet& templates);

std::vector<HeuristicRule> build_heuristic_rules(Strategy strategy);

const ExemplarDemo& select_exemplar(const std::vector<ExemplarDemo>& pool, std::string_view query_event_type,
                                    bool cross_domain);

std::string build_cot_scaffold(const std::optional<std::string>& trigger, const std::string& event_type,
                               const TemplateSet& templates);

struct PromptContext {
    const TemplateSet& templates;
    const Ontology& ontology;
};

PromptBundle assemble_prompt(const corpus::Document& doc, const corpus::GoldEvent& event, Strategy strategy,
                             const ExemplarDemo* exemplar, const TokenBudget& budget, const PromptContext& ctx);

// Brings the bundle within budget.prompt_limit(). Order: truncate exemplar
// reasoning, drop heuristic rules last-first, drop the exemplar, truncate the
// query document. Throws BudgetError if all four are not enough.
PromptBundle trim_to_budget(PromptBundle bundle, const TokenBudget& budget);

// Document text as presented in the query block: RAMS sentences one per line,
// DocEE text verbatim. Lines that would read as the answer marker are defused.
std::string render_document(const corpus::Document& doc);

// A line is the answer marker when, trimmed, it equals "Final Answers:"
// ignoring ASCII case.
bool is_marker_line(std::string_view line) noexcept;
std::size_t count_marker_lines(std::string_view text);

}  // namespace eae::prompt
