#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "eae/corpus.hpp"
#include "eae/extract.hpp"
#include "eae/llm.hpp"
#include "eae/prompt.hpp"
#include "eae/score.hpp"

namespace eae::runner {

enum class ProviderKind { openai, mock };

struct ExperimentConfig {
    struct Dataset {
        corpus::Dataset name = corpus::Dataset::rams;
        std::filesystem::path path;
        corpus::DocEESetting setting = corpus::DocEESetting::normal;
        bool lenient = false;
    } dataset;

    struct Sampling {
        std::size_t n = 200;
        std::uint64_t seed = 7;
    } sampling;

    struct Prompt {
        prompt::Strategy strategy = prompt::Strategy::dhp;
        prompt::TokenBudget token_budget{8192, 1024};
        std::size_t n_examples = 1;
        std::filesystem::path template_root;
        std::string template_version = "v1";
        std::optional<std::filesystem::path> exemplar_path;
        std::optional<std::filesystem::path> ontology_path;
        bool save_prompts = false;
    } prompt;

    struct Provider {
        ProviderKind kind = ProviderKind::mock;
        llm::ProviderConfig config;
        double temperature = 0.0;
        std::size_t max_completion_tokens = 1024;
        std::optional<std::filesystem::path> mock_script;
    } provider;

    llm::CostCaps cost_caps;
    score::MatchMode match_mode = score::MatchMode::exact_normalized;
    std::filesystem::path output_dir;
    std::filesystem::path cache_dir;

    // Canonical JSON form; its SHA-256 is the manifest's config digest.
    nlohmann::json to_json() const;
    std::string digest() const;
};

// Directory holding the shipped templates, exemplars and ontologies.
std::filesystem::path default_data_dir();

/// Reads a JSON config. Unknown keys anywhere are a ConfigError, as are
/// invalid values. Relative paths resolve against the config file's
/// directory.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// "RAMS", "DocEE-Normal" or "DocEE-Cross".
std::string dataset_label(const ExperimentConfig::Dataset& d);

struct DocumentStatus {
    std::string doc_id;
    extract::RecordStatus status;
};

struct RunManifest {
    std::string config_digest;
    std::string started_at;
    std::string finished_at;
    std::string template_version;
    std::size_t n_sampled = 0;
    std::size_t resumed_records = 0;
    std::vector<DocumentStatus> documents;  // sample order
    llm::LedgerTotals ledger;               // this run's provider traffic
    score::ScoreReport report;

    std::map<std::string, std::size_t> status_counts() const;
    nlohmann::json to_json() const;
};

struct RunOutcome {
    RunManifest manifest;
    llm::ClientStats client;
    std::vector<extract::ExtractionRecord> records;
};

// Test seams. Null members fall back to the configured provider and the
// system clock.
struct RunEnvironment {
    llm::Transport* transport = nullptr;
    llm::Clock* clock = nullptr;
};

/// Load, sample, then per (document, event): assemble, complete, parse. Scores
/// after all extraction finishes and writes manifest.json, predictions.jsonl,
/// gold.jsonl, ledger.jsonl, report.json, report.md (and prompts/ on request)
/// into output_dir. Records already in predictions.jsonl are reused unless
/// they failed at the provider.
///
/// Provider failures after retries mark the event provider_error. BudgetExceeded,
/// AuthError and prompt BudgetError abort the run after in-flight work drains.
RunOutcome run_experiment(const ExperimentConfig& config, const RunEnvironment& env = {});

// Percentages held as integer hundredths so deltas are exact.
long long to_centi_percent(double fraction) noexcept;
std::string format_centi(long long centi);

struct DeltaRow {
    std::string metric;
    long long baseline = 0;
    long long treatment = 0;
    long long delta = 0;
};

struct DeltaTable {
    std::string dataset;
    score::MatchMode match_mode = score::MatchMode::exact_normalized;
    std::vector<DeltaRow> rows;

    std::string to_markdown() const;
};

// Arg-I F1 and Arg-C F1 rows, treatment minus baseline after rounding both
// half-up to 2 decimals. ComparisonError on dataset or match-mode mismatch.
DeltaTable compare_reports(const score::ScoreReport& baseline, const score::ScoreReport& treatment);

// A published number quoted verbatim, never recomputed.
struct BaselineLiteral {
    std::string name;
    std::string dataset;
    std::string metric;  // "Arg-I" or "Arg-C"
    double value = 0.0;  // percentage
    std::string source;
};

std::vector<BaselineLiteral> load_baselines(const std::filesystem::path& path);

enum class ReportFormat { markdown, csv };

std::string render_report(const std::vector<score::ScoreReport>& reports, const std::vector<BaselineLiteral>& baselines,
                          ReportFormat format);

// 2 config, 3 budget exceeded, 4 data, 1 anything else.
int exit_code_for(const std::exception& e) noexcept;

}  // namespace eae::runner
