#include "eae/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "eae/error.hpp"
#include "eae/text.hpp"

#ifndef EAE_DATA_DIR
#define EAE_DATA_DIR "data"
#endif

namespace eae::runner {

using nlohmann::json;
namespace fs = std::filesystem;

fs::path default_data_dir() {
    if (const char* env = std::getenv("EAE_DATA_DIR"); env != nullptr && *env != '\0') return env;
    return EAE_DATA_DIR;
}

// ---- config ----------------------------------------------------------------

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
        }
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    return obj.contains(key) ? obj.at(key).get<T>() : fallback;
}

const char* provider_kind_name(ProviderKind k) { return k == ProviderKind::openai ? "openai" : "mock"; }

}  // namespace

ExperimentConfig config_from_json(const json& j, const fs::path& base) {
    ExperimentConfig c;
    try {
        check_keys(j, {"dataset", "sampling", "prompt", "provider", "cost_caps", "match_mode", "output_dir", "cache_dir"}, "");

        const auto& d = j.at("dataset");
        check_keys(d, {"name", "path", "setting", "lenient"}, "dataset");
        c.dataset.name = corpus::dataset_from_string(d.at("name").get<std::string>());
        c.dataset.path = resolve(base, d.at("path").get<std::string>());
        c.dataset.setting = corpus::setting_from_string(get_or<std::string>(d, "setting", "normal"));
        c.dataset.lenient = get_or(d, "lenient", false);

        if (j.contains("sampling")) {
            const auto& s = j["sampling"];
            check_keys(s, {"n", "seed"}, "sampling");
            c.sampling.n = get_or(s, "n", c.sampling.n);
            c.sampling.seed = get_or(s, "seed", c.sampling.seed);
        }
        if (c.sampling.n == 0) throw ConfigError("sampling.n must be positive");

        const fs::path data = default_data_dir();
        c.prompt.template_root = data / "templates";
        if (j.contains("prompt")) {
            const auto& p = j["prompt"];
            check_keys(p, {"strategy", "max_tokens", "reserve_for_completion", "n_examples", "template_root",
                           "template_version", "exemplar_path", "ontology_path", "save_prompts"},
                       "prompt");
            c.prompt.strategy = prompt::strategy_from_string(get_or<std::string>(p, "strategy", "dhp"));
            c.prompt.token_budget = prompt::TokenBudget(get_or<std::size_t>(p, "max_tokens", 8192),
                                                        get_or<std::size_t>(p, "reserve_for_completion", 1024));
            c.prompt.n_examples = get_or<std::size_t>(p, "n_examples", 1);
            if (p.contains("template_root")) c.prompt.template_root = resolve(base, p["template_root"].get<std::string>());
            c.prompt.template_version = get_or<std::string>(p, "template_version", "v1");
            if (p.contains("exemplar_path")) c.prompt.exemplar_path = resolve(base, p["exemplar_path"].get<std::string>());
            if (p.contains("ontology_path")) c.prompt.ontology_path = resolve(base, p["ontology_path"].get<std::string>());
            c.prompt.save_prompts = get_or(p, "save_prompts", false);
        }
        if (c.prompt.n_examples > 1) throw ConfigError("prompt.n_examples must be 0 or 1");
        if (c.prompt.n_examples == 0 && c.prompt.strategy == prompt::Strategy::dhp) {
            throw ConfigError("the dhp strategy is one-shot; prompt.n_examples must be 1");
        }
        const bool rams = c.dataset.name == corpus::Dataset::rams;
        if (!c.prompt.exemplar_path) c.prompt.exemplar_path = data / "exemplars" / (rams ? "rams.json" : "docee.json");
        if (!c.prompt.ontology_path) c.prompt.ontology_path = data / (rams ? "ontology_rams.json" : "ontology.json");

        if (j.contains("provider")) {
            const auto& p = j["provider"];
            check_keys(p, {"kind", "base_url", "model", "api_key_env", "max_retries", "backoff_base_ms", "max_concurrency",
                           "requests_per_minute", "timeout_ms", "temperature", "max_completion_tokens", "mock_script"},
                       "provider");
            const auto kind = get_or<std::string>(p, "kind", "mock");
            if (kind == "openai") {
                c.provider.kind = ProviderKind::openai;
            } else if (kind == "mock") {
                c.provider.kind = ProviderKind::mock;
            } else {
                throw ConfigError("provider.kind must be 'openai' or 'mock'");
            }
            auto& pc = c.provider.config;
            pc.base_url = get_or(p, "base_url", pc.base_url);
            pc.model = get_or(p, "model", std::string{});
            pc.api_key_env = get_or(p, "api_key_env", pc.api_key_env);
            pc.max_retries = get_or(p, "max_retries", pc.max_retries);
            pc.backoff_base_ms = get_or(p, "backoff_base_ms", pc.backoff_base_ms);
            pc.max_concurrency = get_or(p, "max_concurrency", pc.max_concurrency);
            pc.requests_per_minute = get_or(p, "requests_per_minute", pc.requests_per_minute);
            pc.timeout_ms = get_or(p, "timeout_ms", pc.timeout_ms);
            c.provider.temperature = get_or(p, "temperature", 0.0);
            c.provider.max_completion_tokens = get_or<std::size_t>(p, "max_completion_tokens", 1024);
            if (p.contains("mock_script")) c.provider.mock_script = resolve(base, p["mock_script"].get<std::string>());
        }
        auto& pc = c.provider.config;
        while (!pc.base_url.empty() && pc.base_url.back() == '/') pc.base_url.pop_back();
        if (c.provider.kind == ProviderKind::mock) {
            if (pc.model.empty()) pc.model = "mock";
            pc.api_key_env.clear();
        } else if (pc.model.empty()) {
            throw ConfigError("provider.model is required for the openai provider");
        }
        if (pc.max_concurrency == 0) throw ConfigError("provider.max_concurrency must be at least 1");
        if (pc.requests_per_minute == 0) throw ConfigError("provider.requests_per_minute must be positive");
        if (pc.backoff_base_ms == 0) throw ConfigError("provider.backoff_base_ms must be positive");
        if (c.provider.temperature < 0) throw ConfigError("provider.temperature must be >= 0");
        if (c.provider.max_completion_tokens == 0) throw ConfigError("provider.max_completion_tokens must be positive");

        if (j.contains("cost_caps")) {
            const auto& k = j["cost_caps"];
            check_keys(k, {"max_requests", "max_total_tokens"}, "cost_caps");
            c.cost_caps.max_requests = get_or(k, "max_requests", c.cost_caps.max_requests);
            c.cost_caps.max_total_tokens = get_or(k, "max_total_tokens", c.cost_caps.max_total_tokens);
        }
        c.match_mode = score::match_mode_from_string(get_or<std::string>(j, "match_mode", "exact"));
        c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
        c.cache_dir = resolve(base, get_or<std::string>(j, "cache_dir", ".eae_cache"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return c;
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j, fs::absolute(path).parent_path());
}

json ExperimentConfig::to_json() const {
    const auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
    return json{
        {"dataset",
         {{"name", corpus::to_string(dataset.name)},
          {"path", dataset.path.string()},
          {"setting", corpus::to_string(dataset.setting)},
          {"lenient", dataset.lenient}}},
        {"sampling", {{"n", sampling.n}, {"seed", sampling.seed}}},
        {"prompt",
         {{"strategy", prompt::to_string(prompt.strategy)},
          {"max_tokens", prompt.token_budget.max_tokens},
          {"reserve_for_completion", prompt.token_budget.reserve_for_completion},
          {"n_examples", prompt.n_examples},
          {"template_root", prompt.template_root.string()},
          {"template_version", prompt.template_version},
          {"exemplar_path", opt_path(prompt.exemplar_path)},
          {"ontology_path", opt_path(prompt.ontology_path)},
          {"save_prompts", prompt.save_prompts}}},
        {"provider",
         {{"kind", provider_kind_name(provider.kind)},
          {"base_url", provider.config.base_url},
          {"model", provider.config.model},
          {"api_key_env", provider.config.api_key_env},
          {"max_retries", provider.config.max_retries},
          {"backoff_base_ms", provider.config.backoff_base_ms},
          {"max_concurrency", provider.config.max_concurrency},
          {"requests_per_minute", provider.config.requests_per_minute},
          {"timeout_ms", provider.config.timeout_ms},
          {"temperature", provider.temperature},
          {"max_completion_tokens", provider.max_completion_tokens},
          {"mock_script", opt_path(provider.mock_script)}}},
        {"cost_caps", {{"max_requests", cost_caps.max_requests}, {"max_total_tokens", cost_caps.max_total_tokens}}},
        {"match_mode", score::to_string(match_mode)},
        {"output_dir", output_dir.string()},
        {"cache_dir", cache_dir.string()}};
}

std::string ExperimentConfig::digest() const { return text::sha256_hex(to_json().dump()); }

std::string dataset_label(const ExperimentConfig::Dataset& d) {
    if (d.name == corpus::Dataset::rams) return "RAMS";
    return d.setting == corpus::DocEESetting::normal ? "DocEE-Normal" : "DocEE-Cross";
}

// ---- manifest --------------------------------------------------------------

std::map<std::string, std::size_t> RunManifest::status_counts() const {
    std::map<std::string, std::size_t> counts{{"ok", 0}, {"parse_empty", 0}, {"provider_error", 0}};
    for (const auto& d : documents) ++counts[extract::to_string(d.status)];
    return counts;
}

json RunManifest::to_json() const {
    json docs = json::array();
    for (const auto& d : documents) docs.push_back({{"doc_id", d.doc_id}, {"status", extract::to_string(d.status)}});
    return json{{"schema", 1},
                {"config_digest", config_digest},
                {"started_at", started_at},
                {"finished_at", finished_at},
                {"template_version", template_version},
                {"n_sampled", n_sampled},
                {"resumed_records", resumed_records},
                {"documents", docs},
                {"status_counts", status_counts()},
                {"ledger",
                 {{"dispatches", ledger.dispatches},
                  {"responses", ledger.responses},
                  {"prompt_tokens", ledger.prompt_tokens},
                  {"completion_tokens", ledger.completion_tokens},
                  {"estimated_responses", ledger.estimated_responses}}},
                {"report", score::to_json(report)}};
}

// ---- run -------------------------------------------------------------------

namespace {

struct WorkItem {
    std::size_t doc_pos;
    std::size_t event_index;
};

int severity(extract::RecordStatus s) {
    switch (s) {
        case extract::RecordStatus::ok: return 0;
        case extract::RecordStatus::parse_empty: return 1;
        case extract::RecordStatus::provider_error: return 2;
    }
    return 0;
}

std::string safe_file_stem(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << content;
}

corpus::LoadResult load_corpus(const ExperimentConfig& config) {
    corpus::LoadOptions opts;
    opts.lenient = config.dataset.lenient;
    if (config.dataset.name == corpus::Dataset::rams) return corpus::load_rams(config.dataset.path, opts);
    return corpus::load_docee(config.dataset.path, config.dataset.setting, opts);
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& config, const RunEnvironment& env) {
    RunOutcome outcome;
    auto& manifest = outcome.manifest;
    manifest.started_at = llm::iso8601_utc_now();
    manifest.config_digest = config.digest();

    const auto loaded = load_corpus(config);
    const auto sample = corpus::sample_subset(loaded.documents, config.sampling.n, config.sampling.seed);
    manifest.n_sampled = sample.size();

    const auto templates = prompt::TemplateSet::load(config.prompt.template_root / config.prompt.template_version);
    manifest.template_version = templates.version();
    const auto ontology = prompt::Ontology::load(*config.prompt.ontology_path);
    std::vector<prompt::ExemplarDemo> pool;
    const bool uses_exemplar = config.prompt.n_examples == 1 && config.prompt.strategy != prompt::Strategy::standard;
    if (uses_exemplar) pool = prompt::load_exemplars(*config.prompt.exemplar_path);
    const bool cross_domain =
        config.dataset.name == corpus::Dataset::docee && config.dataset.setting == corpus::DocEESetting::cross_domain;

    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + config.output_dir.string() + "': " + ec.message());
    if (config.prompt.save_prompts) fs::create_directories(config.output_dir / "prompts");
    corpus::write_dump(config.output_dir / "gold.jsonl", sample);

    // Resume: reuse finished records for sampled events.
    const fs::path predictions_path = config.output_dir / "predictions.jsonl";
    std::map<std::pair<std::string, std::size_t>, extract::ExtractionRecord> done;
    if (fs::exists(predictions_path)) {
        std::set<std::string> sampled_ids;
        for (const auto& d : sample) sampled_ids.insert(d.doc_id);
        for (auto& r : extract::load_predictions(predictions_path)) {
            if (r.status == extract::RecordStatus::provider_error || !sampled_ids.count(r.doc_id)) continue;
            done[{r.doc_id, r.event_index}] = std::move(r);
        }
    }
    manifest.resumed_records = done.size();

    std::vector<WorkItem> work;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        for (std::size_t e = 0; e < sample[i].events.size(); ++e) {
            if (!done.count({sample[i].doc_id, e})) work.push_back({i, e});
        }
    }

    std::unique_ptr<llm::Transport> owned_transport;
    llm::Transport* transport = env.transport;
    if (transport == nullptr) {
        if (config.provider.kind == ProviderKind::mock) {
            owned_transport = std::make_unique<llm::MockTransport>(
                config.provider.mock_script ? llm::MockScript::load(*config.provider.mock_script) : llm::MockScript{});
        } else {
            owned_transport = std::make_unique<llm::HttpTransport>();
        }
        transport = owned_transport.get();
    }
    llm::SystemClock system_clock;
    llm::Clock& clock = env.clock != nullptr ? *env.clock : system_clock;

    auto cache = llm::ResponseCache::open(config.cache_dir);
    llm::CostLedger ledger(config.cost_caps, config.output_dir / "ledger.jsonl");
    llm::ChatClient client(config.provider.config, *transport, cache, ledger, clock, config.sampling.seed);

    const prompt::PromptContext ctx{templates, ontology};
    std::mutex write_mu;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr failure;
    std::vector<extract::ExtractionRecord> fresh;

    auto process = [&](const WorkItem& item) {
        const auto& doc = sample[item.doc_pos];
        const auto& event = doc.events[item.event_index];
        const prompt::ExemplarDemo* exemplar =
            uses_exemplar ? &prompt::select_exemplar(pool, event.event_type, cross_domain) : nullptr;
        const auto bundle =
            prompt::assemble_prompt(doc, event, config.prompt.strategy, exemplar, config.prompt.token_budget, ctx);

        llm::ChatRequest req;
        req.model = config.provider.config.model;
        req.messages = {{llm::Role::system, bundle.system_text}, {llm::Role::user, bundle.user_text}};
        req.temperature = config.provider.temperature;
        req.max_completion_tokens = config.provider.max_completion_tokens;

        extract::ExtractionRecord rec;
        rec.doc_id = doc.doc_id;
        rec.event_index = item.event_index;
        rec.event_type = event.event_type;
        if (event.trigger) rec.trigger = event.trigger->text;
        try {
            const auto response = client.complete(req);
            rec.raw_response = response.content;
            auto parsed = extract::parse_response(response.content);
            auto preds = extract::dedupe_predictions(parsed.predictions);
            extract::align_roles(preds, ontology.role_names(event.event_type));
            rec.predictions = std::move(preds);
            rec.diagnostics = std::move(parsed.diagnostics);
            rec.status = rec.diagnostics.mode_used == extract::ParseMode::empty ? extract::RecordStatus::parse_empty
                                                                               : extract::RecordStatus::ok;
        } catch (const TransportError& e) {
            rec.status = extract::RecordStatus::provider_error;
            rec.diagnostics.warnings.push_back(e.what());
        } catch (const RateLimitExhausted& e) {
            rec.status = extract::RecordStatus::provider_error;
            rec.diagnostics.warnings.push_back(e.what());
        }

        std::lock_guard lock(write_mu);
        extract::append_prediction(predictions_path, rec);
        if (config.prompt.save_prompts) {
            write_text(config.output_dir / "prompts" / (safe_file_stem(doc.doc_id) + "__" + std::to_string(item.event_index) + ".txt"),
                       "=== system ===\n" + bundle.system_text + "\n=== user ===\n" + bundle.user_text + "\n");
        }
        fresh.push_back(std::move(rec));
    };

    auto worker = [&] {
        while (!abort.load()) {
            const auto i = next.fetch_add(1);
            if (i >= work.size()) return;
            try {
                process(work[i]);
            } catch (...) {
                std::lock_guard lock(write_mu);
                if (!failure) failure = std::current_exception();
                abort = true;
            }
        }
    };

    const std::size_t n_workers = std::min(config.provider.config.max_concurrency, std::max<std::size_t>(work.size(), 1));
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    outcome.client = client.stats();
    manifest.ledger = ledger.totals();
    if (failure) std::rethrow_exception(failure);

    for (auto& r : fresh) done[{r.doc_id, r.event_index}] = std::move(r);
    std::vector<extract::ExtractionRecord> records;
    for (const auto& doc : sample) {
        auto status = extract::RecordStatus::ok;
        for (std::size_t e = 0; e < doc.events.size(); ++e) {
            auto& r = done.at({doc.doc_id, e});
            if (severity(r.status) > severity(status)) status = r.status;
            records.push_back(r);
        }
        manifest.documents.push_back({doc.doc_id, status});
    }
    extract::write_predictions(predictions_path, records);

    manifest.report = score::score_corpus(records, sample, config.match_mode);
    manifest.report.dataset = dataset_label(config.dataset);
    manifest.report.strategy = prompt::to_string(config.prompt.strategy);
    manifest.report.model = config.provider.config.model;
    manifest.finished_at = llm::iso8601_utc_now();

    write_text(config.output_dir / "report.json", score::to_json(manifest.report).dump(2) + "\n");
    write_text(config.output_dir / "report.md", render_report({manifest.report}, {}, ReportFormat::markdown));
    write_text(config.output_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
    outcome.records = std::move(records);
    return outcome;
}

// ---- deltas ------------------------------------------------------------------

long long to_centi_percent(double fraction) noexcept {
    // Half-up at the second decimal of the percentage; the epsilon absorbs
    // binary representation error such as 0.4233 * 10000 = 4232.9999...
    return static_cast<long long>(std::floor(fraction * 10000.0 + 0.5 + 1e-7));
}

std::string format_centi(long long centi) {
    const bool neg = centi < 0;
    const long long a = neg ? -centi : centi;
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%02lld", neg ? "-" : "", a / 100, a % 100);
    return buf;
}

DeltaTable compare_reports(const score::ScoreReport& baseline, const score::ScoreReport& treatment) {
    if (baseline.dataset != treatment.dataset) {
        throw ComparisonError("cannot compare reports on different datasets ('" + baseline.dataset + "' vs '" +
                              treatment.dataset + "')");
    }
    if (baseline.match_mode != treatment.match_mode) {
        throw ComparisonError("cannot compare reports scored with different match modes (" +
                              score::to_string(baseline.match_mode) + " vs " + score::to_string(treatment.match_mode) + ")");
    }
    DeltaTable table;
    table.dataset = baseline.dataset;
    table.match_mode = baseline.match_mode;
    auto row = [](std::string metric, double b, double t) {
        DeltaRow r{std::move(metric), to_centi_percent(b), to_centi_percent(t), 0};
        r.delta = r.treatment - r.baseline;
        return r;
    };
    table.rows.push_back(row("Arg-I F1", baseline.arg_i.f1, treatment.arg_i.f1));
    table.rows.push_back(row("Arg-C F1", baseline.arg_c.f1, treatment.arg_c.f1));
    return table;
}

std::string DeltaTable::to_markdown() const {
    std::string out = "Dataset: " + dataset + " (match mode: " + score::to_string(match_mode) + ")\n\n";
    out += "| Metric | Baseline | Treatment | Delta |\n|---|---|---|---|\n";
    for (const auto& r : rows) {
        out += "| " + r.metric + " | " + format_centi(r.baseline) + " | " + format_centi(r.treatment) + " | " +
               (r.delta > 0 ? "+" : "") + format_centi(r.delta) + " |\n";
    }
    return out;
}

std::vector<BaselineLiteral> load_baselines(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read baselines '" + path.string() + "'");
    std::vector<BaselineLiteral> out;
    try {
        const auto j = json::parse(in);
        for (const auto& b : j.is_array() ? j : j.at("baselines")) {
            BaselineLiteral lit;
            lit.name = b.at("name").get<std::string>();
            lit.dataset = b.at("dataset").get<std::string>();
            lit.metric = b.value("metric", std::string("Arg-C"));
            lit.value = b.at("value").get<double>();
            lit.source = b.value("source", std::string{});
            if (lit.metric != "Arg-I" && lit.metric != "Arg-C") throw ConfigError("baseline metric must be Arg-I or Arg-C");
            out.push_back(std::move(lit));
        }
    } catch (const json::exception& e) {
        throw ConfigError("baselines '" + path.string() + "': " + e.what());
    }
    return out;
}

// ---- report rendering --------------------------------------------------------

namespace {

std::string method_name(const std::string& strategy) {
    if (strategy == "dhp") return "DHP";
    if (strategy == "cot") return "CoT";
    if (strategy == "standard") return "Standard";
    return strategy;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace

std::string render_report(const std::vector<score::ScoreReport>& reports, const std::vector<BaselineLiteral>& baselines,
                          ReportFormat format) {
    std::vector<std::string> datasets;
    auto note_dataset = [&](const std::string& d) {
        if (std::find(datasets.begin(), datasets.end(), d) == datasets.end()) datasets.push_back(d);
    };
    for (const auto& r : reports) note_dataset(r.dataset);
    for (const auto& b : baselines) note_dataset(b.dataset);

    struct Row {
        std::string model;
        std::string method;
        std::string match;
        std::map<std::pair<std::string, std::string>, std::string> cells;  // (dataset, metric) -> value
    };
    std::vector<Row> rows;
    auto row_for = [&](const std::string& model, const std::string& method, const std::string& match) -> Row& {
        for (auto& r : rows) {
            if (r.model == model && r.method == method && r.match == match) return r;
        }
        rows.push_back({model, method, match, {}});
        return rows.back();
    };
    for (const auto& b : baselines) {
        row_for("Literature", b.name, "quoted").cells[{b.dataset, b.metric}] = format_centi(std::llround(b.value * 100.0));
    }
    std::set<std::string> modes;
    for (const auto& r : reports) {
        modes.insert(score::to_string(r.match_mode));
        auto& row = row_for(r.model, method_name(r.strategy), score::to_string(r.match_mode));
        row.cells[{r.dataset, "Arg-I"}] = format_centi(to_centi_percent(r.arg_i.f1));
        row.cells[{r.dataset, "Arg-C"}] = format_centi(to_centi_percent(r.arg_c.f1));
    }

    std::vector<std::string> header{"Model", "Method"};
    for (const auto& d : datasets) {
        header.push_back(d + " Arg-I");
        header.push_back(d + " Arg-C");
    }
    auto cells_of = [&](const Row& r) {
        std::vector<std::string> out{r.model, r.method};
        for (const auto& d : datasets) {
            for (const char* m : {"Arg-I", "Arg-C"}) {
                const auto it = r.cells.find({d, m});
                out.push_back(it == r.cells.end() ? "-" : it->second);
            }
        }
        return out;
    };

    std::string out;
    if (format == ReportFormat::csv) {
        header.push_back("match_mode");
        auto line = [&](const std::vector<std::string>& f) {
            for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + csv_field(f[i]);
            out += "\r\n";
        };
        line(header);
        for (const auto& r : rows) {
            auto f = cells_of(r);
            f.push_back(r.match);
            line(f);
        }
        return out;
    }

    std::string mode_line = modes.empty() ? "n/a" : text::join({modes.begin(), modes.end()}, ", ");
    out += "Match mode: " + mode_line + "\n\n";
    auto line = [&](const std::vector<std::string>& f) {
        out += "|";
        for (const auto& x : f) out += " " + x + " |";
        out += "\n";
    };
    line(header);
    out += "|";
    for (std::size_t i = 0; i < header.size(); ++i) out += "---|";
    out += "\n";
    for (const auto& r : rows) line(cells_of(r));
    std::vector<std::string> sources;
    for (const auto& b : baselines) {
        if (!b.source.empty()) sources.push_back(b.name + " (" + b.dataset + " " + b.metric + "): " + b.source);
    }
    if (!sources.empty()) {
        out += "\nQuoted baselines, not recomputed:\n";
        for (const auto& s : sources) out += "- " + s + "\n";
    }
    return out;
}

int exit_code_for(const std::exception& e) noexcept {
    if (dynamic_cast<const BudgetExceeded*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const BudgetError*>(&e) ||
        dynamic_cast<const AuthError*>(&e) || dynamic_cast<const TemplateError*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const SettingError*>(&e) || dynamic_cast<const SampleError*>(&e) ||
        dynamic_cast<const GoldMismatch*>(&e) || dynamic_cast<const ExemplarError*>(&e)) {
        return 4;
    }
    return 1;
}

}  // namespace eae::runner
