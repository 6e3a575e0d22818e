#pragma once

#include <atomic>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "eae/corpus.hpp"
#include "eae/error.hpp"
#include "eae/extract.hpp"
#include "eae/llm.hpp"
#include "eae/prompt.hpp"
#include "eae/score.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path fixtures() { return EAE_TEST_FIXTURES; }
inline fs::path golden_dir() { return EAE_TEST_GOLDEN; }
inline fs::path data_dir() { return EAE_TEST_DATA; }

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("eae_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Splits on single spaces; a convenient way to write token lists.
inline std::vector<std::string> toks(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

inline eae::corpus::Document docee_doc(const std::string& id, const std::string& text, const std::string& type,
                                       std::vector<eae::corpus::GoldArgument> args = {}) {
    eae::corpus::Document d;
    d.doc_id = id;
    d.dataset = eae::corpus::Dataset::docee;
    d.text = text;
    d.events.push_back({type, std::nullopt, std::move(args)});
    return d;
}

inline eae::prompt::ExemplarDemo demo(const std::string& type, std::optional<std::string> trigger = std::nullopt) {
    eae::prompt::ExemplarDemo d;
    d.document_text = "Example document about " + type + ".";
    d.event_type = type;
    d.trigger = std::move(trigger);
    d.worked_reasoning =
        "Stage 1 - Initiation: find the anchor.\nStage 2 - Expansion: link candidates.\nStage 3 - Verification: check them.";
    d.final_answers = {{"Place", "Paris"}};
    return d;
}

inline eae::extract::PredictedArgument pred(const std::string& role, const std::string& text) {
    return {role, text, eae::extract::normalize_text(text), 0};
}

// Maximum bipartite matching between predictions and golds by exhaustive
// search. `compatible(i, j)` says whether pred i may pair with gold j.
inline std::size_t brute_force_matching(std::size_t n_pred, std::size_t n_gold,
                                        const std::function<bool(std::size_t, std::size_t)>& compatible) {
    std::vector<bool> used(n_gold, false);
    std::function<std::size_t(std::size_t)> go = [&](std::size_t i) -> std::size_t {
        if (i == n_pred) return 0;
        std::size_t best = go(i + 1);  // leave pred i unmatched
        for (std::size_t j = 0; j < n_gold; ++j) {
            if (used[j] || !compatible(i, j)) continue;
            used[j] = true;
            best = std::max(best, 1 + go(i + 1));
            used[j] = false;
        }
        return best;
    };
    return go(0);
}

// Last space-separated token, computed independently of the scorer.
inline std::string last_token(const std::string& s) {
    std::string cur, last;
    for (char c : s) {
        if (c == ' ') {
            if (!cur.empty()) last = cur;
            cur.clear();
        } else {
            cur += c;
        }
    }
    return cur.empty() ? last : cur;
}

// Transport that replays a script of outcomes, then answers 200 with a fixed
// completion. Thread-safe; records every call.
class ScriptedTransport final : public eae::llm::Transport {
public:
    struct Step {
        int status = 200;
        std::string body;
        bool throw_transport = false;
    };

    explicit ScriptedTransport(std::string content = "Final Answers:\nPlace: \"Paris\"") : content_(std::move(content)) {}

    void push(Step s) {
        std::lock_guard lock(mu_);
        steps_.push_back(std::move(s));
    }

    eae::llm::HttpResult post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                              const std::string& body, std::uint64_t) override {
        std::lock_guard lock(mu_);
        ++calls_;
        last_url_ = url;
        last_headers_ = headers;
        last_body_ = body;
        if (!steps_.empty()) {
            auto s = steps_.front();
            steps_.pop_front();
            if (s.throw_transport) throw eae::TransportError("connection reset");
            return {s.status, s.body};
        }
        nlohmann::json resp = {
            {"choices", {{{"message", {{"role", "assistant"}, {"content", content_}}}, {"finish_reason", "stop"}}}},
            {"usage", {{"prompt_tokens", 10}, {"completion_tokens", 5}}}};
        return {200, resp.dump()};
    }

    std::size_t calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }
    std::string last_url() const {
        std::lock_guard lock(mu_);
        return last_url_;
    }
    std::vector<std::pair<std::string, std::string>> last_headers() const {
        std::lock_guard lock(mu_);
        return last_headers_;
    }
    std::string last_body() const {
        std::lock_guard lock(mu_);
        return last_body_;
    }

private:
    std::string content_;
    mutable std::mutex mu_;
    std::deque<Step> steps_;
    std::size_t calls_ = 0;
    std::string last_url_;
    std::vector<std::pair<std::string, std::string>> last_headers_;
    std::string last_body_;
};

inline eae::llm::ChatRequest request(const std::string& user, double temperature = 0.0) {
    eae::llm::ChatRequest r;
    r.model = "test-model";
    r.messages = {{eae::llm::Role::system, "sys"}, {eae::llm::Role::user, user}};
    r.temperature = temperature;
    r.max_completion_tokens = 64;
    return r;
}

inline eae::llm::ProviderConfig mock_provider(std::size_t concurrency = 1, std::size_t rpm = 1000) {
    eae::llm::ProviderConfig c;
    c.model = "test-model";
    c.api_key_env.clear();
    c.max_concurrency = concurrency;
    c.requests_per_minute = rpm;
    c.backoff_base_ms = 100;
    return c;
}

// Random valid UTF-8 drawn from a mix of ASCII, punctuation that matters to the
// parser, whitespace variants and multi-byte code points.
inline std::string random_utf8(std::mt19937_64& rng, std::size_t max_len) {
    static const std::vector<std::string> atoms = {
        "a", "B", "z", "0", "7", " ", "  ", "\t", "\n", "\r\n", ":", ";", "\"", "'", ".", ",", "-", "*", "(", ")",
        "none", "Final Answers:", "final answers:", "Agent", "Place", "the ", "An ", "\xE2\x80\x9C", "\xE2\x80\x9D",
        "\xC3\xA9", "\xEF\xAC\x81", "\xE2\x80\x83", "\xC2\xA0", "\xE4\xB8\xAD", "\xF0\x9F\x98\x80", "\xE2\x80\xA2 ",
        "1. ", "- ", "\xEF\xBC\xA1", "\xE2\x84\xAB", "\x01", "\x7F"};
    std::uniform_int_distribution<std::size_t> len(0, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, atoms.size() - 1);
    std::string out;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) out += atoms[pick(rng)];
    return out;
}

// Shipped prompt resources, loaded once.
struct PromptResources {
    eae::prompt::TemplateSet templates;
    eae::prompt::Ontology ontology;
    eae::prompt::Ontology rams_ontology;
    std::vector<eae::prompt::ExemplarDemo> rams_exemplars;
    std::vector<eae::prompt::ExemplarDemo> docee_exemplars;

    eae::prompt::PromptContext ctx() const { return {templates, ontology}; }
    eae::prompt::PromptContext rams_ctx() const { return {templates, rams_ontology}; }
};

inline const PromptResources& resources() {
    static const PromptResources r{eae::prompt::TemplateSet::load(data_dir() / "templates" / "v1"),
                                   eae::prompt::Ontology::load(data_dir() / "ontology.json"),
                                   eae::prompt::Ontology::load(data_dir() / "ontology_rams.json"),
                                   eae::prompt::load_exemplars(data_dir() / "exemplars" / "rams.json"),
                                   eae::prompt::load_exemplars(data_dir() / "exemplars" / "docee.json")};
    return r;
}

inline std::string bundle_snapshot(const eae::prompt::PromptBundle& b) {
    return "=== system ===\n" + b.system_text + "\n=== user ===\n" + b.user_text + "\n";
}

// One fixture per strategy plus a cross-domain DocEE prompt. Names double as
// golden file stems.
struct GoldenCase {
    std::string name;
    eae::prompt::PromptBundle bundle;
};

inline std::vector<GoldenCase> golden_cases() {
    using eae::prompt::Strategy;
    const auto& r = resources();
    const auto rams = eae::corpus::load_rams(fixtures() / "rams_small.jsonl").documents;
    const auto docee = eae::corpus::load_docee(fixtures() / "docee", eae::corpus::DocEESetting::cross_domain).documents;
    const eae::prompt::TokenBudget budget(8192, 1024);
    const auto& d = rams.at(1);
    const auto& q = docee.at(0);
    return {
        {"dhp_rams", eae::prompt::assemble_prompt(d, d.events[0], Strategy::dhp, &r.rams_exemplars[0], budget, r.rams_ctx())},
        {"cot_rams", eae::prompt::assemble_prompt(d, d.events[0], Strategy::cot, &r.rams_exemplars[0], budget, r.rams_ctx())},
        {"standard_rams", eae::prompt::assemble_prompt(d, d.events[0], Strategy::standard, nullptr, budget, r.rams_ctx())},
        {"dhp_docee_cross",
         eae::prompt::assemble_prompt(q, q.events[0], Strategy::dhp,
                                      &eae::prompt::select_exemplar(r.docee_exemplars, q.events[0].event_type, true),
                                      budget, r.ctx())},
    };
}

}  // namespace testsupport
