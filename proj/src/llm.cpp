#include "eae/llm.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "eae/error.hpp"
#include "eae/prompt.hpp"
#include "eae/text.hpp"

namespace eae::llm {

using nlohmann::json;
namespace fs = std::filesystem;

void ChatRequest::validate() const {
    if (messages.empty()) throw std::invalid_argument("chat request has no messages");
    if (messages.back().role != Role::user) throw std::invalid_argument("last chat message must come from the user");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be >= 0");
    if (max_completion_tokens == 0) throw std::invalid_argument("max_completion_tokens must be positive");
}

std::string to_string(FinishReason f) {
    switch (f) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "error";
}

FinishReason finish_reason_from_string(std::string_view s) {
    if (s == "stop") return FinishReason::stop;
    if (s == "length") return FinishReason::length;
    return FinishReason::error;
}

json to_json(const ChatResponse& r) {
    return json{{"content", r.content},
                {"finish_reason", to_string(r.finish_reason)},
                {"usage",
                 {{"prompt_tokens", r.usage.prompt_tokens},
                  {"completion_tokens", r.usage.completion_tokens},
                  {"estimated", r.usage.estimated}}},
                {"latency_ms", r.latency_ms}};
}

ChatResponse response_from_json(const json& j) {
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    r.finish_reason = finish_reason_from_string(j.at("finish_reason").get<std::string>());
    const auto& u = j.at("usage");
    r.usage.prompt_tokens = u.at("prompt_tokens").get<std::size_t>();
    r.usage.completion_tokens = u.at("completion_tokens").get<std::size_t>();
    r.usage.estimated = u.value("estimated", false);
    r.latency_ms = j.value("latency_ms", std::uint64_t{0});
    return r;
}

namespace {

const char* role_name(Role r) { return r == Role::system ? "system" : "user"; }

json messages_json(const ChatRequest& req) {
    json msgs = json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    return msgs;
}

std::size_t estimate_prompt_tokens(const ChatRequest& req) {
    std::string all;
    for (const auto& m : req.messages) all += m.content;
    return prompt::count_tokens(all);
}

}  // namespace

std::string canonical_request(const ChatRequest& req) {
    // nlohmann objects keep keys sorted, which fixes the field order.
    const json j{{"model", req.model},
                 {"messages", messages_json(req)},
                 {"temperature", req.temperature},
                 {"max_completion_tokens", req.max_completion_tokens}};
    return j.dump();
}

std::string cache_key(const ChatRequest& req) { return text::sha256_hex(canonical_request(req)); }

json wire_request(const ChatRequest& req) {
    return json{{"model", req.model},
                {"messages", messages_json(req)},
                {"temperature", req.temperature},
                {"max_tokens", req.max_completion_tokens}};
}

ChatRequest request_from_wire(const json& body) {
    ChatRequest req;
    req.model = body.at("model").get<std::string>();
    for (const auto& m : body.at("messages")) {
        const auto role = m.at("role").get<std::string>();
        if (role != "system" && role != "user") throw std::invalid_argument("unsupported message role '" + role + "'");
        req.messages.push_back({role == "system" ? Role::system : Role::user, m.at("content").get<std::string>()});
    }
    req.temperature = body.value("temperature", 0.0);
    req.max_completion_tokens = body.value("max_tokens", std::size_t{1024});
    return req;
}

ChatResponse parse_wire_response(std::string_view body, const ChatRequest& req) {
    const json j = json::parse(body);
    const auto& choice = j.at("choices").at(0);
    ChatResponse r;
    const auto& content = choice.at("message").at("content");
    if (content.is_string()) r.content = content.get<std::string>();
    const auto& finish = choice.contains("finish_reason") ? choice["finish_reason"] : json(nullptr);
    r.finish_reason = finish.is_string() ? finish_reason_from_string(finish.get<std::string>()) : FinishReason::stop;
    if (content.is_null() && r.finish_reason != FinishReason::error) r.finish_reason = FinishReason::error;

    if (j.contains("usage") && j["usage"].is_object() && j["usage"].contains("prompt_tokens") &&
        j["usage"].contains("completion_tokens")) {
        r.usage.prompt_tokens = j["usage"]["prompt_tokens"].get<std::size_t>();
        r.usage.completion_tokens = j["usage"]["completion_tokens"].get<std::size_t>();
    } else {
        r.usage = Usage{estimate_prompt_tokens(req), prompt::count_tokens(r.content), true};
    }
    return r;
}

// ---- time ----------------------------------------------------------------

std::int64_t SystemClock::now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

void SystemClock::sleep_for_ms(std::int64_t ms) {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(ms));
}

void SimulatedClock::sleep_for_ms(std::int64_t ms) {
    if (ms <= 0) return;
    const std::int64_t target = now_.load() + ms;
    std::int64_t cur = now_.load();
    while (cur < target && !now_.compare_exchange_weak(cur, target)) {
    }
}

std::string iso8601_utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---- dispatch control ----------------------------------------------------

RateLimiter::RateLimiter(std::size_t per_minute, Clock& clock) : per_minute_(per_minute), clock_(clock) {
    if (per_minute_ == 0) throw ConfigError("requests_per_minute must be positive");
}

void RateLimiter::acquire() {
    constexpr std::int64_t kWindowMs = 60'000;
    std::unique_lock lock(mu_);
    while (true) {
        const auto now = clock_.now_ms();
        while (!window_.empty() && window_.front() <= now - kWindowMs) window_.pop_front();
        if (window_.size() < per_minute_) {
            window_.push_back(now);
            history_.push_back(now);
            return;
        }
        const auto wait = window_.front() + kWindowMs - now;
        lock.unlock();
        clock_.sleep_for_ms(wait);
        lock.lock();
    }
}

std::vector<std::int64_t> RateLimiter::history() const {
    std::lock_guard lock(mu_);
    return history_;
}

ConcurrencyGate::ConcurrencyGate(std::size_t max_in_flight) : max_(max_in_flight) {
    if (max_ == 0) throw ConfigError("max_concurrency must be at least 1");
}

void ConcurrencyGate::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return in_flight_ < max_; });
    ++in_flight_;
    peak_ = std::max(peak_, in_flight_);
}

void ConcurrencyGate::release() {
    {
        std::lock_guard lock(mu_);
        --in_flight_;
    }
    cv_.notify_one();
}

std::size_t ConcurrencyGate::peak() const {
    std::lock_guard lock(mu_);
    return peak_;
}

// ---- cache ---------------------------------------------------------------

namespace {

constexpr const char* kEntriesFile = "entries.jsonl";
constexpr const char* kIndexFile = "index.tsv";

json entry_json(const CacheEntry& e) {
    return json{{"schema", ResponseCache::kSchema},
                {"key", e.key},
                {"created_at", e.created_at},
                {"provider_model", e.provider_model},
                {"response", to_json(e.response)}};
}

}  // namespace

ResponseCache ResponseCache::in_memory() { return ResponseCache(); }

ResponseCache::ResponseCache(ResponseCache&& other) noexcept {
    std::lock_guard lock(other.mu_);
    dir_ = std::move(other.dir_);
    index_ = std::move(other.index_);
    memory_ = std::move(other.memory_);
}

ResponseCache ResponseCache::open(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create cache directory '" + dir.string() + "': " + ec.message());
    ResponseCache cache;
    cache.dir_ = dir;

    const auto entries = dir / kEntriesFile;
    const std::uintmax_t data_size = fs::exists(entries) ? fs::file_size(entries) : 0;
    std::ifstream idx(dir / kIndexFile);
    std::uint64_t covered = 0;
    bool consistent = static_cast<bool>(idx) || data_size == 0;
    if (idx) {
        std::string line;
        while (std::getline(idx, line)) {
            std::istringstream ls(line);
            std::string key;
            Location loc{};
            if (!(ls >> key >> loc.offset >> loc.length)) {
                consistent = false;
                break;
            }
            cache.index_[key] = loc;
            covered = std::max<std::uint64_t>(covered, loc.offset + loc.length + 1);
        }
    }
    if (!consistent || covered != data_size) cache.rebuild_index();
    return cache;
}

void ResponseCache::rebuild_index() {
    index_.clear();
    const auto entries = *dir_ / kEntriesFile;
    std::ifstream in(entries, std::ios::binary);
    std::uint64_t offset = 0;
    std::uint64_t good_end = 0;
    std::string line;
    while (in && std::getline(in, line)) {
        const bool complete = !in.eof();
        const std::uint64_t len = line.size();
        if (complete) {
            try {
                const auto j = json::parse(line);
                index_[j.at("key").get<std::string>()] = Location{offset, len};
                good_end = offset + len + 1;
            } catch (const std::exception&) {
                break;  // torn or corrupt tail: everything after it is dropped
            }
        }
        offset += len + 1;
    }
    in.close();
    if (fs::exists(entries) && fs::file_size(entries) != good_end) fs::resize_file(entries, good_end);
    std::ofstream idx(*dir_ / kIndexFile, std::ios::trunc);
    for (const auto& [key, loc] : index_) idx << key << '\t' << loc.offset << '\t' << loc.length << '\n';
}

std::optional<ChatResponse> ResponseCache::get(const std::string& key) const {
    std::lock_guard lock(mu_);
    if (!dir_) {
        const auto it = memory_.find(key);
        if (it == memory_.end()) return std::nullopt;
        return it->second;
    }
    const auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    std::ifstream in(*dir_ / kEntriesFile, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(it->second.offset));
    std::string line(it->second.length, '\0');
    if (!in.read(line.data(), static_cast<std::streamsize>(line.size()))) {
        throw IoError("cache entry for " + key + " is unreadable");
    }
    const auto j = json::parse(line);
    if (j.at("key").get<std::string>() != key) throw IoError("cache index points at the wrong entry for " + key);
    return response_from_json(j.at("response"));
}

void ResponseCache::put(const CacheEntry& entry) {
    std::lock_guard lock(mu_);
    if (!dir_) {
        memory_[entry.key] = entry.response;
        return;
    }
    if (index_.count(entry.key)) return;
    const auto entries = *dir_ / kEntriesFile;
    const std::uint64_t offset = fs::exists(entries) ? fs::file_size(entries) : 0;
    const std::string line = entry_json(entry).dump();
    {
        std::ofstream out(entries, std::ios::binary | std::ios::app);
        out << line << '\n';
        if (!out) throw IoError("cannot append to cache '" + entries.string() + "'");
    }
    {
        std::ofstream idx(*dir_ / kIndexFile, std::ios::app);
        idx << entry.key << '\t' << offset << '\t' << line.size() << '\n';
    }
    index_[entry.key] = Location{offset, line.size()};
}

bool ResponseCache::contains(const std::string& key) const {
    std::lock_guard lock(mu_);
    return dir_ ? index_.count(key) > 0 : memory_.count(key) > 0;
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return dir_ ? index_.size() : memory_.size();
}

std::uintmax_t ResponseCache::data_bytes() const {
    std::lock_guard lock(mu_);
    if (!dir_) return 0;
    std::error_code ec;
    const auto n = fs::file_size(*dir_ / kEntriesFile, ec);
    return ec ? 0 : n;
}

void ResponseCache::clear() {
    std::lock_guard lock(mu_);
    memory_.clear();
    index_.clear();
    if (dir_) {
        std::error_code ec;
        fs::remove(*dir_ / kEntriesFile, ec);
        fs::remove(*dir_ / kIndexFile, ec);
    }
}

// ---- cost ledger -----------------------------------------------------------

CostLedger::CostLedger(CostCaps caps, std::optional<fs::path> log_path) : caps_(caps), log_path_(std::move(log_path)) {}

void CostLedger::reserve_dispatch() {
    std::lock_guard lock(mu_);
    if (totals_.dispatches >= caps_.max_requests) {
        throw BudgetExceeded("request cap of " + std::to_string(caps_.max_requests) + " reached");
    }
    if (totals_.total_tokens() >= caps_.max_total_tokens) {
        throw BudgetExceeded("token cap of " + std::to_string(caps_.max_total_tokens) + " reached");
    }
    ++totals_.dispatches;
}

void CostLedger::record(const LedgerRecord& rec) {
    std::lock_guard lock(mu_);
    ++totals_.responses;
    totals_.prompt_tokens += rec.usage.prompt_tokens;
    totals_.completion_tokens += rec.usage.completion_tokens;
    if (rec.usage.estimated) ++totals_.estimated_responses;
    records_.push_back(rec);
    if (log_path_) {
        std::ofstream out(*log_path_, std::ios::app);
        out << json{{"schema", kSchema},
                    {"key", rec.key},
                    {"model", rec.model},
                    {"prompt_tokens", rec.usage.prompt_tokens},
                    {"completion_tokens", rec.usage.completion_tokens},
                    {"estimated", rec.usage.estimated},
                    {"attempts", rec.attempts}}
                   .dump()
            << '\n';
    }
}

LedgerTotals CostLedger::totals() const {
    std::lock_guard lock(mu_);
    return totals_;
}

std::vector<LedgerRecord> CostLedger::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

// ---- mock provider ---------------------------------------------------------

MockScript MockScript::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read mock script '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("mock script '" + path.string() + "': " + e.what());
    }
    MockScript script;
    if (j.contains("default")) script.default_text = j["default"].get<std::string>();
    for (const auto& r : j.value("responses", json::array())) {
        const auto response = r.at("response").get<std::string>();
        if (r.contains("key")) {
            script.by_key[r["key"].get<std::string>()] = response;
        } else if (r.contains("contains")) {
            script.by_substring.emplace_back(r["contains"].get<std::string>(), response);
        } else {
            throw ConfigError("mock script entry needs 'key' or 'contains'");
        }
    }
    return script;
}

ChatResponse mock_complete(const ChatRequest& req, const MockScript& script) {
    ChatResponse r;
    const auto key = cache_key(req);
    if (const auto it = script.by_key.find(key); it != script.by_key.end()) {
        r.content = it->second;
    } else {
        const std::string& user = req.messages.empty() ? std::string() : req.messages.back().content;
        const auto hit = std::find_if(script.by_substring.begin(), script.by_substring.end(),
                                      [&](const auto& kv) { return user.find(kv.first) != std::string::npos; });
        r.content = hit != script.by_substring.end() ? hit->second : script.default_text;
    }
    r.finish_reason = FinishReason::stop;
    r.usage = Usage{estimate_prompt_tokens(req), prompt::count_tokens(r.content), true};
    return r;
}

HttpResult MockTransport::post(const std::string&, const std::vector<std::pair<std::string, std::string>>&,
                               const std::string& body, std::uint64_t) {
    ++calls_;
    ChatRequest req;
    try {
        req = request_from_wire(json::parse(body));
    } catch (const std::exception& e) {
        return HttpResult{400, json{{"error", {{"message", e.what()}}}}.dump()};
    }
    const auto r = mock_complete(req, script_);
    // No usage object: the client estimates and flags it, as with providers
    // that omit usage.
    const json out{{"object", "chat.completion"},
                   {"model", req.model},
                   {"choices", json::array({{{"index", 0},
                                             {"message", {{"role", "assistant"}, {"content", r.content}}},
                                             {"finish_reason", "stop"}}})}};
    return HttpResult{200, out.dump()};
}

// ---- client --------------------------------------------------------------

ChatClient::ChatClient(ProviderConfig config, Transport& transport, ResponseCache& cache, CostLedger& ledger,
                       Clock& clock, std::uint64_t jitter_seed)
    : config_(std::move(config)),
      transport_(transport),
      cache_(cache),
      ledger_(ledger),
      clock_(clock),
      limiter_(config_.requests_per_minute, clock),
      gate_(config_.max_concurrency),
      jitter_rng_(jitter_seed) {}

ClientStats ChatClient::stats() const {
    std::lock_guard lock(mu_);
    return stats_;
}

std::uint64_t ChatClient::backoff_ms(std::size_t attempt) {
    const std::uint64_t base = config_.backoff_base_ms << std::min<std::size_t>(attempt, 20);
    std::lock_guard lock(mu_);
    const std::uint64_t jitter = config_.backoff_base_ms > 0 ? jitter_rng_() % config_.backoff_base_ms : 0;
    return base + jitter;
}

ChatResponse ChatClient::complete(const ChatRequest& req) {
    req.validate();
    const auto key = cache_key(req);

    std::promise<ChatResponse> promise;
    std::shared_future<ChatResponse> waiter;
    {
        std::lock_guard lock(mu_);
        if (auto hit = cache_.get(key)) {
            ++stats_.cache_hits;
            return *hit;
        }
        if (const auto it = in_flight_.find(key); it != in_flight_.end()) {
            waiter = it->second;
            ++stats_.cache_hits;
        } else {
            ++stats_.cache_misses;
            in_flight_.emplace(key, promise.get_future().share());
        }
    }
    if (waiter.valid()) return waiter.get();

    try {
        auto response = dispatch(req, key);
        cache_.put(CacheEntry{key, response, iso8601_utc_now(), config_.model.empty() ? req.model : config_.model});
        promise.set_value(response);
        std::lock_guard lock(mu_);
        in_flight_.erase(key);
        return response;
    } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard lock(mu_);
        in_flight_.erase(key);
        throw;
    }
}

ChatResponse ChatClient::dispatch(const ChatRequest& req, const std::string& key) {
    std::vector<std::pair<std::string, std::string>> headers{{"Content-Type", "application/json"}};
    if (!config_.api_key_env.empty()) {
        const char* api_key = std::getenv(config_.api_key_env.c_str());
        if (api_key == nullptr || *api_key == '\0') {
            throw AuthError("environment variable " + config_.api_key_env + " holds no API key");
        }
        headers.emplace_back("Authorization", std::string("Bearer ") + api_key);
    }
    const std::string url = config_.base_url + "/chat/completions";
    const std::string body = wire_request(req).dump();

    std::string last_error;
    bool last_was_rate_limit = false;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) {
            {
                std::lock_guard lock(mu_);
                ++stats_.retries;
            }
            clock_.sleep_for_ms(static_cast<std::int64_t>(backoff_ms(attempt - 1)));
        }
        ledger_.reserve_dispatch();

        HttpResult result;
        const auto started = clock_.now_ms();
        try {
            ConcurrencyGate::Permit permit(gate_);
            limiter_.acquire();
            {
                std::lock_guard lock(mu_);
                ++stats_.dispatches;
            }
            result = transport_.post(url, headers, body, config_.timeout_ms);
        } catch (const TransportError& e) {
            last_error = e.what();
            last_was_rate_limit = false;
            continue;
        }
        const auto latency = static_cast<std::uint64_t>(std::max<std::int64_t>(0, clock_.now_ms() - started));

        if (result.status == 401 || result.status == 403) {
            throw AuthError("provider rejected credentials (HTTP " + std::to_string(result.status) + ")");
        }
        if (result.status == 429 || result.status >= 500) {
            last_error = "HTTP " + std::to_string(result.status);
            last_was_rate_limit = result.status == 429;
            continue;
        }
        if (result.status != 200) {
            throw TransportError("provider returned HTTP " + std::to_string(result.status) + ": " +
                                 result.body.substr(0, 200));
        }
        ChatResponse response;
        try {
            response = parse_wire_response(result.body, req);
        } catch (const std::exception& e) {
            last_error = std::string("malformed provider response: ") + e.what();
            last_was_rate_limit = false;
            continue;
        }
        if (response.finish_reason == FinishReason::error) {
            throw TransportError("provider returned no content");
        }
        response.latency_ms = latency;
        ledger_.record(LedgerRecord{key, req.model, response.usage, attempt + 1});
        return response;
    }
    const std::string what = "giving up after " + std::to_string(config_.max_retries + 1) + " attempts: " + last_error;
    if (last_was_rate_limit) throw RateLimitExhausted(what);
    throw TransportError(what);
}

}  // namespace eae::llm
