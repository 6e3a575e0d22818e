#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

namespace eae::llm {

enum class Role { system, user };

struct Message {
    Role role;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct ChatRequest {
    std::string model;
    std::vector<Message> messages;
    double temperature = 0.0;
    std::size_t max_completion_tokens = 1024;

    // Throws std::invalid_argument on an empty message list, a trailing
    // non-user message, negative temperature or zero max_completion_tokens.
    void validate() const;
    bool operator==(const ChatRequest&) const = default;
};

enum class FinishReason { stop, length, error };

std::string to_string(FinishReason f);
FinishReason finish_reason_from_string(std::string_view s);

struct Usage {
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    bool estimated = false;  // provider sent no usage object

    bool operator==(const Usage&) const = default;
};

struct ChatResponse {
    std::string content;
    FinishReason finish_reason = FinishReason::stop;
    Usage usage;
    std::uint64_t latency_ms = 0;

    bool operator==(const ChatResponse&) const = default;
};

nlohmann::json to_json(const ChatResponse& r);
ChatResponse response_from_json(const nlohmann::json& j);

struct ProviderConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model;
    std::string api_key_env = "EAE_API_KEY";  // empty: no key required
    std::size_t max_retries = 5;
    std::uint64_t backoff_base_ms = 500;
    std::size_t max_concurrency = 4;
    std::size_t requests_per_minute = 60;
    std::uint64_t timeout_ms = 120000;
};

// Canonical serialization: compact JSON, fixed key order, UTF-8.
std::string canonical_request(const ChatRequest& req);
// SHA-256 of canonical_request.
std::string cache_key(const ChatRequest& req);

// Wire body for POST {base_url}/chat/completions.
nlohmann::json wire_request(const ChatRequest& req);
ChatRequest request_from_wire(const nlohmann::json& body);
// Parses an OpenAI-style completion body. Missing usage is estimated from the
// request and content with count_tokens and flagged.
ChatResponse parse_wire_response(std::string_view body, const ChatRequest& req);

// ---- time ----------------------------------------------------------------

class Clock {
public:
    virtual ~Clock() = default;
    virtual std::int64_t now_ms() = 0;
    virtual void sleep_for_ms(std::int64_t ms) = 0;
};

class SystemClock final : public Clock {
public:
    std::int64_t now_ms() override;
    void sleep_for_ms(std::int64_t ms) override;
};

// Time only moves when someone sleeps. Sleeping advances the shared time to
// (time observed at the call + ms) unless another sleeper got further.
class SimulatedClock final : public Clock {
public:
    explicit SimulatedClock(std::int64_t start_ms = 0) : now_(start_ms) {}
    std::int64_t now_ms() override { return now_.load(); }
    void sleep_for_ms(std::int64_t ms) override;
    void advance(std::int64_t ms) { now_ += ms; }

private:
    std::atomic<std::int64_t> now_;
};

std::string iso8601_utc_now();

// ---- dispatch control ----------------------------------------------------

/// Sliding-window limiter: at most `per_minute` acquisitions in any 60 s
/// window. acquire() sleeps on the clock until a slot frees up.
class RateLimiter {
public:
    RateLimiter(std::size_t per_minute, Clock& clock);
    void acquire();
    std::vector<std::int64_t> history() const;

private:
    std::size_t per_minute_;
    Clock& clock_;
    mutable std::mutex mu_;
    std::deque<std::int64_t> window_;
    std::vector<std::int64_t> history_;
};

/// Counting gate bounding in-flight requests.
class ConcurrencyGate {
public:
    explicit ConcurrencyGate(std::size_t max_in_flight);

    class Permit {
    public:
        explicit Permit(ConcurrencyGate& g) : gate_(&g) { gate_->acquire(); }
        ~Permit() { gate_->release(); }
        Permit(const Permit&) = delete;
        Permit& operator=(const Permit&) = delete;

    private:
        ConcurrencyGate* gate_;
    };

    void acquire();
    void release();
    std::size_t peak() const;

private:
    std::size_t max_;
    std::size_t in_flight_ = 0;
    std::size_t peak_ = 0;
    mutable std::mutex mu_;
    std::condition_variable cv_;
};

// ---- cache ---------------------------------------------------------------

struct CacheEntry {
    std::string key;
    ChatResponse response;
    std::string created_at;
    std::string provider_model;
};

/// Response cache keyed by cache_key. On disk it is an append-only
/// `entries.jsonl` plus `index.tsv` (key, byte offset, length); a stale or
/// missing index is rebuilt from the entries on open.
class ResponseCache {
public:
    static inline constexpr int kSchema = 1;

    static ResponseCache in_memory();
    static ResponseCache open(const std::filesystem::path& dir);

    ResponseCache(ResponseCache&& other) noexcept;
    ResponseCache& operator=(ResponseCache&&) = delete;

    std::optional<ChatResponse> get(const std::string& key) const;
    void put(const CacheEntry& entry);
    bool contains(const std::string& key) const;
    std::size_t size() const;
    std::uintmax_t data_bytes() const;
    void clear();

    const std::optional<std::filesystem::path>& dir() const noexcept { return dir_; }

private:
    ResponseCache() = default;
    void rebuild_index();

    struct Location {
        std::uint64_t offset;
        std::uint64_t length;
    };

    std::optional<std::filesystem::path> dir_;
    std::unordered_map<std::string, Location> index_;
    std::unordered_map<std::string, ChatResponse> memory_;  // in-memory mode only
    mutable std::mutex mu_;
};

// ---- cost ledger -----------------------------------------------------------

struct CostCaps {
    std::size_t max_requests = std::numeric_limits<std::size_t>::max();
    std::size_t max_total_tokens = std::numeric_limits<std::size_t>::max();
};

struct LedgerRecord {
    std::string key;
    std::string model;
    Usage usage;
    std::size_t attempts = 1;
};

struct LedgerTotals {
    std::size_t dispatches = 0;  // transport calls, retries included
    std::size_t responses = 0;
    std::size_t prompt_tokens = 0;
    std::size_t completion_tokens = 0;
    std::size_t estimated_responses = 0;

    std::size_t total_tokens() const noexcept { return prompt_tokens + completion_tokens; }
    bool operator==(const LedgerTotals&) const = default;
};

/// Counts transport dispatches against the caps and accumulates usage.
/// Optionally appends every record to a JSON Lines log.
class CostLedger {
public:
    static inline constexpr int kSchema = 1;

    explicit CostLedger(CostCaps caps = {}, std::optional<std::filesystem::path> log_path = std::nullopt);

    // Claims one dispatch slot or throws BudgetExceeded.
    void reserve_dispatch();
    void record(const LedgerRecord& rec);

    LedgerTotals totals() const;
    std::vector<LedgerRecord> records() const;
    const CostCaps& caps() const noexcept { return caps_; }

private:
    CostCaps caps_;
    std::optional<std::filesystem::path> log_path_;
    mutable std::mutex mu_;
    LedgerTotals totals_;
    std::vector<LedgerRecord> records_;
};

// ---- transport -----------------------------------------------------------

struct HttpResult {
    int status = 0;
    std::string body;
};

class Transport {
public:
    virtual ~Transport() = default;
    // Throws TransportError when no HTTP response was obtained (connection
    // failure, timeout).
    virtual HttpResult post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                            const std::string& body, std::uint64_t timeout_ms) = 0;
};

class HttpTransport final : public Transport {
public:
    HttpResult post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                    const std::string& body, std::uint64_t timeout_ms) override;
};

// ---- mock provider ---------------------------------------------------------

inline constexpr std::string_view kMockDefault = "Final Answers:\n(none)";

/// Canned responses keyed by cache_key. `by_substring` entries match when the
/// last user message contains the needle; keys take precedence.
struct MockScript {
    std::map<std::string, std::string> by_key;
    std::vector<std::pair<std::string, std::string>> by_substring;
    std::string default_text = std::string(kMockDefault);

    // JSON: {"default": "...", "responses": [{"key"|"contains": "...", "response": "..."}]}
    static MockScript load(const std::filesystem::path& path);
};

ChatResponse mock_complete(const ChatRequest& req, const MockScript& script);

/// Transport that answers from a MockScript in the OpenAI wire format.
class MockTransport final : public Transport {
public:
    explicit MockTransport(MockScript script) : script_(std::move(script)) {}
    HttpResult post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                    const std::string& body, std::uint64_t timeout_ms) override;
    std::size_t calls() const noexcept { return calls_.load(); }

private:
    MockScript script_;
    std::atomic<std::size_t> calls_{0};
};

// ---- client --------------------------------------------------------------

struct ClientStats {
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
    std::size_t dispatches = 0;
    std::size_t retries = 0;
};

/// complete(): cache lookup, then dispatch with retries. Safe to call from
/// several threads; identical in-flight requests share one dispatch.
class ChatClient {
public:
    ChatClient(ProviderConfig config, Transport& transport, ResponseCache& cache, CostLedger& ledger, Clock& clock,
               std::uint64_t jitter_seed = 0);

    ChatResponse complete(const ChatRequest& req);

    ClientStats stats() const;
    const RateLimiter& rate_limiter() const noexcept { return limiter_; }
    const ConcurrencyGate& gate() const noexcept { return gate_; }

private:
    ChatResponse dispatch(const ChatRequest& req, const std::string& key);
    std::uint64_t backoff_ms(std::size_t attempt);

    ProviderConfig config_;
    Transport& transport_;
    ResponseCache& cache_;
    CostLedger& ledger_;
    Clock& clock_;
    RateLimiter limiter_;
    ConcurrencyGate gate_;

    mutable std::mutex mu_;
    std::mt19937_64 jitter_rng_;
    std::map<std::string, std::shared_future<ChatResponse>> in_flight_;
    ClientStats stats_;
};

}  // namespace eae::llm
