#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "eae/error.hpp"
#include "eae/llm.hpp"

namespace eae::llm {

HttpResult HttpTransport::post(const std::string& url, const std::vector<std::pair<std::string, std::string>>& headers,
                               const std::string& body, std::uint64_t timeout_ms) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("malformed URL '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client(origin);
    const auto sec = static_cast<time_t>(timeout_ms / 1000);
    const auto usec = static_cast<time_t>((timeout_ms % 1000) * 1000);
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    httplib::Headers h;
    std::string content_type = "application/json";
    for (const auto& [k, v] : headers) {
        if (k == "Content-Type") {
            content_type = v;
        } else {
            h.emplace(k, v);
        }
    }
    auto res = client.Post(path, h, body, content_type);
    if (!res) throw TransportError("POST " + url + " failed: " + httplib::to_string(res.error()));
    return HttpResult{res->status, res->body};
}

}  // namespace eae::llm
