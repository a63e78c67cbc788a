#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "ragbench/error.hpp"

namespace ragbench {

using json = nlohmann::json;

struct HttpRequest {
    std::string url;
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
};

struct HttpResponse {
    int status = 0;  ///< 0 when the connection failed
    std::string body;
};

/// Seam between model clients and the network; tests substitute fakes.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const HttpRequest& request) = 0;
};

class HttplibTransport final : public HttpTransport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(120))
        : timeout_(timeout) {}

    HttpResponse post(const HttpRequest& request) override {
        const auto [origin, path] = split_url(request.url);
        httplib::Client client(origin);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        client.set_write_timeout(timeout_);
        httplib::Headers headers;
        for (const auto& [k, v] : request.headers) headers.emplace(k, v);
        auto res = client.Post(path, headers, request.body, "application/json");
        if (!res) return {0, httplib::to_string(res.error())};
        return {res->status, res->body};
    }

    /// "http://host:8080/api/x?y" -> {"http://host:8080", "/api/x?y"}
    static std::pair<std::string, std::string> split_url(const std::string& url) {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw UsageError("endpoint url lacks a scheme: " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) return {url, "/"};
        return {url.substr(0, path_start), url.substr(path_start)};
    }

private:
    std::chrono::seconds timeout_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{500};  ///< doubled after every failed attempt
};

inline std::vector<std::pair<std::string, std::string>> default_headers() {
    std::vector<std::pair<std::string, std::string>> h;
    if (const char* key = std::getenv("RAGBENCH_API_KEY"); key && *key) {
        h.emplace_back("Authorization", std::string("Bearer ") + key);
    }
    return h;
}

inline bool is_retryable(int status) { return status == 0 || status == 429 || status >= 500; }

/// POST a JSON body and parse the JSON reply. Connection failures, 429 and
/// 5xx are retried `max_retries` times with exponential backoff; any other
/// non-2xx status fails immediately.
inline json post_json(HttpTransport& transport, const std::string& url, const json& body,
                      const RetryPolicy& policy = {}) {
    HttpRequest req{url, body.dump(), default_headers()};
    auto delay = policy.base_delay;
    HttpResponse res;
    for (int attempt = 0;; ++attempt) {
        res = transport.post(req);
        if (res.status >= 200 && res.status < 300) break;
        if (!is_retryable(res.status) || attempt >= policy.max_retries) {
            throw ProviderError("POST " + url + " failed with status " + std::to_string(res.status) +
                                    " after " + std::to_string(attempt + 1) + " attempt(s): " +
                                    res.body.substr(0, 200),
                                res.status);
        }
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
        delay *= 2;
    }
    try {
        return json::parse(res.body);
    } catch (const json::parse_error& e) {
        throw ProviderError("POST " + url + " returned invalid JSON: " + e.what(), res.status);
    }
}

}  // namespace ragbench
