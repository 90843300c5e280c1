#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cllmrec {

struct LlmRequest {
    enum class Role { Chat, Embed };
    Role role = Role::Chat;
    std::string model;
    std::string payload;  // request body text (JSON for HTTP transports)

    std::string cache_key() const;
};

struct LlmResponse {
    std::string body;
    double latency_s = 0.0;
    int attempts = 0;  // 0 when served from cache
    bool from_cache = false;
};

struct GatewayError : std::runtime_error {
    enum class Kind { Transient, Fatal, Exhausted, BatchAborted };
    Kind kind;
    GatewayError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// One attempt at delivering a request. Implementations signal transient
// failures (retry) vs fatal ones (surface immediately) via GatewayError.
class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string send(const LlmRequest& req) = 0;
};

// OpenAI-compatible chat-completions / embeddings endpoints.
class HttpTransport : public Transport {
public:
    HttpTransport(std::string base_url, std::string api_key);
    std::string send(const LlmRequest& req) override;

    static std::unique_ptr<HttpTransport> from_env();  // LLM_BASE_URL, LLM_API_KEY

private:
    std::string base_url_;
    std::string api_key_;
};

struct RetryPolicy {
    int max_attempts = 5;
    double base_delay_s = 1.0;
    double factor = 2.0;
};

class Gateway {
public:
    Gateway(std::shared_ptr<Transport> transport, std::string cache_dir, RetryPolicy policy = {});

    LlmResponse call(const LlmRequest& req);
    // Responses in input order; at most max_in_flight outstanding at once.
    // Any failure aborts the batch once in-flight requests drain; completed
    // responses stay cached.
    std::vector<LlmResponse> call_batch(const std::vector<LlmRequest>& reqs, int max_in_flight);

    const std::string& cache_dir() const { return cache_dir_; }

private:
    std::optional<std::string> cache_get(const LlmRequest& req) const;
    void cache_put(const LlmRequest& req, const std::string& body) const;
    LlmResponse call_uncached(const LlmRequest& req);

    std::shared_ptr<Transport> transport_;
    std::string cache_dir_;
    RetryPolicy policy_;
};

}  // namespace cllmrec
