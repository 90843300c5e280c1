#include "cllmrec/llm_gateway.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "cllmrec/common.hpp"

// httplib drags in OpenSSL only when asked; plain HTTP is enough here.
#include "httplib.h"

namespace cllmrec {

namespace fs = std::filesystem;

std::string LlmRequest::cache_key() const {
    std::string canonical = (role == Role::Chat ? "chat" : "embed");
    canonical += "\n" + model + "\n" + payload;
    return content_digest(canonical);
}

HttpTransport::HttpTransport(std::string base_url, std::string api_key)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

std::unique_ptr<HttpTransport> HttpTransport::from_env() {
    const char* url = std::getenv("LLM_BASE_URL");
    const char* key = std::getenv("LLM_API_KEY");
    if (!url || !*url) throw GatewayError(GatewayError::Kind::Fatal, "LLM_BASE_URL not set");
    if (!key || !*key) throw GatewayError(GatewayError::Kind::Fatal, "LLM_API_KEY not set (malformed credential)");
    return std::make_unique<HttpTransport>(url, key);
}

std::string HttpTransport::send(const LlmRequest& req) {
    httplib::Client client(base_url_);
    client.set_read_timeout(120, 0);
    httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
    const char* path = req.role == LlmRequest::Role::Chat ? "/v1/chat/completions" : "/v1/embeddings";
    auto res = client.Post(path, headers, req.payload, "application/json");
    if (!res) throw GatewayError(GatewayError::Kind::Transient, "connection failure to " + base_url_);
    if (res->status >= 200 && res->status < 300) return res->body;
    std::string excerpt = res->body.substr(0, 200);
    std::string msg = "HTTP " + std::to_string(res->status) + ": " + excerpt;
    if (res->status == 429 || res->status >= 500) throw GatewayError(GatewayError::Kind::Transient, msg);
    throw GatewayError(GatewayError::Kind::Fatal, msg);
}

Gateway::Gateway(std::shared_ptr<Transport> transport, std::string cache_dir, RetryPolicy policy)
    : transport_(std::move(transport)), cache_dir_(std::move(cache_dir)), policy_(policy) {
    fs::create_directories(cache_dir_);
}

std::optional<std::string> Gateway::cache_get(const LlmRequest& req) const {
    fs::path p = fs::path(cache_dir_) / (req.cache_key() + ".body");
    if (!fs::exists(p)) return std::nullopt;
    return read_file(p.string());
}

void Gateway::cache_put(const LlmRequest& req, const std::string& body) const {
    // write-once: the atomic rename makes concurrent writers of the same key
    // converge on identical content
    fs::path p = fs::path(cache_dir_) / (req.cache_key() + ".body");
    if (fs::exists(p)) return;
    write_file_atomic(p.string(), body);
}

LlmResponse Gateway::call_uncached(const LlmRequest& req) {
    auto start = std::chrono::steady_clock::now();
    std::string last_error;
    for (int attempt = 1; attempt <= policy_.max_attempts; ++attempt) {
        try {
            std::string body = transport_->send(req);
            cache_put(req, body);
            double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return {body, latency, attempt, false};
        } catch (const GatewayError& e) {
            if (e.kind == GatewayError::Kind::Fatal) throw;
            last_error = e.what();
            if (attempt < policy_.max_attempts) {
                double delay = policy_.base_delay_s * std::pow(policy_.factor, attempt - 1);
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
            }
        }
    }
    throw GatewayError(GatewayError::Kind::Exhausted,
                       "retries exhausted (" + std::to_string(policy_.max_attempts) + "): " + last_error);
}

LlmResponse Gateway::call(const LlmRequest& req) {
    if (auto cached = cache_get(req)) return {*cached, 0.0, 0, true};
    return call_uncached(req);
}

std::vector<LlmResponse> Gateway::call_batch(const std::vector<LlmRequest>& reqs, int max_in_flight) {
    if (max_in_flight < 1) throw GatewayError(GatewayError::Kind::Fatal, "max_in_flight must be >= 1");
    int n = static_cast<int>(reqs.size());
    std::vector<LlmResponse> out(n);
    std::atomic<int> next{0};
    std::atomic<bool> abort{false};
    std::vector<std::string> errors(n);
    std::atomic<int> failures{0};

    auto worker = [&] {
        while (!abort.load()) {
            int i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i] = call(reqs[i]);
            } catch (const std::exception& e) {
                errors[i] = e.what();
                failures.fetch_add(1);
                abort.store(true);
                return;
            }
        }
    };

    int workers = std::min(max_in_flight, std::max(1, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (failures.load() > 0) {
        for (int i = 0; i < n; ++i) {
            if (!errors[i].empty())
                throw GatewayError(GatewayError::Kind::BatchAborted,
                                   "batch aborted at request " + std::to_string(i) + ": " + errors[i]);
        }
    }
    return out;
}

}  // namespace cllmrec
