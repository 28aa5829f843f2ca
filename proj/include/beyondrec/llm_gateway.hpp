// Copyright 2026 The beyondrec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Chat-completion client with an on-disk content-addressed cache,
// exponential-backoff retries, bounded concurrency and an audit log.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beyondrec/util.hpp"

namespace beyondrec {

using Millis = std::chrono::milliseconds;

struct RetryPolicy {
    int max_attempts = 5;
    Millis initial_backoff{500};
    double multiplier = 2.0;
    Millis max_backoff{30000};

    // Delay before retry number `retry` (1 = first retry).
    Millis backoff_for(int retry) const;
};

struct GatewayConfig {
    std::string endpoint;  // e.g. https://api.openai.com/v1/chat/completions
    std::string api_key_env = "OPENAI_API_KEY";
    std::size_t max_in_flight = 8;
    Millis min_request_interval{0};
    Millis timeout{120000};
    RetryPolicy retry;
    fs::path cache_dir;               // empty disables the disk cache
    std::optional<fs::path> audit_log;
};

json to_json(const GatewayConfig& config);
GatewayConfig gateway_config_from_json(const json& j);

struct CompletionRequest {
    std::string model;
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 512;
    int repeat = 0;  // distinguishes repeated runs of the same prompt

    // sha256 over (model, prompt, temperature) plus the repeat index when nonzero.
    std::string cache_key() const;
};

struct CompletionResponse {
    std::string text;
    double latency_ms = 0.0;
    bool from_cache = false;
    int attempt_count = 0;
};

class EmptyCompletion : public TransportError {
public:
    using TransportError::TransportError;
};

struct HttpReply {
    int status = 0;
    std::string body;
    std::optional<Millis> retry_after;
};

// One POST of a JSON body. Connection-level failures throw TransportError.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post(const std::string& body) = 0;
};

class HttpTransport : public Transport {
public:
    HttpTransport(std::string endpoint, std::string api_key, Millis timeout);
    HttpReply post(const std::string& body) override;

private:
    std::string base_;
    std::string path_;
    std::string api_key_;
    Millis timeout_;
};

// Generic chat-completion wire shape.
std::string encode_chat_request(const CompletionRequest& request);
std::string decode_chat_response(const std::string& body);

using Sleeper = std::function<void(Millis)>;

class LlmGateway {
public:
    // Builds an HttpTransport from config; the API key is read from the
    // configured environment variable.
    explicit LlmGateway(GatewayConfig config);
    LlmGateway(GatewayConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper = {});
    ~LlmGateway();

    CompletionResponse complete(const CompletionRequest& request);

    struct BatchResult {
        std::optional<CompletionResponse> response;
        std::string error;
        bool transport_failure = false;
    };
    // Runs up to max_in_flight requests concurrently; results keep input order.
    std::vector<BatchResult> complete_all(std::span<const CompletionRequest> requests);

    std::size_t network_calls() const;
    std::size_t cache_hits() const;
    std::size_t max_observed_in_flight() const;
    const GatewayConfig& config() const { return config_; }

private:
    std::optional<CompletionResponse> read_cache(const CompletionRequest& request,
                                                 const std::string& key) const;
    void write_cache(const CompletionRequest& request, const std::string& key,
                     const CompletionResponse& response) const;
    CompletionResponse fetch(const CompletionRequest& request, const std::string& key);
    HttpReply post_bounded(const std::string& body);
    void audit(const json& entry);

    GatewayConfig config_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;

    mutable std::mutex mutex_;
    std::condition_variable slots_;
    std::size_t in_flight_ = 0;
    std::size_t max_in_flight_seen_ = 0;
    std::size_t network_calls_ = 0;
    std::size_t cache_hits_ = 0;
    std::chrono::steady_clock::time_point next_slot_{};
    std::map<std::string, std::shared_future<CompletionResponse>> pending_;

    std::mutex audit_mutex_;
    std::ofstream audit_stream_;
};

}  // namespace beyondrec
