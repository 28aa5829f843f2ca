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

#include "beyondrec/llm_gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

namespace beyondrec {

Millis RetryPolicy::backoff_for(int retry) const {
    const double factor = std::pow(multiplier, std::max(0, retry - 1));
    const double ms = static_cast<double>(initial_backoff.count()) * factor;
    return Millis(static_cast<std::int64_t>(std::min(ms, static_cast<double>(max_backoff.count()))));
}

json to_json(const GatewayConfig& c) {
    json j{{"endpoint", c.endpoint},
           {"api_key_env", c.api_key_env},
           {"max_in_flight", c.max_in_flight},
           {"min_request_interval_ms", c.min_request_interval.count()},
           {"timeout_ms", c.timeout.count()},
           {"retry",
            {{"max_attempts", c.retry.max_attempts},
             {"initial_backoff_ms", c.retry.initial_backoff.count()},
             {"multiplier", c.retry.multiplier},
             {"max_backoff_ms", c.retry.max_backoff.count()}}},
           {"cache_dir", c.cache_dir.string()},
           {"audit_log", nullptr}};
    if (c.audit_log) j["audit_log"] = c.audit_log->string();
    return j;
}

GatewayConfig gateway_config_from_json(const json& j) {
    GatewayConfig c;
    c.endpoint = j.value("endpoint", c.endpoint);
    c.api_key_env = j.value("api_key_env", c.api_key_env);
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
    c.min_request_interval = Millis(j.value("min_request_interval_ms", std::int64_t{0}));
    c.timeout = Millis(j.value("timeout_ms", c.timeout.count()));
    if (j.contains("retry")) {
        const auto& r = j.at("retry");
        c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
        c.retry.initial_backoff = Millis(r.value("initial_backoff_ms", c.retry.initial_backoff.count()));
        c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
        c.retry.max_backoff = Millis(r.value("max_backoff_ms", c.retry.max_backoff.count()));
    }
    c.cache_dir = j.value("cache_dir", std::string());
    if (j.contains("audit_log") && j.at("audit_log").is_string()) {
        c.audit_log = j.at("audit_log").get<std::string>();
    }
    if (c.max_in_flight == 0) throw UsageError("max_in_flight must be positive");
    return c;
}

std::string CompletionRequest::cache_key() const {
    json parts = json::array({model, prompt, temperature});
    if (repeat != 0) parts.push_back(repeat);
    return sha256_hex(parts.dump());
}

HttpTransport::HttpTransport(std::string endpoint, std::string api_key, Millis timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
    const auto scheme = endpoint.find("://");
    if (scheme == std::string::npos) throw UsageError("endpoint must be an http(s) URL: " + endpoint);
    const auto slash = endpoint.find('/', scheme + 3);
    base_ = endpoint.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : endpoint.substr(slash);
}

HttpReply HttpTransport::post(const std::string& body) {
    httplib::Client client(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_).count();
    client.set_connection_timeout(static_cast<time_t>(std::max<std::int64_t>(1, secs)), 0);
    client.set_read_timeout(static_cast<time_t>(std::max<std::int64_t>(1, secs)), 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto result = client.Post(path_, headers, body, "application/json");
    if (!result) throw TransportError("request to " + base_ + path_ + " failed: " + httplib::to_string(result.error()));
    HttpReply reply{result->status, result->body, std::nullopt};
    if (result->has_header("Retry-After")) {
        try {
            reply.retry_after = Millis(static_cast<std::int64_t>(std::stod(result->get_header_value("Retry-After")) * 1000));
        } catch (const std::exception&) {
            // HTTP-date form is ignored; exponential backoff still applies.
        }
    }
    return reply;
}

std::string encode_chat_request(const CompletionRequest& request) {
    json body{{"model", request.model},
              {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
              {"temperature", request.temperature},
              {"max_tokens", request.max_tokens}};
    return body.dump();
}

std::string decode_chat_response(const std::string& body) {
    try {
        const json j = json::parse(body);
        const auto& message = j.at("choices").at(0).at("message");
        const auto& content = message.at("content");
        return content.is_string() ? content.get<std::string>() : std::string();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed completion response: ") + e.what());
    }
}

namespace {

std::string api_key_from_env(const std::string& name) {
    if (name.empty()) return {};
    const char* value = std::getenv(name.c_str());
    return value ? std::string(value) : std::string();
}

bool retryable(int status) {
    return status == 408 || status == 429 || status >= 500;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

LlmGateway::LlmGateway(GatewayConfig config)
    : LlmGateway(config,
                 std::make_shared<HttpTransport>(config.endpoint, api_key_from_env(config.api_key_env),
                                                 config.timeout)) {}

LlmGateway::LlmGateway(GatewayConfig config, std::shared_ptr<Transport> transport, Sleeper sleeper)
    : config_(std::move(config)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
    if (config_.max_in_flight == 0) throw UsageError("max_in_flight must be positive");
    if (!sleeper_) sleeper_ = [](Millis d) { std::this_thread::sleep_for(d); };
    if (!config_.cache_dir.empty()) fs::create_directories(config_.cache_dir);
    if (config_.audit_log) {
        if (config_.audit_log->has_parent_path()) fs::create_directories(config_.audit_log->parent_path());
        audit_stream_.open(*config_.audit_log, std::ios::app);
    }
}

LlmGateway::~LlmGateway() = default;

std::optional<CompletionResponse> LlmGateway::read_cache(const CompletionRequest& request,
                                                         const std::string& key) const {
    if (config_.cache_dir.empty()) return std::nullopt;
    const fs::path path = config_.cache_dir / (key + ".json");
    if (!fs::exists(path)) return std::nullopt;
    try {
        const json j = json::parse(read_file(path));
        const auto& req = j.at("request");
        // Guard against digest collisions or hand-edited files.
        if (req.at("model") != request.model || req.at("prompt") != request.prompt) return std::nullopt;
        CompletionResponse r;
        r.text = j.at("response").at("text").get<std::string>();
        r.latency_ms = j.at("response").value("latency_ms", 0.0);
        r.from_cache = true;
        r.attempt_count = 0;
        if (r.text.empty()) return std::nullopt;
        return r;
    } catch (const json::exception&) {
        return std::nullopt;
    }
}

void LlmGateway::write_cache(const CompletionRequest& request, const std::string& key,
                             const CompletionResponse& response) const {
    if (config_.cache_dir.empty()) return;
    json j{{"request",
            {{"model", request.model},
             {"prompt", request.prompt},
             {"temperature", request.temperature},
             {"max_tokens", request.max_tokens}}},
           {"response",
            {{"text", response.text},
             {"latency_ms", response.latency_ms},
             {"attempt_count", response.attempt_count}}}};
    write_file_atomic(config_.cache_dir / (key + ".json"), j.dump(2));
}

void LlmGateway::audit(const json& entry) {
    std::lock_guard<std::mutex> lock(audit_mutex_);
    if (!audit_stream_.is_open()) return;
    audit_stream_ << entry.dump() << '\n';
    audit_stream_.flush();
}

HttpReply LlmGateway::post_bounded(const std::string& body) {
    Millis wait{0};
    {
        std::unique_lock<std::mutex> lock(mutex_);
        slots_.wait(lock, [&] { return in_flight_ < config_.max_in_flight; });
        ++in_flight_;
        ++network_calls_;
        max_in_flight_seen_ = std::max(max_in_flight_seen_, in_flight_);
        if (config_.min_request_interval.count() > 0) {
            const auto now = std::chrono::steady_clock::now();
            const auto slot = std::max(now, next_slot_);
            next_slot_ = slot + config_.min_request_interval;
            wait = std::chrono::duration_cast<Millis>(slot - now);
        }
    }
    struct Release {
        LlmGateway* self;
        ~Release() {
            {
                std::lock_guard<std::mutex> lock(self->mutex_);
                --self->in_flight_;
            }
            self->slots_.notify_one();
        }
    } release{this};
    if (wait.count() > 0) std::this_thread::sleep_for(wait);
    return transport_->post(body);
}

CompletionResponse LlmGateway::fetch(const CompletionRequest& request, const std::string& key) {
    const std::string body = encode_chat_request(request);
    std::string last_error;
    const int max_attempts = std::max(1, config_.retry.max_attempts);
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        const auto start = std::chrono::steady_clock::now();
        std::optional<Millis> retry_after;
        json entry{{"cache_key", key}, {"model", request.model}, {"attempt", attempt}};
        try {
            HttpReply reply = post_bounded(body);
            entry["status"] = reply.status;
            entry["latency_ms"] = elapsed_ms(start);
            if (reply.status >= 200 && reply.status < 300) {
                CompletionResponse response;
                response.text = decode_chat_response(reply.body);
                response.latency_ms = elapsed_ms(start);
                response.attempt_count = attempt;
                entry["outcome"] = response.text.empty() ? "empty" : "ok";
                entry["response"] = response.text;
                audit(entry);
                if (response.text.empty()) throw EmptyCompletion("empty completion for key " + key);
                return response;
            }
            entry["outcome"] = retryable(reply.status) ? "retry" : "error";
            entry["response"] = reply.body;
            audit(entry);
            if (!retryable(reply.status)) throw HttpError(reply.status, reply.body);
            last_error = "HTTP " + std::to_string(reply.status);
            retry_after = reply.retry_after;
        } catch (const HttpError&) {
            throw;
        } catch (const EmptyCompletion&) {
            throw;
        } catch (const TransportError& e) {
            entry["outcome"] = "transport_error";
            entry["error"] = e.what();
            audit(entry);
            last_error = e.what();
        }
        if (attempt < max_attempts) {
            Millis delay = config_.retry.backoff_for(attempt);
            if (retry_after && *retry_after > delay) delay = *retry_after;
            sleeper_(delay);
        }
    }
    throw TransportError("retries exhausted after " + std::to_string(max_attempts) +
                         " attempts: " + last_error);
}

CompletionResponse LlmGateway::complete(const CompletionRequest& request) {
    const std::string key = request.cache_key();
    std::promise<CompletionResponse> promise;
    std::shared_future<CompletionResponse> shared;
    bool owner = false;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = pending_.find(key);
        if (it != pending_.end()) {
            shared = it->second;
        } else {
            shared = promise.get_future().share();
            pending_.emplace(key, shared);
            owner = true;
        }
    }
    if (!owner) {
        // Another caller owns this key; reuse its result.
        CompletionResponse r = shared.get();
        r.from_cache = true;
        r.attempt_count = 0;
        std::lock_guard<std::mutex> lock(mutex_);
        ++cache_hits_;
        return r;
    }
    try {
        if (auto cached = read_cache(request, key)) {
            {
                std::lock_guard<std::mutex> lock(mutex_);
                ++cache_hits_;
            }
            audit({{"cache_key", key}, {"model", request.model}, {"outcome", "cache_hit"}});
            promise.set_value(*cached);
            return *cached;
        }
        CompletionResponse response = fetch(request, key);
        write_cache(request, key, response);
        promise.set_value(response);
        return response;
    } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard<std::mutex> lock(mutex_);
        pending_.erase(key);
        throw;
    }
}

std::vector<LlmGateway::BatchResult> LlmGateway::complete_all(std::span<const CompletionRequest> requests) {
    std::vector<BatchResult> results(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            try {
                results[i].response = complete(requests[i]);
            } catch (const EmptyCompletion& e) {
                results[i].error = e.what();
            } catch (const HttpError& e) {
                results[i].error = e.what();
                results[i].transport_failure = true;
            } catch (const TransportError& e) {
                results[i].error = e.what();
                results[i].transport_failure = true;
            } catch (const std::exception& e) {
                results[i].error = e.what();
            }
        }
    };
    const std::size_t threads = std::min(config_.max_in_flight, std::max<std::size_t>(1, requests.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

std::size_t LlmGateway::network_calls() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return network_calls_;
}

std::size_t LlmGateway::cache_hits() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return cache_hits_;
}

std::size_t LlmGateway::max_observed_in_flight() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return max_in_flight_seen_;
}

}  // namespace beyondrec
