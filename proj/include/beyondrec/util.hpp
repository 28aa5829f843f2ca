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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace beyondrec {

using json = nlohmann::json;
namespace fs = std::filesystem;

// Error hierarchy. The CLI maps these onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

// A required input or stage artifact is missing or violates a precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& what)
        : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Network or upstream provider failure.
class TransportError : public Error {
public:
    using Error::Error;
};

// Non-retryable HTTP status (4xx other than 429).
class HttpError : public TransportError {
public:
    HttpError(int status, std::string body)
        : TransportError("HTTP " + std::to_string(status) + ": " + body),
          status_(status), body_(std::move(body)) {}
    int status() const { return status_; }
    const std::string& body() const { return body_; }

private:
    int status_;
    std::string body_;
};

// Deterministic random source. Everything above the raw 64-bit engine is
// implemented here so draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform integer in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);

    // Uniform real in [0, 1).
    double uniform01();

    // Standard normal (Box-Muller).
    double normal();

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = uniform_index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
// Per-entity seed: hash(global_seed, key).
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path& path);

std::string read_file(const fs::path& path);
// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const fs::path& path, std::string_view content);

// One JSON object per non-empty line. Malformed lines raise ParseError.
std::vector<json> read_jsonl(const fs::path& path);
std::string to_jsonl(std::span<const json> records);
void write_jsonl(const fs::path& path, std::span<const json> records);

// Compensated (Neumaier) summation.
class Accumulator {
public:
    void add(double x);
    double sum() const { return sum_ + compensation_; }
    std::size_t count() const { return count_; }
    double mean() const { return count_ == 0 ? 0.0 : sum() / static_cast<double>(count_); }

private:
    double sum_ = 0.0;
    double compensation_ = 0.0;
    std::size_t count_ = 0;
};

std::vector<std::string> split(std::string_view text, char delimiter);
std::string_view trim(std::string_view text);

}  // namespace beyondrec
