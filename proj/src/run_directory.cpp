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

#include "beyondrec/run_directory.hpp"

namespace beyondrec {

namespace {

constexpr const char* kManifest = "manifest.json";

}  // namespace

RunDirectory::RunDirectory(fs::path root) : root_(std::move(root)) {}

void RunDirectory::require(const std::string& rel, const std::string& producing_stage) const {
    if (!exists(rel)) {
        throw PreconditionError("missing artifact " + path(rel).string() + "; run the `" + producing_stage +
                                "` stage first");
    }
}

void RunDirectory::write(const std::string& rel, std::string_view content) const {
    const fs::path p = path(rel);
    fs::create_directories(p.parent_path());
    write_file_atomic(p, content);
}

json RunDirectory::manifest() const {
    if (!exists(kManifest)) return {{"artifacts", json::object()}, {"stages", json::object()}};
    return json::parse(read_file(path(kManifest)));
}

fs::path RunDirectory::resolve(const std::string& entry) const {
    const fs::path p(entry);
    return p.is_absolute() ? p : root_ / p;
}

std::string RunDirectory::digest_of(const std::string& entry) const {
    const fs::path p = resolve(entry);
    if (!fs::exists(p)) return "";
    return sha256_file(p);
}

bool RunDirectory::up_to_date(const std::string& stage, const std::vector<std::string>& inputs,
                              const std::string& params_digest) const {
    const json m = manifest();
    if (!m.contains("stages") || !m.at("stages").contains(stage)) return false;
    const json& s = m.at("stages").at(stage);
    if (s.value("status", "") != "ok" || s.value("params", "") != params_digest) return false;
    const json& recorded_inputs = s.at("inputs");
    if (recorded_inputs.size() != inputs.size()) return false;
    for (const auto& in : inputs) {
        if (!recorded_inputs.contains(in) || recorded_inputs.at(in) != digest_of(in)) return false;
    }
    for (const auto& [out, digest] : s.at("outputs").items()) {
        if (digest_of(out) != digest.get<std::string>()) return false;
    }
    return true;
}

void RunDirectory::record(const std::string& stage, const std::vector<std::string>& inputs,
                          const std::vector<std::string>& outputs, const std::string& params_digest,
                          const std::string& status) const {
    json m = manifest();
    json in = json::object(), out = json::object();
    for (const auto& i : inputs) in[i] = digest_of(i);
    for (const auto& o : outputs) {
        const std::string d = digest_of(o);
        out[o] = d;
        if (!d.empty()) m["artifacts"][o] = d;
    }
    m["stages"][stage] = {{"inputs", in}, {"outputs", out}, {"params", params_digest}, {"status", status}};
    fs::create_directories(root_);
    write_file_atomic(path(kManifest), m.dump(2) + "\n");
}

std::vector<std::string> RunDirectory::verify() const {
    std::vector<std::string> bad;
    const json m = manifest();
    for (const auto& [rel, digest] : m.at("artifacts").items()) {
        if (digest_of(rel) != digest.get<std::string>()) bad.push_back(rel);
    }
    return bad;
}

}  // namespace beyondrec
