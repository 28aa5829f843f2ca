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

// A run directory holds every artifact of one experiment plus manifest.json,
// which lists content digests per artifact and per stage.

#include <string>
#include <vector>

#include "beyondrec/util.hpp"

namespace beyondrec {

class RunDirectory {
public:
    explicit RunDirectory(fs::path root);

    const fs::path& root() const { return root_; }
    fs::path path(const std::string& rel) const { return root_ / rel; }
    bool exists(const std::string& rel) const { return fs::exists(path(rel)); }

    // PreconditionError naming the artifact and the stage that produces it.
    void require(const std::string& rel, const std::string& producing_stage) const;

    void write(const std::string& rel, std::string_view content) const;

    json manifest() const;

    // True when the stage last finished with these parameters, its recorded
    // inputs still have the same digests and its outputs are intact.
    bool up_to_date(const std::string& stage, const std::vector<std::string>& inputs,
                    const std::string& params_digest) const;

    // Inputs and outputs are paths relative to the root, or absolute paths
    // for files outside it.
    void record(const std::string& stage, const std::vector<std::string>& inputs,
                const std::vector<std::string>& outputs, const std::string& params_digest,
                const std::string& status = "ok") const;

    // Artifacts whose digest differs from the manifest (or that are missing).
    std::vector<std::string> verify() const;

private:
    std::string digest_of(const std::string& entry) const;
    fs::path resolve(const std::string& entry) const;

    fs::path root_;
};

}  // namespace beyondrec
