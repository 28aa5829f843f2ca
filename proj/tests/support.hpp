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

// Synthetic datasets and scratch directories shared by the test binaries.

#include <string>
#include <vector>

#include "beyondrec/corpus.hpp"
#include "beyondrec/util.hpp"

namespace beyondrec::testing {

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

struct SyntheticSpec {
    std::size_t users = 200;
    std::size_t items = 80;
    std::size_t min_length = 5;
    std::size_t max_length = 15;
    double zipf = 1.0;  // item popularity exponent
    std::uint64_t seed = 7;
};

// Titles are three words from a small vocabulary plus the item number, so
// they are distinct and share tokens within a theme.
Catalog synthetic_catalog(std::size_t items);

// Each user draws distinct items with Zipf-like weights, mostly from one theme.
InteractionLog synthetic_log(const SyntheticSpec& spec);

SplitDataset synthetic_split(const SyntheticSpec& spec);

// Writes catalog.jsonl, interactions.jsonl and a config.json pointing at them.
void write_dataset(const InteractionLog& log, const fs::path& dir, const json& config_overrides);

}  // namespace beyondrec::testing
