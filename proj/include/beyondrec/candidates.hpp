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

// Candidate pools for the ranking and re-ranking tasks, and control over the
// order in which candidates are presented.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "beyondrec/corpus.hpp"

namespace beyondrec {

enum class Provenance { ranking, rerank };

const char* to_string(Provenance p);
Provenance parse_provenance(const std::string& name);

struct CandidatePool {
    UserId user;
    ItemId positive_item;
    std::vector<ItemId> items;
    std::optional<std::size_t> positive_index;  // absent when the positive is not in items
    Provenance provenance = Provenance::ranking;
    std::uint64_t seed = 0;

    bool contains_positive() const { return positive_index.has_value(); }
    bool operator==(const CandidatePool&) const = default;
};

json to_json(const CandidatePool& pool);
CandidatePool pool_from_json(const json& j);
void save_pools(std::span<const CandidatePool> pools, const fs::path& path);
std::vector<CandidatePool> load_pools(const fs::path& path);

// Ranked output of one model (external recall model or in-repo baseline).
struct RunFile {
    std::string model_name;
    struct Entry {
        std::vector<ItemId> items;
        std::vector<double> scores;
    };
    std::map<UserId, Entry> lists;
};

// JSONL, one record per user: {"user", "items", "scores"}. The model name
// is taken from a "model" field if present, otherwise from the file stem.
RunFile load_run_file(const fs::path& path);
void save_run_file(const RunFile& run, const fs::path& path);

// m negatives drawn uniformly without replacement from catalog \ (history ∪ {y});
// the positive is appended last.
CandidatePool build_ranking_pool(const UserId& user, const SplitDataset& split, std::size_t m,
                                 std::uint64_t seed);
// Same, with the sorted catalog item ids precomputed by the caller.
CandidatePool build_ranking_pool(const UserId& user, const SplitDataset& split,
                                 std::span<const ItemId> sorted_items, std::size_t m,
                                 std::uint64_t seed);
std::vector<ItemId> catalog_items(const Catalog& catalog);

// Round-robin over the run files in order, taking each model's next unseen
// item until `size` unique items are collected or all lists are exhausted.
CandidatePool build_rerank_pool(const UserId& user, const ItemId& positive,
                                std::span<const RunFile> runs, std::size_t size);

struct Shuffled {
    std::uint64_t seed = 0;
};
struct PositiveFirst {};
struct PositiveAt {
    std::size_t index = 0;
};
using Placement = std::variant<Shuffled, PositiveFirst, PositiveAt>;

std::string describe(const Placement& placement);

CandidatePool arrange_pool(const CandidatePool& pool, const Placement& placement);

// Recomputes positive_index from items.
void refresh_positive_index(CandidatePool& pool);

}  // namespace beyondrec
