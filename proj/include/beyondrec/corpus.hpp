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

// Interaction data: loading, k-core filtering, leave-one-out splitting,
// history truncation and popularity statistics.

#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "beyondrec/util.hpp"

namespace beyondrec {

using ItemId = std::string;
using UserId = std::string;
using Catalog = std::map<ItemId, std::string>;  // item -> title

struct Interaction {
    UserId user;
    ItemId item;
    std::int64_t ts = 0;

    bool operator==(const Interaction&) const = default;
};

enum class LogFormat { jsonl, tsv };

LogFormat parse_log_format(const std::string& name);
const char* to_string(LogFormat format);

struct InteractionLog {
    std::vector<Interaction> interactions;
    Catalog catalog;

    std::size_t user_count() const;
    std::size_t item_count() const { return catalog.size(); }
    // |interactions| / (|users| * |items|)
    double density() const;

    bool operator==(const InteractionLog&) const = default;
};

// Catalog file: JSONL records {"item": ..., "title": ...}.
Catalog load_catalog(const fs::path& path);
void save_catalog(const Catalog& catalog, const fs::path& path);

// Records referencing items outside the catalog are rejected with the line
// number. Re-interactions (duplicate triples) are kept.
InteractionLog load_interactions(const fs::path& path, LogFormat format,
                                 const fs::path& catalog_path);
InteractionLog load_interactions(const fs::path& path, LogFormat format, Catalog catalog);
void save_interactions(const InteractionLog& log, const fs::path& path, LogFormat format);

// Iteratively drops users and items with fewer than k interactions until
// nothing changes. Throws PreconditionError when nothing survives.
InteractionLog k_core_filter(const InteractionLog& log, int k);

struct UserSplit {
    std::vector<ItemId> history;  // full chronological sequence, test item last
    std::vector<ItemId> train;
    ItemId valid;
    ItemId test;

    // Everything strictly before the test interaction (train + valid).
    std::vector<ItemId> before_test() const;
};

struct SplitDataset {
    std::map<UserId, UserSplit> users;
    Catalog catalog;

    const UserSplit& at(const UserId& user) const;
    std::vector<UserId> user_ids() const;
};

// Per user, ordered by (timestamp, item id): last -> test, second-to-last ->
// valid, rest -> train. Users with fewer than 3 interactions are an error.
SplitDataset leave_one_out_split(const InteractionLog& log);

inline constexpr std::size_t kFullHistory = std::numeric_limits<std::size_t>::max();

struct TrainingSample {
    UserId user;
    std::vector<ItemId> history;
    ItemId target;

    bool operator==(const TrainingSample&) const = default;
};

// Sequential training samples (u, prefix, item) for every non-test position.
std::vector<TrainingSample> training_samples(const SplitDataset& split);

struct TruncatedData {
    std::map<UserId, std::vector<ItemId>> eval_histories;
    std::vector<TrainingSample> reduced_train;
};

// eval_histories[u] holds the last `length` items before the test item.
// reduced_train keeps the training samples whose target lies in that window,
// with each sample's history intersected with the window.
TruncatedData truncate_for_length(const SplitDataset& split, std::size_t length);

std::vector<ItemId> last_n(const std::vector<ItemId>& items, std::size_t n);

struct PopularityTable {
    std::map<ItemId, std::int64_t> pop;          // interactions in the train split
    std::map<ItemId, std::int64_t> user_counts;  // distinct users over the full log
    std::set<ItemId> long_tail;                  // bottom 80% of the catalog by pop
    std::size_t n_users = 0;

    std::int64_t popularity(const ItemId& item) const;
    std::int64_t users_of(const ItemId& item) const;
    bool is_long_tail(const ItemId& item) const { return long_tail.count(item) > 0; }
};

PopularityTable popularity_table(const SplitDataset& split);

json to_json(const PopularityTable& table);
PopularityTable popularity_from_json(const json& j);

// Split persistence: one JSONL record per user.
void save_split(const SplitDataset& split, const fs::path& path);
SplitDataset load_split(const fs::path& path, Catalog catalog);

}  // namespace beyondrec
