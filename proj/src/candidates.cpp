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

#include "beyondrec/candidates.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace beyondrec {

const char* to_string(Provenance p) {
    return p == Provenance::ranking ? "ranking" : "rerank";
}

Provenance parse_provenance(const std::string& name) {
    if (name == "ranking") return Provenance::ranking;
    if (name == "rerank") return Provenance::rerank;
    throw UsageError("unknown provenance '" + name + "'");
}

json to_json(const CandidatePool& pool) {
    json j{{"user", pool.user},
           {"positive_item", pool.positive_item},
           {"items", pool.items},
           {"positive_index", nullptr},
           {"provenance", to_string(pool.provenance)},
           {"seed", pool.seed}};
    if (pool.positive_index) j["positive_index"] = *pool.positive_index;
    return j;
}

CandidatePool pool_from_json(const json& j) {
    CandidatePool pool;
    pool.user = j.at("user").get<UserId>();
    pool.positive_item = j.at("positive_item").get<ItemId>();
    pool.items = j.at("items").get<std::vector<ItemId>>();
    if (!j.at("positive_index").is_null()) pool.positive_index = j.at("positive_index").get<std::size_t>();
    pool.provenance = parse_provenance(j.at("provenance").get<std::string>());
    pool.seed = j.at("seed").get<std::uint64_t>();
    return pool;
}

void save_pools(std::span<const CandidatePool> pools, const fs::path& path) {
    std::vector<json> records;
    records.reserve(pools.size());
    for (const auto& pool : pools) records.push_back(to_json(pool));
    write_jsonl(path, records);
}

std::vector<CandidatePool> load_pools(const fs::path& path) {
    std::vector<CandidatePool> pools;
    std::size_t line = 0;
    for (const auto& record : read_jsonl(path)) {
        ++line;
        try {
            pools.push_back(pool_from_json(record));
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line, e.what());
        }
    }
    return pools;
}

RunFile load_run_file(const fs::path& path) {
    RunFile run;
    run.model_name = path.stem().string();
    std::size_t line = 0;
    for (const auto& record : read_jsonl(path)) {
        ++line;
        try {
            if (record.contains("model")) run.model_name = record.at("model").get<std::string>();
            const auto user = record.at("user").get<UserId>();
            RunFile::Entry entry;
            entry.items = record.at("items").get<std::vector<ItemId>>();
            if (record.contains("scores")) entry.scores = record.at("scores").get<std::vector<double>>();
            std::unordered_set<std::string_view> seen;
            for (const auto& item : entry.items) {
                if (!seen.insert(item).second) {
                    throw ParseError(path.string(), line, "duplicate item '" + item + "' in ranked list");
                }
            }
            if (!entry.scores.empty() && entry.scores.size() != entry.items.size()) {
                throw ParseError(path.string(), line, "scores and items differ in length");
            }
            run.lists[user] = std::move(entry);
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line, e.what());
        }
    }
    return run;
}

void save_run_file(const RunFile& run, const fs::path& path) {
    std::vector<json> records;
    for (const auto& [user, entry] : run.lists) {
        records.push_back({{"model", run.model_name},
                           {"user", user},
                           {"items", entry.items},
                           {"scores", entry.scores}});
    }
    write_jsonl(path, records);
}

std::vector<ItemId> catalog_items(const Catalog& catalog) {
    std::vector<ItemId> ids;
    ids.reserve(catalog.size());
    for (const auto& [item, _] : catalog) ids.push_back(item);
    return ids;
}

CandidatePool build_ranking_pool(const UserId& user, const SplitDataset& split, std::size_t m,
                                 std::uint64_t seed) {
    const std::vector<ItemId> items = catalog_items(split.catalog);
    return build_ranking_pool(user, split, items, m, seed);
}

CandidatePool build_ranking_pool(const UserId& user, const SplitDataset& split,
                                 std::span<const ItemId> items, std::size_t m,
                                 std::uint64_t seed) {
    const UserSplit& us = split.at(user);

    std::unordered_set<std::string_view> excluded;
    for (const auto& item : us.before_test()) excluded.insert(item);
    excluded.insert(us.test);
    std::size_t excluded_in_catalog = 0;
    for (const auto& item : excluded) {
        if (split.catalog.count(std::string(item))) ++excluded_in_catalog;
    }
    const std::size_t eligible = items.size() - excluded_in_catalog;
    if (eligible < m) {
        throw PreconditionError("user '" + user + "': only " + std::to_string(eligible) +
                                " eligible negatives, need " + std::to_string(m));
    }

    CandidatePool pool;
    pool.user = user;
    pool.positive_item = us.test;
    pool.provenance = Provenance::ranking;
    pool.seed = seed;

    Rng rng(seed);
    if (eligible >= 4 * m) {
        // Rejection sampling over the sorted catalog; uniform over the eligible set.
        std::unordered_set<std::string_view> chosen;
        while (pool.items.size() < m) {
            const ItemId& candidate = items[rng.uniform_index(items.size())];
            if (excluded.count(candidate) || chosen.count(candidate)) continue;
            chosen.insert(candidate);
            pool.items.push_back(candidate);
        }
    } else {
        std::vector<ItemId> allowed;
        allowed.reserve(eligible);
        for (const auto& item : items) {
            if (!excluded.count(item)) allowed.push_back(item);
        }
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t j = i + rng.uniform_index(allowed.size() - i);
            std::swap(allowed[i], allowed[j]);
            pool.items.push_back(allowed[i]);
        }
    }
    pool.items.push_back(us.test);
    pool.positive_index = pool.items.size() - 1;
    return pool;
}

CandidatePool build_rerank_pool(const UserId& user, const ItemId& positive,
                                std::span<const RunFile> runs, std::size_t size) {
    std::vector<const RunFile::Entry*> lists;
    for (const auto& run : runs) {
        auto it = run.lists.find(user);
        if (it != run.lists.end()) lists.push_back(&it->second);
    }
    if (lists.empty()) throw PreconditionError("user '" + user + "' is missing from every run file");

    CandidatePool pool;
    pool.user = user;
    pool.positive_item = positive;
    pool.provenance = Provenance::rerank;

    std::unordered_set<std::string_view> seen;
    std::vector<std::size_t> cursor(lists.size(), 0);
    bool progressed = true;
    while (pool.items.size() < size && progressed) {
        progressed = false;
        for (std::size_t r = 0; r < lists.size() && pool.items.size() < size; ++r) {
            const auto& ranked = lists[r]->items;
            // Each model contributes its next-ranked item not already pooled.
            while (cursor[r] < ranked.size() && seen.count(ranked[cursor[r]])) ++cursor[r];
            if (cursor[r] >= ranked.size()) continue;
            seen.insert(ranked[cursor[r]]);
            pool.items.push_back(ranked[cursor[r]]);
            ++cursor[r];
            progressed = true;
        }
    }
    refresh_positive_index(pool);
    return pool;
}

std::string describe(const Placement& placement) {
    if (const auto* s = std::get_if<Shuffled>(&placement)) {
        return "shuffled(" + std::to_string(s->seed) + ")";
    }
    if (std::holds_alternative<PositiveFirst>(placement)) return "positive_first";
    return "positive_at(" + std::to_string(std::get<PositiveAt>(placement).index) + ")";
}

void refresh_positive_index(CandidatePool& pool) {
    pool.positive_index.reset();
    for (std::size_t i = 0; i < pool.items.size(); ++i) {
        if (pool.items[i] == pool.positive_item) {
            pool.positive_index = i;
            break;
        }
    }
}

namespace {

CandidatePool move_positive(const CandidatePool& pool, std::size_t target) {
    if (!pool.positive_index) {
        throw PreconditionError("pool for user '" + pool.user + "' does not contain the positive item");
    }
    if (target >= pool.items.size()) {
        throw PreconditionError("positive_at(" + std::to_string(target) + ") outside a pool of " +
                                std::to_string(pool.items.size()));
    }
    CandidatePool out = pool;
    out.items.erase(out.items.begin() + static_cast<std::ptrdiff_t>(*pool.positive_index));
    out.items.insert(out.items.begin() + static_cast<std::ptrdiff_t>(target), pool.positive_item);
    out.positive_index = target;
    return out;
}

}  // namespace

CandidatePool arrange_pool(const CandidatePool& pool, const Placement& placement) {
    if (const auto* shuffled = std::get_if<Shuffled>(&placement)) {
        CandidatePool out = pool;
        Rng rng(shuffled->seed);
        rng.shuffle(std::span<ItemId>(out.items));
        out.seed = shuffled->seed;
        refresh_positive_index(out);
        return out;
    }
    if (std::holds_alternative<PositiveFirst>(placement)) return move_positive(pool, 0);
    return move_positive(pool, std::get<PositiveAt>(placement).index);
}

}  // namespace beyondrec
