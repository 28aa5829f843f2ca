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


#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "beyondrec/candidates.hpp"
#include "support.hpp"

using namespace beyondrec;
using beyondrec::testing::TempDir;

namespace {

// Chi-square critical value at p = 0.01 with 19 degrees of freedom.
constexpr double kChi2Crit19 = 36.191;

SplitDataset toy_split(std::size_t catalog_size, std::size_t history) {
    SplitDataset split;
    for (std::size_t i = 0; i < catalog_size; ++i) {
        const auto id = "i" + std::to_string(100 + i);
        split.catalog[id] = "Title " + id;
    }
    UserSplit us;
    for (std::size_t i = 0; i <= history; ++i) us.history.push_back("i" + std::to_string(100 + i));
    us.test = us.history.back();
    us.valid = us.history[us.history.size() - 2];
    us.train.assign(us.history.begin(), us.history.end() - 2);
    split.users["u"] = us;
    return split;
}

RunFile run_of(const std::string& name, const UserId& user, std::vector<ItemId> items) {
    RunFile run;
    run.model_name = name;
    run.lists[user].items = std::move(items);
    return run;
}

std::multiset<ItemId> multiset_of(const CandidatePool& pool) { return {pool.items.begin(), pool.items.end()}; }

}  // namespace

TEST_CASE("ranking pool structure") {
    const auto split = testing::synthetic_split({});
    for (const auto& user : split.user_ids()) {
        const auto pool = build_ranking_pool(user, split, 19, derive_seed(1, user));
        const auto& us = split.at(user);
        REQUIRE(pool.items.size() == 20);
        CHECK(std::count(pool.items.begin(), pool.items.end(), us.test) == 1);
        CHECK(pool.positive_index == std::optional<std::size_t>(19));
        CHECK(std::set<ItemId>(pool.items.begin(), pool.items.end()).size() == 20);
        for (const auto& item : us.before_test()) {
            if (item == us.test) continue;
            CHECK(std::find(pool.items.begin(), pool.items.end(), item) == pool.items.end());
        }
        CHECK(pool == build_ranking_pool(user, split, 19, derive_seed(1, user)));
    }
}

TEST_CASE("ranking pool boundaries") {
    const auto split = toy_split(25, 10);
    const auto single = build_ranking_pool("u", split, 0, 3);
    CHECK(single.items == std::vector<ItemId>{split.at("u").test});
    CHECK(build_ranking_pool("u", split, 14, 3).items.size() == 15);
    CHECK_THROWS_AS(build_ranking_pool("u", split, 19, 3), PreconditionError);
    CHECK_THROWS_AS(build_ranking_pool("nobody", split, 1, 3), PreconditionError);
}

TEST_CASE("negatives are uniform over the eligible items") {
    // Both sampling branches: dense (rejection) and sparse (explicit list).
    for (std::size_t catalog_size : {200u, 40u}) {
        const auto split = toy_split(catalog_size, 10);
        const auto items = catalog_items(split.catalog);
        std::map<ItemId, int> counts;
        constexpr int trials = 4000;
        for (int s = 0; s < trials; ++s)
            for (const auto& item : build_ranking_pool("u", split, items, 5, static_cast<std::uint64_t>(s)).items)
                ++counts[item];
        const double eligible = static_cast<double>(catalog_size - 11);
        const double expected = trials * 5 / eligible;
        double chi2 = 0.0;
        std::size_t bins = 0;
        for (const auto& item : items) {
            if (item == split.at("u").test) continue;
            const double c = counts.count(item) ? counts[item] : 0.0;
            const auto& before = split.at("u").before_test();
            if (std::find(before.begin(), before.end(), item) != before.end()) {
                CHECK(c == 0.0);
                continue;
            }
            chi2 += (c - expected) * (c - expected) / expected;
            ++bins;
        }
        CHECK(bins == catalog_size - 11);
        // Loose bound: mean of chi-square is the bin count, sd sqrt(2 bins).
        CHECK(chi2 < static_cast<double>(bins) + 5.0 * std::sqrt(2.0 * static_cast<double>(bins)));
    }
}

TEST_CASE("rerank pool round robin") {
    const std::vector<ItemId> same{"a", "b", "c", "d", "e"};
    std::vector<RunFile> overlapping;
    for (int m = 0; m < 4; ++m) {
        auto items = same;
        std::rotate(items.begin(), items.begin() + m, items.end());
        overlapping.push_back(run_of("m" + std::to_string(m), "u", items));
    }
    const auto pool = build_rerank_pool("u", "c", overlapping, 20);
    CHECK(pool.items.size() == 5);
    CHECK(pool.positive_index == std::optional<std::size_t>(2));

    const std::vector<RunFile> same_order(4, run_of("m", "u", same));
    CHECK(build_rerank_pool("u", "x", same_order, 20).items == same);
    CHECK_FALSE(build_rerank_pool("u", "x", same_order, 20).contains_positive());

    std::vector<RunFile> disjoint;
    for (int m = 0; m < 4; ++m) {
        std::vector<ItemId> items;
        for (int r = 0; r < 5; ++r) items.push_back(std::string(1, static_cast<char>('a' + m)) + std::to_string(r));
        disjoint.push_back(run_of("m" + std::to_string(m), "u", items));
    }
    const auto interleaved = build_rerank_pool("u", "a0", disjoint, 20);
    REQUIRE(interleaved.items.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(interleaved.items[i] == std::string(1, static_cast<char>('a' + i % 4)) + std::to_string(i / 4));
    }
    CHECK(build_rerank_pool("u", "a0", disjoint, 6).items.size() == 6);
    CHECK_THROWS_AS(build_rerank_pool("v", "a0", disjoint, 20), PreconditionError);
}

TEST_CASE("rerank pool items come from runs at their round-robin depth") {
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<RunFile> runs;
        const std::size_t models = 1 + rng.uniform_index(4);
        for (std::size_t m = 0; m < models; ++m) {
            std::vector<ItemId> universe;
            for (int i = 0; i < 15; ++i) universe.push_back("x" + std::to_string(i));
            rng.shuffle(std::span<ItemId>(universe));
            universe.resize(1 + rng.uniform_index(12));
            runs.push_back(run_of("m" + std::to_string(m), "u", universe));
        }
        const std::size_t size = 1 + rng.uniform_index(20);
        const auto pool = build_rerank_pool("u", "x0", runs, size);
        std::set<ItemId> unique(pool.items.begin(), pool.items.end());
        CHECK(unique.size() == pool.items.size());
        CHECK(pool.items.size() <= size);
        std::set<ItemId> all;
        for (const auto& r : runs) all.insert(r.lists.at("u").items.begin(), r.lists.at("u").items.end());
        CHECK(pool.items.size() == std::min(size, all.size()));
        for (std::size_t pos = 0; pos < pool.items.size(); ++pos) {
            // Round r of the interleaving can only reach rank r + (items pooled so far).
            bool found = false;
            for (const auto& r : runs) {
                const auto& list = r.lists.at("u").items;
                auto it = std::find(list.begin(), list.end(), pool.items[pos]);
                if (it != list.end() && static_cast<std::size_t>(it - list.begin()) <= pos) found = true;
            }
            CHECK(found);
        }
        CHECK(pool.contains_positive() == (std::find(pool.items.begin(), pool.items.end(), "x0") != pool.items.end()));
    }
}

TEST_CASE("arrangement") {
    const auto split = testing::synthetic_split({});
    const auto base = build_ranking_pool(split.user_ids().front(), split, 19, 5);
    const auto first = arrange_pool(base, PositiveFirst{});
    CHECK(first.positive_index == std::optional<std::size_t>(0));
    CHECK(first.items.front() == base.positive_item);
    CHECK(multiset_of(first) == multiset_of(base));
    const auto at7 = arrange_pool(base, PositiveAt{7});
    CHECK(at7.items[7] == base.positive_item);
    CHECK(multiset_of(at7) == multiset_of(base));
    CHECK_THROWS_AS(arrange_pool(base, PositiveAt{20}), PreconditionError);

    const auto s1 = arrange_pool(base, Shuffled{42});
    CHECK(s1 == arrange_pool(base, Shuffled{42}));
    CHECK(multiset_of(s1) == multiset_of(base));
    CHECK(s1.items[*s1.positive_index] == base.positive_item);
    CHECK(describe(Shuffled{42}) == "shuffled(42)");
    CHECK(describe(PositiveFirst{}) == "positive_first");

    CandidatePool missing = base;
    missing.items.pop_back();
    refresh_positive_index(missing);
    CHECK_FALSE(missing.contains_positive());
    CHECK_THROWS_AS(arrange_pool(missing, PositiveFirst{}), PreconditionError);
}

TEST_CASE("shuffled positions are uniform") {
    testing::SyntheticSpec spec;
    spec.users = 1000;
    spec.items = 120;
    const auto split = testing::synthetic_split(spec);
    std::vector<int> counts(20, 0);
    for (const auto& user : split.user_ids()) {
        const auto pool = build_ranking_pool(user, split, 19, derive_seed(1, user));
        const auto arranged = arrange_pool(pool, Shuffled{derive_seed(2, user)});
        ++counts[*arranged.positive_index];
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 50.0) * (c - 50.0) / 50.0;
    CHECK(chi2 < kChi2Crit19);
}

TEST_CASE("pool and run file persistence") {
    TempDir dir;
    const auto split = testing::synthetic_split({});
    std::vector<CandidatePool> pools;
    for (const auto& user : split.user_ids()) pools.push_back(build_ranking_pool(user, split, 19, 3));
    pools.push_back(build_rerank_pool("zz", "nope", std::vector<RunFile>{run_of("m", "zz", {"a", "b"})}, 20));
    save_pools(pools, dir / "pools.jsonl");
    CHECK(load_pools(dir / "pools.jsonl") == pools);

    RunFile run = run_of("SASRec", "u1", {"a", "b", "c"});
    run.lists["u1"].scores = {3.0, 2.0, 1.0};
    save_run_file(run, dir / "sasrec.jsonl");
    const auto back = load_run_file(dir / "sasrec.jsonl");
    CHECK(back.model_name == "SASRec");
    CHECK(back.lists.at("u1").items == run.lists.at("u1").items);
    CHECK(back.lists.at("u1").scores == run.lists.at("u1").scores);

    write_file_atomic(dir / "bpr.jsonl", "{\"user\":\"u\",\"items\":[\"a\",\"b\"]}\n");
    CHECK(load_run_file(dir / "bpr.jsonl").model_name == "bpr");
    write_file_atomic(dir / "dup.jsonl", "{\"user\":\"u\",\"items\":[\"a\",\"a\"]}\n");
    CHECK_THROWS_AS(load_run_file(dir / "dup.jsonl"), ParseError);
    CHECK(parse_provenance(to_string(Provenance::rerank)) == Provenance::rerank);
}
