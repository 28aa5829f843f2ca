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

#include <set>

#include "beyondrec/metrics.hpp"
#include "beyondrec/parsing.hpp"
#include "support.hpp"

using namespace beyondrec;
using beyondrec::testing::TempDir;

namespace {

CandidatePool pool_of(std::vector<ItemId> items, const ItemId& positive) {
    CandidatePool pool;
    pool.user = "u";
    pool.positive_item = positive;
    pool.items = std::move(items);
    refresh_positive_index(pool);
    return pool;
}

const Catalog kCatalog{{"a1", "CeraVe Moisturizing Cream, 16 oz"},
                       {"a2", "Mint Lip Balm"},
                       {"a3", "Rose Water Toner"},
                       {"a4", "Charcoal Face Mask"},
                       {"a5", "Argan Oil Shampoo"},
                       {"a6", "Tea Tree Face Wash"},
                       {"a7", "Vitamin C Serum"}};

}  // namespace

TEST_CASE("normalization") {
    CHECK(normalize_title("CeraVe Moisturizing Cream, 16 oz") == "ceravemoisturizingcream16oz");
    CHECK(normalize_title("").empty());
    CHECK(normalize_title("A-B  c!") == normalize_title("abc"));
    CHECK(normalize_title("Crème BRÛLÉE “Deluxe”") == "crèmebrûléedeluxe");
    CHECK(normalize_title("Ελληνικά ΣΑΠΟΥΝΙ") == "ελληνικάσαπουνι");
    CHECK(normalize_title("Tea Tree™ Oil \U0001F33F") == "teatreeoil");
}

TEST_CASE("normalization is idempotent") {
    Rng rng(6);
    const std::vector<std::string> pieces{"A", "b", " ", "-", "é", "É", "1", "!", "“", "ß", "\t", "Ω", "漢", "\xff"};
    for (int t = 0; t < 2000; ++t) {
        std::string s;
        const auto n = rng.uniform_index(12);
        for (std::size_t i = 0; i < n; ++i) s += pieces[rng.uniform_index(pieces.size())];
        const auto once = normalize_title(s);
        CHECK(normalize_title(once) == once);
    }
}

TEST_CASE("hand-labeled response corpus") {
    const json fixture = json::parse(read_file(fs::path(BEYONDREC_TEST_FIXTURES) / "parse_cases.json"));
    const auto& cases = fixture.at("cases");
    CHECK(cases.size() >= 50);
    for (const auto& c : cases) {
        INFO(c.at("name").get<std::string>());
        const auto got = parse_ranked_list(c.at("response").get<std::string>(), c.at("k").get<std::size_t>());
        CHECK(got == c.at("expected").get<std::vector<std::string>>());
    }
}

TEST_CASE("basic parse examples") {
    CHECK(parse_ranked_list("1. A\n2. B\n3. C", 5) == std::vector<std::string>{"A", "B", "C"});
    CHECK(parse_ranked_list("Here you go.\n1. A\n2. B", 5) == std::vector<std::string>{"A", "B"});
    CHECK(parse_ranked_list("1. A\n2. B", 0).empty());
}

TEST_CASE("matching scopes") {
    const auto pool = pool_of({"a1", "a2", "a3"}, "a1");
    const std::vector<std::string> raw{"Cerave moisturizing cream 16oz", "Argan Oil Shampoo", "Lunar Glow Elixir",
                                       "MINT LIP-BALM", "Rose Water Toner - refreshing pick"};
    const auto rec = match_titles("u", raw, pool, kCatalog, 5);
    REQUIRE(rec.entries.size() == 5);
    CHECK(rec.entries[0].item == std::optional<ItemId>("a1"));
    CHECK(rec.entries[0].scope == MatchScope::in_pool);
    CHECK(rec.entries[1].item == std::optional<ItemId>("a5"));
    CHECK(rec.entries[1].scope == MatchScope::in_catalog_only);
    CHECK_FALSE(rec.entries[2].item);
    CHECK(rec.entries[2].scope == MatchScope::unmatched);
    CHECK(rec.entries[3].scope == MatchScope::in_pool);
    CHECK(rec.entries[4].item == std::optional<ItemId>("a3"));
    CHECK(rec.entries[4].raw_title == raw[4]);
    CHECK(rec.unmatched_count() == 1);
    const std::vector<std::pair<ItemId, std::size_t>> ranked{{"a1", 1}, {"a2", 4}, {"a3", 5}};
    CHECK(rec.ranked_pool_items() == ranked);
    CHECK_FALSE(rec.parse_failed);
}

TEST_CASE("duplicates keep the first occurrence") {
    const auto pool = pool_of({"a1", "a2", "a3"}, "a1");
    const std::vector<std::string> raw{"Mint Lip Balm", "mint lip balm!", "Rose Water Toner", "Made Up", "Made Up"};
    const auto rec = match_titles("u", raw, pool, kCatalog, 5);
    REQUIRE(rec.entries.size() == 4);
    CHECK(rec.entries[1].item == std::optional<ItemId>("a3"));
    // Unmatched titles are not deduplicated: each is a separate fabricated slot.
    CHECK(rec.unmatched_count() == 2);
}

TEST_CASE("verbatim copies and one invented title") {
    const auto pool = pool_of({"a1", "a2", "a3", "a4", "a5", "a6"}, "a1");
    std::vector<std::string> raw;
    for (const auto& item : {"a6", "a5", "a4", "a3", "a2"}) raw.push_back(kCatalog.at(item));
    auto rec = match_titles("u", raw, pool, kCatalog, 5);
    CHECK(rec.entries.size() == 5);
    for (const auto& e : rec.entries) CHECK(e.scope == MatchScope::in_pool);

    EvalContext ctx;
    ctx.k = 5;
    ctx.truth["u"] = "a1";
    ctx.pools["u"] = pool;
    RecMap recs{{"u", rec}};
    CHECK(hallucination_rate(recs, ctx).mean == 0.0);
    raw[2] = "Galactic Unicorn Glitter";
    recs["u"] = match_titles("u", raw, pool, kCatalog, 5);
    CHECK(hallucination_rate(recs, ctx).mean == doctest::Approx(0.2));
}

TEST_CASE("empty extraction is a parse failure") {
    const auto pool = pool_of({"a1"}, "a1");
    const auto rec = match_titles("u", parse_ranked_list("I cannot help with that.", 5), pool, kCatalog, 5);
    CHECK(rec.parse_failed);
    CHECK(rec.entries.empty());
}

TEST_CASE("matching invariants on random responses") {
    testing::SyntheticSpec spec;
    spec.users = 60;
    const auto split = testing::synthetic_split(spec);
    const TitleIndex index(split.catalog);
    const auto items = catalog_items(split.catalog);
    Rng rng(10);
    for (const auto& user : split.user_ids()) {
        const auto pool = build_ranking_pool(user, split, 19, 1);
        std::vector<std::string> raw;
        for (int i = 0; i < 8; ++i) {
            switch (rng.uniform_index(3)) {
                case 0: raw.push_back(split.catalog.at(pool.items[rng.uniform_index(pool.items.size())])); break;
                case 1: raw.push_back(split.catalog.at(items[rng.uniform_index(items.size())])); break;
                default: raw.push_back("Invented Product " + std::to_string(rng.next() % 1000)); break;
            }
        }
        const auto rec = match_titles(user, raw, pool, split.catalog, index, 5);
        CHECK(rec.entries.size() <= 5);
        std::set<ItemId> seen;
        for (const auto& e : rec.entries) {
            if (e.item) CHECK(seen.insert(*e.item).second);
            if (e.scope == MatchScope::in_pool)
                CHECK(std::find(pool.items.begin(), pool.items.end(), *e.item) != pool.items.end());
            if (e.scope == MatchScope::in_catalog_only) {
                CHECK(split.catalog.count(*e.item));
                CHECK(std::find(pool.items.begin(), pool.items.end(), *e.item) == pool.items.end());
            }
            CHECK(e.item.has_value() == (e.scope != MatchScope::unmatched));
        }
    }
}

TEST_CASE("ranked id lists") {
    const auto pool = pool_of({"a1", "a2"}, "a1");
    const std::vector<ItemId> ids{"a2", "a2", "a7", "zz", "a1"};
    const auto rec = from_ranked_items("u", ids, pool, kCatalog, 3);
    REQUIRE(rec.entries.size() == 3);
    CHECK(rec.entries[0].scope == MatchScope::in_pool);
    CHECK(rec.entries[0].raw_title == "Mint Lip Balm");
    CHECK(rec.entries[1].scope == MatchScope::in_catalog_only);
    CHECK(rec.entries[2].scope == MatchScope::unmatched);
}

TEST_CASE("matched records round trip") {
    TempDir dir;
    const auto pool = pool_of({"a1", "a2", "a3"}, "a1");
    std::vector<MatchedRecommendation> recs{
        match_titles("u", std::vector<std::string>{"Mint Lip Balm", "Argan Oil Shampoo", "Nope"}, pool, kCatalog, 5),
        match_titles("v", std::vector<std::string>{}, pool, kCatalog, 5)};
    save_matched(recs, dir / "matched.jsonl");
    CHECK(load_matched(dir / "matched.jsonl") == recs);
    CHECK(parse_match_scope("in_catalog_only") == MatchScope::in_catalog_only);
    CHECK_THROWS_AS(parse_match_scope("fuzzy"), UsageError);
}
