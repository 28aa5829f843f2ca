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

// Extraction of ranked titles from free-text responses and exact matching
// of those titles against pool and catalog under a canonical form.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beyondrec/candidates.hpp"
#include "beyondrec/corpus.hpp"

namespace beyondrec {

// Lowercase, no whitespace, no punctuation; non-ASCII letters are kept.
std::string normalize_title(std::string_view title);

// Up to K titles from a response, in order. Empty when nothing is
// extractable.
std::vector<std::string> parse_ranked_list(const std::string& response, std::size_t k);

enum class MatchScope { in_pool, in_catalog_only, unmatched };

const char* to_string(MatchScope scope);
MatchScope parse_match_scope(const std::string& name);

struct MatchEntry {
    std::string raw_title;
    std::optional<ItemId> item;
    MatchScope scope = MatchScope::unmatched;

    bool operator==(const MatchEntry&) const = default;
};

struct MatchedRecommendation {
    UserId user;
    std::vector<MatchEntry> entries;
    std::size_t k = 0;
    bool parse_failed = false;

    // Items matched inside the pool, with their 1-based rank.
    std::vector<std::pair<ItemId, std::size_t>> ranked_pool_items() const;
    std::size_t unmatched_count() const;

    bool operator==(const MatchedRecommendation&) const = default;
};

json to_json(const MatchedRecommendation& rec);
MatchedRecommendation matched_from_json(const json& j);
void save_matched(std::span<const MatchedRecommendation> recs, const fs::path& path);
std::vector<MatchedRecommendation> load_matched(const fs::path& path);

// Canonical title -> item ids. Built once per catalog.
class TitleIndex {
public:
    explicit TitleIndex(const Catalog& catalog);

    // Smallest item id with this canonical title, preferring ids in `prefer`.
    std::optional<ItemId> lookup(const std::string& canonical,
                                 const std::vector<ItemId>* prefer = nullptr) const;

private:
    std::map<std::string, std::vector<ItemId>> by_title_;
};

// Pool first, then catalog. Titles that only match after cutting trailing
// annotations (" - ...", " (...", ": ...") are matched on the cut prefix.
// Later duplicates of an already matched item are dropped.
MatchedRecommendation match_titles(const UserId& user, std::span<const std::string> raw_titles,
                                   const CandidatePool& pool, const Catalog& catalog,
                                   const TitleIndex& index, std::size_t k);

// Convenience overload building a throwaway index.
MatchedRecommendation match_titles(const UserId& user, std::span<const std::string> raw_titles,
                                   const CandidatePool& pool, const Catalog& catalog, std::size_t k);

// Matched recommendation for a ranked id list from a non-text recommender.
MatchedRecommendation from_ranked_items(const UserId& user, std::span<const ItemId> items,
                                        const CandidatePool& pool, const Catalog& catalog,
                                        std::size_t k);

}  // namespace beyondrec
