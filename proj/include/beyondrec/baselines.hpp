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

// Non-neural reference rankers: popularity order and BM25 over titles.

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "beyondrec/candidates.hpp"
#include "beyondrec/corpus.hpp"

namespace beyondrec {

struct RankedList {
    UserId user;
    std::vector<ItemId> items;  // descending score
    std::vector<double> scores;

    std::vector<ItemId> top(std::size_t k) const;
};

// Descending train popularity, ties by item id. Items absent from the table
// count as 0.
RankedList mostpop_rank(const CandidatePool& pool, const PopularityTable& pop);

// Lowercase, split on runs of non-alphanumeric ASCII. Bytes >= 0x80 are kept
// inside tokens so UTF-8 letters survive.
std::vector<std::string> tokenize(std::string_view text);

// Document-frequency statistics over all users' history documents.
class Bm25Corpus {
public:
    Bm25Corpus() = default;
    explicit Bm25Corpus(const std::vector<std::vector<std::string>>& documents);

    // Documents are the concatenated titles of each user's history.
    static Bm25Corpus from_histories(const std::map<UserId, std::vector<ItemId>>& histories,
                                     const Catalog& catalog);

    std::size_t document_count() const { return n_docs_; }
    double average_length() const { return avg_len_; }
    std::size_t document_frequency(const std::string& term) const;
    // ln((N - df + 0.5) / (df + 0.5) + 1)
    double idf(const std::string& term) const;

private:
    std::size_t n_docs_ = 0;
    double avg_len_ = 0.0;
    std::unordered_map<std::string, std::size_t> df_;
};

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

// Score of one query (candidate title tokens) against one document.
double bm25_score(std::span<const std::string> query_tokens,
                  std::span<const std::string> document_tokens, const Bm25Corpus& corpus,
                  const Bm25Params& params);

// Candidates are queries, the user's history is the document.
RankedList bm25_rank(const CandidatePool& pool, std::span<const std::string> history_titles,
                     const Catalog& catalog, const Bm25Corpus& corpus,
                     const Bm25Params& params = {});

// Orders by (score desc, item id asc).
RankedList sort_ranked(const UserId& user, std::vector<std::pair<ItemId, double>> scored);

}  // namespace beyondrec
