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

#include "beyondrec/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace beyondrec {

std::vector<ItemId> RankedList::top(std::size_t k) const {
    return std::vector<ItemId>(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(std::min(k, items.size())));
}

RankedList sort_ranked(const UserId& user, std::vector<std::pair<ItemId, double>> scored) {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    RankedList out;
    out.user = user;
    for (auto& [item, score] : scored) {
        out.items.push_back(std::move(item));
        out.scores.push_back(score);
    }
    return out;
}

RankedList mostpop_rank(const CandidatePool& pool, const PopularityTable& pop) {
    std::vector<std::pair<ItemId, double>> scored;
    scored.reserve(pool.items.size());
    for (const auto& item : pool.items) {
        scored.emplace_back(item, static_cast<double>(pop.popularity(item)));
    }
    return sort_ranked(pool.user, std::move(scored));
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (unsigned char c : text) {
        const bool keep = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (keep) {
            current.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

Bm25Corpus::Bm25Corpus(const std::vector<std::vector<std::string>>& documents) {
    n_docs_ = documents.size();
    double total = 0.0;
    for (const auto& doc : documents) {
        total += static_cast<double>(doc.size());
        std::set<std::string_view> distinct(doc.begin(), doc.end());
        for (auto term : distinct) ++df_[std::string(term)];
    }
    avg_len_ = n_docs_ == 0 ? 0.0 : total / static_cast<double>(n_docs_);
}

Bm25Corpus Bm25Corpus::from_histories(const std::map<UserId, std::vector<ItemId>>& histories,
                                      const Catalog& catalog) {
    std::vector<std::vector<std::string>> documents;
    documents.reserve(histories.size());
    for (const auto& [user, items] : histories) {
        std::vector<std::string> doc;
        for (const auto& item : items) {
            auto tokens = tokenize(catalog.at(item));
            doc.insert(doc.end(), tokens.begin(), tokens.end());
        }
        documents.push_back(std::move(doc));
    }
    return Bm25Corpus(documents);
}

std::size_t Bm25Corpus::document_frequency(const std::string& term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

double Bm25Corpus::idf(const std::string& term) const {
    const double n = static_cast<double>(n_docs_);
    const double df = static_cast<double>(document_frequency(term));
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double bm25_score(std::span<const std::string> query_tokens,
                  std::span<const std::string> document_tokens, const Bm25Corpus& corpus,
                  const Bm25Params& params) {
    if (document_tokens.empty()) return 0.0;
    std::unordered_map<std::string_view, double> tf;
    for (const auto& t : document_tokens) tf[t] += 1.0;
    const double doc_len = static_cast<double>(document_tokens.size());
    const double avg = corpus.average_length() > 0.0 ? corpus.average_length() : doc_len;
    const double norm = params.k1 * (1.0 - params.b + params.b * doc_len / avg);
    double score = 0.0;
    // Every query token occurrence contributes (repeated tokens count again).
    for (const auto& term : query_tokens) {
        auto it = tf.find(term);
        if (it == tf.end()) continue;
        const double f = it->second;
        score += corpus.idf(term) * f * (params.k1 + 1.0) / (f + norm);
    }
    return score;
}

RankedList bm25_rank(const CandidatePool& pool, std::span<const std::string> history_titles,
                     const Catalog& catalog, const Bm25Corpus& corpus, const Bm25Params& params) {
    if (params.k1 <= 0.0 || params.b < 0.0 || params.b > 1.0) {
        throw PreconditionError("bm25: need k1 > 0 and 0 <= b <= 1");
    }
    std::vector<std::string> document;
    for (const auto& title : history_titles) {
        auto tokens = tokenize(title);
        document.insert(document.end(), tokens.begin(), tokens.end());
    }
    std::vector<std::pair<ItemId, double>> scored;
    scored.reserve(pool.items.size());
    for (const auto& item : pool.items) {
        auto it = catalog.find(item);
        const auto query = it == catalog.end() ? std::vector<std::string>{} : tokenize(it->second);
        scored.emplace_back(item, bm25_score(query, document, corpus, params));
    }
    return sort_ranked(pool.user, std::move(scored));
}

}  // namespace beyondrec
