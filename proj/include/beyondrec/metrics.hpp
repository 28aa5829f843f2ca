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

// Accuracy and beyond-accuracy metrics over matched recommendations.
//
// R_u is the list of in-pool matched entries of a user. Entries keep the
// rank at which they were emitted, so unmatched entries still occupy a slot.
// Every per-user metric divides by K, and aggregates are unweighted means
// over the users in EvalContext::truth.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beyondrec/candidates.hpp"
#include "beyondrec/corpus.hpp"
#include "beyondrec/parsing.hpp"

namespace beyondrec {

using RecMap = std::map<UserId, MatchedRecommendation>;
using UserValues = std::map<UserId, double>;

struct EvalContext {
    std::size_t k = 5;
    std::map<UserId, ItemId> truth;
    std::map<UserId, CandidatePool> pools;
    PopularityTable popularity;
    std::map<UserId, std::vector<ItemId>> mostpop_topk;
    std::map<UserId, std::size_t> history_lengths;
};

// Ground truth, pools and history lengths (before the test item) for `users`.
EvalContext make_context(const SplitDataset& split, const PopularityTable& popularity,
                         std::span<const CandidatePool> pools, std::size_t k);

enum class SerendipityVariant { literal, useful };
const char* to_string(SerendipityVariant v);
SerendipityVariant parse_serendipity_variant(const std::string& name);

struct UserMetric {
    UserValues per_user;
    double mean = 0.0;
};

// Users without a recommendation score as an empty list; their ids are
// appended to `warnings` when provided.
UserMetric hit_rate(const RecMap& recs, const EvalContext& ctx, std::vector<std::string>* warnings = nullptr);
UserMetric ndcg(const RecMap& recs, const EvalContext& ctx, std::vector<std::string>* warnings = nullptr);
UserMetric aplt(const RecMap& recs, const EvalContext& ctx);
UserMetric serendipity(const RecMap& recs, const EvalContext& ctx, SerendipityVariant variant);
// Items nobody interacted with are skipped and the divisor shrinks to match.
UserMetric self_information(const RecMap& recs, const EvalContext& ctx,
                            std::vector<std::string>* warnings = nullptr);
UserMetric arp(const RecMap& recs, const EvalContext& ctx);
UserMetric hallucination_rate(const RecMap& recs, const EvalContext& ctx);
// Share of K taken by real catalog items that were not in the pool.
UserMetric instruction_violation_rate(const RecMap& recs, const EvalContext& ctx);

// Catalog items ordered by (train popularity, item id) and cut into `groups`
// contiguous groups of near-equal size.
std::vector<std::vector<ItemId>> popularity_groups(const PopularityTable& popularity, std::size_t groups);

// Coefficient of variation (population std / mean) of the per-group true
// positive rates. Groups without any target are left out.
std::optional<double> pop_reo(const RecMap& recs, const EvalContext& ctx, std::size_t groups = 5,
                              std::vector<std::string>* warnings = nullptr);
std::optional<double> item_coverage(const RecMap& recs, const EvalContext& ctx);
// Mean over unordered user pairs whose pools intersect.
std::optional<double> overlap_item_coverage(const RecMap& recs, const EvalContext& ctx);
// Over the whole catalog; throws PreconditionError when nothing was recommended.
double gini(const RecMap& recs, const EvalContext& ctx);
// Users with history length above the median are active.
std::optional<double> dpd(const RecMap& recs, const EvalContext& ctx);
std::optional<double> jains_index(const RecMap& recs, const EvalContext& ctx);

// Natural log; accuracies are clamped to 1 - 1e-9.
double cand_dif(double acc_first, double acc_random);

// Two-sided p-value. Paired t-test when `paired`, Welch otherwise.
double significance(std::span<const double> a, std::span<const double> b, bool paired);

struct MetricOptions {
    SerendipityVariant serendipity_variant = SerendipityVariant::useful;
    std::size_t popreo_groups = 5;
};

struct MetricReport {
    std::map<UserId, std::map<std::string, double>> per_user;
    std::map<std::string, std::optional<double>> aggregate;
    json metadata = json::object();
    std::vector<std::string> warnings;

    json to_json() const;
    static MetricReport from_json(const json& j);
    std::string per_user_csv() const;
};

// Per-user metric columns written to CSV, in order.
const std::vector<std::string>& per_user_metric_names();

MetricReport evaluate(const RecMap& recs, const EvalContext& ctx, const MetricOptions& options = {});

RecMap to_rec_map(std::span<const MatchedRecommendation> recs);

}  // namespace beyondrec
