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

// Test-user sampling gated by a two-sample Kolmogorov-Smirnov test.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "beyondrec/corpus.hpp"

namespace beyondrec {

struct KsReport {
    double statistic = 0.0;
    double p_value = 1.0;
    double alpha = 0.05;
    bool accepted = true;
    int attempts = 1;
};

json to_json(const KsReport& report);
KsReport ks_report_from_json(const json& j);

// sup_x |ECDF_a(x) - ECDF_b(x)|
double ks_statistic(std::span<const double> a, std::span<const double> b);

// Survival function of the Kolmogorov distribution, P(K > lambda).
double kolmogorov_survival(double lambda);

// Asymptotic p-value with effective size n_a*n_b/(n_a+n_b) and the
// Stephens small-sample correction.
double ks_p_value(double statistic, std::size_t n_a, std::size_t n_b);

// Exact null probability P(D >= statistic) for continuous data, by counting
// lattice paths.
double ks_exact_p_value(double statistic, std::size_t n_a, std::size_t n_b);

// Samples with n_a * n_b up to this size get the exact p-value.
inline constexpr std::size_t kKsExactLimit = 10000;

KsReport ks_two_sample(std::span<const double> scores_a, std::span<const double> scores_b,
                       double alpha = 0.05);

using ScoreTable = std::map<UserId, double>;

struct UserSample {
    std::vector<UserId> user_ids;  // sorted
    std::uint64_t seed = 0;  // configured seed; attempt a draws with mix_seed(seed, a)
    KsReport gate;
};

class SampleRejected : public Error {
public:
    SampleRejected(const std::string& what, KsReport last) : Error(what), last_(last) {}
    const KsReport& last_report() const { return last_; }

private:
    KsReport last_;
};

// Draws n distinct users (without replacement) from `population`.
std::vector<UserId> draw_users(std::span<const UserId> population, std::size_t n, std::uint64_t seed);

// Redraws until the sample's scores are not distinguishable from the full
// population's scores. `sample_scores` defaults to `reference_scores`.
UserSample sample_until_accepted(std::span<const UserId> population, std::size_t n,
                                 const ScoreTable& reference_scores, double alpha,
                                 std::uint64_t seed, int max_attempts);
UserSample sample_until_accepted(std::span<const UserId> population, std::size_t n,
                                 const ScoreTable& reference_scores,
                                 const ScoreTable& sample_scores, double alpha,
                                 std::uint64_t seed, int max_attempts);
UserSample sample_until_accepted(const SplitDataset& split, std::size_t n,
                                 const ScoreTable& reference_scores, double alpha,
                                 std::uint64_t seed, int max_attempts);

json gate_report_json(const UserSample& sample, const json& reference_description);

}  // namespace beyondrec
