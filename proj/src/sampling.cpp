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

#include "beyondrec/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace beyondrec {

json to_json(const KsReport& report) {
    return {{"statistic", report.statistic},
            {"p_value", report.p_value},
            {"alpha", report.alpha},
            {"accepted", report.accepted},
            {"attempts", report.attempts}};
}

KsReport ks_report_from_json(const json& j) {
    KsReport r;
    r.statistic = j.at("statistic").get<double>();
    r.p_value = j.at("p_value").get<double>();
    r.alpha = j.at("alpha").get<double>();
    r.accepted = j.at("accepted").get<bool>();
    r.attempts = j.at("attempts").get<int>();
    return r;
}

double ks_statistic(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw PreconditionError("ks_statistic: both samples must be non-empty");
    std::vector<double> xs(a.begin(), a.end());
    std::vector<double> ys(b.begin(), b.end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const double na = static_cast<double>(xs.size());
    const double nb = static_cast<double>(ys.size());
    std::size_t i = 0, j = 0;
    double best = 0.0;
    while (i < xs.size() || j < ys.size()) {
        double x;
        if (j >= ys.size() || (i < xs.size() && xs[i] <= ys[j])) {
            x = xs[i];
        } else {
            x = ys[j];
        }
        // Step past every value equal to x on both sides before comparing.
        while (i < xs.size() && xs[i] <= x) ++i;
        while (j < ys.size() && ys[j] <= x) ++j;
        best = std::max(best, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return best;
}

double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        // Theta-function form converges fast for small lambda.
        const double pi2 = std::numbers::pi * std::numbers::pi;
        double cdf = 0.0;
        for (int k = 1; k <= 50; ++k) {
            const double odd = 2.0 * k - 1.0;
            const double term = std::exp(-odd * odd * pi2 / (8.0 * lambda * lambda));
            cdf += term;
            if (term < 1e-18) break;
        }
        cdf *= std::sqrt(2.0 * std::numbers::pi) / lambda;
        return std::clamp(1.0 - cdf, 0.0, 1.0);
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        sign = -sign;
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double ks_p_value(double statistic, std::size_t n_a, std::size_t n_b) {
    const double na = static_cast<double>(n_a);
    const double nb = static_cast<double>(n_b);
    const double en = std::sqrt(na * nb / (na + nb));
    return kolmogorov_survival((en + 0.12 + 0.11 / en) * statistic);
}

double ks_exact_p_value(double statistic, std::size_t n_a, std::size_t n_b) {
    if (n_a == 0 || n_b == 0) throw PreconditionError("ks_exact_p_value: empty sample");
    // Uniform monotone lattice paths from (0,0) to (n_a,n_b); w holds the
    // probability that a path reaches (i,j) without leaving the band
    // |i/n_a - j/n_b| < statistic.
    const double scale = static_cast<double>(n_a) * static_cast<double>(n_b);
    const auto bound = static_cast<long long>(std::llround(statistic * scale));
    const auto na = static_cast<long long>(n_a), nb = static_cast<long long>(n_b);
    auto inside = [&](long long i, long long j) { return std::llabs(i * nb - j * na) < bound; };
    std::vector<double> w(n_b + 1, 0.0);
    for (long long i = 0; i <= na; ++i) {
        for (long long j = 0; j <= nb; ++j) {
            auto& cell = w[static_cast<std::size_t>(j)];
            if (!inside(i, j)) {
                cell = 0.0;
            } else if (i == 0 && j == 0) {
                cell = 1.0;
            } else {
                const double from_left = j > 0 ? w[static_cast<std::size_t>(j - 1)] : 0.0;
                const double from_below = i > 0 ? cell : 0.0;
                cell = (from_below * static_cast<double>(i) + from_left * static_cast<double>(j)) /
                       static_cast<double>(i + j);
            }
        }
    }
    return std::clamp(1.0 - w[n_b], 0.0, 1.0);
}

KsReport ks_two_sample(std::span<const double> scores_a, std::span<const double> scores_b,
                       double alpha) {
    if (scores_a.empty() || scores_b.empty()) {
        throw PreconditionError("ks_two_sample: both score lists must be non-empty");
    }
    KsReport report;
    report.alpha = alpha;
    report.statistic = ks_statistic(scores_a, scores_b);
    const std::size_t na = scores_a.size(), nb = scores_b.size();
    if (report.statistic == 0.0) {
        report.p_value = 1.0;
    } else if (na * nb <= kKsExactLimit) {
        report.p_value = ks_exact_p_value(report.statistic, na, nb);
    } else {
        report.p_value = ks_p_value(report.statistic, na, nb);
    }
    report.accepted = report.p_value >= alpha;
    return report;
}

std::vector<UserId> draw_users(std::span<const UserId> population, std::size_t n,
                               std::uint64_t seed) {
    if (n > population.size()) {
        throw PreconditionError("cannot sample " + std::to_string(n) + " users from " +
                                std::to_string(population.size()));
    }
    std::vector<UserId> pool(population.begin(), population.end());
    std::sort(pool.begin(), pool.end());
    Rng rng(seed);
    // Partial Fisher-Yates: the first n slots are the draw.
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = i + rng.uniform_index(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    return pool;
}

namespace {

std::vector<double> lookup_scores(std::span<const UserId> users, const ScoreTable& scores) {
    std::vector<double> out;
    out.reserve(users.size());
    for (const auto& user : users) {
        auto it = scores.find(user);
        if (it == scores.end()) {
            throw PreconditionError("reference scores do not cover user '" + user + "'");
        }
        out.push_back(it->second);
    }
    return out;
}

}  // namespace

UserSample sample_until_accepted(std::span<const UserId> population, std::size_t n,
                                 const ScoreTable& reference_scores, double alpha,
                                 std::uint64_t seed, int max_attempts) {
    return sample_until_accepted(population, n, reference_scores, reference_scores, alpha, seed,
                                 max_attempts);
}

UserSample sample_until_accepted(std::span<const UserId> population, std::size_t n,
                                 const ScoreTable& reference_scores,
                                 const ScoreTable& sample_scores, double alpha,
                                 std::uint64_t seed, int max_attempts) {
    if (max_attempts < 1) throw PreconditionError("max_attempts must be >= 1");
    if (n == 0) throw PreconditionError("sample size must be positive");
    const std::vector<double> full = lookup_scores(population, reference_scores);
    KsReport last;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const std::uint64_t draw_seed = mix_seed(seed, static_cast<std::uint64_t>(attempt));
        UserSample sample;
        sample.user_ids = draw_users(population, n, draw_seed);
        sample.seed = seed;
        const std::vector<double> drawn = lookup_scores(sample.user_ids, sample_scores);
        last = ks_two_sample(drawn, full, alpha);
        last.attempts = attempt + 1;
        if (last.accepted) {
            sample.gate = last;
            return sample;
        }
    }
    throw SampleRejected("no sample passed the K-S gate after " + std::to_string(max_attempts) +
                             " attempts (last p=" + std::to_string(last.p_value) + ")",
                         last);
}

UserSample sample_until_accepted(const SplitDataset& split, std::size_t n,
                                 const ScoreTable& reference_scores, double alpha,
                                 std::uint64_t seed, int max_attempts) {
    const auto users = split.user_ids();
    return sample_until_accepted(users, n, reference_scores, alpha, seed, max_attempts);
}

json gate_report_json(const UserSample& sample, const json& reference_description) {
    json j = to_json(sample.gate);
    j["seed"] = sample.seed;
    j["n"] = sample.user_ids.size();
    j["reference"] = reference_description;
    return j;
}

}  // namespace beyondrec
