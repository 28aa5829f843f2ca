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

#include "beyondrec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

namespace beyondrec {

namespace {

const MatchedRecommendation kEmpty{};

const MatchedRecommendation& rec_for(const RecMap& recs, const UserId& user,
                                     std::vector<std::string>* warnings) {
    auto it = recs.find(user);
    if (it != recs.end()) return it->second;
    if (warnings) warnings->push_back("no recommendation for user " + user + "; scored as empty");
    return kEmpty;
}

std::set<ItemId> pool_item_set(const MatchedRecommendation& rec) {
    std::set<ItemId> out;
    for (const auto& [item, _] : rec.ranked_pool_items()) out.insert(item);
    return out;
}

template <typename F>
UserMetric per_user_mean(const RecMap& recs, const EvalContext& ctx, std::vector<std::string>* warnings, F f) {
    UserMetric m;
    Accumulator acc;
    for (const auto& [user, target] : ctx.truth) {
        const double v = f(user, target, rec_for(recs, user, warnings));
        m.per_user[user] = v;
        acc.add(v);
    }
    m.mean = acc.mean();
    return m;
}

double kd(const EvalContext& ctx) {
    if (ctx.k == 0) throw PreconditionError("K must be positive");
    return static_cast<double>(ctx.k);
}

std::set<ItemId> recommended_union(const RecMap& recs, const EvalContext& ctx) {
    std::set<ItemId> out;
    for (const auto& [user, _] : ctx.truth) {
        auto it = recs.find(user);
        if (it == recs.end()) continue;
        for (const auto& [item, rank] : it->second.ranked_pool_items()) out.insert(item);
    }
    return out;
}

}  // namespace

EvalContext make_context(const SplitDataset& split, const PopularityTable& popularity,
                         std::span<const CandidatePool> pools, std::size_t k) {
    EvalContext ctx;
    ctx.k = k;
    ctx.popularity = popularity;
    for (const auto& pool : pools) {
        ctx.truth[pool.user] = pool.positive_item;
        ctx.pools[pool.user] = pool;
        ctx.history_lengths[pool.user] = split.at(pool.user).before_test().size();
    }
    return ctx;
}

const char* to_string(SerendipityVariant v) {
    return v == SerendipityVariant::literal ? "literal" : "useful";
}

SerendipityVariant parse_serendipity_variant(const std::string& name) {
    if (name == "literal") return SerendipityVariant::literal;
    if (name == "useful") return SerendipityVariant::useful;
    throw UsageError("unknown serendipity variant '" + name + "' (expected literal or useful)");
}

UserMetric hit_rate(const RecMap& recs, const EvalContext& ctx, std::vector<std::string>* warnings) {
    return per_user_mean(recs, ctx, warnings, [](const UserId&, const ItemId& y, const MatchedRecommendation& rec) {
        for (const auto& [item, rank] : rec.ranked_pool_items()) {
            if (item == y) return 1.0;
        }
        return 0.0;
    });
}

UserMetric ndcg(const RecMap& recs, const EvalContext& ctx, std::vector<std::string>* warnings) {
    return per_user_mean(recs, ctx, warnings, [](const UserId&, const ItemId& y, const MatchedRecommendation& rec) {
        for (const auto& [item, rank] : rec.ranked_pool_items()) {
            if (item == y) return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
        }
        return 0.0;
    });
}

UserMetric aplt(const RecMap& recs, const EvalContext& ctx) {
    const double k = kd(ctx);
    return per_user_mean(recs, ctx, nullptr, [&](const UserId&, const ItemId&, const MatchedRecommendation& rec) {
        double n = 0;
        for (const auto& [item, rank] : rec.ranked_pool_items()) n += ctx.popularity.is_long_tail(item) ? 1 : 0;
        return n / k;
    });
}

UserMetric serendipity(const RecMap& recs, const EvalContext& ctx, SerendipityVariant variant) {
    const double k = kd(ctx);
    return per_user_mean(recs, ctx, nullptr, [&](const UserId& user, const ItemId& y, const MatchedRecommendation& rec) {
        std::set<ItemId> reference;
        if (auto it = ctx.mostpop_topk.find(user); it != ctx.mostpop_topk.end()) {
            reference.insert(it->second.begin(), it->second.end());
        }
        double n = 0;
        for (const auto& [item, rank] : rec.ranked_pool_items()) {
            if (reference.count(item)) continue;
            if (variant == SerendipityVariant::literal || item == y) n += 1;
        }
        return n / k;
    });
}

UserMetric self_information(const RecMap& recs, const EvalContext& ctx, std::vector<std::string>* warnings) {
    const double n_users = static_cast<double>(ctx.popularity.n_users);
    return per_user_mean(recs, ctx, nullptr, [&](const UserId& user, const ItemId&, const MatchedRecommendation& rec) {
        std::size_t skipped = 0;
        Accumulator sum;
        for (const auto& [item, rank] : rec.ranked_pool_items()) {
            const auto known = ctx.popularity.users_of(item);
            if (known <= 0) {
                ++skipped;
                continue;
            }
            sum.add(std::log2(n_users / static_cast<double>(known)));
        }
        if (skipped && warnings) {
            warnings->push_back("self_information: " + std::to_string(skipped) +
                                " item(s) without users skipped for user " + user);
        }
        const double divisor = static_cast<double>(ctx.k) - static_cast<double>(skipped);
        return divisor > 0 ? sum.sum() / divisor : 0.0;
    });
}

UserMetric arp(const RecMap& recs, const EvalContext& ctx) {
    const double k = kd(ctx);
    return per_user_mean(recs, ctx, nullptr, [&](const UserId&, const ItemId&, const MatchedRecommendation& rec) {
        Accumulator sum;
        for (const auto& [item, rank] : rec.ranked_pool_items()) {
            sum.add(static_cast<double>(ctx.popularity.popularity(item)));
        }
        return sum.sum() / k;
    });
}

UserMetric hallucination_rate(const RecMap& recs, const EvalContext& ctx) {
    const double k = kd(ctx);
    return per_user_mean(recs, ctx, nullptr, [&](const UserId&, const ItemId&, const MatchedRecommendation& rec) {
        return static_cast<double>(rec.unmatched_count()) / k;
    });
}

UserMetric instruction_violation_rate(const RecMap& recs, const EvalContext& ctx) {
    const double k = kd(ctx);
    return per_user_mean(recs, ctx, nullptr, [&](const UserId&, const ItemId&, const MatchedRecommendation& rec) {
        double n = 0;
        for (const auto& e : rec.entries) n += e.scope == MatchScope::in_catalog_only ? 1 : 0;
        return n / k;
    });
}

std::vector<std::vector<ItemId>> popularity_groups(const PopularityTable& popularity, std::size_t groups) {
    if (groups == 0) throw UsageError("number of popularity groups must be positive");
    std::vector<std::pair<std::int64_t, ItemId>> order;
    for (const auto& [item, count] : popularity.pop) order.emplace_back(count, item);
    std::sort(order.begin(), order.end());
    std::vector<std::vector<ItemId>> out(groups);
    const std::size_t n = order.size();
    for (std::size_t j = 0; j < n; ++j) out[j * groups / n].push_back(order[j].second);
    return out;
}

std::optional<double> pop_reo(const RecMap& recs, const EvalContext& ctx, std::size_t groups,
                              std::vector<std::string>* warnings) {
    const auto partition = popularity_groups(ctx.popularity, groups);
    std::map<ItemId, std::size_t> group_of;
    for (std::size_t g = 0; g < partition.size(); ++g) {
        for (const auto& item : partition[g]) group_of[item] = g;
    }
    std::vector<double> hits(groups, 0.0), targets(groups, 0.0);
    for (const auto& [user, y] : ctx.truth) {
        auto g = group_of.find(y);
        if (g == group_of.end()) continue;
        targets[g->second] += 1;
        auto it = recs.find(user);
        if (it == recs.end()) continue;
        for (const auto& [item, rank] : it->second.ranked_pool_items()) {
            if (item == y) hits[g->second] += 1;
        }
    }
    std::vector<double> tpr;
    for (std::size_t g = 0; g < groups; ++g) {
        if (targets[g] == 0) {
            if (warnings) warnings->push_back("pop_reo: group " + std::to_string(g + 1) + " has no targets; excluded");
            continue;
        }
        tpr.push_back(hits[g] / targets[g]);
    }
    if (tpr.empty()) return std::nullopt;
    Accumulator mean_acc;
    for (double v : tpr) mean_acc.add(v);
    const double mean = mean_acc.mean();
    if (mean == 0.0) return std::nullopt;
    Accumulator var_acc;
    for (double v : tpr) var_acc.add((v - mean) * (v - mean));
    return std::sqrt(var_acc.sum() / static_cast<double>(tpr.size())) / mean;
}

std::optional<double> item_coverage(const RecMap& recs, const EvalContext& ctx) {
    std::set<ItemId> candidates;
    for (const auto& [user, _] : ctx.truth) {
        auto it = ctx.pools.find(user);
        if (it != ctx.pools.end()) candidates.insert(it->second.items.begin(), it->second.items.end());
    }
    if (candidates.empty()) return std::nullopt;
    return static_cast<double>(recommended_union(recs, ctx).size()) / static_cast<double>(candidates.size());
}

std::optional<double> overlap_item_coverage(const RecMap& recs, const EvalContext& ctx) {
    struct Row {
        std::vector<ItemId> pool;  // sorted
        std::vector<ItemId> recs;  // sorted
    };
    std::vector<Row> rows;
    for (const auto& [user, _] : ctx.truth) {
        Row row;
        if (auto it = ctx.pools.find(user); it != ctx.pools.end()) row.pool = it->second.items;
        std::sort(row.pool.begin(), row.pool.end());
        row.pool.erase(std::unique(row.pool.begin(), row.pool.end()), row.pool.end());
        if (auto it = recs.find(user); it != recs.end()) {
            for (const auto& item : pool_item_set(it->second)) row.recs.push_back(item);
        }
        rows.push_back(std::move(row));
    }
    Accumulator sum;
    std::vector<ItemId> scratch;
    for (std::size_t u = 0; u < rows.size(); ++u) {
        for (std::size_t v = u + 1; v < rows.size(); ++v) {
            scratch.clear();
            std::set_intersection(rows[u].pool.begin(), rows[u].pool.end(), rows[v].pool.begin(),
                                  rows[v].pool.end(), std::back_inserter(scratch));
            if (scratch.empty()) continue;
            const double shared_pool = static_cast<double>(scratch.size());
            scratch.clear();
            std::set_intersection(rows[u].recs.begin(), rows[u].recs.end(), rows[v].recs.begin(),
                                  rows[v].recs.end(), std::back_inserter(scratch));
            sum.add(static_cast<double>(scratch.size()) / shared_pool);
        }
    }
    if (sum.count() == 0) return std::nullopt;
    return sum.mean();
}

double gini(const RecMap& recs, const EvalContext& ctx) {
    std::map<ItemId, double> freq;
    for (const auto& [item, _] : ctx.popularity.pop) freq[item] = 0;
    double total = 0;
    for (const auto& [user, _] : ctx.truth) {
        auto it = recs.find(user);
        if (it == recs.end()) continue;
        for (const auto& [item, rank] : it->second.ranked_pool_items()) {
            freq[item] += 1;
            total += 1;
        }
    }
    if (total == 0) throw PreconditionError("gini: no recommendations to measure");
    std::vector<double> f;
    f.reserve(freq.size());
    for (const auto& [item, v] : freq) f.push_back(v);
    std::sort(f.begin(), f.end());
    const double n = static_cast<double>(f.size());
    Accumulator num;
    for (std::size_t i = 0; i < f.size(); ++i) num.add((2.0 * static_cast<double>(i + 1) - n - 1.0) * f[i]);
    return num.sum() / (n * total);
}

std::optional<double> dpd(const RecMap& recs, const EvalContext& ctx) {
    const auto scores = ndcg(recs, ctx).per_user;
    std::vector<double> lengths;
    for (const auto& [user, _] : ctx.truth) {
        auto it = ctx.history_lengths.find(user);
        if (it == ctx.history_lengths.end()) throw PreconditionError("dpd: no history length for user " + user);
        lengths.push_back(static_cast<double>(it->second));
    }
    if (lengths.empty()) return std::nullopt;
    std::sort(lengths.begin(), lengths.end());
    const std::size_t n = lengths.size();
    const double median = n % 2 ? lengths[n / 2] : (lengths[n / 2 - 1] + lengths[n / 2]) / 2.0;
    Accumulator active, inactive;
    for (const auto& [user, _] : ctx.truth) {
        const double len = static_cast<double>(ctx.history_lengths.at(user));
        (len > median ? active : inactive).add(scores.at(user));
    }
    if (active.count() == 0 || inactive.count() == 0) return std::nullopt;
    return std::fabs(active.mean() - inactive.mean());
}

std::optional<double> jains_index(const RecMap& recs, const EvalContext& ctx) {
    const auto scores = ndcg(recs, ctx).per_user;
    Accumulator sum, sum_sq;
    for (const auto& [user, s] : scores) {
        sum.add(s);
        sum_sq.add(s * s);
    }
    if (sum_sq.sum() == 0.0) return std::nullopt;
    return sum.sum() * sum.sum() / (static_cast<double>(scores.size()) * sum_sq.sum());
}

double cand_dif(double acc_first, double acc_random) {
    auto check = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw PreconditionError(std::string("cand_dif: ") + name + " must lie in [0, 1]");
        }
        return std::min(v, 1.0 - 1e-9);
    };
    const double first = check(acc_first, "acc_first");
    const double random = check(acc_random, "acc_random");
    return -std::log(1.0 - first) + std::log(1.0 - random);
}

double significance(std::span<const double> a, std::span<const double> b, bool paired) {
    using boost::math::students_t;
    auto mean_var = [](std::span<const double> x) {
        Accumulator s;
        for (double v : x) s.add(v);
        const double mean = s.mean();
        Accumulator ss;
        for (double v : x) ss.add((v - mean) * (v - mean));
        return std::pair{mean, ss.sum() / static_cast<double>(x.size() - 1)};
    };
    if (a.size() < 2 || b.size() < 2) throw PreconditionError("significance: at least 2 observations per side");
    double t = 0.0, df = 0.0;
    if (paired) {
        if (a.size() != b.size()) throw PreconditionError("significance: paired test needs equal lengths");
        std::vector<double> d(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
        const auto [mean, var] = mean_var(d);
        if (var == 0.0) return mean == 0.0 ? 1.0 : 0.0;
        t = mean / std::sqrt(var / static_cast<double>(d.size()));
        df = static_cast<double>(d.size() - 1);
    } else {
        const auto [ma, va] = mean_var(a);
        const auto [mb, vb] = mean_var(b);
        const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
        const double se2 = va / na + vb / nb;
        if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;
        t = (ma - mb) / std::sqrt(se2);
        df = se2 * se2 / ((va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1));
    }
    const students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
}

const std::vector<std::string>& per_user_metric_names() {
    static const std::vector<std::string> names{
        "hr",    "ndcg", "aplt",          "serendipity_useful",     "serendipity_literal",
        "self_information", "arp", "hallucination", "instruction_violation", "parse_failed"};
    return names;
}

MetricReport evaluate(const RecMap& recs, const EvalContext& ctx, const MetricOptions& options) {
    MetricReport report;
    std::vector<std::string> coverage;
    std::map<std::string, UserMetric> columns;
    columns["hr"] = hit_rate(recs, ctx, &coverage);
    columns["ndcg"] = ndcg(recs, ctx);
    columns["aplt"] = aplt(recs, ctx);
    columns["serendipity_useful"] = serendipity(recs, ctx, SerendipityVariant::useful);
    columns["serendipity_literal"] = serendipity(recs, ctx, SerendipityVariant::literal);
    columns["self_information"] = self_information(recs, ctx, &report.warnings);
    columns["arp"] = arp(recs, ctx);
    columns["hallucination"] = hallucination_rate(recs, ctx);
    columns["instruction_violation"] = instruction_violation_rate(recs, ctx);
    UserMetric failed;
    Accumulator failed_acc;
    for (const auto& [user, _] : ctx.truth) {
        auto it = recs.find(user);
        const double v = (it == recs.end() || it->second.parse_failed) ? 1.0 : 0.0;
        failed.per_user[user] = v;
        failed_acc.add(v);
    }
    failed.mean = failed_acc.mean();
    columns["parse_failed"] = failed;
    report.warnings.insert(report.warnings.begin(), coverage.begin(), coverage.end());

    for (const auto& name : per_user_metric_names()) {
        const auto& column = columns.at(name);
        report.aggregate[name] = column.mean;
        for (const auto& [user, v] : column.per_user) report.per_user[user][name] = v;
    }
    report.aggregate["serendipity"] = columns.at(options.serendipity_variant == SerendipityVariant::useful
                                                     ? "serendipity_useful"
                                                     : "serendipity_literal").mean;
    if (ctx.mostpop_topk.empty()) {
        report.aggregate["serendipity"] = std::nullopt;
        report.aggregate["serendipity_useful"] = std::nullopt;
        report.aggregate["serendipity_literal"] = std::nullopt;
        report.warnings.push_back("serendipity: no MostPop reference lists; reported as absent");
    }
    report.aggregate["pop_reo"] = pop_reo(recs, ctx, options.popreo_groups, &report.warnings);
    report.aggregate["item_coverage"] = item_coverage(recs, ctx);
    report.aggregate["oic"] = overlap_item_coverage(recs, ctx);
    try {
        report.aggregate["gini"] = gini(recs, ctx);
    } catch (const PreconditionError& e) {
        report.aggregate["gini"] = std::nullopt;
        report.warnings.push_back(e.what());
    }
    report.aggregate["dpd"] = dpd(recs, ctx);
    report.aggregate["jain"] = jains_index(recs, ctx);

    report.metadata["K"] = ctx.k;
    report.metadata["users"] = ctx.truth.size();
    report.metadata["serendipity_variant"] = to_string(options.serendipity_variant);
    report.metadata["popreo_groups"] = options.popreo_groups;
    report.metadata["significance_test"] = "two-sided t-test (paired on shared users, Welch otherwise)";
    return report;
}

json MetricReport::to_json() const {
    json agg = json::object();
    for (const auto& [name, v] : aggregate) agg[name] = v ? json(*v) : json(nullptr);
    return {{"metadata", metadata}, {"aggregate", agg}, {"warnings", warnings}};
}

MetricReport MetricReport::from_json(const json& j) {
    MetricReport r;
    r.metadata = j.value("metadata", json::object());
    for (const auto& [name, v] : j.at("aggregate").items()) {
        r.aggregate[name] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    r.warnings = j.value("warnings", std::vector<std::string>{});
    return r;
}

std::string MetricReport::per_user_csv() const {
    std::ostringstream out;
    out << "user";
    for (const auto& name : per_user_metric_names()) out << ',' << name;
    out << '\n';
    out << std::setprecision(17);
    for (const auto& [user, values] : per_user) {
        out << user;
        for (const auto& name : per_user_metric_names()) {
            auto it = values.find(name);
            out << ',';
            if (it != values.end()) out << it->second;
        }
        out << '\n';
    }
    return out.str();
}

RecMap to_rec_map(std::span<const MatchedRecommendation> recs) {
    RecMap out;
    for (const auto& r : recs) {
        if (!out.emplace(r.user, r).second) throw PreconditionError("duplicate recommendation for user " + r.user);
    }
    return out;
}

}  // namespace beyondrec
