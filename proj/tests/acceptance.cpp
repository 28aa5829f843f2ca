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


// Acceptance checks. Prints one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,4,7] [--require-data]
//
// Criteria 2 and 3 need the Amazon Beauty data converted to the JSONL
// formats (interactions.jsonl, catalog.jsonl) in $BEYONDREC_BEAUTY_DIR. With
// --require-data a missing dataset exits with 77 so ctest reports a skip.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>

#include "beyondrec/cli.hpp"
#include "beyondrec/experiments.hpp"
#include "beyondrec/run_directory.hpp"
#include "metric_instances.hpp"
#include "mock_server.hpp"
#include "support.hpp"

using namespace beyondrec;

namespace {

// ---- tolerances -------------------------------------------------------------

constexpr int kOracleInstances = 200;
constexpr double kOracleTolerance = 1e-9;
constexpr double kOracleSeconds = 60.0;

constexpr double kMostPopHr = 0.504;
constexpr double kMostPopNdcg = 0.3434;
constexpr double kBm25Hr = 0.271;
constexpr double kReproductionTolerance = 0.05;
constexpr double kReproductionSeconds = 600.0;

constexpr std::size_t kSanityUsers = 1000;
constexpr double kRandomHr = 0.25;
constexpr double kRandomTolerance = 0.03;
constexpr double kPositionAgnosticCandDif = 0.05;

constexpr std::size_t kHallucinationUsers = 1000;
constexpr double kHallucinationRates[] = {0.2288, 0.0046, 0.0014};
constexpr double kHallucinationTolerance = 1e-12;

constexpr std::size_t kGatePopulation = 1000;
constexpr std::size_t kGateSample = 100;
constexpr int kGateTrials = 200;
constexpr double kGateAlpha = 0.05;
constexpr double kGateAcceptRate = 0.90;
constexpr double kGateRejectRate = 0.95;

constexpr std::size_t kTruncationMaxLength = 6;

constexpr std::size_t kGatewayRequests = 400;
constexpr std::size_t kGatewayBound = 6;

// ---- harness ----------------------------------------------------------------

struct Outcome {
    bool pass = false;
    std::string detail;
    bool data_missing = false;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(precision);
    out << v;
    return out.str();
}

std::string sci(double v) {
    std::ostringstream out;
    out.precision(2);
    out << std::scientific << v;
    return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

PreparedData synthetic_data(std::size_t users, std::uint64_t seed) {
    testing::SyntheticSpec spec;
    spec.users = users;
    spec.items = 120;
    spec.seed = seed;
    return make_prepared(testing::synthetic_split(spec));
}

std::vector<UserId> all_users(const PreparedData& data) {
    std::vector<UserId> users;
    for (const auto& [user, _] : data.split.users) users.push_back(user);
    return users;
}

ExperimentConfig ranking_config() {
    ExperimentConfig cfg;
    cfg.k = 5;
    cfg.m = 19;
    return cfg;
}

std::unique_ptr<Recommender> model_of(const std::string& kind, const PreparedData& data, std::uint64_t seed = 0) {
    ModelConfig m;
    m.kind = kind;
    m.name = kind;
    m.seed = seed;
    return make_recommender(m, data);
}

// ---- 1: metric oracles ------------------------------------------------------

Outcome metric_oracles() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(20260101);
    double worst = 0.0;
    int mismatches = 0;
    auto compare = [&](double got, double want) {
        const double d = std::fabs(got - want);
        worst = std::max(worst, d);
        if (!(d <= kOracleTolerance)) ++mismatches;
    };
    auto compare_opt = [&](const std::optional<double>& got, const std::optional<double>& want) {
        if (got.has_value() != want.has_value()) {
            ++mismatches;
        } else if (got) {
            compare(*got, *want);
        }
    };
    for (int t = 0; t < kOracleInstances; ++t) {
        const auto in = testing::random_instance(rng);
        const auto recs = testing::to_recs(in);
        const auto ctx = testing::to_context(in);
        compare(hit_rate(recs, ctx).mean, oracle::mean_over_users(in, oracle::hr_user));
        compare(ndcg(recs, ctx).mean, oracle::mean_over_users(in, oracle::ndcg_user));
        compare(aplt(recs, ctx).mean, oracle::mean_over_users(in, oracle::aplt_user));
        compare(serendipity(recs, ctx, SerendipityVariant::literal).mean,
                oracle::mean_over_users(in, oracle::serendipity_literal_user));
        compare(serendipity(recs, ctx, SerendipityVariant::useful).mean,
                oracle::mean_over_users(in, oracle::serendipity_useful_user));
        compare(self_information(recs, ctx).mean, oracle::mean_over_users(in, oracle::self_information_user));
        compare(arp(recs, ctx).mean, oracle::mean_over_users(in, oracle::arp_user));
        compare(hallucination_rate(recs, ctx).mean, oracle::mean_over_users(in, oracle::hallucination_user));
        compare_opt(pop_reo(recs, ctx), oracle::pop_reo(in));
        compare_opt(item_coverage(recs, ctx), oracle::item_coverage(in));
        compare_opt(overlap_item_coverage(recs, ctx), oracle::oic(in));
        compare_opt(dpd(recs, ctx), oracle::dpd(in));
        compare_opt(jains_index(recs, ctx), oracle::jain(in));
        const auto g = oracle::gini(in);
        if (g) {
            compare(gini(recs, ctx), *g);
        } else {
            try {
                gini(recs, ctx);
                ++mismatches;
            } catch (const PreconditionError&) {
            }
        }
        const double a = rng.uniform01(), b = rng.uniform01();
        compare(cand_dif(a, b), oracle::cand_dif(a, b));
    }
    const double secs = seconds_since(start);
    return {mismatches == 0 && secs < kOracleSeconds,
            std::to_string(kOracleInstances) + " instances, " + std::to_string(mismatches) +
                " mismatches, max |diff| " + sci(worst) + ", " + fmt(secs, 2) + " s"};
}

// ---- 2, 3: Beauty baselines -------------------------------------------------

struct BeautyRuns {
    MetricReport mostpop;
    MetricReport bm25;
    double seconds = 0;
    std::size_t users = 0;
};

std::optional<BeautyRuns>& beauty_cache() {
    static std::optional<BeautyRuns> cache;
    return cache;
}

std::optional<fs::path> beauty_dir() {
    const char* dir = std::getenv("BEYONDREC_BEAUTY_DIR");
    if (!dir || !*dir) return std::nullopt;
    const fs::path p(dir);
    if (!fs::exists(p / "interactions.jsonl") || !fs::exists(p / "catalog.jsonl")) return std::nullopt;
    return p;
}

const BeautyRuns& beauty_runs(const fs::path& dir) {
    auto& cache = beauty_cache();
    if (cache) return *cache;
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = ranking_config();
    cfg.interactions = dir / "interactions.jsonl";
    cfg.catalog = dir / "catalog.jsonl";
    cfg.k_core = 5;
    cfg.sample_n = 1000;
    const PreparedData data = prepare_data(cfg);
    const UserSample sample = sample_users(data, cfg);
    BeautyRuns runs;
    auto mostpop = model_of("mostpop", data);
    runs.mostpop = run_ranking_eval(cfg, data, sample.user_ids, *mostpop).report;
    auto bm25 = model_of("bm25", data);
    runs.bm25 = run_ranking_eval(cfg, data, sample.user_ids, *bm25).report;
    runs.seconds = seconds_since(start);
    runs.users = sample.user_ids.size();
    cache = std::move(runs);
    return *cache;
}

Outcome beauty_unavailable() {
    return {false, "dataset unavailable: set BEYONDREC_BEAUTY_DIR to a directory with interactions.jsonl and "
                   "catalog.jsonl", true};
}

Outcome mostpop_reproduction() {
    const auto dir = beauty_dir();
    if (!dir) return beauty_unavailable();
    const auto& runs = beauty_runs(*dir);
    const double hr = *runs.mostpop.aggregate.at("hr");
    const double nd = *runs.mostpop.aggregate.at("ndcg");
    const bool ok = std::fabs(hr - kMostPopHr) <= kReproductionTolerance &&
                    std::fabs(nd - kMostPopNdcg) <= kReproductionTolerance && runs.seconds < kReproductionSeconds;
    return {ok, "HR@5 " + fmt(hr) + " (target " + fmt(kMostPopHr) + "), NDCG@5 " + fmt(nd) + " (target " +
                    fmt(kMostPopNdcg) + "), " + std::to_string(runs.users) + " users, " + fmt(runs.seconds, 1) +
                    " s"};
}

Outcome bm25_reproduction() {
    const auto dir = beauty_dir();
    if (!dir) return beauty_unavailable();
    const auto& runs = beauty_runs(*dir);
    const double hr = *runs.bm25.aggregate.at("hr");
    return {std::fabs(hr - kBm25Hr) <= kReproductionTolerance,
            "HR@5 " + fmt(hr) + " (target " + fmt(kBm25Hr) + ")"};
}

// ---- 4: random ranker -------------------------------------------------------

Outcome random_sanity() {
    const PreparedData data = synthetic_data(kSanityUsers, 41);
    const auto users = all_users(data);
    auto model = model_of("random", data, 9);
    const EvalRun run = run_ranking_eval(ranking_config(), data, users, *model);
    const double hr = *run.report.aggregate.at("hr");
    return {std::fabs(hr - kRandomHr) <= kRandomTolerance,
            "HR@5 " + fmt(hr) + " over " + std::to_string(users.size()) + " users, 20-item pools"};
}

// ---- 5: position bias -------------------------------------------------------

Outcome position_bias() {
    const PreparedData data = synthetic_data(kSanityUsers, 43);
    const auto users = all_users(data);
    const ExperimentConfig cfg = ranking_config();
    const auto pools = build_pools(data, cfg, users);

    auto first_k = model_of("mock_first_k", data);
    const auto fk = run_position_bias(cfg, data, pools, *first_k);
    const bool fk_ok = std::fabs(fk.acc_random_hr - kRandomHr) <= kRandomTolerance && fk.acc_first_hr == 1.0;

    auto agnostic = model_of("mock_item_order", data);
    const auto ag = run_position_bias(cfg, data, pools, *agnostic);
    const bool ag_ok = std::fabs(ag.cand_dif_hr) < kPositionAgnosticCandDif &&
                       std::fabs(ag.cand_dif_ndcg) < kPositionAgnosticCandDif;

    bool baselines_ok = true;
    std::string baseline_detail;
    for (const char* kind : {"mostpop", "bm25"}) {
        auto model = model_of(kind, data);
        const auto r = run_position_bias(cfg, data, pools, *model);
        baselines_ok = baselines_ok && r.cand_dif_hr == 0.0 && r.cand_dif_ndcg == 0.0;
        baseline_detail += std::string(", ") + model->name() + " CandDif " + fmt(r.cand_dif_hr) + "/" +
                           fmt(r.cand_dif_ndcg);
    }
    return {fk_ok && ag_ok && baselines_ok,
            "first-K acc_random " + fmt(fk.acc_random_hr) + " acc_first " + fmt(fk.acc_first_hr) +
                ", item-order CandDif " + fmt(ag.cand_dif_hr) + "/" + fmt(ag.cand_dif_ndcg) + baseline_detail};
}

// ---- 6: hallucination replay ------------------------------------------------

// Swaps the second and third letters of the first word.
std::string misspell(const std::string& title) {
    std::string out = title;
    const auto space = out.find(' ');
    if (space != std::string::npos && space >= 3 && out[1] != out[2]) std::swap(out[1], out[2]);
    return out;
}

// Harmless surface changes that matching must see through.
std::string restyle(const std::string& title, std::size_t variant) {
    switch (variant % 4) {
        case 0:
            return title;
        case 1: {
            std::string up = title;
            for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            return up;
        }
        case 2:
            return "\"" + title + "\"";
        default: {
            std::string spaced;
            for (char c : title) spaced += c == ' ' ? std::string("  ") : std::string(1, c);
            return spaced + ".";
        }
    }
}

Outcome hallucination_replay() {
    const PreparedData data = synthetic_data(kHallucinationUsers, 47);
    const auto users = all_users(data);
    const ExperimentConfig cfg = ranking_config();
    const auto pools = arrange_pools(build_pools(data, cfg, users), Arrangement::shuffled, 5);
    const TitleIndex index(data.split.catalog);
    const std::size_t slots = users.size() * cfg.k;

    bool ok = true;
    std::string detail;
    std::uint64_t seed = 100;
    for (const double rate : kHallucinationRates) {
        const std::size_t faults = static_cast<std::size_t>(std::llround(rate * static_cast<double>(slots)));
        std::vector<std::size_t> order(slots);
        for (std::size_t i = 0; i < slots; ++i) order[i] = i;
        Rng rng(seed++);
        rng.shuffle(std::span<std::size_t>(order));
        const std::set<std::size_t> faulty(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(faults));

        std::vector<ResponseRecord> responses;
        bool planted_ok = true;
        for (std::size_t u = 0; u < pools.size(); ++u) {
            std::string text;
            for (std::size_t r = 0; r < cfg.k; ++r) {
                const std::size_t slot = u * cfg.k + r;
                const std::string& title = data.split.catalog.at(pools[u].items[r]);
                std::string line;
                if (faulty.count(slot)) {
                    line = slot % 3 == 0 ? "Imaginary Radiance Elixir " + std::to_string(slot) : misspell(title);
                    planted_ok = planted_ok && !index.lookup(normalize_title(line));
                } else {
                    line = restyle(title, slot);
                }
                text += std::to_string(r + 1) + ". " + line + "\n";
            }
            ResponseRecord rec;
            rec.user = pools[u].user;
            rec.output.text = text;
            responses.push_back(std::move(rec));
        }
        const auto matched = match_responses(responses, pools, data.split.catalog, cfg.k);
        std::size_t unmatched = 0;
        for (const auto& m : matched) unmatched += m.unmatched_count();
        const MetricReport report = score(data, cfg, pools, matched);
        const double got = *report.aggregate.at("hallucination");
        const bool this_ok = planted_ok && unmatched == faults && std::fabs(got - rate) <= kHallucinationTolerance;
        ok = ok && this_ok;
        detail += (detail.empty() ? "" : ", ") + fmt(got) + " (" + std::to_string(unmatched) + "/" +
                  std::to_string(slots) + ", planted " + fmt(rate) + ")";
    }
    return {ok, detail};
}

// ---- 7: K-S gate --------------------------------------------------------------

Outcome ks_gate() {
    std::vector<UserId> population;
    for (std::size_t i = 0; i < kGatePopulation; ++i) population.push_back("u" + std::to_string(i));
    int accepted = 0, rejected = 0;
    for (int trial = 0; trial < kGateTrials; ++trial) {
        Rng rng(static_cast<std::uint64_t>(trial) * 7919 + 1);
        ScoreTable scores, shifted;
        Accumulator mean;
        for (const auto& u : population) {
            scores[u] = rng.normal();
            mean.add(scores[u]);
        }
        double ss = 0;
        for (const auto& [u, s] : scores) ss += (s - mean.mean()) * (s - mean.mean());
        const double sd = std::sqrt(ss / static_cast<double>(population.size() - 1));
        for (const auto& [u, s] : scores) shifted[u] = s + sd;
        const auto seed = static_cast<std::uint64_t>(trial);
        try {
            sample_until_accepted(population, kGateSample, scores, kGateAlpha, seed, 1);
            ++accepted;
        } catch (const SampleRejected&) {
        }
        try {
            sample_until_accepted(population, kGateSample, scores, shifted, kGateAlpha, seed, 1);
        } catch (const SampleRejected&) {
            ++rejected;
        }
    }
    const double acc = static_cast<double>(accepted) / kGateTrials;
    const double rej = static_cast<double>(rejected) / kGateTrials;
    return {acc >= kGateAcceptRate && rej >= kGateRejectRate,
            "i.i.d. accepted " + fmt(acc, 3) + ", 1 s.d. shift rejected " + fmt(rej, 3) + " over " +
                std::to_string(kGateTrials) + " trials"};
}

// ---- 8: determinism ---------------------------------------------------------

int quiet_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "beyondrec");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream sink;
    auto* out = std::cout.rdbuf(sink.rdbuf());
    auto* err = std::cerr.rdbuf(sink.rdbuf());
    const int code = run_cli(static_cast<int>(argv.size()), argv.data());
    std::cout.rdbuf(out);
    std::cerr.rdbuf(err);
    return code;
}

Outcome determinism() {
    testing::TempDir tmp;
    testing::SyntheticSpec spec;
    spec.users = 300;
    spec.items = 100;
    testing::write_dataset(testing::synthetic_log(spec), tmp / "data",
                           {{"sample_n", 100},
                            {"strategy", "incontext"},
                            {"model", {{"kind", "mostpop"}}},
                            {"dataset", {{"k_core", 0}}}});
    const std::string config = (tmp / "data/config.json").string();
    std::vector<RunDirectory> runs;
    for (const char* name : {"a", "b"}) {
        const std::string dir = (tmp / name).string();
        for (const std::vector<std::string>& args :
             {std::vector<std::string>{"prepare", "--config", config, "--run-dir", dir},
              {"sample", "--run-dir", dir}, {"pools", "--run-dir", dir}, {"prompts", "--run-dir", dir}}) {
            if (const int code = quiet_cli(args); code != 0) {
                return {false, args[0] + " exited with " + std::to_string(code)};
            }
        }
        runs.emplace_back(tmp / name);
    }
    bool ok = true;
    std::string detail;
    for (const char* artifact : {"sample/users.jsonl", "pools.jsonl", "prompts.jsonl"}) {
        const bool same = read_file(runs[0].path(artifact)) == read_file(runs[1].path(artifact));
        const bool digests = runs[0].manifest().at("artifacts").at(artifact) ==
                             runs[1].manifest().at("artifacts").at(artifact);
        ok = ok && same && digests;
        if (!same || !digests) detail += std::string(artifact) + " differs; ";
    }
    for (const auto& r : runs) {
        const auto bad = r.verify();
        ok = ok && bad.empty();
        if (!bad.empty()) detail += "manifest mismatch in " + r.root().string() + "; ";
    }
    return {ok, detail.empty() ? "pools, prompts and sample byte-identical, manifest digests equal and verified"
                               : detail};
}

// ---- 9: truncation ------------------------------------------------------------

Outcome truncation() {
    const std::string alphabet = "abcd";
    Catalog catalog;
    for (char c : alphabet) catalog[std::string(1, c)] = std::string("Item ") + c;
    std::size_t sequences = 0, failures = 0;
    for (std::size_t n = 3; n <= kTruncationMaxLength; ++n) {
        std::size_t total = 1;
        for (std::size_t i = 0; i < n; ++i) total *= alphabet.size();
        for (std::size_t code = 0; code < total; ++code) {
            std::vector<ItemId> seq;
            for (std::size_t c = code, i = 0; i < n; ++i, c /= alphabet.size()) {
                seq.emplace_back(1, alphabet[c % alphabet.size()]);
            }
            SplitDataset split;
            split.catalog = catalog;
            split.users["u"] = UserSplit{seq, {seq.begin(), seq.end() - 2}, seq[n - 2], seq[n - 1]};
            ++sequences;
            const std::vector<ItemId> before(seq.begin(), seq.end() - 1);
            bool ok = true;
            const auto full = truncate_for_length(split, kFullHistory);
            ok = ok && full.eval_histories.at("u") == before && full.reduced_train == training_samples(split);
            const auto empty = truncate_for_length(split, 0);
            ok = ok && empty.eval_histories.at("u").empty() && empty.reduced_train.empty();
            for (std::size_t len = 1; len <= n; ++len) {
                const auto t = truncate_for_length(split, len);
                const std::vector<ItemId> window(
                    before.end() - static_cast<std::ptrdiff_t>(std::min(len, before.size())), before.end());
                const std::set<ItemId> members(window.begin(), window.end());
                std::vector<TrainingSample> want;
                for (std::size_t p = 0; p < before.size(); ++p) {
                    if (!members.count(before[p])) continue;
                    TrainingSample s{"u", {}, before[p]};
                    for (std::size_t q = 0; q < p; ++q) {
                        if (members.count(before[q])) s.history.push_back(before[q]);
                    }
                    want.push_back(std::move(s));
                }
                ok = ok && t.eval_histories.at("u") == window && t.reduced_train == want;
            }
            failures += ok ? 0 : 1;
        }
    }
    return {failures == 0, std::to_string(sequences) + " sequences of length 3.." +
                               std::to_string(kTruncationMaxLength) + ", " + std::to_string(failures) + " failures"};
}

// ---- 10: gateway contract ---------------------------------------------------

Outcome gateway_contract() {
    testing::TempDir tmp;
    bool ok = true;
    std::string detail;

    // Bounded concurrency and full cache reuse.
    {
        testing::MockChatServer server(testing::MockChatServer::echo(), 5);
        GatewayConfig g;
        g.endpoint = server.endpoint();
        g.max_in_flight = kGatewayBound;
        g.cache_dir = tmp / "cache";
        std::vector<CompletionRequest> batch;
        for (std::size_t i = 0; i < kGatewayRequests; ++i) batch.push_back({"mock", "prompt " + std::to_string(i)});
        LlmGateway first(g);
        const auto a = first.complete_all(batch);
        std::size_t errors = 0;
        for (const auto& r : a) errors += r.response ? 0 : 1;
        const bool bound_ok = static_cast<std::size_t>(server.max_in_flight()) <= kGatewayBound &&
                              first.max_observed_in_flight() <= kGatewayBound;
        LlmGateway second(g);
        const auto b = second.complete_all(batch);
        std::size_t same = 0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            same += (b[i].response && a[i].response && b[i].response->text == a[i].response->text) ? 1 : 0;
        }
        const bool cache_ok = second.network_calls() == 0 && second.cache_hits() == kGatewayRequests &&
                              same == kGatewayRequests;
        ok = ok && errors == 0 && bound_ok && cache_ok;
        detail += "peak in flight " + std::to_string(server.max_in_flight()) + "/" + std::to_string(kGatewayBound) +
                  ", rerun cache hits " + std::to_string(second.cache_hits()) + "/" +
                  std::to_string(kGatewayRequests) + " with " + std::to_string(second.network_calls()) +
                  " network calls";
    }

    // Each sleep is the larger of the backoff step and Retry-After.
    {
        const std::vector<testing::MockReply> script{
            {500, "boom", ""}, {429, "slow down", "0.7"}, {503, "busy", ""}, {429, "slow down", "0.05"},
            {200, "ranked list", ""}};
        testing::MockChatServer server([&](std::size_t i, const json&) { return script.at(i); });
        GatewayConfig g;
        g.endpoint = server.endpoint();
        g.retry.max_attempts = 5;
        g.retry.initial_backoff = Millis(100);
        g.retry.multiplier = 2.0;
        g.retry.max_backoff = Millis(10000);
        std::mutex m;
        std::vector<Millis> sleeps;
        LlmGateway gw(g, std::make_shared<HttpTransport>(g.endpoint, "", g.timeout), [&](Millis d) {
            std::lock_guard<std::mutex> lock(m);
            sleeps.push_back(d);
        });
        const auto r = gw.complete({"mock", "retry me"});
        const std::vector<Millis> want{Millis(100), Millis(700), Millis(400), Millis(800)};
        const bool retry_ok = sleeps == want && r.attempt_count == 5 && r.text == "ranked list";
        ok = ok && retry_ok;
        detail += ", sleeps";
        for (const auto& s : sleeps) detail += " " + std::to_string(s.count());
        detail += " ms (want 100 700 400 800)";
    }
    return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> only;
    bool require_data = false;
    app.add_option("--only", only, "Comma-separated criteria to run")->delimiter(',')->check(CLI::Range(1, 10));
    app.add_flag("--require-data", require_data, "Exit 77 when a criterion's dataset is unavailable");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"metric-oracle equivalence", metric_oracles},
        {"MostPop reproduction on Beauty", mostpop_reproduction},
        {"BM25 reproduction on Beauty", bm25_reproduction},
        {"random-ranking sanity", random_sanity},
        {"position-bias probe calibration", position_bias},
        {"hallucination fixture replay", hallucination_replay},
        {"K-S gate calibration", ks_gate},
        {"determinism of pools and prompts", determinism},
        {"history truncation properties", truncation},
        {"gateway contract", gateway_contract},
    };
    const std::set<int> selected(only.begin(), only.end());
    int failures = 0;
    bool missing = false;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
                  << o.detail << std::endl;
        if (o.data_missing) {
            missing = true;
        } else if (!o.pass) {
            ++failures;
        }
    }
    if (require_data && missing) return 77;
    return failures == 0 ? 0 : 1;
}
