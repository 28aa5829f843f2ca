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

// Experiment configuration, recommenders and the evaluation pipelines:
// ranking, history-length sweep, position bias, profiles and re-ranking.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beyondrec/baselines.hpp"
#include "beyondrec/candidates.hpp"
#include "beyondrec/corpus.hpp"
#include "beyondrec/llm_gateway.hpp"
#include "beyondrec/metrics.hpp"
#include "beyondrec/parsing.hpp"
#include "beyondrec/prompting.hpp"
#include "beyondrec/sampling.hpp"

namespace beyondrec {

enum class Task { ranking, rerank };
const char* to_string(Task task);
Task parse_task(const std::string& name);

// How pools are ordered before they are shown to a recommender.
enum class Arrangement { shuffled, positive_first, as_built };
const char* to_string(Arrangement a);
Arrangement parse_arrangement(const std::string& name);

struct ModelConfig {
    // llm | mostpop | bm25 | random | mock_first_k | mock_item_order |
    // mock_overlap | mock_monotone
    std::string kind = "llm";
    std::string name;
    GatewayConfig gateway;
    double temperature = 0.0;
    int max_tokens = 512;
    std::uint64_t seed = 0;
    Bm25Params bm25;
    std::size_t monotone_max_threshold = 10;
};

struct ProfileConfig {
    std::string kind = "llm";  // llm | verbatim | empty
    std::string model;
};

struct Seeds {
    std::uint64_t sample = 0;
    std::uint64_t pool = 1;
    std::uint64_t arrangement = 2;
};

struct ExperimentConfig {
    fs::path interactions;
    fs::path catalog;
    LogFormat format = LogFormat::jsonl;
    int k_core = 5;

    Task task = Task::ranking;
    ModelConfig model;
    Strategy strategy = Strategy::base;
    std::size_t k = 5;
    std::size_t m = 19;
    std::size_t sample_n = 1000;
    double alpha = 0.05;
    int max_attempts = 20;
    Seeds seeds;
    std::size_t history_length = kFullHistory;
    std::vector<std::size_t> history_lengths;
    Arrangement arrangement = Arrangement::shuffled;
    std::vector<fs::path> run_files;
    std::size_t rerank_pool_size = 20;
    ProfileConfig profile;
    fs::path template_dir;  // empty: built-in templates
    std::size_t demonstration_users = 3;
    std::size_t position_bucket_width = 4;
    SerendipityVariant serendipity_variant = SerendipityVariant::useful;
    std::string mostpop_scope = "pool";  // pool | catalog
    int repeats = 1;

    std::size_t pool_size() const { return task == Task::ranking ? m + 1 : rerank_pool_size; }
    void validate() const;
};

// Relative paths resolve against `base_dir`. Unknown keys are rejected.
ExperimentConfig config_from_json(const json& j, const fs::path& base_dir = {});
json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const fs::path& path);

// ---- data preparation -------------------------------------------------------

struct PreparedData {
    SplitDataset split;
    PopularityTable popularity;
    std::vector<ItemId> items;  // sorted catalog ids
    json stats = json::object();
};

PreparedData prepare_data(const ExperimentConfig& cfg);
PreparedData make_prepared(SplitDataset split);

// Per-user NDCG@K of MostPop on each user's ranking pool, for every user.
ScoreTable reference_scores(const PreparedData& data, const ExperimentConfig& cfg);
UserSample sample_users(const PreparedData& data, const ExperimentConfig& cfg);

// Unarranged pools for `users` (ranking or re-ranking per cfg.task).
std::vector<CandidatePool> build_pools(const PreparedData& data, const ExperimentConfig& cfg,
                                       std::span<const UserId> users, std::span<const RunFile> runs = {});
std::vector<CandidatePool> arrange_pools(std::span<const CandidatePool> pools, Arrangement arrangement,
                                         std::uint64_t seed);

std::map<UserId, std::vector<ItemId>> eval_histories(const PreparedData& data, std::span<const UserId> users,
                                                     std::size_t length);

// ---- recommenders -----------------------------------------------------------

struct RecRequest {
    const PromptRecord* prompt = nullptr;
    const CandidatePool* pool = nullptr;
    const std::vector<ItemId>* history = nullptr;
    std::size_t history_length = kFullHistory;  // configured window
    std::optional<std::string> profile;
    std::size_t k = 5;
    int repeat = 0;
};

// Either free text (to be parsed and matched) or a ranked id list.
struct RecOutput {
    std::optional<std::string> text;
    std::vector<ItemId> items;
    std::string error;
    bool transport_failure = false;
    bool from_cache = false;
    int attempts = 0;
};

class Recommender {
public:
    virtual ~Recommender() = default;
    virtual std::string name() const = 0;
    virtual std::vector<RecOutput> recommend(std::span<const RecRequest> requests) = 0;
};

std::unique_ptr<Recommender> make_recommender(const ModelConfig& model, const PreparedData& data,
                                              std::shared_ptr<LlmGateway> gateway = nullptr);

// "1. title" lines, as a well-behaved model would answer.
std::string titles_response(std::span<const ItemId> items, const Catalog& catalog);

class ProfileGenerator {
public:
    virtual ~ProfileGenerator() = default;
    virtual std::string name() const = 0;
    // One profile per prompt, in order.
    virtual std::vector<ProfileText> generate(std::span<const PromptRecord> prompts, const Catalog& catalog) = 0;
};

std::unique_ptr<ProfileGenerator> make_profile_generator(const ProfileConfig& profile, const ModelConfig& model,
                                                         std::shared_ptr<LlmGateway> gateway = nullptr);

// ---- pipeline ---------------------------------------------------------------

TemplateSet templates_for(const ExperimentConfig& cfg);

// Profiles built from each user's history window. Users with an empty
// window get an empty profile without a generator call.
std::map<UserId, ProfileText> generate_profiles(const ExperimentConfig& cfg, const PreparedData& data,
                                                const std::map<UserId, std::vector<ItemId>>& histories,
                                                ProfileGenerator& generator);

struct ResponseRecord {
    UserId user;
    RecOutput output;
};

json to_json(const ResponseRecord& r);
ResponseRecord response_from_json(const json& j);
void save_responses(std::span<const ResponseRecord> responses, const fs::path& path);
std::vector<ResponseRecord> load_responses(const fs::path& path);

std::vector<PromptRecord> render_prompts(const ExperimentConfig& cfg, const PreparedData& data,
                                         std::span<const CandidatePool> pools,
                                         const std::map<UserId, std::vector<ItemId>>& histories,
                                         Strategy strategy, std::size_t history_length,
                                         const std::map<UserId, ProfileText>* profiles = nullptr);

// The history shown to the recommender is each prompt's history snapshot.
std::vector<ResponseRecord> invoke(Recommender& recommender, std::span<const PromptRecord> prompts,
                                   std::span<const CandidatePool> pools, std::size_t history_length,
                                   std::size_t k, int repeat = 0);

std::vector<MatchedRecommendation> match_responses(std::span<const ResponseRecord> responses,
                                                   std::span<const CandidatePool> pools,
                                                   const Catalog& catalog, std::size_t k);

EvalContext build_context(const PreparedData& data, const ExperimentConfig& cfg,
                          std::span<const CandidatePool> pools);

MetricReport score(const PreparedData& data, const ExperimentConfig& cfg, std::span<const CandidatePool> pools,
                   std::span<const MatchedRecommendation> matched, json metadata = json::object());

struct EvalRun {
    std::vector<CandidatePool> pools;
    std::vector<PromptRecord> prompts;
    std::vector<ResponseRecord> responses;
    std::vector<MatchedRecommendation> matched;
    MetricReport report;
    bool failed = false;  // some responses hit transport failures
};

// Prompts, invocation, matching and scoring on already arranged pools.
EvalRun run_pipeline(const ExperimentConfig& cfg, const PreparedData& data, std::span<const CandidatePool> pools,
                     std::size_t history_length, Strategy strategy, Recommender& recommender,
                     const std::map<UserId, ProfileText>* profiles = nullptr, json metadata = json::object(),
                     int repeat = 0);

json base_metadata(const ExperimentConfig& cfg, const std::string& model_name);

// Mean of each aggregate and per-user value over repeated runs. Aggregates
// missing from any run stay absent.
MetricReport average_reports(std::span<const MetricReport> reports);

// Ranking evaluation over the sampled users; repeats > 1 average aggregates.
EvalRun run_ranking_eval(const ExperimentConfig& cfg, const PreparedData& data, std::span<const UserId> users,
                         Recommender& recommender);

struct SweepPoint {
    std::size_t length = 0;
    EvalRun run;
    std::vector<TrainingSample> reduced_train;
};

std::vector<SweepPoint> run_history_sweep(const ExperimentConfig& cfg, const PreparedData& data,
                                          std::span<const UserId> users, std::span<const std::size_t> lengths,
                                          Recommender& recommender);

struct PositionBucket {
    std::size_t first_position = 0;  // 1-based, inclusive
    std::size_t last_position = 0;
    std::size_t users = 0;
    std::size_t hits = 0;
    double ndcg_sum = 0.0;

    double hit_rate() const { return users ? static_cast<double>(hits) / static_cast<double>(users) : 0.0; }
};

struct PositionBiasResult {
    EvalRun shuffled;
    EvalRun first;
    std::vector<PositionBucket> buckets;
    double acc_random_hr = 0, acc_first_hr = 0, acc_random_ndcg = 0, acc_first_ndcg = 0;
    double cand_dif_hr = 0, cand_dif_ndcg = 0;
    std::size_t users_considered = 0;

    json to_json() const;
};

// Buckets over the positive's position in each pool.
std::vector<PositionBucket> position_buckets(std::span<const CandidatePool> pools, const MetricReport& report,
                                             std::size_t width);

// The positive-first pass uses the same shuffled pools with only the positive
// moved to the front. Pools without the positive are left out of CandDif.
PositionBiasResult run_position_bias(const ExperimentConfig& cfg, const PreparedData& data,
                                     std::span<const CandidatePool> base_pools, Recommender& recommender);

struct ProfileEvalResult {
    struct Point {
        std::size_t length = 0;
        std::vector<ProfileText> profiles;
        std::map<std::string, EvalRun> variants;  // history_only, profile_only, profile_plus_history
    };
    std::vector<Point> points;
};

ProfileEvalResult run_profile_eval(const ExperimentConfig& cfg, const PreparedData& data,
                                   std::span<const UserId> users, std::span<const std::size_t> lengths,
                                   Recommender& recommender, ProfileGenerator& generator);

struct RerankResult {
    PositionBiasResult bias;  // bias.shuffled is the main run
    std::map<std::string, MetricReport> baselines;
};

RerankResult run_rerank_eval(const ExperimentConfig& cfg, const PreparedData& data, std::span<const UserId> users,
                             std::span<const RunFile> runs, Recommender& recommender);

}  // namespace beyondrec
