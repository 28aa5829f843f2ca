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

#include "beyondrec/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace beyondrec {

const char* to_string(Task task) {
    return task == Task::ranking ? "ranking" : "rerank";
}

Task parse_task(const std::string& name) {
    if (name == "ranking") return Task::ranking;
    if (name == "rerank") return Task::rerank;
    throw UsageError("unknown task '" + name + "' (expected ranking or rerank)");
}

const char* to_string(Arrangement a) {
    switch (a) {
        case Arrangement::shuffled: return "shuffled";
        case Arrangement::positive_first: return "positive_first";
        case Arrangement::as_built: return "as_built";
    }
    return "shuffled";
}

Arrangement parse_arrangement(const std::string& name) {
    if (name == "shuffled") return Arrangement::shuffled;
    if (name == "positive_first") return Arrangement::positive_first;
    if (name == "as_built") return Arrangement::as_built;
    throw UsageError("unknown arrangement '" + name + "' (expected shuffled, positive_first or as_built)");
}

// ---- configuration ----------------------------------------------------------

namespace {

const std::set<std::string> kModelKinds{"llm",          "mostpop",         "bm25",         "random",
                                        "mock_first_k", "mock_item_order", "mock_overlap", "mock_monotone"};
const std::set<std::string> kProfileKinds{"llm", "verbatim", "empty"};

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw UsageError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw UsageError("unknown configuration key '" + where + "." + key + "'");
    }
}

fs::path resolve(const fs::path& base, const std::string& value) {
    if (value.empty()) return {};
    fs::path p(value);
    if (p.is_relative() && !base.empty()) p = base / p;
    return p.lexically_normal();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("configuration key '") + key + "': " + e.what());
    }
}

std::size_t length_from_json(const json& v) {
    if (v.is_null()) return kFullHistory;
    if (v.is_string() && (v == "full" || v == "all")) return kFullHistory;
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw UsageError("history length must be a non-negative integer, \"full\" or null");
    }
    return v.get<std::size_t>();
}

json length_to_json(std::size_t length) {
    return length == kFullHistory ? json(nullptr) : json(length);
}

}  // namespace

void ExperimentConfig::validate() const {
    if (k == 0) throw UsageError("K must be positive");
    if (task == Task::ranking && m == 0) throw UsageError("m must be positive");
    if (k > pool_size()) {
        throw UsageError("K=" + std::to_string(k) + " exceeds the pool size " + std::to_string(pool_size()));
    }
    if (sample_n == 0) throw UsageError("sample_n must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0, 1)");
    if (max_attempts < 1) throw UsageError("max_attempts must be at least 1");
    if (repeats < 1) throw UsageError("repeats must be at least 1");
    if (position_bucket_width == 0) throw UsageError("position_bucket_width must be positive");
    if (strategy == Strategy::profile_generation) {
        throw UsageError("profile_generation is not a recommendation strategy");
    }
    if (mostpop_scope != "pool" && mostpop_scope != "catalog") {
        throw UsageError("mostpop_scope must be pool or catalog");
    }
    if (task == Task::rerank && run_files.empty()) throw UsageError("the rerank task needs at least one run file");
    if (!kModelKinds.count(model.kind)) throw UsageError("unknown model kind '" + model.kind + "'");
    if (model.kind == "llm" && model.name.empty()) throw UsageError("an llm model needs a name");
    if (model.kind == "llm" && model.gateway.endpoint.empty()) throw UsageError("an llm model needs an endpoint");
    if (!kProfileKinds.count(profile.kind)) throw UsageError("unknown profile kind '" + profile.kind + "'");
}

ExperimentConfig config_from_json(const json& j, const fs::path& base_dir) {
    reject_unknown(j,
                   {"dataset", "task", "model", "strategy", "K", "m", "sample_n", "alpha", "max_attempts", "seeds",
                    "history_length", "history_lengths", "arrangement", "run_files", "rerank_pool_size", "profile",
                    "template_dir", "demonstration_users", "position_bucket_width", "serendipity_variant",
                    "mostpop_scope", "repeats"},
                   "config");
    ExperimentConfig c;
    if (!j.contains("dataset")) throw UsageError("configuration needs a dataset section");
    const json& d = j.at("dataset");
    reject_unknown(d, {"interactions", "catalog", "format", "k_core"}, "dataset");
    c.interactions = resolve(base_dir, get_or<std::string>(d, "interactions", ""));
    c.catalog = resolve(base_dir, get_or<std::string>(d, "catalog", ""));
    if (c.interactions.empty() || c.catalog.empty()) {
        throw UsageError("dataset.interactions and dataset.catalog are required");
    }
    c.format = parse_log_format(get_or<std::string>(d, "format", "jsonl"));
    c.k_core = get_or<int>(d, "k_core", c.k_core);

    c.task = parse_task(get_or<std::string>(j, "task", "ranking"));
    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m,
                       {"kind", "name", "endpoint", "api_key_env", "temperature", "max_tokens", "concurrency",
                        "min_request_interval_ms", "timeout_ms", "retry", "cache_dir", "seed", "bm25",
                        "monotone_max_threshold"},
                       "model");
        c.model.kind = get_or<std::string>(m, "kind", c.model.kind);
        c.model.name = get_or<std::string>(m, "name", c.model.kind == "llm" ? "" : c.model.kind);
        c.model.gateway.endpoint = get_or<std::string>(m, "endpoint", "");
        c.model.gateway.api_key_env = get_or<std::string>(m, "api_key_env", c.model.gateway.api_key_env);
        c.model.gateway.max_in_flight = get_or<std::size_t>(m, "concurrency", c.model.gateway.max_in_flight);
        if (c.model.gateway.max_in_flight == 0) throw UsageError("model.concurrency must be positive");
        c.model.gateway.min_request_interval = Millis(get_or<std::int64_t>(m, "min_request_interval_ms", 0));
        c.model.gateway.timeout = Millis(get_or<std::int64_t>(m, "timeout_ms", c.model.gateway.timeout.count()));
        if (m.contains("retry")) {
            const json& r = m.at("retry");
            reject_unknown(r, {"max_attempts", "initial_backoff_ms", "multiplier", "max_backoff_ms"}, "model.retry");
            auto& rp = c.model.gateway.retry;
            rp.max_attempts = get_or<int>(r, "max_attempts", rp.max_attempts);
            rp.initial_backoff = Millis(get_or<std::int64_t>(r, "initial_backoff_ms", rp.initial_backoff.count()));
            rp.multiplier = get_or<double>(r, "multiplier", rp.multiplier);
            rp.max_backoff = Millis(get_or<std::int64_t>(r, "max_backoff_ms", rp.max_backoff.count()));
        }
        c.model.gateway.cache_dir = resolve(base_dir, get_or<std::string>(m, "cache_dir", ""));
        c.model.temperature = get_or<double>(m, "temperature", c.model.temperature);
        c.model.max_tokens = get_or<int>(m, "max_tokens", c.model.max_tokens);
        c.model.seed = get_or<std::uint64_t>(m, "seed", c.model.seed);
        if (m.contains("bm25")) {
            const json& b = m.at("bm25");
            reject_unknown(b, {"k1", "b"}, "model.bm25");
            c.model.bm25.k1 = get_or<double>(b, "k1", c.model.bm25.k1);
            c.model.bm25.b = get_or<double>(b, "b", c.model.bm25.b);
        }
        c.model.monotone_max_threshold =
            get_or<std::size_t>(m, "monotone_max_threshold", c.model.monotone_max_threshold);
    }
    c.strategy = parse_strategy(get_or<std::string>(j, "strategy", "base"));
    c.k = get_or<std::size_t>(j, "K", c.k);
    c.m = get_or<std::size_t>(j, "m", c.m);
    c.sample_n = get_or<std::size_t>(j, "sample_n", c.sample_n);
    c.alpha = get_or<double>(j, "alpha", c.alpha);
    c.max_attempts = get_or<int>(j, "max_attempts", c.max_attempts);
    if (j.contains("seeds")) {
        const json& s = j.at("seeds");
        reject_unknown(s, {"sample", "pool", "arrangement"}, "seeds");
        c.seeds.sample = get_or<std::uint64_t>(s, "sample", c.seeds.sample);
        c.seeds.pool = get_or<std::uint64_t>(s, "pool", c.seeds.pool);
        c.seeds.arrangement = get_or<std::uint64_t>(s, "arrangement", c.seeds.arrangement);
    }
    if (j.contains("history_length")) c.history_length = length_from_json(j.at("history_length"));
    if (j.contains("history_lengths")) {
        for (const auto& v : j.at("history_lengths")) c.history_lengths.push_back(length_from_json(v));
    }
    c.arrangement = parse_arrangement(get_or<std::string>(j, "arrangement", "shuffled"));
    if (j.contains("run_files")) {
        for (const auto& v : j.at("run_files")) c.run_files.push_back(resolve(base_dir, v.get<std::string>()));
    }
    c.rerank_pool_size = get_or<std::size_t>(j, "rerank_pool_size", c.rerank_pool_size);
    if (j.contains("profile")) {
        const json& p = j.at("profile");
        reject_unknown(p, {"kind", "model"}, "profile");
        c.profile.kind = get_or<std::string>(p, "kind", c.profile.kind);
        c.profile.model = get_or<std::string>(p, "model", "");
    }
    c.template_dir = resolve(base_dir, get_or<std::string>(j, "template_dir", ""));
    c.demonstration_users = get_or<std::size_t>(j, "demonstration_users", c.demonstration_users);
    c.position_bucket_width = get_or<std::size_t>(j, "position_bucket_width", c.position_bucket_width);
    c.serendipity_variant = parse_serendipity_variant(get_or<std::string>(j, "serendipity_variant", "useful"));
    c.mostpop_scope = get_or<std::string>(j, "mostpop_scope", c.mostpop_scope);
    c.repeats = get_or<int>(j, "repeats", c.repeats);
    c.validate();
    return c;
}

json to_json(const ExperimentConfig& c) {
    json lengths = json::array();
    for (auto l : c.history_lengths) lengths.push_back(length_to_json(l));
    json runs = json::array();
    for (const auto& r : c.run_files) runs.push_back(r.string());
    const auto& g = c.model.gateway;
    return {
        {"dataset",
         {{"interactions", c.interactions.string()},
          {"catalog", c.catalog.string()},
          {"format", to_string(c.format)},
          {"k_core", c.k_core}}},
        {"task", to_string(c.task)},
        {"model",
         {{"kind", c.model.kind},
          {"name", c.model.name},
          {"endpoint", g.endpoint},
          {"api_key_env", g.api_key_env},
          {"temperature", c.model.temperature},
          {"max_tokens", c.model.max_tokens},
          {"concurrency", g.max_in_flight},
          {"min_request_interval_ms", g.min_request_interval.count()},
          {"timeout_ms", g.timeout.count()},
          {"retry",
           {{"max_attempts", g.retry.max_attempts},
            {"initial_backoff_ms", g.retry.initial_backoff.count()},
            {"multiplier", g.retry.multiplier},
            {"max_backoff_ms", g.retry.max_backoff.count()}}},
          {"cache_dir", g.cache_dir.string()},
          {"seed", c.model.seed},
          {"bm25", {{"k1", c.model.bm25.k1}, {"b", c.model.bm25.b}}},
          {"monotone_max_threshold", c.model.monotone_max_threshold}}},
        {"strategy", to_string(c.strategy)},
        {"K", c.k},
        {"m", c.m},
        {"sample_n", c.sample_n},
        {"alpha", c.alpha},
        {"max_attempts", c.max_attempts},
        {"seeds", {{"sample", c.seeds.sample}, {"pool", c.seeds.pool}, {"arrangement", c.seeds.arrangement}}},
        {"history_length", length_to_json(c.history_length)},
        {"history_lengths", lengths},
        {"arrangement", to_string(c.arrangement)},
        {"run_files", runs},
        {"rerank_pool_size", c.rerank_pool_size},
        {"profile", {{"kind", c.profile.kind}, {"model", c.profile.model}}},
        {"template_dir", c.template_dir.string()},
        {"demonstration_users", c.demonstration_users},
        {"position_bucket_width", c.position_bucket_width},
        {"serendipity_variant", to_string(c.serendipity_variant)},
        {"mostpop_scope", c.mostpop_scope},
        {"repeats", c.repeats},
    };
}

ExperimentConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw PreconditionError("configuration file not found: " + path.string());
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 1, e.what());
    }
    return config_from_json(j, fs::absolute(path).parent_path());
}

// ---- data -------------------------------------------------------------------

PreparedData make_prepared(SplitDataset split) {
    PreparedData data;
    data.popularity = popularity_table(split);
    data.items = catalog_items(split.catalog);
    std::size_t interactions = 0;
    for (const auto& [user, us] : split.users) interactions += us.history.size();
    data.stats = {{"users", split.users.size()},
                  {"items", split.catalog.size()},
                  {"interactions", interactions},
                  {"density", split.users.empty() || split.catalog.empty()
                                  ? 0.0
                                  : static_cast<double>(interactions) /
                                        (static_cast<double>(split.users.size()) *
                                         static_cast<double>(split.catalog.size()))}};
    data.split = std::move(split);
    return data;
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
    const InteractionLog raw = load_interactions(cfg.interactions, cfg.format, cfg.catalog);
    const InteractionLog filtered = cfg.k_core > 0 ? k_core_filter(raw, cfg.k_core) : raw;
    PreparedData data = make_prepared(leave_one_out_split(filtered));
    data.stats["raw_interactions"] = raw.interactions.size();
    data.stats["raw_users"] = raw.user_count();
    data.stats["raw_items"] = raw.item_count();
    data.stats["k_core"] = cfg.k_core;
    return data;
}

ScoreTable reference_scores(const PreparedData& data, const ExperimentConfig& cfg) {
    ScoreTable scores;
    for (const auto& [user, us] : data.split.users) {
        const auto pool = build_ranking_pool(user, data.split, data.items, cfg.m, derive_seed(cfg.seeds.pool, user));
        const auto top = mostpop_rank(pool, data.popularity).top(cfg.k);
        double v = 0.0;
        for (std::size_t r = 0; r < top.size(); ++r) {
            if (top[r] == us.test) v = 1.0 / std::log2(static_cast<double>(r) + 2.0);
        }
        scores[user] = v;
    }
    return scores;
}

UserSample sample_users(const PreparedData& data, const ExperimentConfig& cfg) {
    if (cfg.sample_n > data.split.users.size()) {
        throw PreconditionError("sample_n=" + std::to_string(cfg.sample_n) + " exceeds the " +
                                std::to_string(data.split.users.size()) + " test users");
    }
    return sample_until_accepted(data.split, cfg.sample_n, reference_scores(data, cfg), cfg.alpha, cfg.seeds.sample,
                                 cfg.max_attempts);
}

std::vector<CandidatePool> build_pools(const PreparedData& data, const ExperimentConfig& cfg,
                                       std::span<const UserId> users, std::span<const RunFile> runs) {
    std::vector<CandidatePool> pools;
    pools.reserve(users.size());
    for (const auto& user : users) {
        if (cfg.task == Task::ranking) {
            pools.push_back(build_ranking_pool(user, data.split, data.items, cfg.m, derive_seed(cfg.seeds.pool, user)));
        } else {
            pools.push_back(build_rerank_pool(user, data.split.at(user).test, runs, cfg.rerank_pool_size));
        }
    }
    return pools;
}

std::vector<CandidatePool> arrange_pools(std::span<const CandidatePool> pools, Arrangement arrangement,
                                         std::uint64_t seed) {
    std::vector<CandidatePool> out;
    out.reserve(pools.size());
    for (const auto& pool : pools) {
        switch (arrangement) {
            case Arrangement::shuffled:
                out.push_back(arrange_pool(pool, Shuffled{derive_seed(seed, pool.user)}));
                break;
            case Arrangement::positive_first:
                out.push_back(pool.contains_positive() ? arrange_pool(pool, PositiveFirst{}) : pool);
                break;
            case Arrangement::as_built:
                out.push_back(pool);
                break;
        }
    }
    return out;
}

std::map<UserId, std::vector<ItemId>> eval_histories(const PreparedData& data, std::span<const UserId> users,
                                                     std::size_t length) {
    std::map<UserId, std::vector<ItemId>> out;
    for (const auto& user : users) out[user] = last_n(data.split.at(user).before_test(), length);
    return out;
}

// ---- recommenders -----------------------------------------------------------

std::string titles_response(std::span<const ItemId> items, const Catalog& catalog) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out.push_back('\n');
        out += std::to_string(i + 1) + ". " + catalog.at(items[i]);
    }
    return out;
}

namespace {

std::vector<ItemId> first_k(const std::vector<ItemId>& items, std::size_t k) {
    return {items.begin(), items.begin() + static_cast<std::ptrdiff_t>(std::min(k, items.size()))};
}

class LlmRecommender : public Recommender {
public:
    LlmRecommender(ModelConfig model, std::shared_ptr<LlmGateway> gateway)
        : model_(std::move(model)), gateway_(std::move(gateway)) {}
    std::string name() const override { return model_.name; }

    std::vector<RecOutput> recommend(std::span<const RecRequest> requests) override {
        std::vector<CompletionRequest> batch;
        batch.reserve(requests.size());
        for (const auto& r : requests) {
            if (!r.prompt) throw PreconditionError("llm recommender needs rendered prompts");
            batch.push_back({model_.name, r.prompt->text, model_.temperature, model_.max_tokens, r.repeat});
        }
        auto results = gateway_->complete_all(batch);
        std::vector<RecOutput> out(results.size());
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (results[i].response) {
                out[i].text = results[i].response->text;
                out[i].from_cache = results[i].response->from_cache;
                out[i].attempts = results[i].response->attempt_count;
            } else {
                out[i].error = results[i].error;
                out[i].transport_failure = results[i].transport_failure;
            }
        }
        return out;
    }

private:
    ModelConfig model_;
    std::shared_ptr<LlmGateway> gateway_;
};

class MostPopRecommender : public Recommender {
public:
    explicit MostPopRecommender(const PopularityTable& pop) : pop_(pop) {}
    std::string name() const override { return "MostPop"; }
    std::vector<RecOutput> recommend(std::span<const RecRequest> requests) override {
        std::vector<RecOutput> out(requests.size());
        for (std::size_t i = 0; i < requests.size(); ++i) {
            out[i].items = mostpop_rank(*requests[i].pool, pop_).top(requests[i].k);
        }
        return out;
    }

private:
    const PopularityTable& pop_;
};

class Bm25Recommender : public Recommender {
public:
    Bm25Recommender(const PreparedData& data, Bm25Params params) : data_(data), params_(params) {}
    std::string name() const override { return "BM25"; }
    std::vector<RecOutput> recommend(std::span<const RecRequest> requests) override {
        std::vector<RecOutput> out(requests.size());
        for (std::size_t i = 0; i < requests.size(); ++i) {
            const auto& r = requests[i];
            const Bm25Corpus& corpus = corpus_for(r.history_length);
            std::vector<std::string> titles;
            for (const auto& item : *r.history) titles.push_back(data_.split.catalog.at(item));
            out[i].items = bm25_rank(*r.pool, titles, data_.split.catalog, corpus, params_).top(r.k);
        }
        return out;
    }

private:
    const Bm25Corpus& corpus_for(std::size_t length) {
        auto it = corpora_.find(length);
        if (it != corpora_.end()) return it->second;
        std::map<UserId, std::vector<ItemId>> histories;
        for (const auto& [user, us] : data_.split.users) histories[user] = last_n(us.before_test(), length);
        return corpora_.emplace(length, Bm25Corpus::from_histories(histories, data_.split.catalog)).first->second;
    }

    const PreparedData& data_;
    Bm25Params params_;
    std::map<std::size_t, Bm25Corpus> corpora_;
};

// Uniform permutation of the pool that ignores presentation order.
class RandomRecommender : public Recommender {
public:
    explicit RandomRecommender(std::uint64_t seed) : seed_(seed) {}
    std::string name() const override { return "Random"; }
    std::vector<RecOutput> recommend(std::span<const RecRequest> requests) override {
        std::vector<RecOutput> out(requests.size());
        for (std::size_t i = 0; i < requests.size(); ++i) {
            const auto& r = requests[i];
            std::vector<ItemId> items = r.pool->items;
            std::sort(items.begin(), items.end());
            Rng rng(mix_seed(derive_seed(seed_, r.pool->user), static_cast<std::uint64_t>(r.repeat)));
            rng.shuffle(std::span<ItemId>(items));
            out[i].items = first_k(items, r.k);
        }
        return out;
    }

private:
    std::uint64_t seed_;
};

// Text-answering mocks share the rendering of their choice as a title list.
class TextMock : public Recommender {
public:
    TextMock(std::string name, const Catalog& catalog) : catalog_(catalog), name_(std::move(name)) {}
    std::string name() const override { return name_; }
    std::vector<RecOutput> recommend(std::span<const RecRequest> requests) override {
        std::vector<RecOutput> out(requests.size());
        for (std::size_t i = 0; i < requests.size(); ++i) {
            out[i].text = titles_response(choose(requests[i]), catalog_);
        }
        return out;
    }

protected:
    virtual std::vector<ItemId> choose(const RecRequest& r) = 0;
    const Catalog& catalog_;

private:
    std::string name_;
};

class FirstKMock : public TextMock {
public:
    using TextMock::TextMock;

protected:
    std::vector<ItemId> choose(const RecRequest& r) override { return first_k(r.pool->items, r.k); }
};

class ItemOrderMock : public TextMock {
public:
    using TextMock::TextMock;

protected:
    std::vector<ItemId> choose(const RecRequest& r) override {
        std::vector<ItemId> items = r.pool->items;
        std::sort(items.begin(), items.end());
        return first_k(items, r.k);
    }
};

// Ranks candidates by how many of their title tokens occur in the visible
// history titles or the profile text.
class OverlapMock : public TextMock {
public:
    using TextMock::TextMock;

protected:
    std::vector<ItemId> choose(const RecRequest& r) override {
        std::set<std::string> known;
        for (const auto& item : *r.history) {
            for (auto& t : tokenize(catalog_.at(item))) known.insert(std::move(t));
        }
        if (r.profile) {
            for (auto& t : tokenize(*r.profile)) known.insert(std::move(t));
        }
        std::vector<std::pair<ItemId, double>> scored;
        for (const auto& item : r.pool->items) {
            const auto tokens = tokenize(catalog_.at(item));
            const std::set<std::string> distinct(tokens.begin(), tokens.end());
            double s = 0;
            for (const auto& t : distinct) s += known.count(t) ? 1 : 0;
            scored.emplace_back(item, s);
        }
        return sort_ranked(r.pool->user, std::move(scored)).top(r.k);
    }
};

// Hits the positive once the visible history reaches a per-user threshold,
// so accuracy can only grow with the window.
class MonotoneMock : public TextMock {
public:
    MonotoneMock(std::string name, const Catalog& catalog, std::uint64_t seed, std::size_t max_threshold)
        : TextMock(std::move(name), catalog), seed_(seed), max_threshold_(max_threshold) {}

protected:
    std::vector<ItemId> choose(const RecRequest& r) override {
        const std::size_t threshold = derive_seed(seed_, r.pool->user) % (max_threshold_ + 1);
        const bool hit = r.pool->contains_positive() && r.history->size() >= threshold;
        std::vector<ItemId> out;
        if (hit) out.push_back(r.pool->positive_item);
        for (const auto& item : r.pool->items) {
            if (out.size() == r.k) break;
            if (item != r.pool->positive_item) out.push_back(item);
        }
        return out;
    }

private:
    std::uint64_t seed_;
    std::size_t max_threshold_;
};

class LlmProfileGenerator : public ProfileGenerator {
public:
    LlmProfileGenerator(std::string model, const ModelConfig& base, std::shared_ptr<LlmGateway> gateway)
        : model_(std::move(model)), base_(base), gateway_(std::move(gateway)) {}
    std::string name() const override { return model_; }
    std::vector<ProfileText> generate(std::span<const PromptRecord> prompts, const Catalog&) override {
        std::vector<CompletionRequest> batch;
        for (const auto& p : prompts) batch.push_back({model_, p.text, base_.temperature, base_.max_tokens, 0});
        auto results = gateway_->complete_all(batch);
        std::vector<ProfileText> out;
        std::size_t failures = 0;
        std::string first_error;
        for (std::size_t i = 0; i < results.size(); ++i) {
            if (!results[i].response && results[i].transport_failure) {
                if (failures++ == 0) first_error = results[i].error;
            }
            out.push_back({prompts[i].user, results[i].response ? results[i].response->text : std::string(),
                           prompts[i].history_snapshot.size(), model_});
        }
        if (failures) {
            throw TransportError(std::to_string(failures) + " profile request(s) failed; first: " + first_error);
        }
        return out;
    }

private:
    std::string model_;
    ModelConfig base_;
    std::shared_ptr<LlmGateway> gateway_;
};

// Emits the history titles themselves, one per line.
class VerbatimProfileGenerator : public ProfileGenerator {
public:
    std::string name() const override { return "verbatim"; }
    std::vector<ProfileText> generate(std::span<const PromptRecord> prompts, const Catalog& catalog) override {
        std::vector<ProfileText> out;
        for (const auto& p : prompts) {
            std::string text;
            for (const auto& item : p.history_snapshot) {
                if (!text.empty()) text.push_back('\n');
                text += catalog.at(item);
            }
            out.push_back({p.user, text, p.history_snapshot.size(), name()});
        }
        return out;
    }
};

class EmptyProfileGenerator : public ProfileGenerator {
public:
    std::string name() const override { return "empty"; }
    std::vector<ProfileText> generate(std::span<const PromptRecord> prompts, const Catalog&) override {
        std::vector<ProfileText> out;
        for (const auto& p : prompts) out.push_back({p.user, "", p.history_snapshot.size(), name()});
        return out;
    }
};

}  // namespace

std::unique_ptr<Recommender> make_recommender(const ModelConfig& model, const PreparedData& data,
                                              std::shared_ptr<LlmGateway> gateway) {
    const Catalog& catalog = data.split.catalog;
    if (model.kind == "llm") {
        if (!gateway) gateway = std::make_shared<LlmGateway>(model.gateway);
        return std::make_unique<LlmRecommender>(model, std::move(gateway));
    }
    if (model.kind == "mostpop") return std::make_unique<MostPopRecommender>(data.popularity);
    if (model.kind == "bm25") return std::make_unique<Bm25Recommender>(data, model.bm25);
    if (model.kind == "random") return std::make_unique<RandomRecommender>(model.seed);
    if (model.kind == "mock_first_k") return std::make_unique<FirstKMock>("mock_first_k", catalog);
    if (model.kind == "mock_item_order") return std::make_unique<ItemOrderMock>("mock_item_order", catalog);
    if (model.kind == "mock_overlap") return std::make_unique<OverlapMock>("mock_overlap", catalog);
    if (model.kind == "mock_monotone") {
        return std::make_unique<MonotoneMock>("mock_monotone", catalog, model.seed, model.monotone_max_threshold);
    }
    throw UsageError("unknown model kind '" + model.kind + "'");
}

std::unique_ptr<ProfileGenerator> make_profile_generator(const ProfileConfig& profile, const ModelConfig& model,
                                                         std::shared_ptr<LlmGateway> gateway) {
    if (profile.kind == "verbatim") return std::make_unique<VerbatimProfileGenerator>();
    if (profile.kind == "empty") return std::make_unique<EmptyProfileGenerator>();
    if (profile.kind == "llm") {
        const std::string name = profile.model.empty() ? model.name : profile.model;
        if (name.empty()) throw UsageError("profile generation needs a model name");
        if (!gateway) {
            if (model.gateway.endpoint.empty()) throw UsageError("profile generation needs a model endpoint");
            gateway = std::make_shared<LlmGateway>(model.gateway);
        }
        return std::make_unique<LlmProfileGenerator>(name, model, std::move(gateway));
    }
    throw UsageError("unknown profile kind '" + profile.kind + "'");
}

// ---- pipeline ---------------------------------------------------------------

json to_json(const ResponseRecord& r) {
    return {{"user", r.user},
            {"text", r.output.text ? json(*r.output.text) : json(nullptr)},
            {"items", r.output.items},
            {"error", r.output.error},
            {"transport_failure", r.output.transport_failure},
            {"from_cache", r.output.from_cache},
            {"attempts", r.output.attempts}};
}

ResponseRecord response_from_json(const json& j) {
    ResponseRecord r;
    r.user = j.at("user").get<UserId>();
    if (!j.at("text").is_null()) r.output.text = j.at("text").get<std::string>();
    r.output.items = j.value("items", std::vector<ItemId>{});
    r.output.error = j.value("error", std::string());
    r.output.transport_failure = j.value("transport_failure", false);
    r.output.from_cache = j.value("from_cache", false);
    r.output.attempts = j.value("attempts", 0);
    return r;
}

void save_responses(std::span<const ResponseRecord> responses, const fs::path& path) {
    std::vector<json> records;
    for (const auto& r : responses) records.push_back(to_json(r));
    write_jsonl(path, records);
}

std::vector<ResponseRecord> load_responses(const fs::path& path) {
    std::vector<ResponseRecord> out;
    std::size_t line = 0;
    for (const auto& j : read_jsonl(path)) {
        ++line;
        try {
            out.push_back(response_from_json(j));
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line, e.what());
        }
    }
    return out;
}

TemplateSet templates_for(const ExperimentConfig& cfg) {
    return cfg.template_dir.empty() ? TemplateSet::builtin() : TemplateSet::load(cfg.template_dir);
}

std::map<UserId, ProfileText> generate_profiles(const ExperimentConfig& cfg, const PreparedData& data,
                                                const std::map<UserId, std::vector<ItemId>>& histories,
                                                ProfileGenerator& generator) {
    const PromptRenderer renderer(templates_for(cfg), data.split.catalog);
    std::vector<PromptRecord> prompts;
    std::map<UserId, ProfileText> out;
    for (const auto& [user, history] : histories) {
        if (history.empty()) {
            out[user] = ProfileText{user, "", 0, generator.name()};
        } else {
            prompts.push_back(renderer.render_profile_prompt(user, history));
        }
    }
    for (auto& p : generator.generate(prompts, data.split.catalog)) out[p.user] = std::move(p);
    return out;
}

std::vector<PromptRecord> render_prompts(const ExperimentConfig& cfg, const PreparedData& data,
                                         std::span<const CandidatePool> pools,
                                         const std::map<UserId, std::vector<ItemId>>& histories,
                                         Strategy strategy, std::size_t history_length,
                                         const std::map<UserId, ProfileText>* profiles) {
    const PromptRenderer renderer(templates_for(cfg), data.split.catalog);
    const auto selector = history_length_selector(cfg.demonstration_users);
    const std::vector<ItemId> none;
    std::vector<PromptRecord> prompts;
    prompts.reserve(pools.size());
    for (const auto& pool : pools) {
        auto h = histories.find(pool.user);
        if (h == histories.end()) throw PreconditionError("no history for user " + pool.user);
        std::optional<ProfileText> profile;
        if (needs_profile(strategy)) {
            if (!profiles) throw PreconditionError(std::string("strategy ") + to_string(strategy) + " needs profiles");
            auto p = profiles->find(pool.user);
            if (p == profiles->end()) throw PreconditionError("no profile for user " + pool.user);
            profile = p->second;
        }
        std::string demonstration;
        if (strategy == Strategy::incontext) {
            const auto users = selector(pool.user, h->second.size(), data.split);
            demonstration = render_demonstration(users, data.split, history_length);
        }
        const auto& history = strategy == Strategy::profile_only ? none : h->second;
        prompts.push_back(renderer.render(strategy, pool.user, history, pool, profile, cfg.k, demonstration));
    }
    return prompts;
}

std::vector<ResponseRecord> invoke(Recommender& recommender, std::span<const PromptRecord> prompts,
                                   std::span<const CandidatePool> pools, std::size_t history_length,
                                   std::size_t k, int repeat) {
    if (prompts.size() != pools.size()) throw PreconditionError("prompts and pools differ in length");
    std::vector<RecRequest> requests;
    requests.reserve(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        if (prompts[i].user != pools[i].user) {
            throw PreconditionError("prompt/pool order mismatch at user " + prompts[i].user);
        }
        requests.push_back({&prompts[i], &pools[i], &prompts[i].history_snapshot, history_length,
                            prompts[i].profile_text, k, repeat});
    }
    auto outputs = recommender.recommend(requests);
    std::vector<ResponseRecord> out;
    out.reserve(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) out.push_back({pools[i].user, std::move(outputs[i])});
    return out;
}

std::vector<MatchedRecommendation> match_responses(std::span<const ResponseRecord> responses,
                                                   std::span<const CandidatePool> pools,
                                                   const Catalog& catalog, std::size_t k) {
    std::map<UserId, const CandidatePool*> by_user;
    for (const auto& p : pools) by_user[p.user] = &p;
    const TitleIndex index(catalog);
    std::vector<MatchedRecommendation> out;
    out.reserve(responses.size());
    for (const auto& r : responses) {
        auto it = by_user.find(r.user);
        if (it == by_user.end()) throw PreconditionError("response for user " + r.user + " has no pool");
        if (r.output.text) {
            const auto titles = parse_ranked_list(*r.output.text, k);
            out.push_back(match_titles(r.user, titles, *it->second, catalog, index, k));
        } else if (!r.output.items.empty()) {
            out.push_back(from_ranked_items(r.user, r.output.items, *it->second, catalog, k));
        } else {
            MatchedRecommendation empty;
            empty.user = r.user;
            empty.k = k;
            empty.parse_failed = true;
            out.push_back(std::move(empty));
        }
    }
    return out;
}

EvalContext build_context(const PreparedData& data, const ExperimentConfig& cfg,
                          std::span<const CandidatePool> pools) {
    EvalContext ctx = make_context(data.split, data.popularity, pools, cfg.k);
    if (cfg.mostpop_scope == "pool") {
        for (const auto& pool : pools) ctx.mostpop_topk[pool.user] = mostpop_rank(pool, data.popularity).top(cfg.k);
    } else {
        std::vector<std::pair<std::int64_t, ItemId>> order;
        for (const auto& [item, count] : data.popularity.pop) order.emplace_back(-count, item);
        std::sort(order.begin(), order.end());
        for (const auto& pool : pools) {
            const auto seen = data.split.at(pool.user).before_test();
            const std::set<ItemId> excluded(seen.begin(), seen.end());
            auto& top = ctx.mostpop_topk[pool.user];
            for (const auto& [neg, item] : order) {
                if (top.size() == cfg.k) break;
                if (!excluded.count(item)) top.push_back(item);
            }
        }
    }
    return ctx;
}

MetricReport score(const PreparedData& data, const ExperimentConfig& cfg, std::span<const CandidatePool> pools,
                   std::span<const MatchedRecommendation> matched, json metadata) {
    const EvalContext ctx = build_context(data, cfg, pools);
    MetricOptions options;
    options.serendipity_variant = cfg.serendipity_variant;
    MetricReport report = evaluate(to_rec_map(matched), ctx, options);
    report.metadata["mostpop_scope"] = cfg.mostpop_scope;
    for (const auto& [key, value] : metadata.items()) report.metadata[key] = value;
    return report;
}

json base_metadata(const ExperimentConfig& cfg, const std::string& model_name) {
    return {{"task", to_string(cfg.task)},
            {"arrangement", to_string(cfg.arrangement)},
            {"L", length_to_json(cfg.history_length)},
            {"strategy", to_string(cfg.strategy)},
            {"model", model_name},
            {"model_kind", cfg.model.kind},
            {"seeds", {{"sample", cfg.seeds.sample}, {"pool", cfg.seeds.pool}, {"arrangement", cfg.seeds.arrangement}}},
            {"template_version", templates_for(cfg).version},
            {"m", cfg.m}};
}

EvalRun run_pipeline(const ExperimentConfig& cfg, const PreparedData& data, std::span<const CandidatePool> pools,
                     std::size_t history_length, Strategy strategy, Recommender& recommender,
                     const std::map<UserId, ProfileText>* profiles, json metadata, int repeat) {
    EvalRun run;
    run.pools.assign(pools.begin(), pools.end());
    std::vector<UserId> users;
    for (const auto& p : pools) users.push_back(p.user);
    const auto histories = eval_histories(data, users, history_length);
    run.prompts = render_prompts(cfg, data, pools, histories, strategy, history_length, profiles);
    run.responses = invoke(recommender, run.prompts, pools, history_length, cfg.k, repeat);
    std::size_t failures = 0;
    for (const auto& r : run.responses) failures += r.output.transport_failure ? 1 : 0;
    run.failed = failures > 0;
    run.matched = match_responses(run.responses, pools, data.split.catalog, cfg.k);
    metadata["L"] = length_to_json(history_length);
    metadata["strategy"] = to_string(strategy);
    metadata["transport_failures"] = failures;
    if (repeat) metadata["repeat"] = repeat;
    run.report = score(data, cfg, pools, run.matched, metadata);
    return run;
}

EvalRun run_ranking_eval(const ExperimentConfig& cfg, const PreparedData& data, std::span<const UserId> users,
                         Recommender& recommender) {
    const auto pools = arrange_pools(build_pools(data, cfg, users), cfg.arrangement, cfg.seeds.arrangement);
    const json meta = base_metadata(cfg, recommender.name());
    EvalRun first = run_pipeline(cfg, data, pools, cfg.history_length, cfg.strategy, recommender, nullptr, meta);
    if (cfg.repeats == 1) return first;
    std::vector<MetricReport> reports{first.report};
    for (int rep = 1; rep < cfg.repeats; ++rep) {
        EvalRun again = run_pipeline(cfg, data, pools, cfg.history_length, cfg.strategy, recommender, nullptr, meta, rep);
        first.failed = first.failed || again.failed;
        reports.push_back(std::move(again.report));
    }
    first.report = average_reports(reports);
    return first;
}

MetricReport average_reports(std::span<const MetricReport> reports) {
    if (reports.empty()) throw PreconditionError("no reports to average");
    MetricReport out = reports.front();
    if (reports.size() == 1) return out;
    std::map<std::string, Accumulator> sums;
    json per_repeat = json::array();
    for (const auto& r : reports) {
        json agg = json::object();
        for (const auto& [name, v] : r.aggregate) {
            if (v) sums[name].add(*v);
            agg[name] = v ? json(*v) : json(nullptr);
        }
        per_repeat.push_back(agg);
    }
    for (auto& [name, v] : out.aggregate) {
        auto it = sums.find(name);
        v = (it != sums.end() && it->second.count() == reports.size()) ? std::optional<double>(it->second.mean())
                                                                        : std::nullopt;
    }
    for (auto& [user, values] : out.per_user) {
        for (auto& [name, v] : values) {
            Accumulator acc;
            for (const auto& r : reports) {
                auto u = r.per_user.find(user);
                if (u == r.per_user.end()) continue;
                auto m = u->second.find(name);
                if (m != u->second.end()) acc.add(m->second);
            }
            v = acc.mean();
        }
    }
    out.metadata["repeats"] = reports.size();
    out.metadata["repeat_aggregates"] = per_repeat;
    return out;
}

std::vector<SweepPoint> run_history_sweep(const ExperimentConfig& cfg, const PreparedData& data,
                                          std::span<const UserId> users, std::span<const std::size_t> lengths,
                                          Recommender& recommender) {
    if (lengths.empty()) throw UsageError("history sweep needs at least one length");
    const auto pools = arrange_pools(build_pools(data, cfg, users), cfg.arrangement, cfg.seeds.arrangement);
    std::vector<SweepPoint> out;
    for (const auto length : lengths) {
        SweepPoint point;
        point.length = length;
        point.run = run_pipeline(cfg, data, pools, length, cfg.strategy, recommender, nullptr,
                                 base_metadata(cfg, recommender.name()));
        point.reduced_train = truncate_for_length(data.split, length).reduced_train;
        out.push_back(std::move(point));
    }
    return out;
}

json PositionBiasResult::to_json() const {
    json buckets_json = json::array();
    for (const auto& b : buckets) {
        buckets_json.push_back({{"first_position", b.first_position},
                                {"last_position", b.last_position},
                                {"users", b.users},
                                {"hits", b.hits},
                                {"hr", b.hit_rate()},
                                {"ndcg", b.users ? b.ndcg_sum / static_cast<double>(b.users) : 0.0}});
    }
    return {{"users_considered", users_considered},
            {"acc_random", {{"hr", acc_random_hr}, {"ndcg", acc_random_ndcg}}},
            {"acc_first", {{"hr", acc_first_hr}, {"ndcg", acc_first_ndcg}}},
            {"cand_dif", {{"hr", cand_dif_hr}, {"ndcg", cand_dif_ndcg}}},
            {"buckets", buckets_json}};
}

std::vector<PositionBucket> position_buckets(std::span<const CandidatePool> pools, const MetricReport& report,
                                             std::size_t width) {
    if (width == 0) throw UsageError("bucket width must be positive");
    std::size_t max_size = 0;
    for (const auto& p : pools) max_size = std::max(max_size, p.items.size());
    const std::size_t n = (max_size + width - 1) / width;
    std::vector<PositionBucket> buckets(n);
    for (std::size_t b = 0; b < n; ++b) {
        buckets[b].first_position = b * width + 1;
        buckets[b].last_position = std::min(max_size, (b + 1) * width);
    }
    for (const auto& p : pools) {
        if (!p.positive_index) continue;
        auto& bucket = buckets[*p.positive_index / width];
        const auto& values = report.per_user.at(p.user);
        bucket.users += 1;
        bucket.hits += values.at("hr") > 0.5 ? 1 : 0;
        bucket.ndcg_sum += values.at("ndcg");
    }
    return buckets;
}

PositionBiasResult run_position_bias(const ExperimentConfig& cfg, const PreparedData& data,
                                     std::span<const CandidatePool> base_pools, Recommender& recommender) {
    PositionBiasResult result;
    const auto shuffled = arrange_pools(base_pools, Arrangement::shuffled, cfg.seeds.arrangement);
    const auto first = arrange_pools(shuffled, Arrangement::positive_first, 0);
    json meta = base_metadata(cfg, recommender.name());
    meta["arrangement"] = "shuffled";
    result.shuffled = run_pipeline(cfg, data, shuffled, cfg.history_length, cfg.strategy, recommender, nullptr, meta);
    meta["arrangement"] = "positive_first";
    result.first = run_pipeline(cfg, data, first, cfg.history_length, cfg.strategy, recommender, nullptr, meta);

    Accumulator r_hr, r_ndcg, f_hr, f_ndcg;
    for (const auto& pool : shuffled) {
        if (!pool.contains_positive()) continue;
        const auto& a = result.shuffled.report.per_user.at(pool.user);
        const auto& b = result.first.report.per_user.at(pool.user);
        r_hr.add(a.at("hr"));
        r_ndcg.add(a.at("ndcg"));
        f_hr.add(b.at("hr"));
        f_ndcg.add(b.at("ndcg"));
    }
    result.users_considered = r_hr.count();
    if (result.users_considered == 0) throw PreconditionError("no pool contains its positive item");
    result.acc_random_hr = r_hr.mean();
    result.acc_random_ndcg = r_ndcg.mean();
    result.acc_first_hr = f_hr.mean();
    result.acc_first_ndcg = f_ndcg.mean();
    result.cand_dif_hr = cand_dif(result.acc_first_hr, result.acc_random_hr);
    result.cand_dif_ndcg = cand_dif(result.acc_first_ndcg, result.acc_random_ndcg);
    result.buckets = position_buckets(shuffled, result.shuffled.report, cfg.position_bucket_width);
    return result;
}

ProfileEvalResult run_profile_eval(const ExperimentConfig& cfg, const PreparedData& data,
                                   std::span<const UserId> users, std::span<const std::size_t> lengths,
                                   Recommender& recommender, ProfileGenerator& generator) {
    if (lengths.empty()) throw UsageError("profile evaluation needs at least one history length");
    const auto pools = arrange_pools(build_pools(data, cfg, users), cfg.arrangement, cfg.seeds.arrangement);
    ProfileEvalResult result;
    for (const auto length : lengths) {
        ProfileEvalResult::Point point;
        point.length = length;
        const auto profiles = generate_profiles(cfg, data, eval_histories(data, users, length), generator);
        for (const auto& [user, p] : profiles) point.profiles.push_back(p);
        json meta = base_metadata(cfg, recommender.name());
        meta["profile_generator"] = generator.name();
        const std::pair<const char*, Strategy> variants[] = {{"history_only", Strategy::base},
                                                             {"profile_only", Strategy::profile_only},
                                                             {"profile_plus_history", Strategy::profile_plus_history}};
        for (const auto& [label, strategy] : variants) {
            meta["variant"] = label;
            point.variants[label] = run_pipeline(cfg, data, pools, length, strategy, recommender,
                                                 needs_profile(strategy) ? &profiles : nullptr, meta);
        }
        result.points.push_back(std::move(point));
    }
    return result;
}

RerankResult run_rerank_eval(const ExperimentConfig& cfg, const PreparedData& data, std::span<const UserId> users,
                             std::span<const RunFile> runs, Recommender& recommender) {
    if (runs.empty()) throw PreconditionError("re-ranking needs at least one run file");
    ExperimentConfig rerank_cfg = cfg;
    rerank_cfg.task = Task::rerank;
    const auto pools = build_pools(data, rerank_cfg, users, runs);
    RerankResult result;
    result.bias = run_position_bias(rerank_cfg, data, pools, recommender);
    const auto& shuffled = result.bias.shuffled.pools;
    for (const char* kind : {"mostpop", "bm25"}) {
        ModelConfig model;
        model.kind = kind;
        model.name = kind;
        model.bm25 = cfg.model.bm25;
        auto baseline = make_recommender(model, data);
        json meta = base_metadata(rerank_cfg, baseline->name());
        meta["model_kind"] = kind;
        auto run = run_pipeline(rerank_cfg, data, shuffled, cfg.history_length, cfg.strategy, *baseline, nullptr, meta);
        result.baselines[baseline->name()] = std::move(run.report);
    }
    return result;
}

}  // namespace beyondrec
