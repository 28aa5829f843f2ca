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

#include "beyondrec/prompting.hpp"

#include <algorithm>

#include "default_templates.hpp"

namespace beyondrec {

namespace {

constexpr std::pair<Strategy, const char*> kStrategyNames[] = {
    {Strategy::base, "base"},
    {Strategy::recency, "recency"},
    {Strategy::incontext, "incontext"},
    {Strategy::profile_only, "profile_only"},
    {Strategy::profile_plus_history, "profile_plus_history"},
    {Strategy::profile_generation, "profile_generation"},
};

}  // namespace

const char* to_string(Strategy s) {
    for (const auto& [strategy, name] : kStrategyNames) {
        if (strategy == s) return name;
    }
    return "unknown";
}

Strategy parse_strategy(const std::string& name) {
    for (const auto& [strategy, label] : kStrategyNames) {
        if (name == label) return strategy;
    }
    throw UsageError("unknown prompting strategy '" + name + "'");
}

bool needs_profile(Strategy s) {
    return s == Strategy::profile_only || s == Strategy::profile_plus_history;
}

TemplateSet TemplateSet::builtin() {
    TemplateSet set;
    set.version = std::string(trim(templates::kVersion));
    set.templates[Strategy::base] = templates::kBase;
    set.templates[Strategy::recency] = templates::kRecency;
    set.templates[Strategy::incontext] = templates::kIncontext;
    set.templates[Strategy::profile_only] = templates::kProfileOnly;
    set.templates[Strategy::profile_plus_history] = templates::kProfilePlusHistory;
    set.templates[Strategy::profile_generation] = templates::kProfileGeneration;
    return set;
}

TemplateSet TemplateSet::load(const fs::path& dir) {
    TemplateSet set;
    set.version = std::string(trim(read_file(dir / "VERSION")));
    if (set.version.empty()) throw PreconditionError("empty template VERSION in " + dir.string());
    for (const auto& [strategy, name] : kStrategyNames) {
        set.templates[strategy] = read_file(dir / (std::string(name) + ".txt"));
    }
    return set;
}

const std::string& TemplateSet::get(Strategy s) const {
    auto it = templates.find(s);
    if (it == templates.end()) throw PreconditionError(std::string("no template for ") + to_string(s));
    return it->second;
}

std::string fill_template(const std::string& tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size() * 2);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i + 1);
            if (close != std::string::npos) {
                auto it = values.find(tmpl.substr(i + 1, close - i - 1));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

json to_json(const ProfileText& profile) {
    return {{"user", profile.user},
            {"text", profile.text},
            {"source_history_length", profile.source_history_length},
            {"generator_model", profile.generator_model}};
}

ProfileText profile_from_json(const json& j) {
    return ProfileText{j.at("user").get<UserId>(), j.at("text").get<std::string>(),
                       j.at("source_history_length").get<std::size_t>(),
                       j.at("generator_model").get<std::string>()};
}

json to_json(const PromptRecord& record) {
    json j{{"user", record.user},
           {"strategy", to_string(record.strategy)},
           {"text", record.text},
           {"pool", record.pool_snapshot},
           {"history", record.history_snapshot},
           {"profile", nullptr},
           {"template_version", record.template_version},
           {"K", record.k}};
    if (record.profile_text) j["profile"] = *record.profile_text;
    return j;
}

PromptRecord prompt_from_json(const json& j) {
    PromptRecord r;
    r.user = j.at("user").get<UserId>();
    r.strategy = parse_strategy(j.at("strategy").get<std::string>());
    r.text = j.at("text").get<std::string>();
    r.pool_snapshot = j.at("pool").get<std::vector<ItemId>>();
    r.history_snapshot = j.at("history").get<std::vector<ItemId>>();
    if (!j.at("profile").is_null()) r.profile_text = j.at("profile").get<std::string>();
    r.template_version = j.at("template_version").get<std::string>();
    r.k = j.at("K").get<std::size_t>();
    return r;
}

void save_prompts(const std::vector<PromptRecord>& prompts, const fs::path& path) {
    std::vector<json> records;
    records.reserve(prompts.size());
    for (const auto& p : prompts) records.push_back(to_json(p));
    write_jsonl(path, records);
}

std::vector<PromptRecord> load_prompts(const fs::path& path) {
    std::vector<PromptRecord> prompts;
    std::size_t line = 0;
    for (const auto& record : read_jsonl(path)) {
        ++line;
        try {
            prompts.push_back(prompt_from_json(record));
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line, e.what());
        } catch (const UsageError& e) {
            throw ParseError(path.string(), line, e.what());
        }
    }
    return prompts;
}

DemonstrationSelector history_length_selector(std::size_t count) {
    return [count](const UserId& target, std::size_t target_len, const SplitDataset& split) {
        std::vector<std::pair<std::size_t, const UserId*>> ranked;
        ranked.reserve(split.users.size());
        for (const auto& [user, us] : split.users) {
            if (user == target || us.train.size() < 2) continue;
            const std::size_t len = us.before_test().size();
            const std::size_t gap = len > target_len ? len - target_len : target_len - len;
            ranked.emplace_back(gap, &user);
        }
        const std::size_t n = std::min(count, ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first < b.first;
                              return *a.second < *b.second;
                          });
        std::vector<UserId> out;
        for (std::size_t i = 0; i < n; ++i) out.push_back(*ranked[i].second);
        return out;
    };
}

std::string render_demonstration(const std::vector<UserId>& users, const SplitDataset& split,
                                 std::size_t history_length) {
    std::string out;
    std::size_t index = 0;
    for (const auto& user : users) {
        const UserSplit& us = split.at(user);
        if (us.train.size() < 2) continue;
        ++index;
        std::vector<ItemId> prefix(us.train.begin(), us.train.end() - 1);
        prefix = last_n(prefix, history_length);
        out += "User " + std::to_string(index) + " interacted with:\n";
        if (prefix.empty()) out += "(none)\n";
        for (std::size_t i = 0; i < prefix.size(); ++i) {
            out += std::to_string(i + 1) + ". " + split.catalog.at(prefix[i]) + "\n";
        }
        out += "User " + std::to_string(index) + " then chose: " + split.catalog.at(us.train.back()) + "\n";
    }
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

PromptRenderer::PromptRenderer(TemplateSet templates, const Catalog& catalog)
    : templates_(std::move(templates)), catalog_(catalog) {}

std::string PromptRenderer::numbered_titles(const std::vector<ItemId>& items) const {
    if (items.empty()) return "(none)";
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        auto it = catalog_.find(items[i]);
        if (it == catalog_.end()) throw PreconditionError("item '" + items[i] + "' has no title");
        if (i) out.push_back('\n');
        out += std::to_string(i + 1) + ". " + it->second;
    }
    return out;
}

PromptRecord PromptRenderer::render(Strategy strategy, const UserId& user,
                                    const std::vector<ItemId>& history, const CandidatePool& pool,
                                    const std::optional<ProfileText>& profile, std::size_t k,
                                    const std::string& demonstration) const {
    if (strategy == Strategy::profile_generation) {
        throw PreconditionError("use render_profile_prompt for profile generation");
    }
    if (needs_profile(strategy) != profile.has_value()) {
        throw PreconditionError(std::string("strategy ") + to_string(strategy) +
                                (profile ? " does not take a profile" : " requires a profile"));
    }
    if (strategy == Strategy::incontext && demonstration.empty()) {
        throw PreconditionError("incontext strategy requires a demonstration block");
    }
    std::map<std::string, std::string> values{
        {"history", numbered_titles(history)},
        {"candidates", numbered_titles(pool.items)},
        {"K", std::to_string(k)},
        {"num_candidates", std::to_string(pool.items.size())},
        {"recent", history.empty() ? std::string("(none)") : catalog_.at(history.back())},
        {"demonstration", demonstration},
        {"profile", profile ? profile->text : std::string()},
    };
    PromptRecord record;
    record.user = user;
    record.strategy = strategy;
    record.text = fill_template(templates_.get(strategy), values);
    record.pool_snapshot = pool.items;
    record.history_snapshot = history;
    if (profile) record.profile_text = profile->text;
    record.template_version = templates_.version;
    record.k = k;
    return record;
}

PromptRecord PromptRenderer::render_profile_prompt(const UserId& user,
                                                   const std::vector<ItemId>& history) const {
    if (history.empty()) throw PreconditionError("profile prompt for '" + user + "' needs a non-empty history");
    PromptRecord record;
    record.user = user;
    record.strategy = Strategy::profile_generation;
    record.text = fill_template(templates_.get(Strategy::profile_generation),
                                {{"history", numbered_titles(history)}});
    record.history_snapshot = history;
    record.template_version = templates_.version;
    return record;
}

}  // namespace beyondrec
