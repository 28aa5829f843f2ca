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

// Prompt rendering for the recommendation strategies and for profile
// generation. Template wording lives in versioned plain-text files.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "beyondrec/candidates.hpp"
#include "beyondrec/corpus.hpp"

namespace beyondrec {

enum class Strategy { base, recency, incontext, profile_only, profile_plus_history, profile_generation };

const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& name);
bool needs_profile(Strategy s);

// Placeholders: {history} {candidates} {K} {num_candidates} {recent}
// {profile} {demonstration}
struct TemplateSet {
    std::string version;
    std::map<Strategy, std::string> templates;

    // The templates compiled into the library (identical to templates/v1).
    static TemplateSet builtin();
    // Directory with VERSION plus one <strategy>.txt per strategy.
    static TemplateSet load(const fs::path& dir);

    const std::string& get(Strategy s) const;
};

// Single pass substitution; text inserted for a placeholder is not rescanned.
std::string fill_template(const std::string& tmpl, const std::map<std::string, std::string>& values);

struct ProfileText {
    UserId user;
    std::string text;
    std::size_t source_history_length = 0;
    std::string generator_model;
};

json to_json(const ProfileText& profile);
ProfileText profile_from_json(const json& j);

struct PromptRecord {
    UserId user;
    Strategy strategy = Strategy::base;
    std::string text;
    std::vector<ItemId> pool_snapshot;
    std::vector<ItemId> history_snapshot;
    std::optional<std::string> profile_text;
    std::string template_version;
    std::size_t k = 0;

    bool operator==(const PromptRecord&) const = default;
};

json to_json(const PromptRecord& record);
PromptRecord prompt_from_json(const json& j);
void save_prompts(const std::vector<PromptRecord>& prompts, const fs::path& path);
std::vector<PromptRecord> load_prompts(const fs::path& path);

// Picks demonstration users for the in-context strategy.
using DemonstrationSelector = std::function<std::vector<UserId>(
    const UserId& target, std::size_t target_history_length, const SplitDataset& split)>;

// Default selector: the `count` other users whose history length is closest to
// the target's (ties by user id), restricted to users with >= 2 train items.
DemonstrationSelector history_length_selector(std::size_t count = 3);

// Aggregates several training users into one demonstration block. Each
// user's train sequence supplies a history (last `history_length` items
// before the final train item) and that final train item as the answer.
std::string render_demonstration(const std::vector<UserId>& users, const SplitDataset& split,
                                 std::size_t history_length);

class PromptRenderer {
public:
    PromptRenderer(TemplateSet templates, const Catalog& catalog);

    // `history` is already truncated to the desired length and chronological.
    // The profile must be present exactly when the strategy uses one;
    // `demonstration` is required by the in-context strategy.
    PromptRecord render(Strategy strategy, const UserId& user, const std::vector<ItemId>& history,
                        const CandidatePool& pool, const std::optional<ProfileText>& profile,
                        std::size_t k, const std::string& demonstration = {}) const;

    PromptRecord render_profile_prompt(const UserId& user, const std::vector<ItemId>& history) const;

    const std::string& version() const { return templates_.version; }

private:
    std::string numbered_titles(const std::vector<ItemId>& items) const;

    TemplateSet templates_;
    const Catalog& catalog_;
};

}  // namespace beyondrec
