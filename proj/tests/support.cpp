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


#include "support.hpp"

#include <cmath>
#include <set>

namespace beyondrec::testing {

namespace {

const char* const kThemes[] = {"Hydrating", "Matte", "Herbal", "Citrus", "Velvet", "Ocean", "Amber", "Silk"};
const char* const kKinds[] = {"Cream", "Serum", "Lipstick", "Shampoo", "Mask", "Lotion", "Cleanser", "Polish"};
const char* const kBrands[] = {"Aurel", "Brisa", "Cova", "Dena", "Elm", "Fio", "Gala", "Hesper", "Iris", "Juno"};

}  // namespace

TempDir::TempDir() {
    static std::uint64_t counter = 0;
    Rng rng(static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()) + counter++);
    path_ = fs::temp_directory_path() / ("beyondrec-test-" + std::to_string(rng.next()));
    fs::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

Catalog synthetic_catalog(std::size_t items) {
    Catalog catalog;
    for (std::size_t i = 0; i < items; ++i) {
        const std::string id = "B" + std::string(i < 10 ? "000" : i < 100 ? "00" : i < 1000 ? "0" : "") +
                               std::to_string(i);
        catalog[id] = std::string(kBrands[(i * 7) % 10]) + " " + kThemes[i % 8] + " " + kKinds[(i / 8) % 8] +
                      " No " + std::to_string(i);
    }
    return catalog;
}

InteractionLog synthetic_log(const SyntheticSpec& spec) {
    InteractionLog log;
    log.catalog = synthetic_catalog(spec.items);
    std::vector<ItemId> ids;
    for (const auto& [id, _] : log.catalog) ids.push_back(id);
    // Popularity rank is a fixed permutation of the ids.
    std::vector<std::size_t> rank(ids.size());
    for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
    Rng perm(spec.seed ^ 0x5bd1e995ULL);
    perm.shuffle(std::span<std::size_t>(rank));
    Rng rng(spec.seed);
    for (std::size_t u = 0; u < spec.users; ++u) {
        const std::string user = "U" + std::to_string(u);
        const std::size_t theme = rng.uniform_index(8);
        const std::size_t length = spec.min_length + rng.uniform_index(spec.max_length - spec.min_length + 1);
        std::vector<double> weights(ids.size());
        double total = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            weights[i] = 1.0 / std::pow(static_cast<double>(rank[i]) + 1.0, spec.zipf);
            if (i % 8 == theme) weights[i] *= 4.0;
            total += weights[i];
        }
        std::set<std::size_t> chosen;
        std::int64_t ts = 1000;
        while (chosen.size() < std::min(length, ids.size())) {
            double x = rng.uniform01() * total;
            std::size_t pick = 0;
            while (pick + 1 < ids.size() && x >= weights[pick]) x -= weights[pick++];
            if (!chosen.insert(pick).second) continue;
            log.interactions.push_back({user, ids[pick], ts});
            ts += 1 + static_cast<std::int64_t>(rng.uniform_index(100));
        }
    }
    return log;
}

SplitDataset synthetic_split(const SyntheticSpec& spec) { return leave_one_out_split(synthetic_log(spec)); }

void write_dataset(const InteractionLog& log, const fs::path& dir, const json& config_overrides) {
    fs::create_directories(dir);
    save_catalog(log.catalog, dir / "catalog.jsonl");
    save_interactions(log, dir / "interactions.jsonl", LogFormat::jsonl);
    json cfg = {{"dataset", {{"interactions", "interactions.jsonl"}, {"catalog", "catalog.jsonl"}}}};
    cfg.merge_patch(config_overrides);
    write_file_atomic(dir / "config.json", cfg.dump(2));
}

}  // namespace beyondrec::testing
