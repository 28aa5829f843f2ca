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

#include "beyondrec/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <unordered_map>
#include <unordered_set>

namespace beyondrec {

LogFormat parse_log_format(const std::string& name) {
    if (name == "jsonl") return LogFormat::jsonl;
    if (name == "tsv") return LogFormat::tsv;
    throw UsageError("unknown interaction format '" + name + "' (expected jsonl or tsv)");
}

const char* to_string(LogFormat format) {
    return format == LogFormat::jsonl ? "jsonl" : "tsv";
}

std::size_t InteractionLog::user_count() const {
    std::unordered_set<std::string_view> users;
    for (const auto& x : interactions) users.insert(x.user);
    return users.size();
}

double InteractionLog::density() const {
    const double cells = static_cast<double>(user_count()) * static_cast<double>(item_count());
    return cells == 0.0 ? 0.0 : static_cast<double>(interactions.size()) / cells;
}

namespace {

// First present key among the aliases, as a string.
std::optional<std::string> string_field(const json& record,
                                        std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        auto it = record.find(key);
        if (it == record.end()) continue;
        if (it->is_string()) return it->get<std::string>();
        if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
        return std::nullopt;
    }
    return std::nullopt;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
    std::int64_t value = 0;
    text = trim(text);
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) return std::nullopt;
    return value;
}

}  // namespace

Catalog load_catalog(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PreconditionError("cannot open catalog " + path.string());
    Catalog catalog;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.string(), line_no, e.what());
        }
        auto item = string_field(record, {"item", "item_id", "asin"});
        auto title = string_field(record, {"title"});
        if (!item || item->empty()) throw ParseError(path.string(), line_no, "missing item id");
        if (!title || trim(*title).empty()) {
            throw ParseError(path.string(), line_no, "missing or empty title for item " + *item);
        }
        catalog[*item] = *title;
    }
    return catalog;
}

void save_catalog(const Catalog& catalog, const fs::path& path) {
    std::string out;
    for (const auto& [item, title] : catalog) {
        out += json{{"item", item}, {"title", title}}.dump();
        out.push_back('\n');
    }
    write_file_atomic(path, out);
}

InteractionLog load_interactions(const fs::path& path, LogFormat format,
                                 const fs::path& catalog_path) {
    return load_interactions(path, format, load_catalog(catalog_path));
}

InteractionLog load_interactions(const fs::path& path, LogFormat format, Catalog catalog) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PreconditionError("cannot open interactions " + path.string());
    InteractionLog log;
    log.catalog = std::move(catalog);
    std::string line;
    std::size_t line_no = 0;
    const std::string source = path.string();
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        Interaction x;
        if (format == LogFormat::jsonl) {
            json record;
            try {
                record = json::parse(line);
            } catch (const json::parse_error& e) {
                throw ParseError(source, line_no, e.what());
            }
            auto user = string_field(record, {"user", "user_id", "reviewerID"});
            auto item = string_field(record, {"item", "item_id", "asin"});
            std::optional<std::int64_t> ts;
            for (const char* key : {"ts", "timestamp", "unixReviewTime"}) {
                auto it = record.find(key);
                if (it != record.end() && it->is_number_integer()) ts = it->get<std::int64_t>();
                if (it != record.end()) break;
            }
            if (!user || !item || !ts) {
                throw ParseError(source, line_no, "record needs user, item and integer ts");
            }
            x = Interaction{*user, *item, *ts};
        } else {
            auto fields = split(line, '\t');
            if (line_no == 1 && fields.size() == 3 && !parse_int(fields[2]) &&
                (fields[0] == "user" || fields[0] == "user_id")) {
                continue;  // header
            }
            if (fields.size() != 3) throw ParseError(source, line_no, "expected 3 tab-separated columns");
            auto ts = parse_int(fields[2]);
            if (!ts) throw ParseError(source, line_no, "timestamp is not an integer");
            if (fields[0].empty() || fields[1].empty()) throw ParseError(source, line_no, "empty id");
            x = Interaction{fields[0], fields[1], *ts};
        }
        if (!log.catalog.count(x.item)) {
            throw ParseError(source, line_no, "item '" + x.item + "' is not in the catalog");
        }
        log.interactions.push_back(std::move(x));
    }
    return log;
}

void save_interactions(const InteractionLog& log, const fs::path& path, LogFormat format) {
    std::string out;
    for (const auto& x : log.interactions) {
        if (format == LogFormat::jsonl) {
            out += json{{"user", x.user}, {"item", x.item}, {"ts", x.ts}}.dump();
        } else {
            out += x.user + '\t' + x.item + '\t' + std::to_string(x.ts);
        }
        out.push_back('\n');
    }
    write_file_atomic(path, out);
}

InteractionLog k_core_filter(const InteractionLog& log, int k) {
    if (k < 1) throw PreconditionError("k_core_filter: k must be >= 1");
    std::vector<const Interaction*> alive;
    alive.reserve(log.interactions.size());
    for (const auto& x : log.interactions) alive.push_back(&x);

    while (true) {
        std::unordered_map<std::string_view, int> user_deg;
        std::unordered_map<std::string_view, int> item_deg;
        for (const auto* x : alive) {
            ++user_deg[x->user];
            ++item_deg[x->item];
        }
        std::vector<const Interaction*> next;
        next.reserve(alive.size());
        for (const auto* x : alive) {
            if (user_deg[x->user] >= k && item_deg[x->item] >= k) next.push_back(x);
        }
        if (next.size() == alive.size()) break;
        alive = std::move(next);
    }
    if (alive.empty()) throw PreconditionError("empty after filtering with k=" + std::to_string(k));

    InteractionLog out;
    out.interactions.reserve(alive.size());
    for (const auto* x : alive) {
        out.interactions.push_back(*x);
        out.catalog.emplace(x->item, log.catalog.at(x->item));
    }
    return out;
}

std::vector<ItemId> UserSplit::before_test() const {
    std::vector<ItemId> items = train;
    items.push_back(valid);
    return items;
}

const UserSplit& SplitDataset::at(const UserId& user) const {
    auto it = users.find(user);
    if (it == users.end()) throw PreconditionError("unknown user '" + user + "'");
    return it->second;
}

std::vector<UserId> SplitDataset::user_ids() const {
    std::vector<UserId> ids;
    ids.reserve(users.size());
    for (const auto& [user, _] : users) ids.push_back(user);
    return ids;
}

SplitDataset leave_one_out_split(const InteractionLog& log) {
    std::map<UserId, std::vector<const Interaction*>> by_user;
    for (const auto& x : log.interactions) by_user[x.user].push_back(&x);

    SplitDataset split;
    split.catalog = log.catalog;
    for (auto& [user, events] : by_user) {
        if (events.size() < 3) {
            throw PreconditionError("user '" + user + "' has " + std::to_string(events.size()) +
                                    " interactions; leave-one-out needs at least 3");
        }
        std::sort(events.begin(), events.end(), [](const Interaction* a, const Interaction* b) {
            if (a->ts != b->ts) return a->ts < b->ts;
            return a->item < b->item;
        });
        UserSplit us;
        us.history.reserve(events.size());
        for (const auto* e : events) us.history.push_back(e->item);
        us.test = us.history.back();
        us.valid = us.history[us.history.size() - 2];
        us.train.assign(us.history.begin(), us.history.end() - 2);
        split.users.emplace(user, std::move(us));
    }
    return split;
}

std::vector<ItemId> last_n(const std::vector<ItemId>& items, std::size_t n) {
    if (n >= items.size()) return items;
    return std::vector<ItemId>(items.end() - static_cast<std::ptrdiff_t>(n), items.end());
}

std::vector<TrainingSample> training_samples(const SplitDataset& split) {
    return truncate_for_length(split, kFullHistory).reduced_train;
}

TruncatedData truncate_for_length(const SplitDataset& split, std::size_t length) {
    TruncatedData out;
    for (const auto& [user, us] : split.users) {
        const std::vector<ItemId> before = us.before_test();
        std::vector<ItemId> window = last_n(before, length);
        const std::set<ItemId> in_window(window.begin(), window.end());
        out.eval_histories.emplace(user, std::move(window));

        for (std::size_t pos = 0; pos < before.size(); ++pos) {
            if (!in_window.count(before[pos])) continue;
            TrainingSample sample{user, {}, before[pos]};
            for (std::size_t j = 0; j < pos; ++j) {
                if (in_window.count(before[j])) sample.history.push_back(before[j]);
            }
            out.reduced_train.push_back(std::move(sample));
        }
    }
    return out;
}

std::int64_t PopularityTable::popularity(const ItemId& item) const {
    auto it = pop.find(item);
    return it == pop.end() ? 0 : it->second;
}

std::int64_t PopularityTable::users_of(const ItemId& item) const {
    auto it = user_counts.find(item);
    return it == user_counts.end() ? 0 : it->second;
}

PopularityTable popularity_table(const SplitDataset& split) {
    if (split.users.empty()) throw PreconditionError("popularity_table: empty split");
    PopularityTable table;
    table.n_users = split.users.size();
    for (const auto& [item, _] : split.catalog) {
        table.pop[item] = 0;
        table.user_counts[item] = 0;
    }
    for (const auto& [user, us] : split.users) {
        for (const auto& item : us.train) ++table.pop[item];
        std::set<ItemId> distinct(us.history.begin(), us.history.end());
        for (const auto& item : distinct) ++table.user_counts[item];
    }
    std::vector<std::pair<std::int64_t, ItemId>> order;
    order.reserve(split.catalog.size());
    for (const auto& [item, _] : split.catalog) order.emplace_back(table.popularity(item), item);
    std::sort(order.begin(), order.end());
    const std::size_t tail_size = split.catalog.size() * 8 / 10;
    for (std::size_t i = 0; i < tail_size; ++i) table.long_tail.insert(order[i].second);
    return table;
}

json to_json(const PopularityTable& table) {
    json items = json::array();
    for (const auto& [item, count] : table.pop) {
        items.push_back({{"item", item},
                         {"pop", count},
                         {"users", table.users_of(item)},
                         {"long_tail", table.is_long_tail(item)}});
    }
    return {{"n_users", table.n_users}, {"items", items}};
}

PopularityTable popularity_from_json(const json& j) {
    PopularityTable table;
    table.n_users = j.at("n_users").get<std::size_t>();
    for (const auto& row : j.at("items")) {
        const auto item = row.at("item").get<ItemId>();
        table.pop[item] = row.at("pop").get<std::int64_t>();
        table.user_counts[item] = row.at("users").get<std::int64_t>();
        if (row.at("long_tail").get<bool>()) table.long_tail.insert(item);
    }
    return table;
}

void save_split(const SplitDataset& split, const fs::path& path) {
    std::vector<json> records;
    records.reserve(split.users.size());
    for (const auto& [user, us] : split.users) {
        records.push_back({{"user", user}, {"history", us.history}});
    }
    write_jsonl(path, records);
}

SplitDataset load_split(const fs::path& path, Catalog catalog) {
    SplitDataset split;
    split.catalog = std::move(catalog);
    std::size_t line = 0;
    for (const auto& record : read_jsonl(path)) {
        ++line;
        UserSplit us;
        us.history = record.at("history").get<std::vector<ItemId>>();
        if (us.history.size() < 3) throw ParseError(path.string(), line, "history shorter than 3");
        us.test = us.history.back();
        us.valid = us.history[us.history.size() - 2];
        us.train.assign(us.history.begin(), us.history.end() - 2);
        split.users.emplace(record.at("user").get<UserId>(), std::move(us));
    }
    return split;
}

}  // namespace beyondrec
