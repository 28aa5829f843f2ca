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

#include "beyondrec/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

namespace beyondrec {

namespace {

// Decodes one UTF-8 code point at text[i]. Returns false for malformed input.
bool decode_utf8(std::string_view text, std::size_t& i, char32_t& cp) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    if (b0 < 0x80) {
        cp = b0;
        ++i;
        return true;
    } else if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++i;
        return false;
    }
    if (i + len > text.size()) {
        ++i;
        return false;
    }
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(text[i + k]);
        if ((b & 0xC0) != 0x80) {
            ++i;
            return false;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        ++i;
        return false;
    }
    i += len;
    return true;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

// Non-ASCII code points treated as spacing, punctuation or symbols.
bool is_unicode_separator(char32_t cp) {
    if (cp >= 0x80 && cp <= 0xBF) return cp != 0xAA && cp != 0xB5 && cp != 0xBA;
    if (cp == 0xD7 || cp == 0xF7) return true;
    if (cp >= 0x2000 && cp <= 0x2BFF) return true;   // punctuation, symbols, arrows
    if (cp >= 0x3000 && cp <= 0x303F) return true;   // CJK punctuation
    if (cp >= 0xFE00 && cp <= 0xFE0F) return true;   // variation selectors
    if (cp >= 0xFE30 && cp <= 0xFE4F) return true;
    if (cp == 0xFEFF) return true;
    if (cp >= 0xFF00 && cp <= 0xFF0F) return true;   // fullwidth punctuation
    if (cp >= 0xFF1A && cp <= 0xFF20) return true;
    if (cp >= 0xFF3B && cp <= 0xFF40) return true;
    if (cp >= 0xFF5B && cp <= 0xFF65) return true;
    if (cp >= 0x1F000 && cp <= 0x1FAFF) return true;  // emoji and pictographs
    return false;
}

char32_t to_lower(char32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 0x20;
    if ((cp >= 0x100 && cp <= 0x137) || (cp >= 0x14A && cp <= 0x177)) return (cp % 2 == 0) ? cp + 1 : cp;
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) return (cp % 2 == 1) ? cp + 1 : cp;
    if (cp == 0x178) return 0xFF;
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
    return cp;
}

std::string_view strip_spaces(std::string_view s) {
    return trim(s);
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

std::string erase_all(std::string s, std::string_view what) {
    for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos)) s.erase(pos, what.size());
    return s;
}

const std::pair<std::string_view, std::string_view> kQuotes[] = {
    {"\"", "\""}, {"\xE2\x80\x9C", "\xE2\x80\x9D"}, {"'", "'"}, {"\xE2\x80\x98", "\xE2\x80\x99"},
    {"\xC2\xAB", "\xC2\xBB"}, {"`", "`"},
};

// Trailing commentary introduced by an em or en dash.
const std::string_view kCommentDashes[] = {" \xE2\x80\x94 ", " \xE2\x80\x93 ", "\xE2\x80\x94"};

std::string clean_title(std::string_view raw) {
    std::string s = erase_all(std::string(raw), "**");
    s = erase_all(std::move(s), "__");
    std::string_view v = strip_spaces(s);
    for (const auto& [open, close] : kQuotes) {
        if (starts_with(v, open)) {
            const auto end = v.find(close, open.size());
            if (end != std::string_view::npos && end > open.size()) {
                return std::string(strip_spaces(v.substr(open.size(), end - open.size())));
            }
        }
    }
    for (const auto dash : kCommentDashes) {
        const auto pos = v.find(dash);
        if (pos != std::string_view::npos && pos > 0) v = strip_spaces(v.substr(0, pos));
    }
    return std::string(v);
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    for (auto& line : split(text, '\n')) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

std::vector<std::string> finish(std::vector<std::string> titles, std::size_t k) {
    std::vector<std::string> out;
    for (auto& t : titles) {
        if (out.size() == k) break;
        std::string cleaned = clean_title(t);
        if (!cleaned.empty() && normalize_title(cleaned).size() > 0) out.push_back(std::move(cleaned));
    }
    return out;
}

std::vector<std::string> inline_numbered(const std::string& text) {
    // "1. A 2. B 3. C": find consecutive markers n = 1, 2, ... in order.
    std::vector<std::pair<std::size_t, std::size_t>> marks;  // marker start, content start
    std::size_t from = 0;
    for (int n = 1;; ++n) {
        const std::regex marker("(^|\\s)" + std::to_string(n) + "[.)]\\s+");
        std::smatch m;
        std::string rest = text.substr(from);
        if (!std::regex_search(rest, m, marker)) break;
        const std::size_t start = from + static_cast<std::size_t>(m.position(0)) + m[1].length();
        const std::size_t content = from + static_cast<std::size_t>(m.position(0) + m.length(0));
        marks.emplace_back(start, content);
        from = content;
    }
    std::vector<std::string> titles;
    if (marks.size() < 2) return titles;
    for (std::size_t i = 0; i < marks.size(); ++i) {
        const std::size_t end = i + 1 < marks.size() ? marks[i + 1].first : text.size();
        std::string title(strip_spaces(std::string_view(text).substr(marks[i].second, end - marks[i].second)));
        while (!title.empty() && (title.back() == ',' || title.back() == ';')) title.pop_back();
        titles.push_back(title);
    }
    return titles;
}

}  // namespace

std::string normalize_title(std::string_view title) {
    std::string out;
    out.reserve(title.size());
    std::size_t i = 0;
    while (i < title.size()) {
        char32_t cp = 0;
        if (!decode_utf8(title, i, cp)) continue;
        if (cp < 0x80) {
            const char c = static_cast<char>(cp);
            if (std::isalnum(static_cast<unsigned char>(c))) {
                out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
            }
            continue;
        }
        if (is_unicode_separator(cp)) continue;
        encode_utf8(to_lower(cp), out);
    }
    return out;
}

std::vector<std::string> parse_ranked_list(const std::string& response, std::size_t k) {
    if (k == 0) return {};
    static const std::regex numbered(
        R"(^\s*(?:#\s*)?(?:\(\s*\d{1,3}\s*\)|\[\s*\d{1,3}\s*\]|\d{1,3}\s*[.):\]]|rank\s*\d{1,3}\s*[.):-]?)\s*(?!\d)(.*)$)",
        std::regex::icase);
    static const std::regex bulleted(R"(^\s*(?:[-*+]|\xE2\x80\xA2|\xE2\x80\xA3|\xC2\xB7)\s+(.*)$)");

    std::vector<std::string> lines;
    for (const auto& line : lines_of(response)) lines.push_back(erase_all(line, "**"));

    std::vector<std::string> titles;
    std::smatch m;
    for (const auto& line : lines) {
        if (!std::regex_match(line, m, numbered) || strip_spaces(m[1].str()).empty()) continue;
        // A whole list on one line: "1. A 2. B 3. C".
        auto inline_titles = inline_numbered(line);
        if (inline_titles.size() >= 2) {
            titles.insert(titles.end(), inline_titles.begin(), inline_titles.end());
        } else {
            titles.push_back(m[1].str());
        }
    }
    if (titles.empty()) {
        for (const auto& line : lines) {
            if (std::regex_match(line, m, bulleted) && !strip_spaces(m[1].str()).empty()) titles.push_back(m[1].str());
        }
    }
    if (titles.empty()) {
        for (const auto& line : lines) {
            auto inline_titles = inline_numbered(line);
            if (!inline_titles.empty()) {
                titles = std::move(inline_titles);
                break;
            }
        }
    }
    if (titles.empty()) {
        for (const auto& line : lines) {
            const auto t = strip_spaces(line);
            // Bare lines are titles unless they read like prose.
            if (t.empty() || t.back() == ':' || t.back() == '.' || t.back() == '!' || t.back() == '?') continue;
            titles.emplace_back(t);
        }
    }
    return finish(std::move(titles), k);
}

const char* to_string(MatchScope scope) {
    switch (scope) {
        case MatchScope::in_pool: return "in_pool";
        case MatchScope::in_catalog_only: return "in_catalog_only";
        case MatchScope::unmatched: return "unmatched";
    }
    return "unmatched";
}

MatchScope parse_match_scope(const std::string& name) {
    if (name == "in_pool") return MatchScope::in_pool;
    if (name == "in_catalog_only") return MatchScope::in_catalog_only;
    if (name == "unmatched") return MatchScope::unmatched;
    throw UsageError("unknown match scope '" + name + "'");
}

std::vector<std::pair<ItemId, std::size_t>> MatchedRecommendation::ranked_pool_items() const {
    std::vector<std::pair<ItemId, std::size_t>> out;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].scope == MatchScope::in_pool) out.emplace_back(*entries[i].item, i + 1);
    }
    return out;
}

std::size_t MatchedRecommendation::unmatched_count() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [](const MatchEntry& e) {
        return e.scope == MatchScope::unmatched;
    }));
}

json to_json(const MatchedRecommendation& rec) {
    json entries = json::array();
    for (const auto& e : rec.entries) {
        entries.push_back({{"raw_title", e.raw_title},
                           {"item_id", e.item ? json(*e.item) : json(nullptr)},
                           {"match_scope", to_string(e.scope)}});
    }
    return {{"user", rec.user}, {"K", rec.k}, {"parse_failed", rec.parse_failed}, {"entries", entries}};
}

MatchedRecommendation matched_from_json(const json& j) {
    MatchedRecommendation rec;
    rec.user = j.at("user").get<UserId>();
    rec.k = j.at("K").get<std::size_t>();
    rec.parse_failed = j.value("parse_failed", false);
    for (const auto& e : j.at("entries")) {
        MatchEntry entry;
        entry.raw_title = e.at("raw_title").get<std::string>();
        if (!e.at("item_id").is_null()) entry.item = e.at("item_id").get<ItemId>();
        entry.scope = parse_match_scope(e.at("match_scope").get<std::string>());
        rec.entries.push_back(std::move(entry));
    }
    return rec;
}

void save_matched(std::span<const MatchedRecommendation> recs, const fs::path& path) {
    std::vector<json> records;
    records.reserve(recs.size());
    for (const auto& r : recs) records.push_back(to_json(r));
    write_jsonl(path, records);
}

std::vector<MatchedRecommendation> load_matched(const fs::path& path) {
    std::vector<MatchedRecommendation> out;
    std::size_t line = 0;
    for (const auto& record : read_jsonl(path)) {
        ++line;
        try {
            out.push_back(matched_from_json(record));
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line, e.what());
        } catch (const UsageError& e) {
            throw ParseError(path.string(), line, e.what());
        }
    }
    return out;
}

TitleIndex::TitleIndex(const Catalog& catalog) {
    for (const auto& [item, title] : catalog) by_title_[normalize_title(title)].push_back(item);
}

std::optional<ItemId> TitleIndex::lookup(const std::string& canonical, const std::vector<ItemId>* prefer) const {
    if (canonical.empty()) return std::nullopt;
    auto it = by_title_.find(canonical);
    if (it == by_title_.end()) return std::nullopt;
    if (prefer) {
        for (const auto& item : it->second) {
            if (std::find(prefer->begin(), prefer->end(), item) != prefer->end()) return item;
        }
    }
    return it->second.front();  // catalog iteration order is sorted by id
}

namespace {

const std::string_view kCutSeparators[] = {" - ", " \xE2\x80\x94 ", " \xE2\x80\x93 ", " (", ": "};

// The full title first, then prefixes cut at annotation separators, longest first.
std::vector<std::string> canonical_candidates(const std::string& raw) {
    std::vector<std::size_t> cuts;
    for (const auto sep : kCutSeparators) {
        for (auto pos = raw.find(sep); pos != std::string::npos; pos = raw.find(sep, pos + 1)) {
            if (pos > 0) cuts.push_back(pos);
        }
    }
    std::sort(cuts.rbegin(), cuts.rend());
    std::vector<std::string> out{normalize_title(raw)};
    for (const auto pos : cuts) {
        auto c = normalize_title(std::string_view(raw).substr(0, pos));
        if (!c.empty() && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

MatchedRecommendation match_titles(const UserId& user, std::span<const std::string> raw_titles,
                                   const CandidatePool& pool, const Catalog& catalog,
                                   const TitleIndex& index, std::size_t k) {
    std::map<std::string, ItemId> pool_titles;
    for (const auto& item : pool.items) {
        auto it = catalog.find(item);
        if (it == catalog.end()) continue;
        auto [slot, inserted] = pool_titles.emplace(normalize_title(it->second), item);
        if (!inserted && item < slot->second) slot->second = item;
    }
    MatchedRecommendation rec;
    rec.user = user;
    rec.k = k;
    rec.parse_failed = raw_titles.empty();
    std::set<ItemId> seen;
    for (const auto& raw : raw_titles) {
        if (rec.entries.size() == k) break;
        MatchEntry entry{raw, std::nullopt, MatchScope::unmatched};
        for (const auto& canonical : canonical_candidates(raw)) {
            if (canonical.empty()) continue;
            if (auto it = pool_titles.find(canonical); it != pool_titles.end()) {
                entry.item = it->second;
                entry.scope = MatchScope::in_pool;
                break;
            }
            if (auto item = index.lookup(canonical, &pool.items)) {
                entry.item = *item;
                entry.scope = MatchScope::in_catalog_only;
                break;
            }
        }
        if (entry.item && !seen.insert(*entry.item).second) continue;
        rec.entries.push_back(std::move(entry));
    }
    return rec;
}

MatchedRecommendation match_titles(const UserId& user, std::span<const std::string> raw_titles,
                                   const CandidatePool& pool, const Catalog& catalog, std::size_t k) {
    return match_titles(user, raw_titles, pool, catalog, TitleIndex(catalog), k);
}

MatchedRecommendation from_ranked_items(const UserId& user, std::span<const ItemId> items,
                                        const CandidatePool& pool, const Catalog& catalog,
                                        std::size_t k) {
    MatchedRecommendation rec;
    rec.user = user;
    rec.k = k;
    std::set<ItemId> pool_items(pool.items.begin(), pool.items.end());
    std::set<ItemId> seen;
    for (const auto& item : items) {
        if (rec.entries.size() == k) break;
        if (!seen.insert(item).second) continue;
        auto it = catalog.find(item);
        MatchEntry entry;
        entry.raw_title = it == catalog.end() ? item : it->second;
        entry.item = item;
        entry.scope = pool_items.count(item) ? MatchScope::in_pool
                      : it != catalog.end() ? MatchScope::in_catalog_only
                                            : MatchScope::unmatched;
        if (entry.scope == MatchScope::unmatched) entry.item.reset();
        rec.entries.push_back(std::move(entry));
    }
    return rec;
}

}  // namespace beyondrec
