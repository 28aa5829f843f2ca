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

#include "beyondrec/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

namespace beyondrec {

PerUserTable parse_per_user_csv(const std::string& csv) {
    PerUserTable out;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    for (auto& line : split(csv, '\n')) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (header.empty()) {
            header = std::move(fields);
            continue;
        }
        if (fields.size() != header.size()) {
            throw ParseError("per_user.csv", line_no, "expected " + std::to_string(header.size()) + " fields");
        }
        auto& row = out[fields[0]];
        for (std::size_t i = 1; i < fields.size(); ++i) {
            if (fields[i].empty()) continue;
            try {
                row[header[i]] = std::stod(fields[i]);
            } catch (const std::exception&) {
                throw ParseError("per_user.csv", line_no, "not a number: " + fields[i]);
            }
        }
    }
    return out;
}

bool lower_is_better(const std::string& metric) {
    static const std::set<std::string> lower{"arp",  "pop_reo",       "gini",
                                             "dpd",  "hallucination", "instruction_violation",
                                             "oic",  "parse_failed"};
    return lower.count(metric) > 0;
}

std::string significance_mark(double p) {
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

std::string format_number(double v, int precision) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(precision) << v;
    return out.str();
}

const std::vector<std::string>& default_table_metrics() {
    static const std::vector<std::string> metrics{
        "hr",  "ndcg",    "aplt",          "serendipity", "self_information", "arp", "pop_reo",
        "item_coverage", "oic", "gini", "dpd", "jain", "hallucination"};
    return metrics;
}

namespace {

// Per-user metric column name behind an aggregate, if any.
std::optional<std::string> per_user_column(const TableRow& row, const std::string& metric) {
    if (metric == "serendipity") {
        // The aggregate follows the configured variant; compare with the matching column.
        for (const char* candidate : {"serendipity_useful", "serendipity_literal"}) {
            auto agg = row.aggregate.find(candidate);
            auto base = row.aggregate.find("serendipity");
            if (agg != row.aggregate.end() && base != row.aggregate.end() && agg->second == base->second) {
                return std::string(candidate);
            }
        }
        return std::nullopt;
    }
    return metric;
}

std::optional<double> p_value(const TableRow& a, const TableRow& b, const std::string& metric) {
    const auto ca = per_user_column(a, metric);
    const auto cb = per_user_column(b, metric);
    if (!ca || !cb) return std::nullopt;
    std::map<UserId, double> va, vb;
    for (const auto& [user, values] : a.per_user) {
        if (auto it = values.find(*ca); it != values.end()) va[user] = it->second;
    }
    for (const auto& [user, values] : b.per_user) {
        if (auto it = values.find(*cb); it != values.end()) vb[user] = it->second;
    }
    if (va.size() < 2 || vb.size() < 2) return std::nullopt;
    std::vector<double> xa, xb;
    bool same_users = va.size() == vb.size();
    for (auto ia = va.begin(), ib = vb.begin(); same_users && ia != va.end(); ++ia, ++ib) {
        same_users = ia->first == ib->first;
    }
    for (const auto& [u, v] : va) xa.push_back(v);
    for (const auto& [u, v] : vb) xb.push_back(v);
    return significance(xa, xb, same_users);
}

}  // namespace

ComparisonTable comparison_table(std::span<const TableRow> rows, const std::vector<std::string>& metrics) {
    ComparisonTable table;
    table.columns = metrics;
    for (const auto& row : rows) {
        table.rows.push_back(row.label);
        std::vector<std::optional<double>> values;
        for (const auto& m : metrics) {
            auto it = row.aggregate.find(m);
            values.push_back(it == row.aggregate.end() ? std::nullopt : it->second);
        }
        table.values.push_back(std::move(values));
        table.marks.emplace_back(metrics.size());
    }
    for (std::size_t c = 0; c < metrics.size(); ++c) {
        std::vector<std::size_t> order;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (table.values[r][c]) order.push_back(r);
        }
        if (order.size() < 2) continue;
        const bool lower = lower_is_better(metrics[c]);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return lower ? *table.values[x][c] < *table.values[y][c] : *table.values[x][c] > *table.values[y][c];
        });
        if (*table.values[order[0]][c] == *table.values[order[1]][c]) continue;
        if (auto p = p_value(rows[order[0]], rows[order[1]], metrics[c])) {
            table.marks[order[0]][c] = significance_mark(*p);
        }
    }
    return table;
}

std::string ComparisonTable::to_markdown(int precision) const {
    std::ostringstream out;
    out << "| model";
    for (const auto& c : columns) out << " | " << c;
    out << " |\n|---";
    for (std::size_t i = 0; i < columns.size(); ++i) out << "|---:";
    out << "|\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out << "| " << rows[r];
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out << " | " << (values[r][c] ? format_number(*values[r][c], precision) + marks[r][c] : "-");
        }
        out << " |\n";
    }
    return out.str();
}

std::string ComparisonTable::to_csv() const {
    std::ostringstream out;
    out << "model";
    for (const auto& c : columns) out << ',' << c << ',' << c << "_mark";
    out << '\n' << std::setprecision(10);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out << rows[r];
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out << ',';
            if (values[r][c]) out << *values[r][c];
            out << ',' << marks[r][c];
        }
        out << '\n';
    }
    return out.str();
}

std::string series_csv(const std::string& x_name, std::span<const Series> series) {
    std::ostringstream out;
    out << "series," << x_name << ",value\n" << std::setprecision(10);
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            out << s.name << ',' << s.x[i] << ',' << s.y[i] << '\n';
        }
    }
    return out.str();
}

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const Series> series, const std::vector<std::string>& x_tick_labels) {
    constexpr double width = 640, height = 400, left = 60, right = 150, top = 40, bottom = 50;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
    bool first = true;
    std::set<double> xs;
    for (const auto& s : series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            xs.insert(s.x[i]);
            if (first) {
                x_min = x_max = s.x[i];
                y_max = s.y[i];
                first = false;
            }
            x_min = std::min(x_min, s.x[i]);
            x_max = std::max(x_max, s.x[i]);
            y_min = std::min(y_min, s.y[i]);
            y_max = std::max(y_max, s.y[i]);
        }
    }
    if (x_max == x_min) x_max = x_min + 1;
    if (y_max <= y_min) y_max = y_min + 1;
    y_max += (y_max - y_min) * 0.05;
    const double pw = width - left - right, ph = height - top - bottom;
    auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
    auto sy = [&](double y) { return top + ph - (y - y_min) / (y_max - y_min) * ph; };

    std::ostringstream out;
    out << std::fixed << std::setprecision(2);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
        << "</text>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
        << "\" stroke=\"black\"/>\n";
    std::size_t tick = 0;
    for (double x : xs) {
        const std::string label = tick < x_tick_labels.size() ? x_tick_labels[tick] : format_number(x, 0);
        out << "<text x=\"" << sx(x) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
            << xml_escape(label) << "</text>\n";
        ++tick;
    }
    for (int i = 0; i <= 4; ++i) {
        const double y = y_min + (y_max - y_min) * i / 4.0;
        out << "<text x=\"" << left - 6 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\">" << format_number(y, 3)
            << "</text>\n";
        out << "<line x1=\"" << left << "\" y1=\"" << sy(y) << "\" x2=\"" << left + pw << "\" y2=\"" << sy(y)
            << "\" stroke=\"#dddddd\"/>\n";
    }
    out << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
        << xml_escape(x_label) << "</text>\n";
    out << "<text x=\"15\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 15 "
        << top + ph / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = palette[s % (sizeof(palette) / sizeof(palette[0]))];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
            out << (i ? " " : "") << sx(series[s].x[i]) << "," << sy(series[s].y[i]);
        }
        out << "\"/>\n";
        for (std::size_t i = 0; i < series[s].x.size() && i < series[s].y.size(); ++i) {
            out << "<circle cx=\"" << sx(series[s].x[i]) << "\" cy=\"" << sy(series[s].y[i]) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        }
        const double ly = top + 10 + 18.0 * static_cast<double>(s);
        out << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly
            << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        out << "<text x=\"" << left + pw + 35 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[s].name)
            << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace beyondrec
