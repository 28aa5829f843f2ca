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

// Comparison tables with significance marks, CSV series and SVG line charts.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beyondrec/metrics.hpp"

namespace beyondrec {

using PerUserTable = std::map<UserId, std::map<std::string, double>>;

PerUserTable parse_per_user_csv(const std::string& csv);

struct TableRow {
    std::string label;
    std::map<std::string, std::optional<double>> aggregate;
    PerUserTable per_user;
};

// Metrics where a smaller value is the better one.
bool lower_is_better(const std::string& metric);

// "**" for p < 0.01, "*" for p < 0.05.
std::string significance_mark(double p);

struct ComparisonTable {
    std::vector<std::string> columns;
    std::vector<std::string> rows;
    std::vector<std::vector<std::optional<double>>> values;
    std::vector<std::vector<std::string>> marks;

    std::string to_markdown(int precision = 4) const;
    std::string to_csv() const;
};

// Rows are models or strategies. For each metric with per-user values the
// best row is marked when it differs significantly from the runner-up.
ComparisonTable comparison_table(std::span<const TableRow> rows, const std::vector<std::string>& metrics);

const std::vector<std::string>& default_table_metrics();

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

std::string series_csv(const std::string& x_name, std::span<const Series> series);

std::string svg_line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                           std::span<const Series> series, const std::vector<std::string>& x_tick_labels = {});

std::string format_number(double v, int precision = 4);

}  // namespace beyondrec
