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


#include "beyondrec/cli.hpp"

#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "beyondrec/experiments.hpp"
#include "beyondrec/reporting.hpp"
#include "beyondrec/run_directory.hpp"

namespace beyondrec {

namespace {

constexpr const char* kConfig = "config.json";
constexpr const char* kSplit = "data/split.jsonl";
constexpr const char* kCatalog = "data/catalog.jsonl";
constexpr const char* kUsers = "sample/users.jsonl";
constexpr const char* kPools = "pools.jsonl";
constexpr const char* kPrompts = "prompts.jsonl";
constexpr const char* kProfiles = "profile/profiles.jsonl";

struct Options {
    fs::path run_dir;
    fs::path config;
    bool force = false;
    std::string lengths;
    std::vector<fs::path> compare;
};

// Outputs written by a stage, and whether some upstream call failed.
struct StageResult {
    std::vector<std::string> outputs;
    std::string failure;
};

std::string length_label(std::size_t length) {
    return length == kFullHistory ? "full" : std::to_string(length);
}

std::vector<std::size_t> parse_lengths(const std::string& text, const std::vector<std::size_t>& fallback) {
    if (text.empty()) {
        if (fallback.empty()) throw UsageError("no history lengths given; pass --lengths or set history_lengths");
        return fallback;
    }
    std::vector<std::size_t> out;
    for (const auto& raw : split(text, ',')) {
        const std::string field(trim(raw));
        if (field == "full" || field == "inf") {
            out.push_back(kFullHistory);
            continue;
        }
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(field, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (field.empty() || pos != field.size() || field[0] == '-') {
            throw UsageError("invalid history length '" + field + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

std::string digest_of(const json& params) { return sha256_hex(params.dump()); }

std::string model_label(const ModelConfig& model) {
    if (model.kind == "llm") return model.name;
    if (model.kind == "mostpop") return "MostPop";
    if (model.kind == "bm25") return "BM25";
    if (model.kind == "random") return "Random";
    return model.kind;
}

std::string numbered(const std::string& stem, int repeat) {
    return repeat == 0 ? stem + ".jsonl" : stem + ".r" + std::to_string(repeat) + ".jsonl";
}

std::string join_rel(const std::string& dir, const std::string& name) { return dir.empty() ? name : dir + "/" + name; }

ExperimentConfig run_config(const RunDirectory& run) {
    run.require(kConfig, "prepare");
    return load_config(run.path(kConfig));
}

PreparedData load_prepared(const RunDirectory& run) {
    run.require(kSplit, "prepare");
    run.require(kCatalog, "prepare");
    Catalog catalog = load_catalog(run.path(kCatalog));
    return make_prepared(load_split(run.path(kSplit), std::move(catalog)));
}

std::vector<UserId> load_users(const RunDirectory& run) {
    run.require(kUsers, "sample");
    std::vector<UserId> users;
    for (const auto& j : read_jsonl(run.path(kUsers))) users.push_back(j.at("user").get<UserId>());
    return users;
}

std::vector<RunFile> load_runs(const ExperimentConfig& cfg) {
    std::vector<RunFile> runs;
    for (const auto& p : cfg.run_files) runs.push_back(load_run_file(p));
    return runs;
}

std::vector<std::string> run_file_inputs(const ExperimentConfig& cfg) {
    std::vector<std::string> out;
    for (const auto& p : cfg.run_files) out.push_back(fs::absolute(p).string());
    return out;
}

std::map<UserId, ProfileText> load_profiles(const fs::path& path) {
    std::map<UserId, ProfileText> out;
    for (const auto& j : read_jsonl(path)) {
        auto p = profile_from_json(j);
        out[p.user] = std::move(p);
    }
    return out;
}

void save_profiles(const std::vector<ProfileText>& profiles, const fs::path& path) {
    std::vector<json> records;
    for (const auto& p : profiles) records.push_back(to_json(p));
    write_jsonl(path, records);
}

std::shared_ptr<LlmGateway> make_gateway(const ExperimentConfig& cfg, const RunDirectory& run) {
    if (cfg.model.gateway.endpoint.empty()) return nullptr;
    GatewayConfig g = cfg.model.gateway;
    if (g.cache_dir.empty()) g.cache_dir = run.path("cache");
    if (!g.audit_log) g.audit_log = run.path("audit.jsonl");
    return std::make_shared<LlmGateway>(g);
}

void write_report(const RunDirectory& run, const std::string& dir, const MetricReport& report,
                  std::vector<std::string>& outputs) {
    const auto json_rel = join_rel(dir, "report.json");
    const auto csv_rel = join_rel(dir, "per_user.csv");
    run.write(json_rel, report.to_json().dump(2) + "\n");
    run.write(csv_rel, report.per_user_csv());
    outputs.push_back(json_rel);
    outputs.push_back(csv_rel);
}

// Every artifact of one evaluation pass under `dir`.
void write_eval_run(const RunDirectory& run, const std::string& dir, const EvalRun& r,
                    std::vector<std::string>& outputs) {
    const auto pools = join_rel(dir, kPools);
    const auto prompts = join_rel(dir, kPrompts);
    const auto responses = join_rel(dir, "responses.jsonl");
    const auto matched = join_rel(dir, "matched.jsonl");
    save_pools(r.pools, run.path(pools));
    save_prompts(r.prompts, run.path(prompts));
    save_responses(r.responses, run.path(responses));
    save_matched(r.matched, run.path(matched));
    outputs.insert(outputs.end(), {pools, prompts, responses, matched});
    write_report(run, dir, r.report, outputs);
}

std::string transport_summary(const EvalRun& r) {
    std::size_t n = 0;
    std::string first;
    for (const auto& resp : r.responses) {
        if (!resp.output.transport_failure) continue;
        if (n++ == 0) first = resp.output.error;
    }
    return n == 0 ? "" : std::to_string(n) + " requests failed upstream (first: " + first + ")";
}

// Skips the stage when it is current; otherwise runs it and records it.
int run_stage(const RunDirectory& run, const std::string& stage, const std::vector<std::string>& inputs,
              const std::string& params, bool force, const std::function<StageResult()>& body) {
    if (!force && run.up_to_date(stage, inputs, params)) {
        std::cout << stage << ": up to date\n";
        return 0;
    }
    StageResult result = body();
    if (!result.failure.empty()) {
        run.record(stage, inputs, result.outputs, params, "failed");
        throw TransportError(stage + ": " + result.failure);
    }
    run.record(stage, inputs, result.outputs, params);
    std::cout << stage << ": wrote " << result.outputs.size() << " artifacts to " << run.root().string() << "\n";
    return 0;
}

std::vector<std::string> data_inputs() { return {kConfig, kSplit, kCatalog}; }

// ---- stages -----------------------------------------------------------------

int cmd_prepare(const Options& o) {
    if (o.config.empty()) throw UsageError("prepare needs --config");
    const ExperimentConfig cfg = load_config(o.config);
    const RunDirectory run(o.run_dir);
    const std::vector<std::string> inputs{fs::absolute(o.config).string(), fs::absolute(cfg.interactions).string(),
                                          fs::absolute(cfg.catalog).string()};
    return run_stage(run, "prepare", inputs, digest_of(to_json(cfg)), o.force, [&] {
        const PreparedData data = prepare_data(cfg);
        StageResult r;
        run.write(kConfig, to_json(cfg).dump(2) + "\n");
        save_split(data.split, run.path(kSplit));
        save_catalog(data.split.catalog, run.path(kCatalog));
        run.write("data/popularity.json", to_json(data.popularity).dump(2) + "\n");
        run.write("data/stats.json", data.stats.dump(2) + "\n");
        r.outputs = {kConfig, kSplit, kCatalog, "data/popularity.json", "data/stats.json"};
        return r;
    });
}

int cmd_sample(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    return run_stage(run, "sample", data_inputs(), digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const json reference = {{"score", "MostPop NDCG@K on ranking pools"},
                                {"K", cfg.k},
                                {"m", cfg.m},
                                {"population", data.split.users.size()}};
        UserSample sample;
        try {
            sample = sample_users(data, cfg);
        } catch (const SampleRejected& e) {
            json gate = to_json(e.last_report());
            gate["reference"] = reference;
            run.write("sample/gate.json", gate.dump(2) + "\n");
            throw;
        }
        std::vector<json> users;
        for (const auto& u : sample.user_ids) users.push_back({{"user", u}});
        write_jsonl(run.path(kUsers), users);
        run.write("sample/gate.json", gate_report_json(sample, reference).dump(2) + "\n");
        StageResult r;
        r.outputs = {kUsers, "sample/gate.json"};
        return r;
    });
}

int cmd_pools(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    auto inputs = data_inputs();
    inputs.push_back(kUsers);
    for (auto& p : run_file_inputs(cfg)) inputs.push_back(p);
    return run_stage(run, "pools", inputs, digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto users = load_users(run);
        const auto runs = load_runs(cfg);
        const auto pools = arrange_pools(build_pools(data, cfg, users, runs), cfg.arrangement, cfg.seeds.arrangement);
        save_pools(pools, run.path(kPools));
        StageResult r;
        r.outputs = {kPools};
        return r;
    });
}

int cmd_prompts(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    run.require(kPools, "pools");
    auto inputs = data_inputs();
    inputs.push_back(kPools);
    if (needs_profile(cfg.strategy)) {
        run.require(kProfiles, "profile");
        inputs.push_back(kProfiles);
    }
    return run_stage(run, "prompts", inputs, digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto pools = load_pools(run.path(kPools));
        std::vector<UserId> users;
        for (const auto& p : pools) users.push_back(p.user);
        const auto histories = eval_histories(data, users, cfg.history_length);
        std::map<UserId, ProfileText> profiles;
        if (needs_profile(cfg.strategy)) profiles = load_profiles(run.path(kProfiles));
        const auto prompts = render_prompts(cfg, data, pools, histories, cfg.strategy, cfg.history_length,
                                            needs_profile(cfg.strategy) ? &profiles : nullptr);
        save_prompts(prompts, run.path(kPrompts));
        StageResult r;
        r.outputs = {kPrompts};
        return r;
    });
}

int cmd_invoke(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    run.require(kPools, "pools");
    run.require(kPrompts, "prompts");
    auto inputs = data_inputs();
    inputs.insert(inputs.end(), {kPools, kPrompts});
    return run_stage(run, "invoke", inputs, digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto pools = load_pools(run.path(kPools));
        const auto prompts = load_prompts(run.path(kPrompts));
        auto rec = make_recommender(cfg.model, data, cfg.model.kind == "llm" ? make_gateway(cfg, run) : nullptr);
        StageResult r;
        std::size_t failures = 0;
        std::string first;
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            const auto responses = invoke(*rec, prompts, pools, cfg.history_length, cfg.k, rep);
            for (const auto& resp : responses) {
                if (!resp.output.transport_failure) continue;
                if (failures++ == 0) first = resp.output.error;
            }
            const auto rel = numbered("responses", rep);
            save_responses(responses, run.path(rel));
            r.outputs.push_back(rel);
        }
        if (failures) r.failure = std::to_string(failures) + " requests failed upstream (first: " + first + ")";
        return r;
    });
}

int cmd_parse(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    run.require(kPools, "pools");
    run.require("responses.jsonl", "invoke");
    auto inputs = data_inputs();
    inputs.push_back(kPools);
    for (int rep = 0; rep < cfg.repeats; ++rep) inputs.push_back(numbered("responses", rep));
    return run_stage(run, "parse", inputs, digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto pools = load_pools(run.path(kPools));
        StageResult r;
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            const auto in = numbered("responses", rep);
            run.require(in, "invoke");
            const auto matched = match_responses(load_responses(run.path(in)), pools, data.split.catalog, cfg.k);
            const auto rel = numbered("matched", rep);
            save_matched(matched, run.path(rel));
            r.outputs.push_back(rel);
        }
        return r;
    });
}

int cmd_eval(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    run.require(kPools, "pools");
    run.require("matched.jsonl", "parse");
    auto inputs = data_inputs();
    inputs.push_back(kPools);
    for (int rep = 0; rep < cfg.repeats; ++rep) inputs.push_back(numbered("matched", rep));
    return run_stage(run, "eval", inputs, digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto pools = load_pools(run.path(kPools));
        std::vector<MetricReport> reports;
        for (int rep = 0; rep < cfg.repeats; ++rep) {
            const auto in = numbered("matched", rep);
            run.require(in, "parse");
            json meta = base_metadata(cfg, model_label(cfg.model));
            if (rep) meta["repeat"] = rep;
            reports.push_back(score(data, cfg, pools, load_matched(run.path(in)), meta));
        }
        StageResult r;
        write_report(run, "", average_reports(reports), r.outputs);
        return r;
    });
}

std::string metric_cell(const MetricReport& report, const std::string& name) {
    auto it = report.aggregate.find(name);
    if (it == report.aggregate.end() || !it->second) return "";
    std::ostringstream out;
    out.precision(10);
    out << *it->second;
    return out.str();
}

const std::vector<std::string>& series_metrics() {
    static const std::vector<std::string> m{"hr", "ndcg", "aplt", "serendipity", "self_information", "arp",
                                            "pop_reo", "item_coverage", "gini", "hallucination"};
    return m;
}

int cmd_sweep(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    const auto lengths = parse_lengths(o.lengths, cfg.history_lengths);
    json params = json::array();
    for (auto l : lengths) params.push_back(length_label(l));
    auto inputs = data_inputs();
    inputs.push_back(kUsers);
    run.require(kUsers, "sample");
    return run_stage(run, "sweep", inputs, digest_of(params), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto users = load_users(run);
        auto rec = make_recommender(cfg.model, data, cfg.model.kind == "llm" ? make_gateway(cfg, run) : nullptr);
        const auto points = run_history_sweep(cfg, data, users, lengths, *rec);
        StageResult r;
        std::ostringstream series;
        series << "L";
        for (const auto& m : series_metrics()) series << ',' << m;
        series << '\n';
        for (const auto& p : points) {
            const std::string dir = "sweep/L" + length_label(p.length);
            write_eval_run(run, dir, p.run, r.outputs);
            std::vector<json> train;
            for (const auto& s : p.reduced_train) {
                train.push_back({{"user", s.user}, {"history", s.history}, {"target", s.target}});
            }
            write_jsonl(run.path(dir + "/reduced_train.jsonl"), train);
            r.outputs.push_back(dir + "/reduced_train.jsonl");
            series << length_label(p.length);
            for (const auto& m : series_metrics()) series << ',' << metric_cell(p.run.report, m);
            series << '\n';
            if (r.failure.empty()) r.failure = transport_summary(p.run);
        }
        run.write("sweep/series.csv", series.str());
        r.outputs.push_back("sweep/series.csv");
        return r;
    });
}

std::string buckets_csv(const std::vector<PositionBucket>& buckets) {
    std::ostringstream out;
    out.precision(10);
    out << "first_position,last_position,users,hits,hr,ndcg\n";
    for (const auto& b : buckets) {
        out << b.first_position << ',' << b.last_position << ',' << b.users << ',' << b.hits << ',' << b.hit_rate()
            << ',' << (b.users ? b.ndcg_sum / static_cast<double>(b.users) : 0.0) << '\n';
    }
    return out.str();
}

void write_bias(const RunDirectory& run, const std::string& dir, const PositionBiasResult& bias,
                StageResult& r) {
    write_eval_run(run, dir + "/shuffled", bias.shuffled, r.outputs);
    write_eval_run(run, dir + "/positive_first", bias.first, r.outputs);
    run.write(dir + "/buckets.csv", buckets_csv(bias.buckets));
    r.outputs.push_back(dir + "/buckets.csv");
    for (const auto* pass : {&bias.shuffled, &bias.first}) {
        if (r.failure.empty()) r.failure = transport_summary(*pass);
    }
}

int cmd_position(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    auto inputs = data_inputs();
    inputs.push_back(kUsers);
    run.require(kUsers, "sample");
    return run_stage(run, "position", inputs, digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto users = load_users(run);
        auto rec = make_recommender(cfg.model, data, cfg.model.kind == "llm" ? make_gateway(cfg, run) : nullptr);
        ExperimentConfig ranking = cfg;
        ranking.task = Task::ranking;
        const auto result = run_position_bias(ranking, data, build_pools(data, ranking, users), *rec);
        StageResult r;
        write_bias(run, "position", result, r);
        json report = result.to_json();
        report["model"] = rec->name();
        run.write("position/report.json", report.dump(2) + "\n");
        r.outputs.push_back("position/report.json");
        return r;
    });
}

int cmd_profile(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    std::vector<std::size_t> fallback = cfg.history_lengths;
    if (fallback.empty()) fallback.push_back(cfg.history_length);
    const auto lengths = parse_lengths(o.lengths, fallback);
    json params = json::array();
    for (auto l : lengths) params.push_back(length_label(l));
    auto inputs = data_inputs();
    inputs.push_back(kUsers);
    run.require(kUsers, "sample");
    return run_stage(run, "profile", inputs, digest_of(params), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto users = load_users(run);
        auto gateway = make_gateway(cfg, run);
        auto rec = make_recommender(cfg.model, data, cfg.model.kind == "llm" ? gateway : nullptr);
        auto generator = make_profile_generator(cfg.profile, cfg.model, gateway);
        const auto result = run_profile_eval(cfg, data, users, lengths, *rec, *generator);
        StageResult r;
        std::ostringstream series;
        series << "L,variant";
        for (const auto& m : series_metrics()) series << ',' << m;
        series << '\n';
        const std::vector<ProfileText>* main_profiles = nullptr;
        for (const auto& point : result.points) {
            const std::string dir = "profile/L" + length_label(point.length);
            save_profiles(point.profiles, run.path(dir + "/profiles.jsonl"));
            r.outputs.push_back(dir + "/profiles.jsonl");
            if (point.length == cfg.history_length) main_profiles = &point.profiles;
            for (const auto& [variant, eval] : point.variants) {
                write_eval_run(run, dir + "/" + variant, eval, r.outputs);
                series << length_label(point.length) << ',' << variant;
                for (const auto& m : series_metrics()) series << ',' << metric_cell(eval.report, m);
                series << '\n';
                if (r.failure.empty()) r.failure = transport_summary(eval);
            }
        }
        if (main_profiles) {
            save_profiles(*main_profiles, run.path(kProfiles));
        } else {
            std::vector<ProfileText> profiles;
            for (auto& [u, p] : generate_profiles(cfg, data, eval_histories(data, users, cfg.history_length),
                                                  *generator)) {
                profiles.push_back(std::move(p));
            }
            save_profiles(profiles, run.path(kProfiles));
        }
        r.outputs.push_back(kProfiles);
        run.write("profile/series.csv", series.str());
        r.outputs.push_back("profile/series.csv");
        return r;
    });
}

int cmd_rerank(const Options& o) {
    const RunDirectory run(o.run_dir);
    const ExperimentConfig cfg = run_config(run);
    if (cfg.run_files.empty()) throw UsageError("rerank needs run_files in the configuration");
    auto inputs = data_inputs();
    inputs.push_back(kUsers);
    for (auto& p : run_file_inputs(cfg)) inputs.push_back(p);
    run.require(kUsers, "sample");
    return run_stage(run, "rerank", inputs, digest_of(json::object()), o.force, [&] {
        const PreparedData data = load_prepared(run);
        const auto users = load_users(run);
        const auto runs = load_runs(cfg);
        auto rec = make_recommender(cfg.model, data, cfg.model.kind == "llm" ? make_gateway(cfg, run) : nullptr);
        const auto result = run_rerank_eval(cfg, data, users, runs, *rec);
        StageResult r;
        write_bias(run, "rerank", result.bias, r);
        json baselines = json::object();
        for (const auto& [name, report] : result.baselines) {
            write_report(run, "rerank/baselines/" + name, report, r.outputs);
            baselines[name] = report.to_json();
        }
        json report = {{"model", rec->name()}, {"bias", result.bias.to_json()}, {"baselines", baselines}};
        run.write("rerank/report.json", report.dump(2) + "\n");
        r.outputs.push_back("rerank/report.json");
        return r;
    });
}

// ---- report -----------------------------------------------------------------

std::string row_label(const MetricReport& report) {
    std::string label = report.metadata.value("model", std::string("?"));
    const std::string strategy = report.metadata.value("strategy", std::string("base"));
    if (strategy != "base") label += " (" + strategy + ")";
    return label;
}

TableRow load_row(const fs::path& dir) {
    const auto report = MetricReport::from_json(json::parse(read_file(dir / "report.json")));
    TableRow row{row_label(report), report.aggregate, {}};
    if (fs::exists(dir / "per_user.csv")) row.per_user = parse_per_user_csv(read_file(dir / "per_user.csv"));
    return row;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const fs::path& path) {
    CsvTable t;
    for (auto& line : split(read_file(path), '\n')) {
        if (line.empty()) continue;
        if (t.header.empty()) {
            t.header = split(line, ',');
        } else {
            t.rows.push_back(split(line, ','));
        }
    }
    return t;
}

std::optional<double> cell_value(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return std::stod(s);
}

std::size_t column(const CsvTable& t, const std::string& name) {
    for (std::size_t i = 0; i < t.header.size(); ++i) {
        if (t.header[i] == name) return i;
    }
    throw ParseError("series file", 1, "missing column " + name);
}

// Series over an ordinal x axis: one point per distinct label, in file order.
void emit_chart(const RunDirectory& run, const std::string& stem, const std::string& title,
                const std::string& x_label, const std::vector<std::string>& ticks, const std::vector<Series>& series,
                StageResult& r) {
    run.write("report/" + stem + ".csv", series_csv(x_label, series));
    run.write("report/" + stem + ".svg", svg_line_chart(title, x_label, "value", series, ticks));
    r.outputs.push_back("report/" + stem + ".csv");
    r.outputs.push_back("report/" + stem + ".svg");
}

int cmd_report(const Options& o) {
    const RunDirectory run(o.run_dir);
    const std::vector<std::string> candidates{"report.json",          "per_user.csv",        "sweep/series.csv",
                                              "position/report.json", "position/buckets.csv", "profile/series.csv",
                                              "rerank/report.json"};
    std::vector<std::string> inputs;
    for (const auto& c : candidates) {
        if (run.exists(c)) inputs.push_back(c);
    }
    if (run.exists("rerank/report.json")) {
        for (const auto& entry : fs::directory_iterator(run.path("rerank/baselines"))) {
            const auto name = entry.path().filename().string();
            inputs.push_back("rerank/baselines/" + name + "/report.json");
            inputs.push_back("rerank/baselines/" + name + "/per_user.csv");
        }
        inputs.push_back("rerank/shuffled/report.json");
        inputs.push_back("rerank/shuffled/per_user.csv");
    }
    for (const auto& dir : o.compare) {
        const RunDirectory other(dir);
        other.require("report.json", "eval");
        inputs.push_back(fs::absolute(other.path("report.json")).string());
        if (other.exists("per_user.csv")) inputs.push_back(fs::absolute(other.path("per_user.csv")).string());
    }
    if (inputs.empty()) {
        throw PreconditionError("missing artifact " + run.path("report.json").string() +
                                "; run the `eval` stage first");
    }
    std::sort(inputs.begin(), inputs.end());
    json params = json::array();
    for (const auto& d : o.compare) params.push_back(fs::absolute(d).string());
    return run_stage(run, "report", inputs, digest_of(params), o.force, [&] {
        StageResult r;
        std::vector<TableRow> rows;
        if (run.exists("report.json")) rows.push_back(load_row(run.root()));
        for (const auto& dir : o.compare) rows.push_back(load_row(dir));
        if (!rows.empty()) {
            const auto table = comparison_table(rows, default_table_metrics());
            run.write("report/table.md", table.to_markdown());
            run.write("report/table.csv", table.to_csv());
            r.outputs.insert(r.outputs.end(), {"report/table.md", "report/table.csv"});
        }
        if (run.exists("rerank/report.json")) {
            std::vector<TableRow> rerank_rows{load_row(run.path("rerank/shuffled"))};
            for (const auto& entry : fs::directory_iterator(run.path("rerank/baselines"))) {
                rerank_rows.push_back(load_row(entry.path()));
            }
            std::sort(rerank_rows.begin() + 1, rerank_rows.end(),
                      [](const TableRow& a, const TableRow& b) { return a.label < b.label; });
            const auto table = comparison_table(rerank_rows, default_table_metrics());
            run.write("report/rerank_table.md", table.to_markdown());
            run.write("report/rerank_table.csv", table.to_csv());
            r.outputs.insert(r.outputs.end(), {"report/rerank_table.md", "report/rerank_table.csv"});
        }
        if (run.exists("sweep/series.csv")) {
            const auto t = read_csv(run.path("sweep/series.csv"));
            std::vector<std::string> ticks;
            for (const auto& row : t.rows) ticks.push_back(row.at(0));
            std::vector<Series> acc, beyond;
            for (const auto& m : series_metrics()) {
                Series s{m, {}, {}};
                const auto c = column(t, m);
                for (std::size_t i = 0; i < t.rows.size(); ++i) {
                    if (auto v = cell_value(t.rows[i].at(c))) {
                        s.x.push_back(static_cast<double>(i));
                        s.y.push_back(*v);
                    }
                }
                (m == "hr" || m == "ndcg" ? acc : beyond).push_back(std::move(s));
            }
            emit_chart(run, "sweep_accuracy", "Accuracy by history length", "L", ticks, acc, r);
            std::vector<Series> bounded;
            for (auto& s : beyond) {
                if (s.name != "self_information" && s.name != "arp") bounded.push_back(s);
            }
            emit_chart(run, "sweep_beyond", "Beyond-accuracy metrics by history length", "L", ticks, bounded, r);
        }
        if (run.exists("position/buckets.csv")) {
            const auto t = read_csv(run.path("position/buckets.csv"));
            std::vector<std::string> ticks;
            Series hr{"hr", {}, {}}, nd{"ndcg", {}, {}};
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                const auto& row = t.rows[i];
                ticks.push_back(row.at(0) + "-" + row.at(1));
                if (std::stoul(row.at(2)) == 0) continue;
                hr.x.push_back(static_cast<double>(i));
                hr.y.push_back(std::stod(row.at(4)));
                nd.x.push_back(static_cast<double>(i));
                nd.y.push_back(std::stod(row.at(5)));
            }
            emit_chart(run, "position", "Accuracy by positive position", "position", ticks, {hr, nd}, r);
        }
        if (run.exists("profile/series.csv")) {
            const auto t = read_csv(run.path("profile/series.csv"));
            std::vector<std::string> ticks;
            std::map<std::string, Series> by_variant;
            const auto hr = column(t, "hr");
            for (const auto& row : t.rows) {
                if (ticks.empty() || ticks.back() != row.at(0)) ticks.push_back(row.at(0));
                auto& s = by_variant[row.at(1)];
                s.name = row.at(1);
                if (auto v = cell_value(row.at(hr))) {
                    s.x.push_back(static_cast<double>(ticks.size() - 1));
                    s.y.push_back(*v);
                }
            }
            std::vector<Series> series;
            for (auto& [name, s] : by_variant) series.push_back(std::move(s));
            emit_chart(run, "profile_hr", "HR by history length and profile use", "L", ticks, series, r);
        }
        return r;
    });
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Evaluate LLM and baseline recommenders on sequential interaction data", "beyondrec"};
    app.require_subcommand(1);
    Options o;
    std::function<int(const Options&)> action;

    auto add = [&](const std::string& name, const std::string& help, int (*fn)(const Options&)) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--run-dir", o.run_dir, "Run directory")->required();
        sub->add_flag("--force", o.force, "Rerun even when the stage is up to date");
        sub->callback([&action, fn] { action = fn; });
        return sub;
    };
    add("prepare", "Load, filter and split the dataset", cmd_prepare)
        ->add_option("--config", o.config, "Experiment configuration (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    add("sample", "Draw the evaluation users behind the K-S gate", cmd_sample);
    add("pools", "Build candidate pools", cmd_pools);
    add("prompts", "Render prompts", cmd_prompts);
    add("invoke", "Query the recommender", cmd_invoke);
    add("parse", "Parse and match responses to catalog items", cmd_parse);
    add("eval", "Compute metrics", cmd_eval);
    add("sweep", "History-length sweep", cmd_sweep)
        ->add_option("--lengths", o.lengths, "Comma-separated lengths, `full` for the whole history");
    add("position", "Candidate position bias probe", cmd_position);
    add("profile", "Profile generation and use", cmd_profile)
        ->add_option("--lengths", o.lengths, "Comma-separated lengths, `full` for the whole history");
    add("rerank", "Re-ranking over external run files", cmd_rerank);
    add("report", "Tables and plot series", cmd_report)
        ->add_option("--compare", o.compare, "Further run directories to tabulate")
        ->check(CLI::ExistingDirectory);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        return action(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const PreconditionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const SampleRejected& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace beyondrec
