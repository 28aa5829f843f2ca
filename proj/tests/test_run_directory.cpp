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


#include <doctest.h>

#include "beyondrec/run_directory.hpp"
#include "support.hpp"

using namespace beyondrec;
using beyondrec::testing::TempDir;

TEST_CASE("missing artifacts name the producing stage") {
    TempDir dir;
    RunDirectory run(dir / "run");
    try {
        run.require("pools/pools.jsonl", "pools");
        FAIL("expected PreconditionError");
    } catch (const PreconditionError& e) {
        const std::string what = e.what();
        CHECK(what.find("pools/pools.jsonl") != std::string::npos);
        CHECK(what.find("`pools`") != std::string::npos);
    }
    run.write("pools/pools.jsonl", "{}\n");
    CHECK_NOTHROW(run.require("pools/pools.jsonl", "pools"));
    CHECK(run.exists("pools/pools.jsonl"));
}

TEST_CASE("stage freshness") {
    TempDir dir;
    RunDirectory run(dir / "run");
    write_file_atomic(dir / "input.txt", "data v1");
    const std::string input = (dir / "input.txt").string();
    CHECK_FALSE(run.up_to_date("prepare", {input}, "p1"));

    run.write("out/a.txt", "A");
    run.record("prepare", {input}, {"out/a.txt"}, "p1");
    CHECK(run.up_to_date("prepare", {input}, "p1"));
    CHECK_FALSE(run.up_to_date("prepare", {input}, "p2"));
    CHECK_FALSE(run.up_to_date("prepare", {}, "p1"));
    CHECK_FALSE(run.up_to_date("other", {input}, "p1"));

    write_file_atomic(dir / "input.txt", "data v2");
    CHECK_FALSE(run.up_to_date("prepare", {input}, "p1"));
    run.record("prepare", {input}, {"out/a.txt"}, "p1");
    CHECK(run.up_to_date("prepare", {input}, "p1"));

    run.write("out/a.txt", "tampered");
    CHECK_FALSE(run.up_to_date("prepare", {input}, "p1"));
    CHECK(run.verify() == std::vector<std::string>{"out/a.txt"});

    run.record("prepare", {input}, {"out/a.txt"}, "p1", "failed");
    CHECK_FALSE(run.up_to_date("prepare", {input}, "p1"));
}

TEST_CASE("manifest contents") {
    TempDir dir;
    RunDirectory run(dir / "run");
    CHECK(run.manifest().at("artifacts").empty());
    run.write("a.txt", "abc");
    run.write("b.txt", "xyz");
    run.record("s1", {}, {"a.txt"}, "p");
    run.record("s2", {"a.txt"}, {"b.txt"}, "q");
    const auto m = run.manifest();
    CHECK(m.at("artifacts").at("a.txt") == sha256_hex("abc"));
    CHECK(m.at("artifacts").at("b.txt") == sha256_hex("xyz"));
    CHECK(m.at("stages").at("s2").at("inputs").at("a.txt") == sha256_hex("abc"));
    CHECK(m.at("stages").at("s1").at("status") == "ok");
    CHECK(run.verify().empty());
    fs::remove(run.path("b.txt"));
    CHECK(run.verify() == std::vector<std::string>{"b.txt"});
}
