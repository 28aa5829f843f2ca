# Copyright 2026 The beyondrec Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Converts Amazon review dumps into interactions.jsonl and catalog.jsonl.

Reviews: JSON lines with reviewerID, asin and unixReviewTime, or a ratings
CSV with user,item,rating,timestamp rows. Metadata: JSON lines or Python
literal lines with asin and title. Interactions with untitled items are
dropped.
"""

import argparse
import ast
import csv
import gzip
import json
import pathlib


def open_text(path):
    path = pathlib.Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def parse_record(line):
    try:
        return json.loads(line)
    except json.JSONDecodeError:
        return ast.literal_eval(line)


def read_titles(path):
    titles = {}
    with open_text(path) as f:
        for line in f:
            if not line.strip():
                continue
            record = parse_record(line)
            title = (record.get("title") or "").strip()
            if title:
                titles[record["asin"]] = " ".join(title.split())
    return titles


def read_interactions(path):
    name = str(path)[:-3] if str(path).endswith(".gz") else str(path)
    with open_text(path) as f:
        if name.endswith(".csv"):
            for row in csv.reader(f):
                yield row[0], row[1], int(float(row[3]))
        else:
            for line in f:
                if line.strip():
                    r = parse_record(line)
                    yield r["reviewerID"], r["asin"], int(r["unixReviewTime"])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reviews", required=True)
    parser.add_argument("--meta", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    titles = read_titles(args.meta)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    used = set()
    kept = dropped = 0
    with open(out / "interactions.jsonl", "w", encoding="utf-8") as f:
        for user, item, ts in read_interactions(args.reviews):
            if item not in titles:
                dropped += 1
                continue
            used.add(item)
            kept += 1
            f.write(json.dumps({"user": user, "item": item, "ts": ts}) + "\n")
    with open(out / "catalog.jsonl", "w", encoding="utf-8") as f:
        for item in sorted(used):
            f.write(json.dumps({"item": item, "title": titles[item]}, ensure_ascii=False) + "\n")
    print(f"{kept} interactions over {len(used)} items written, {dropped} without a title dropped")


if __name__ == "__main__":
    main()
