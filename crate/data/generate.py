#!/usr/bin/env python3
"""Regenerate the toy fixtures under data/.

toy/     50-passage corpus, 10-query dataset and a mock-backed config.
sample/  50-record HAGRID-layout sample plus its stats, counted here
         independently of the Rust loader.
"""
import json
import random
import re
from pathlib import Path

ROOT = Path(__file__).resolve().parent

ENTITIES = [
    "zorvath", "quellin", "marabesh", "tovrenik", "alduhar", "pensiva", "korrabel",
    "ustrolin", "fendaray", "gilmoth", "harvessa", "idrennon", "jostavel", "kelmirra",
    "lunovar", "morthain", "nessivar", "ostrabel", "pyrallon", "quorvane", "rhistol",
    "sarnovik", "telmaris", "umbravel", "varnethys",
]
KINDS = ["river", "mountain", "forest", "lake", "valley"]
REGIONS = ["northern", "southern", "eastern", "western", "central"]
ANIMALS = ["trout", "eagles", "deer", "herons", "wolves", "otters", "falcons"]
TRANSPORT = ["boat", "train", "bus", "bicycle", "ferry"]


def topic(j):
    e = ENTITIES[j]
    kind = KINDS[j % len(KINDS)]
    region = REGIONS[(j // len(KINDS)) % len(REGIONS)]
    animal = ANIMALS[j % len(ANIMALS)]
    year = 1800 + 7 * j
    count = 12 + 3 * j
    transport = TRANSPORT[j % len(TRANSPORT)]
    title = e.capitalize()
    a = {
        "docid": f"d{2 * j + 1:03}",
        "title": title,
        "text": f"{title} is a {kind} in the {region} region. It was first mapped in {year}.",
    }
    b = {
        "docid": f"d{2 * j + 2:03}",
        "title": title,
        "text": f"The {title} {kind} is home to {count} species of {animal}. "
        f"Visitors reach it by {transport}.",
    }
    return e, kind, region, animal, count, a, b


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=False) + "\n")


def toy():
    corpus, queries = [], []
    for j in range(len(ENTITIES)):
        e, kind, region, animal, count, a, b = topic(j)
        corpus += [a, b]
        if j >= 10:
            continue
        title = e.capitalize()
        answers = [
            {
                "text": f"{title} is a {kind} in the {region} region [1]. "
                f"It is home to {count} species of {animal} [2].",
                "informative": True,
                "attributable": True,
            }
        ]
        if j % 2 == 0:
            answers.append(
                {
                    "text": f"{title} is a {kind} [1]. It was mapped long ago [1][2].",
                    "informative": True,
                    "attributable": j % 4 == 0,
                }
            )
        queries.append(
            {
                "query_id": f"q{j + 1:02}",
                "query": f"Tell me about the {title} {kind}",
                "gold_passages": [{"docid": a["docid"], "rel": 1}, {"docid": b["docid"], "rel": 1}],
                "answers": answers,
            }
        )
    write_jsonl(ROOT / "toy" / "corpus.jsonl", corpus)
    write_jsonl(ROOT / "toy" / "dataset.jsonl", queries)
    with open(ROOT / "toy" / "qrels.txt", "w") as f:
        for q in queries:
            for g in q["gold_passages"]:
                f.write(f"{q['query_id']} 0 {g['docid']} {g['rel']}\n")


MARKER = re.compile(r"\[(\d+)\]")


def sample():
    rng = random.Random(20240131)
    words = "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda sigma omega".split()
    rows = []
    n_answers = n_inform = n_attrib = 0
    total_quotes = 0
    cit_counts = []
    for q in range(50):
        n_quotes = rng.randint(1, 4)
        quotes = [
            {
                "idx": i + 1,
                "docid": f"{1000 + q}#{i}",
                "text": " ".join(rng.choice(words) for _ in range(8)).capitalize() + ".",
            }
            for i in range(n_quotes)
        ]
        answers = []
        for _ in range(rng.randint(1, 3)):
            sentences = []
            for _ in range(rng.randint(1, 3)):
                body = " ".join(rng.choice(words) for _ in range(5)).capitalize()
                # occasionally cite one past the last quote to exercise the drop path
                marks = "".join(
                    f"[{rng.randint(1, n_quotes + (1 if rng.random() < 0.1 else 0))}]"
                    for _ in range(rng.randint(0, 2))
                )
                sentences.append(f"{body} {marks}." if marks else f"{body}.")
            informative = rng.choice([1, 1, 1, 0])
            attributable = rng.choice([1, 0, None])
            text = " ".join(sentences)
            answers.append({"answer": text, "informative": informative, "attributable": attributable})
            n_answers += 1
            n_inform += informative == 1
            n_attrib += attributable == 1
            valid = {int(m) for m in MARKER.findall(text) if 1 <= int(m) <= n_quotes}
            cit_counts.append(len(valid))
        total_quotes += n_quotes
        rows.append({"query_id": q, "query": " ".join(rng.choice(words) for _ in range(4)) + "?",
                     "quotes": quotes, "answers": answers})
    write_jsonl(ROOT / "sample" / "hagrid_sample.jsonl", rows)
    stats = {
        "n_queries": len(rows),
        "n_answers": n_answers,
        "n_informative": n_inform,
        "n_attributable": n_attrib,
        "avg_gold_passages": total_quotes / len(rows),
        "avg_citations": sum(cit_counts) / len(cit_counts),
    }
    with open(ROOT / "sample" / "hagrid_sample.stats.json", "w") as f:
        json.dump(stats, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    toy()
    sample()
