"""Generate the synthetic end-to-end fixture: a learnable toy MRC dataset,
a matching query log with minable phrases, stop words, and a lexicon for the
dictionary translator.

The MRC task is trivially learnable by design: every passage contains exactly
one word from a closed answer set, and that word is the gold span. Usage:

    python3 scripts/make_fixture.py --out fixture/ --train-size 200 --seed 1
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from xmrc.records import AnswerSpan, QAInstance, save_dataset

FILLERS = [
    "alpha", "bravo", "delta", "echo", "foxtrot", "golf", "hotel", "india",
    "juliet", "kilo", "lima", "mike", "november", "oscar", "papa", "quebec",
    "romeo", "sierra", "tango", "uniform", "victor", "whiskey", "yankee", "zulu",
]
ANSWERS = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine"]
QUESTION = "how many players are on the team"

PHRASE_SUBJECTS = [
    ("george washington", "cherry tree"),
    ("abraham lincoln", "log cabin"),
    ("marie curie", "radium research"),
    ("isaac newton", "falling apple"),
]


def make_mrc_dataset(n: int, seed: int, lang: str = "en", prefix: str = "inst") -> list[QAInstance]:
    rng = random.Random(seed)
    out = []
    for k in range(n):
        answer = rng.choice(ANSWERS)
        n_words = rng.randint(8, 14)
        words = [rng.choice(FILLERS) for _ in range(n_words)]
        words.insert(rng.randrange(len(words) + 1), answer)
        # sprinkle minable knowledge phrases into most passages so the
        # downstream masking stage has phrase spans to prioritize
        if rng.random() < 0.7:
            subject, obj = PHRASE_SUBJECTS[rng.randrange(len(PHRASE_SUBJECTS))]
            phrase = rng.choice([subject, obj])
            words.insert(rng.randrange(len(words) + 1), phrase)
        passage = " ".join(words)
        start = passage.encode("utf-8").index(answer.encode("utf-8"))
        # the answer set and fillers are disjoint, so index() finds the span
        out.append(
            QAInstance(
                id=f"{prefix}-{k}",
                lang=lang,
                question=QUESTION,
                passage=passage,
                answers=(AnswerSpan(start, start + len(answer), answer),),
                answer_type="numeric" if k % 2 == 0 else "count",
            )
        )
    return out


def make_query_log(path: Path, lang: str = "en") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for subject, obj in PHRASE_SUBJECTS:
            query = f"when did {subject} see the {obj} story"
            titles = [
                f"{subject} and the {obj}",
                f"the {obj} of {subject} explained",
                f"{subject} history of the {obj}",
            ]
            fh.write(json.dumps({"query": query, "lang": lang, "titles": titles}) + "\n")
        # one noisy query whose phrases miss the 0.7 threshold
        fh.write(
            json.dumps(
                {
                    "query": "rare phrase seldom seen anywhere",
                    "lang": lang,
                    "titles": ["rare phrase once", "nothing here", "still nothing"],
                }
            )
            + "\n"
        )


def make_lexicon(path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in FILLERS:
            fh.write(f"{word}\tde_{word}\n")
        for i, word in enumerate(["how", "many", "players", "are", "on", "the", "team"]):
            fh.write(f"{word}\tde_q{i}\n")


def make_stopwords(path: Path) -> None:
    path.write_text("\n".join(["the", "of", "a", "an", "and", "when", "did", "see", "story"]) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("fixture"))
    parser.add_argument("--train-size", type=int, default=200)
    parser.add_argument("--dev-size", type=int, default=40)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    args.out.mkdir(parents=True, exist_ok=True)
    save_dataset(make_mrc_dataset(args.train_size, args.seed), args.out / "train_en.jsonl")
    save_dataset(
        make_mrc_dataset(args.dev_size, args.seed + 1, prefix="dev"),
        args.out / "dev_en.jsonl",
    )
    make_query_log(args.out / "querylog_en.jsonl")
    make_lexicon(args.out / "lex_en_de.tsv")
    make_stopwords(args.out / "stop_en.txt")

    config = {
        "seed": args.seed,
        "languages": ["en", "de"],
        "pivot": "en",
        "workdir": "out",
        "source_dataset": "train_en.jsonl",
        "eval_dataset": "dev_en.jsonl",
        "query_log": "querylog_en.jsonl",
        "stopwords": "stop_en.txt",
        "lexicons": {"de": "lex_en_de.tsv"},
        "mining": {"threshold": 0.7, "ngram_min": 2, "ngram_max": 4},
        "masking": {"ratio": 0.15, "max_len": 256},
        "vocab_size": 500,
        "encoder": {"embed_dim": 32, "layers": 1, "heads": 1},
        "train": {
            "tasks": ["main_mrc", "mix_mrc", "lakm"],
            "learning_rate": 0.003,
            "batch_size": 8,
            "max_steps": 60,
        },
    }
    (args.out / "pipeline.json").write_text(json.dumps(config, indent=2) + "\n")
    print(f"fixture written to {args.out}/")


if __name__ == "__main__":
    main()
