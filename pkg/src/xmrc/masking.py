"""Reference subword tokenizer and knowledge-phrase-first masking.

A deterministic greedy-longest-match tokenizer stands in for a pre-trained
model's WordPiece so the pipeline is self-contained. Masking selects every
token overlapping a knowledge-phrase span first, then tops up with uniform
random positions until 15% of the (non-special) sequence is selected; each
selected position gets the 80/10/10 mask/random/keep treatment.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .records import PassageWithPhrases

PAD, UNK, START, DELIM, MASK = "[PAD]", "[UNK]", "[Start]", "[Delim]", "[MASK]"
SPECIALS = (PAD, UNK, START, DELIM, MASK)
CONT = "##"

_WORD_RE = re.compile(r"\S+")

ACTIONS = ("mask", "random", "keep")


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class SubwordVocab:
    id_to_token: tuple[str, ...]

    def __post_init__(self):
        for sp in SPECIALS:
            if sp not in self.id_to_token:
                raise VocabError(f"special token {sp} missing from vocabulary")

    @property
    def token_to_id(self) -> dict[str, int]:
        cached = self.__dict__.get("_t2i")
        if cached is None:
            cached = {t: i for i, t in enumerate(self.id_to_token)}
            object.__setattr__(self, "_t2i", cached)
        return cached

    def __len__(self) -> int:
        return len(self.id_to_token)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self.token_to_id[sp] for sp in SPECIALS)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.id_to_token:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SubwordVocab":
        with open(path, "r", encoding="utf-8") as fh:
            tokens = tuple(line.rstrip("\n") for line in fh if line.rstrip("\n"))
        return cls(tokens)


def build_vocab(corpus: list[str], max_size: int) -> SubwordVocab:
    """Deterministic vocabulary: specials, every seen character (initial and
    continuation form), then most-frequent whole words up to max_size."""
    if not corpus:
        raise VocabError("empty corpus")
    word_freq: Counter[str] = Counter()
    chars: set[str] = set()
    for text in corpus:
        for m in _WORD_RE.finditer(text):
            word = m.group()
            word_freq[word] += 1
            chars.update(word)
    base = list(SPECIALS)
    for ch in sorted(chars):
        base.append(ch)
    for ch in sorted(chars):
        base.append(CONT + ch)
    if max_size < len(base):
        raise VocabError(
            f"max_size {max_size} below specials + character inventory ({len(base)})"
        )
    tokens = list(base)
    taken = set(tokens)
    for word, _ in sorted(word_freq.items(), key=lambda kv: (-kv[1], kv[0])):
        if len(tokens) >= max_size:
            break
        if word not in taken and len(word) > 1:
            tokens.append(word)
            taken.add(word)
    return SubwordVocab(tuple(tokens))


def tokenize(text: str, vocab: SubwordVocab) -> tuple[list[int], list[tuple[int, int]]]:
    """Greedy longest-match segmentation within whitespace-delimited words.

    Returns token ids and their byte ranges into the UTF-8 encoding of text.
    Unknown characters become [UNK] with a 1-character range.
    """
    t2i = vocab.token_to_id
    unk = t2i[UNK]
    if text.isascii():
        byte_at = None
    else:
        byte_at = [0]
        for ch in text:
            byte_at.append(byte_at[-1] + len(ch.encode("utf-8")))

    def b(char_pos: int) -> int:
        return char_pos if byte_at is None else byte_at[char_pos]

    ids: list[int] = []
    ranges: list[tuple[int, int]] = []
    for m in _WORD_RE.finditer(text):
        word, wstart = m.group(), m.start()
        start = 0
        while start < len(word):
            end = len(word)
            match_id = None
            while end > start:
                piece = word[start:end]
                if start > 0:
                    piece = CONT + piece
                if piece in t2i:
                    match_id = t2i[piece]
                    break
                end -= 1
            if match_id is None:
                match_id = unk
                end = start + 1
            ids.append(match_id)
            ranges.append((b(wstart + start), b(wstart + end)))
            start = end
    return ids, ranges


@dataclass(frozen=True)
class Selection:
    pos: int
    action: str
    target: int


@dataclass(frozen=True)
class MaskedExample:
    tokens: tuple[int, ...]
    selections: tuple[Selection, ...]
    phrase_positions: frozenset[int]

    def to_json(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "selections": [
                {"pos": s.pos, "action": s.action, "target": s.target}
                for s in self.selections
            ],
            "phrase_positions": sorted(self.phrase_positions),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MaskedExample":
        return cls(
            tokens=tuple(obj["tokens"]),
            selections=tuple(
                Selection(s["pos"], s["action"], s["target"]) for s in obj["selections"]
            ),
            phrase_positions=frozenset(obj.get("phrase_positions", [])),
        )


def mask_example(
    passage: PassageWithPhrases,
    vocab: SubwordVocab,
    ratio: float = 0.15,
    rng_seed: int = 0,
    max_len: int = 256,
) -> MaskedExample:
    """Mask one passage. Step 1 selects every token overlapping a phrase span;
    step 2 tops up uniformly at random to floor(ratio * n) selections, n being
    the non-special token count after truncation. Deterministic given rng_seed.
    """
    ids, ranges = tokenize(passage.passage, vocab)
    t2i = vocab.token_to_id
    start_id, mask_id = t2i[START], t2i[MASK]
    special_ids = vocab.special_ids

    ids = ids[: max_len - 1]
    ranges = ranges[: max_len - 1]
    tokens = [start_id] + ids  # position 0 is [Start], never selected
    n = len(ids)

    phrase_positions = set()
    for i, (bs, be) in enumerate(ranges):
        for ps, pe in passage.phrase_spans:
            if bs < pe and ps < be:
                phrase_positions.add(i + 1)
                break

    rng = random.Random(rng_seed)
    budget = int(ratio * n)
    selected = sorted(phrase_positions)
    if len(selected) < budget:
        pool = [p for p in range(1, n + 1) if p not in phrase_positions]
        selected += sorted(rng.sample(pool, budget - len(selected)))

    non_special = [i for i in range(len(vocab)) if i not in special_ids]
    selections: list[Selection] = []
    for pos in selected:
        target = tokens[pos]
        r = rng.random()
        if r < 0.8:
            action = "mask"
            tokens[pos] = mask_id
        elif r < 0.9:
            action = "random"
            tokens[pos] = non_special[rng.randrange(len(non_special))]
        else:
            action = "keep"
        selections.append(Selection(pos=pos, action=action, target=target))

    return MaskedExample(
        tokens=tuple(tokens),
        selections=tuple(selections),
        phrase_positions=frozenset(phrase_positions),
    )


def mask_corpus(
    corpus: list[PassageWithPhrases],
    vocab: SubwordVocab,
    ratio: float = 0.15,
    seed: int = 0,
    max_len: int = 256,
) -> list[MaskedExample]:
    """Mask every passage with a per-example seed derived as seed XOR index."""
    return [
        mask_example(p, vocab, ratio=ratio, rng_seed=seed ^ i, max_len=max_len)
        for i, p in enumerate(corpus)
    ]


def save_masked(examples: list[MaskedExample], path: str | Path) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(ex.to_json()) + "\n")
    return len(examples)


def load_masked(path: str | Path) -> list[MaskedExample]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(MaskedExample.from_json(json.loads(line)))
    return out
