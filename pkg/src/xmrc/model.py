"""Small transformer encoder with a span-extraction head and a masked-token head.

A deliberately tiny stand-in for a large pre-trained encoder: the task heads,
the loss definitions, and the batch scheduling around it are what matter.
Everything runs in float64 on CPU so gradient checks against central finite
differences are tight.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .masking import DELIM, MASK, PAD, START, MaskedExample, SubwordVocab, tokenize
from .records import AnswerSpan, QAInstance

MAX_SPAN_TOKENS = 30

MODEL_MAGIC = b"XMRC"
MODEL_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    embed_dim: int = 64
    layers: int = 2
    heads: int = 1
    max_len_mrc: int = 384
    max_len_lakm: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")
        if min(self.max_len_mrc, self.max_len_lakm) < 8:
            raise ValueError("max lengths must be at least 8")


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm1 = nn.LayerNorm(dim)
        self.norm2 = nn.LayerNorm(dim)
        self.ff1 = nn.Linear(dim, 4 * dim)
        self.ff2 = nn.Linear(4 * dim, dim)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        # x: (B, T, D); pad_mask: (B, T) True where padding
        b, t, d = x.shape
        h = self.heads
        q, k, v = self.qkv(self.norm1(x)).chunk(3, dim=-1)
        q = q.view(b, t, h, d // h).transpose(1, 2)
        k = k.view(b, t, h, d // h).transpose(1, 2)
        v = v.view(b, t, h, d // h).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / (d // h) ** 0.5
        scores = scores.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        attn = scores.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.proj(out)
        x = x + self.ff2(F.gelu(self.ff1(self.norm2(x))))
        return x


class SpanEncoder(nn.Module):
    """Token+position embeddings, stacked attention layers, two output heads."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        max_len = max(config.max_len_mrc, config.max_len_lakm)
        self.token_emb = nn.Embedding(config.vocab_size, config.embed_dim)
        self.pos_emb = nn.Embedding(max_len, config.embed_dim)
        self.layers = nn.ModuleList(
            EncoderLayer(config.embed_dim, config.heads) for _ in range(config.layers)
        )
        self.span_start = nn.Linear(config.embed_dim, 1)
        self.span_end = nn.Linear(config.embed_dim, 1)
        self.mlm_head = nn.Linear(config.embed_dim, config.vocab_size)
        self.double()

    def encode(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        """Per-position representations for a padded id batch."""
        t = ids.shape[1]
        x = self.token_emb(ids) + self.pos_emb(torch.arange(t))[None]
        for layer in self.layers:
            x = layer(x, pad_mask)
        return x

    def span_logits(self, ids, pad_mask) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.encode(ids, pad_mask)
        start = self.span_start(h).squeeze(-1).masked_fill(pad_mask, float("-inf"))
        end = self.span_end(h).squeeze(-1).masked_fill(pad_mask, float("-inf"))
        return start, end

    def mlm_logits(self, ids, pad_mask) -> torch.Tensor:
        return self.mlm_head(self.encode(ids, pad_mask))


# --------------------------------------------------------------------------
# Input packing


@dataclass(frozen=True)
class PackedMRC:
    """One MRC instance packed as [Start] question [Delim] passage."""

    ids: tuple[int, ...]
    passage_token_ranges: tuple[tuple[int, int], ...]  # byte ranges per passage token
    passage_offset: int  # sequence position of the first passage token
    start_pos: int  # gold start position in the packed sequence
    end_pos: int


def pack_mrc(
    instance: QAInstance, vocab: SubwordVocab, max_len: int
) -> PackedMRC | None:
    """Pack and map the gold byte span to token positions.

    Returns None when the span is lost to truncation or unmappable.
    """
    t2i = vocab.token_to_id
    q_ids, _ = tokenize(instance.question, vocab)
    p_ids, p_ranges = tokenize(instance.passage, vocab)
    head = [t2i[START]] + q_ids + [t2i[DELIM]]
    room = max_len - len(head)
    if room < 1:
        return None
    p_ids = p_ids[:room]
    p_ranges = p_ranges[:room]

    ans = instance.answers[0]
    start_tok = end_tok = None
    for i, (bs, be) in enumerate(p_ranges):
        if start_tok is None and be > ans.start:
            start_tok = i
        if bs < ans.end:
            end_tok = i
    if start_tok is None or end_tok is None or end_tok < start_tok:
        return None
    offset = len(head)
    return PackedMRC(
        ids=tuple(head + p_ids),
        passage_token_ranges=tuple(p_ranges),
        passage_offset=offset,
        start_pos=offset + start_tok,
        end_pos=offset + end_tok,
    )


def _pad_batch(seqs: list[tuple[int, ...]], pad_id: int) -> tuple[torch.Tensor, torch.Tensor]:
    t = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), t), pad_id, dtype=torch.long)
    pad_mask = torch.ones((len(seqs), t), dtype=torch.bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.tensor(s, dtype=torch.long)
        pad_mask[i, : len(s)] = False
    return ids, pad_mask


# --------------------------------------------------------------------------
# Losses


def mrc_loss(
    packed: list[PackedMRC], model: SpanEncoder, vocab: SubwordVocab
) -> torch.Tensor:
    """Mean over the batch of -log p_start(gold) - log p_end(gold)."""
    if not packed:
        raise ValueError("batch contains no mappable instances")
    pad_id = vocab.token_to_id[PAD]
    ids, pad_mask = _pad_batch([p.ids for p in packed], pad_id)
    start_logits, end_logits = model.span_logits(ids, pad_mask)
    start_lp = start_logits.log_softmax(dim=-1)
    end_lp = end_logits.log_softmax(dim=-1)
    rows = torch.arange(len(packed))
    starts = torch.tensor([p.start_pos for p in packed])
    ends = torch.tensor([p.end_pos for p in packed])
    return (-start_lp[rows, starts] - end_lp[rows, ends]).mean()


def lakm_loss(
    batch: list[MaskedExample], model: SpanEncoder, vocab: SubwordVocab
) -> torch.Tensor:
    """Per example, sum of -log p_t(target) over selected positions; batch mean.

    p_t is the softmax of the masked-token head at position t; positions
    without a selection contribute nothing.
    """
    if all(not ex.selections for ex in batch):
        raise ValueError("batch contains no selections")
    pad_id = vocab.token_to_id[PAD]
    ids, pad_mask = _pad_batch([ex.tokens for ex in batch], pad_id)
    logp = model.mlm_logits(ids, pad_mask).log_softmax(dim=-1)
    total = torch.zeros((), dtype=torch.float64)
    for i, ex in enumerate(batch):
        for sel in ex.selections:
            total = total - logp[i, sel.pos, sel.target]
    return total / len(batch)


# --------------------------------------------------------------------------
# Decoding


def predict_span(
    instance: QAInstance, model: SpanEncoder, vocab: SubwordVocab, max_len: int | None = None
) -> AnswerSpan:
    """Best (start, end) token pair, start <= end, span <= 30 tokens, mapped
    back to byte offsets via the tokenizer ranges."""
    if max_len is None:
        max_len = model.config.max_len_mrc
    packed = pack_mrc(instance, vocab, max_len)
    if packed is None:
        # question alone overflows; fall back to the leading passage bytes
        pb = instance.passage.encode("utf-8")
        end = min(len(pb), 1)
        return AnswerSpan(0, end, pb[:end].decode("utf-8", errors="ignore"))
    ids, pad_mask = _pad_batch([packed.ids], vocab.token_to_id[PAD])
    with torch.no_grad():
        start_logits, end_logits = model.span_logits(ids, pad_mask)
    off = packed.passage_offset
    n_p = len(packed.passage_token_ranges)
    s = start_logits[0, off : off + n_p]
    e = end_logits[0, off : off + n_p]
    best = None
    for i in range(n_p):
        for j in range(i, min(i + MAX_SPAN_TOKENS, n_p)):
            score = s[i].item() + e[j].item()
            if best is None or score > best[0]:
                best = (score, i, j)
    _, i, j = best
    bs = packed.passage_token_ranges[i][0]
    be = packed.passage_token_ranges[j][1]
    pb = instance.passage.encode("utf-8")
    return AnswerSpan(bs, be, pb[bs:be].decode("utf-8"))


# --------------------------------------------------------------------------
# Serialization: magic, version, config JSON, flat little-endian float64 array


def save_model(model: SpanEncoder, path: str | Path) -> None:
    cfg_bytes = json.dumps(asdict(model.config), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        for _, param in sorted(model.state_dict().items()):
            flat = param.detach().numpy().astype("<f8").ravel()
            fh.write(flat.tobytes())


def load_model(path: str | Path) -> SpanEncoder:
    import numpy as np

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MODEL_MAGIC:
            raise ValueError(f"not a model file: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported model version {version}")
        (cfg_len,) = struct.unpack("<I", fh.read(4))
        config = EncoderConfig(**json.loads(fh.read(cfg_len)))
        model = SpanEncoder(config)
        state = model.state_dict()
        new_state = {}
        for name, param in sorted(state.items()):
            count = param.numel()
            buf = fh.read(count * 8)
            arr = np.frombuffer(buf, dtype="<f8").reshape(tuple(param.shape))
            new_state[name] = torch.from_numpy(arr.copy())
        model.load_state_dict(new_state)
    return model
