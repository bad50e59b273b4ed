"""Batch-level round-robin multi-task training loop.

Each step trains exactly one task: step i updates tasks[i mod len(tasks)]
with one Adam step on one batch drawn from that task's shuffled stream.
Streams reshuffle at epoch boundaries. Everything is deterministic given the
seed (torch is pinned to one thread during training).
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .masking import MaskedExample, SubwordVocab
from .model import PackedMRC, SpanEncoder, lakm_loss, mrc_loss, pack_mrc, predict_span
from .records import QAInstance

MRC_TASKS = ("main_mrc", "mix_mrc")
ALL_TASKS = ("main_mrc", "mix_mrc", "lakm")


@dataclass(frozen=True)
class TrainConfig:
    tasks: tuple[str, ...]
    learning_rate: float = 3e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    batch_size: int = 8
    max_steps: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not self.tasks:
            raise ValueError("tasks must be non-empty")
        for t in self.tasks:
            if t not in ALL_TASKS:
                raise ValueError(f"unknown task {t!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class _BatchStream:
    """Shuffled without-replacement batch stream; reshuffles per epoch."""

    def __init__(self, items: list, batch_size: int, rng: random.Random):
        if not items:
            raise ValueError("empty dataset for task")
        self.items = list(items)
        self.batch_size = batch_size
        self.rng = rng
        self.order: list[int] = []
        self.cursor = 0
        self.epoch = 0

    def next_batch(self) -> list:
        batch = []
        while len(batch) < self.batch_size:
            if self.cursor >= len(self.order):
                self.order = list(range(len(self.items)))
                self.rng.shuffle(self.order)
                self.cursor = 0
                self.epoch += 1
            batch.append(self.items[self.order[self.cursor]])
            self.cursor += 1
        return batch


@dataclass
class CurvePoint:
    step: int
    task: str
    loss: float


def prepare_mrc(
    instances: list[QAInstance], vocab: SubwordVocab, max_len: int
) -> tuple[list[PackedMRC], int]:
    """Pack instances, dropping the ones whose span cannot be mapped."""
    packed = []
    skipped = 0
    for inst in instances:
        p = pack_mrc(inst, vocab, max_len)
        if p is None:
            skipped += 1
        else:
            packed.append(p)
    return packed, skipped


def train(
    datasets: dict[str, list],
    model: SpanEncoder,
    tcfg: TrainConfig,
    vocab: SubwordVocab,
) -> list[CurvePoint]:
    """Run the round-robin loop; returns the per-step loss curve.

    datasets maps task name to its prepared examples: PackedMRC lists for the
    MRC tasks, MaskedExample lists for lakm.
    """
    for task in tcfg.tasks:
        if task not in datasets:
            raise ValueError(f"task {task!r} has no dataset")

    n_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        torch.manual_seed(tcfg.seed)
        rng = random.Random(tcfg.seed)
        streams = {
            task: _BatchStream(datasets[task], tcfg.batch_size, random.Random(rng.getrandbits(64)))
            for task in tcfg.tasks
        }
        opt = torch.optim.Adam(
            model.parameters(),
            lr=tcfg.learning_rate,
            betas=(tcfg.adam_beta1, tcfg.adam_beta2),
        )
        curve: list[CurvePoint] = []
        for step in range(tcfg.max_steps):
            task = tcfg.tasks[step % len(tcfg.tasks)]
            batch = streams[task].next_batch()
            if task == "lakm":
                loss = lakm_loss(batch, model, vocab)
            else:
                loss = mrc_loss(batch, model, vocab)
            opt.zero_grad()
            loss.backward()
            opt.step()
            curve.append(CurvePoint(step=step, task=task, loss=float(loss.item())))
        return curve
    finally:
        torch.set_num_threads(n_threads)


def save_curves(curve: list[CurvePoint], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "task", "loss"])
        for point in curve:
            writer.writerow([point.step, point.task, repr(point.loss)])


def training_em(
    instances: list[QAInstance], model: SpanEncoder, vocab: SubwordVocab
) -> float:
    """Exact-span match rate on a dataset, for overfitting checks."""
    if not instances:
        return 0.0
    hits = 0
    for inst in instances:
        pred = predict_span(inst, model, vocab)
        gold = inst.answers[0]
        if (pred.start, pred.end) == (gold.start, gold.end):
            hits += 1
    return hits / len(instances)
