"""End-to-end pipeline: translate -> mix -> mine -> attach -> vocab -> mask
-> train -> eval, with content-hash stage caching.

Each stage records input hashes, a parameter hash, and output hashes in a
manifest. A stage whose recorded hashes still match is skipped, so reruns are
incremental and any upstream change invalidates exactly the stages downstream
of it.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from . import masking, metrics, mining, mixer, records, training, translate
from .model import EncoderConfig, SpanEncoder, predict_span, save_model
from .records import RecordError

log = logging.getLogger("xmrc.pipeline")

MANIFEST_NAME = "manifest.json"


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    seed: int
    languages: list[str]
    pivot: str
    workdir: Path
    source_dataset: Path
    eval_dataset: Path
    query_log: Path
    stopwords: Path
    lexicons: dict[str, Path] = field(default_factory=dict)
    mining_params: dict[str, Any] = field(default_factory=dict)
    masking_params: dict[str, Any] = field(default_factory=dict)
    vocab_size: int = 4000
    encoder_params: dict[str, Any] = field(default_factory=dict)
    train_params: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib

            obj = tomllib.loads(raw.decode("utf-8"))
        else:
            obj = json.loads(raw)
        base = path.parent

        def p(key: str) -> Path:
            try:
                return (base / obj[key]).resolve()
            except KeyError as exc:
                raise ConfigError(f"config missing required key {key!r}") from exc

        try:
            cfg = cls(
                seed=int(obj.get("seed", 0)),
                languages=list(obj["languages"]),
                pivot=obj.get("pivot", "en"),
                workdir=p("workdir"),
                source_dataset=p("source_dataset"),
                eval_dataset=p("eval_dataset"),
                query_log=p("query_log"),
                stopwords=p("stopwords"),
                lexicons={k: (base / v).resolve() for k, v in obj.get("lexicons", {}).items()},
                mining_params=dict(obj.get("mining", {})),
                masking_params=dict(obj.get("masking", {})),
                vocab_size=int(obj.get("vocab_size", 4000)),
                encoder_params=dict(obj.get("encoder", {})),
                train_params=dict(obj.get("train", {})),
            )
        except KeyError as exc:
            raise ConfigError(f"config missing required key {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for lang in self.languages:
            records.validate_lang(lang)
        if self.pivot not in self.languages:
            raise ConfigError(f"pivot {self.pivot!r} not in languages {self.languages}")
        for key in ("source_dataset", "eval_dataset", "query_log", "stopwords"):
            path = getattr(self, key)
            if not Path(path).exists():
                raise ConfigError(f"{key} does not exist: {path}")

    @property
    def targets(self) -> list[str]:
        return [lang for lang in self.languages if lang != self.pivot]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _params_hash(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True, default=str).encode()).hexdigest()


class Manifest:
    def __init__(self, path: Path):
        self.path = path
        self.stages: dict[str, dict] = {}
        if path.exists():
            self.stages = json.loads(path.read_text())

    def save(self) -> None:
        self.path.write_text(json.dumps(self.stages, indent=2, sort_keys=True) + "\n")

    def is_current(self, stage: str, inputs: list[Path], params: dict) -> bool:
        entry = self.stages.get(stage)
        if entry is None:
            return False
        if entry["params"] != _params_hash(params):
            return False
        recorded_in = entry["inputs"]
        if set(recorded_in) != {str(p) for p in inputs}:
            return False
        for p in inputs:
            if not p.exists() or _sha256(p) != recorded_in[str(p)]:
                return False
        for out_path, digest in entry["outputs"].items():
            p = Path(out_path)
            if not p.exists() or _sha256(p) != digest:
                return False
        return True

    def record(self, stage: str, inputs: list[Path], params: dict, outputs: list[Path]) -> None:
        self.stages[stage] = {
            "inputs": {str(p): _sha256(p) for p in inputs},
            "params": _params_hash(params),
            "outputs": {str(p): _sha256(p) for p in outputs},
        }
        self.save()


def _run_stage(
    manifest: Manifest,
    stage: str,
    inputs: list[Path],
    params: dict,
    outputs: list[Path],
    fn: Callable[[], None],
    force: bool,
) -> bool:
    """Run one stage unless its manifest entry is current. Returns True if run."""
    if not force and manifest.is_current(stage, inputs, params):
        log.info("stage %s: up to date, skipped", stage)
        return False
    log.info("stage %s: running", stage)
    try:
        fn()
    except Exception as exc:
        for out in outputs:
            if out.exists():
                out.unlink()
        raise StageError(stage, exc) from exc
    manifest.record(stage, inputs, params, outputs)
    return True


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict:
    """Execute all stages in dependency order; returns the manifest dict."""
    wd = Path(cfg.workdir)
    wd.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(wd / MANIFEST_NAME)

    translated_paths = {t: wd / f"translated_{t}.jsonl" for t in cfg.targets}

    # translate
    for target in cfg.targets:
        out = translated_paths[target]
        stats_out = wd / f"translate_stats_{target}.json"
        lexicon = cfg.lexicons.get(target)
        params = {"target": target, "lexicon": str(lexicon) if lexicon else None}
        inputs = [cfg.source_dataset] + ([lexicon] if lexicon else [])

        def do_translate(target=target, out=out, stats_out=stats_out, lexicon=lexicon):
            source = records.load_dataset(cfg.source_dataset, expected_lang=cfg.pivot)
            if lexicon:
                tr = translate.DictionaryTranslator.from_tsv(lexicon)
            else:
                tr = translate.IdentityTranslator()
            kept, stats = translate.translate_dataset(source, target, tr)
            records.save_dataset(kept, out)
            stats_out.write_text(json.dumps(stats.to_json(), indent=2) + "\n")

        _run_stage(manifest, f"translate:{target}", inputs, params, [out, stats_out],
                   do_translate, force)

    # mix
    mixed_path = wd / "mixed.jsonl"
    mix_mode = cfg.train_params.get("mix_mode", "pivot")

    def do_mix():
        source = records.load_dataset(cfg.source_dataset)
        translated = [
            (t, records.load_dataset(translated_paths[t])) for t in cfg.targets
        ]
        groups, _ = mixer.align(source, translated)
        records.save_dataset(mixer.build_mixed(groups, mode=mix_mode), mixed_path)

    _run_stage(
        manifest, "mix",
        [cfg.source_dataset] + list(translated_paths.values()),
        {"mode": mix_mode}, [mixed_path], do_mix, force,
    )

    # mine
    phrases_path = wd / "phrases.jsonl"
    mine_stats_path = wd / "mine_stats.json"
    mcfg = mining.MiningConfig(
        ngram_min=int(cfg.mining_params.get("ngram_min", 2)),
        ngram_max=int(cfg.mining_params.get("ngram_max", 4)),
        threshold=float(cfg.mining_params.get("threshold", 0.7)),
    )

    def do_mine():
        log_records, _ = records.load_query_log(cfg.query_log)
        stops = mining.StopWordList.from_file(cfg.stopwords, cfg.pivot)
        entries, stats = mining.mine(log_records, mcfg, stops)
        records.save_phrases(entries, phrases_path)
        mine_stats_path.write_text(json.dumps(stats.to_json(), indent=2) + "\n")

    _run_stage(
        manifest, "mine", [cfg.query_log, cfg.stopwords],
        {"ngram_min": mcfg.ngram_min, "ngram_max": mcfg.ngram_max, "threshold": mcfg.threshold},
        [phrases_path, mine_stats_path], do_mine, force,
    )

    # attach: annotate source passages with mined phrases
    corpus_path = wd / "knowledge_corpus.jsonl"

    def do_attach():
        source = records.load_dataset(cfg.source_dataset)
        passages = []
        seen = set()
        for inst in source:
            if inst.passage not in seen:
                seen.add(inst.passage)
                passages.append((inst.passage, inst.lang))
        phrases = records.load_phrases(phrases_path)
        records.save_phrase_corpus(mining.attach_phrases(passages, phrases), corpus_path)

    _run_stage(manifest, "attach", [cfg.source_dataset, phrases_path], {},
               [corpus_path], do_attach, force)

    # vocab over all text the model will see
    vocab_path = wd / "vocab.txt"

    def do_vocab():
        texts = []
        for path in [cfg.source_dataset] + list(translated_paths.values()) + [
            mixed_path, cfg.eval_dataset
        ]:
            for inst in records.load_dataset(path):
                texts.append(inst.question)
                texts.append(inst.passage)
        vocab = masking.build_vocab(texts, cfg.vocab_size)
        vocab.save(vocab_path)

    _run_stage(
        manifest, "vocab",
        [cfg.source_dataset, mixed_path, cfg.eval_dataset] + list(translated_paths.values()),
        {"vocab_size": cfg.vocab_size}, [vocab_path], do_vocab, force,
    )

    # mask
    masked_path = wd / "masked.jsonl"
    mask_ratio = float(cfg.masking_params.get("ratio", 0.15))
    mask_max_len = int(cfg.masking_params.get("max_len", 256))

    def do_mask():
        corpus = records.load_phrase_corpus(corpus_path)
        vocab = masking.SubwordVocab.load(vocab_path)
        examples = masking.mask_corpus(
            corpus, vocab, ratio=mask_ratio, seed=cfg.seed, max_len=mask_max_len
        )
        masking.save_masked(examples, masked_path)

    _run_stage(
        manifest, "mask", [corpus_path, vocab_path],
        {"ratio": mask_ratio, "max_len": mask_max_len, "seed": cfg.seed},
        [masked_path], do_mask, force,
    )

    # train
    model_path = wd / "model.bin"
    curves_path = wd / "curves.csv"
    tp = cfg.train_params
    train_param_record = {
        "seed": cfg.seed,
        "encoder": cfg.encoder_params,
        "train": {k: v for k, v in tp.items()},
    }

    def do_train():
        vocab = masking.SubwordVocab.load(vocab_path)
        enc_cfg = EncoderConfig(
            vocab_size=len(vocab),
            embed_dim=int(cfg.encoder_params.get("embed_dim", 64)),
            layers=int(cfg.encoder_params.get("layers", 2)),
            heads=int(cfg.encoder_params.get("heads", 1)),
            max_len_mrc=int(cfg.encoder_params.get("max_len_mrc", 384)),
            max_len_lakm=int(cfg.encoder_params.get("max_len_lakm", 256)),
            seed=cfg.seed,
        )
        model = SpanEncoder(enc_cfg)
        tasks = tuple(tp.get("tasks", ["main_mrc", "mix_mrc", "lakm"]))
        tcfg = training.TrainConfig(
            tasks=tasks,
            learning_rate=float(tp.get("learning_rate", 3e-5)),
            batch_size=int(tp.get("batch_size", 8)),
            max_steps=int(tp.get("max_steps", 100)),
            seed=cfg.seed,
        )
        datasets: dict[str, list] = {}
        if "main_mrc" in tasks:
            main = records.load_dataset(cfg.source_dataset)
            for t in cfg.targets:
                main += records.load_dataset(translated_paths[t])
            packed, skipped = training.prepare_mrc(main, vocab, enc_cfg.max_len_mrc)
            if skipped:
                log.warning("main_mrc: %d instances dropped (unmappable spans)", skipped)
            datasets["main_mrc"] = packed
        if "mix_mrc" in tasks:
            mixed = records.load_dataset(mixed_path)
            packed, _ = training.prepare_mrc(mixed, vocab, enc_cfg.max_len_mrc)
            datasets["mix_mrc"] = packed
        if "lakm" in tasks:
            datasets["lakm"] = masking.load_masked(masked_path)
        curve = training.train(datasets, model, tcfg, vocab)
        save_model(model, model_path)
        training.save_curves(curve, curves_path)

    _run_stage(
        manifest, "train",
        [cfg.source_dataset, mixed_path, masked_path, vocab_path]
        + list(translated_paths.values()),
        train_param_record, [model_path, curves_path], do_train, force,
    )

    # eval
    pred_path = wd / "predictions.jsonl"
    report_path = wd / "report.json"

    def do_eval():
        from .model import load_model

        vocab = masking.SubwordVocab.load(vocab_path)
        model = load_model(model_path)
        dataset = records.load_dataset(cfg.eval_dataset)
        preds = {}
        for inst in dataset:
            preds[inst.id] = predict_span(inst, model, vocab).text
        with open(pred_path, "w", encoding="utf-8") as fh:
            for inst in dataset:
                fh.write(json.dumps({"id": inst.id, "text": preds[inst.id]},
                                    ensure_ascii=False) + "\n")
        report = metrics.evaluate(preds, dataset, pivot=cfg.pivot)
        report_path.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")

    _run_stage(manifest, "eval", [cfg.eval_dataset, model_path, vocab_path], {},
               [pred_path, report_path], do_eval, force)

    return manifest.stages
