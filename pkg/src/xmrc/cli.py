"""Single entry point exposing every pipeline stage as a subcommand."""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import masking, metrics, mining, mixer, records, training, translate
from .model import EncoderConfig, SpanEncoder, load_model, predict_span, save_model
from .pipeline import ConfigError, PipelineConfig, StageError, run_pipeline

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_STAGE = 3


def _setup_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper()), format="%(name)s: %(message)s")


def _make_translator(spec: str) -> translate.Translator:
    if spec == "identity":
        return translate.IdentityTranslator()
    if spec.startswith("dict:"):
        return translate.DictionaryTranslator.from_tsv(spec[len("dict:"):])
    raise click.BadParameter(f"unknown translator {spec!r}; use identity or dict:<lexicon.tsv>")


@click.group()
@click.option("--log-level", default="warning", show_default=True)
def main(log_level):
    _setup_logging(log_level)


@main.command("translate")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--target", required=True)
@click.option("--translator", "translator_spec", default="identity", show_default=True)
@click.option("--open", "open_marker", default="([", show_default=True)
@click.option("--close", "close_marker", default="])", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--stats", "stats_path", type=click.Path())
def translate_cmd(in_path, target, translator_spec, open_marker, close_marker, out_path, stats_path):
    """Translate a dataset, projecting answer spans via marker tokens."""
    scheme = translate.MarkerScheme(open=open_marker, close=close_marker)
    tr = _make_translator(translator_spec)
    instances = records.load_dataset(in_path)
    kept, stats = translate.translate_dataset(instances, target, tr, scheme)
    records.save_dataset(kept, out_path)
    if stats_path:
        Path(stats_path).write_text(json.dumps(stats.to_json(), indent=2) + "\n")
    click.echo(f"kept {stats.kept_count}/{stats.source_count} (skip ratio {stats.skip_ratio:.4f})")


@main.command("mix")
@click.option("--source", required=True, type=click.Path(exists=True))
@click.option("--translated", "translated_specs", multiple=True,
              help="lang=path, repeatable")
@click.option("--mode", type=click.Choice(["pivot", "all_pairs"]), default="pivot",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def mix_cmd(source, translated_specs, mode, out_path):
    """Build the mixed-language dataset from a source and its translations."""
    source_ds = records.load_dataset(source)
    translated = []
    for spec in translated_specs:
        lang, _, path = spec.partition("=")
        translated.append((lang, records.load_dataset(path, expected_lang=lang)))
    groups, dropped = mixer.align(source_ds, translated)
    mixed = mixer.build_mixed(groups, mode=mode)
    records.save_dataset(mixed, out_path)
    click.echo(f"emitted {len(mixed)} mixed instances ({dropped} source ids had no translation)")


@main.command("mine")
@click.option("--log", "log_path", required=True, type=click.Path(exists=True))
@click.option("--stops", "stops_path", required=True, type=click.Path(exists=True))
@click.option("--threshold", default=0.7, show_default=True)
@click.option("--ngram", default="2:4", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--stats", "stats_path", type=click.Path())
def mine_cmd(log_path, stops_path, threshold, ngram, out_path, stats_path):
    """Mine knowledge phrases from a query log."""
    lo, _, hi = ngram.partition(":")
    config = mining.MiningConfig(ngram_min=int(lo), ngram_max=int(hi), threshold=threshold)
    log_records, skipped = records.load_query_log(log_path)
    lang = log_records[0].lang if log_records else "en"
    stops = mining.StopWordList.from_file(stops_path, lang)
    entries, stats = mining.mine(log_records, config, stops)
    stats.skipped_empty_titles += skipped
    records.save_phrases(entries, out_path)
    if stats_path:
        Path(stats_path).write_text(json.dumps(stats.to_json(), indent=2) + "\n")
    click.echo(f"mined {len(entries)} phrases from {stats.query_count} queries")


@main.command("attach")
@click.option("--passages", "passages_path", required=True, type=click.Path(exists=True),
              help="JSONL with passage/lang fields, or a QA dataset")
@click.option("--phrases", "phrases_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def attach_cmd(passages_path, phrases_path, out_path):
    """Annotate passages with spans of mined phrases."""
    passages = []
    with open(passages_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            passages.append((obj["passage"], obj["lang"]))
    phrases = records.load_phrases(phrases_path)
    result = mining.attach_phrases(passages, phrases)
    records.save_phrase_corpus(result, out_path)
    stats = mining.phrase_stats(result)
    click.echo(json.dumps(stats.to_json()))


@main.command("build-vocab")
@click.option("--corpus", "corpus_paths", multiple=True, required=True,
              type=click.Path(exists=True), help="QA JSONL, repeatable")
@click.option("--max-size", default=4000, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def build_vocab_cmd(corpus_paths, max_size, out_path):
    """Build the deterministic subword vocabulary from dataset text."""
    texts = []
    for path in corpus_paths:
        for inst in records.load_dataset(path):
            texts.append(inst.question)
            texts.append(inst.passage)
    vocab = masking.build_vocab(texts, max_size)
    vocab.save(out_path)
    click.echo(f"vocabulary of {len(vocab)} tokens written to {out_path}")


@main.command("mask")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--ratio", default=0.15, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-len", default=256, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def mask_cmd(corpus_path, vocab_path, ratio, seed, max_len, out_path):
    """Produce masked training examples from a phrase-annotated corpus."""
    corpus = records.load_phrase_corpus(corpus_path)
    vocab = masking.SubwordVocab.load(vocab_path)
    examples = masking.mask_corpus(corpus, vocab, ratio=ratio, seed=seed, max_len=max_len)
    masking.save_masked(examples, out_path)
    click.echo(f"masked {len(examples)} passages")


@main.command("train")
@click.option("--task", "task_specs", multiple=True, required=True,
              help="name=path with name in main|mix|lakm, repeatable")
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--curves", "curves_path", type=click.Path())
def train_cmd(task_specs, vocab_path, config_path, out_path, curves_path):
    """Round-robin multi-task training of the span model."""
    cfg_obj = {}
    if config_path:
        raw = Path(config_path).read_bytes()
        if config_path.endswith(".toml"):
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib

            cfg_obj = tomllib.loads(raw.decode("utf-8"))
        else:
            cfg_obj = json.loads(raw)
    vocab = masking.SubwordVocab.load(vocab_path)
    name_map = {"main": "main_mrc", "mix": "mix_mrc", "lakm": "lakm"}
    enc = cfg_obj.get("encoder", {})
    enc_cfg = EncoderConfig(
        vocab_size=len(vocab),
        embed_dim=int(enc.get("embed_dim", 64)),
        layers=int(enc.get("layers", 2)),
        heads=int(enc.get("heads", 1)),
        max_len_mrc=int(enc.get("max_len_mrc", 384)),
        max_len_lakm=int(enc.get("max_len_lakm", 256)),
        seed=int(cfg_obj.get("seed", 0)),
    )
    datasets: dict[str, list] = {}
    tasks: list[str] = []
    for spec in task_specs:
        name, _, path = spec.partition("=")
        if name not in name_map:
            raise click.BadParameter(f"unknown task {name!r}")
        task = name_map[name]
        tasks.append(task)
        if task == "lakm":
            datasets[task] = masking.load_masked(path)
        else:
            instances = records.load_dataset(path)
            packed, skipped = training.prepare_mrc(instances, vocab, enc_cfg.max_len_mrc)
            if skipped:
                click.echo(f"{task}: dropped {skipped} unmappable instances", err=True)
            datasets[task] = packed
    tr = cfg_obj.get("train", {})
    tcfg = training.TrainConfig(
        tasks=tuple(tasks),
        learning_rate=float(tr.get("learning_rate", 3e-5)),
        batch_size=int(tr.get("batch_size", 8)),
        max_steps=int(tr.get("max_steps", 1000)),
        seed=int(cfg_obj.get("seed", 0)),
    )
    model = SpanEncoder(enc_cfg)
    curve = training.train(datasets, model, tcfg, vocab)
    save_model(model, out_path)
    if curves_path:
        training.save_curves(curve, curves_path)
    click.echo(f"trained {tcfg.max_steps} steps; final loss {curve[-1].loss:.4f}")


@main.command("predict")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def predict_cmd(model_path, vocab_path, in_path, out_path):
    """Predict answer spans for a dataset."""
    model = load_model(model_path)
    vocab = masking.SubwordVocab.load(vocab_path)
    dataset = records.load_dataset(in_path)
    with open(out_path, "w", encoding="utf-8") as fh:
        for inst in dataset:
            span = predict_span(inst, model, vocab)
            fh.write(json.dumps({"id": inst.id, "text": span.text}, ensure_ascii=False) + "\n")
    click.echo(f"wrote {len(dataset)} predictions")


@main.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True))
@click.option("--policy", "policy_path", type=click.Path(exists=True))
@click.option("--pivot", default="en", show_default=True)
@click.option("--report", "report_path", required=True, type=click.Path())
def eval_cmd(pred_path, gold_path, policy_path, pivot, report_path):
    """Score predictions against a gold dataset."""
    preds = {}
    with open(pred_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                preds[obj["id"]] = obj["text"]
    policy = metrics.NormalizationPolicy()
    if policy_path:
        obj = json.loads(Path(policy_path).read_text())
        policy = metrics.NormalizationPolicy(
            lowercase=obj.get("lowercase", True),
            strip_punctuation=obj.get("strip_punctuation", True),
            collapse_whitespace=obj.get("collapse_whitespace", True),
            articles={k: frozenset(v) for k, v in obj.get("articles", {"en": ["a", "an", "the"]}).items()},
        )
    dataset = records.load_dataset(gold_path)
    report = metrics.evaluate(preds, dataset, policy, pivot=pivot)
    Path(report_path).write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    for lang, s in sorted(report.per_language.items()):
        gap = report.gaps.get(lang)
        gap_str = f" (gap {gap[0] * 100:+.1f})" if gap and lang != pivot else ""
        click.echo(f"{lang}: EM {s.em * 100:.1f} F1 {s.f1 * 100:.1f} n={s.n}{gap_str}")


@main.command("compare")
@click.option("--report", "report_specs", multiple=True, required=True,
              help="label=report.json, repeatable; first is the baseline")
@click.option("--out", "out_path", type=click.Path())
def compare_cmd(report_specs, out_path):
    """Side-by-side table of evaluation reports with deltas vs the first."""
    reports = []
    for spec in report_specs:
        label, _, path = spec.partition("=")
        reports.append((label, records.EvalReport.from_json(json.loads(Path(path).read_text()))))
    table = metrics.compare_runs(reports)
    if out_path:
        Path(out_path).write_text(table)
    click.echo(table, nl=False)


@main.command("pipeline")
@click.argument("config_path", type=click.Path(exists=True))
@click.option("--seed", type=int, help="override the config seed")
@click.option("--force", is_flag=True, help="rerun all stages, ignoring the manifest")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="within-stage parallelism bound (stages run sequentially)")
def pipeline_cmd(config_path, seed, force, jobs):
    """Run the full pipeline described by a TOML or JSON config."""
    try:
        cfg = PipelineConfig.from_file(config_path)
        if seed is not None:
            cfg.seed = seed
        stages = run_pipeline(cfg, force=force)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except StageError as exc:
        click.echo(str(exc), err=True)
        sys.exit(EXIT_STAGE)
    click.echo(f"pipeline complete: {len(stages)} stages recorded in {cfg.workdir}/manifest.json")


if __name__ == "__main__":
    main()
