"""Pipeline stages: each reads declared inputs and writes outputs plus a manifest.

Layout under the output directory::

    data/          partitioned dataset (+ variant table for synthetic data)
    classifier/    ensemble.bin, report.txt
    labels/        labels.<mode>.txt, report.txt
    subword/       bpe.model
    trainset/      <recipe>.ids, <recipe>.ids.prov
    nmt/<recipe>/  step_*.ckpt, best.ckpt, selection.tsv
    eval/<recipe>/ hypotheses, report.txt, metrics.tsv
"""

from __future__ import annotations

import configparser
import hashlib
import logging
from collections import Counter
from pathlib import Path
from typing import Sequence

import torch

from . import corpus as corpus_mod
from .config import RunConfig
from .corpus import (ParallelCorpus, PartitionedDataset, Scenario, VarietyTag, drop_empty,
                     filter_by_length, load_dataset, load_parallel, partition, save_dataset)
from .errors import ConfigurationError, ContaminationError, DataError
from .evaluation import corpus_bleu, paired_bootstrap, variety_consistency, write_report, write_tsv
from .nmt import (DecodeConfig, Specials, TrainingConfig, TransformerConfig, decode_corpus,
                  load_checkpoint, save_checkpoint, select_best_checkpoint, train)
from .recipes import Recipe, RecipeKind, build_training_set, label_pool, load_training_set
from .subword import SubwordModel, train_subword
from .synth import SynthConfig, VariantTable, write_synthetic
from .varietyid import FeatureConfig, ensemble_auc, load_ensemble, save_ensemble, train_ensemble

log = logging.getLogger(__name__)


def _write_manifest(directory: Path, stage: str, config: RunConfig, inputs: dict[str, str],
                    extra: dict[str, str] | None = None) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    config.save(directory / "run.ini")
    manifest = configparser.ConfigParser()
    manifest["stage"] = {"name": stage, **(extra or {})}
    manifest["inputs"] = {k: str(v) for k, v in inputs.items()}
    with open(directory / "stage.ini", "w", encoding="utf-8") as fh:
        manifest.write(fh)


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _resolve(workspace: Path, rel: str) -> Path:
    if not rel:
        raise ConfigurationError("a required data path is empty in the config")
    path = Path(rel)
    return path if path.is_absolute() else workspace / path


def _tags(config: RunConfig) -> tuple[str, str]:
    return config.run.variety_a, config.run.variety_b


# -- stages ------------------------------------------------------------------

def stage_synth(config: RunConfig, out_dir: Path) -> Path:
    s = config.synth
    synth_cfg = SynthConfig(vocab_size=s.vocab_size, n_pairs_a=s.n_pairs_a, n_pairs_b=s.n_pairs_b,
                            divergence_rate=s.divergence_rate, sentence_len_range=(s.len_min, s.len_max),
                            seed=config.run.seed, n_dev=s.n_dev, n_test=s.n_test,
                            scenario=Scenario.parse(config.run.scenario),
                            labeled_fraction=config.labeled_fraction, variety_names=_tags(config))
    target = out_dir / "data"
    write_synthetic(synth_cfg, target)
    _write_manifest(target, "synth", config, {})
    return target


def stage_prepare(config: RunConfig, workspace: Path, out_dir: Path) -> Path:
    d = config.data
    names = _tags(config)

    def load(src, tgt, tag, translit):
        c = load_parallel(_resolve(workspace, src), _resolve(workspace, tgt), tag, names, translit)
        return filter_by_length(drop_empty(c), d.max_len)

    A, B = VarietyTag.A, VarietyTag.B
    parts = {
        "a": load(d.train_a_src, d.train_a_tgt, A, d.transliterate_a),
        "b": load(d.train_b_src, d.train_b_tgt, B, d.transliterate_b),
        "dev_a": load(d.dev_a_src, d.dev_a_tgt, A, d.transliterate_a),
        "dev_b": load(d.dev_b_src, d.dev_b_tgt, B, d.transliterate_b),
        "test_a": load(d.test_a_src, d.test_a_tgt, A, d.transliterate_a),
        "test_b": load(d.test_b_src, d.test_b_tgt, B, d.transliterate_b),
    }
    data = partition(parts["a"], parts["b"], parts["dev_a"], parts["dev_b"], parts["test_a"],
                     parts["test_b"], Scenario.parse(config.run.scenario), config.labeled_fraction,
                     config.run.seed)
    target = out_dir / "data"
    save_dataset(data, target)
    inputs = {k: v for k, v in vars(d).items() if k.endswith(("_src", "_tgt"))}
    _write_manifest(target, "prepare", config, inputs)
    return target


def _feature_config(config: RunConfig) -> FeatureConfig:
    c = config.classifier
    return FeatureConfig(c.word_ngram_max, c.char_ngram_min, c.char_ngram_max, c.hash_buckets, c.embed_dim)


def classifier_examples(data: PartitionedDataset) -> list[tuple[str, VarietyTag]]:
    return [(" ".join(p.target), p.tag) for p in data.labeled_a.pairs + data.labeled_b.pairs]


def check_disjoint(classifier_data: PartitionedDataset, nmt_data: PartitionedDataset) -> None:
    """Refuse classifier data that shares target sentences with NMT training data."""
    nmt_targets = Counter(" ".join(p.target) for c in (nmt_data.labeled_a, nmt_data.labeled_b,
                                                       nmt_data.unlabeled) for p in c.pairs)
    clf_targets = Counter(t for t, _ in classifier_examples(classifier_data))
    overlap = clf_targets & nmt_targets
    if overlap:
        raise ContaminationError(f"classifier data shares {sum(overlap.values())} target sentences "
                                 f"with the NMT training data", list(overlap))


def stage_train_classifier(config: RunConfig, workspace: Path, out_dir: Path, data_dir: Path,
                           threads: int = 1) -> Path:
    data = load_dataset(data_dir)
    source = data
    if config.data.classifier_data:
        source = load_dataset(_resolve(workspace, config.data.classifier_data))
        check_disjoint(source, data)
    elif not (len(data.labeled_a) and len(data.labeled_b)):
        raise DataError("no labeled data to train the classifier on; set [data] classifier_data "
                        "to a disjoint labeled dataset")
    c = config.classifier
    ensemble = train_ensemble(classifier_examples(source), _feature_config(config), c.epochs, c.lr,
                              config.run.seed, c.balance, threads)
    target = out_dir / "classifier"
    target.mkdir(parents=True, exist_ok=True)
    save_ensemble(ensemble, target / "ensemble.bin")
    dev = data.dev_a.pairs + data.dev_b.pairs
    auc = ensemble_auc(ensemble, [" ".join(p.target) for p in dev], [p.tag for p in dev])
    write_report({"dev_roc_auc": auc, "train_examples": len(classifier_examples(source))},
                 target / "report.txt")
    _write_manifest(target, "train-classifier", config, {"data": data_dir})
    return target


def stage_label(config: RunConfig, out_dir: Path, data_dir: Path, classifier_path: Path,
                mode: str, threads: int = 1) -> Path:
    mode = {"mc2": "soft", "mc3": "majority"}.get(mode, mode)
    data = load_dataset(data_dir)
    ensemble = load_ensemble(classifier_path)
    labels = label_pool(data.unlabeled.pairs, ensemble, mode, threads)
    target = out_dir / "labels"
    target.mkdir(parents=True, exist_ok=True)
    (target / f"labels.{mode}.txt").write_text("".join(t.value + "\n" for t in labels), encoding="utf-8")
    n = len(labels)
    abstained = sum(t is VarietyTag.UNLABELED for t in labels)
    report = {"mode": mode, "unlabeled": n, "abstained": abstained,
              "abstained_fraction": abstained / n if n else 0.0,
              "assigned_a": sum(t is VarietyTag.A for t in labels),
              "assigned_b": sum(t is VarietyTag.B for t in labels)}
    if data.unlabeled_truth and n:
        decided = [(t, g) for t, g in zip(labels, data.unlabeled_truth) if t is not VarietyTag.UNLABELED]
        report["accuracy_on_decided"] = sum(t is g for t, g in decided) / len(decided) if decided else 0.0
    write_report(report, target / f"report.{mode}.txt")
    _write_manifest(target, "label", config, {"data": data_dir, "classifier": classifier_path},
                    {"mode": mode})
    return target


def read_labels(path: Path) -> list[VarietyTag]:
    return [VarietyTag.parse(x) for x in Path(path).read_text(encoding="utf-8").split()]


def stage_subword(config: RunConfig, out_dir: Path, data: PartitionedDataset, data_dir: Path) -> Path:
    target = out_dir / "subword"
    path = target / "bpe.model"
    model = train_subword([data.labeled_a, data.labeled_b, data.unlabeled], config.subword.vocab_size,
                          config.run.seed)
    target.mkdir(parents=True, exist_ok=True)
    model.save(path)
    _write_manifest(target, "subword", config, {"data": data_dir})
    return path


def stage_build_dataset(config: RunConfig, out_dir: Path, data_dir: Path, recipe: Recipe,
                        classifier_path: Path | None = None, labels_path: Path | None = None,
                        threads: int = 1) -> Path:
    data = load_dataset(data_dir)
    sw_path = out_dir / "subword" / "bpe.model"
    if not sw_path.exists():
        stage_subword(config, out_dir, data, data_dir)
    subword = SubwordModel.load(sw_path)
    labels = ensemble = None
    if recipe.kind in (RecipeKind.MC2, RecipeKind.MC3):
        if labels_path is not None:
            labels = read_labels(labels_path)
        elif classifier_path is not None:
            ensemble = load_ensemble(classifier_path)
        else:
            raise ConfigurationError(f"{recipe.name} needs a classifier or a labels file")
    ts = build_training_set(data, recipe, subword, ensemble, config.run.seed, threads, labels)
    target = out_dir / "trainset"
    path = target / f"{recipe.name}.ids"
    ts.save(path)
    write_report({"recipe": recipe.name, "examples": len(ts),
                  "tokened": sum(p.tokened for p in ts.provenance),
                  "abstention_rate": ts.abstention_rate}, target / f"{recipe.name}.report.txt")
    _write_manifest(target, "build-dataset", config,
                    {"data": data_dir, "subword": sw_path, "classifier": classifier_path or "",
                     "labels": labels_path or ""}, {"recipe": recipe.name})
    return path


def _transformer_config(config: RunConfig, vocab_size: int) -> TransformerConfig:
    m = config.model
    return TransformerConfig(vocab_size, m.num_layers, m.model_dim, m.num_heads, m.ffn_dim,
                             m.dropout, m.max_positions, m.share_embeddings)


def _training_config(config: RunConfig, total_steps: int | None = None) -> TrainingConfig:
    t = config.training
    steps = total_steps or t.total_steps
    return TrainingConfig(t.peak_lr_factor, t.warmup_steps, t.batch_tokens, steps,
                          min(t.checkpoint_every, steps), t.label_smoothing, config.run.seed, t.max_len)


def dev_sets_for(recipe: Recipe, data: PartitionedDataset, tokened: bool):
    if recipe.kind in (RecipeKind.SPEC, RecipeKind.ADA):
        return [(data.dev_a if recipe.variety is VarietyTag.A else data.dev_b, None)]
    if tokened:
        return [(data.dev_a, "A"), (data.dev_b, "B")]
    return [(data.dev_a, None), (data.dev_b, None)]


def stage_train_nmt(config: RunConfig, out_dir: Path, data_dir: Path, trainset_path: Path,
                    init_path: Path | None = None, total_steps: int | None = None,
                    name: str | None = None) -> Path:
    data = load_dataset(data_dir)
    ts = load_training_set(trainset_path)
    sw_path = out_dir / "subword" / "bpe.model"
    subword = SubwordModel.load(sw_path)
    name = name or ts.recipe.name
    target = out_dir / "nmt" / name
    init = load_checkpoint(init_path)[0] if init_path else None
    run = train(ts.examples, _transformer_config(config, len(subword)),
                _training_config(config, total_steps), Specials.from_subword(subword), target,
                init=init, subword_digest=_digest(sw_path))
    tokened = any(p.tokened for p in ts.provenance)
    d = config.decode
    best, scores = select_best_checkpoint(run.checkpoints, dev_sets_for(ts.recipe, data, tokened),
                                          subword, DecodeConfig(d.select_beam_size, d.max_len,
                                                                d.length_penalty))
    best_step = max((s for s, b in scores.items() if b == max(scores.values())), default=run.checkpoints[-1].step)
    save_checkpoint(best, target / "best.ckpt", best_step)
    write_tsv([(name, "dev", f"bleu@{s}", b) for s, b in sorted(scores.items())], target / "selection.tsv")
    _write_manifest(target, "train-nmt", config,
                    {"data": data_dir, "trainset": trainset_path, "init": init_path or ""},
                    {"tokened": str(tokened), "best_step": str(best_step)})
    return target / "best.ckpt"


def stage_translate(config: RunConfig, model_path: Path, subword_path: Path, input_path: Path,
                    output_path: Path, variety: str | None) -> Path:
    model, _ = load_checkpoint(model_path)
    subword = SubwordModel.load(subword_path)
    lines = corpus_mod._read_lines(input_path)
    src = ParallelCorpus([corpus_mod.SentencePair(tuple(corpus_mod.tokenize(l)), ("x",)) for l in lines])
    d = config.decode
    hyps = decode_corpus(model, subword, src, variety, DecodeConfig(d.beam_size, d.max_len, d.length_penalty))
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text("".join(" ".join(h) + "\n" for h in hyps), encoding="utf-8")
    _write_manifest(output_path.parent, "translate", config,
                    {"model": model_path, "subword": subword_path, "input": input_path},
                    {"variety": variety or "", "output": output_path.name})
    return output_path


def _judge(data_dir: Path, classifier_path: Path | None):
    if (data_dir / "variants.tsv").exists():
        return VariantTable.load(data_dir)
    if classifier_path is not None and Path(classifier_path).exists():
        return load_ensemble(classifier_path)
    return None


def evaluate_hypotheses(system: str, testset: str, hyps: Sequence[Sequence[str]],
                        refs: Sequence[Sequence[str]], judge=None,
                        expected: VarietyTag | None = None) -> list[tuple[str, str, str, object]]:
    report = corpus_bleu(hyps, refs)
    rows = [(system, testset, k, v) for k, v in report.as_dict().items()]
    if judge is not None and expected is not None:
        try:
            rows.append((system, testset, "variety_consistency", variety_consistency(hyps, judge, expected)))
        except DataError as exc:
            log.warning("%s/%s: variety consistency undefined (%s)", system, testset, exc)
    return rows


def stage_evaluate(config: RunConfig, out_dir: Path, data_dir: Path, model_path: Path, recipe: Recipe,
                   classifier_path: Path | None = None, name: str | None = None) -> Path:
    data = load_dataset(data_dir)
    subword = SubwordModel.load(out_dir / "subword" / "bpe.model")
    model, _ = load_checkpoint(model_path)
    judge = _judge(data_dir, classifier_path)
    tokened = bool(model.specials.varieties) and recipe.uses_tokens
    d = config.decode
    decode = DecodeConfig(d.beam_size, d.max_len, d.length_penalty)
    name = name or recipe.name
    target = out_dir / "eval" / name
    target.mkdir(parents=True, exist_ok=True)
    tests = [("test_a", data.test_a, VarietyTag.A), ("test_b", data.test_b, VarietyTag.B)]
    if recipe.kind in (RecipeKind.SPEC, RecipeKind.ADA):
        tests = [t for t in tests if t[2] is recipe.variety]
    rows, all_hyps, all_refs = [], [], []
    for testset, corpus, tag in tests:
        hyps = decode_corpus(model, subword, corpus, tag.value if tokened else None, decode)
        refs = [list(p.target) for p in corpus.pairs]
        (target / f"hyp.{testset}.txt").write_text("".join(" ".join(h) + "\n" for h in hyps),
                                                    encoding="utf-8")
        rows += evaluate_hypotheses(name, testset, hyps, refs, judge, tag)
        all_hyps += hyps
        all_refs += refs
    if len(tests) > 1:
        rows += evaluate_hypotheses(name, "all", all_hyps, all_refs)
    write_tsv(rows, target / "metrics.tsv")
    write_report({f"{t}.{m}": v for _, t, m, v in rows}, target / "report.txt")
    _write_manifest(target, "evaluate", config, {"data": data_dir, "model": model_path},
                    {"recipe": recipe.name})
    return target / "metrics.tsv"


def stage_significance(config: RunConfig, system_a: Path, system_b: Path, refs: Path, seed: int,
                       out_path: Path | None = None, threads: int = 1) -> dict:
    read = lambda p: [corpus_mod.tokenize(l) for l in corpus_mod._read_lines(p)]
    result = paired_bootstrap(read(system_a), read(system_b), read(refs), config.eval.n_resamples,
                              config.eval.alpha, seed, threads)
    values = result.as_dict()
    if out_path is not None:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_report(values, out_path)
        write_tsv([("x_vs_y", "refs", k, v) for k, v in values.items()], out_path.with_suffix(".tsv"))
    return values


def stage_pipeline(config: RunConfig, workspace: Path, out_dir: Path, threads: int = 1) -> Path:
    """prepare (or synth) -> train-classifier -> build-dataset -> train-nmt -> evaluate."""
    recipe = Recipe.parse(config.run.recipe)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.save(out_dir / "run.ini")
    if config.data.source == "synthetic":
        data_dir = stage_synth(config, out_dir)
    elif config.data.source == "files":
        data_dir = stage_prepare(config, workspace, out_dir)
    else:
        raise ConfigurationError(f"unknown data source {config.data.source!r}")
    classifier = None
    if recipe.kind in (RecipeKind.MC2, RecipeKind.MC3):
        classifier = stage_train_classifier(config, workspace, out_dir, data_dir, threads) / "ensemble.bin"
    if recipe.kind is RecipeKind.ADA:
        gen_set = stage_build_dataset(config, out_dir, data_dir, Recipe(RecipeKind.GEN), threads=threads)
        gen_model = stage_train_nmt(config, out_dir, data_dir, gen_set)
        spec_set = stage_build_dataset(config, out_dir, data_dir, Recipe(RecipeKind.SPEC, recipe.variety),
                                       threads=threads)
        model = stage_train_nmt(config, out_dir, data_dir, spec_set, init_path=gen_model,
                                total_steps=max(1, config.training.total_steps // 2), name=recipe.name)
    else:
        trainset = stage_build_dataset(config, out_dir, data_dir, recipe, classifier, threads=threads)
        model = stage_train_nmt(config, out_dir, data_dir, trainset)
    return stage_evaluate(config, out_dir, data_dir, model, recipe, classifier)


def set_threads(threads: int) -> None:
    torch.set_num_threads(max(1, threads))
