"""Command-line interface.

Every subcommand that writes results also writes a manifest (arguments,
seeds, input hashes, tool version) into the output directory, and all
randomness flows from --seed via purpose-derived sub-seeds, so reruns with
the same manifest reproduce byte-identical outputs in single-job mode.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import load_model, save_model
from .corpus import (
    ADDRESSEE_LABELS,
    CLASS_ORDER,
    DatasetError,
    dataset_stats,
    load_dataset,
    save_dataset,
)
from .embeddings import (
    DocEmbeddingModel,
    WordEmbeddingModel,
    WordTrainingParams,
    train_doc_embeddings,
    train_word_embeddings,
)
from .evaluation import (
    GridSpec,
    Metrics,
    binary_labels,
    cross_dataset_eval,
    cross_validate,
    grid_search,
    two_step_classify,
    write_score_table,
)
from .features import (
    anova_f_matrix,
    build_matrix,
    export_sparse_matrix,
    load_keywords,
    select_k_best,
)
from .pipeline import (
    FeaturePipeline,
    TwoStepClassifier,
    build_keyword_sets,
    load_extractor,
    save_extractor,
)
from .sampling import (
    export_batch,
    load_coded_csv,
    merge_annotations,
    sample_by_pattern,
    sample_by_similarity,
    sample_random,
)
from .seeds import derive_seed
from .textprep import load_stopwords, preprocess

logger = logging.getLogger("metacomment")

KNOWN_ERRORS = (DatasetError, ValueError, OSError)


def _hash_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, args: argparse.Namespace, inputs) -> None:
    manifest = {
        "tool": "metacomment",
        "version": __version__,
        "command": args.command,
        "arguments": {k: (str(v) if isinstance(v, Path) else v)
                      for k, v in sorted(vars(args).items()) if k != "func"},
        "input_hashes": {str(p): _hash_file(p) for p in inputs if Path(p).is_file()},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_ds(path, tag=None):
    return load_dataset(path, source_tag=tag)


def _stopwords(args):
    return load_stopwords(args.stopwords) if getattr(args, "stopwords", None) else None


def _parse_kv_params(raw: str) -> dict:
    """Parse 'C=0.5,max_epochs=100' with JSON value coercion."""
    params = {}
    if not raw:
        return params
    for piece in raw.split(","):
        key, _, value = piece.partition("=")
        if not key or not value:
            raise ValueError(f"invalid parameter setting {piece!r}")
        try:
            params[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            params[key.strip()] = value
    return params


def _load_word_model(prefix) -> WordEmbeddingModel:
    return WordEmbeddingModel.load(prefix)


def _load_doc_model(prefix) -> DocEmbeddingModel:
    return DocEmbeddingModel.load(prefix)


def _embedding_params(args, purpose: str) -> WordTrainingParams:
    return WordTrainingParams(
        dim=args.dim, window=args.window, min_count=args.min_count,
        epochs=args.epochs, method=args.method,
        negative_samples=args.negative, initial_lr=args.lr,
        seed=derive_seed(args.seed, purpose), workers=args.jobs)


def _pipeline_from_args(args, word_model, doc_model, seed, params=None,
                        select_k=None) -> FeaturePipeline:
    return FeaturePipeline(
        classifier=args.classifier,
        classifier_params=params if params is not None
        else _parse_kv_params(getattr(args, "params", "")),
        word_model=word_model, doc_model=doc_model,
        keyword_seeds=_keyword_seeds(args),
        select_k=select_k if select_k is not None else _select_k(args),
        stopwords=_stopwords(args), seed=seed)


def _keyword_seeds(args):
    if getattr(args, "keywords_dir", None):
        base = Path(args.keywords_dir)
        return {label: load_keywords(base / f"{label.lower()}.txt")
                for label in ADDRESSEE_LABELS}
    return None


def _select_k(args):
    raw = getattr(args, "select_k", "all")
    return "all" if raw in ("all", None) else int(raw)


def _metrics_dict(metrics: Metrics) -> dict:
    return {"precision": metrics.precision, "recall": metrics.recall,
            "f_beta": metrics.f_beta, "beta": metrics.beta,
            "tp": metrics.tp, "fp": metrics.fp, "fn": metrics.fn, "tn": metrics.tn}


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(args) -> int:
    ds = _load_ds(args.input, args.tag)
    out = _out_dir(args)
    save_dataset(ds, out / "dataset.jsonl")
    _write_json(out / "stats.json", dataset_stats(ds).to_dict())
    _write_manifest(out, args, [args.input])
    print(f"ingested {len(ds)} comments from {args.input}")
    return 0


def cmd_stats(args) -> int:
    report = dataset_stats(_load_ds(args.input))
    print(report.format_text())
    if args.out:
        out = _out_dir(args)
        _write_json(out / "stats.json", report.to_dict())
        _write_manifest(out, args, [args.input])
    return 0


def cmd_train_embeddings(args) -> int:
    ds = _load_ds(args.input)
    streams = [preprocess(c, remove_stopwords=True, stopwords=_stopwords(args))
               for c in ds.comments()]
    out = _out_dir(args)
    params = _embedding_params(args, f"embeddings:{args.kind}")
    if args.kind == "word":
        model = train_word_embeddings(streams, params)
        model.save(out / "model")
        print(f"trained word embeddings: {len(model)} tokens, dim {model.dim}")
    else:
        model = train_doc_embeddings(streams, params)
        model.save(out / "model")
        print(f"trained comment embeddings: {len(model.doc_vectors)} comments, "
              f"dim {model.dim}")
    _write_manifest(out, args, [args.input])
    return 0


def cmd_neighbors(args) -> int:
    model = _load_word_model(args.model)
    for token, similarity in model.most_similar(args.word, args.top):
        print(f"{token}\t{similarity:.4f}")
    return 0


def cmd_enrich_keywords(args) -> int:
    model = _load_word_model(args.model)
    seeds = load_keywords(args.seeds)
    from .features import enrich_keywords
    ks = enrich_keywords(seeds, model, top_n=args.top_n, min_sim=args.min_sim)
    for token in ks.enriched:
        flag = "\t# no-embedding" if token in ks.missing else ""
        print(f"{token}{flag}")
    if args.out:
        out = _out_dir(args)
        with open(out / "enriched.txt", "w", encoding="utf-8", newline="\n") as fh:
            for token in ks.enriched:
                fh.write(token + "\n")
        _write_manifest(out, args, [args.seeds])
    return 0


def cmd_features(args) -> int:
    ds = _load_ds(args.input)
    word_model = _load_word_model(args.word_model) if args.word_model else None
    doc_model = _load_doc_model(args.doc_model) if args.doc_model else None
    pipeline = FeaturePipeline(word_model=word_model, doc_model=doc_model,
                               keyword_seeds=_keyword_seeds(args),
                               stopwords=_stopwords(args),
                               seed=derive_seed(args.seed, "features"))
    extractor = pipeline._fit_extractor(list(ds))
    fvs = [extractor.assemble(c) for c in ds.comments()]
    out = _out_dir(args)
    export_sparse_matrix(fvs, extractor.registry, out / "features.txt")
    save_extractor(extractor, out / "extractor.json")
    labels = {c.id: sorted(ls.labels, key=CLASS_ORDER.index) for c, ls in ds}
    _write_json(out / "labels.json", labels)
    _write_manifest(out, args, [args.input])
    print(f"exported {len(fvs)} feature vectors over {len(extractor.registry)} features")
    return 0


def cmd_train(args) -> int:
    ds = _load_ds(args.input)
    word_model = _load_word_model(args.word_model) if args.word_model else None
    doc_model = _load_doc_model(args.doc_model) if args.doc_model else None
    out = _out_dir(args)
    entries = list(ds)
    seed = derive_seed(args.seed, "train")
    if args.two_step:
        classifier = TwoStepClassifier(
            feature_pipeline_kwargs=dict(
                classifier=args.classifier,
                classifier_params=_parse_kv_params(args.params),
                word_model=word_model, doc_model=doc_model,
                keyword_seeds=_keyword_seeds(args), stopwords=_stopwords(args)),
            threshold=args.threshold, seed=seed)
        classifier.fit(entries)
        save_extractor(classifier.pipeline.extractor, out / "extractor.json")
        save_model(classifier.meta_model, out / "meta.json")
        for label, model in classifier.addressee_models.items():
            save_model(model, out / f"addressee_{label.lower()}.json")
        print(f"trained two-step classifier on {len(entries)} comments")
    else:
        y = binary_labels(ds, args.target)
        pipeline = _pipeline_from_args(args, word_model, doc_model, seed,
                                       params=_parse_kv_params(args.params))
        pipeline.with_calibration = args.calibrate
        pipeline.fit(entries, y)
        save_extractor(pipeline.extractor, out / "extractor.json")
        save_model(pipeline.model, out / "model.json")
        accuracy = float((pipeline.predict(entries) == y).mean())
        print(f"trained {args.classifier} for {args.target}: "
              f"training accuracy {accuracy:.3f}")
    _write_manifest(out, args, [args.input])
    return 0


def cmd_evaluate(args) -> int:
    ds = _load_ds(args.input)
    word_model = _load_word_model(args.word_model) if args.word_model else None
    doc_model = _load_doc_model(args.doc_model) if args.doc_model else None
    entries = list(ds)
    y = binary_labels(ds, args.target)
    result = cross_validate(
        lambda seed: _pipeline_from_args(args, word_model, doc_model, seed),
        entries, y, k=args.k, seed=args.seed, beta=args.beta, jobs=args.jobs)
    print(f"{args.target}: mean precision {result.mean.precision:.4f} "
          f"recall {result.mean.recall:.4f} F_{args.beta} {result.mean.f_beta:.4f}")
    if args.out:
        out = _out_dir(args)
        rows = [{"fold": i, **_metrics_dict(m)}
                for i, m in enumerate(result.fold_metrics)]
        rows.append({"fold": "mean", "precision": result.mean.precision,
                     "recall": result.mean.recall, "f_beta": result.mean.f_beta,
                     "beta": args.beta})
        rows.append({"fold": "pooled", **_metrics_dict(result.pooled)})
        write_score_table(rows, out / "scores.csv")
        _write_json(out / "metrics.json", {
            "dataset": str(args.input), "target": args.target,
            "mean": {"precision": result.mean.precision, "recall": result.mean.recall,
                     "f_beta": result.mean.f_beta, "beta": args.beta},
            "pooled": _metrics_dict(result.pooled)})
        _write_manifest(out, args, [args.input])
    return 0


def cmd_grid_search(args) -> int:
    ds = _load_ds(args.input)
    word_model = _load_word_model(args.word_model) if args.word_model else None
    doc_model = _load_doc_model(args.doc_model) if args.doc_model else None
    with open(args.grid, encoding="utf-8") as fh:
        raw = json.load(fh)
    grid = GridSpec(params=raw.get("params", {}),
                    feature_counts=tuple(raw.get("feature_counts", ["all"])),
                    beta=raw.get("beta", args.beta))
    entries = list(ds)
    y = binary_labels(ds, args.target)

    def factory(combo, seed):
        params = {k: v for k, v in combo.items() if k != "select_k"}
        return _pipeline_from_args(args, word_model, doc_model, seed,
                                   params=params, select_k=combo["select_k"])

    result = grid_search(factory, grid, entries, y, k=args.k, seed=args.seed,
                         jobs=args.jobs)
    print(f"best configuration: {result.best_params} "
          f"(F_{grid.beta} = {result.best_score:.4f})")
    out = _out_dir(args)
    write_score_table(result.rows, out / "scores.csv")
    _write_json(out / "best.json", {"params": result.best_params,
                                    "score": result.best_score, "beta": grid.beta})
    _write_manifest(out, args, [args.input, args.grid])
    return 0


def cmd_cross_eval(args) -> int:
    train_ds = _load_ds(args.train, "train")
    test_ds = _load_ds(args.test, "test")
    word_model = _load_word_model(args.word_model) if args.word_model else None
    doc_model = _load_doc_model(args.doc_model) if args.doc_model else None
    classes = args.classes.split(",") if args.classes else ("Meta",) + ADDRESSEE_LABELS
    results = cross_dataset_eval(
        train_ds, test_ds,
        lambda seed: _pipeline_from_args(args, word_model, doc_model, seed),
        classes=classes, beta=args.beta, seed=args.seed)
    for cls, metrics in results.items():
        print(f"{cls}: precision {metrics.precision:.4f} recall {metrics.recall:.4f} "
              f"F_{args.beta} {metrics.f_beta:.4f}")
    if args.out:
        out = _out_dir(args)
        _write_json(out / "metrics.json", {
            "train": str(args.train), "test": str(args.test),
            "classes": {cls: _metrics_dict(m) for cls, m in results.items()}})
        rows = [{"class": cls, **_metrics_dict(m)} for cls, m in results.items()]
        write_score_table(rows, out / "scores.csv")
        _write_manifest(out, args, [args.train, args.test])
    return 0


def cmd_classify(args) -> int:
    ds = _load_ds(args.input)
    models_dir = Path(args.models)
    doc_model = _load_doc_model(args.doc_model) if args.doc_model else None
    extractor = load_extractor(models_dir / "extractor.json", doc_model=doc_model)
    meta_model = load_model(models_dir / "meta.json")
    addressee_models = {}
    for label in ADDRESSEE_LABELS:
        path = models_dir / f"addressee_{label.lower()}.json"
        if path.is_file():
            addressee_models[label] = load_model(
                path, registry_hash=meta_model.registry_hash)
    out = _out_dir(args)
    registry = list(extractor.registry)
    results_path = out / "classified.jsonl"
    with open(results_path, "w", encoding="utf-8", newline="\n") as fh:
        for comment in ds.comments():
            fv = extractor.assemble(comment)
            x = build_matrix([fv], registry)
            result = two_step_classify(meta_model, addressee_models, x,
                                       threshold=args.threshold)
            fh.write(json.dumps({
                "id": comment.id,
                "is_meta": result.is_meta,
                "addressees": list(result.addressees),
                "confidences": {k: round(v, 6)
                                for k, v in sorted(result.confidences.items())},
            }, ensure_ascii=False) + "\n")
    _write_manifest(out, args, [args.input, models_dir / "meta.json"])
    print(f"classified {len(ds)} comments -> {results_path}")
    return 0


def cmd_rank_features(args) -> int:
    ds = _load_ds(args.input)
    word_model = _load_word_model(args.word_model) if args.word_model else None
    doc_model = _load_doc_model(args.doc_model) if args.doc_model else None
    pipeline = FeaturePipeline(word_model=word_model, doc_model=doc_model,
                               keyword_seeds=_keyword_seeds(args),
                               stopwords=_stopwords(args),
                               seed=derive_seed(args.seed, "rank"))
    extractor = pipeline._fit_extractor(list(ds))
    fvs = [extractor.assemble(c) for c in ds.comments()]
    X = build_matrix(fvs, extractor.registry)
    classes = args.classes.split(",") if args.classes else ("Meta",) + ADDRESSEE_LABELS
    ranking = {}
    for cls in classes:
        y = binary_labels(ds, cls)
        if len(np.unique(y)) < 2:
            logger.warning("class %s missing from dataset; skipped", cls)
            continue
        scores = dict(zip(extractor.registry, anova_f_matrix(X, y)))
        top = select_k_best(scores, min(args.top, len(scores)))
        ranking[cls] = [(name, scores[name]) for name in top]
        print(f"-- {cls}")
        for name, score in ranking[cls]:
            shown = "inf" if np.isinf(score) else f"{score:.1f}"
            print(f"{name}\t{shown}")
    if args.out:
        out = _out_dir(args)
        _write_json(out / "ranking.json", {
            cls: [{"feature": n, "f_value": (None if np.isinf(s) else s)}
                  for n, s in rows]
            for cls, rows in ranking.items()})
        _write_manifest(out, args, [args.input])
    return 0


def cmd_sample(args) -> int:
    ds = _load_ds(args.input)
    word_model = _load_word_model(args.word_model) if args.word_model else None
    seeds = _keyword_seeds(args) or None
    keyword_sets = build_keyword_sets(word_model, seeds) if args.method != "random" \
        else {}
    if args.method == "pattern":
        batch = sample_by_pattern(ds, keyword_sets[args.label], args.n,
                                  batch_id=args.batch_id)
    elif args.method == "similarity":
        doc_model = _load_doc_model(args.doc_model)
        batch = sample_by_similarity(ds, keyword_sets[args.label], word_model,
                                     doc_model, n=args.n, batch_id=args.batch_id,
                                     stopwords=_stopwords(args))
    else:
        batch = sample_random(ds, args.n, seed=derive_seed(args.seed, "sample"),
                              batch_id=args.batch_id)
    out = _out_dir(args)
    export_batch(batch, out / f"{args.batch_id}.csv")
    _write_manifest(out, args, [args.input])
    print(f"sampled {len(batch)} comments -> {out / (args.batch_id + '.csv')}")
    return 0


def cmd_merge(args) -> int:
    ds = _load_ds(args.input)
    coded = []
    for path in args.coded:
        coded.extend(load_coded_csv(path))
    merged, flagged = merge_annotations(ds, coded, policy=args.policy)
    out = _out_dir(args)
    save_dataset(merged, out / "dataset.jsonl")
    _write_json(out / "flagged.json", list(flagged))
    _write_manifest(out, args, [args.input, *args.coded])
    print(f"merged {len(coded)} coder entries; {len(flagged)} flagged")
    return 0


def cmd_report(args) -> int:
    lines = []
    header = f"{'run':<28}{'class':<12}{'precision':>10}{'recall':>10}{'F':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for path in args.metrics:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        run = Path(path).parent.name or str(path)
        if "classes" in data:
            for cls, metrics in data["classes"].items():
                lines.append(f"{run:<28}{cls:<12}{metrics['precision']:>10.3f}"
                             f"{metrics['recall']:>10.3f}{metrics['f_beta']:>8.3f}")
        else:
            mean = data["mean"]
            lines.append(f"{run:<28}{data.get('target', ''):<12}"
                         f"{mean['precision']:>10.3f}{mean['recall']:>10.3f}"
                         f"{mean['f_beta']:>8.3f}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        out = _out_dir(args)
        (out / "report.txt").write_text(text + "\n", encoding="utf-8")
        _write_manifest(out, args, list(args.metrics))
    return 0


# -- parser ----------------------------------------------------------------------

def _add_common(parser, out_required=False):
    parser.add_argument("--seed", type=int, default=0, help="master random seed")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker parallelism (default 1, deterministic)")
    parser.add_argument("--stopwords", default=None,
                        help="stop-word file overriding the shipped German list")
    if out_required:
        parser.add_argument("--out", required=True, help="output directory")
    else:
        parser.add_argument("--out", default=None, help="output directory")


def _add_model_flags(parser):
    parser.add_argument("--word-model", default=None,
                        help="word embedding model prefix")
    parser.add_argument("--doc-model", default=None,
                        help="comment embedding model prefix")
    parser.add_argument("--keywords-dir", default=None,
                        help="directory with media/journalist/moderator.txt")


def _add_classifier_flags(parser):
    parser.add_argument("--classifier", default="linear_svm",
                        choices=("linear_svm", "decision_tree", "random_forest",
                                 "adaboost", "knn"))
    parser.add_argument("--params", default="",
                        help="classifier hyperparameters, e.g. C=0.5,max_epochs=200")
    parser.add_argument("--select-k", default="all",
                        help="keep only the k best features by ANOVA F ('all' or int)")
    parser.add_argument("--beta", type=float, default=0.5,
                        help="F_beta weighting (default 0.5, precision-heavy)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metacomment",
        description="Identify and classify meta-comments in news-site user comments.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and canonicalize a dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--tag", default=None)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="corpus statistics report")
    p.add_argument("--input", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train-embeddings", help="train word or comment embeddings")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=("word", "doc"), default="word")
    p.add_argument("--dim", type=int, default=300)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--min-count", type=int, default=50)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--method", choices=("cbow", "skipgram"), default="cbow")
    p.add_argument("--negative", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_train_embeddings)

    p = sub.add_parser("neighbors", help="nearest neighbors of a word")
    p.add_argument("--model", required=True)
    p.add_argument("--word", required=True)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("enrich-keywords", help="extend seed keywords via embeddings")
    p.add_argument("--model", required=True)
    p.add_argument("--seeds", required=True, help="seed keyword file")
    p.add_argument("--top-n", type=int, default=10)
    p.add_argument("--min-sim", type=float, default=0.6)
    _add_common(p)
    p.set_defaults(func=cmd_enrich_keywords)

    p = sub.add_parser("features", help="export the feature matrix")
    p.add_argument("--input", required=True)
    _add_model_flags(p)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train classifiers")
    p.add_argument("--input", required=True)
    p.add_argument("--target", default="Meta", help="positive label for one-vs-all")
    p.add_argument("--two-step", action="store_true",
                   help="train the meta gate plus all addressee models")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--calibrate", action="store_true",
                   help="fit a confidence sigmoid on an internal holdout")
    _add_classifier_flags(p)
    _add_model_flags(p)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="stratified k-fold cross-validation")
    p.add_argument("--input", required=True)
    p.add_argument("--target", default="Meta")
    p.add_argument("-k", type=int, default=10)
    _add_classifier_flags(p)
    _add_model_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid-search", help="hyperparameter grid search")
    p.add_argument("--input", required=True)
    p.add_argument("--target", default="Meta")
    p.add_argument("--grid", required=True, help="JSON grid specification")
    p.add_argument("-k", type=int, default=3)
    _add_classifier_flags(p)
    _add_model_flags(p)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("cross-eval", help="train on one dataset, test on another")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--classes", default=None, help="comma-separated label list")
    _add_classifier_flags(p)
    _add_model_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_cross_eval)

    p = sub.add_parser("classify", help="two-step classification of comments")
    p.add_argument("--input", required=True)
    p.add_argument("--models", required=True, help="directory from train --two-step")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--doc-model", default=None)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("rank-features", help="ANOVA F-value feature ranking")
    p.add_argument("--input", required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--classes", default=None)
    _add_model_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_rank_features)

    p = sub.add_parser("sample", help="sample annotation candidates")
    p.add_argument("--input", required=True)
    p.add_argument("--method", choices=("pattern", "similarity", "random"),
                   required=True)
    p.add_argument("--label", default="Media",
                   choices=ADDRESSEE_LABELS)
    p.add_argument("-n", type=int, default=100)
    p.add_argument("--batch-id", default="batch")
    _add_model_flags(p)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("merge", help="merge coded annotation batches")
    p.add_argument("--input", required=True)
    p.add_argument("--coded", nargs="+", required=True)
    p.add_argument("--policy", choices=("majority-with-third-coder", "strict"),
                   default="majority-with-third-coder")
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("report", help="summary table over metrics.json files")
    p.add_argument("--metrics", nargs="+", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except KNOWN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
