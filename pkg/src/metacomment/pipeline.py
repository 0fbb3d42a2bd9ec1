"""Trainable end-to-end pipelines: feature route, CNN route, two-step gate.

A pipeline fits every transformer (keyword enrichment aside, which only
depends on the unlabeled word embeddings) on the entries it is given, so
cross-validation folds stay leak-free, and exposes fitted_ids() so the
evaluation harness can verify that.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .classifiers import (
    TrainedModel,
    calibrate,
    hyperparam_fields,
    train as train_classifier,
)
from .corpus import ADDRESSEE_LABELS, CLASS_ORDER, Comment, LabelSet
from .embeddings import DocEmbeddingModel, WordEmbeddingModel
from .evaluation import TwoStepResult, stratified_k_fold, two_step_classify
from .features import (
    ClassVector,
    FeatureConfig,
    FeatureExtractor,
    KeywordSet,
    TfidfModel,
    anova_f_matrix,
    build_matrix,
    class_vectors,
    default_keyword_seeds,
    enrich_keywords,
    select_k_best,
    tfidf_fit,
)
from .neural import CnnConfig, build as build_cnn, forward, train as train_cnn
from .textprep import preprocess

logger = logging.getLogger(__name__)

Entry = Tuple[Comment, LabelSet]


def _comments(entries: Sequence) -> List[Comment]:
    return [entry[0] if isinstance(entry, tuple) else entry for entry in entries]


def _label_sets(entries: Sequence) -> List[LabelSet]:
    return [entry[1] if isinstance(entry, tuple) else LabelSet() for entry in entries]


def build_keyword_sets(word_model: Optional[WordEmbeddingModel],
                       seeds: Optional[Dict[str, Sequence[str]]] = None,
                       top_n: int = 10, min_sim: float = 0.6) -> Dict[str, KeywordSet]:
    """Enriched keyword sets per addressee class.

    Enrichment uses only the unlabeled word embeddings; without a word model
    the seed lists are used as-is.
    """
    seeds = seeds if seeds is not None else default_keyword_seeds()
    sets = {}
    for label, seed_tokens in seeds.items():
        if word_model is not None:
            sets[label] = enrich_keywords(seed_tokens, word_model, top_n, min_sim,
                                          label=label)
        else:
            tokens = tuple(dict.fromkeys(t.lower() for t in seed_tokens))
            sets[label] = KeywordSet(label=label, seeds=tokens, enriched=tokens)
    return sets


class FeaturePipeline:
    """Hand-crafted-feature route: fit transformers, select, classify."""

    def __init__(self, classifier: str = "linear_svm",
                 classifier_params: Optional[dict] = None,
                 feature_config: Optional[FeatureConfig] = None,
                 word_model: Optional[WordEmbeddingModel] = None,
                 doc_model: Optional[DocEmbeddingModel] = None,
                 keyword_seeds: Optional[Dict[str, Sequence[str]]] = None,
                 enrich_top_n: int = 10, enrich_min_sim: float = 0.6,
                 select_k="all", departments: Optional[Sequence[str]] = None,
                 sentiment_lexicon: Optional[dict] = None,
                 stopwords=None, with_calibration: bool = False, seed: int = 0):
        if feature_config is None:
            feature_config = FeatureConfig(semantic=doc_model is not None,
                                           semantic_dims=False)
        self.classifier = classifier
        self.classifier_params = dict(classifier_params or {})
        if "seed" in hyperparam_fields(classifier):
            self.classifier_params.setdefault("seed", seed)
        self.feature_config = feature_config
        self.word_model = word_model
        self.doc_model = doc_model
        self.keyword_seeds = keyword_seeds
        self.enrich_top_n = enrich_top_n
        self.enrich_min_sim = enrich_min_sim
        self.select_k = select_k
        self.departments = departments
        self.sentiment_lexicon = sentiment_lexicon
        self.stopwords = stopwords
        self.with_calibration = with_calibration
        self.seed = seed
        self.extractor: Optional[FeatureExtractor] = None
        self.model: Optional[TrainedModel] = None
        self.selected: Optional[tuple] = None
        self._fitted_ids: Optional[frozenset] = None

    def _fit_extractor(self, entries: Sequence[Entry]) -> FeatureExtractor:
        cfg = self.feature_config
        comments = _comments(entries)
        keyword_sets = None
        if cfg.regex or cfg.keywords:
            keyword_sets = build_keyword_sets(self.word_model, self.keyword_seeds,
                                              self.enrich_top_n, self.enrich_min_sim)
        tfidf = None
        if cfg.tfidf:
            streams = [preprocess(c, remove_stopwords=True, stopwords=self.stopwords)
                       for c in comments]
            tfidf = tfidf_fit(streams)
        class_vecs = None
        if cfg.semantic:
            present = [cls for cls in CLASS_ORDER
                       if any(cls in ls for ls in _label_sets(entries))]
            from .corpus import LabeledDataset
            ds = LabeledDataset(tuple(entries), "fold")
            class_vecs = class_vectors(self.doc_model, ds, classes=present,
                                       stopwords=self.stopwords)
        return FeatureExtractor(
            cfg, keyword_sets=keyword_sets, tfidf=tfidf, doc_model=self.doc_model,
            class_vecs=class_vecs, departments=self.departments,
            sentiment_lexicon=self.sentiment_lexicon, stopwords=self.stopwords,
            extra_fitted_ids=[c.id for c in comments])

    def fit(self, entries: Sequence[Entry], y) -> "FeaturePipeline":
        y = np.asarray(y, dtype=int)
        self.extractor = self._fit_extractor(entries)
        X = self.extractor.matrix(_comments(entries))
        registry = list(self.extractor.registry)
        if self.select_k != "all":
            scores = dict(zip(registry, anova_f_matrix(X, y)))
            k = min(self.select_k, len(registry)) \
                if isinstance(self.select_k, int) else self.select_k
            self.selected = tuple(select_k_best(scores, k))
            columns = [registry.index(name) for name in self.selected]
            X = X[:, columns]
        else:
            self.selected = tuple(registry)

        if self.with_calibration:
            train_idx, holdout_idx = stratified_k_fold(y, 5, self.seed)[0]
            model = train_classifier(self.classifier, X[train_idx], y[train_idx],
                                     self.classifier_params, registry=self.selected)
            self.model = calibrate(model, X[holdout_idx], y[holdout_idx])
        else:
            self.model = train_classifier(self.classifier, X, y,
                                          self.classifier_params,
                                          registry=self.selected)
        self._fitted_ids = self.extractor.fitted_ids()
        return self

    def _matrix(self, entries: Sequence[Entry]) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("pipeline is not fitted")
        fvs = [self.extractor.assemble(c) for c in _comments(entries)]
        X = build_matrix(fvs, self.extractor.registry)
        if self.selected != self.extractor.registry:
            registry = list(self.extractor.registry)
            X = X[:, [registry.index(name) for name in self.selected]]
        return X

    def predict(self, entries: Sequence[Entry]) -> np.ndarray:
        return self.model.predict_many(self._matrix(entries))

    def decision_values(self, entries: Sequence[Entry]) -> np.ndarray:
        return self.model.decision_values(self._matrix(entries))

    def confidences(self, entries: Sequence[Entry]) -> np.ndarray:
        return self.model.confidences(self._matrix(entries))

    def fitted_ids(self) -> Optional[frozenset]:
        return self._fitted_ids


class CnnPipeline:
    """End-to-end route: token indices into the shallow CNN.

    Stop words are kept: the formal address "Sie" and similar function words
    carry addressee signal.
    """

    def __init__(self, word_model: WordEmbeddingModel, config: Optional[CnnConfig] = None,
                 seed: int = 0):
        self.word_model = word_model
        base = config or CnnConfig()
        self.config = base if base.seed == seed else \
            CnnConfig(**{**base.__dict__, "seed": seed})
        self.model = None
        self.loss_history: Optional[List[float]] = None
        self._fitted_ids: Optional[frozenset] = None

    def _encode(self, entries: Sequence[Entry]) -> np.ndarray:
        return np.array([self.model.encode(preprocess(c).tokens)
                         for c in _comments(entries)])

    def fit(self, entries: Sequence[Entry], y) -> "CnnPipeline":
        self.model = build_cnn(self.word_model, self.config)
        sequences = self._encode(entries)
        self.loss_history = train_cnn(self.model, sequences, np.asarray(y, dtype=int))
        self._fitted_ids = frozenset(c.id for c in _comments(entries))
        return self

    def predict_proba(self, entries: Sequence[Entry]) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("pipeline is not fitted")
        return np.atleast_2d(forward(self.model, self._encode(entries)))

    def predict(self, entries: Sequence[Entry]) -> np.ndarray:
        return self.predict_proba(entries).argmax(axis=1)

    def fitted_ids(self) -> Optional[frozenset]:
        return self._fitted_ids


class TwoStepClassifier:
    """Meta gate plus calibrated one-vs-all addressee models.

    All four models share one feature extractor fit on the training entries,
    which keeps them on the same feature registry as the two-step contract
    requires (feature selection is therefore not applied here).
    """

    def __init__(self, feature_pipeline_kwargs: Optional[dict] = None,
                 threshold: float = 0.8, seed: int = 0):
        kwargs = dict(feature_pipeline_kwargs or {})
        kwargs.pop("with_calibration", None)
        kwargs.pop("select_k", None)
        self.pipeline = FeaturePipeline(with_calibration=False, seed=seed, **kwargs)
        self.threshold = threshold
        self.seed = seed
        self.meta_model: Optional[TrainedModel] = None
        self.addressee_models: Dict[str, TrainedModel] = {}

    def fit(self, entries: Sequence[Entry]) -> "TwoStepClassifier":
        label_sets = _label_sets(entries)
        y_meta = np.array([1 if ls.is_meta else 0 for ls in label_sets])
        self.pipeline.fit(entries, y_meta)
        self.meta_model = self.pipeline.model
        X = self.pipeline._matrix(entries)
        for label in ADDRESSEE_LABELS:
            y = np.array([1 if label in ls else 0 for ls in label_sets])
            if len(np.unique(y)) < 2:
                logger.warning("no %s examples; skipping that addressee model", label)
                continue
            train_idx, holdout_idx = stratified_k_fold(y, 5, self.seed)[0]
            model = train_classifier(self.pipeline.classifier, X[train_idx],
                                     y[train_idx], self.pipeline.classifier_params,
                                     registry=self.pipeline.selected)
            self.addressee_models[label] = calibrate(model, X[holdout_idx],
                                                     y[holdout_idx])
        return self

    def classify(self, entry) -> TwoStepResult:
        x = self.pipeline._matrix([entry])
        return two_step_classify(self.meta_model, self.addressee_models, x,
                                 threshold=self.threshold)

    def fitted_ids(self) -> Optional[frozenset]:
        return self.pipeline.fitted_ids()


# -- extractor persistence ----------------------------------------------------

def save_extractor(extractor: FeatureExtractor, path) -> None:
    """Serialize every fitted piece except the embedding model itself."""
    data = {
        "format": "metacomment-extractor/1",
        "config": extractor.config.__dict__,
        "keyword_sets": {
            label: {"seeds": list(ks.seeds), "enriched": list(ks.enriched),
                    "missing": list(ks.missing)}
            for label, ks in extractor.keyword_sets.items()},
        "tfidf": None if extractor.tfidf is None else {
            "vocabulary": list(extractor.tfidf.vocabulary),
            "document_frequencies": extractor.tfidf.document_frequencies.tolist(),
            "n_docs": extractor.tfidf.n_docs,
            "fitted_ids": sorted(extractor.tfidf.fitted_ids)},
        "class_vectors": [{"label": cv.label, "vector": cv.vector.tolist()}
                          for cv in extractor.class_vecs],
        "departments": list(extractor.departments),
        "sentiment_lexicon": extractor.sentiment_lexicon,
        "stopwords": sorted(extractor.stopwords) if extractor.stopwords else None,
        "fitted_ids": sorted(extractor.fitted_ids()),
    }
    with open(Path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")


def load_extractor(path, doc_model: Optional[DocEmbeddingModel] = None) -> FeatureExtractor:
    with open(Path(path), encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format") != "metacomment-extractor/1":
        raise ValueError(f"unsupported extractor format {data.get('format')!r}")
    config = FeatureConfig(**data["config"])
    keyword_sets = {
        label: KeywordSet(label=label, seeds=tuple(ks["seeds"]),
                          enriched=tuple(ks["enriched"]), missing=tuple(ks["missing"]))
        for label, ks in data["keyword_sets"].items()} or None
    tfidf = None
    if data["tfidf"] is not None:
        raw = data["tfidf"]
        df = np.array(raw["document_frequencies"], dtype=np.int64)
        tfidf = TfidfModel(
            vocabulary={gram: i for i, gram in enumerate(raw["vocabulary"])},
            document_frequencies=df, n_docs=raw["n_docs"],
            idf=np.log((1.0 + raw["n_docs"]) / (1.0 + df)) + 1.0,
            fitted_ids=frozenset(raw["fitted_ids"]))
    class_vecs = [ClassVector(cv["label"], np.array(cv["vector"]))
                  for cv in data["class_vectors"]] or None
    return FeatureExtractor(
        config, keyword_sets=keyword_sets, tfidf=tfidf, doc_model=doc_model,
        class_vecs=class_vecs, departments=data["departments"],
        sentiment_lexicon=data["sentiment_lexicon"],
        stopwords=frozenset(data["stopwords"]) if data["stopwords"] else None,
        extra_fitted_ids=data["fitted_ids"])
