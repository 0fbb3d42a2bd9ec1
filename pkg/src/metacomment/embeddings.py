"""Word and comment embeddings trained with negative sampling.

Word vectors are trained CBOW-style (predict a token from the mean of its
context vectors) or skip-gram-style; comment vectors use the
distributed-memory variant where the comment vector is averaged into the
context. Inference for unseen comments runs gradient steps on a fresh
comment vector while the word matrices stay frozen.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .textprep import TokenStream

logger = logging.getLogger(__name__)

NOISE_EXPONENT = 0.75


class EmbeddingError(ValueError):
    """Invalid training input or query (e.g. empty vocabulary, OOV word)."""


@dataclass(frozen=True)
class WordTrainingParams:
    """Hyperparameters for embedding training."""

    dim: int = 100
    window: int = 5
    min_count: int = 5
    epochs: int = 5
    method: str = "cbow"  # "cbow" or "skipgram"
    negative_samples: int = 5
    initial_lr: float = 0.025
    final_lr: float = 0.0001
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        if min(self.dim, self.window, self.min_count, self.epochs,
               self.negative_samples, self.workers) < 1:
            raise EmbeddingError("dim, window, min_count, epochs, negative_samples, "
                                 "workers must all be >= 1")
        if self.method not in ("cbow", "skipgram"):
            raise EmbeddingError(f"unknown training method {self.method!r}")
        if not 0 < self.final_lr <= self.initial_lr:
            raise EmbeddingError("need 0 < final_lr <= initial_lr")


@dataclass(frozen=True)
class DocInferenceParams:
    """Gradient-step schedule for inferring vectors of unseen comments."""

    steps: int = 50
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    seed: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise EmbeddingError("steps must be >= 1")
        if not 0 < self.min_learning_rate <= self.learning_rate:
            raise EmbeddingError("need 0 < min_learning_rate <= learning_rate")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between u and v; 0 when either vector is zero."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise EmbeddingError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    return 1.0 - cosine_similarity(u, v)


# -- negative-sampling objective ------------------------------------------
#
# For one (context, center) pair with mean input vector h and negative draws
# n_1..n_K the loss is  -log s(u_c . h) - sum_k log s(-u_{n_k} . h)  where s
# is the logistic function. These two functions are the reference definition;
# the training loops apply exactly these gradients in fused form.

def negative_sampling_loss(w_in: np.ndarray, w_out: np.ndarray,
                           context: Sequence[int], center: int,
                           negatives: Sequence[int]) -> float:
    h = w_in[np.asarray(context)].mean(axis=0)
    s_pos = float(w_out[center] @ h)
    loss = float(np.logaddexp(0.0, -s_pos))
    if len(negatives):
        s_neg = w_out[np.asarray(negatives)] @ h
        loss += float(np.logaddexp(0.0, s_neg).sum())
    return loss


def negative_sampling_gradients(w_in: np.ndarray, w_out: np.ndarray,
                                context: Sequence[int], center: int,
                                negatives: Sequence[int]):
    """Full-matrix analytic gradients of negative_sampling_loss.

    Returns (loss, grad_in, grad_out) with grads shaped like the matrices;
    rows not involved in the pair are zero.
    """
    rows = np.asarray(context)
    h = w_in[rows].mean(axis=0)
    targets = np.concatenate(([center], np.asarray(negatives, dtype=int)))
    scores = w_out[targets] @ h
    g = _sigmoid(scores)
    g[0] -= 1.0
    loss = float(np.logaddexp(0.0, -scores[0]) + np.logaddexp(0.0, scores[1:]).sum())
    grad_h = g @ w_out[targets]
    grad_in = np.zeros_like(w_in)
    np.add.at(grad_in, rows, grad_h / len(rows))
    grad_out = np.zeros_like(w_out)
    np.add.at(grad_out, targets, g[:, None] * h[None, :])
    return loss, grad_in, grad_out


class _NoiseTable:
    """Unigram^0.75 noise distribution with deterministic inverse-CDF draws."""

    def __init__(self, counts: np.ndarray):
        weights = counts.astype(float) ** NOISE_EXPONENT
        self.cum = np.cumsum(weights / weights.sum())
        self.cum[-1] = 1.0

    def draw(self, rng: np.random.Generator, k: int, exclude: int) -> np.ndarray:
        idx = np.searchsorted(self.cum, rng.random(k), side="right")
        return idx[idx != exclude]


class WordEmbeddingModel:
    """Vocabulary plus input/output vector matrices from one training run."""

    def __init__(self, vocab: Dict[str, int], vectors: np.ndarray,
                 out_vectors: np.ndarray, counts: np.ndarray,
                 params: WordTrainingParams, epoch_losses: Optional[List[float]] = None):
        if vectors.shape[0] != len(vocab):
            raise EmbeddingError("vector matrix must have one row per vocab entry")
        if not np.isfinite(vectors).all() or not np.isfinite(out_vectors).all():
            raise EmbeddingError("non-finite values in embedding matrices")
        self.vocab = dict(vocab)
        self.vectors = vectors
        self.out_vectors = out_vectors
        self.counts = counts
        self.params = params
        self.epoch_losses = list(epoch_losses or [])
        self._tokens = [None] * len(vocab)
        for token, idx in vocab.items():
            self._tokens[idx] = token
        self._noise = _NoiseTable(counts) if len(vocab) else None

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.vocab

    def __len__(self) -> int:
        return len(self.vocab)

    def token_at(self, index: int) -> str:
        return self._tokens[index]

    def vector(self, token: str) -> np.ndarray:
        if token not in self.vocab:
            raise EmbeddingError(f"word not in vocabulary: {token!r}")
        return self.vectors[self.vocab[token]]

    def most_similar(self, word: str, n: int) -> List[Tuple[str, float]]:
        """Top-n vocabulary neighbors by cosine similarity, query excluded."""
        if word not in self.vocab:
            raise EmbeddingError(f"word not in vocabulary: {word!r}")
        if n <= 0:
            return []
        qi = self.vocab[word]
        q = _unit(self.vectors[qi])
        norms = np.linalg.norm(self.vectors, axis=1)
        norms[norms == 0.0] = 1.0
        sims = (self.vectors @ q) / norms
        order = np.argsort(-sims, kind="stable")
        result = []
        for idx in order:
            if idx == qi:
                continue
            result.append((self._tokens[idx], float(np.clip(sims[idx], -1.0, 1.0))))
            if len(result) == n:
                break
        return result

    def save(self, prefix) -> None:
        prefix = Path(prefix)
        _write_vector_file(prefix.with_suffix(".vec"), self._tokens, self.vectors)
        _write_vector_file(prefix.with_suffix(".out"), self._tokens, self.out_vectors)
        meta = {
            "params": self.params.__dict__,
            "counts": {t: int(c) for t, c in zip(self._tokens, self.counts)},
            "epoch_losses": self.epoch_losses,
        }
        _write_json(prefix.with_suffix(".meta.json"), meta)

    @classmethod
    def load(cls, prefix) -> "WordEmbeddingModel":
        prefix = Path(prefix)
        tokens, vectors = _read_vector_file(prefix.with_suffix(".vec"))
        out_tokens, out_vectors = _read_vector_file(prefix.with_suffix(".out"))
        if tokens != out_tokens:
            raise EmbeddingError("input/output vector files disagree on vocabulary")
        with open(prefix.with_suffix(".meta.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        params = WordTrainingParams(**meta["params"])
        counts = np.array([meta["counts"][t] for t in tokens], dtype=np.int64)
        vocab = {t: i for i, t in enumerate(tokens)}
        return cls(vocab, vectors, out_vectors, counts, params, meta.get("epoch_losses"))


def most_similar(model: WordEmbeddingModel, word: str, n: int) -> List[Tuple[str, float]]:
    return model.most_similar(word, n)


def _format_float(x: float) -> str:
    return repr(float(x))


def _write_vector_file(path: Path, keys: Sequence[str], matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{matrix.shape[0]} {matrix.shape[1]}\n")
        for key, row in zip(keys, matrix):
            if any(ch.isspace() for ch in key):
                raise EmbeddingError(f"key {key!r} contains whitespace, cannot serialize")
            fh.write(key + " " + " ".join(_format_float(x) for x in row) + "\n")


def _read_vector_file(path: Path) -> Tuple[List[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        n, d = int(header[0]), int(header[1])
        keys = []
        matrix = np.empty((n, d), dtype=float)
        for i in range(n):
            parts = fh.readline().rstrip("\n").split(" ")
            keys.append(parts[0])
            matrix[i] = [float(x) for x in parts[1:]]
    return keys, matrix


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")


def _build_vocab(corpus: Sequence[TokenStream], min_count: int):
    counts: Dict[str, int] = {}
    for ts in corpus:
        for token in ts.tokens:
            counts[token] = counts.get(token, 0) + 1
    kept = [(t, c) for t, c in counts.items() if c >= min_count]
    if not kept:
        raise EmbeddingError(f"empty effective vocabulary (all tokens below min_count={min_count})")
    kept.sort(key=lambda tc: (-tc[1], tc[0]))
    vocab = {t: i for i, (t, _) in enumerate(kept)}
    return vocab, np.array([c for _, c in kept], dtype=np.int64)


def _init_matrices(rng: np.random.Generator, n_rows: int, dim: int):
    w_in = (rng.random((n_rows, dim)) - 0.5) / dim
    w_out = np.zeros((n_rows, dim))
    return w_in, w_out


class _LrSchedule:
    """Linear decay over the total number of training positions."""

    def __init__(self, initial: float, final: float, total: int):
        self.initial = initial
        self.final = final
        self.total = max(total, 1)
        self.done = 0

    def next(self) -> float:
        lr = self.initial - (self.initial - self.final) * (self.done / self.total)
        self.done += 1
        return max(lr, self.final)


def _train_doc_positions(w_in, w_out, noise, params, doc_indices, lr_sched, rng,
                         doc_vec=None, update_words=True):
    """One pass over one document; returns the accumulated loss.

    With doc_vec given, the document vector joins the context average
    (distributed-memory style). update_words=False freezes both word
    matrices and trains the document vector alone (inference mode).
    """
    total_loss = 0.0
    k = params.negative_samples
    n = len(doc_indices)
    for pos in range(n):
        lr = lr_sched.next()
        context = doc_indices[max(0, pos - params.window):pos] \
            + doc_indices[pos + 1:pos + 1 + params.window]
        negatives = noise.draw(rng, k, exclude=doc_indices[pos])
        if not context and doc_vec is None:
            continue
        rows = np.asarray(context, dtype=int)
        m = len(context) + (1 if doc_vec is not None else 0)
        if doc_vec is not None:
            h = (w_in[rows].sum(axis=0) + doc_vec) / m if len(rows) else doc_vec.copy()
        else:
            h = w_in[rows].mean(axis=0)
        targets = np.concatenate(([doc_indices[pos]], negatives))
        scores = w_out[targets] @ h
        g = _sigmoid(scores)
        g[0] -= 1.0
        total_loss += float(np.logaddexp(0.0, -scores[0])
                            + np.logaddexp(0.0, scores[1:]).sum())
        grad_h = g @ w_out[targets]
        if update_words:
            np.add.at(w_out, targets, (-lr) * g[:, None] * h[None, :])
            if len(rows):
                np.add.at(w_in, rows, (-lr / m) * grad_h)
        if doc_vec is not None:
            doc_vec -= (lr / m) * grad_h
    return total_loss


def _train_skipgram_doc(w_in, w_out, noise, params, doc_indices, lr_sched, rng):
    total_loss = 0.0
    k = params.negative_samples
    n = len(doc_indices)
    for pos in range(n):
        lr = lr_sched.next()
        center = doc_indices[pos]
        context = doc_indices[max(0, pos - params.window):pos] \
            + doc_indices[pos + 1:pos + 1 + params.window]
        for target in context:
            negatives = noise.draw(rng, k, exclude=target)
            h = w_in[center]
            targets = np.concatenate(([target], negatives))
            scores = w_out[targets] @ h
            g = _sigmoid(scores)
            g[0] -= 1.0
            total_loss += float(np.logaddexp(0.0, -scores[0])
                                + np.logaddexp(0.0, scores[1:]).sum())
            grad_h = g @ w_out[targets]
            np.add.at(w_out, targets, (-lr) * g[:, None] * h[None, :])
            w_in[center] -= lr * grad_h
    return total_loss


def _index_corpus(corpus: Sequence[TokenStream], vocab: Dict[str, int]) -> List[List[int]]:
    return [[vocab[t] for t in ts.tokens if t in vocab] for ts in corpus]


def train_word_embeddings(corpus: Iterable[TokenStream],
                          params: WordTrainingParams) -> WordEmbeddingModel:
    """Train a word embedding model with negative sampling.

    Single-worker training is fully deterministic for a fixed seed; with
    workers > 1 the lock-free concurrent updates make results vary from run
    to run. The per-epoch training loss is recorded on the model.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmbeddingError("training corpus is empty")
    vocab, counts = _build_vocab(corpus, params.min_count)
    rng = np.random.default_rng(params.seed)
    w_in, w_out = _init_matrices(rng, len(vocab), params.dim)
    noise = _NoiseTable(counts)
    indexed = _index_corpus(corpus, vocab)
    total_positions = sum(len(d) for d in indexed) * params.epochs
    lr_sched = _LrSchedule(params.initial_lr, params.final_lr, total_positions)

    train_one = _train_skipgram_doc if params.method == "skipgram" else _train_doc_positions

    epoch_losses = []
    for epoch in range(params.epochs):
        if params.workers == 1:
            loss = 0.0
            for doc in indexed:
                loss += train_one(w_in, w_out, noise, params, doc, lr_sched, rng)
        else:
            loss = _parallel_epoch(train_one, w_in, w_out, noise, params, indexed,
                                   lr_sched, params.seed + epoch)
        epoch_losses.append(loss)
        logger.debug("epoch %d/%d loss %.4f", epoch + 1, params.epochs, loss)
    return WordEmbeddingModel(vocab, w_in, w_out, counts, params, epoch_losses)


def _parallel_epoch(train_one, w_in, w_out, noise, params, indexed, lr_sched, seed):
    # Lock-free concurrent updates on the shared matrices: numerically well
    # behaved but not reproducible run-to-run.
    chunks = [indexed[i::params.workers] for i in range(params.workers)]
    losses = []

    def run(chunk_id):
        rng = np.random.default_rng((seed, chunk_id))
        loss = 0.0
        for doc in chunks[chunk_id]:
            loss += train_one(w_in, w_out, noise, params, doc, lr_sched, rng)
        return loss

    with ThreadPoolExecutor(max_workers=params.workers) as pool:
        for loss in pool.map(run, range(params.workers)):
            losses.append(loss)
    return sum(losses)


class DocEmbeddingModel:
    """Word model plus one trained vector per training comment."""

    def __init__(self, word_model: WordEmbeddingModel,
                 doc_vectors: Dict[str, np.ndarray],
                 flagged_ids: frozenset,
                 inference_params: DocInferenceParams):
        self.word_model = word_model
        self.doc_vectors = doc_vectors
        self.flagged_ids = frozenset(flagged_ids)
        self.inference_params = inference_params

    @property
    def dim(self) -> int:
        return self.word_model.dim

    def infer(self, ts: TokenStream) -> Tuple[np.ndarray, bool]:
        """Infer a vector for unseen tokens; returns (vector, all_oov flag).

        Only the fresh comment vector is updated; the word matrices are
        never touched. All-OOV input yields a zero vector and the flag.
        """
        wm = self.word_model
        indices = [wm.vocab[t] for t in ts.tokens if t in wm.vocab]
        if not indices:
            return np.zeros(self.dim), True
        p = self.inference_params
        rng = np.random.default_rng(p.seed)
        doc_vec = (rng.random(self.dim) - 0.5) / self.dim
        lr_sched = _LrSchedule(p.learning_rate, p.min_learning_rate,
                               len(indices) * p.steps)
        train_params = replace(wm.params, method="cbow")
        for _ in range(p.steps):
            _train_doc_positions(wm.vectors, wm.out_vectors, wm._noise, train_params,
                                 indices, lr_sched, rng, doc_vec=doc_vec,
                                 update_words=False)
        return doc_vec, False

    def vector_for(self, ts: TokenStream) -> np.ndarray:
        """Trained vector when the comment id was in training, else inferred."""
        if ts.source_id in self.doc_vectors:
            return self.doc_vectors[ts.source_id]
        return self.infer(ts)[0]

    def save(self, prefix) -> None:
        prefix = Path(prefix)
        self.word_model.save(prefix)
        ids = list(self.doc_vectors)
        matrix = np.array([self.doc_vectors[i] for i in ids]) if ids \
            else np.zeros((0, self.dim))
        _write_vector_file(prefix.with_suffix(".docs"), ids, matrix)
        _write_json(prefix.with_suffix(".docs.meta.json"), {
            "flagged_ids": sorted(self.flagged_ids),
            "inference_params": self.inference_params.__dict__,
        })

    @classmethod
    def load(cls, prefix) -> "DocEmbeddingModel":
        prefix = Path(prefix)
        word_model = WordEmbeddingModel.load(prefix)
        ids, matrix = _read_vector_file(prefix.with_suffix(".docs"))
        with open(prefix.with_suffix(".docs.meta.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
        doc_vectors = {i: matrix[k] for k, i in enumerate(ids)}
        return cls(word_model, doc_vectors, frozenset(meta["flagged_ids"]),
                   DocInferenceParams(**meta["inference_params"]))


def train_doc_embeddings(corpus: Iterable[TokenStream], params: WordTrainingParams,
                         inference_params: Optional[DocInferenceParams] = None) -> DocEmbeddingModel:
    """Jointly train word vectors and one vector per comment (DM style).

    Comments with no in-vocabulary tokens get a zero vector and are flagged.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmbeddingError("training corpus is empty")
    if params.method != "cbow":
        raise EmbeddingError("comment embeddings require the cbow method")
    vocab, counts = _build_vocab(corpus, params.min_count)
    rng = np.random.default_rng(params.seed)
    w_in, w_out = _init_matrices(rng, len(vocab), params.dim)
    noise = _NoiseTable(counts)
    indexed = _index_corpus(corpus, vocab)

    doc_ids = [ts.source_id for ts in corpus]
    trainable = [bool(d) for d in indexed]
    doc_matrix = (rng.random((len(corpus), params.dim)) - 0.5) / params.dim
    for i, ok in enumerate(trainable):
        if not ok:
            doc_matrix[i] = 0.0

    total_positions = sum(len(d) for d in indexed) * params.epochs
    lr_sched = _LrSchedule(params.initial_lr, params.final_lr, total_positions)
    epoch_losses = []
    for epoch in range(params.epochs):
        loss = 0.0
        for i, doc in enumerate(indexed):
            if not trainable[i]:
                continue
            loss += _train_doc_positions(w_in, w_out, noise, params, doc, lr_sched,
                                         rng, doc_vec=doc_matrix[i])
        epoch_losses.append(loss)
        logger.debug("doc epoch %d/%d loss %.4f", epoch + 1, params.epochs, loss)

    word_model = WordEmbeddingModel(vocab, w_in, w_out, counts, params, epoch_losses)
    doc_vectors = {doc_id: doc_matrix[i] for i, doc_id in enumerate(doc_ids)}
    flagged = frozenset(doc_id for i, doc_id in enumerate(doc_ids) if not trainable[i])
    if flagged:
        logger.warning("%d comments had no in-vocabulary tokens; zero vectors assigned",
                       len(flagged))
    return DocEmbeddingModel(word_model, doc_vectors, flagged,
                             inference_params or DocInferenceParams(seed=params.seed))


def infer_doc_vector(model: DocEmbeddingModel, ts: TokenStream) -> np.ndarray:
    """Vector for an unseen comment; zero vector when no token is known."""
    vector, all_oov = model.infer(ts)
    if all_oov:
        logger.warning("comment %r: all tokens out of vocabulary", ts.source_id)
    return vector
