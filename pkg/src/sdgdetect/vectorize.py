"""Text-to-vector models: TF-IDF, skip-gram embeddings, document embeddings.

All training is single-threaded and deterministic for a fixed seed; that is
the reference mode every test relies on. Gradient math lives in one core
(:func:`sgns_step` and its in-place twin) shared by word and document
embedding training.

TF-IDF uses the smoothed inverse document frequency

    idf(t) = ln((1 + N) / (1 + df(t))) + 1

which keeps every weight positive and never divides by zero; rows are
L2-normalized by default.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .container import read_container, write_container
from .textprep import PrepConfig, Vocabulary, build_vocabulary, preprocess, tokenize_corpus

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import Corpus

NEGATIVE_DIST_POWER = 0.75


def sigmoid(x):
    """Numerically stable logistic function."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out


def log_sigmoid(x):
    """Numerically stable ln(sigmoid(x))."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = -np.log1p(np.exp(-arr[pos]))
    out[~pos] = arr[~pos] - np.log1p(np.exp(arr[~pos]))
    return float(out[0]) if np.isscalar(x) or np.ndim(x) == 0 else out


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector is zero."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# ---------------------------------------------------------------------------
# TF-IDF


@dataclass
class TfidfModel:
    vocabulary: Vocabulary
    idf: np.ndarray
    norm: str = "l2"
    prep: PrepConfig = field(default_factory=PrepConfig)

    @property
    def dimension(self) -> int:
        return len(self.vocabulary)


def fit_tfidf(corpus: "Corpus", config: PrepConfig | None = None, norm: str = "l2") -> TfidfModel:
    """Fit the smoothed-idf model on a corpus. N is the total document count."""
    if norm not in ("l2", "none"):
        raise ValueError(f"unknown norm {norm!r}")
    if config is None:
        config = PrepConfig()
    vocab = build_vocabulary(corpus, config)
    n = vocab.n_docs
    idf = np.log((1.0 + n) / (1.0 + vocab.df.astype(np.float64))) + 1.0
    return TfidfModel(vocabulary=vocab, idf=idf, norm=norm, prep=config)


def transform_tfidf(model: TfidfModel, text: str) -> dict[int, float]:
    """Sparse tf*idf weights keyed by vocabulary index.

    Out-of-vocabulary tokens are ignored; all-OOV text yields the empty
    (zero) vector. A weight is present iff the term occurs in the text.
    """
    tf: dict[int, int] = {}
    for tok in preprocess(text, model.prep):
        idx = model.vocabulary.index.get(tok)
        if idx is not None:
            tf[idx] = tf.get(idx, 0) + 1
    weights = {idx: count * float(model.idf[idx]) for idx, count in tf.items()}
    if model.norm == "l2" and weights:
        scale = np.sqrt(sum(w * w for w in weights.values()))
        if scale > 0:
            weights = {idx: w / scale for idx, w in weights.items()}
    return weights


def tfidf_dense(model: TfidfModel, text: str) -> np.ndarray:
    """Dense float64 tf-idf vector (length V)."""
    vec = np.zeros(model.dimension, dtype=np.float64)
    for idx, w in transform_tfidf(model, text).items():
        vec[idx] = w
    return vec


def save_tfidf(model: TfidfModel, path: str | Path) -> None:
    meta = {
        "kind": "tfidf",
        "terms": model.vocabulary.terms,
        "df": [int(x) for x in model.vocabulary.df],
        "counts": [int(x) for x in model.vocabulary.counts],
        "n_docs": model.vocabulary.n_docs,
        "norm": model.norm,
        "prep": model.prep.to_dict(),
    }
    write_container(path, meta, [("idf", model.idf)], dtype="<f4")


def load_tfidf(path: str | Path) -> TfidfModel:
    meta, arrays = read_container(path)
    if meta.get("kind") != "tfidf":
        raise ValueError(f"{path}: not a tfidf container")
    terms = list(meta["terms"])
    vocab = Vocabulary(
        terms=terms,
        index={t: i for i, t in enumerate(terms)},
        df=np.array(meta["df"], dtype=np.int64),
        counts=np.array(meta["counts"], dtype=np.int64),
        n_docs=int(meta["n_docs"]),
    )
    return TfidfModel(
        vocabulary=vocab,
        idf=arrays["idf"],
        norm=meta["norm"],
        prep=PrepConfig.from_dict(meta["prep"]),
    )


# ---------------------------------------------------------------------------
# Skip-gram with negative sampling


@dataclass(frozen=True)
class SgnsConfig:
    """Hyperparameters of skip-gram / PV-DBOW training.

    None of these were fixed by the upstream experiments; the defaults are
    conventional small-scale settings and are recorded in model metadata.
    """

    dimension: int = 100
    window: int = 5
    negatives: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    epochs: int = 5
    seed: int = 1
    subsample: float | None = 1e-3

    def __post_init__(self) -> None:
        if self.dimension < 1 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("dimension, window, negatives, and epochs must be positive")
        if self.learning_rate <= 0 or self.min_learning_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.subsample is not None and self.subsample <= 0:
            raise ValueError("subsample threshold must be positive (or None to disable)")

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "window": self.window,
            "negatives": self.negatives,
            "learning_rate": self.learning_rate,
            "min_learning_rate": self.min_learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
            "subsample": self.subsample,
        }


@dataclass
class EmbeddingTable:
    """Word vectors with an index; output vectors kept while training."""

    terms: list[str]
    index: dict[str, int]
    vectors: np.ndarray
    out_vectors: np.ndarray | None = None
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def vector(self, term: str) -> np.ndarray:
        return self.vectors[self.index[term]]


@dataclass
class DocEmbeddingModel:
    """PV-DBOW document vectors plus the shared word-output table."""

    doc_ids: list[str]
    doc_vectors: np.ndarray
    table: EmbeddingTable
    mode: str = "pv_dbow"
    epoch_losses: list[float] = field(default_factory=list)

    def vector(self, doc_id: str) -> np.ndarray:
        return self.doc_vectors[self.doc_ids.index(doc_id)]


def _sgns_coefficients(v: np.ndarray, u_rows: np.ndarray) -> tuple[float, np.ndarray]:
    """Loss and per-row gradient coefficients for one (center, ctx+negs) group.

    Row 0 of ``u_rows`` is the true context, the rest are negatives. The
    gradient of the loss w.r.t. each u-row is coef[j] * v, and w.r.t. v it
    is coef @ u_rows.
    """
    dots = u_rows @ v
    loss = -log_sigmoid(dots[0]) - float(np.sum(log_sigmoid(-dots[1:])))
    coef = sigmoid(dots)
    coef = np.atleast_1d(coef).astype(np.float64)
    coef[0] -= 1.0
    return float(loss), coef


def sgns_step(
    center: np.ndarray,
    context: np.ndarray,
    negatives: Sequence[np.ndarray],
    learning_rate: float,
) -> tuple[float, np.ndarray, np.ndarray, list[np.ndarray]]:
    """One gradient step of the negative-sampling objective.

    loss = -ln s(u_ctx . v) - sum_neg ln s(-u_neg . v), with s the logistic
    function. All updates use the pre-step vectors (simultaneous update);
    the inputs are not mutated.
    """
    if learning_rate <= 0:
        raise ValueError("learning rate must be positive")
    center = np.asarray(center, dtype=np.float64)
    rows = [np.asarray(context, dtype=np.float64)]
    rows.extend(np.asarray(neg, dtype=np.float64) for neg in negatives)
    u_rows = np.vstack(rows)
    if u_rows.shape[1] != center.shape[0]:
        raise ValueError("context/negative dimension does not match center")
    if not np.all(np.isfinite(center)) or not np.all(np.isfinite(u_rows)):
        raise ValueError("non-finite input vector")
    loss, coef = _sgns_coefficients(center, u_rows)
    new_center = center - learning_rate * (coef @ u_rows)
    du = learning_rate * np.outer(coef, center)
    updated = u_rows - du
    return loss, new_center, updated[0], [updated[j] for j in range(1, updated.shape[0])]


def _sgns_update_inplace(
    w_in: np.ndarray,
    w_out: np.ndarray,
    center_idx: int,
    out_idxs: np.ndarray,
    learning_rate: float,
) -> float:
    """In-place variant used by the training loops; same math as sgns_step."""
    v = w_in[center_idx].copy()
    u_rows = w_out[out_idxs]
    loss, coef = _sgns_coefficients(v, u_rows)
    np.subtract.at(w_out, out_idxs, learning_rate * np.outer(coef, v))
    w_in[center_idx] = v - learning_rate * (coef @ u_rows)
    return loss


def _noise_cumulative(counts: np.ndarray) -> np.ndarray:
    weights = counts.astype(np.float64) ** NEGATIVE_DIST_POWER
    cum = np.cumsum(weights)
    return cum / cum[-1]


def _draw_negatives(
    rng: np.random.Generator, cum: np.ndarray, k: int, forbidden: int
) -> np.ndarray:
    """Draw k indices from the unigram^0.75 distribution, avoiding one index."""
    negs = np.searchsorted(cum, rng.random(k))
    for _ in range(100):
        clash = negs == forbidden
        if not clash.any():
            break
        negs[clash] = np.searchsorted(cum, rng.random(int(clash.sum())))
    return negs[negs != forbidden]


def _keep_probabilities(counts: np.ndarray, threshold: float | None) -> np.ndarray | None:
    if threshold is None:
        return None
    total = float(counts.sum())
    freq = counts.astype(np.float64) / total
    cut = threshold
    keep = (np.sqrt(freq / cut) + 1.0) * (cut / freq)
    return np.minimum(keep, 1.0)


def train_skipgram(
    corpus: "Corpus", config: SgnsConfig, prep: PrepConfig | None = None
) -> EmbeddingTable:
    """Train skip-gram word vectors with negative sampling.

    Negatives are drawn from the unigram distribution raised to 0.75; the
    learning rate decays linearly over scheduled token positions down to
    ``min_learning_rate``. Deterministic for a fixed seed.
    """
    if prep is None:
        prep = PrepConfig()
    vocab = build_vocabulary(corpus, prep)
    if len(vocab) < 2:
        raise ValueError("skip-gram training needs a vocabulary of at least 2 terms")
    docs = [
        [vocab.index[t] for t in tokens]
        for tokens in tokenize_corpus(corpus, prep)
    ]
    total_tokens = sum(len(d) for d in docs)
    if total_tokens < config.window:
        raise ValueError("effective corpus is smaller than one context window")

    rng = np.random.default_rng(config.seed)
    v_size = len(vocab)
    w_in = (rng.random((v_size, config.dimension)) - 0.5) / config.dimension
    w_out = np.zeros((v_size, config.dimension), dtype=np.float64)
    cum = _noise_cumulative(vocab.counts)
    keep = _keep_probabilities(vocab.counts, config.subsample)

    schedule_total = max(1, config.epochs * total_tokens)
    step = 0
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        loss_sum = 0.0
        pairs = 0
        for tokens in docs:
            if keep is not None:
                kept = [t for t in tokens if rng.random() < keep[t]]
            else:
                kept = tokens
            for pos, center in enumerate(kept):
                lr = max(
                    config.min_learning_rate,
                    config.learning_rate * (1.0 - step / schedule_total),
                )
                step += 1
                lo = max(0, pos - config.window)
                hi = min(len(kept), pos + config.window + 1)
                for cpos in range(lo, hi):
                    if cpos == pos:
                        continue
                    negs = _draw_negatives(rng, cum, config.negatives, kept[cpos])
                    out_idxs = np.concatenate(([kept[cpos]], negs))
                    loss_sum += _sgns_update_inplace(w_in, w_out, center, out_idxs, lr)
                    pairs += 1
        epoch_losses.append(loss_sum / pairs if pairs else 0.0)

    return EmbeddingTable(
        terms=list(vocab.terms),
        index=dict(vocab.index),
        vectors=w_in,
        out_vectors=w_out,
        epoch_losses=epoch_losses,
    )


def train_doc_embeddings(
    corpus: "Corpus", config: SgnsConfig, prep: PrepConfig | None = None
) -> DocEmbeddingModel:
    """Train PV-DBOW document vectors: each document id predicts its tokens.

    Reuses the negative-sampling update; the word-output table is shared
    across documents. Deterministic for a fixed seed.
    """
    if prep is None:
        prep = PrepConfig()
    if len(corpus.documents) == 0:
        raise ValueError("cannot train document embeddings on an empty corpus")
    vocab = build_vocabulary(corpus, prep)
    if len(vocab) < 2:
        raise ValueError("PV-DBOW training needs a vocabulary of at least 2 terms")
    docs = [
        [vocab.index[t] for t in tokens]
        for tokens in tokenize_corpus(corpus, prep)
    ]
    total_tokens = sum(len(d) for d in docs)

    rng = np.random.default_rng(config.seed)
    d_count = len(docs)
    doc_vecs = (rng.random((d_count, config.dimension)) - 0.5) / config.dimension
    w_out = np.zeros((len(vocab), config.dimension), dtype=np.float64)
    cum = _noise_cumulative(vocab.counts)
    keep = _keep_probabilities(vocab.counts, config.subsample)

    schedule_total = max(1, config.epochs * total_tokens)
    step = 0
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        loss_sum = 0.0
        pairs = 0
        for doc_idx, tokens in enumerate(docs):
            if keep is not None:
                kept = [t for t in tokens if rng.random() < keep[t]]
            else:
                kept = tokens
            for target in kept:
                lr = max(
                    config.min_learning_rate,
                    config.learning_rate * (1.0 - step / schedule_total),
                )
                step += 1
                negs = _draw_negatives(rng, cum, config.negatives, target)
                out_idxs = np.concatenate(([target], negs))
                loss_sum += _sgns_update_inplace(doc_vecs, w_out, doc_idx, out_idxs, lr)
                pairs += 1
        epoch_losses.append(loss_sum / pairs if pairs else 0.0)

    table = EmbeddingTable(
        terms=list(vocab.terms),
        index=dict(vocab.index),
        vectors=np.zeros((len(vocab), config.dimension), dtype=np.float64),
        out_vectors=w_out,
    )
    return DocEmbeddingModel(
        doc_ids=[doc.id for doc in corpus.documents],
        doc_vectors=doc_vecs,
        table=table,
        mode="pv_dbow",
        epoch_losses=epoch_losses,
    )


def embed_document(
    table: EmbeddingTable, text: str, prep: PrepConfig | None = None
) -> np.ndarray:
    """Mean of in-vocabulary token vectors; the zero vector when all are OOV."""
    if prep is None:
        prep = PrepConfig()
    rows = [table.index[t] for t in preprocess(text, prep) if t in table.index]
    if not rows:
        return np.zeros(table.dimension, dtype=np.float64)
    return table.vectors[rows].mean(axis=0)


# ---------------------------------------------------------------------------
# word2vec text format and containers


def load_pretrained_embeddings(path: str | Path, format: str = "word2vec_text") -> EmbeddingTable:
    """Load a word2vec text file: header "V d", then one term + d floats per line."""
    if format != "word2vec_text":
        raise ValueError(f"unknown embedding format {format!r}")
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:1: header must be 'V d'")
        try:
            v_count, dim = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ValueError(f"{path}:1: non-integer header: {header!r}") from exc
        if v_count < 0 or dim < 1:
            raise ValueError(f"{path}:1: bad header values V={v_count} d={dim}")
        terms: list[str] = []
        index: dict[str, int] = {}
        vectors = np.zeros((v_count, dim), dtype=np.float64)
        row = 0
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            if row >= v_count:
                raise ValueError(f"{path}:{lineno}: more rows than the declared {v_count}")
            fields = line.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected 1 term + {dim} components, got {len(fields)} fields"
                )
            term = fields[0]
            if term in index:
                raise ValueError(f"{path}:{lineno}: duplicate term {term!r}")
            try:
                vectors[row] = [float(x) for x in fields[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric component: {exc}") from exc
            index[term] = row
            terms.append(term)
            row += 1
        if row != v_count:
            raise ValueError(f"{path}: header declares {v_count} terms but file has {row}")
    return EmbeddingTable(terms=terms, index=index, vectors=vectors)


def save_word2vec_text(table: EmbeddingTable, path: str | Path) -> None:
    """Write the word2vec text format; floats use round-trippable repr."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table.terms)} {table.dimension}\n")
        for i, term in enumerate(table.terms):
            comps = " ".join(repr(float(x)) for x in table.vectors[i])
            fh.write(f"{term} {comps}\n")


def save_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Container format: JSON metadata + little-endian float32 matrices."""
    meta = {"kind": "embeddings", "terms": table.terms, "dimension": table.dimension}
    arrays = [("vectors", table.vectors)]
    if table.out_vectors is not None:
        arrays.append(("out_vectors", table.out_vectors))
    write_container(path, meta, arrays, dtype="<f4")


def load_embeddings(path: str | Path) -> EmbeddingTable:
    meta, arrays = read_container(path)
    if meta.get("kind") != "embeddings":
        raise ValueError(f"{path}: not an embeddings container")
    terms = list(meta["terms"])
    return EmbeddingTable(
        terms=terms,
        index={t: i for i, t in enumerate(terms)},
        vectors=arrays["vectors"],
        out_vectors=arrays.get("out_vectors"),
    )


def save_doc_embeddings(model: DocEmbeddingModel, path: str | Path) -> None:
    meta = {
        "kind": "doc_embeddings",
        "mode": model.mode,
        "doc_ids": model.doc_ids,
        "terms": model.table.terms,
        "dimension": int(model.doc_vectors.shape[1]),
    }
    arrays = [("doc_vectors", model.doc_vectors)]
    if model.table.out_vectors is not None:
        arrays.append(("out_vectors", model.table.out_vectors))
    write_container(path, meta, arrays, dtype="<f4")


def load_doc_embeddings(path: str | Path) -> DocEmbeddingModel:
    meta, arrays = read_container(path)
    if meta.get("kind") != "doc_embeddings":
        raise ValueError(f"{path}: not a doc-embeddings container")
    terms = list(meta["terms"])
    dim = int(meta["dimension"])
    table = EmbeddingTable(
        terms=terms,
        index={t: i for i, t in enumerate(terms)},
        vectors=np.zeros((len(terms), dim), dtype=np.float64),
        out_vectors=arrays.get("out_vectors"),
    )
    return DocEmbeddingModel(
        doc_ids=list(meta["doc_ids"]),
        doc_vectors=arrays["doc_vectors"],
        table=table,
        mode=meta["mode"],
    )
