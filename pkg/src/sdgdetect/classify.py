"""One-vs-rest SDG classifiers over vectorized text, plus the eval harness.

Three from-scratch methods share a linear scoring form: every class head is
(w, b) and scores are sigmoid(w . x + b) in [0, 1], so multi-label
prediction is a per-class threshold test and an empty label set is a legal
outcome ("no SDG detected").

Methods:
  - logistic_regression: full-batch gradient descent, L2 penalty.
  - multinomial_nb: binary multinomial naive Bayes per class with Laplace
    smoothing (alpha=1); weights are log likelihood-ratios, so the sigmoid
    of the linear score IS the exact class posterior for count features.
    Features are shifted per dimension to be non-negative when a vectorizer
    (e.g. mean word embeddings) produces negative values.
  - linear_svm: hinge loss trained by Pegasos-style SGD; margins are mapped
    through the sigmoid for thresholding.

Training documents may carry several labels; each head treats documents
with its class as positives and all others as negatives.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .corpus import Corpus, SdgLabelSet
from .textprep import PrepConfig, Vocabulary
from .vectorize import (
    EmbeddingTable,
    SgnsConfig,
    TfidfModel,
    embed_document,
    sigmoid,
    tfidf_dense,
    train_skipgram,
)

METHODS = ("logistic_regression", "multinomial_nb", "linear_svm")


@dataclass(frozen=True)
class DecisionThresholds:
    """Per-class score thresholds in [0, 1]; classes default to 0.5."""

    default: float = 0.5
    per_class: dict[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for tau in [self.default, *self.per_class.values()]:
            if not 0.0 <= tau <= 1.0:
                raise ValueError(f"threshold outside [0, 1]: {tau}")

    def get(self, sdg: int) -> float:
        return self.per_class.get(sdg, self.default)

    def to_dict(self) -> dict:
        return {"default": self.default, "per_class": {str(k): v for k, v in self.per_class.items()}}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionThresholds":
        return cls(
            default=float(data["default"]),
            per_class={int(k): float(v) for k, v in data["per_class"].items()},
        )


def vectorize_text(vectorizer, text: str, prep: PrepConfig) -> np.ndarray:
    """Dense feature vector for a text under either vectorizer kind."""
    if isinstance(vectorizer, TfidfModel):
        return tfidf_dense(vectorizer, text)
    if isinstance(vectorizer, EmbeddingTable):
        return embed_document(vectorizer, text, prep)
    raise TypeError(f"unsupported vectorizer type: {type(vectorizer).__name__}")


@dataclass
class ClassifierModel:
    """Per-class linear heads plus the vectorizer that produced the features."""

    method: str
    classes: list[int]
    weights: np.ndarray  # (C, F)
    biases: np.ndarray  # (C,)
    offset: np.ndarray  # (F,) subtracted before scoring (NB non-negativity shift)
    vectorizer: object
    vectorizer_id: str
    prep: PrepConfig
    seed: int

    def features(self, text: str) -> np.ndarray:
        return vectorize_text(self.vectorizer, text, self.prep)

    def score_vector(self, x: np.ndarray) -> np.ndarray:
        shifted = np.maximum(x - self.offset, 0.0) if self.offset.any() else x
        return sigmoid(self.weights @ shifted + self.biases)


def _class_matrix(corpus: Corpus) -> tuple[list[int], np.ndarray]:
    classes = sorted({c for doc in corpus.documents for c in doc.labels})
    if any(not doc.labels for doc in corpus.documents):
        bad = next(doc.id for doc in corpus.documents if not doc.labels)
        raise ValueError(f"training document without labels: {bad!r}")
    if len(classes) < 2:
        raise ValueError("training corpus must contain at least 2 label classes")
    y = np.zeros((len(corpus.documents), len(classes)), dtype=np.float64)
    for i, doc in enumerate(corpus.documents):
        for c in doc.labels:
            y[i, classes.index(c)] = 1.0
    return classes, y


def _fit_logreg_binary(x: np.ndarray, y: np.ndarray, iters: int, l2: float) -> tuple[np.ndarray, float]:
    n, f = x.shape
    w = np.zeros(f)
    b = 0.0
    mean_sq = float(np.mean(np.sum(x * x, axis=1)))
    lr = 1.0 / (0.25 * max(mean_sq, 1e-12) + l2)
    for _ in range(iters):
        p = sigmoid(x @ w + b)
        err = p - y
        w -= lr * (x.T @ err / n + l2 * w)
        b -= lr * float(np.mean(err))
    return w, b


def _fit_nb_binary(x: np.ndarray, y: np.ndarray, alpha: float = 1.0) -> tuple[np.ndarray, float]:
    pos = y > 0.5
    n_pos = int(pos.sum())
    n_neg = int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("naive Bayes head needs both positive and negative examples")
    f = x.shape[1]
    sum_pos = x[pos].sum(axis=0)
    sum_neg = x[~pos].sum(axis=0)
    log_pos = np.log(sum_pos + alpha) - np.log(sum_pos.sum() + alpha * f)
    log_neg = np.log(sum_neg + alpha) - np.log(sum_neg.sum() + alpha * f)
    w = log_pos - log_neg
    b = float(np.log(n_pos) - np.log(n_neg))
    return w, b


def _fit_svm_binary(
    x: np.ndarray, y: np.ndarray, seed: int, epochs: int, lam: float
) -> tuple[np.ndarray, float]:
    n, f = x.shape
    xa = np.hstack([x, np.ones((n, 1))])
    ypm = np.where(y > 0.5, 1.0, -1.0)
    w = np.zeros(f + 1)
    rng = random.Random(seed)
    t = 0
    order = list(range(n))
    for _ in range(epochs):
        rng.shuffle(order)
        for i in order:
            t += 1
            eta = 1.0 / (lam * t)
            margin = ypm[i] * float(xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * ypm[i] * xa[i]
    return w[:f], float(w[f])


def fit_classifier(
    train: Corpus,
    method: str,
    vectorizer,
    seed: int = 0,
    prep: PrepConfig | None = None,
    vectorizer_id: str | None = None,
    logreg_iters: int = 500,
    logreg_l2: float = 1e-4,
    nb_alpha: float = 1.0,
    svm_epochs: int = 30,
    svm_lambda: float = 1e-2,
) -> ClassifierModel:
    """Fit one-vs-rest heads for every label class in the training corpus.

    Deterministic for a fixed seed. Every document must carry at least one
    label and at least two classes (each with at least one non-member) must
    be present.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if prep is None:
        prep = getattr(vectorizer, "prep", None) or PrepConfig()
    classes, y = _class_matrix(train)
    x = np.vstack([vectorize_text(vectorizer, doc.text, prep) for doc in train.documents])
    if x.shape[1] == 0 or not np.any(x):
        raise ValueError("feature matrix is empty; check the vectorizer and preprocessing")
    for j, c in enumerate(classes):
        if int(y[:, j].sum()) == len(train.documents):
            raise ValueError(f"class {c} has no negative examples; one-vs-rest needs both sides")

    offset = np.minimum(x.min(axis=0), 0.0) if method == "multinomial_nb" else np.zeros(x.shape[1])
    x_eff = np.maximum(x - offset, 0.0) if offset.any() else x

    weights = np.zeros((len(classes), x.shape[1]))
    biases = np.zeros(len(classes))
    for j in range(len(classes)):
        if method == "logistic_regression":
            weights[j], biases[j] = _fit_logreg_binary(x_eff, y[:, j], logreg_iters, logreg_l2)
        elif method == "multinomial_nb":
            weights[j], biases[j] = _fit_nb_binary(x_eff, y[:, j], nb_alpha)
        else:
            weights[j], biases[j] = _fit_svm_binary(x_eff, y[:, j], seed + j, svm_epochs, svm_lambda)

    if vectorizer_id is None:
        vectorizer_id = type(vectorizer).__name__
    return ClassifierModel(
        method=method,
        classes=classes,
        weights=weights,
        biases=biases,
        offset=offset,
        vectorizer=vectorizer,
        vectorizer_id=vectorizer_id,
        prep=prep,
        seed=seed,
    )


def predict_scores(model: ClassifierModel, text: str) -> dict[int, float]:
    """Calibrated per-class scores in [0, 1] (one-vs-rest: no sum constraint)."""
    scores = model.score_vector(model.features(text))
    return {c: float(scores[j]) for j, c in enumerate(model.classes)}


def predict_labels(
    model: ClassifierModel, thresholds: DecisionThresholds, text: str
) -> SdgLabelSet:
    """Labels whose score reaches the class threshold; empty set is legal."""
    scores = predict_scores(model, text)
    return SdgLabelSet(c for c, s in scores.items() if s >= thresholds.get(c))


@dataclass
class ClassMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def support(self) -> int:
        return self.tp + self.fn

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


@dataclass
class EvalReport:
    """Per-class and pooled metrics of one model on one test split."""

    method: str
    vectorizer_id: str
    seed: int
    test_size: int
    per_class: dict[int, ClassMetrics]
    micro_f1: float
    macro_f1: float
    accuracy: float

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "vectorizer": self.vectorizer_id,
            "seed": self.seed,
            "test_size": self.test_size,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "accuracy": self.accuracy,
            "per_class": {
                str(c): {
                    "precision": m.precision,
                    "recall": m.recall,
                    "f1": m.f1,
                    "tp": m.tp,
                    "fp": m.fp,
                    "fn": m.fn,
                    "tn": m.tn,
                    "support": m.support,
                }
                for c, m in sorted(self.per_class.items())
            },
        }


def evaluate(
    model: ClassifierModel,
    test: Corpus,
    thresholds: DecisionThresholds | None = None,
) -> EvalReport:
    """Multi-label evaluation: per-class P/R/F1, micro/macro F1, subset accuracy."""
    if len(test.documents) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    if thresholds is None:
        thresholds = DecisionThresholds()
    truth = [set(doc.labels) for doc in test.documents]
    preds = [set(predict_labels(model, thresholds, doc.text)) for doc in test.documents]
    classes = sorted(set(model.classes) | {c for t in truth for c in t})
    per_class: dict[int, ClassMetrics] = {}
    for c in classes:
        tp = sum(1 for t, p in zip(truth, preds) if c in t and c in p)
        fp = sum(1 for t, p in zip(truth, preds) if c not in t and c in p)
        fn = sum(1 for t, p in zip(truth, preds) if c in t and c not in p)
        tn = len(test.documents) - tp - fp - fn
        per_class[c] = ClassMetrics(tp=tp, fp=fp, fn=fn, tn=tn)
    pooled_tp = sum(m.tp for m in per_class.values())
    pooled_fp = sum(m.fp for m in per_class.values())
    pooled_fn = sum(m.fn for m in per_class.values())
    micro_p = pooled_tp / (pooled_tp + pooled_fp) if (pooled_tp + pooled_fp) else 0.0
    micro_r = pooled_tp / (pooled_tp + pooled_fn) if (pooled_tp + pooled_fn) else 0.0
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if (micro_p + micro_r) else 0.0
    macro_f1 = float(np.mean([m.f1 for m in per_class.values()])) if per_class else 0.0
    accuracy = sum(1 for t, p in zip(truth, preds) if t == p) / len(test.documents)
    return EvalReport(
        method=model.method,
        vectorizer_id=model.vectorizer_id,
        seed=model.seed,
        test_size=len(test.documents),
        per_class=per_class,
        micro_f1=micro_f1,
        macro_f1=macro_f1,
        accuracy=accuracy,
    )


def tune_thresholds(
    model: ClassifierModel,
    validation: Corpus,
    grid: list[float] | None = None,
) -> DecisionThresholds:
    """Pick the per-class threshold maximizing F1 on a validation slice.

    Off by default everywhere; prediction uses 0.5 unless this is called.
    """
    if grid is None:
        grid = [round(0.05 * i, 2) for i in range(1, 20)]
    scores = [predict_scores(model, doc.text) for doc in validation.documents]
    truth = [set(doc.labels) for doc in validation.documents]
    per_class: dict[int, float] = {}
    for c in model.classes:
        best_tau, best_f1 = 0.5, -1.0
        for tau in grid:
            tp = sum(1 for s, t in zip(scores, truth) if s[c] >= tau and c in t)
            fp = sum(1 for s, t in zip(scores, truth) if s[c] >= tau and c not in t)
            fn = sum(1 for s, t in zip(scores, truth) if s[c] < tau and c in t)
            p = tp / (tp + fp) if (tp + fp) else 0.0
            r = tp / (tp + fn) if (tp + fn) else 0.0
            f1 = 2 * p * r / (p + r) if (p + r) else 0.0
            if f1 > best_f1:
                best_tau, best_f1 = tau, f1
        per_class[c] = best_tau
    return DecisionThresholds(per_class=per_class)


# ---------------------------------------------------------------------------
# Vectorizer specs and the method-comparison harness


@dataclass(frozen=True)
class VectorizerSpec:
    """How to build a vectorizer on a training split."""

    kind: str = "tfidf"  # "tfidf" | "embedding_mean"
    norm: str = "l2"
    sgns: SgnsConfig | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("tfidf", "embedding_mean"):
            raise ValueError(f"unknown vectorizer kind {self.kind!r}")
        if self.kind == "embedding_mean" and self.sgns is None:
            object.__setattr__(self, "sgns", SgnsConfig())

    @property
    def identifier(self) -> str:
        if self.kind == "tfidf":
            return f"tfidf(norm={self.norm})"
        cfg = self.sgns
        return f"embedding_mean(d={cfg.dimension},seed={cfg.seed})"


def fit_vectorizer(spec: VectorizerSpec, train: Corpus, prep: PrepConfig):
    from .vectorize import fit_tfidf

    if spec.kind == "tfidf":
        return fit_tfidf(train, prep, norm=spec.norm)
    return train_skipgram(train, spec.sgns, prep)


def compare_methods(
    corpus: Corpus,
    methods: list[str],
    vectorizers: list[VectorizerSpec],
    split,
    prep: PrepConfig | None = None,
    thresholds: DecisionThresholds | None = None,
) -> list[EvalReport]:
    """Evaluate every method x vectorizer combination on one shared split.

    The split is computed once, so all combinations see identical train and
    test documents. Results are ranked by macro-F1, then micro-F1, then
    method name, then vectorizer id.
    """
    from .corpus import split_train_test

    if not methods or not vectorizers:
        raise ValueError("need at least one method and one vectorizer")
    if prep is None:
        prep = PrepConfig()
    train, test = split_train_test(corpus, split)
    reports: list[EvalReport] = []
    for spec in vectorizers:
        vec = fit_vectorizer(spec, train, prep)
        for method in methods:
            model = fit_classifier(
                train, method, vec, seed=split.seed, prep=prep, vectorizer_id=spec.identifier
            )
            reports.append(evaluate(model, test, thresholds))
    reports.sort(key=lambda r: (-r.macro_f1, -r.micro_f1, r.method, r.vectorizer_id))
    return reports


# ---------------------------------------------------------------------------
# Serialization: one container bundles vectorizer, heads, and thresholds.


def save_model(
    model: ClassifierModel,
    thresholds: DecisionThresholds,
    path: str | Path,
) -> None:
    """Write the full prediction pipeline to one container file.

    Payloads are 64-bit floats so a load/save round trip reproduces scores
    (and therefore predicted labels) exactly.
    """
    vec = model.vectorizer
    arrays: list[tuple[str, np.ndarray]] = [
        ("weights", model.weights),
        ("biases", model.biases),
        ("offset", model.offset),
    ]
    if isinstance(vec, TfidfModel):
        vec_meta = {
            "kind": "tfidf",
            "terms": vec.vocabulary.terms,
            "df": [int(v) for v in vec.vocabulary.df],
            "counts": [int(v) for v in vec.vocabulary.counts],
            "n_docs": vec.vocabulary.n_docs,
            "norm": vec.norm,
            "prep": vec.prep.to_dict(),
        }
        arrays.append(("vec_idf", vec.idf))
    elif isinstance(vec, EmbeddingTable):
        vec_meta = {"kind": "embedding_mean", "terms": vec.terms, "dimension": vec.dimension}
        arrays.append(("vec_vectors", vec.vectors))
    else:
        raise TypeError(f"cannot serialize vectorizer of type {type(vec).__name__}")
    meta = {
        "kind": "trained_model",
        "method": model.method,
        "classes": model.classes,
        "vectorizer_id": model.vectorizer_id,
        "vectorizer": vec_meta,
        "thresholds": thresholds.to_dict(),
        "seed": model.seed,
        "prep": model.prep.to_dict(),
    }
    write_container(path, meta, arrays, dtype="<f8")


def load_model(path: str | Path) -> tuple[ClassifierModel, DecisionThresholds]:
    meta, arrays = read_container(path)
    if meta.get("kind") != "trained_model":
        raise ValueError(f"{path}: not a trained-model container")
    prep = PrepConfig.from_dict(meta["prep"])
    vec_meta = meta["vectorizer"]
    if vec_meta["kind"] == "tfidf":
        terms = list(vec_meta["terms"])
        vocab = Vocabulary(
            terms=terms,
            index={t: i for i, t in enumerate(terms)},
            df=np.array(vec_meta["df"], dtype=np.int64),
            counts=np.array(vec_meta["counts"], dtype=np.int64),
            n_docs=int(vec_meta["n_docs"]),
        )
        vectorizer: object = TfidfModel(
            vocabulary=vocab,
            idf=arrays["vec_idf"],
            norm=vec_meta["norm"],
            prep=PrepConfig.from_dict(vec_meta["prep"]),
        )
    else:
        terms = list(vec_meta["terms"])
        vectorizer = EmbeddingTable(
            terms=terms,
            index={t: i for i, t in enumerate(terms)},
            vectors=arrays["vec_vectors"],
        )
    model = ClassifierModel(
        method=meta["method"],
        classes=[int(c) for c in meta["classes"]],
        weights=arrays["weights"],
        biases=arrays["biases"],
        offset=arrays["offset"],
        vectorizer=vectorizer,
        vectorizer_id=meta["vectorizer_id"],
        prep=prep,
        seed=int(meta["seed"]),
    )
    return model, DecisionThresholds.from_dict(meta["thresholds"])
