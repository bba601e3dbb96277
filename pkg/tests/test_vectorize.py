import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sdgdetect.textprep import PrepConfig, preprocess
from sdgdetect.vectorize import (
    EmbeddingTable,
    SgnsConfig,
    cosine,
    embed_document,
    fit_tfidf,
    load_doc_embeddings,
    load_embeddings,
    load_pretrained_embeddings,
    load_tfidf,
    save_doc_embeddings,
    save_embeddings,
    save_tfidf,
    save_word2vec_text,
    sgns_step,
    tfidf_dense,
    train_doc_embeddings,
    train_skipgram,
    transform_tfidf,
)

from conftest import make_docs

PREP = PrepConfig(stopwords=frozenset())

HAND_TEXTS = [
    "solar energy solar",
    "wind energy",
    "solar wind water",
    "water water energy",
    "health education",
]


# ---------------------------------------------------------------------------
# TF-IDF


def test_idf_fixed_points():
    model = fit_tfidf(make_docs(["term term"]), PREP)
    assert float(model.idf[model.vocabulary.index["term"]]) == pytest.approx(1.0, abs=1e-12)

    model = fit_tfidf(make_docs(["aa bb", "bb", "bb cc"]), PREP)
    idf_aa = float(model.idf[model.vocabulary.index["aa"]])
    assert idf_aa == pytest.approx(math.log(4 / 2) + 1, abs=1e-12)  # 1.693147...

    # every term in every document -> all idf exactly 1
    model = fit_tfidf(make_docs(["xx yy", "yy xx", "xx yy"]), PREP)
    assert np.allclose(model.idf, 1.0, atol=1e-15)


def test_transform_oov_gives_zero_vector():
    model = fit_tfidf(make_docs(HAND_TEXTS), PREP)
    assert transform_tfidf(model, "completely unknown tokens") == {}
    assert not tfidf_dense(model, "completely unknown tokens").any()


def test_transform_single_term_l2():
    model = fit_tfidf(make_docs(HAND_TEXTS), PREP)
    sparse = transform_tfidf(model, "water")
    assert list(sparse.values()) == [pytest.approx(1.0, abs=1e-12)]


def _oracle_tfidf_matrix(texts, norm="l2"):
    """Independent spreadsheet-style computation of the tf-idf matrix."""
    docs = [preprocess(t, PREP) for t in texts]
    terms = sorted({tok for doc in docs for tok in doc})
    n = len(docs)
    df = {t: sum(1 for doc in docs if t in doc) for t in terms}
    idf = {t: math.log((1 + n) / (1 + df[t])) + 1 for t in terms}
    matrix = []
    for doc in docs:
        row = [doc.count(t) * idf[t] for t in terms]
        if norm == "l2":
            scale = math.sqrt(sum(w * w for w in row))
            if scale > 0:
                row = [w / scale for w in row]
        matrix.append(row)
    return terms, matrix


def test_hand_corpus_matches_oracle():
    model = fit_tfidf(make_docs(HAND_TEXTS), PREP)
    terms, expected = _oracle_tfidf_matrix(HAND_TEXTS)
    assert model.vocabulary.terms == terms
    for text, row in zip(HAND_TEXTS, expected):
        got = tfidf_dense(model, text)
        assert np.max(np.abs(got - np.array(row))) < 1e-9


def test_weights_zero_iff_absent_and_monotone_in_tf():
    model = fit_tfidf(make_docs(HAND_TEXTS), PREP, norm="none")
    sparse = transform_tfidf(model, "solar wind")
    present = {model.vocabulary.terms[i] for i in sparse}
    assert present == {"solar", "wind"}
    more = transform_tfidf(model, "solar solar wind")
    idx = model.vocabulary.index["solar"]
    assert more[idx] > sparse[idx]


def test_l2_rows_have_unit_norm():
    model = fit_tfidf(make_docs(HAND_TEXTS), PREP)
    for text in HAND_TEXTS:
        vec = tfidf_dense(model, text)
        assert abs(np.linalg.norm(vec) - 1.0) < 1e-12


def test_fit_rejects_empty_effective_corpus():
    with pytest.raises(ValueError):
        fit_tfidf(make_docs(["...", "!!"]), PrepConfig())


def test_tfidf_container_round_trip(tmp_path):
    model = fit_tfidf(make_docs(HAND_TEXTS), PREP)
    path = tmp_path / "tfidf.bin"
    save_tfidf(model, path)
    loaded = load_tfidf(path)
    assert loaded.vocabulary.terms == model.vocabulary.terms
    assert loaded.norm == model.norm
    # payload is float32, so values agree to float32 precision
    assert np.allclose(loaded.idf, model.idf, atol=1e-6)


# ---------------------------------------------------------------------------
# SGNS step


def _oracle_loss(center, context, negatives):
    def log_sig(x):
        return -math.log1p(math.exp(-x)) if x >= 0 else x - math.log1p(math.exp(x))

    total = -log_sig(float(np.dot(context, center)))
    for neg in negatives:
        total -= log_sig(-float(np.dot(neg, center)))
    return total


def test_loss_at_zero_vectors():
    d = 5
    loss, *_ = sgns_step(np.zeros(d), np.zeros(d), [np.zeros(d)], 0.1)
    assert loss == pytest.approx(2 * math.log(2), abs=1e-12)
    for k in range(5):
        loss, *_ = sgns_step(np.zeros(d), np.zeros(d), [np.zeros(d)] * k, 0.1)
        assert loss == pytest.approx((1 + k) * math.log(2), abs=1e-12)


def test_loss_vanishes_for_aligned_pair_without_negatives():
    center = np.array([10.0, 0.0])
    context = np.array([10.0, 0.0])
    loss, *_ = sgns_step(center, context, [], 0.01)
    assert loss < 1e-8


def test_step_rejects_bad_inputs():
    with pytest.raises(ValueError):
        sgns_step(np.zeros(3), np.zeros(3), [], 0.0)
    with pytest.raises(ValueError):
        sgns_step(np.array([np.nan, 0.0]), np.zeros(2), [], 0.1)
    with pytest.raises(ValueError):
        sgns_step(np.zeros(3), np.zeros(4), [], 0.1)


def test_gradients_match_central_finite_differences():
    rng = np.random.default_rng(2024)
    eta = 0.01
    h = 1e-5
    for _ in range(100):
        d = int(rng.integers(2, 7))
        k = int(rng.integers(0, 5))
        center = rng.normal(size=d)
        context = rng.normal(size=d)
        negatives = [rng.normal(size=d) for _ in range(k)]

        loss, new_center, new_context, new_negs = sgns_step(center, context, negatives, eta)
        assert loss == pytest.approx(_oracle_loss(center, context, negatives), rel=1e-12)
        assert loss >= 0.0

        analytic = np.concatenate(
            [(center - new_center), (context - new_context)]
            + [old - new for old, new in zip(negatives, new_negs)]
        ) / eta

        flat = np.concatenate([center, context] + negatives)

        def loss_at(vec):
            c = vec[:d]
            ctx = vec[d : 2 * d]
            negs = [vec[2 * d + j * d : 2 * d + (j + 1) * d] for j in range(k)]
            return _oracle_loss(c, ctx, negs)

        numeric = np.empty_like(flat)
        for i in range(flat.size):
            up = flat.copy()
            down = flat.copy()
            up[i] += h
            down[i] -= h
            numeric[i] = (loss_at(up) - loss_at(down)) / (2 * h)

        rel = np.linalg.norm(analytic - numeric) / (np.linalg.norm(numeric) + 1e-12)
        assert rel < 1e-4


# ---------------------------------------------------------------------------
# Training


def test_train_skipgram_deterministic(toy_corpus):
    cfg = SgnsConfig(dimension=8, window=2, negatives=3, epochs=2, seed=5, subsample=None)
    t1 = train_skipgram(toy_corpus, cfg)
    t2 = train_skipgram(toy_corpus, cfg)
    assert np.array_equal(t1.vectors, t2.vectors)
    assert np.array_equal(t1.out_vectors, t2.out_vectors)
    assert t1.epoch_losses == t2.epoch_losses


def test_train_skipgram_shared_contexts_align(toy_corpus):
    cfg = SgnsConfig(
        dimension=16, window=3, negatives=5, epochs=30, learning_rate=0.05, seed=1, subsample=None
    )
    table = train_skipgram(toy_corpus, cfg)
    sun, solar, fish = table.vector("sun"), table.vector("solar"), table.vector("fish")
    assert cosine(sun, solar) > cosine(sun, fish)


def test_train_skipgram_epoch_losses_non_increasing(toy_corpus):
    cfg = SgnsConfig(dimension=32, window=3, negatives=5, epochs=6, seed=3, subsample=None)
    table = train_skipgram(toy_corpus, cfg)
    assert len(table.epoch_losses) == 6
    assert all(b <= a for a, b in zip(table.epoch_losses, table.epoch_losses[1:]))


def test_train_skipgram_input_validation():
    with pytest.raises(ValueError):
        train_skipgram(make_docs(["solo"]), SgnsConfig(dimension=4), PREP)
    with pytest.raises(ValueError):
        train_skipgram(make_docs(["aa bb"]), SgnsConfig(dimension=4, window=5), PREP)


def test_embed_document_mean_and_oov():
    table = EmbeddingTable(
        terms=["aa", "bb"],
        index={"aa": 0, "bb": 1},
        vectors=np.array([[2.0, 0.0], [0.0, 4.0]]),
    )
    np.testing.assert_array_equal(embed_document(table, "aa", PREP), np.array([2.0, 0.0]))
    np.testing.assert_array_equal(embed_document(table, "aa bb", PREP), np.array([1.0, 2.0]))
    np.testing.assert_array_equal(embed_document(table, "zz qq", PREP), np.zeros(2))


def test_train_doc_embeddings_deterministic(toy_corpus):
    cfg = SgnsConfig(dimension=8, window=2, negatives=3, epochs=2, seed=5, subsample=None)
    m1 = train_doc_embeddings(toy_corpus, cfg)
    m2 = train_doc_embeddings(toy_corpus, cfg)
    assert np.array_equal(m1.doc_vectors, m2.doc_vectors)
    assert m1.epoch_losses == m2.epoch_losses


def test_train_doc_embeddings_identical_docs_align(toy_corpus):
    cfg = SgnsConfig(
        dimension=8, window=3, negatives=5, epochs=80, learning_rate=0.1, seed=7, subsample=None
    )
    model = train_doc_embeddings(toy_corpus, cfg)
    by_text: dict[str, list[int]] = {}
    for i, doc in enumerate(toy_corpus.documents):
        by_text.setdefault(doc.text, []).append(i)
    dup = next(v for v in by_text.values() if len(v) == 2)
    unrelated = next(
        i for i, doc in enumerate(toy_corpus.documents) if doc.text.startswith("guitar")
    )
    same = cosine(model.doc_vectors[dup[0]], model.doc_vectors[dup[1]])
    cross = cosine(model.doc_vectors[dup[0]], model.doc_vectors[unrelated])
    assert same > cross


def test_train_doc_embeddings_losses_non_increasing(toy_corpus):
    cfg = SgnsConfig(dimension=32, window=3, negatives=5, epochs=6, seed=3, subsample=None)
    model = train_doc_embeddings(toy_corpus, cfg)
    assert all(b <= a for a, b in zip(model.epoch_losses, model.epoch_losses[1:]))


def test_negative_distribution_uses_three_quarter_power():
    from sdgdetect.vectorize import _noise_cumulative

    # 16^0.75 = 8 and 81^0.75 = 27, so the cumulative table is [8/35, 1].
    cum = _noise_cumulative(np.array([16, 81], dtype=np.int64))
    np.testing.assert_allclose(cum, [8 / 35, 1.0], atol=1e-12)


def test_sgns_config_validation():
    with pytest.raises(ValueError):
        SgnsConfig(dimension=0)
    with pytest.raises(ValueError):
        SgnsConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        SgnsConfig(subsample=-1.0)


# ---------------------------------------------------------------------------
# word2vec text format and containers


def test_load_word2vec_text_exact(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("2 3\nsun 0.1 0.2 0.3\nmoon -1.5 0.25 3.0\n")
    table = load_pretrained_embeddings(path)
    assert table.terms == ["sun", "moon"]
    assert table.dimension == 3
    np.testing.assert_array_equal(table.vector("sun"), np.array([0.1, 0.2, 0.3]))
    np.testing.assert_array_equal(table.vector("moon"), np.array([-1.5, 0.25, 3.0]))


def test_load_word2vec_header_count_mismatch(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("5 3\nsun 0.1 0.2 0.3\nmoon 1 2 3\nstar 1 2 3\nsky 1 2 3\n")
    with pytest.raises(ValueError, match="declares 5"):
        load_pretrained_embeddings(path)


def test_load_word2vec_bad_component_reports_line(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("1 3\nsun 0.1 oops 0.3\n")
    with pytest.raises(ValueError, match=":2"):
        load_pretrained_embeddings(path)


def test_load_word2vec_dimension_mismatch(tmp_path):
    path = tmp_path / "vec.txt"
    path.write_text("1 3\nsun 0.1 0.2\n")
    with pytest.raises(ValueError, match="components"):
        load_pretrained_embeddings(path)


def test_word2vec_text_round_trip(tmp_path, toy_corpus):
    cfg = SgnsConfig(dimension=6, window=2, negatives=2, epochs=1, seed=9, subsample=None)
    table = train_skipgram(toy_corpus, cfg)
    path = tmp_path / "trained.txt"
    save_word2vec_text(table, path)
    loaded = load_pretrained_embeddings(path)
    assert loaded.terms == table.terms
    assert np.array_equal(loaded.vectors, table.vectors)


def test_embeddings_container_round_trip(tmp_path):
    table = EmbeddingTable(
        terms=["aa", "bb"],
        index={"aa": 0, "bb": 1},
        vectors=np.array([[0.5, -0.25], [1.0, 2.0]]),
    )
    path = tmp_path / "emb.bin"
    save_embeddings(table, path)
    loaded = load_embeddings(path)
    assert loaded.terms == table.terms
    # these exact values are float32-representable, so the trip is lossless
    assert np.array_equal(loaded.vectors, table.vectors)


def test_doc_embeddings_container_round_trip(tmp_path, toy_corpus):
    cfg = SgnsConfig(dimension=4, window=2, negatives=2, epochs=1, seed=2, subsample=None)
    model = train_doc_embeddings(toy_corpus, cfg)
    path = tmp_path / "docs.bin"
    save_doc_embeddings(model, path)
    loaded = load_doc_embeddings(path)
    assert loaded.doc_ids == model.doc_ids
    assert loaded.mode == "pv_dbow"
    assert np.allclose(loaded.doc_vectors, model.doc_vectors, atol=1e-6)


# ---------------------------------------------------------------------------
# cosine properties


vectors_st = st.lists(
    st.floats(min_value=-10, max_value=10, allow_nan=False, allow_infinity=False),
    min_size=3,
    max_size=3,
)


@given(vectors_st, vectors_st)
def test_cosine_symmetric_and_bounded(a, b):
    va, vb = np.array(a), np.array(b)
    s1, s2 = cosine(va, vb), cosine(vb, va)
    assert s1 == pytest.approx(s2, abs=1e-12)
    assert -1.0 - 1e-9 <= s1 <= 1.0 + 1e-9


@given(vectors_st)
def test_cosine_self_similarity(a):
    va = np.array(a)
    if np.linalg.norm(va) > 1e-6:
        assert cosine(va, va) == pytest.approx(1.0, abs=1e-9)
    else:
        assert cosine(np.zeros(3), va) == 0.0
