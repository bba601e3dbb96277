#!/usr/bin/env python3
"""Desk-scale pipeline demo: synthetic corpus -> filter -> split -> compare.

Generates a 3-class corpus with planted class keywords, applies the
eligibility filter, runs the seeded 70/30 split, compares all classifier x
vectorizer combinations on the shared split, and writes the ranked table
plus the winning model's evaluation report.

Usage: python scripts/run_desk_pipeline.py --out-dir out/desk [--seed 7]
"""

import argparse
import random
from pathlib import Path

from sdgdetect.classify import (
    DecisionThresholds,
    VectorizerSpec,
    compare_methods,
    evaluate,
    fit_classifier,
    save_model,
)
from sdgdetect.cli import emit_report
from sdgdetect.corpus import (
    Corpus,
    LabeledDocument,
    SdgLabelSet,
    SplitSpec,
    eligibility_filter,
    save_corpus,
    split_train_test,
)
from sdgdetect.textprep import PrepConfig
from sdgdetect.vectorize import SgnsConfig, fit_tfidf

KEYWORDS = {
    3: ["hospital", "vaccine", "clinic", "patients", "treatment"],
    7: ["solar", "turbine", "renewables", "photovoltaic", "grid"],
    12: ["recycling", "compost", "reuse", "circularity", "packaging"],
}


def synth_corpus(n: int, seed: int) -> Corpus:
    rng = random.Random(seed)
    filler = [f"filler{i:02d}" for i in range(60)]
    classes = sorted(KEYWORDS)
    docs = []
    for i in range(n):
        label = classes[i % len(classes)]
        length = rng.choice([4, 14, 16, 18])  # a few docs fall under the filter
        tokens = rng.choices(filler, k=length) + rng.choices(KEYWORDS[label], k=4)
        rng.shuffle(tokens)
        docs.append(
            LabeledDocument(
                id=f"p{i:04d}",
                text=" ".join(tokens),
                labels=SdgLabelSet({label}),
                source="abstract",
            )
        )
    return Corpus(docs)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/desk")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--docs", type=int, default=300)
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prep = PrepConfig()

    corpus = synth_corpus(args.docs, args.seed)
    save_corpus(corpus, out / "corpus.jsonl")

    eligible, rejected = eligibility_filter(corpus, min_tokens=10, prep=prep)
    print(f"eligibility: {len(eligible)} eligible / {len(rejected)} rejected")

    split = SplitSpec(train_fraction=0.70, seed=args.seed, stratified=True)
    train, test = split_train_test(eligible, split)
    save_corpus(train, out / "train.jsonl")
    save_corpus(test, out / "test.jsonl")
    print(f"split: {len(train)} train / {len(test)} test (seed={args.seed})")

    sgns = SgnsConfig(
        dimension=16,
        window=3,
        negatives=5,
        epochs=10,
        learning_rate=0.05,
        seed=args.seed,
        subsample=None,
    )
    reports = compare_methods(
        eligible,
        ["logistic_regression", "multinomial_nb", "linear_svm"],
        [VectorizerSpec(kind="tfidf"), VectorizerSpec(kind="embedding_mean", sgns=sgns)],
        split,
        prep=prep,
    )
    emit_report(reports, "csv", out / "method_comparison.csv")
    emit_report(reports, "json", out / "method_comparison.json")
    print("method comparison (ranked by macro-F1):")
    for rank, r in enumerate(reports, start=1):
        print(
            f"  {rank}. {r.method:20s} {r.vectorizer_id:28s} "
            f"macro_f1={r.macro_f1:.4f} micro_f1={r.micro_f1:.4f} acc={r.accuracy:.4f}"
        )

    vec = fit_tfidf(train, prep)
    model = fit_classifier(train, reports[0].method, vec, seed=args.seed, prep=prep)
    thresholds = DecisionThresholds()
    final = evaluate(model, test, thresholds)
    save_model(model, thresholds, out / "model.bin")
    emit_report(final, "json", out / "winner_eval.json")
    emit_report(final, "csv", out / "winner_eval.csv")
    print(
        f"winner {final.method} on held-out test: accuracy={final.accuracy:.4f}, "
        f"outputs in {out}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
