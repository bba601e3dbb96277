"""Command-line surface tying the pipeline together.

Subcommands map one-to-one onto module operations: ingest, filter, split,
taxo-search, train, evaluate, compare-methods, predict, llm-run, compare,
fewshot, report. Outputs are machine-readable CSV/JSON (plus optional SVG
bar charts) written where the flags point.

A JSON config file can supply defaults for common flags (flags win). The
API key is only ever read from an environment variable, never from flags
or config. Exit codes: 0 success, 1 usage, 2 input error, 3 transport
error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .analyze import (
    DetectionRateTable,
    FewShotReport,
    OverlapReport,
    detection_rates,
    fewshot_report,
    make_records,
    overlap_report,
    read_detections,
    write_detections,
)
from .classify import (
    DecisionThresholds,
    EvalReport,
    VectorizerSpec,
    compare_methods,
    evaluate,
    fit_classifier,
    fit_vectorizer,
    load_model,
    predict_labels,
    save_model,
    tune_thresholds,
)
from .container import ContainerError
from .corpus import (
    Corpus,
    CorpusFormatError,
    SdgLabelSet,
    SplitSpec,
    eligibility_filter,
    load_corpus,
    save_corpus,
    split_train_test,
)
from .llm import (
    ExchangeCache,
    HttpTransport,
    LlmError,
    ProtocolError,
    ProtocolSpec,
    TokenBucket,
    TransportFailed,
    load_records,
    run_protocol,
    save_records,
)
from .taxonomy import (
    TaxonomyError,
    bundled_taxonomy,
    build_index,
    compile_query,
    expand_terms,
    load_taxonomy,
    search_index,
)
from .textprep import PrepConfig, load_stopwords
from .vectorize import SgnsConfig, load_pretrained_embeddings


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # noqa: D102 - argparse hook
        raise UsageError(message)


class _ForbiddenTransport:
    """Replay-mode transport: any send attempt is a hard failure."""

    def send(self, payload):
        raise TransportFailed("network access is disabled in replay mode")


# ---------------------------------------------------------------------------
# Config handling: JSON object of flag defaults; explicit flags win.

CONFIG_KEYS = (
    "endpoint",
    "model",
    "temperature",
    "parallelism",
    "retries",
    "rate_limit",
    "min_tokens",
    "train_fraction",
    "seed",
    "threshold",
    "stopwords",
)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {unknown} (known: {sorted(CONFIG_KEYS)})")
    return data


def _resolve(args, config: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _prep_from(args, config: dict) -> PrepConfig:
    stop_path = _resolve(args, config, "stopwords", None)
    if stop_path:
        return PrepConfig(stopwords=load_stopwords(stop_path))
    return PrepConfig()


def _parse_tags(text: str) -> SdgLabelSet:
    try:
        return SdgLabelSet(int(part) for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise UsageError(f"bad --tags value {text!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Report emission


def emit_report(report, format: str, path: str | Path) -> None:
    """Write a report (overlap, eval, rates, few-shot) as csv/json/svg_bars."""
    path = Path(path)
    if format == "json":
        if isinstance(report, (OverlapReport, FewShotReport, EvalReport)):
            payload = report.to_dict()
        elif isinstance(report, DetectionRateTable):
            payload = _rates_dict(report)
        elif isinstance(report, (list, tuple)) and all(
            isinstance(r, DetectionRateTable) for r in report
        ):
            payload = [_rates_dict(r) for r in report]
        elif isinstance(report, (list, tuple)) and all(isinstance(r, EvalReport) for r in report):
            payload = [r.to_dict() for r in report]
        else:
            raise TypeError(f"cannot serialize report type {type(report).__name__}")
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    elif format == "csv":
        path.write_text(_report_csv(report), encoding="utf-8")
    elif format == "svg_bars":
        if isinstance(report, DetectionRateTable):
            report = [report]
        if not (
            isinstance(report, (list, tuple))
            and report
            and all(isinstance(r, DetectionRateTable) for r in report)
        ):
            raise TypeError("svg_bars renders detection-rate tables")
        path.write_text(render_rate_bars_svg(list(report)), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format {format!r}")


def _rates_dict(table: DetectionRateTable) -> dict:
    return {
        "side": table.side,
        "total": table.total,
        "counts": {str(c): table.counts[c] for c in sorted(table.counts)},
        "rates": {str(c): table.rates[c] for c in sorted(table.rates)},
        "top3": table.top(3),
    }


def _report_csv(report) -> str:
    lines: list[str] = []
    if isinstance(report, OverlapReport):
        lines.append("statistic,value,percent_of_total")
        for name, value, pct in report.rows():
            lines.append(f"\"{name}\",{value},{pct}")
    elif isinstance(report, DetectionRateTable):
        lines.append("sdg,rate")
        for c, _, rate in report.rows():
            lines.append(f"{c},{rate:.2f}")
    elif isinstance(report, FewShotReport):
        lines.append(
            "label,n,expected,total_identification,total_identification_pct,"
            "as_expected,as_expected_pct,as_expected_bracketed,correct,correct_pct"
        )
        for r in report.rows:
            lines.append(
                f"{r.label},{r.n},{'' if r.expected is None else r.expected},"
                f"{r.total_identification},"
                f"{'' if r.total_identification_pct is None else f'{r.total_identification_pct:.2f}'},"
                f"{r.as_expected},"
                f"{'' if r.as_expected_pct is None else f'{r.as_expected_pct:.2f}'},"
                f"{str(r.as_expected_bracketed).lower()},"
                f"{r.correct},"
                f"{'' if r.correct_pct is None else f'{r.correct_pct:.2f}'}"
            )
        lines.append(
            f"total,{report.total_items},,{report.total_identifications},,"
            f"{report.total_as_expected},{report.total_as_expected_pct:.2f},,"
            f"{report.total_correct},{report.total_correct_pct:.2f}"
        )
        lines.append(f"items_with_any,{report.items_with_any},,,,,,,,")
        lines.append(f"pct_items_with_any,{report.pct_items_with_any:.2f},,,,,,,,")
        lines.append(f"avg_per_identified,{report.avg_per_identified:.2f},,,,,,,,")
    elif isinstance(report, EvalReport):
        lines.append("class,precision,recall,f1,tp,fp,fn,tn,support")
        for c, m in sorted(report.per_class.items()):
            lines.append(
                f"{c},{m.precision:.6f},{m.recall:.6f},{m.f1:.6f},{m.tp},{m.fp},{m.fn},{m.tn},{m.support}"
            )
        lines.append(f"micro_f1,{report.micro_f1:.6f},,,,,,,")
        lines.append(f"macro_f1,{report.macro_f1:.6f},,,,,,,")
        lines.append(f"accuracy,{report.accuracy:.6f},,,,,,,")
    elif isinstance(report, (list, tuple)) and all(isinstance(r, EvalReport) for r in report):
        lines.append("rank,method,vectorizer,macro_f1,micro_f1,accuracy,test_size,seed")
        for rank, r in enumerate(report, start=1):
            lines.append(
                f"{rank},{r.method},{r.vectorizer_id},{r.macro_f1:.6f},{r.micro_f1:.6f},"
                f"{r.accuracy:.6f},{r.test_size},{r.seed}"
            )
    else:
        raise TypeError(f"cannot render report type {type(report).__name__} as CSV")
    return "\n".join(lines) + "\n"


_BAR_COLORS = ("#4477aa", "#cc6677")


def render_rate_bars_svg(tables: list[DetectionRateTable]) -> str:
    """Grouped per-SDG detection-rate bars; deterministic bytes."""
    if not 1 <= len(tables) <= 2:
        raise ValueError("svg chart renders one or two sides")
    width, height = 840, 420
    ml, mr, mt, mb = 60, 20, 34, 52
    plot_w, plot_h = width - ml - mr, height - mt - mb
    max_rate = max(rate for t in tables for rate in t.rates.values())
    axis_max = max(10, int(math.ceil(max_rate / 10.0)) * 10)
    group_w = plot_w / 17.0
    bar_w = group_w * 0.76 / len(tables)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        '<g font-family="sans-serif" font-size="12">',
    ]
    for i in range(6):
        frac = i / 5.0
        y = mt + plot_h * (1 - frac)
        value = axis_max * frac
        parts.append(
            f'<line x1="{ml}" y1="{y:.2f}" x2="{width - mr}" y2="{y:.2f}" '
            f'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{ml - 6}" y="{y + 4:.2f}" text-anchor="end">{value:.0f}</text>'
        )
    for sdg in range(1, 18):
        group_x = ml + (sdg - 1) * group_w
        for side_idx, table in enumerate(tables):
            rate = table.rates[sdg]
            bar_h = plot_h * rate / axis_max
            x = group_x + group_w * 0.12 + side_idx * bar_w
            y = mt + plot_h - bar_h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{bar_h:.2f}" '
                f'fill="{_BAR_COLORS[side_idx]}"><title>{table.side}: SDG {sdg} = '
                f"{rate:.2f}%</title></rect>"
            )
        parts.append(
            f'<text x="{group_x + group_w / 2:.2f}" y="{mt + plot_h + 16}" '
            f'text-anchor="middle">{sdg}</text>'
        )
    parts.append(
        f'<text x="{ml + plot_w / 2:.2f}" y="{height - 12}" text-anchor="middle">SDG</text>'
    )
    parts.append(
        f'<text x="16" y="{mt + plot_h / 2:.2f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {mt + plot_h / 2:.2f})">Detection rate (%)</text>'
    )
    legend_x = width - mr - 220
    for side_idx, table in enumerate(tables):
        y = 14 + side_idx * 16
        parts.append(
            f'<rect x="{legend_x}" y="{y - 10}" width="12" height="12" '
            f'fill="{_BAR_COLORS[side_idx]}"/>'
        )
        parts.append(f'<text x="{legend_x + 18}" y="{y}">{table.side}</text>')
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_ingest(args, config) -> int:
    corpus = load_corpus(args.infile, format=args.format)
    save_corpus(corpus, args.out)
    print(f"ingested {len(corpus)} documents -> {args.out}")
    return 0


def _cmd_filter(args, config) -> int:
    corpus = load_corpus(args.infile)
    min_tokens = int(_resolve(args, config, "min_tokens", 10))
    eligible, rejected = eligibility_filter(corpus, min_tokens, _prep_from(args, config))
    save_corpus(eligible, args.out_eligible)
    save_corpus(rejected, args.out_rejected)
    print(f"eligible: {len(eligible)}  rejected: {len(rejected)} (min_tokens={min_tokens})")
    return 0


def _cmd_split(args, config) -> int:
    corpus = load_corpus(args.infile)
    spec = SplitSpec(
        train_fraction=float(_resolve(args, config, "train_fraction", 0.70)),
        seed=int(_resolve(args, config, "seed", 0)),
        stratified=not args.no_stratified,
    )
    train, test = split_train_test(corpus, spec)
    save_corpus(train, args.out_train)
    save_corpus(test, args.out_test)
    print(f"train: {len(train)}  test: {len(test)} (seed={spec.seed})")
    return 0


def _cmd_taxo_search(args, config) -> int:
    corpus = load_corpus(args.infile)
    entries = load_taxonomy(args.taxonomy) if args.taxonomy else bundled_taxonomy()
    prep = _prep_from(args, config)
    if args.expand_embeddings:
        table = load_pretrained_embeddings(args.expand_embeddings)
        entries = [
            expand_terms(e, table, k=args.expand_k, min_sim=args.expand_min_sim, prep=prep)
            for e in entries
        ]
    sdgs = sorted({e.sdg for e in entries}) if args.sdg == "all" else [int(args.sdg)]
    index = build_index(corpus, prep)
    detections: dict[str, set[int]] = {doc.id: set() for doc in corpus.documents}
    for sdg in sdgs:
        query = compile_query(entries, sdg, include_expansions=True)
        for doc_id in search_index(index, query, prep):
            detections[doc_id].add(sdg)
    write_detections({i: SdgLabelSet(s) for i, s in detections.items()}, args.out)
    matched = sum(1 for s in detections.values() if s)
    print(f"searched {len(sdgs)} SDG queries over {len(corpus)} docs; {matched} matched -> {args.out}")
    return 0


def _sgns_from_args(args, seed: int) -> SgnsConfig:
    return SgnsConfig(
        dimension=args.sgns_dim,
        window=args.sgns_window,
        negatives=args.sgns_negatives,
        epochs=args.sgns_epochs,
        seed=seed,
        subsample=None if args.sgns_subsample == 0 else args.sgns_subsample,
    )


def _cmd_train(args, config) -> int:
    train = load_corpus(args.infile)
    seed = int(_resolve(args, config, "seed", 0))
    prep = _prep_from(args, config)
    spec = VectorizerSpec(
        kind=args.vectorizer,
        sgns=_sgns_from_args(args, seed) if args.vectorizer == "embedding_mean" else None,
    )
    vectorizer = fit_vectorizer(spec, train, prep)
    model = fit_classifier(
        train, args.method, vectorizer, seed=seed, prep=prep, vectorizer_id=spec.identifier
    )
    thresholds = DecisionThresholds(default=float(_resolve(args, config, "threshold", 0.5)))
    if args.tune_thresholds:
        validation = load_corpus(args.tune_thresholds)
        thresholds = tune_thresholds(model, validation)
    save_model(model, thresholds, args.out)
    print(
        f"trained {args.method} on {len(train)} docs "
        f"({spec.identifier}, classes={model.classes}) -> {args.out}"
    )
    return 0


def _cmd_evaluate(args, config) -> int:
    model, thresholds = load_model(args.model)
    test = load_corpus(args.infile)
    report = evaluate(model, test, thresholds)
    if args.out_json:
        emit_report(report, "json", args.out_json)
    if args.out_csv:
        emit_report(report, "csv", args.out_csv)
    print(
        f"evaluated {report.method} on {report.test_size} docs: "
        f"micro_f1={report.micro_f1:.4f} macro_f1={report.macro_f1:.4f} "
        f"accuracy={report.accuracy:.4f}"
    )
    return 0


def _cmd_compare_methods(args, config) -> int:
    corpus = load_corpus(args.infile)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    seed = int(_resolve(args, config, "seed", 0))
    specs = []
    for kind in [v.strip() for v in args.vectorizers.split(",") if v.strip()]:
        specs.append(
            VectorizerSpec(
                kind=kind,
                sgns=_sgns_from_args(args, seed) if kind == "embedding_mean" else None,
            )
        )
    split = SplitSpec(
        train_fraction=float(_resolve(args, config, "train_fraction", 0.70)),
        seed=seed,
        stratified=not args.no_stratified,
    )
    reports = compare_methods(corpus, methods, specs, split, prep=_prep_from(args, config))
    emit_report(reports, "csv", args.out)
    if args.out_json:
        emit_report(reports, "json", args.out_json)
    print(f"compared {len(reports)} method x vectorizer combinations -> {args.out}")
    for rank, r in enumerate(reports, start=1):
        print(f"  {rank}. {r.method} + {r.vectorizer_id}: macro_f1={r.macro_f1:.4f}")
    return 0


def _cmd_predict(args, config) -> int:
    model, thresholds = load_model(args.model)
    docs = load_corpus(args.infile)
    detections = {doc.id: predict_labels(model, thresholds, doc.text) for doc in docs.documents}
    write_detections(detections, args.out)
    detected = sum(1 for s in detections.values() if s)
    print(f"predicted {len(detections)} docs ({detected} with detections) -> {args.out}")
    return 0


def _cmd_llm_run(args, config) -> int:
    if args.protocol == "experiment2":
        if not args.names:
            raise UsageError("experiment2 needs --names FILE (one company name per line)")
        names = [
            line.strip()
            for line in Path(args.names).read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        inputs: object = names
    else:
        if not args.infile:
            raise UsageError(f"{args.protocol} needs --in CORPUS.jsonl")
        inputs = load_corpus(args.infile)

    model_name = _resolve(args, config, "model", "gpt-3.5-turbo")
    budget = None if args.token_budget == 0 else args.token_budget
    if args.protocol == "experiment1":
        spec = ProtocolSpec.experiment1(
            model_name=model_name, local_cleanup=args.local_cleanup, token_budget=budget
        )
    elif args.protocol == "experiment2":
        spec = ProtocolSpec.experiment2(model_name=model_name, token_budget=budget)
    else:
        if not args.examples or not args.tags:
            raise UsageError("fewshot_tag needs --examples CORPUS.jsonl and --tags N,N")
        examples_corpus = load_corpus(args.examples)
        spec = ProtocolSpec.fewshot_tag(
            examples=[(doc.text, doc.labels) for doc in examples_corpus.documents],
            tags=_parse_tags(args.tags),
            model_name=model_name,
            token_budget=budget,
        )

    cache = ExchangeCache(args.cache)
    if args.replay:
        transport: object = _ForbiddenTransport()
    else:
        transport = HttpTransport(
            endpoint=_resolve(args, config, "endpoint", "https://api.openai.com/v1/chat/completions")
        )
    rate = _resolve(args, config, "rate_limit", None)
    result = run_protocol(
        spec,
        inputs,
        transport,
        cache=cache,
        parallelism=int(_resolve(args, config, "parallelism", 4)),
        retries=int(_resolve(args, config, "retries", 5)),
        rate_limiter=TokenBucket(float(rate)) if rate else None,
        replay_only=args.replay,
    )
    if args.records:
        save_records(result.records, args.records)
    write_detections(result.detections(), args.out)
    print(
        f"{args.protocol}: {len(result.records)} records "
        f"({result.replayed} replayed, {result.sent_requests} requests sent) -> {args.out}"
    )
    if result.failures:
        for doc_id, message in result.failures:
            print(f"  FAILED {doc_id}: {message}", file=sys.stderr)
        print(f"{len(result.failures)} inputs failed", file=sys.stderr)
        return 3
    return 0


def _cmd_compare(args, config) -> int:
    side_a = read_detections(args.a)
    side_b = read_detections(args.b)
    records = make_records(side_a, side_b)
    report = overlap_report(records, label_a=args.label_a, label_b=args.label_b)
    if args.out_json:
        emit_report(report, "json", args.out_json)
    if args.out_csv:
        emit_report(report, "csv", args.out_csv)
    if args.include_empty:
        print(
            f"intersection (including empty): {report.intersection_including_empty} "
            f"of {report.total} ({report.intersection_including_empty_pct:.2f}%)"
        )
    else:
        print(
            f"intersection (detected only): {report.intersection_detected} "
            f"of {report.total} ({report.intersection_detected_pct:.2f}%)"
        )
    return 0


def _cmd_fewshot(args, config) -> int:
    truth = load_corpus(args.truth)
    if args.pred.endswith(".jsonl"):
        predictions = {r.doc_id: r.labels for r in load_records(args.pred)}
    else:
        predictions = read_detections(args.pred)
    report = fewshot_report(truth, predictions, _parse_tags(args.tags))
    if args.out_json:
        emit_report(report, "json", args.out_json)
    if args.out_csv:
        emit_report(report, "csv", args.out_csv)
    print(
        f"few-shot over {report.total_items} items: "
        f"{report.total_identifications} identifications, "
        f"as-expected {report.total_as_expected} ({report.total_as_expected_pct:.2f}%), "
        f"correct {report.total_correct} ({report.total_correct_pct:.2f}%), "
        f"avg per identified {report.avg_per_identified:.2f}"
    )
    return 0


def _cmd_report(args, config) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .analyze import DetectionRecord

    side_a = read_detections(args.a)
    tables = []
    if args.b:
        side_b = read_detections(args.b)
        records = make_records(side_a, side_b)
        tables.append(detection_rates(records, "a", label=args.label_a))
        tables.append(detection_rates(records, "b", label=args.label_b))
    else:
        records = [
            DetectionRecord(doc_id=i, side_a=side_a[i], side_b=SdgLabelSet())
            for i in sorted(side_a)
        ]
        tables.append(detection_rates(records, "a", label=args.label_a))
    for table in tables:
        emit_report(table, "csv", out_dir / f"rates_{table.side}.csv")
    emit_report(tables if len(tables) > 1 else tables[0], "json", out_dir / "detection_rates.json")
    if args.svg:
        emit_report(tables, "svg_bars", out_dir / "detection_rates.svg")
    for table in tables:
        print(f"{table.side}: top SDGs by rate: {table.top(3)}")
    print(f"wrote detection-rate outputs -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> _Parser:
    parser = _Parser(prog="sdgdetect", description=__doc__)
    parser.add_argument("--config", help="JSON config file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a corpus and write canonical JSONL")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("filter", help="partition a corpus by the eligibility rule")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--min-tokens", dest="min_tokens", type=int)
    p.add_argument("--stopwords")
    p.add_argument("--out-eligible", required=True)
    p.add_argument("--out-rejected", required=True)
    p.set_defaults(func=_cmd_filter)

    p = sub.add_parser("split", help="seeded train/test split")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-stratified", action="store_true")
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("taxo-search", help="boolean SDG-query search over a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--taxonomy", help="CSV with columns sdg,term (default: bundled)")
    p.add_argument("--sdg", default="all", help="an SDG number or 'all'")
    p.add_argument("--expand-embeddings", help="word2vec text file for term expansion")
    p.add_argument("--expand-k", type=int, default=5)
    p.add_argument("--expand-min-sim", type=float, default=0.5)
    p.add_argument("--stopwords")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_taxo_search)

    def add_sgns_flags(q):
        q.add_argument("--sgns-dim", type=int, default=100)
        q.add_argument("--sgns-window", type=int, default=5)
        q.add_argument("--sgns-negatives", type=int, default=5)
        q.add_argument("--sgns-epochs", type=int, default=5)
        q.add_argument("--sgns-subsample", type=float, default=1e-3, help="0 disables")

    p = sub.add_parser("train", help="fit a vectorizer + classifier bundle")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument(
        "--method",
        choices=("logistic_regression", "multinomial_nb", "linear_svm"),
        default="logistic_regression",
    )
    p.add_argument("--vectorizer", choices=("tfidf", "embedding_mean"), default="tfidf")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--tune-thresholds", help="validation corpus for threshold tuning")
    p.add_argument("--stopwords")
    add_sgns_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a model bundle on a labeled corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("compare-methods", help="rank method x vectorizer combinations")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--methods", default="logistic_regression,multinomial_nb,linear_svm")
    p.add_argument("--vectorizers", default="tfidf,embedding_mean")
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-stratified", action="store_true")
    p.add_argument("--stopwords")
    add_sgns_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--out-json")
    p.set_defaults(func=_cmd_compare_methods)

    p = sub.add_parser("predict", help="predict label sets for documents")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("llm-run", help="run a prompt protocol (cached, replayable)")
    p.add_argument(
        "--protocol", choices=("experiment1", "experiment2", "fewshot_tag"), required=True
    )
    p.add_argument("--in", dest="infile", help="corpus JSONL (experiment1 / fewshot_tag)")
    p.add_argument("--names", help="company-name list, one per line (experiment2)")
    p.add_argument("--cache", required=True, help="append-only JSONL exchange cache")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--retries", type=int)
    p.add_argument("--rate-limit", dest="rate_limit", type=float, help="requests per second")
    p.add_argument("--replay", action="store_true", help="serve everything from cache, no network")
    p.add_argument("--local-cleanup", action="store_true",
                   help="experiment1: strip 'however' locally instead of the second call")
    p.add_argument("--examples", help="fewshot_tag: labeled example corpus JSONL")
    p.add_argument("--tags", help="fewshot_tag: allowed tags, e.g. 2,7")
    p.add_argument("--token-budget", type=int, default=4096, help="0 disables the check")
    p.add_argument("--records", help="also write full records JSONL here")
    p.add_argument("--out", required=True, help="detections CSV")
    p.set_defaults(func=_cmd_llm_run)

    p = sub.add_parser("compare", help="overlap report between two detection CSVs")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--label-a", default="A")
    p.add_argument("--label-b", default="B")
    p.add_argument("--include-empty", action="store_true",
                   help="headline the intersection that counts two empty sets as agreement")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("fewshot", help="few-shot identification report")
    p.add_argument("--truth", required=True, help="single-label truth corpus JSONL")
    p.add_argument("--pred", required=True, help="records JSONL or detections CSV")
    p.add_argument("--tags", required=True, help="allowed tags, e.g. 2,7")
    p.add_argument("--out-json")
    p.add_argument("--out-csv")
    p.set_defaults(func=_cmd_fewshot)

    p = sub.add_parser("report", help="per-SDG detection rates (CSV/JSON/SVG)")
    p.add_argument("--a", required=True)
    p.add_argument("--b")
    p.add_argument("--label-a", default="A")
    p.add_argument("--label-b", default="B")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args.config)
        return args.func(args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return 2
    except LlmError as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return 3
    except (
        CorpusFormatError,
        TaxonomyError,
        ContainerError,
        ValueError,
        KeyError,
        TypeError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:  # pragma: no cover - console-script shim
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":  # pragma: no cover
    entrypoint()
