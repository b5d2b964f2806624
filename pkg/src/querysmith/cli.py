"""Command-line entry point: index building, one-shot scoring, query
optimization runs, experiment reproduction, bulk collection, and serving
the session API.

Machine-readable output goes to stdout only; every diagnostic goes to
stderr. Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from .embeddings import DEFAULT_MAX_TOKENS, EmbeddingFormatError, load_embeddings
from .harness import (
    FeedbackParams,
    MODE_IQS_LOOP,
    MODE_MRE_RANK,
    MetricRecord,
    aggregate_record,
    iqs_feedback_experiment,
    load_qrels,
    load_topics,
    mre_feedback_experiment,
    write_curves_csv,
    write_metrics_csv,
    write_metrics_jsonl,
)
from .optimizer import IqsParams, QueryQueue, collect, iqs_run
from .relevance import CorpusStats, Measure, rank_by_re
from .search import (
    AdapterError,
    CorpusError,
    HttpSearchEngine,
    IndexEngine,
    TransportError,
    build_index,
    read_corpus,
)
from .textprep import (
    EmptyPrototypeError,
    TokenizerConfig,
    build_prototype,
    load_stopwords,
    load_synonym_lexicon,
    load_wordclass_lexicon,
)

log = logging.getLogger(__name__)

PRESETS = {
    "collect": {"minq": 3, "maxq": 6, "num_queries": 5, "cap": 500},
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CliError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(exc.code)
        except (EmbeddingFormatError, CorpusError, EmptyPrototypeError, ValueError) as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1)
        except (TransportError, AdapterError) as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(2)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(2)
    return wrapper


def _require_file(path: str | None, flag: str) -> Path:
    if path is None:
        raise CliError(1, f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise CliError(1, f"{flag}: file not found: {p}")
    return p


def _emit(obj) -> None:
    click.echo(json.dumps(obj, sort_keys=True))


def _tokenizer_config(stopwords: str | None, wordclass_file: str | None, max_ngram: int) -> TokenizerConfig:
    kwargs = {"entity_max_ngram": max_ngram}
    if stopwords is not None:
        kwargs["stopwords"] = load_stopwords(_require_file(stopwords, "--stopwords"))
    if wordclass_file is not None:
        kwargs["wordclass_lexicon"] = load_wordclass_lexicon(_require_file(wordclass_file, "--wordclass-file"))
    return TokenizerConfig(**kwargs)


def _resolve_params(preset, itr, runs, minq, maxq, rlimit, num_queries, seed) -> IqsParams:
    chosen = PRESETS.get(preset, {}) if preset else {}

    def pick(flag_value, name, default):
        if flag_value is not None:
            return flag_value
        return chosen.get(name, default)

    return IqsParams(
        itr=pick(itr, "itr", 15),
        runs=pick(runs, "runs", 3),
        minq=pick(minq, "minq", 1),
        maxq=pick(maxq, "maxq", 6),
        rlimit=pick(rlimit, "rlimit", 20),
        num_queries=pick(num_queries, "num_queries", 40),
        seed=seed,
    )


def _build_prototype_from_file(path: Path, config, store, expansions, synonyms_file, knn_k):
    text = path.read_text(encoding="utf-8").strip()
    lexicon = None
    if "synonyms" in expansions:
        lexicon = load_synonym_lexicon(_require_file(synonyms_file, "--synonyms-file"))
    return build_prototype(
        text, config, store,
        expansions=expansions, synonym_lexicon=lexicon, knn_k=knn_k,
    )


def _check_engine_health(trace) -> None:
    # iqs_run skips failed retrievals; zero successful calls means the
    # engine never answered, which the CLI surfaces as a runtime failure.
    if trace.engine_calls == 0:
        errors = [r.error for r in trace.records if r.error]
        detail = errors[0] if errors else "no retrievals were made"
        raise TransportError(f"engine unreachable: {detail}")


def _best_evaluated(trace):
    # The queue holds strictly improving proposals only; when an initial
    # query is already optimal nothing enters it, so the best query ever
    # evaluated is worth reporting (and collecting with) separately.
    evaluated = [(r.mre, tuple(sorted(r.query))) for r in trace.records if r.mre is not None]
    if not evaluated:
        return None
    mre, terms = min(evaluated)
    return terms, mre


def _make_engine(corpus, endpoint, config, store, min_delay):
    if (corpus is None) == (endpoint is None):
        raise CliError(1, "exactly one of --corpus or --endpoint is required")
    if corpus is not None:
        docs = read_corpus(_require_file(corpus, "--corpus"), config, store)
        return IndexEngine(build_index(docs, config, store)), docs
    if "{query}" not in endpoint:
        raise CliError(1, "--endpoint must contain a {query} slot")
    return HttpSearchEngine(endpoint, config, store, min_delay=min_delay), None


def _embeddings_options(fn):
    fn = click.option("--embeddings", "embeddings_path", help="Word-vector text file.")(fn)
    fn = click.option("--max-tokens", default=DEFAULT_MAX_TOKENS, show_default=True,
                      help="Load at most this many vocabulary entries.")(fn)
    fn = click.option("--stopwords", default=None, help="Stopword file (one token per line).")(fn)
    fn = click.option("--wordclass-file", default=None,
                      help="Word-class lexicon (word<TAB>class); filters prototype words.")(fn)
    fn = click.option("--entity-max-ngram", default=3, show_default=True,
                      help="Longest multi-word entity to collapse.")(fn)
    return fn


def _params_options(fn):
    fn = click.option("--itr", type=int, default=None, help="Iterations per restart [default: 15].")(fn)
    fn = click.option("--runs", type=int, default=None, help="Independent restarts [default: 3].")(fn)
    fn = click.option("--minq", type=int, default=None, help="Minimum query size [default: 1].")(fn)
    fn = click.option("--maxq", type=int, default=None, help="Maximum query size [default: 6].")(fn)
    fn = click.option("--rlimit", type=int, default=None, help="Results per engine call [default: 20].")(fn)
    fn = click.option("--num-queries", type=int, default=None, help="Queue capacity [default: 40].")(fn)
    fn = click.option("--seed", type=int, default=None, help="RNG seed (fixes the whole run).")(fn)
    fn = click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None,
                      help="Named parameter profile; explicit flags override it.")(fn)
    return fn


def _expansion_options(fn):
    fn = click.option("--expand", "expansions", multiple=True, type=click.Choice(["synonyms", "knn"]),
                      help="Vocabulary expansion(s) to apply to the prototype.")(fn)
    fn = click.option("--synonyms-file", default=None, help="Synonym lexicon (word<TAB>syn1,syn2,...).")(fn)
    fn = click.option("--knn-k", default=3, show_default=True, help="Neighbours per word for knn expansion.")(fn)
    return fn


def _load_store(embeddings_path, max_tokens):
    return load_embeddings(_require_file(embeddings_path, "--embeddings"), max_tokens)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Verbose diagnostics on stderr.")
def cli(verbose: bool) -> None:
    """Keyword-query optimization against opaque boolean search engines."""
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option("--corpus", required=False, help="Corpus JSONL ({id, text, timestamp?}).")
@_embeddings_options
@click.option("--out-report", default=None, help="Also write the report JSON to this path.")
@_guarded
def index(corpus, embeddings_path, max_tokens, stopwords, wordclass_file, entity_max_ngram, out_report):
    """Build the boolean index once and report its shape."""
    config = _tokenizer_config(stopwords, wordclass_file, entity_max_ngram)
    store = _load_store(embeddings_path, max_tokens)
    docs = read_corpus(_require_file(corpus, "--corpus"), config, store)
    idx = build_index(docs, config, store)
    report = {
        "doc_count": idx.doc_count,
        "distinct_terms": len(idx.postings),
        "postings": sum(len(p) for p in idx.postings.values()),
        "store_tokens": store.token_count,
    }
    if out_report:
        Path(out_report).write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")
    _emit(report)


@cli.command()
@click.option("--prototype-file", required=False, help="Text file holding the prototype document.")
@click.option("--results-file", required=False, help="JSONL of result docs to score.")
@click.option("--measure", type=click.Choice([m.value for m in Measure]), default="re", show_default=True)
@_embeddings_options
@_expansion_options
@_guarded
def score(prototype_file, results_file, measure, embeddings_path, max_tokens, stopwords,
          wordclass_file, entity_max_ngram, expansions, synonyms_file, knn_k):
    """Score a result file against a prototype with one measure."""
    config = _tokenizer_config(stopwords, wordclass_file, entity_max_ngram)
    store = _load_store(embeddings_path, max_tokens)
    prototype = _build_prototype_from_file(
        _require_file(prototype_file, "--prototype-file"), config, store, expansions, synonyms_file, knn_k
    )
    docs = read_corpus(_require_file(results_file, "--results-file"), config, store)
    m = Measure(measure)
    if m is Measure.RE:
        ranked = rank_by_re(docs, prototype, store)
        results = [{"doc_id": s.doc.id, "score": s.score} for s in ranked]
        payload = {
            "measure": m.value,
            "prototype_words": list(prototype.words),
            "results": results,
            "mre": (sum(s.score for s in ranked) / len(ranked)) if ranked else 2.0,
        }
    else:
        from .harness import scorer_for

        stats = CorpusStats.from_docs(docs, config) if m in (Measure.TFIDF, Measure.BM25) else None
        score_fn, ascending = scorer_for(m, store, stats)
        scored = sorted(
            ((score_fn(d, prototype), d) for d in docs),
            key=lambda pair: (pair[0] if ascending else -pair[0], pair[1].id),
        )
        payload = {
            "measure": m.value,
            "prototype_words": list(prototype.words),
            "results": [{"doc_id": d.id, "score": s} for s, d in scored],
        }
    _emit(payload)


@cli.command()
@click.option("--prototype-file", required=False, help="Text file holding the prototype document.")
@click.option("--corpus", default=None, help="Local corpus JSONL to search (simulated engine).")
@click.option("--endpoint", default=None, help="Remote GET template with {query}/{limit} slots.")
@click.option("--min-delay", default=1.0, show_default=True, help="Seconds between remote requests.")
@_embeddings_options
@_expansion_options
@_params_options
@_guarded
def iqs(prototype_file, corpus, endpoint, min_delay, embeddings_path, max_tokens, stopwords,
        wordclass_file, entity_max_ngram, expansions, synonyms_file, knn_k,
        itr, runs, minq, maxq, rlimit, num_queries, seed, preset):
    """Optimize keyword queries for a prototype document."""
    config = _tokenizer_config(stopwords, wordclass_file, entity_max_ngram)
    store = _load_store(embeddings_path, max_tokens)
    params = _resolve_params(preset, itr, runs, minq, maxq, rlimit, num_queries, seed)
    prototype = _build_prototype_from_file(
        _require_file(prototype_file, "--prototype-file"), config, store, expansions, synonyms_file, knn_k
    )
    engine, _docs = _make_engine(corpus, endpoint, config, store, min_delay)
    queue, trace = iqs_run(prototype, engine, params, store)
    _check_engine_health(trace)
    entries = queue.snapshot()
    best_eval = _best_evaluated(trace)
    click.echo(f"{'MRE':>10}  QUERY", err=True)
    for terms, mre in entries:
        click.echo(f"{mre:>10.4f}  {' '.join(terms)}", err=True)
    if not entries and best_eval is not None:
        click.echo(
            f"no strictly improving query found; best evaluated: "
            f"{' '.join(best_eval[0])} (MRE {best_eval[1]:.4f})",
            err=True,
        )
    click.echo(f"engine calls: {trace.engine_calls}", err=True)
    _emit({
        "queries": [{"terms": list(terms), "mre": mre} for terms, mre in entries],
        "best_evaluated": (
            {"terms": list(best_eval[0]), "mre": best_eval[1]} if best_eval else None
        ),
        "engine_calls": trace.engine_calls,
        "vocabulary": sorted(prototype.candidate_vocab),
    })


@cli.command()
@click.option("--topics", "topics_path", required=False, help="Topics JSONL ({id, query, narrative?}).")
@click.option("--qrels", "qrels_path", required=False, help="TREC qrels file.")
@click.option("--corpus", required=False, help="Corpus JSONL with the judged documents' texts.")
@click.option("--mode", type=click.Choice([MODE_MRE_RANK, MODE_IQS_LOOP]), default=MODE_MRE_RANK,
              show_default=True)
@click.option("--measure", type=click.Choice([m.value for m in Measure]), default="re",
              show_default=True, help="Scoring measure (mre_rank mode).")
@click.option("--label-budget", default=300, show_default=True)
@click.option("--batch-size", default=10, show_default=True)
@click.option("--out", "out_path", required=False, help="Metric records JSONL output path.")
@click.option("--csv", "csv_path", default=None, help="CSV mirror of the metric records.")
@click.option("--curves", "curves_path", default=None, help="Per-round curve data CSV.")
@click.option("--jobs", default=1, show_default=True, help="Topics processed in parallel.")
@_embeddings_options
@_expansion_options
@_params_options
@_guarded
def feedback(topics_path, qrels_path, corpus, mode, measure, label_budget, batch_size,
             out_path, csv_path, curves_path, jobs, embeddings_path, max_tokens, stopwords,
             wordclass_file, entity_max_ngram, expansions, synonyms_file, knn_k,
             itr, runs, minq, maxq, rlimit, num_queries, seed, preset):
    """Reproduce the relevance-feedback experiments over a judged dataset."""
    config = _tokenizer_config(stopwords, wordclass_file, entity_max_ngram)
    store = _load_store(embeddings_path, max_tokens)
    topics = load_topics(_require_file(topics_path, "--topics"))
    qrels = load_qrels(_require_file(qrels_path, "--qrels"))
    docs = read_corpus(_require_file(corpus, "--corpus"), config, store)
    docs_by_id = {d.id: d for d in docs}
    iqs_params = _resolve_params(preset, itr, runs, minq, maxq, rlimit, num_queries, seed)
    lexicon = None
    if "synonyms" in expansions:
        lexicon = load_synonym_lexicon(_require_file(synonyms_file, "--synonyms-file"))
    fb_params = FeedbackParams(
        label_budget=label_budget, batch_size=batch_size,
        expansions=frozenset(expansions), synonym_lexicon=lexicon, knn_k=knn_k,
    )
    if out_path is None:
        raise CliError(1, "--out is required")
    m = Measure(measure)
    engine = IndexEngine(build_index(docs, config, store)) if mode == MODE_IQS_LOOP else None

    def run_topic(topic) -> MetricRecord | None:
        if mode == MODE_MRE_RANK:
            pool = [docs_by_id[i] for i in sorted(qrels.judged_ids(topic.id)) if i in docs_by_id]
            return mre_feedback_experiment(topic, qrels, pool, m, fb_params, store, config)
        return iqs_feedback_experiment(topic, qrels, engine, iqs_params, fb_params, store, config)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool_exec:
            results = list(pool_exec.map(run_topic, topics))
    else:
        results = [run_topic(t) for t in topics]
    records = []
    for topic, record in zip(topics, results):
        if record is None:
            click.echo(f"warning: topic {topic.id} skipped (no relevant judgments or unusable query)",
                       err=True)
        else:
            records.append(record)
    if not records:
        raise CliError(1, "no topic produced a metric record")
    measure_name = records[0].measure
    all_records = records + [aggregate_record(records, measure_name)]
    write_metrics_jsonl(all_records, out_path)
    if csv_path:
        write_metrics_csv(all_records, csv_path)
    if curves_path:
        write_curves_csv(records, curves_path)
    summary = aggregate_record(records, measure_name)
    _emit({
        "topics": len(records),
        "measure": measure_name,
        "map": summary.map,
        "r_precision": summary.r_precision,
        "labels_used": summary.labels_used,
        "out": str(out_path),
    })


@cli.command("collect")
@click.option("--prototype-file", default=None, help="Single prototype text file.")
@click.option("--prototypes", default=None, help="JSONL of prototypes ({id, text}).")
@click.option("--corpus", default=None, help="Local corpus JSONL to search (simulated engine).")
@click.option("--endpoint", default=None, help="Remote GET template with {query}/{limit} slots.")
@click.option("--min-delay", default=1.0, show_default=True, help="Seconds between remote requests.")
@click.option("--cap", type=int, default=None, help="Per-query result cap [default: 500].")
@click.option("--out", "out_path", required=False, help="Deduplicated docs JSONL output path.")
@_embeddings_options
@_expansion_options
@_params_options
@_guarded
def collect_cmd(prototype_file, prototypes, corpus, endpoint, min_delay, cap, out_path,
                embeddings_path, max_tokens, stopwords, wordclass_file, entity_max_ngram,
                expansions, synonyms_file, knn_k,
                itr, runs, minq, maxq, rlimit, num_queries, seed, preset):
    """Bulk collection: optimize queries per prototype, then gather and
    deduplicate everything they retrieve."""
    config = _tokenizer_config(stopwords, wordclass_file, entity_max_ngram)
    store = _load_store(embeddings_path, max_tokens)
    params = _resolve_params(preset, itr, runs, minq, maxq, rlimit, num_queries, seed)
    if cap is None:
        cap = PRESETS.get(preset, {}).get("cap", 500) if preset else 500
    if out_path is None:
        raise CliError(1, "--out is required")
    if (prototype_file is None) == (prototypes is None):
        raise CliError(1, "exactly one of --prototype-file or --prototypes is required")
    engine, _docs = _make_engine(corpus, endpoint, config, store, min_delay)

    lexicon = None
    if "synonyms" in expansions:
        lexicon = load_synonym_lexicon(_require_file(synonyms_file, "--synonyms-file"))

    prototypes_list: list[tuple[str, str]] = []
    if prototype_file is not None:
        text = _require_file(prototype_file, "--prototype-file").read_text(encoding="utf-8").strip()
        prototypes_list.append(("prototype", text))
    else:
        path = _require_file(prototypes, "--prototypes")
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CliError(1, f"{path}: line {lineno}: invalid JSON: {exc}")
                if "text" not in record:
                    raise CliError(1, f"{path}: line {lineno}: expected a 'text' field")
                prototypes_list.append((str(record.get("id", lineno)), str(record["text"])))

    total_docs = 0
    queries_out = []
    with Path(out_path).open("w", encoding="utf-8") as out_fh:
        for proto_id, text in prototypes_list:
            try:
                prototype = build_prototype(
                    text, config, store,
                    expansions=expansions, synonym_lexicon=lexicon, knn_k=knn_k,
                )
            except EmptyPrototypeError:
                click.echo(f"warning: prototype {proto_id} skipped (no usable words)", err=True)
                continue
            queue, trace = iqs_run(prototype, engine, params, store)
            _check_engine_health(trace)
            if len(queue) == 0:
                best_eval = _best_evaluated(trace)
                if best_eval is None:
                    click.echo(f"warning: prototype {proto_id}: nothing evaluated", err=True)
                    continue
                click.echo(
                    f"warning: prototype {proto_id}: no strictly improving query; "
                    f"collecting with the best evaluated query",
                    err=True,
                )
                queue = QueryQueue(1)
                queue.add(frozenset(best_eval[0]), best_eval[1])
            docs = collect(queue, engine, cap)
            for doc in docs:
                record = {"prototype_id": proto_id, "id": doc.id, "text": doc.text}
                if doc.timestamp is not None:
                    record["timestamp"] = doc.timestamp
                out_fh.write(json.dumps(record, sort_keys=True) + "\n")
            total_docs += len(docs)
            queries_out.append({
                "prototype_id": proto_id,
                "queries": [{"terms": list(t), "mre": mre} for t, mre in queue.snapshot()],
                "docs": len(docs),
            })
    _emit({"prototypes": len(queries_out), "docs": total_docs, "out": str(out_path),
           "results": queries_out})


@cli.command()
@click.option("--bind", default="127.0.0.1", show_default=True, help="Bind address.")
@click.option("--port", default=8000, show_default=True, help="Bind port.")
@click.option("--corpus", required=False, help="Corpus JSONL backing the default engine.")
@click.option("--endpoint", default=None, help="Remote GET template backing the default engine.")
@click.option("--min-delay", default=1.0, show_default=True)
@click.option("--sessions-dir", default="sessions", show_default=True,
              help="Directory for session event logs.")
@click.option("--topics", "topics_path", default=None, help="Optional topics JSONL for topic refs.")
@_embeddings_options
@_guarded
def serve(bind, port, corpus, endpoint, min_delay, sessions_dir, topics_path,
          embeddings_path, max_tokens, stopwords, wordclass_file, entity_max_ngram):
    """Serve the labeling session API over HTTP."""
    import uvicorn

    from .service import ServiceRuntime, create_app

    config = _tokenizer_config(stopwords, wordclass_file, entity_max_ngram)
    store = _load_store(embeddings_path, max_tokens)
    engine, _docs = _make_engine(corpus, endpoint, config, store, min_delay)
    topics = {}
    if topics_path:
        topics = {t.id: t for t in load_topics(_require_file(topics_path, "--topics"))}
    runtime = ServiceRuntime(
        store=store, config=config, engines={"default": engine},
        sessions_dir=Path(sessions_dir), topics=topics,
    )
    app = create_app(runtime)
    click.echo(f"serving on http://{bind}:{port}", err=True)
    uvicorn.run(app, host=bind, port=port, log_level="warning")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
