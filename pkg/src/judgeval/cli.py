"""Command-line entry points.

``judgeval run`` drives the whole experiment from a config file; the other
subcommands run one stage in isolation over explicit input/output paths so
any report can be reproduced or debugged on its own.

Exit codes: 0 success, 1 fatal stage error, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .agreement import agreement_report
from .config import ExperimentConfig, load_config
from .cost import DEFAULT_PRICES, extrapolate, load_price_table, price_for, tally_observed
from .effectiveness import average_precision, ndcg_at_k
from .errors import ConfigError, JudgevalError
from .gateway import ResponseCache
from .judge import JudgingTask, binarize, judge_pool, load_judge_template, load_topics
from .pipeline import make_gateway, run_pipeline
from .stability import SystemScores, stability_report
from .summarizer import load_summary_template, read_summaries, summarize_corpus, write_summaries
from .trec_io import Modality, load_corpus, load_runs_dir, parse_qrels, write_judgments


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except JudgevalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="judgeval",
        description="LLM relevance judging workbench: summaries, judgments, and reports.",
    )
    parser.add_argument("--version", action="version", version=f"judgeval {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the full pipeline from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, help="override the configured seed")
    run.add_argument("--model", help="restrict to one configured model")
    run.add_argument(
        "--modality", help="restrict to one modality (full | summ:80 | summ:120)"
    )
    run.add_argument("--mock", action="store_true", help="force the mock backend")
    run.add_argument("--out", help="override the configured output directory")
    run.add_argument("--force", action="store_true", help="rerun all stages")
    run.set_defaults(handler=_cmd_run)

    summ = sub.add_parser("summarize", help="summarize a corpus at one budget")
    summ.add_argument("--config", required=True)
    summ.add_argument("--budget", type=int, required=True)
    summ.add_argument("--out", required=True)
    summ.add_argument("--seed", type=int)
    summ.add_argument("--mock", action="store_true")
    summ.set_defaults(handler=_cmd_summarize)

    judge = sub.add_parser("judge", help="judge one model x modality cell")
    judge.add_argument("--config", required=True)
    judge.add_argument("--model", required=True)
    judge.add_argument("--modality", required=True)
    judge.add_argument(
        "--summaries", help="summaries JSONL (required for summary modalities)"
    )
    judge.add_argument("--out", required=True)
    judge.add_argument("--seed", type=int)
    judge.add_argument("--mock", action="store_true")
    judge.set_defaults(handler=_cmd_judge)

    agree = sub.add_parser("agreement", help="agreement between two qrels files")
    agree.add_argument("--qrels-a", required=True, help="reference judgments")
    agree.add_argument("--qrels-b", required=True, help="candidate judgments")
    agree.add_argument("--threshold", type=int, default=1)
    agree.add_argument("--dataset", default="-")
    agree.add_argument("--out")
    agree.set_defaults(handler=_cmd_agreement)

    eff = sub.add_parser("effectiveness", help="evaluate runs under a qrels file")
    eff.add_argument("--qrels", required=True)
    eff.add_argument("--runs-dir", required=True)
    eff.add_argument("--k", type=int, default=10)
    eff.add_argument("--gain", choices=("linear", "exponential"), default="linear")
    eff.add_argument("--threshold", type=int, default=1)
    eff.add_argument("--out")
    eff.add_argument("--per-topic-out")
    eff.set_defaults(handler=_cmd_effectiveness)

    stab = sub.add_parser("stability", help="ranking stability between two score tables")
    stab.add_argument("--per-topic-h", required=True, help="per-topic CSV, human side")
    stab.add_argument("--per-topic-l", required=True, help="per-topic CSV, LLM side")
    stab.add_argument("--metric", required=True)
    stab.add_argument("--rbo-p", type=float, default=0.9)
    stab.add_argument("--resamples", type=int, default=2000)
    stab.add_argument("--seed", type=int, default=0)
    stab.add_argument("--dataset", default="-")
    stab.add_argument("--model", default="-")
    stab.add_argument("--modality", default="-")
    stab.add_argument("--out")
    stab.set_defaults(handler=_cmd_stability)

    cost = sub.add_parser("cost", help="token/cost tally or extrapolation")
    cost.add_argument("--cache", help="response cache JSONL to tally")
    cost.add_argument("--usage", help="usage JSON restricting the tally to one stage")
    cost.add_argument("--stage", default="judgment")
    cost.add_argument("--modality", default="full")
    cost.add_argument("--dataset", default="-")
    cost.add_argument("--prices", help="price table JSON")
    cost.add_argument("--extrapolate", action="store_true")
    cost.add_argument("--pairs", type=int)
    cost.add_argument("--avg-tokens", type=float)
    cost.add_argument("--overhead", type=float, default=0.0)
    cost.add_argument("--model", default="gpt-4o")
    cost.add_argument("--out")
    cost.set_defaults(handler=_cmd_cost)

    return parser


def _load_config_with_overrides(args) -> ExperimentConfig:
    config = load_config(args.config)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "mock", False):
        updates["backend"] = "mock"
    if args.command == "run":
        # run executes the configured grid; filters narrow it, other
        # subcommands take their model/modality/paths verbatim
        if args.model:
            if args.model not in config.models:
                raise ConfigError(f"model {args.model!r} is not configured")
            updates["models"] = [args.model]
        if args.modality:
            modality = Modality.parse(args.modality)
            if str(modality) not in {str(m) for m in config.modalities}:
                raise ConfigError(f"modality {args.modality!r} is not configured")
            updates["modalities"] = [modality]
        if args.out:
            updates["output_dir"] = Path(args.out)
    return replace(config, **updates) if updates else config


def _emit(text: str, out: str | None) -> None:
    if out:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> int:
    config = _load_config_with_overrides(args)
    result = run_pipeline(config, force=args.force)
    for outcome in result.outcomes:
        print(f"{outcome.status:>7}  {outcome.name}")
    print(
        f"done: {len(result.stages_run())} stages ran, "
        f"{len(result.stages_skipped())} skipped, "
        f"{result.backend_calls} backend calls ({result.cache_hits} cache hits)"
    )
    print(f"manifest: {result.manifest_path}")
    return 0


def _cmd_summarize(args) -> int:
    config = _load_config_with_overrides(args)
    gateway = make_gateway(config)
    corpus = load_corpus(config.corpus)
    template = load_summary_template(config.summary_template)
    summaries = summarize_corpus(
        corpus,
        args.budget,
        gateway,
        config.summarizer_model,
        template=template,
        slack=config.summary_slack,
    )
    write_summaries(summaries, args.out)
    print(f"{len(summaries)} summaries -> {args.out} ({len(summaries.errors)} errors)")
    return 0


def _cmd_judge(args) -> int:
    config = _load_config_with_overrides(args)
    modality = Modality.parse(args.modality)
    gateway = make_gateway(config)
    corpus = load_corpus(config.corpus)
    topics = load_topics(config.topics)
    human = parse_qrels(config.qrels)
    template = load_judge_template(config.judge_template)
    summaries = None
    if modality.kind == "summary":
        if not args.summaries:
            raise ConfigError("summary modalities need --summaries")
        summaries = read_summaries(args.summaries)
        if summaries.budget_tokens != modality.budget_tokens:
            raise ConfigError(
                f"summaries budget {summaries.budget_tokens} does not match {modality}"
            )
    tasks = []
    skipped = 0
    for topic_id, doc_id in sorted(human.grades.keys()):
        topic = topics.get(topic_id)
        if topic is None:
            skipped += 1
            continue
        if modality.kind == "full":
            entry = corpus.entries.get(doc_id)
            if entry is None:
                skipped += 1
                continue
            evidence = entry.text
        else:
            record = summaries.records.get(doc_id)
            if record is None:
                skipped += 1
                continue
            evidence = record.text
        tasks.append(JudgingTask(topic, doc_id, evidence, modality))
    result = judge_pool(
        tasks,
        gateway,
        args.model,
        template=template,
        max_output_tokens=config.judge_max_output_tokens,
    )
    write_judgments(result.judgments, args.out, created_at=gateway.now())
    print(
        f"{len(result.judgments)} judgments -> {args.out} "
        f"({len(result.failures)} failed, {skipped} pairs skipped)"
    )
    return 0


def _cmd_agreement(args) -> int:
    a = parse_qrels(args.qrels_a)
    b = parse_qrels(args.qrels_b)
    graded = agreement_report(a, b, graded=True)
    binary = agreement_report(
        binarize(a, args.threshold), binarize(b, args.threshold), graded=False
    )
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["model", "modality", "dataset", "metric", "value", "n_items", "n_missing", "flags"]
    )
    label = b.source.label()
    modality = str(b.modality)
    rows = [
        ("kappa_graded", graded.kappa, graded),
        ("weighted_kappa_quadratic", graded.weighted_kappa, graded),
        ("alpha_ordinal", graded.alpha, graded),
        (f"kappa_binary_t{args.threshold}", binary.kappa, binary),
        (f"alpha_nominal_binary_t{args.threshold}", binary.alpha, binary),
    ]
    for metric_name, stat, report in rows:
        writer.writerow(
            [
                label,
                modality,
                args.dataset,
                metric_name,
                f"{stat.value:.6f}",
                report.n_items,
                report.n_missing,
                "degenerate" if stat.degenerate else "",
            ]
        )
    _emit(buffer.getvalue(), args.out)
    return 0


def _cmd_effectiveness(args) -> int:
    qrels = parse_qrels(args.qrels)
    runs = load_runs_dir(args.runs_dir)
    binary = binarize(qrels, args.threshold)
    rows = []
    for run in runs:
        rows.append(ndcg_at_k(run, qrels, k=args.k, gain=args.gain))
        rows.append(average_precision(run, binary))
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["run_tag", "metric", "qrels_source", "modality", "mean", "topics_evaluated"]
    )
    for row in rows:
        writer.writerow(
            [
                row.run_tag,
                row.metric,
                row.qrels_source,
                row.modality,
                f"{row.mean:.6f}",
                row.topics_evaluated,
            ]
        )
    _emit(buffer.getvalue(), args.out)
    if args.per_topic_out:
        topic_buf = io.StringIO()
        topic_writer = csv.writer(topic_buf, lineterminator="\n")
        topic_writer.writerow(
            ["run_tag", "metric", "qrels_source", "modality", "topic_id", "value"]
        )
        for row in rows:
            for topic_id in sorted(row.per_topic):
                topic_writer.writerow(
                    [
                        row.run_tag,
                        row.metric,
                        row.qrels_source,
                        row.modality,
                        topic_id,
                        f"{row.per_topic[topic_id]:.6f}",
                    ]
                )
        _emit(topic_buf.getvalue(), args.per_topic_out)
    return 0


def _read_per_topic_csv(path: str, metric: str) -> SystemScores:
    per_topic: dict[str, dict[str, float]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            if row["metric"] != metric:
                continue
            per_topic.setdefault(row["run_tag"], {})[row["topic_id"]] = float(row["value"])
    if not per_topic:
        raise ConfigError(f"no rows for metric {metric!r} in {path}")
    shared = set.intersection(*(set(t) for t in per_topic.values()))
    topics = tuple(sorted(shared))
    per_system = {
        tag: (sum(scores[t] for t in topics) / len(topics)) if topics else 0.0
        for tag, scores in per_topic.items()
    }
    return SystemScores(
        metric=metric, per_topic=per_topic, topics=topics, per_system=per_system
    )


def _cmd_stability(args) -> int:
    scores_h = _read_per_topic_csv(args.per_topic_h, args.metric)
    scores_l = _read_per_topic_csv(args.per_topic_l, args.metric)
    report = stability_report(
        scores_h,
        scores_l,
        rbo_p=args.rbo_p,
        n_resamples=args.resamples,
        seed=args.seed,
    )
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        [
            "dataset", "model", "modality", "metric",
            "tau", "tau_lo", "tau_hi", "spearman", "pearson", "rbo", "p", "B", "seed",
        ]
    )
    writer.writerow(
        [
            args.dataset,
            args.model,
            args.modality,
            report.metric,
            f"{report.kendall_tau.value:.6f}",
            f"{report.tau_ci_low:.6f}",
            f"{report.tau_ci_high:.6f}",
            f"{report.spearman_rho.value:.6f}",
            f"{report.pearson_rho.value:.6f}",
            f"{report.rbo:.6f}",
            f"{report.rbo_p}",
            report.n_resamples,
            report.seed,
        ]
    )
    _emit(buffer.getvalue(), args.out)
    return 0


def _cmd_cost(args) -> int:
    prices = load_price_table(args.prices) if args.prices else dict(DEFAULT_PRICES)
    if args.extrapolate:
        if args.pairs is None or args.avg_tokens is None:
            raise ConfigError("--extrapolate needs --pairs and --avg-tokens")
        report = extrapolate(
            args.pairs,
            args.avg_tokens,
            args.overhead,
            price_for(args.model, prices),
            stage=args.stage,
            modality=args.modality,
        )
    else:
        if not args.cache:
            raise ConfigError("either --cache or --extrapolate is required")
        cache = ResponseCache(args.cache)
        entries = list(cache.entries())
        if args.usage:
            usage = json.loads(Path(args.usage).read_text(encoding="utf-8"))
            wanted = set(usage["request_hashes"])
            entries = [e for e in entries if e.request_hash in wanted]
        report = tally_observed(
            entries, prices, stage=args.stage, modality=args.modality
        )
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["stage", "modality", "dataset", "input_tokens_millions", "cost_usd"])
    writer.writerow(
        [
            report.stage,
            report.modality,
            args.dataset,
            f"{report.input_tokens / 1e6:.6f}",
            f"{report.usd:.6f}",
        ]
    )
    _emit(buffer.getvalue(), args.out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
