"""End-to-end experiment orchestration with resumable, manifest-backed stages.

Stage outputs are content-addressed: each stage records a fingerprint over
its inputs (config slice, input-file digests, upstream fingerprints) plus
digests of the files it wrote. A re-run skips every stage whose fingerprint
and outputs are intact, so completed mock experiments replay with zero
backend calls and deleted outputs trigger exactly the stages that produced
them.

All outputs are written atomically and all floats are formatted with fixed
precision, so identical configs and seeds produce byte-identical bundles
under the mock backend.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import __version__
from .agreement import agreement_report, format_percentages, label_distribution
from .config import ExperimentConfig
from .cost import DEFAULT_PRICES, load_price_table, tally_observed
from .effectiveness import EffectivenessRow, average_precision, ndcg_at_k, scatter_data
from .errors import ConfigError, JudgevalError
from .gateway import Gateway, HttpBackend, MockBackend
from .judge import JudgingTask, binarize, judge_pool, load_judge_template, load_topics
from .stability import SystemScores, stability_report
from .summarizer import (
    SummarySet,
    load_summary_template,
    read_summaries,
    summarize_corpus,
    write_summaries,
)
from .templates import template_sha256
from .trec_io import (
    JudgmentSet,
    Modality,
    atomic_write_text,
    load_corpus,
    load_runs_dir,
    parse_qrels,
    write_judgments,
)


class StageError(JudgevalError):
    """A stage failed fatally; carries the stage name in the message."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


@dataclass
class StageOutcome:
    name: str
    status: str  # "ran" | "skipped"
    outputs: list[str]


@dataclass
class PipelineResult:
    outcomes: list[StageOutcome]
    backend_calls: int
    cache_hits: int
    output_dir: Path
    manifest_path: Path

    def stages_run(self) -> list[str]:
        return [o.name for o in self.outcomes if o.status == "ran"]

    def stages_skipped(self) -> list[str]:
        return [o.name for o in self.outcomes if o.status == "skipped"]


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "", text.replace(":", "-"))


class _RecordingGateway:
    """Per-stage wrapper that records which request hashes a stage used."""

    def __init__(self, inner: Gateway):
        self._inner = inner
        self.hashes: list[str] = []
        self.token_sources: dict[str, int] = {}

    def complete(self, request):
        response = self._inner.complete(request)
        self.hashes.append(request.digest())
        source = "cache" if response.cached else response.token_source
        self.token_sources[source] = self.token_sources.get(source, 0) + 1
        return response

    def now(self) -> float:
        return self._inner.now()


def make_gateway(config: ExperimentConfig) -> Gateway:
    if config.backend == "mock":
        backend = MockBackend(seed=config.seed)
        clock: Callable[[], float] = lambda: 0.0
    else:
        backend = HttpBackend(config.endpoint, config.api_key_env)
        clock = time.time
    return Gateway(
        backend,
        config.resolved_cache_path(),
        max_attempts=config.max_attempts,
        max_in_flight=config.max_in_flight,
        clock=clock,
    )


def run_pipeline(config: ExperimentConfig, *, force: bool = False) -> PipelineResult:
    """Run summarize -> judge -> report stages for one experiment config."""
    return _Pipeline(config, force=force).run()


class _Pipeline:
    def __init__(self, config: ExperimentConfig, *, force: bool = False):
        self.config = config
        self.force = force
        for name in ("corpus", "topics", "qrels", "runs_dir"):
            path = getattr(config, name)
            if not Path(path).exists():
                raise ConfigError(f"{name} path does not exist: {path}")
        self.out = Path(config.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self.manifest = self._load_manifest()
        self.gateway = make_gateway(config)
        self.outcomes: list[StageOutcome] = []

        self.summary_template = load_summary_template(config.summary_template)
        self.judge_template = load_judge_template(config.judge_template)
        self.prices = (
            load_price_table(config.prices) if config.prices else dict(DEFAULT_PRICES)
        )

        self.input_digests = {
            name: sha256_file(Path(getattr(config, name)))
            for name in ("corpus", "topics", "qrels")
        }
        runs_dir = Path(config.runs_dir)
        self.input_digests["runs"] = _canonical(
            {p.name: sha256_file(p) for p in sorted(runs_dir.iterdir()) if p.is_file()}
        )

        self.corpus = load_corpus(config.corpus)
        self.topics = load_topics(config.topics)
        self.human = parse_qrels(config.qrels)
        self.runs = load_runs_dir(config.runs_dir)
        if not self.runs:
            raise ConfigError(f"no run files found in {runs_dir}")

        self.summaries: dict[int, SummarySet] = {}
        self.judgments: dict[tuple[str, str], JudgmentSet] = {}
        self.stage_fingerprints: dict[str, str] = {}

    # -- manifest bookkeeping ------------------------------------------------

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            try:
                manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
                if isinstance(manifest, dict) and "stages" in manifest:
                    return manifest
            except json.JSONDecodeError:
                pass
        return {"stages": {}}

    def _save_manifest(self) -> None:
        files: dict[str, str] = {}
        for record in self.manifest["stages"].values():
            files.update(record["outputs"])
        cache = self.config.resolved_cache_path()
        if cache.exists():
            try:
                rel = str(cache.relative_to(self.out))
            except ValueError:
                rel = str(cache)
            files[rel] = sha256_file(cache)
        manifest = {
            "tool": "judgeval",
            "version": __version__,
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "dataset": self.config.dataset,
            "prompts": {
                "summary_sha256": template_sha256(self.summary_template),
                "judge_sha256": template_sha256(self.judge_template),
            },
            "stages": self.manifest["stages"],
            "files": dict(sorted(files.items())),
        }
        atomic_write_text(
            self.manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )

    def _stage(
        self,
        name: str,
        inputs: dict,
        outputs: list[str],
        producer: Callable[[], None],
    ) -> None:
        fingerprint = hashlib.sha256(
            _canonical({"stage": name, "version": __version__, "inputs": inputs}).encode()
        ).hexdigest()
        self.stage_fingerprints[name] = fingerprint
        record = self.manifest["stages"].get(name)
        if (
            not self.force
            and record
            and record.get("fingerprint") == fingerprint
            and all(
                (self.out / rel).exists()
                and sha256_file(self.out / rel) == digest
                for rel, digest in record.get("outputs", {}).items()
            )
            and set(record.get("outputs", {})) == set(outputs)
        ):
            self.outcomes.append(StageOutcome(name, "skipped", outputs))
            return
        try:
            producer()
        except JudgevalError as exc:
            raise StageError(name, exc) from exc
        digests = {rel: sha256_file(self.out / rel) for rel in outputs}
        self.manifest["stages"][name] = {
            "fingerprint": fingerprint,
            "outputs": digests,
        }
        self.outcomes.append(StageOutcome(name, "ran", outputs))
        self._save_manifest()

    def _write(self, rel: str, text: str) -> None:
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(path, text)

    def _write_usage(self, rel: str, recorder: _RecordingGateway) -> None:
        input_tokens = 0
        output_tokens = 0
        for request_hash in recorder.hashes:
            entry = self.gateway.cache.get(request_hash)
            if entry is not None:
                input_tokens += entry.input_tokens
                output_tokens += entry.output_tokens
        usage = {
            "request_hashes": sorted(set(recorder.hashes)),
            "input_tokens": input_tokens,
            "output_tokens": output_tokens,
            "token_sources": dict(sorted(recorder.token_sources.items())),
        }
        self._write(rel, json.dumps(usage, indent=2, sort_keys=True) + "\n")

    # -- stages ---------------------------------------------------------------

    def run(self) -> PipelineResult:
        summary_budgets = sorted(
            m.budget_tokens for m in self.config.modalities if m.kind == "summary"
        )
        for budget in summary_budgets:
            self._summarize_stage(budget)
        for model in self.config.models:
            for modality in self.config.modalities:
                self._judge_stage(model, modality)
        self._distribution_stage()
        self._agreement_stage()
        effectiveness_rows = self._effectiveness_stage()
        self._stability_stage(effectiveness_rows)
        self._cost_stage()
        self._save_manifest()
        return PipelineResult(
            outcomes=self.outcomes,
            backend_calls=self.gateway.backend_calls,
            cache_hits=self.gateway.cache_hits,
            output_dir=self.out,
            manifest_path=self.manifest_path,
        )

    def _summarize_stage(self, budget: int) -> None:
        name = f"summarize:{budget}"
        rel = f"summaries/summ{budget}.jsonl"
        rel_usage = f"summaries/summ{budget}.usage.json"
        inputs = {
            "corpus": self.input_digests["corpus"],
            "budget": budget,
            "model": self.config.summarizer_model,
            "template_sha256": template_sha256(self.summary_template),
            "slack": self.config.summary_slack,
            "backend": self.config.backend,
            "seed": self.config.seed,
        }

        def produce() -> None:
            recorder = _RecordingGateway(self.gateway)
            summaries = summarize_corpus(
                self.corpus,
                budget,
                recorder,
                self.config.summarizer_model,
                template=self.summary_template,
                slack=self.config.summary_slack,
            )
            write_summaries(summaries, self.out / rel)
            self._write_usage(rel_usage, recorder)
            self.summaries[budget] = summaries

        self._stage(name, inputs, [rel, rel_usage], produce)
        if budget not in self.summaries:
            self.summaries[budget] = read_summaries(self.out / rel)

    def _pool_pairs(self) -> list[tuple[str, str]]:
        if self.config.pool == "qrels":
            return sorted(self.human.grades.keys())
        pairs = {
            (topic_id, record.doc_id)
            for run in self.runs
            for topic_id, records in run.topics.items()
            for record in records[: self.config.pool_depth]
        }
        return sorted(pairs)

    def _build_tasks(
        self, modality: Modality
    ) -> tuple[list[JudgingTask], list[dict]]:
        tasks: list[JudgingTask] = []
        skipped: list[dict] = []
        summaries = (
            self.summaries[modality.budget_tokens] if modality.kind == "summary" else None
        )
        for topic_id, doc_id in self._pool_pairs():
            topic = self.topics.get(topic_id)
            if topic is None:
                skipped.append(
                    {"topic_id": topic_id, "doc_id": doc_id, "reason": "topic not in topics file"}
                )
                continue
            if modality.kind == "full":
                entry = self.corpus.entries.get(doc_id)
                if entry is None:
                    skipped.append(
                        {"topic_id": topic_id, "doc_id": doc_id, "reason": "doc not in corpus"}
                    )
                    continue
                evidence = entry.text
            else:
                record = summaries.records.get(doc_id) if summaries else None
                if record is None:
                    skipped.append(
                        {"topic_id": topic_id, "doc_id": doc_id, "reason": "no summary available"}
                    )
                    continue
                evidence = record.text
            tasks.append(
                JudgingTask(
                    topic=topic, doc_id=doc_id, evidence_text=evidence, modality=modality
                )
            )
        return tasks, skipped

    def _judge_stage(self, model: str, modality: Modality) -> None:
        cell = f"{_slug(model)}__{_slug(str(modality))}"
        name = f"judge:{model}:{modality}"
        rel_qrels = f"judgments/{cell}.qrels"
        rel_meta = f"judgments/{cell}.qrels.meta.json"
        rel_errors = f"judgments/{cell}.errors.json"
        rel_usage = f"judgments/{cell}.usage.json"
        inputs = {
            "qrels": self.input_digests["qrels"],
            "topics": self.input_digests["topics"],
            "corpus": self.input_digests["corpus"],
            "summaries": (
                self.stage_fingerprints.get(f"summarize:{modality.budget_tokens}")
                if modality.kind == "summary"
                else None
            ),
            "pool": self.config.pool,
            "pool_depth": self.config.pool_depth,
            "runs": self.input_digests["runs"] if self.config.pool == "runs" else None,
            "model": model,
            "modality": str(modality),
            "template_sha256": template_sha256(self.judge_template),
            "max_output_tokens": self.config.judge_max_output_tokens,
            "backend": self.config.backend,
            "seed": self.config.seed,
        }

        def produce() -> None:
            recorder = _RecordingGateway(self.gateway)
            tasks, skipped = self._build_tasks(modality)
            result = judge_pool(
                tasks,
                recorder,
                model,
                template=self.judge_template,
                max_output_tokens=self.config.judge_max_output_tokens,
            )
            write_judgments(
                result.judgments, self.out / rel_qrels, created_at=self.gateway.now()
            )
            ledger = {
                "skipped_pairs": skipped,
                "failed_tasks": [f._asdict() for f in result.failures],
            }
            self._write(rel_errors, json.dumps(ledger, indent=2, sort_keys=True) + "\n")
            self._write_usage(rel_usage, recorder)
            self.judgments[(model, str(modality))] = result.judgments

        self._stage(name, inputs, [rel_qrels, rel_meta, rel_errors, rel_usage], produce)
        if (model, str(modality)) not in self.judgments:
            self.judgments[(model, str(modality))] = parse_qrels(self.out / rel_qrels)

    def _cells(self) -> list[tuple[str, Modality]]:
        return [
            (model, modality)
            for model in self.config.models
            for modality in self.config.modalities
        ]

    def _distribution_stage(self) -> None:
        rel = "reports/label_distribution.csv"
        inputs = {
            "qrels": self.input_digests["qrels"],
            "judges": {
                f"{m}:{mod}": self.stage_fingerprints[f"judge:{m}:{mod}"]
                for m, mod in self._cells()
            },
        }

        def produce() -> None:
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(
                ["annotator", "modality", "dataset"]
                + [f"grade_{g}" for g in (0, 1, 2, 3)]
                + ["n_judgments"]
            )
            rows = [("human", "full", self.human)] + [
                (model, str(modality), self.judgments[(model, str(modality))])
                for model, modality in self._cells()
            ]
            for annotator, modality_str, judgments in rows:
                shares = format_percentages(label_distribution(judgments))
                writer.writerow(
                    [annotator, modality_str, self.config.dataset]
                    + [shares[g] for g in (0, 1, 2, 3)]
                    + [len(judgments)]
                )
            self._write(rel, buffer.getvalue())

        self._stage("distribution", inputs, [rel], produce)

    def _agreement_stage(self) -> None:
        rel = "reports/agreement.csv"
        threshold = self.config.binarize_threshold
        inputs = {
            "qrels": self.input_digests["qrels"],
            "threshold": threshold,
            "judges": {
                f"{m}:{mod}": self.stage_fingerprints[f"judge:{m}:{mod}"]
                for m, mod in self._cells()
            },
        }

        def produce() -> None:
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(
                ["model", "modality", "dataset", "metric", "value", "n_items", "n_missing", "flags"]
            )
            human_binary = binarize(self.human, threshold)
            for model, modality in self._cells():
                judged = self.judgments[(model, str(modality))]
                graded = agreement_report(self.human, judged, graded=True)
                binary = agreement_report(
                    human_binary, binarize(judged, threshold), graded=False
                )
                rows = [
                    ("weighted_kappa_quadratic", graded.weighted_kappa, graded),
                    ("alpha_ordinal", graded.alpha, graded),
                    (f"kappa_binary_t{threshold}", binary.kappa, binary),
                    (f"alpha_nominal_binary_t{threshold}", binary.alpha, binary),
                ]
                for metric_name, stat, report in rows:
                    writer.writerow(
                        [
                            model,
                            str(modality),
                            self.config.dataset,
                            metric_name,
                            f"{stat.value:.6f}",
                            report.n_items,
                            report.n_missing,
                            "degenerate" if stat.degenerate else "",
                        ]
                    )
            self._write(rel, buffer.getvalue())

        self._stage("agreement", inputs, [rel], produce)

    def _effectiveness_rows(self) -> dict[tuple[str, str], list[EffectivenessRow]]:
        """(qrels label, metric) -> per-run rows; label 'human' or 'model:modality'."""
        threshold = self.config.binarize_threshold
        k = self.config.ndcg_k
        sources: list[tuple[str, JudgmentSet]] = [("human", self.human)]
        sources += [
            (f"{model}:{modality}", self.judgments[(model, str(modality))])
            for model, modality in self._cells()
        ]
        table: dict[tuple[str, str], list[EffectivenessRow]] = {}
        for label, judgments in sources:
            ndcg_rows = [
                ndcg_at_k(run, judgments, k=k, gain=self.config.gain)
                for run in self.runs
            ]
            binary = binarize(judgments, threshold)
            map_rows = [average_precision(run, binary) for run in self.runs]
            table[(label, f"ndcg@{k}")] = ndcg_rows
            table[(label, "map")] = map_rows
        return table

    def _effectiveness_stage(self) -> dict[tuple[str, str], list[EffectivenessRow]]:
        k = self.config.ndcg_k
        rel_mean = "reports/effectiveness.csv"
        rel_topic = "reports/effectiveness_per_topic.csv"
        rel_coverage = "reports/effectiveness_coverage.csv"
        rel_scatter = {
            f"ndcg@{k}": f"reports/scatter_ndcg{k}.csv",
            "map": "reports/scatter_map.csv",
        }
        inputs = {
            "qrels": self.input_digests["qrels"],
            "runs": self.input_digests["runs"],
            "threshold": self.config.binarize_threshold,
            "gain": self.config.gain,
            "ndcg_k": k,
            "judges": {
                f"{m}:{mod}": self.stage_fingerprints[f"judge:{m}:{mod}"]
                for m, mod in self._cells()
            },
        }
        table: dict[tuple[str, str], list[EffectivenessRow]] = {}

        def produce() -> None:
            table.update(self._effectiveness_rows())
            mean_buf = io.StringIO()
            mean_writer = csv.writer(mean_buf, lineterminator="\n")
            mean_writer.writerow(
                ["run_tag", "metric", "qrels_source", "modality", "mean", "topics_evaluated"]
            )
            topic_buf = io.StringIO()
            topic_writer = csv.writer(topic_buf, lineterminator="\n")
            topic_writer.writerow(
                ["run_tag", "metric", "qrels_source", "modality", "topic_id", "value"]
            )
            coverage_buf = io.StringIO()
            coverage_writer = csv.writer(coverage_buf, lineterminator="\n")
            coverage_writer.writerow(
                [
                    "run_tag", "metric", "qrels_source", "modality",
                    "topics_evaluated", "topics_skipped_unjudged",
                    "topics_skipped_no_relevant", "unjudged_at_cutoff",
                ]
            )
            for (label, metric) in sorted(table):
                for row in table[(label, metric)]:
                    mean_writer.writerow(
                        [
                            row.run_tag,
                            row.metric,
                            row.qrels_source,
                            row.modality,
                            f"{row.mean:.6f}",
                            row.topics_evaluated,
                        ]
                    )
                    coverage_writer.writerow(
                        [
                            row.run_tag,
                            row.metric,
                            row.qrels_source,
                            row.modality,
                            row.topics_evaluated,
                            row.topics_skipped_unjudged,
                            row.topics_skipped_no_relevant,
                            row.unjudged_at_cutoff,
                        ]
                    )
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
            self._write(rel_mean, mean_buf.getvalue())
            self._write(rel_topic, topic_buf.getvalue())
            self._write(rel_coverage, coverage_buf.getvalue())

            for metric, rel in rel_scatter.items():
                buffer = io.StringIO()
                writer = csv.writer(buffer, lineterminator="\n")
                writer.writerow(
                    ["model", "modality", "metric", "run_tag", "human", "llm"]
                )
                for model, modality in self._cells():
                    points = scatter_data(
                        table[("human", metric)],
                        table[(f"{model}:{modality}", metric)],
                    )
                    for point in points:
                        writer.writerow(
                            [
                                model,
                                str(modality),
                                point.metric,
                                point.run_tag,
                                f"{point.human_score:.6f}",
                                f"{point.llm_score:.6f}",
                            ]
                        )
                self._write(rel, buffer.getvalue())

        outputs = [rel_mean, rel_topic, rel_coverage] + sorted(rel_scatter.values())
        self._stage("effectiveness", inputs, outputs, produce)
        if not table:
            table.update(self._effectiveness_rows())
        return table

    def _stability_stage(
        self, table: dict[tuple[str, str], list[EffectivenessRow]]
    ) -> None:
        rel = "reports/stability.csv"
        inputs = {
            "effectiveness": self.stage_fingerprints["effectiveness"],
            "rbo_p": self.config.rbo_p,
            "bootstrap_samples": self.config.bootstrap_samples,
            "seed": self.config.seed,
        }

        def produce() -> None:
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(
                [
                    "dataset", "model", "modality", "metric",
                    "tau", "tau_lo", "tau_hi", "spearman", "pearson", "rbo",
                    "p", "B", "seed",
                ]
            )
            metrics = [f"ndcg@{self.config.ndcg_k}", "map"]
            for model, modality in self._cells():
                for metric in metrics:
                    scores_h = SystemScores.from_rows(table[("human", metric)])
                    scores_l = SystemScores.from_rows(
                        table[(f"{model}:{modality}", metric)]
                    )
                    report = stability_report(
                        scores_h,
                        scores_l,
                        rbo_p=self.config.rbo_p,
                        n_resamples=self.config.bootstrap_samples,
                        seed=self.config.seed,
                    )
                    writer.writerow(
                        [
                            self.config.dataset,
                            model,
                            str(modality),
                            metric,
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
            self._write(rel, buffer.getvalue())

        self._stage("stability", inputs, [rel], produce)

    def _cost_stage(self) -> None:
        rel = "reports/cost.csv"
        usage_files = {
            f"summ:{b}": f"summaries/summ{b}.usage.json"
            for b in sorted(
                m.budget_tokens for m in self.config.modalities if m.kind == "summary"
            )
        }
        judge_usage = {
            str(modality): [
                f"judgments/{_slug(model)}__{_slug(str(modality))}.usage.json"
                for model in self.config.models
            ]
            for modality in self.config.modalities
        }
        inputs = {
            "summarize": {
                name: self.stage_fingerprints[f"summarize:{name.split(':')[1]}"]
                for name in usage_files
            },
            "judges": {
                f"{m}:{mod}": self.stage_fingerprints[f"judge:{m}:{mod}"]
                for m, mod in self._cells()
            },
            "prices": {
                model: [price.input_usd_per_1m, price.output_usd_per_1m]
                for model, price in sorted(self.prices.items())
            },
        }

        def entries_for(usage_rel: str):
            usage = json.loads((self.out / usage_rel).read_text(encoding="utf-8"))
            for request_hash in usage["request_hashes"]:
                entry = self.gateway.cache.get(request_hash)
                if entry is not None:
                    yield entry

        def produce() -> None:
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(
                ["stage", "modality", "dataset", "input_tokens_millions", "cost_usd"]
            )
            for modality_str, usage_rel in usage_files.items():
                report = tally_observed(
                    entries_for(usage_rel),
                    self.prices,
                    stage="summarization",
                    modality=modality_str,
                )
                writer.writerow(
                    [
                        report.stage,
                        report.modality,
                        self.config.dataset,
                        f"{report.input_tokens / 1e6:.6f}",
                        f"{report.usd:.6f}",
                    ]
                )
            for modality_str, rels in judge_usage.items():
                entries = [entry for rel_usage in rels for entry in entries_for(rel_usage)]
                report = tally_observed(
                    entries, self.prices, stage="judgment", modality=modality_str
                )
                writer.writerow(
                    [
                        report.stage,
                        report.modality,
                        self.config.dataset,
                        f"{report.input_tokens / 1e6:.6f}",
                        f"{report.usd:.6f}",
                    ]
                )
            self._write(rel, buffer.getvalue())

        self._stage("cost", inputs, [rel], produce)
