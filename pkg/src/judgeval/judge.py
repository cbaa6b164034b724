"""Graded relevance judging of (topic, evidence) pairs.

A Bing-style zero-shot prompt elicits a 0-3 label per pair; the grade is
extracted as the last standalone integer in that range, which tolerates the
decoration zero-shot models add around their answers. Responses that never
yield a grade are recorded as missing rather than defaulted to 0, so
downstream agreement statistics see true missing data instead of a biased
pile of non-relevant labels.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import JudgevalError, ParseError
from .gateway import ChatRequest, Gateway
from .templates import load_template, template_sha256
from .trec_io import JudgmentSet, Modality, model_source

GRADE_NUDGE = "Answer with a single digit."
DEFAULT_MAX_OUTPUT_TOKENS = 64

# A standalone 0-3: not glued to other digits and not part of a decimal
# number on either side.
_GRADE_RE = re.compile(r"(?<!\d)(?<!\d\.)([0-3])(?!\.?\d)")


@dataclass(frozen=True)
class Topic:
    topic_id: str
    query_text: str

    def __post_init__(self) -> None:
        if not self.query_text:
            raise ValueError(f"topic {self.topic_id} has empty query text")


@dataclass(frozen=True)
class JudgingTask:
    topic: Topic
    doc_id: str
    evidence_text: str
    modality: Modality


class TaskFailure(NamedTuple):
    topic_id: str
    doc_id: str
    reason: str


class JudgePoolResult(NamedTuple):
    judgments: JudgmentSet
    failures: list[TaskFailure]


def load_topics(path: str | Path) -> dict[str, Topic]:
    """Load a tab-separated topics file (``topic_id<TAB>query_text``)."""
    path = Path(path)
    topics: dict[str, Topic] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip("\n").strip("\r")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError(
                    "expected 'topic_id<TAB>query_text'", path=str(path), line=line_no
                )
            topic_id, query_text = line.split("\t", 1)
            topic_id = topic_id.strip()
            query_text = query_text.strip()
            if not topic_id or not query_text:
                raise ParseError(
                    "topic id and query text must be non-empty",
                    path=str(path),
                    line=line_no,
                )
            if topic_id in topics:
                raise ParseError(
                    f"duplicate topic {topic_id}", path=str(path), line=line_no
                )
            topics[topic_id] = Topic(topic_id, query_text)
    return topics


def load_judge_template(path: str | Path | None = None) -> str:
    template = load_template("judge_prompt.txt", path)
    for marker in ("<QUERY>", "<PASSAGE>"):
        if marker not in template:
            raise JudgevalError(f"judge template missing {marker} placeholder")
    return template


def build_judge_prompt(
    task: JudgingTask,
    model: str,
    *,
    template: str | None = None,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> ChatRequest:
    if template is None:
        template = load_judge_template()
    user_text = template.replace("<QUERY>", task.topic.query_text).replace(
        "<PASSAGE>", task.evidence_text
    )
    return ChatRequest(
        model=model,
        user_text=user_text,
        max_output_tokens=max_output_tokens,
        temperature=0.0,
    )


def parse_grade(text: str) -> int | None:
    """Extract the last standalone integer in 0-3, or None when absent."""
    matches = _GRADE_RE.findall(text)
    if not matches:
        return None
    return int(matches[-1])


def judge_pool(
    tasks: Iterable[JudgingTask],
    gateway: Gateway,
    model: str,
    *,
    template: str | None = None,
    max_parse_retries: int = 3,
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS,
) -> JudgePoolResult:
    """Judge a pool of tasks with one model.

    Unparseable responses are retried with the identical request (a no-op
    against the cache under deterministic decoding) and, on the final
    attempt, with a "single digit" nudge appended; tasks still unparseable
    after that, or failing at the gateway, land in the failure ledger. Every
    task ends up either as a judgment record or a ledger entry.
    """
    tasks = list(tasks)
    if not tasks:
        return JudgePoolResult(
            JudgmentSet(grades={}, source=model_source(model)), []
        )
    modalities = {task.modality for task in tasks}
    if len(modalities) > 1:
        raise ValueError(f"tasks mix modalities: {sorted(map(str, modalities))}")
    if template is None:
        template = load_judge_template()
    prompt_hash = template_sha256(template)

    grades: dict[tuple[str, str], int] = {}
    failures: list[TaskFailure] = []
    for task in sorted(tasks, key=lambda t: (t.topic.topic_id, t.doc_id)):
        key = (task.topic.topic_id, task.doc_id)
        if key in grades:
            raise ValueError(f"duplicate task for topic {key[0]} doc {key[1]}")
        request = build_judge_prompt(
            task, model, template=template, max_output_tokens=max_output_tokens
        )
        try:
            grade = _judge_one(request, gateway, max_parse_retries)
        except JudgevalError as exc:
            failures.append(TaskFailure(key[0], key[1], str(exc)))
            continue
        if grade is None:
            failures.append(TaskFailure(key[0], key[1], "no parseable grade"))
            continue
        grades[key] = grade

    judgments = JudgmentSet(
        grades=grades,
        source=model_source(model),
        modality=tasks[0].modality,
        prompt_sha256=prompt_hash,
    )
    return JudgePoolResult(judgments, failures)


def _judge_one(request: ChatRequest, gateway: Gateway, attempts: int) -> int | None:
    for attempt in range(1, attempts + 1):
        if attempt == attempts and attempts > 1:
            nudged = ChatRequest(
                model=request.model,
                user_text=request.user_text + "\n\n" + GRADE_NUDGE,
                system_text=request.system_text,
                max_output_tokens=request.max_output_tokens,
                temperature=request.temperature,
            )
            response = gateway.complete(nudged)
        else:
            response = gateway.complete(request)
        grade = parse_grade(response.text)
        if grade is not None:
            return grade
    return None


def binarize(judgments: JudgmentSet, threshold: int = 1) -> JudgmentSet:
    """Collapse graded labels to {0,1}: relevant iff grade >= threshold."""
    if threshold not in (1, 2, 3):
        raise ValueError("threshold must be 1, 2, or 3")
    return JudgmentSet(
        grades={
            key: (1 if grade >= threshold else 0)
            for key, grade in judgments.grades.items()
        },
        source=judgments.source,
        modality=judgments.modality,
        prompt_sha256=judgments.prompt_sha256,
    )
