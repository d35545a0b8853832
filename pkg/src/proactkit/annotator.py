"""Oracle annotation pipeline: prompt construction, provider calls with
retries, and parallel batch runs with resume.

The completion provider is pluggable; the pipeline is exercised with scripted
providers at desk scale and never assumes a particular model.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol, Sequence

import json

import yaml

from .datamodel import (
    ActionCatalog,
    Dialogue,
    ReferenceRange,
    TurnAnnotation,
    catalog_prompt_text,
    compute_reference_ranges,
    validate_instance,
)
from .records import RecordFormatError, instance_from_doc, write_dialogues

logger = logging.getLogger(__name__)

DEFAULT_SYSTEM_PROMPT = """\
You are an expert AI assistant specialized in analyzing dialogues to
identify proactive automation opportunities.

Your task is to annotate dialogue turns to identify when proactive actions
could be beneficial in multi-party conversations.
For each dialogue turn, you will identify:
1. Action opportunities that could be triggered
2. Required and optional inputs for each action
3. Readiness maturity of participants
4. Confidence in triggering the action
5. Current status of the action trigger

Always provide output in valid JSON format following the
specified schema exactly.
"""

DEFAULT_TASK_TEMPLATE = """\
## TASK
Analyze the following dialogue and annotate turn {turn_number}

## FULL DIALOGUE CONTEXT
{dialogue_context}

## CURRENT TURN TO ANNOTATE
Turn {turn_number}: {current_speaker} says: "{current_text}"

## AVAILABLE ACTION OPPORTUNITIES
{tool_catalog}
## ANNOTATION SCHEMA
{{
  "dialogue_turn": {turn_number},
  "speaker": "{current_speaker}",
  "text": "{current_text}",
  "proactive_annotations": [{{
    "action_opportunity": {{
      "name": "ActionName",
      "description": "What this action does",
      "inputs": {{
        "required": [{{
          "input_name": "InputName",
          "provided": true/false,
          "value": "The value of the input if provided"
        }}],
        "optional": [{{
          "input_name": "OptionalInput",
          "provided": true/false,
          "value": "The value of the input if provided"
        }}]
      }},
      "readiness_maturity": "low/medium/high",
      "trigger_confidence": "low/medium/high",
      "action_trigger_status": "pending/ready_to_trigger/triggered/repeatable/dismissed"
    }}
  }}]
}}
## GUIDELINES
- Only include action opportunities that are relevant to the current turn
- Consider the full dialogue context when assessing input availability
- Be conservative with "ready_to_trigger" status - only use when conditions
  are clearly met
- If no proactive opportunities exist for this turn, return empty
  "proactive_annotations" array
- Ensure all JSON is valid and follows the schema exactly

## RESPONSE
Provide only the JSON response, no additional text.
"""


class ProviderError(Exception):
    """Signals a failed or rejected completion call."""


class PromptTemplateError(ValueError):
    """A template placeholder could not be substituted."""


class AnnotationParseError(ValueError):
    """The provider output does not match the annotation schema."""


class BatchWriteError(OSError):
    """Output could not be written; ``completed`` supports resume."""

    def __init__(self, message: str, completed: int):
        super().__init__(message)
        self.completed = completed


class CompletionProvider(Protocol):
    def __call__(self, system: str, user: str, *, temperature: float, max_tokens: int) -> str: ...


@dataclass(frozen=True)
class AnnotatorConfig:
    model_id: str = "scripted"
    temperature: float = 0.1
    max_tokens: int = 4000
    batch_size: int = 5
    max_retries: int = 3
    with_future: bool = True
    max_workers: int = 4
    start_index: int = 0
    max_dialogues: int | None = None
    output_suffix: str = "_annotated"
    system_template: str = DEFAULT_SYSTEM_PROMPT
    task_template: str = DEFAULT_TASK_TEMPLATE

    def __post_init__(self) -> None:
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.start_index < 0:
            raise ValueError("start_index must be >= 0")


def load_annotator_config(path: str | Path) -> AnnotatorConfig:
    """Read the sectioned YAML layout (llm / annotation / output / prompts)."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    llm = doc.get("llm", {})
    annotation = doc.get("annotation", {})
    output = doc.get("output", {})
    prompts = doc.get("prompts", {})
    return AnnotatorConfig(
        model_id=llm.get("model", "scripted"),
        temperature=float(llm.get("temperature", 0.1)),
        max_tokens=int(llm.get("max_tokens", 4000)),
        batch_size=int(annotation.get("batch_size", 5)),
        max_retries=int(annotation.get("max_retries", 3)),
        with_future=bool(annotation.get("with_future", True)),
        max_workers=int(annotation.get("max_workers", 4)),
        start_index=int(annotation.get("start_index", 0)),
        max_dialogues=annotation.get("annotated_max_dialogues_num"),
        output_suffix=output.get("output_suffix", "_annotated"),
        system_template=prompts.get("system_prompt", DEFAULT_SYSTEM_PROMPT),
        task_template=prompts.get("task_prompt", DEFAULT_TASK_TEMPLATE),
    )


def _render(template: str, values: dict[str, Any]) -> str:
    try:
        return template.format_map(values)
    except (KeyError, IndexError, ValueError) as exc:
        raise PromptTemplateError(f"unresolved template placeholder: {exc}") from exc


def dialogue_context_text(dialogue: Dialogue, upto: int | None = None) -> str:
    lines = []
    for ta in dialogue.turns:
        if upto is not None and ta.turn.index > upto:
            break
        lines.append(f"Turn {ta.turn.index} ({ta.turn.speaker}): {ta.turn.text}")
    return "\n".join(lines)


def build_annotation_prompt(
    dialogue: Dialogue,
    turn_index: int,
    catalog: ActionCatalog,
    with_future: bool,
    config: AnnotatorConfig = AnnotatorConfig(),
) -> tuple[str, str]:
    """Render the (system, user) prompt pair for one turn.

    The hindsight annotator sees the whole conversation; the strictly causal
    one sees turns 1..t only.
    """
    if not 1 <= turn_index <= len(dialogue):
        raise ValueError(f"turn {turn_index} outside dialogue {dialogue.id!r}")
    ta = dialogue.turns[turn_index - 1]
    context = dialogue_context_text(dialogue, upto=None if with_future else turn_index)
    user = _render(
        config.task_template,
        {
            "turn_number": turn_index,
            "dialogue_context": context,
            "current_speaker": ta.turn.speaker,
            "current_text": ta.turn.text,
            "tool_catalog": catalog_prompt_text(catalog),
        },
    )
    return config.system_template, user


def parse_annotation_response(text: str, expected_turn: int) -> tuple[tuple, tuple[str, ...]]:
    """Extract (actions, questions) from a provider response; the caller owns the Turn."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AnnotationParseError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise AnnotationParseError("annotation must be a JSON object")
    annotations = doc.get("proactive_annotations")
    if annotations is None or not isinstance(annotations, list):
        raise AnnotationParseError('missing "proactive_annotations" array')
    if "dialogue_turn" in doc and int(doc["dialogue_turn"]) != expected_turn:
        raise AnnotationParseError(
            f"annotation is for turn {doc['dialogue_turn']}, expected {expected_turn}"
        )
    actions = []
    for entry in annotations:
        payload = entry.get("action_opportunity", entry) if isinstance(entry, dict) else None
        if payload is None:
            raise AnnotationParseError("each annotation must be an object")
        try:
            actions.append(instance_from_doc(payload))
        except RecordFormatError as exc:
            raise AnnotationParseError(str(exc)) from exc
    questions = tuple(str(q) for q in doc.get("questions", []))
    return tuple(actions), questions


@dataclass(frozen=True)
class TurnOutcome:
    turn_index: int
    retries: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class AnnotationResult:
    dialogue: Dialogue
    ranges: ReferenceRange
    outcomes: tuple[TurnOutcome, ...]
    violations: tuple[str, ...] = ()

    @property
    def failed_turns(self) -> tuple[int, ...]:
        return tuple(o.turn_index for o in self.outcomes if o.failed)


def annotate_dialogue(
    dialogue: Dialogue,
    catalog: ActionCatalog,
    provider: CompletionProvider,
    config: AnnotatorConfig = AnnotatorConfig(),
) -> AnnotationResult:
    """Annotate every turn, degrading per turn on provider exhaustion.

    Turns are annotated in order but never depend on each other's model
    output. Annotations naming unknown catalog actions are kept and surfaced
    as violations.
    """
    annotated: list[TurnAnnotation] = []
    outcomes: list[TurnOutcome] = []
    violations: list[str] = []
    for ta in dialogue.turns:
        system, user = build_annotation_prompt(
            dialogue, ta.turn.index, catalog, config.with_future, config
        )
        parsed: tuple[tuple, tuple[str, ...]] | None = None
        error: str | None = None
        retries = 0
        for attempt in range(config.max_retries + 1):
            retries = attempt
            try:
                response = provider(
                    system, user, temperature=config.temperature, max_tokens=config.max_tokens
                )
                parsed = parse_annotation_response(response, ta.turn.index)
                error = None
                break
            except (ProviderError, AnnotationParseError) as exc:
                error = str(exc)
        if parsed is None:
            annotated.append(TurnAnnotation(turn=ta.turn))
            outcomes.append(TurnOutcome(ta.turn.index, retries, error or "no annotation"))
            continue
        actions, questions = parsed
        annotation = TurnAnnotation(turn=ta.turn, actions=actions, questions=questions)
        for inst in annotation.actions:
            for violation in validate_instance(inst, catalog):
                violations.append(f"{dialogue.id}:turn {ta.turn.index}: {violation}")
        annotated.append(annotation)
        outcomes.append(TurnOutcome(ta.turn.index, retries))
    result = Dialogue(
        id=dialogue.id, turns=tuple(annotated), observed_triggers=dialogue.observed_triggers
    )
    return AnnotationResult(
        dialogue=result,
        ranges=compute_reference_ranges(result),
        outcomes=tuple(outcomes),
        violations=tuple(violations),
    )


@dataclass(frozen=True)
class BatchReport:
    processed_ids: tuple[str, ...]
    failed_turns: int
    violations: tuple[str, ...]
    elapsed_seconds: float
    output_path: str


def annotated_output_path(source: str | Path, suffix: str = "_annotated") -> Path:
    """dataset.jsonl -> dataset_annotated.jsonl.gz (outputs are always gzip)."""
    source = Path(source)
    name = source.name
    for ext in (".jsonl.gz", ".jsonl", ".json.gz", ".json"):
        if name.endswith(ext):
            return source.with_name(name[: -len(ext)] + suffix + ".jsonl.gz")
    return source.with_name(name + suffix + ".jsonl.gz")


def run_batch(
    dialogues: Sequence[Dialogue],
    catalog: ActionCatalog,
    provider: CompletionProvider,
    config: AnnotatorConfig,
    output_path: str | Path,
) -> BatchReport:
    """Annotate a dialogue slice with bounded parallelism and write one
    gzip line-delimited artifact.

    Results are collected in input order before writing, so parallel and
    sequential runs produce byte-identical outputs with a deterministic
    provider.
    """
    if dialogues and config.start_index >= len(dialogues):
        raise ValueError(
            f"start_index {config.start_index} beyond dialogue count {len(dialogues)}"
        )
    stop = None if config.max_dialogues is None else config.start_index + config.max_dialogues
    selected = list(dialogues[config.start_index : stop])

    started = time.monotonic()
    results: list[AnnotationResult]
    if config.max_workers == 1 or len(selected) <= 1:
        results = [annotate_dialogue(d, catalog, provider, config) for d in selected]
    else:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            futures = [
                pool.submit(annotate_dialogue, d, catalog, provider, config) for d in selected
            ]
            results = [f.result() for f in futures]

    completed = 0
    try:
        write_dialogues(
            [r.dialogue for r in results],
            output_path,
            ranges=[r.ranges for r in results],
        )
        completed = len(results)
    except OSError as exc:
        raise BatchWriteError(f"failed writing {output_path}: {exc}", completed=completed) from exc

    elapsed = time.monotonic() - started
    for idx, r in enumerate(results):
        logger.info(
            "annotated dialogue %s (%d/%d, %d failed turns)",
            r.dialogue.id,
            idx + 1,
            len(results),
            len(r.failed_turns),
        )
    logger.info("batch of %d dialogues finished in %.3fs", len(results), elapsed)
    return BatchReport(
        processed_ids=tuple(r.dialogue.id for r in results),
        failed_turns=sum(len(r.failed_turns) for r in results),
        violations=tuple(v for r in results for v in r.violations),
        elapsed_seconds=elapsed,
        output_path=str(output_path),
    )
