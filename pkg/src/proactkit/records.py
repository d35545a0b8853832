"""Line-delimited record formats and canonical catalog serialization.

All writers are deterministic (sorted keys, gzip headers with a zeroed
timestamp) so that repeated runs produce byte-identical artifacts.
"""
from __future__ import annotations

import gzip
import io
import json
from pathlib import Path
from typing import Any, Iterable, Iterator, Sequence

from .datamodel import (
    ActionCatalog,
    ActionInstance,
    ActionSpec,
    Backend,
    Dialogue,
    Maturity,
    ParameterSpec,
    ParamKind,
    ReferenceRange,
    TriggerStatus,
    Turn,
    TurnAnnotation,
)

_BACKEND_SECTIONS = {
    Backend.MCP_TOOL: "mcp_tools",
    Backend.API_DEFINITION: "api_definitions",
    Backend.CUSTOM_AGENT: "custom_agents",
}


class RecordFormatError(ValueError):
    """Raised for records that do not match the documented schemas."""


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------


def catalog_to_doc(catalog: ActionCatalog) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "catalog_metadata": {
            "name": catalog.name,
            "version": catalog.version,
            "domain": catalog.domain,
        },
        "mcp_tools": [],
        "api_definitions": [],
        "custom_agents": [],
    }
    for spec in sorted(catalog.actions, key=lambda s: s.name):
        doc[_BACKEND_SECTIONS[spec.backend]].append(
            {
                "name": spec.name,
                "description": spec.description,
                "parameters": {
                    "required": list(spec.required_params),
                    "optional": list(spec.optional_params),
                },
            }
        )
    return doc


def catalog_to_json(catalog: ActionCatalog) -> str:
    """Canonical key-sorted serialization; identical catalogs give identical bytes."""
    return canonical_json(catalog_to_doc(catalog))


def catalog_from_doc(doc: dict[str, Any]) -> ActionCatalog:
    meta = doc.get("catalog_metadata", {})
    specs = []
    for backend, section in _BACKEND_SECTIONS.items():
        for entry in doc.get(section, []):
            params = entry.get("parameters", {})
            specs.append(
                ActionSpec(
                    name=entry["name"],
                    description=entry.get("description", ""),
                    required_params=tuple(params.get("required", [])),
                    optional_params=tuple(params.get("optional", [])),
                    backend=backend,
                )
            )
    specs.sort(key=lambda s: s.name)
    return ActionCatalog(
        name=meta.get("name", "catalog"),
        version=meta.get("version", ""),
        domain=meta.get("domain", ""),
        actions=tuple(specs),
    )


def load_catalog(path: str | Path) -> ActionCatalog:
    with open_maybe_gzip(path, "rt") as fh:
        return catalog_from_doc(json.load(fh))


def save_catalog(catalog: ActionCatalog, path: str | Path) -> None:
    with open_maybe_gzip(path, "wt") as fh:
        fh.write(catalog_to_json(catalog))


# --------------------------------------------------------------------------
# action instances and dialogues
# --------------------------------------------------------------------------


def _param_to_doc(p: ParameterSpec) -> dict[str, Any]:
    doc: dict[str, Any] = {"input_name": p.name, "provided": p.provided}
    if p.provided:
        doc["value"] = p.value
    return doc


def _param_from_doc(doc: dict[str, Any], kind: ParamKind) -> ParameterSpec:
    provided = bool(doc.get("provided", False))
    return ParameterSpec(
        name=doc["input_name"],
        kind=kind,
        provided=provided,
        value=doc.get("value") if provided else None,
    )


def instance_to_doc(inst: ActionInstance) -> dict[str, Any]:
    return {
        "name": inst.spec_name,
        "inputs": {
            "required": [_param_to_doc(p) for p in inst.inputs_required],
            "optional": [_param_to_doc(p) for p in inst.inputs_optional],
        },
        "readiness_maturity": inst.readiness_maturity.value,
        "trigger_confidence": inst.trigger_confidence.value,
        "action_trigger_status": inst.status.value,
    }


def instance_from_doc(doc: dict[str, Any]) -> ActionInstance:
    try:
        inputs = doc.get("inputs", {})
        return ActionInstance(
            spec_name=doc["name"],
            inputs_required=tuple(
                _param_from_doc(p, ParamKind.REQUIRED) for p in inputs.get("required", [])
            ),
            inputs_optional=tuple(
                _param_from_doc(p, ParamKind.OPTIONAL) for p in inputs.get("optional", [])
            ),
            readiness_maturity=Maturity(doc.get("readiness_maturity", "low")),
            trigger_confidence=Maturity(doc.get("trigger_confidence", "low")),
            status=TriggerStatus(doc.get("action_trigger_status", "pending")),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise RecordFormatError(f"bad action instance: {exc}") from exc


def ranges_to_doc(ranges: ReferenceRange) -> dict[str, Any]:
    return {
        "per_action": {name: list(turns) for name, turns in sorted(ranges.per_action.items())},
        "occurrences": {
            name: [[t, s.value] for t, s in occ] for name, occ in sorted(ranges.occurrences.items())
        },
    }


def ranges_from_doc(doc: dict[str, Any]) -> ReferenceRange:
    return ReferenceRange(
        per_action={name: tuple(turns) for name, turns in doc.get("per_action", {}).items()},
        occurrences={
            name: tuple((int(t), TriggerStatus(s)) for t, s in occ)
            for name, occ in doc.get("occurrences", {}).items()
        },
    )


def dialogue_to_doc(dialogue: Dialogue, ranges: ReferenceRange | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "id": dialogue.id,
        "turns": [
            {
                "dialogue_turn": ta.turn.index,
                "speaker": ta.turn.speaker,
                "text": ta.turn.text,
                "proactive_annotations": [instance_to_doc(a) for a in ta.actions],
                "questions": list(ta.questions),
            }
            for ta in dialogue.turns
        ],
    }
    if dialogue.observed_triggers is not None:
        doc["observed_triggers"] = [[t, name] for t, name in dialogue.observed_triggers]
    if ranges is not None:
        doc["reference_ranges"] = ranges_to_doc(ranges)
    return doc


def dialogue_from_doc(doc: dict[str, Any]) -> Dialogue:
    try:
        turns = tuple(
            TurnAnnotation(
                turn=Turn(index=int(t["dialogue_turn"]), speaker=t["speaker"], text=t["text"]),
                actions=tuple(instance_from_doc(a) for a in t.get("proactive_annotations", [])),
                questions=tuple(t.get("questions", [])),
            )
            for t in doc["turns"]
        )
        triggers = doc.get("observed_triggers")
        return Dialogue(
            id=doc["id"],
            turns=turns,
            observed_triggers=None if triggers is None else tuple((int(t), a) for t, a in triggers),
        )
    except RecordFormatError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise RecordFormatError(f"bad dialogue record: {exc}") from exc


# --------------------------------------------------------------------------
# line-delimited I/O
# --------------------------------------------------------------------------


class _GzipTextIO(io.TextIOWrapper):
    """Text wrapper that also closes the raw file under the gzip member."""

    def __init__(self, gz: gzip.GzipFile, raw, **kwargs):
        self._raw = raw
        super().__init__(gz, **kwargs)

    def close(self) -> None:
        try:
            super().close()
        finally:
            if not self._raw.closed:
                self._raw.close()


def open_maybe_gzip(path: str | Path, mode: str):
    """Open text files transparently; ``.gz`` paths get deterministic gzip headers.

    Written gzip members carry an empty name and zeroed mtime so identical
    content always produces identical bytes.
    """
    path = Path(path)
    if path.suffix == ".gz":
        if "w" in mode:
            raw = path.open("wb")
            gz = gzip.GzipFile(fileobj=raw, mode="wb", filename="", mtime=0)
            return _GzipTextIO(gz, raw, encoding="utf-8", newline="\n")
        raw = path.open("rb")
        return _GzipTextIO(gzip.GzipFile(fileobj=raw, mode="rb"), raw, encoding="utf-8")
    return path.open(mode, encoding="utf-8", newline="\n" if "w" in mode else None)


def write_jsonl(docs: Iterable[dict[str, Any]], path: str | Path) -> int:
    count = 0
    with open_maybe_gzip(path, "wt") as fh:
        for doc in docs:
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def read_jsonl(path: str | Path) -> Iterator[dict[str, Any]]:
    with open_maybe_gzip(path, "rt") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(f"{path}:{line_no}: not valid JSON ({exc})") from exc


def write_dialogues(
    dialogues: Sequence[Dialogue],
    path: str | Path,
    ranges: Sequence[ReferenceRange | None] | None = None,
) -> int:
    ranges = ranges or [None] * len(dialogues)
    return write_jsonl(
        (dialogue_to_doc(d, r) for d, r in zip(dialogues, ranges)),
        path,
    )


def read_dialogues(path: str | Path) -> list[Dialogue]:
    return [dialogue_from_doc(doc) for doc in read_jsonl(path)]


# --------------------------------------------------------------------------
# evaluation datasets (predicted + reference per turn)
# --------------------------------------------------------------------------


def eval_dialogue_to_doc(dialogue) -> dict[str, Any]:
    return {
        "id": dialogue.id,
        "turns": [
            {
                "dialogue_turn": et.turn.index,
                "speaker": et.turn.speaker,
                "text": et.turn.text,
                "predicted": [instance_to_doc(a) for a in et.predicted],
                "reference": [instance_to_doc(a) for a in et.reference],
                "predicted_questions": list(et.predicted_questions),
                "reference_questions": list(et.reference_questions),
            }
            for et in dialogue.turns
        ],
    }


def eval_dialogue_from_doc(doc: dict[str, Any]):
    from .metrics import EvalDialogue, EvalTurn

    try:
        turns = tuple(
            EvalTurn(
                turn=Turn(index=int(t["dialogue_turn"]), speaker=t["speaker"], text=t["text"]),
                predicted=tuple(instance_from_doc(a) for a in t.get("predicted", [])),
                reference=tuple(instance_from_doc(a) for a in t.get("reference", [])),
                predicted_questions=tuple(t.get("predicted_questions", [])),
                reference_questions=tuple(t.get("reference_questions", [])),
            )
            for t in doc["turns"]
        )
        return EvalDialogue(id=doc["id"], turns=turns)
    except RecordFormatError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise RecordFormatError(f"bad evaluation record: {exc}") from exc


# --------------------------------------------------------------------------
# rollout trajectory groups
# --------------------------------------------------------------------------


def group_to_doc(group) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "scenario_id": group.scenario_id,
        "step": group.step,
        "context": {"system": group.context_system, "user": group.context_user},
        "trajectories": [
            {
                "trajectory_id": t.trajectory_id,
                "completion": t.completion,
                "metrics": {
                    "rac": t.metrics.rac,
                    "max_rac": t.metrics.max_rac,
                    "ptr": t.metrics.ptr,
                    "ftr": t.metrics.ftr,
                },
                "judge_score": t.judge_score,
                "reward": t.reward,
                **(
                    {"predicted": [instance_to_doc(a) for a in t.predicted]}
                    if t.predicted is not None
                    else {}
                ),
            }
            for t in group.trajectories
        ],
    }
    if group.dialogue_id is not None:
        doc["dialogue_id"] = group.dialogue_id
    if group.turn is not None:
        doc["turn"] = group.turn
    if group.reference is not None:
        doc["reference"] = [instance_to_doc(a) for a in group.reference]
    if group.ranges is not None:
        doc["ranges"] = ranges_to_doc(group.ranges)
    return doc


def group_from_doc(doc: dict[str, Any]):
    from .rewards import RolloutTrajectory, TrajectoryGroup, TurnRewardInput

    try:
        context = doc.get("context", {})
        trajectories = tuple(
            RolloutTrajectory(
                trajectory_id=str(t["trajectory_id"]),
                completion=t.get("completion", ""),
                metrics=TurnRewardInput(
                    rac=float(t["metrics"]["rac"]),
                    max_rac=float(t["metrics"]["max_rac"]),
                    ptr=float(t["metrics"].get("ptr", 0.0)),
                    ftr=float(t["metrics"].get("ftr", 0.0)),
                    ruler=t.get("judge_score"),
                ),
                judge_score=t.get("judge_score"),
                reward=t.get("reward"),
                predicted=(
                    tuple(instance_from_doc(a) for a in t["predicted"])
                    if "predicted" in t
                    else None
                ),
            )
            for t in doc["trajectories"]
        )
        return TrajectoryGroup(
            scenario_id=doc["scenario_id"],
            step=int(doc.get("step", 0)),
            context_system=context.get("system", ""),
            context_user=context.get("user", ""),
            trajectories=trajectories,
            dialogue_id=doc.get("dialogue_id"),
            turn=doc.get("turn"),
            reference=(
                tuple(instance_from_doc(a) for a in doc["reference"])
                if "reference" in doc
                else None
            ),
            ranges=ranges_from_doc(doc["ranges"]) if "ranges" in doc else None,
        )
    except RecordFormatError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise RecordFormatError(f"bad rollout record: {exc}") from exc
