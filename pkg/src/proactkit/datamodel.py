"""Action catalog, dialogue annotations, and the per-dialogue action-state graph.

Everything here is an immutable value object; the operations are pure
functions, so dialogues can be processed in parallel without shared state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import jinja2


class CatalogBuildError(ValueError):
    """Raised when the three catalog source documents are inconsistent."""


class ParamKind(str, Enum):
    REQUIRED = "required"
    OPTIONAL = "optional"


class Backend(str, Enum):
    MCP_TOOL = "mcp_tool"
    API_DEFINITION = "api_definition"
    CUSTOM_AGENT = "custom_agent"


class Maturity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class TriggerStatus(str, Enum):
    PENDING = "pending"
    READY_TO_TRIGGER = "ready_to_trigger"
    TRIGGERED = "triggered"
    REPEATABLE = "repeatable"
    DISMISSED = "dismissed"


_READY_STATUSES = frozenset({TriggerStatus.READY_TO_TRIGGER, TriggerStatus.TRIGGERED})


def is_ready(status: TriggerStatus) -> bool:
    """A prediction counts as a ready action when marked ready-to-trigger or triggered."""
    return status in _READY_STATUSES


def is_valid_transition(current: TriggerStatus, new: TriggerStatus) -> bool:
    """Status transitions form a complete directed graph with self-loops.

    Any pair of valid statuses is accepted; only values outside the
    five-status set are rejected.
    """
    return current in TriggerStatus.__members__.values() and new in TriggerStatus.__members__.values()


@dataclass(frozen=True)
class ParameterSpec:
    """One action input with a fill state; an unfilled input carries no value."""

    name: str
    kind: ParamKind
    provided: bool = False
    value: str | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("parameter name must be nonempty")
        if not self.provided and self.value is not None:
            raise ValueError(f"parameter {self.name!r}: value present but provided=False")


@dataclass(frozen=True)
class ActionSpec:
    name: str
    description: str
    required_params: tuple[str, ...]
    optional_params: tuple[str, ...]
    backend: Backend = Backend.MCP_TOOL

    def __post_init__(self) -> None:
        object.__setattr__(self, "required_params", tuple(self.required_params))
        object.__setattr__(self, "optional_params", tuple(self.optional_params))

    def violations(self) -> list[str]:
        out = []
        if not self.name:
            out.append("action with empty name")
        overlap = set(self.required_params) & set(self.optional_params)
        for name in sorted(overlap):
            out.append(f"action {self.name!r}: parameter {name!r} is both required and optional")
        for names in (self.required_params, self.optional_params):
            seen: set[str] = set()
            for n in names:
                if n in seen:
                    out.append(f"action {self.name!r}: duplicate parameter {n!r}")
                seen.add(n)
        return out

    @property
    def declared_params(self) -> frozenset[str]:
        return frozenset(self.required_params) | frozenset(self.optional_params)


@dataclass(frozen=True)
class ActionCatalog:
    """The unified action vocabulary shared by annotation, evaluation, and rollouts."""

    name: str
    version: str
    domain: str
    actions: tuple[ActionSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(self.actions))

    @cached_property
    def by_name(self) -> dict[str, ActionSpec]:
        return {a.name: a for a in self.actions}

    def action_names(self) -> frozenset[str]:
        return frozenset(a.name for a in self.actions)


def validate_catalog(catalog: ActionCatalog) -> list[str]:
    """Return invariant violations; an empty list means the catalog is well formed."""
    out = []
    if not catalog.version:
        out.append("catalog version must be a nonempty string")
    seen: set[str] = set()
    for spec in catalog.actions:
        if spec.name in seen:
            out.append(f"duplicate action name {spec.name!r}")
        seen.add(spec.name)
        out.extend(spec.violations())
    return out


def estimate_parameter_properties(samples: Sequence[Iterable[str]]) -> dict[str, ParamKind]:
    """Classify parameters from observed automation samples.

    A parameter present in every sample is required; present in some but
    not all, optional.
    """
    if not samples:
        raise ValueError("no samples")
    sets = [frozenset(s) for s in samples]
    names = sorted(frozenset().union(*sets))
    return {
        name: ParamKind.REQUIRED if all(name in s for s in sets) else ParamKind.OPTIONAL
        for name in names
    }


def render_catalog(
    ontology: Mapping[str, Any],
    type_spec: Mapping[str, Any],
    properties: Mapping[str, Mapping[str, str]],
) -> ActionCatalog:
    """Compile the three source documents into a validated action catalog.

    ``ontology`` lists the actions (``{"name", "version", "domain",
    "actions": [{"name": ...}, ...]}``), ``type_spec`` maps each action name
    to ``{"description", "backend", "parameters": [names]}``, and
    ``properties`` maps action name -> parameter name -> "required"/"optional".
    The result is deterministic: actions and parameters are emitted in sorted
    order, so identical inputs serialize to identical bytes.
    """
    entries = ontology.get("actions", [])
    names = []
    for entry in entries:
        name = entry["name"] if isinstance(entry, Mapping) else str(entry)
        if name in names:
            raise CatalogBuildError(f"duplicate action name {name!r} in ontology")
        names.append(name)

    specs = []
    for name in sorted(names):
        if name not in type_spec:
            raise CatalogBuildError(f"action {name!r} has no type-spec entry")
        ts = type_spec[name]
        params = ts.get("parameters", [])
        param_names = sorted(params.keys()) if isinstance(params, Mapping) else sorted(params)
        props = properties.get(name, {})
        required, optional = [], []
        for p in param_names:
            if p not in props:
                raise CatalogBuildError(f"action {name!r}: parameter {p!r} has no property entry")
            kind = ParamKind(props[p])
            (required if kind is ParamKind.REQUIRED else optional).append(p)
        specs.append(
            ActionSpec(
                name=name,
                description=ts.get("description", ""),
                required_params=tuple(required),
                optional_params=tuple(optional),
                backend=Backend(ts.get("backend", "mcp_tool")),
            )
        )
    catalog = ActionCatalog(
        name=str(ontology.get("name", "catalog")),
        version=str(ontology.get("version", "1.0.0")),
        domain=str(ontology.get("domain", "")),
        actions=tuple(specs),
    )
    violations = validate_catalog(catalog)
    if violations:
        raise CatalogBuildError("; ".join(violations))
    return catalog


_CATALOG_TEXT_TEMPLATE = jinja2.Template(
    """\
{%- for action in actions %}
- {{ action.name }}: {{ action.description }}
  required inputs: {{ action.required_params | join(', ') if action.required_params else '(none)' }}
  optional inputs: {{ action.optional_params | join(', ') if action.optional_params else '(none)' }}
  backend: {{ action.backend.value }}
{%- endfor %}
""",
    undefined=jinja2.StrictUndefined,
)


def catalog_prompt_text(catalog: ActionCatalog) -> str:
    """Render the catalog as the tool listing injected into annotation prompts."""
    return _CATALOG_TEXT_TEMPLATE.render(actions=catalog.actions)


@dataclass(frozen=True)
class ActionInstance:
    """A predicted or reference action opportunity with partial parameter fill."""

    spec_name: str
    inputs_required: tuple[ParameterSpec, ...] = ()
    inputs_optional: tuple[ParameterSpec, ...] = ()
    readiness_maturity: Maturity = Maturity.LOW
    trigger_confidence: Maturity = Maturity.LOW
    status: TriggerStatus = TriggerStatus.PENDING

    def __post_init__(self) -> None:
        object.__setattr__(self, "inputs_required", tuple(self.inputs_required))
        object.__setattr__(self, "inputs_optional", tuple(self.inputs_optional))
        if not self.spec_name:
            raise ValueError("action instance needs a spec name")


def validate_instance(instance: ActionInstance, catalog: ActionCatalog) -> list[str]:
    """Check an instance against the catalog.

    Unknown actions and undeclared inputs are violations, not hard failures:
    evaluation has to tolerate noisy model output.
    """
    spec = catalog.by_name.get(instance.spec_name)
    if spec is None:
        return [f"unknown action {instance.spec_name!r}"]
    out = []
    declared = spec.declared_params
    for p in (*instance.inputs_required, *instance.inputs_optional):
        if p.name not in declared:
            out.append(f"action {instance.spec_name!r}: undeclared input {p.name!r}")
    return out


def update_action_states(
    state: Sequence[ActionInstance],
    new_actions: Sequence[ActionInstance],
    is_triggered: bool,
) -> list[ActionInstance]:
    """Fold new observations into the in-memory action state.

    Triggered actions overwrite a same-name entry (or append) without
    validation. Predicted actions replace an existing entry only when the
    status transition is valid, otherwise the existing entry is retained;
    unseen names always append.
    """
    actions = list(state)
    for new in new_actions:
        idx = next((i for i, a in enumerate(actions) if a.spec_name == new.spec_name), None)
        if idx is None:
            actions.append(new)
        elif is_triggered or is_valid_transition(actions[idx].status, new.status):
            actions[idx] = new
    return actions


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: str
    text: str

    def __post_init__(self) -> None:
        if self.index < 1:
            raise ValueError("turn indices are 1-based")


@dataclass(frozen=True)
class TurnAnnotation:
    """Annotations for one dialogue turn; an empty action list is legal."""

    turn: Turn
    actions: tuple[ActionInstance, ...] = ()
    questions: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "questions", tuple(self.questions))


@dataclass(frozen=True)
class Dialogue:
    id: str
    turns: tuple[TurnAnnotation, ...]
    observed_triggers: tuple[tuple[int, str], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        if self.observed_triggers is not None:
            object.__setattr__(
                self, "observed_triggers", tuple((int(t), a) for t, a in self.observed_triggers)
            )
        indices = [ta.turn.index for ta in self.turns]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError(f"dialogue {self.id!r}: turn indices must run 1..N contiguously")

    def __len__(self) -> int:
        return len(self.turns)


@dataclass(frozen=True)
class ReferenceRange:
    """Per-action ready windows plus every (turn, status) occurrence."""

    per_action: Mapping[str, tuple[int, ...]]
    occurrences: Mapping[str, tuple[tuple[int, TriggerStatus], ...]] = field(default_factory=dict)

    def ready_turns(self, action: str) -> tuple[int, ...]:
        return self.per_action.get(action, ())

    def start(self, action: str) -> int | None:
        """First turn at which the action becomes ready, if it ever does."""
        turns = self.per_action.get(action)
        return turns[0] if turns else None

    def all_ready_turns(self) -> frozenset[int]:
        return frozenset(t for turns in self.per_action.values() for t in turns)


def compute_reference_ranges(dialogue: Dialogue) -> ReferenceRange:
    """Scan a dialogue's annotations into per-action ready windows."""
    ready: dict[str, list[int]] = {}
    occurrences: dict[str, list[tuple[int, TriggerStatus]]] = {}
    for ta in dialogue.turns:
        for inst in ta.actions:
            occurrences.setdefault(inst.spec_name, []).append((ta.turn.index, inst.status))
            if is_ready(inst.status):
                turns = ready.setdefault(inst.spec_name, [])
                if not turns or turns[-1] != ta.turn.index:
                    turns.append(ta.turn.index)
    return ReferenceRange(
        per_action={name: tuple(turns) for name, turns in ready.items()},
        occurrences={name: tuple(occ) for name, occ in occurrences.items()},
    )
