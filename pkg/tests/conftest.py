import json
import random

import pytest

from proactkit.datamodel import (
    ActionCatalog,
    ActionInstance,
    ActionSpec,
    Dialogue,
    Maturity,
    ParameterSpec,
    ParamKind,
    TriggerStatus,
    Turn,
    TurnAnnotation,
)

STATUSES = list(TriggerStatus)


def make_param(name, provided=True, value=None, kind=ParamKind.REQUIRED):
    if provided and value is None:
        value = f"{name}-value"
    return ParameterSpec(name=name, kind=kind, provided=provided, value=value if provided else None)


def make_instance(name, status=TriggerStatus.PENDING, req=(), opt=()):
    return ActionInstance(
        spec_name=name,
        inputs_required=tuple(req),
        inputs_optional=tuple(opt),
        readiness_maturity=Maturity.MEDIUM,
        trigger_confidence=Maturity.MEDIUM,
        status=status,
    )


def make_catalog(specs=None):
    if specs is None:
        specs = [
            ActionSpec("create_ticket", "Open a support ticket", ("customer_id", "issue"), ("priority",)),
            ActionSpec("lookup_account", "Pull up the account", ("customer_id",), ()),
            ActionSpec("send_reminder", "Send a reminder", ("customer_id", "date"), ("channel",)),
        ]
    return ActionCatalog(name="support", version="1.0.0", domain="customer-support", actions=tuple(specs))


def make_dialogue(dialogue_id="d1", annotations=(), n_turns=None, triggers=None):
    """annotations: mapping turn index -> list of ActionInstance."""
    by_turn = dict(annotations)
    n = n_turns or (max(by_turn) if by_turn else 3)
    turns = tuple(
        TurnAnnotation(
            turn=Turn(index=i, speaker="customer" if i % 2 else "agent", text=f"utterance-{dialogue_id}-t{i}"),
            actions=tuple(by_turn.get(i, ())),
        )
        for i in range(1, n + 1)
    )
    return Dialogue(id=dialogue_id, turns=turns, observed_triggers=triggers)


@pytest.fixture
def catalog():
    return make_catalog()


def random_instance(rng: random.Random, names=("a", "b", "c"), max_params=3):
    name = rng.choice(names)
    param_pool = ["p0", "p1", "p2"]
    values = ["1", "2", "x"]

    def params(kind):
        chosen = rng.sample(param_pool, rng.randint(0, max_params))
        out = []
        for p in chosen:
            provided = rng.random() < 0.7
            out.append(
                ParameterSpec(
                    name=p,
                    kind=kind,
                    provided=provided,
                    value=rng.choice(values) if provided else None,
                )
            )
        return tuple(out)

    return ActionInstance(
        spec_name=name,
        inputs_required=params(ParamKind.REQUIRED),
        inputs_optional=params(ParamKind.OPTIONAL),
        readiness_maturity=rng.choice(list(Maturity)),
        trigger_confidence=rng.choice(list(Maturity)),
        status=rng.choice(STATUSES),
    )


def annotation_response(actions):
    """Provider response JSON for a list of (name, status, req, opt) tuples."""
    return json.dumps(
        {
            "proactive_annotations": [
                {
                    "action_opportunity": {
                        "name": name,
                        "inputs": {
                            "required": [
                                {"input_name": p.name, "provided": p.provided, "value": p.value}
                                if p.provided
                                else {"input_name": p.name, "provided": False}
                                for p in req
                            ],
                            "optional": [
                                {"input_name": p.name, "provided": p.provided, "value": p.value}
                                if p.provided
                                else {"input_name": p.name, "provided": False}
                                for p in opt
                            ],
                        },
                        "readiness_maturity": "medium",
                        "trigger_confidence": "high",
                        "action_trigger_status": status.value,
                    }
                }
                for name, status, req, opt in actions
            ]
        }
    )
