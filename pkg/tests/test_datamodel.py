import itertools

import pytest

from proactkit.datamodel import (
    ActionCatalog,
    ActionSpec,
    CatalogBuildError,
    ParameterSpec,
    ParamKind,
    TriggerStatus,
    catalog_prompt_text,
    compute_reference_ranges,
    estimate_parameter_properties,
    is_ready,
    is_valid_transition,
    render_catalog,
    update_action_states,
    validate_catalog,
    validate_instance,
)
from proactkit.records import catalog_to_json

from conftest import make_catalog, make_dialogue, make_instance


class TestParameterProperties:
    def test_present_everywhere_is_required(self):
        props = estimate_parameter_properties([{"a", "b"}, {"a", "b"}])
        assert props == {"a": ParamKind.REQUIRED, "b": ParamKind.REQUIRED}

    def test_partial_presence_is_optional(self):
        props = estimate_parameter_properties([{"a", "b"}, {"a"}])
        assert props == {"a": ParamKind.REQUIRED, "b": ParamKind.OPTIONAL}

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError, match="no samples"):
            estimate_parameter_properties([])


ONTOLOGY = {
    "name": "support",
    "version": "1.0.0",
    "domain": "customer-support",
    "actions": [{"name": "create_ticket"}],
}
TYPE_SPEC = {
    "create_ticket": {
        "description": "Open a support ticket",
        "backend": "mcp_tool",
        "parameters": ["customer_id", "issue"],
    }
}
PROPERTIES = {"create_ticket": {"customer_id": "required", "issue": "required"}}


class TestRenderCatalog:
    def test_structural(self):
        catalog = render_catalog(ONTOLOGY, TYPE_SPEC, PROPERTIES)
        assert len(catalog.actions) == 1
        spec = catalog.by_name["create_ticket"]
        assert spec.required_params == ("customer_id", "issue")
        assert validate_catalog(catalog) == []

    def test_missing_type_spec_entry(self):
        with pytest.raises(CatalogBuildError, match="no type-spec entry"):
            render_catalog(ONTOLOGY, {}, PROPERTIES)

    def test_missing_property_entry(self):
        with pytest.raises(CatalogBuildError, match="no property entry"):
            render_catalog(ONTOLOGY, TYPE_SPEC, {"create_ticket": {"customer_id": "required"}})

    def test_duplicate_action_name(self):
        ontology = dict(ONTOLOGY, actions=[{"name": "create_ticket"}, {"name": "create_ticket"}])
        with pytest.raises(CatalogBuildError, match="duplicate"):
            render_catalog(ontology, TYPE_SPEC, PROPERTIES)

    def test_double_render_is_byte_identical(self):
        first = catalog_to_json(render_catalog(ONTOLOGY, TYPE_SPEC, PROPERTIES))
        second = catalog_to_json(render_catalog(ONTOLOGY, TYPE_SPEC, PROPERTIES))
        assert first.encode() == second.encode()

    def test_prompt_text_lists_every_action(self, catalog):
        text = catalog_prompt_text(catalog)
        for spec in catalog.actions:
            assert spec.name in text
            assert spec.description in text


class TestValidateCatalog:
    def test_well_formed(self, catalog):
        assert validate_catalog(catalog) == []

    def test_param_in_both_kinds(self):
        spec = ActionSpec("a", "", ("x",), ("x",))
        catalog = ActionCatalog("c", "1", "d", (spec,))
        violations = validate_catalog(catalog)
        assert len(violations) == 1
        assert "both required and optional" in violations[0]

    def test_duplicate_action_names(self):
        spec = ActionSpec("a", "", ("x",), ())
        catalog = ActionCatalog("c", "1", "d", (spec, spec))
        assert sum("duplicate action" in v for v in validate_catalog(catalog)) == 1

    def test_empty_version(self):
        catalog = ActionCatalog("c", "", "d", ())
        assert any("version" in v for v in validate_catalog(catalog))

    def test_unknown_instance_is_violation_not_failure(self, catalog):
        violations = validate_instance(make_instance("not_in_catalog"), catalog)
        assert violations and "unknown action" in violations[0]

    def test_undeclared_input_is_violation(self, catalog):
        inst = make_instance("lookup_account", req=[ParameterSpec("bogus", ParamKind.REQUIRED)])
        assert any("undeclared input" in v for v in validate_instance(inst, catalog))


class TestParameterSpec:
    def test_unprovided_value_rejected(self):
        with pytest.raises(ValueError):
            ParameterSpec(name="x", kind=ParamKind.REQUIRED, provided=False, value="boo")

    def test_empty_name_rejected(self):
        with pytest.raises(ValueError):
            ParameterSpec(name="", kind=ParamKind.REQUIRED)


class TestStatusLattice:
    def test_ready_statuses(self):
        assert is_ready(TriggerStatus.READY_TO_TRIGGER)
        assert is_ready(TriggerStatus.TRIGGERED)
        assert not is_ready(TriggerStatus.PENDING)
        assert not is_ready(TriggerStatus.REPEATABLE)
        assert not is_ready(TriggerStatus.DISMISSED)

    def test_all_25_transitions_accepted(self):
        for a, b in itertools.product(TriggerStatus, TriggerStatus):
            assert is_valid_transition(a, b)

    def test_specific_pairs(self):
        assert is_valid_transition(TriggerStatus.PENDING, TriggerStatus.DISMISSED)
        assert is_valid_transition(TriggerStatus.TRIGGERED, TriggerStatus.TRIGGERED)


class TestUpdateActionStates:
    def test_append_to_empty(self):
        a = make_instance("a")
        assert update_action_states([], [a], is_triggered=False) == [a]
        assert update_action_states([], [a], is_triggered=True) == [a]

    def test_valid_transition_replaces(self):
        old = make_instance("a", TriggerStatus.PENDING)
        new = make_instance("a", TriggerStatus.READY_TO_TRIGGER)
        assert update_action_states([old], [new], is_triggered=False) == [new]

    def test_triggered_overwrites_without_validation(self):
        old = make_instance("a", TriggerStatus.DISMISSED)
        new = make_instance("a", TriggerStatus.TRIGGERED)
        assert update_action_states([old], [new], is_triggered=True) == [new]

    def test_idempotent_for_repeated_nontriggered_update(self):
        state = [make_instance("a", TriggerStatus.PENDING)]
        new = [make_instance("a", TriggerStatus.REPEATABLE)]
        once = update_action_states(state, new, is_triggered=False)
        twice = update_action_states(once, new, is_triggered=False)
        assert once == twice

    def test_scripted_trace(self):
        """Overwrite / append / keep behaviors across a longer update run."""
        state: list = []
        trace = [
            (make_instance("a", TriggerStatus.PENDING), False),
            (make_instance("b", TriggerStatus.PENDING), False),
            (make_instance("a", TriggerStatus.READY_TO_TRIGGER), False),
            (make_instance("c", TriggerStatus.TRIGGERED), True),
            (make_instance("b", TriggerStatus.DISMISSED), False),
            (make_instance("a", TriggerStatus.TRIGGERED), True),
            (make_instance("d", TriggerStatus.PENDING), False),
            (make_instance("c", TriggerStatus.REPEATABLE), False),
            (make_instance("d", TriggerStatus.READY_TO_TRIGGER), False),
            (make_instance("b", TriggerStatus.TRIGGERED), True),
        ]
        for inst, triggered in trace:
            state = update_action_states(state, [inst], is_triggered=triggered)
        by_name = {a.spec_name: a.status for a in state}
        assert [a.spec_name for a in state] == ["a", "b", "c", "d"]
        assert by_name == {
            "a": TriggerStatus.TRIGGERED,
            "b": TriggerStatus.TRIGGERED,
            "c": TriggerStatus.REPEATABLE,
            "d": TriggerStatus.READY_TO_TRIGGER,
        }


class TestReferenceRanges:
    def test_ready_window_and_occurrences(self):
        d = make_dialogue(
            annotations={
                4: [make_instance("a", TriggerStatus.PENDING)],
                5: [make_instance("a", TriggerStatus.READY_TO_TRIGGER)],
                6: [make_instance("a", TriggerStatus.READY_TO_TRIGGER)],
            },
            n_turns=6,
        )
        ranges = compute_reference_ranges(d)
        assert ranges.ready_turns("a") == (5, 6)
        assert (4, TriggerStatus.PENDING) in ranges.occurrences["a"]
        assert ranges.start("a") == 5

    def test_empty_dialogue(self):
        ranges = compute_reference_ranges(make_dialogue(n_turns=2))
        assert ranges.per_action == {}

    def test_triggered_counts_as_ready(self):
        d = make_dialogue(annotations={7: [make_instance("a", TriggerStatus.TRIGGERED)]}, n_turns=7)
        assert compute_reference_ranges(d).ready_turns("a") == (7,)

    def test_matches_bruteforce_scan(self):
        import random

        from conftest import random_instance

        rng = random.Random(7)
        for _ in range(50):
            n = rng.randint(1, 8)
            annotations = {
                t: [random_instance(rng) for _ in range(rng.randint(0, 3))] for t in range(1, n + 1)
            }
            d = make_dialogue(annotations=annotations, n_turns=n)
            ranges = compute_reference_ranges(d)
            names = {i.spec_name for insts in annotations.values() for i in insts}
            for name in names:
                expected = tuple(
                    sorted(
                        {
                            t
                            for t, insts in annotations.items()
                            for i in insts
                            if i.spec_name == name and is_ready(i.status)
                        }
                    )
                )
                assert ranges.ready_turns(name) == expected
            assert ranges.all_ready_turns() <= set(range(1, n + 1))

    def test_noncontiguous_turns_rejected(self):
        from proactkit.datamodel import Dialogue, Turn, TurnAnnotation

        with pytest.raises(ValueError, match="contiguous"):
            Dialogue(
                id="bad",
                turns=(TurnAnnotation(turn=Turn(index=2, speaker="s", text="t")),),
            )
