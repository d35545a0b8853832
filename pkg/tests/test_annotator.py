import json
import re
from pathlib import Path

import pytest

from proactkit.annotator import (
    AnnotatorConfig,
    AnnotationParseError,
    BatchWriteError,
    PromptTemplateError,
    ProviderError,
    annotate_dialogue,
    annotated_output_path,
    build_annotation_prompt,
    dialogue_context_text,
    load_annotator_config,
    parse_annotation_response,
    run_batch,
)
from proactkit.datamodel import TriggerStatus, compute_reference_ranges
from proactkit.records import read_dialogues, read_jsonl

from conftest import annotation_response, make_dialogue, make_param

CURRENT_TURN = re.compile(r'Turn (\d+): (\w+) says: "([^"]*)"')


def scripted_provider(system, user, *, temperature, max_tokens):
    """Deterministic provider: annotates ready actions on even turns."""
    match = CURRENT_TURN.search(user)
    if match is None:
        raise ProviderError("prompt without a current-turn marker")
    turn = int(match.group(1))
    if turn % 2:
        return json.dumps({"proactive_annotations": []})
    return annotation_response(
        [
            (
                "lookup_account",
                TriggerStatus.READY_TO_TRIGGER,
                [make_param("customer_id", value=f"id-{turn}")],
                [],
            )
        ]
    )


class TestPromptConstruction:
    def test_hindsight_includes_every_turn(self, catalog):
        d = make_dialogue(n_turns=5)
        _, user = build_annotation_prompt(d, 2, catalog, with_future=True)
        for i in range(1, 6):
            assert f"utterance-d1-t{i}" in user

    def test_causal_prompt_stops_at_current_turn(self, catalog):
        d = make_dialogue(n_turns=5)
        _, user = build_annotation_prompt(d, 2, catalog, with_future=False)
        assert "utterance-d1-t1" in user and "utterance-d1-t2" in user
        for i in range(3, 6):
            assert f"utterance-d1-t{i}" not in user

    def test_catalog_text_appears_once(self, catalog):
        from proactkit.datamodel import catalog_prompt_text

        d = make_dialogue(n_turns=3)
        _, user = build_annotation_prompt(d, 1, catalog, with_future=True)
        assert user.count(catalog_prompt_text(catalog)) == 1

    def test_prompt_is_deterministic(self, catalog):
        d = make_dialogue(n_turns=3)
        assert build_annotation_prompt(d, 2, catalog, True) == build_annotation_prompt(
            d, 2, catalog, True
        )

    def test_unresolved_placeholder_rejected(self, catalog):
        d = make_dialogue(n_turns=2)
        cfg = AnnotatorConfig(task_template="hello {nonexistent_placeholder}")
        with pytest.raises(PromptTemplateError):
            build_annotation_prompt(d, 1, catalog, True, cfg)

    def test_out_of_range_turn(self, catalog):
        with pytest.raises(ValueError):
            build_annotation_prompt(make_dialogue(n_turns=2), 3, catalog, True)

    def test_context_text_cutoff(self):
        d = make_dialogue(n_turns=4)
        assert "t4" in dialogue_context_text(d)
        assert "t4" not in dialogue_context_text(d, upto=3)


class TestResponseParsing:
    def test_round_trip(self):
        doc = annotation_response(
            [("a", TriggerStatus.PENDING, [make_param("x", value="1")], [])]
        )
        actions, questions = parse_annotation_response(doc, expected_turn=1)
        assert len(actions) == 1
        assert actions[0].spec_name == "a"
        assert questions == ()

    def test_malformed_json(self):
        with pytest.raises(AnnotationParseError):
            parse_annotation_response("not json", 1)

    def test_missing_annotations_array(self):
        with pytest.raises(AnnotationParseError):
            parse_annotation_response(json.dumps({"other": 1}), 1)

    def test_wrong_turn_rejected(self):
        doc = json.dumps({"dialogue_turn": 3, "proactive_annotations": []})
        with pytest.raises(AnnotationParseError):
            parse_annotation_response(doc, expected_turn=2)


class TestAnnotateDialogue:
    def test_scripted_end_to_end_ranges_match_datamodel(self, catalog):
        d = make_dialogue(n_turns=6)
        result = annotate_dialogue(d, catalog, scripted_provider)
        assert len(result.dialogue.turns) == 6
        assert result.failed_turns == ()
        assert result.ranges.ready_turns("lookup_account") == (2, 4, 6)
        assert result.ranges.per_action == compute_reference_ranges(result.dialogue).per_action

    def test_retry_then_success(self, catalog):
        calls = {"n": 0}

        def flaky(system, user, *, temperature, max_tokens):
            calls["n"] += 1
            if calls["n"] <= 2:
                return "garbage"
            return json.dumps({"proactive_annotations": []})

        d = make_dialogue(n_turns=1)
        result = annotate_dialogue(d, catalog, flaky)
        assert result.outcomes[0].retries == 2
        assert not result.outcomes[0].failed

    def test_always_failing_provider_degrades_per_turn(self, catalog):
        def broken(system, user, *, temperature, max_tokens):
            raise ProviderError("backend down")

        d = make_dialogue(n_turns=3)
        result = annotate_dialogue(d, catalog, broken, AnnotatorConfig(max_retries=2))
        assert result.failed_turns == (1, 2, 3)
        assert all(ta.actions == () for ta in result.dialogue.turns)

    def test_unknown_action_kept_and_reported(self, catalog):
        def oracle_with_typo(system, user, *, temperature, max_tokens):
            return annotation_response(
                [("nonexistent_action", TriggerStatus.READY_TO_TRIGGER, [], [])]
            )

        d = make_dialogue(n_turns=1)
        result = annotate_dialogue(d, catalog, oracle_with_typo)
        assert result.dialogue.turns[0].actions[0].spec_name == "nonexistent_action"
        assert any("unknown action" in v for v in result.violations)


class TestRunBatch:
    def make_fixtures(self, n=10):
        return [make_dialogue(dialogue_id=f"d{i:02d}", n_turns=4) for i in range(n)]

    def test_slicing_contract(self, catalog, tmp_path):
        dialogues = self.make_fixtures(10)
        cfg = AnnotatorConfig(start_index=4, max_dialogues=3, max_workers=1)
        report = run_batch(dialogues, catalog, scripted_provider, cfg, tmp_path / "out.jsonl.gz")
        assert report.processed_ids == ("d04", "d05", "d06")

    def test_start_index_beyond_count(self, catalog, tmp_path):
        with pytest.raises(ValueError, match="start_index"):
            run_batch(
                self.make_fixtures(3),
                catalog,
                scripted_provider,
                AnnotatorConfig(start_index=5),
                tmp_path / "out.jsonl.gz",
            )

    def test_parallel_equals_sequential_bytes(self, catalog, tmp_path):
        dialogues = self.make_fixtures(12)
        seq_path = tmp_path / "seq.jsonl.gz"
        par_path = tmp_path / "par.jsonl.gz"
        run_batch(dialogues, catalog, scripted_provider, AnnotatorConfig(max_workers=1), seq_path)
        run_batch(dialogues, catalog, scripted_provider, AnnotatorConfig(max_workers=4), par_path)
        assert seq_path.read_bytes() == par_path.read_bytes()

    def test_output_parses_back_with_ranges(self, catalog, tmp_path):
        dialogues = self.make_fixtures(3)
        out = tmp_path / "out.jsonl.gz"
        run_batch(dialogues, catalog, scripted_provider, AnnotatorConfig(max_workers=2), out)
        docs = list(read_jsonl(out))
        assert len(docs) == 3
        assert all("reference_ranges" in doc for doc in docs)
        parsed = read_dialogues(out)
        assert [d.id for d in parsed] == ["d00", "d01", "d02"]

    def test_resume_processes_remainder_only(self, catalog, tmp_path):
        dialogues = self.make_fixtures(8)
        first = run_batch(
            dialogues,
            catalog,
            scripted_provider,
            AnnotatorConfig(max_dialogues=6),
            tmp_path / "a.jsonl.gz",
        )
        resumed = run_batch(
            dialogues,
            catalog,
            scripted_provider,
            AnnotatorConfig(start_index=6),
            tmp_path / "b.jsonl.gz",
        )
        assert set(first.processed_ids) & set(resumed.processed_ids) == set()
        assert len(first.processed_ids) + len(resumed.processed_ids) == 8

    def test_write_failure_reports_completed(self, catalog, tmp_path):
        dialogues = self.make_fixtures(2)
        target = tmp_path / "missing-dir" / "out.jsonl.gz"
        with pytest.raises(BatchWriteError) as err:
            run_batch(dialogues, catalog, scripted_provider, AnnotatorConfig(), target)
        assert err.value.completed == 0


class TestConfigFile:
    def test_yaml_sections(self, tmp_path):
        config_path = tmp_path / "annotator.yaml"
        config_path.write_text(
            """
llm:
  model: "test-model"
  temperature: 0.3
  max_tokens: 1234
annotation:
  batch_size: 7
  max_retries: 2
  max_workers: 3
  start_index: 1
  annotated_max_dialogues_num: 5
  with_future: false
output:
  output_suffix: "_oracle"
prompts:
  system_prompt: "custom system"
""",
            encoding="utf-8",
        )
        cfg = load_annotator_config(config_path)
        assert cfg.model_id == "test-model"
        assert cfg.temperature == 0.3
        assert cfg.max_tokens == 1234
        assert cfg.batch_size == 7
        assert cfg.max_retries == 2
        assert cfg.max_workers == 3
        assert cfg.start_index == 1
        assert cfg.max_dialogues == 5
        assert cfg.with_future is False
        assert cfg.output_suffix == "_oracle"
        assert cfg.system_template == "custom system"

    def test_output_suffix_path(self):
        assert (
            annotated_output_path("data/dialogues.jsonl.gz").name == "dialogues_annotated.jsonl.gz"
        )
        # plain inputs still produce gzip-compressed outputs
        assert annotated_output_path(Path("x.jsonl"), "_oracle").name == "x_oracle.jsonl.gz"
