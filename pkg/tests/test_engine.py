from __future__ import annotations

import json

import pytest

from verbalgraph.engine import (
    ABLATION_NO_OPTIMIZER,
    ABLATION_NO_SUMMARY,
    Checkpoint,
    CheckpointMismatchError,
    EnhancedRepresentation,
    PredictionRecord,
    PriorMissingClassError,
    PriorUnknownClassError,
    RoleBackends,
    RunConfig,
    TranscriptRecorder,
    VerbalParameters,
    audit_description_provenance,
    enhance,
    init_theta,
    load_checkpoint,
    optimize,
    predict,
    resume,
    run,
    run_step,
    save_checkpoint,
    summarize,
)
from verbalgraph.graphs import MiniBatch, NodeRecord, TextAttributedGraph
from verbalgraph.hermetic import (
    DEFAULT_CLASS_KEYWORDS,
    build_oracle_backends,
    build_synthetic_graph,
    hermetic_run_config,
)
from verbalgraph.llm import ScriptRule, ScriptedBackend
from verbalgraph.prompts import BLANK_DESCRIPTION, INVALID
from verbalgraph.graphs import make_split

LABELS = ["Case_Based", "Theory"]


def _graph() -> TextAttributedGraph:
    nodes = [
        NodeRecord("n0", "a precedent paper", "Case_Based", "labeled-train"),
        NodeRecord("n1", "a lemma paper", "Theory", "labeled-train"),
        NodeRecord("n2", "another precedent study", "Case_Based", "labeled-train"),
        NodeRecord("n3", "isolated lemma work", "Theory", "labeled-train"),
    ]
    edges = {("n0", "n1"), ("n0", "n2")}
    return TextAttributedGraph(nodes=nodes, edges=edges, label_set=LABELS)


def _config(**overrides) -> RunConfig:
    defaults = dict(batch_size=2, num_steps=2, eval_every=1, hop_count=1, test_size=1)
    defaults.update(overrides)
    return RunConfig(**defaults)


def _always(text_or_fn) -> ScriptedBackend:
    return ScriptedBackend([ScriptRule("", text_or_fn)])


def _theta(**overrides) -> VerbalParameters:
    per_class = {"Case_Based": "about precedent", "Theory": "about lemma"}
    per_class.update(overrides)
    return VerbalParameters(step=0, per_class=per_class, origin="prior")


# --- init -------------------------------------------------------------------


def test_init_theta_blank_placeholder():
    theta = init_theta(LABELS)
    assert theta.step == 0
    assert theta.origin == "blank"
    assert all(desc == BLANK_DESCRIPTION for desc in theta.per_class.values())
    assert list(theta.per_class) == LABELS


def test_init_theta_from_prior_file(tmp_path):
    prior = tmp_path / "prior.txt"
    prior.write_text("[CLASS] Case_Based: reuse of earlier cases\n\n[CLASS] Theory: formal analysis\n")
    theta = init_theta(LABELS, prior)
    assert theta.origin == "prior"
    assert theta.per_class["Case_Based"] == "reuse of earlier cases"
    assert theta.per_class["Theory"] == "formal analysis"


def test_init_theta_prior_missing_class(tmp_path):
    prior = tmp_path / "prior.txt"
    prior.write_text("[CLASS] Theory: formal analysis\n")
    with pytest.raises(PriorMissingClassError, match="Case_Based"):
        init_theta(LABELS, prior)


def test_init_theta_prior_unknown_class(tmp_path):
    prior = tmp_path / "prior.txt"
    prior.write_text("[CLASS] Theory: x\n[CLASS] Case_Based: y\n[CLASS] Astrology: z\n")
    with pytest.raises(PriorUnknownClassError, match="Astrology"):
        init_theta(LABELS, prior)


# --- enhance ----------------------------------------------------------------


def test_enhance_node_only_skips_backend():
    backend = _always("should never be used")
    z = enhance("n0", _graph(), _config(node_only=True), backend)
    assert z.neighbor_summary is None
    assert z.hop_count == 0
    assert backend.call_count == 0


def test_enhance_isolated_node_matches_node_only():
    backend = _always("should never be used")
    with_neighbors_off = enhance("n3", _graph(), _config(node_only=True), backend)
    summary_mode = enhance("n3", _graph(), _config(), backend)
    assert summary_mode.neighbor_summary is None
    assert with_neighbors_off.neighbor_summary is None
    assert backend.call_count == 0


def test_enhance_records_summary_and_transcript():
    def echo_categories(request):
        import re

        cats = re.findall(r'"category": "([^"]+)"', request.rendered())
        return "The papers cited in this essay cover " + ", ".join(cats)

    backend = _always(echo_categories)
    transcript = TranscriptRecorder(None)
    z = enhance("n0", _graph(), _config(), backend, transcript, step=3)
    assert z.neighbor_summary == "The papers cited in this essay cover Theory, Case_Based"
    assert backend.call_count == 1
    entry = transcript.buffer[0]
    assert (entry["step"], entry["role"], entry["node_id"]) == (3, "enhancer", "n0")


def test_enhance_hides_labels_of_test_split_neighbors():
    nodes = [
        NodeRecord("n0", "target", "Case_Based", "labeled-train"),
        NodeRecord("n1", "train neighbor", "Theory", "labeled-train"),
        NodeRecord("n2", "test neighbor", "Case_Based", "unlabeled-test"),
    ]
    graph = TextAttributedGraph(nodes=nodes, edges={("n0", "n1"), ("n0", "n2")}, label_set=LABELS)
    seen = {}

    def capture(request):
        seen["prompt"] = request.rendered()
        return "The papers cited in this essay ..."

    enhance("n0", graph, _config(), _always(capture))
    assert '"content": "train neighbor", "category": "Theory"' in seen["prompt"]
    assert '"content": "test neighbor"}' in seen["prompt"]  # no category leaked


# --- predict ----------------------------------------------------------------


def test_predict_parses_label():
    z = EnhancedRepresentation("n0", "a precedent paper", None, 0)
    record = predict(z, _theta(), _config(), _always("LABEL: Theory"), label_set=LABELS)
    assert record.label == "Theory"
    assert not record.retried


def test_predict_retries_once_then_invalid():
    backend = _always("nothing useful at all")
    transcript = TranscriptRecorder(None)
    z = EnhancedRepresentation("n0", "text", None, 0)
    record = predict(z, _theta(), _config(), backend, transcript, label_set=LABELS)
    assert record.label == INVALID
    assert record.retried
    assert backend.call_count == 2
    assert transcript.buffer[1]["note"] == "parse-retry"
    assert "output only the LABEL line" in transcript.buffer[1]["prompt"]


def test_predict_retry_recovers():
    responses = iter(["garbage no label here or anywhere", "LABEL: Case_Based"])
    backend = _always(lambda request: next(responses))
    z = EnhancedRepresentation("n0", "text", None, 0)
    record = predict(z, _theta(), _config(), backend, label_set=LABELS)
    assert record.label == "Case_Based"
    assert record.retried


# --- optimize ----------------------------------------------------------------


def test_optimize_wrong_prediction_collects_revisions():
    reply = "[CLASS] Case_Based: precedent reuse\n[CLASS] Theory: proofs\n[RATIONALE] both revised"
    z = EnhancedRepresentation("n0", "text", None, 0)
    pred = PredictionRecord("n0", "Theory", "", "", "raw")
    update = optimize(z, "Case_Based", pred, _theta(), _config(), _always(reply))
    assert update.per_class_revisions == {"Case_Based": "precedent reuse", "Theory": "proofs"}
    assert update.rationale == "both revised"
    assert not update.was_correct
    assert not update.skipped


def test_optimize_unusable_output_degrades_to_empty_update():
    z = EnhancedRepresentation("n0", "text", None, 0)
    pred = PredictionRecord("n0", "Theory", "", "", "raw")
    transcript = TranscriptRecorder(None)
    update = optimize(z, "Case_Based", pred, _theta(), _config(), _always("no blocks here"),
                      transcript)
    assert update.per_class_revisions == {}
    assert update.parse_failed
    assert transcript.buffer[0]["note"] == "no-class-blocks"


def test_optimize_errors_only_policy_skips_correct():
    backend = _always("should not be called")
    z = EnhancedRepresentation("n0", "text", None, 0)
    pred = PredictionRecord("n0", "Theory", "", "", "raw")
    update = optimize(z, "Theory", pred, _theta(), _config(optimize_correct=False), backend)
    assert update.skipped
    assert update.was_correct
    assert backend.call_count == 0


def test_optimize_correct_prediction_runs_by_default():
    backend = _always("[CLASS] Theory: refined proofs")
    z = EnhancedRepresentation("n0", "text", None, 0)
    pred = PredictionRecord("n0", "Theory", "", "", "raw")
    update = optimize(z, "Theory", pred, _theta(), _config(), backend)
    assert backend.call_count == 1
    assert update.was_correct
    assert update.per_class_revisions == {"Theory": "refined proofs"}


# --- summarize ---------------------------------------------------------------


def _update(node_id, revisions, was_correct=False):
    from verbalgraph.engine import IntermediateUpdate

    return IntermediateUpdate(node_id=node_id, step=1, per_class_revisions=revisions,
                              rationale="", was_correct=was_correct)


def test_summarize_merges_missing_classes_from_previous():
    theta_prev = _theta()
    backend = _always("[CLASS] Theory: only theory came back")
    theta_next = summarize([_update("n0", {"Theory": "x"})], theta_prev, _config(), backend,
                           label_set=LABELS)
    assert theta_next.step == 1
    assert theta_next.per_class["Theory"] == "only theory came back"
    assert theta_next.per_class["Case_Based"] == theta_prev.per_class["Case_Based"]
    assert theta_next.origin == "summarized"


def test_summarize_all_empty_updates_carries_without_call():
    backend = _always("should not be called")
    theta_prev = _theta()
    theta_next = summarize([_update("n0", {}), _update("n1", {})], theta_prev, _config(), backend,
                           label_set=LABELS)
    assert backend.call_count == 0
    assert theta_next.per_class == theta_prev.per_class
    assert theta_next.step == theta_prev.step + 1


def test_summarize_unparseable_completion_carries_previous():
    backend = _always("rambling, no blocks")
    transcript = TranscriptRecorder(None)
    theta_prev = _theta()
    theta_next = summarize([_update("n0", {"Theory": "x"})], theta_prev, _config(), backend,
                           transcript, label_set=LABELS)
    assert theta_next.per_class == theta_prev.per_class
    assert transcript.buffer[0]["note"] == "no-class-blocks"


# --- run_step ----------------------------------------------------------------


def _step_backends():
    return RoleBackends(
        enhancer=_always("The papers cited in this essay are varied."),
        predictor=_always("LABEL: Theory"),
        optimizer=_always("[CLASS] Case_Based: revised precedent text"),
        summary=_always("[CLASS] Case_Based: consolidated\n[CLASS] Theory: consolidated too"),
    )


def test_run_step_call_counts():
    backends = _step_backends()
    batch = MiniBatch(step_index=1, node_ids=("n0", "n1"))
    theta_next, result = run_step(batch, _theta(), _graph(), _config(), backends)
    assert backends.predictor.call_count == 2
    assert backends.optimizer.call_count == 2
    assert backends.summary.call_count == 1
    assert backends.enhancer.call_count == 2  # both n0 and n1 have neighbors
    assert theta_next.step == 1
    assert result.batch_accuracy == 0.5  # n1 is Theory, n0 is Case_Based


def test_run_step_no_optimizer_freezes_descriptions():
    backends = _step_backends()
    batch = MiniBatch(step_index=1, node_ids=("n0", "n1"))
    theta_prev = _theta()
    theta_next, _ = run_step(batch, theta_prev, _graph(), _config(ablation=ABLATION_NO_OPTIMIZER),
                             backends)
    assert backends.optimizer.call_count == 0
    assert backends.summary.call_count == 0
    assert theta_next.per_class == theta_prev.per_class
    assert theta_next.step == 1


def test_run_step_no_summary_concatenates_in_node_order():
    # deterministic per-node revision text keyed off the node text in the prompt
    def optimizer_responder(request):
        prompt = request.rendered()
        for node_id, marker in [("n0", "a precedent paper"), ("n2", "another precedent study")]:
            if marker in prompt:
                return f"[CLASS] Case_Based: rev-{node_id}"
        return "[CLASS] Theory: rev-unknown"

    backends = RoleBackends(
        enhancer=_always("The papers cited in this essay are varied."),
        predictor=_always("LABEL: Theory"),
        optimizer=_always(optimizer_responder),
        summary=_always("should never run"),
    )
    batch = MiniBatch(step_index=1, node_ids=("n0", "n2"))
    theta_prev = _theta()
    theta_next, _ = run_step(batch, theta_prev, _graph(), _config(ablation=ABLATION_NO_SUMMARY),
                             backends)
    assert backends.summary.call_count == 0
    assert theta_next.per_class["Case_Based"] == "about precedent rev-n0 rev-n2"
    assert theta_next.origin == "ablation-concat"


def test_run_step_no_summary_respects_word_budget():
    long_revision = " ".join(f"w{i}" for i in range(250))
    backends = _step_backends()
    backends.optimizer = _always(f"[CLASS] Case_Based: {long_revision}")
    batch = MiniBatch(step_index=1, node_ids=("n0",))
    theta_next, _ = run_step(batch, _theta(), _graph(),
                             _config(ablation=ABLATION_NO_SUMMARY, max_desc_words=100), backends)
    from verbalgraph.prompts import count_words

    assert count_words(theta_next.per_class["Case_Based"]) <= 100


# --- checkpoints and runs -----------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    from verbalgraph.evaluation import MetricsRecord

    theta = _theta()
    ckpt = Checkpoint(config_digest="abc", step=4, theta=theta, batch_cursor=4,
                      metrics_so_far=[MetricsRecord(0, 0.5, 2, 0)])
    path = tmp_path / "step_0004.json"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path, LABELS)
    assert loaded.step == 4
    assert loaded.theta.per_class == theta.per_class
    assert loaded.metrics_so_far == ckpt.metrics_so_far
    assert loaded.config_digest == "abc"


def test_run_produces_expected_metric_rows(tmp_path, hermetic_graph):
    config = hermetic_run_config(num_steps=10, eval_every=5, split_seed=11, batch_seed=3)
    result = run(config, hermetic_graph, tmp_path / "run", build_oracle_backends())
    assert [m.step for m in result.metrics] == [0, 5, 10]
    assert (tmp_path / "run" / "transcript.jsonl").exists()
    assert (tmp_path / "run" / "theta_final.txt").exists()
    assert sorted(p.name for p in (tmp_path / "run" / "checkpoints").iterdir()) == [
        f"step_{i:04d}.json" for i in range(11)
    ]


def test_resume_from_earlier_checkpoint_reproduces_artifacts(tmp_path, hermetic_graph):
    config = hermetic_run_config(num_steps=4, eval_every=2, split_seed=11, batch_seed=3)
    run_dir = tmp_path / "run"
    run(config, hermetic_graph, run_dir, build_oracle_backends())
    reference = {
        name: (run_dir / name).read_bytes()
        for name in ["metrics.csv", "transcript.jsonl", "theta_final.txt"]
    }
    result = resume(config, hermetic_graph, run_dir, build_oracle_backends(),
                    checkpoint_path=run_dir / "checkpoints" / "step_0002.json")
    assert result.metrics[-1].step == 4
    for name, blob in reference.items():
        assert (run_dir / name).read_bytes() == blob, f"{name} diverged after rewind-resume"


def test_resume_rejects_other_config(tmp_path, hermetic_graph):
    config = hermetic_run_config(num_steps=2, eval_every=1, split_seed=11, batch_seed=3)
    run(config, hermetic_graph, tmp_path / "run", build_oracle_backends())
    other = hermetic_run_config(num_steps=2, eval_every=1, split_seed=11, batch_seed=999)
    with pytest.raises(CheckpointMismatchError):
        resume(other, hermetic_graph, tmp_path / "run", build_oracle_backends())


def test_transcript_buffering_and_discard(tmp_path):
    path = tmp_path / "t.jsonl"
    from verbalgraph.prompts import PromptBundle

    transcript = TranscriptRecorder(path)
    bundle = PromptBundle(system="s", user="u", role_tag="predictor")
    transcript.record(1, "predictor", "n0", bundle, "done")
    assert path.read_text() == ""  # buffered, not yet flushed
    transcript.flush()
    assert len(path.read_text().splitlines()) == 1
    transcript.record(2, "predictor", "n1", bundle, "dropped")
    transcript.discard_buffer()
    transcript.flush()
    assert len(path.read_text().splitlines()) == 1
    entry = json.loads(path.read_text())
    assert entry["seq"] == 1 and entry["completion"] == "done"


def test_audit_provenance_on_hermetic_run(tmp_path, hermetic_graph):
    config = hermetic_run_config(num_steps=6, eval_every=3, split_seed=11, batch_seed=3)
    run_dir = tmp_path / "run"
    run(config, hermetic_graph, run_dir, build_oracle_backends())
    thetas = [
        load_checkpoint(run_dir / "checkpoints" / f"step_{i:04d}.json", hermetic_graph.label_set).theta
        for i in range(7)
    ]
    from verbalgraph.engine import load_transcript

    completions = [e["completion"] for e in load_transcript(run_dir / "transcript.jsonl")]
    report = audit_description_provenance(thetas, completions)
    assert report.fully_accounted
    assert report.total == 6 * len(hermetic_graph.label_set)


def test_theta_validate_rejects_wrong_coverage():
    theta = VerbalParameters(step=0, per_class={"Theory": "x"}, origin="blank")
    with pytest.raises(ValueError):
        theta.validate(LABELS, 200)


def test_node_only_run_never_calls_enhancer(tmp_path, hermetic_graph):
    config = hermetic_run_config(num_steps=4, eval_every=2, split_seed=11, batch_seed=3,
                                 node_only=True)
    backends = build_oracle_backends()
    run(config, hermetic_graph, tmp_path / "run", backends)
    assert backends.enhancer.call_count == 0


def test_run_builds_backends_from_config(tmp_path, hermetic_graph):
    from verbalgraph.hermetic import write_oracle_script
    from verbalgraph.llm import BackendConfig

    script = write_oracle_script(tmp_path / "oracles.json")
    config = hermetic_run_config(
        num_steps=2, eval_every=1, split_seed=11, batch_seed=3,
        backends={"all": BackendConfig(kind="scripted", script_path=str(script))},
    )
    result = run(config, hermetic_graph, tmp_path / "run")
    assert [m.step for m in result.metrics] == [0, 1, 2]


def test_optimizer_and_summary_prompts_embed_descriptions_verbatim():
    from verbalgraph.prompts import render_optimizer_prompt, render_summary_prompt

    per_class = {"Case_Based": "reuses stored precedent episodes",
                 "Theory": "derives formal lemma chains"}
    opt = render_optimizer_prompt("text", None, "Theory", "Case_Based", per_class)
    summ = render_summary_prompt([("n0", {"Theory": "revision text"})], per_class)
    for desc in per_class.values():
        assert desc in opt.user
        assert desc in summ.user
