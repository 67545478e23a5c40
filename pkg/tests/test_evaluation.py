from __future__ import annotations

import random

import pytest

from verbalgraph.engine import RoleBackends, RunConfig, TranscriptRecorder, VerbalParameters
from verbalgraph.evaluation import (
    EmptyPredictionListError,
    EmptyTestSplitError,
    EvalCache,
    MetricsRecord,
    accuracy,
    emit_confusion,
    emit_metrics,
    evaluate_theta,
    read_metrics,
)
from verbalgraph.graphs import NodeRecord, TextAttributedGraph
from verbalgraph.llm import ScriptRule, ScriptedBackend
from verbalgraph.prompts import INVALID

LABELS = ["Case_Based", "Theory"]


def _graph(num_test: int = 4) -> TextAttributedGraph:
    nodes = []
    for i in range(num_test):
        label = LABELS[i % 2]
        nodes.append(NodeRecord(f"t{i}", f"test paper {i} about {label}", label, "unlabeled-test"))
    nodes.append(NodeRecord("train0", "train paper", "Case_Based", "labeled-train"))
    edges = {(f"t{i}", "train0") for i in range(num_test)}
    return TextAttributedGraph(nodes=nodes, edges=edges, label_set=LABELS)


def _theta() -> VerbalParameters:
    return VerbalParameters(step=0, per_class={"Case_Based": "precedent work", "Theory": "lemma work"},
                            origin="prior")


def _echo_true_label_backend() -> ScriptedBackend:
    def responder(request):
        prompt = request.rendered()
        # the test node text names its own label
        return "LABEL: Theory" if "about Theory" in prompt else "LABEL: Case_Based"

    return ScriptedBackend([ScriptRule("", responder)])


def _backends(predictor=None) -> RoleBackends:
    return RoleBackends(
        enhancer=ScriptedBackend([ScriptRule("", "The papers cited in this essay are related.")]),
        predictor=predictor or _echo_true_label_backend(),
        optimizer=ScriptedBackend([ScriptRule("", "should never be called")]),
        summary=ScriptedBackend([ScriptRule("", "should never be called")]),
    )


# --- accuracy ----------------------------------------------------------------


def test_accuracy_all_correct():
    assert accuracy([("A", "A"), ("B", "B")]) == 1.0


def test_accuracy_matches_reported_granularity():
    pairs = [("A", "A")] * 27 + [("A", "B")] * 13
    assert accuracy(pairs) == 0.675


def test_accuracy_invalid_counts_as_wrong():
    pairs = [("A", "A")] * 39 + [("A", INVALID)]
    assert accuracy(pairs) == 0.975


def test_accuracy_rejects_empty_list():
    with pytest.raises(EmptyPredictionListError):
        accuracy([])


def test_accuracy_permutation_invariant():
    rng = random.Random(0)
    pairs = [("A", rng.choice(["A", "B"])) for _ in range(37)]
    shuffled = pairs[:]
    rng.shuffle(shuffled)
    assert accuracy(pairs) == accuracy(shuffled)


# --- evaluate_theta ------------------------------------------------------------


def test_evaluate_all_correct_gives_diagonal_confusion():
    graph = _graph(4)
    record, confusion = evaluate_theta(_theta(), graph, RunConfig(), _backends())
    assert record.accuracy == 1.0
    assert record.num_test == 4
    assert record.num_invalid == 0
    assert confusion.total() == 4
    for i, label in enumerate(confusion.labels):
        row_total = confusion.counts[i].sum()
        assert confusion.counts[i, i] == row_total


def test_evaluate_never_calls_optimizer_or_summary():
    backends = _backends()
    evaluate_theta(_theta(), _graph(4), RunConfig(), backends)
    assert backends.optimizer.call_count == 0
    assert backends.summary.call_count == 0


def test_evaluate_caches_enhancer_summaries():
    backends = _backends()
    cache = EvalCache()
    config = RunConfig()
    evaluate_theta(_theta(), _graph(4), config, backends, cache=cache)
    first_calls = backends.enhancer.call_count
    record2, _ = evaluate_theta(_theta(), _graph(4), config, backends, cache=cache)
    assert backends.enhancer.call_count == first_calls  # no new enhancer work
    assert first_calls == 4
    assert record2.accuracy == 1.0


def test_evaluate_twice_is_identical():
    backends = _backends()
    cache = EvalCache()
    r1, _ = evaluate_theta(_theta(), _graph(4), RunConfig(), backends, cache=cache)
    r2, _ = evaluate_theta(_theta(), _graph(4), RunConfig(), backends, cache=cache)
    assert r1 == r2


def test_evaluate_requires_test_split():
    nodes = [NodeRecord("a", "x", "Case_Based", "labeled-train"),
             NodeRecord("b", "y", "Theory", "labeled-train")]
    graph = TextAttributedGraph(nodes=nodes, edges=set(), label_set=LABELS)
    with pytest.raises(EmptyTestSplitError):
        evaluate_theta(_theta(), graph, RunConfig(), _backends())


def test_evaluate_counts_invalid_predictions():
    backend = ScriptedBackend([ScriptRule("", "no label anywhere in this text")])
    record, confusion = evaluate_theta(_theta(), _graph(4), RunConfig(), _backends(backend))
    assert record.num_invalid == 4
    assert record.accuracy == 0.0
    assert confusion.counts[:, -1].sum() == 4  # INVALID column


def test_evaluate_accuracy_quantized_to_test_size():
    rng = random.Random(1)

    def flaky(request):
        return "LABEL: Theory" if rng.random() < 0.5 else "LABEL: Case_Based"

    backend = ScriptedBackend([ScriptRule("", flaky)])
    record, _ = evaluate_theta(_theta(), _graph(40), RunConfig(), _backends(backend))
    assert record.num_test == 40
    scaled = record.accuracy * 40
    assert abs(scaled - round(scaled)) < 1e-9


def test_evaluate_records_transcript_with_eval_note():
    transcript = TranscriptRecorder(None)
    evaluate_theta(_theta(), _graph(2), RunConfig(), _backends(), transcript)
    predictor_entries = [e for e in transcript.buffer if e["role"] == "predictor"]
    assert predictor_entries
    assert all(e["note"] == "eval" for e in predictor_entries)


# --- metrics file ---------------------------------------------------------------


def test_emit_metrics_row_count(tmp_path):
    series = [MetricsRecord(step=s, accuracy=s / 100, num_test=40, num_invalid=0)
              for s in range(0, 85, 5)]
    path = tmp_path / "metrics.csv"
    emit_metrics(series, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 18  # header + 17 rows
    assert lines[0] == "step,accuracy,num_test,num_invalid"
    assert lines[1] == "0,0.000000,40,0"


def test_metrics_round_trip(tmp_path):
    series = [MetricsRecord(0, 0.675, 40, 0), MetricsRecord(5, 0.875, 40, 1)]
    path = tmp_path / "metrics.csv"
    emit_metrics(series, path)
    assert read_metrics(path) == series


def test_emit_metrics_requires_increasing_steps(tmp_path):
    series = [MetricsRecord(5, 0.5, 40, 0), MetricsRecord(5, 0.6, 40, 0)]
    with pytest.raises(ValueError):
        emit_metrics(series, tmp_path / "m.csv")


def test_emit_metrics_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_metrics([], tmp_path / "m.csv")


def test_emit_confusion_layout(tmp_path):
    import numpy as np

    from verbalgraph.evaluation import ConfusionMatrix

    counts = np.array([[3, 1, 0], [0, 2, 1]])
    matrix = ConfusionMatrix(labels=LABELS, counts=counts)
    path = tmp_path / "confusion.csv"
    emit_confusion(matrix, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "true_label,Case_Based,Theory,INVALID"
    assert lines[1] == "Case_Based,3,1,0"
    assert lines[2] == "Theory,0,2,1"
    assert matrix.row_sums() == {"Case_Based": 4, "Theory": 3}
