"""Scoring a description set on the test split, plus metrics/confusion emission.

Evaluation runs enhance + predict only (never the optimizer or summary roles)
and never mutates the descriptions. Neighbor summaries for test nodes do not
depend on the descriptions, so they are computed once and cached across
evaluations, keyed by node, hop count, and template version.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import TEST_SPLIT, TextAttributedGraph
from .prompts import INVALID, TEMPLATE_VERSION


class EvalError(Exception):
    pass


class EmptyPredictionListError(EvalError):
    pass


class EmptyTestSplitError(EvalError):
    pass


class IoFailureError(EvalError):
    pass


@dataclass
class MetricsRecord:
    step: int
    accuracy: float
    num_test: int
    num_invalid: int


@dataclass
class ConfusionMatrix:
    """Counts indexed (true label, predicted label), with a trailing predicted
    column for unparseable predictions."""

    labels: list[str]
    counts: np.ndarray  # shape (len(labels), len(labels) + 1)

    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> dict[str, int]:
        return {label: int(self.counts[i].sum()) for i, label in enumerate(self.labels)}


def accuracy(pairs: list[tuple[str, str]]) -> float:
    """Fraction of (true, predicted) pairs with exact label equality.

    INVALID predictions never match.
    """
    if not pairs:
        raise EmptyPredictionListError("cannot score an empty prediction list")
    correct = sum(1 for true, pred in pairs if pred != INVALID and pred == true)
    return correct / len(pairs)


class EvalCache:
    """Test-node neighbor summaries, reusable across evaluations and resumes."""

    def __init__(self, entries: dict[str, str | None] | None = None):
        self.entries: dict[str, str | None] = dict(entries or {})
        self._dirty = False

    @staticmethod
    def key(node_id: str, hop_count: int) -> str:
        return f"{node_id}|k={hop_count}|tmpl={TEMPLATE_VERSION}"

    @classmethod
    def load(cls, path) -> "EvalCache":
        path = Path(path)
        if not path.exists():
            return cls()
        return cls(json.loads(path.read_text(encoding="utf-8")))

    def save(self, path) -> None:
        if not self._dirty:
            return
        Path(path).write_text(
            json.dumps(self.entries, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        self._dirty = False

    def get(self, key: str):
        return self.entries.get(key, _MISSING)

    def put(self, key: str, summary: str | None) -> None:
        self.entries[key] = summary
        self._dirty = True


_MISSING = object()


def evaluate_theta(theta, graph: TextAttributedGraph, config, backends, transcript=None,
                   cache: EvalCache | None = None) -> tuple[MetricsRecord, ConfusionMatrix]:
    """Score one description version over every test node."""
    from .engine import EnhancedRepresentation, enhance, predict

    test_nodes = [n for n in graph.nodes if n.split == TEST_SPLIT]
    if not test_nodes:
        raise EmptyTestSplitError("graph has no unlabeled-test nodes; split it first")
    if cache is None:
        cache = EvalCache()
    labels = graph.label_set
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels) + 1), dtype=int)
    pairs: list[tuple[str, str]] = []
    for node in test_nodes:
        key = cache.key(node.id, 0 if config.node_only else config.hop_count)
        summary = cache.get(key)
        if summary is _MISSING:
            z = enhance(node.id, graph, config, backends.enhancer, transcript, step=theta.step)
            cache.put(key, z.neighbor_summary)
        else:
            hop = 0 if config.node_only else config.hop_count
            z = EnhancedRepresentation(node.id, node.text, summary, hop)
        pred = predict(z, theta, config, backends.predictor, transcript,
                       step=theta.step, label_set=labels, note="eval")
        pairs.append((node.label, pred.label))
        col = index.get(pred.label, len(labels))
        counts[index[node.label], col] += 1
    num_invalid = sum(1 for _, pred in pairs if pred == INVALID)
    record = MetricsRecord(step=theta.step, accuracy=accuracy(pairs),
                           num_test=len(pairs), num_invalid=num_invalid)
    return record, ConfusionMatrix(labels=labels, counts=counts)


def emit_metrics(series: list[MetricsRecord], path) -> None:
    """Write the accuracy-vs-step series as CSV (header + one row per record)."""
    if not series:
        raise ValueError("metrics series is empty")
    steps = [m.step for m in series]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ValueError("metrics steps must be strictly increasing")
    lines = ["step,accuracy,num_test,num_invalid"]
    lines.extend(f"{m.step},{m.accuracy:.6f},{m.num_test},{m.num_invalid}" for m in series)
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write metrics to {path}: {exc}") from exc


def read_metrics(path) -> list[MetricsRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    records = []
    for line in lines[1:]:
        step, acc, num_test, num_invalid = line.split(",")
        records.append(MetricsRecord(step=int(step), accuracy=float(acc),
                                     num_test=int(num_test), num_invalid=int(num_invalid)))
    return records


def emit_confusion(matrix: ConfusionMatrix, path) -> None:
    """Write the confusion grid as CSV: rows are true labels, columns predicted
    labels plus INVALID."""
    header = "true_label," + ",".join(matrix.labels) + f",{INVALID}"
    lines = [header]
    for i, label in enumerate(matrix.labels):
        lines.append(label + "," + ",".join(str(int(c)) for c in matrix.counts[i]))
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write confusion matrix to {path}: {exc}") from exc
