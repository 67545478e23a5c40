from __future__ import annotations

import json
from pathlib import Path

import pytest

from verbalgraph import build_synthetic_graph, make_split


def write_dataset(directory: Path, records: list[dict], labels: list[str]) -> tuple[Path, Path]:
    """Write a JSONL dataset plus label file into `directory`."""
    data_path = directory / "data.jsonl"
    labels_path = directory / "labels.txt"
    with data_path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    labels_path.write_text("".join(f"{label}\n" for label in labels), encoding="utf-8")
    return data_path, labels_path


@pytest.fixture
def tiny_dataset(tmp_path):
    records = [
        {"id": "a", "text": "alpha paper", "label": "A", "neighbors": ["b"]},
        {"id": "b", "text": "beta paper", "label": "B", "neighbors": ["a"]},
    ]
    return write_dataset(tmp_path, records, ["A", "B"])


@pytest.fixture(scope="session")
def hermetic_graph():
    return make_split(build_synthetic_graph(seed=0), test_size=40, seed=11)
