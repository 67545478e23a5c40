"""Text-attributed graphs: loading, validation, neighborhood queries, splits, batches.

A graph couples free-text node attributes with an undirected topology. Datasets
are line-delimited JSON records (one node per line) plus a label file with one
class label per line, order significant. Graphs are immutable after load; split
assignment and batching return new objects, so concurrent readers are safe.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

TRAIN_SPLIT = "labeled-train"
TEST_SPLIT = "unlabeled-test"


class GraphError(Exception):
    """Base class for dataset and graph-query failures."""


class MalformedRecordError(GraphError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


class DuplicateNodeIdError(GraphError):
    pass


class DanglingEdgeError(GraphError):
    pass


class UnknownLabelError(GraphError):
    pass


class UnknownNodeError(GraphError):
    pass


class TestSizeTooLargeError(GraphError):
    pass


class NoTrainNodesError(GraphError):
    pass


@dataclass(frozen=True)
class NodeRecord:
    """One node: opaque id, raw text, optional class label, optional split tag.

    `split` is None for nodes without labels; labeled nodes start as
    labeled-train and `make_split` moves a sample of them to unlabeled-test.
    """

    id: str
    text: str
    label: str | None = None
    split: str | None = None


@dataclass(frozen=True)
class MiniBatch:
    step_index: int  # 1-based
    node_ids: tuple[str, ...]


@dataclass
class TextAttributedGraph:
    nodes: list[NodeRecord]
    edges: set[tuple[str, str]]  # canonical (min, max) id pairs
    label_set: list[str]
    _by_id: dict[str, NodeRecord] = field(init=False, repr=False)
    _adjacency: dict[str, set[str]] = field(init=False, repr=False)
    _order: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self._by_id = {n.id: n for n in self.nodes}
        if len(self._by_id) != len(self.nodes):
            raise DuplicateNodeIdError("duplicate node ids in node list")
        if len(set(self.label_set)) < 2:
            raise UnknownLabelError("label set must contain at least 2 distinct labels")
        self._order = {n.id: i for i, n in enumerate(self.nodes)}
        self._adjacency = {n.id: set() for n in self.nodes}
        for u, v in self.edges:
            if u == v:
                raise MalformedRecordError("<edges>", 0, f"self-loop on {u!r}")
            for endpoint in (u, v):
                if endpoint not in self._by_id:
                    raise DanglingEdgeError(f"edge ({u!r}, {v!r}) references unknown node {endpoint!r}")
            self._adjacency[u].add(v)
            self._adjacency[v].add(u)
        for n in self.nodes:
            if n.label is not None and n.label not in self.label_set:
                raise UnknownLabelError(f"node {n.id!r} has label {n.label!r} not in label set")

    def node(self, node_id: str) -> NodeRecord:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node_id!r}") from None

    def one_hop_neighbors(self, node_id: str) -> set[str]:
        """All nodes sharing an edge with `node_id`; never contains the node itself."""
        self.node(node_id)
        return set(self._adjacency[node_id])

    def k_hop_neighbors(self, node_id: str, k: int) -> set[str]:
        """Nodes at shortest-path distance exactly `k` (BFS layering, k >= 1)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.node(node_id)
        distances = {node_id: 0}
        frontier = deque([node_id])
        while frontier:
            current = frontier.popleft()
            if distances[current] >= k:
                continue
            for nxt in self._adjacency[current]:
                if nxt not in distances:
                    distances[nxt] = distances[current] + 1
                    frontier.append(nxt)
        return {n for n, d in distances.items() if d == k}

    def nodes_within_hops(self, node_id: str, k: int) -> list[str]:
        """Neighbors at distance 1..k, ordered by (distance, dataset order)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        collected: list[str] = []
        for layer in range(1, k + 1):
            members = self.k_hop_neighbors(node_id, layer)
            collected.extend(sorted(members, key=self._order.__getitem__))
        return collected

    def labeled_ids(self) -> list[str]:
        return [n.id for n in self.nodes if n.label is not None]

    def split_ids(self, split: str) -> list[str]:
        return [n.id for n in self.nodes if n.split == split]


def load_graph(data_path, labels_path, fmt: str = "jsonl") -> TextAttributedGraph:
    """Read a dataset (JSONL records + label file) into a validated graph.

    Node order is the file order. Labeled nodes start in the labeled-train
    split; records without a label carry no split.
    """
    if fmt != "jsonl":
        raise ValueError(f"unsupported dataset format {fmt!r}")
    data_path = Path(data_path)
    labels_path = Path(labels_path)

    label_set: list[str] = []
    for line_no, line in enumerate(labels_path.read_text(encoding="utf-8").splitlines(), start=1):
        label = line.strip()
        if not label:
            continue
        if label in label_set:
            raise MalformedRecordError(labels_path, line_no, f"duplicate label {label!r}")
        label_set.append(label)
    if len(label_set) < 2:
        raise UnknownLabelError(f"{labels_path}: label set must contain at least 2 labels")

    nodes: list[NodeRecord] = []
    seen: set[str] = set()
    neighbor_lists: dict[str, list[str]] = {}
    with data_path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(data_path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise MalformedRecordError(data_path, line_no, "record is not an object")
            node_id = rec.get("id")
            if not isinstance(node_id, str) or not node_id:
                raise MalformedRecordError(data_path, line_no, "missing or empty 'id'")
            if node_id in seen:
                raise DuplicateNodeIdError(f"{data_path}:{line_no}: duplicate node id {node_id!r}")
            text = rec.get("text")
            if not isinstance(text, str) or not text.strip():
                raise MalformedRecordError(data_path, line_no, "missing or empty 'text'")
            label = rec.get("label")
            if label is not None and not isinstance(label, str):
                raise MalformedRecordError(data_path, line_no, "'label' must be a string or null")
            if label is not None and label not in label_set:
                raise UnknownLabelError(f"{data_path}:{line_no}: unknown label {label!r}")
            neighbors = rec.get("neighbors", [])
            if not isinstance(neighbors, list) or any(not isinstance(n, str) for n in neighbors):
                raise MalformedRecordError(data_path, line_no, "'neighbors' must be a list of id strings")
            if node_id in neighbors:
                raise MalformedRecordError(data_path, line_no, f"self-loop on {node_id!r}")
            seen.add(node_id)
            neighbor_lists[node_id] = neighbors
            split = TRAIN_SPLIT if label is not None else None
            nodes.append(NodeRecord(id=node_id, text=text, label=label, split=split))

    edges: set[tuple[str, str]] = set()
    for node_id, neighbors in neighbor_lists.items():
        for other in neighbors:
            if other not in seen:
                raise DanglingEdgeError(f"{data_path}: node {node_id!r} lists unknown neighbor {other!r}")
            edges.add((min(node_id, other), max(node_id, other)))
    return TextAttributedGraph(nodes=nodes, edges=edges, label_set=label_set)


def save_graph(graph: TextAttributedGraph, data_path, labels_path) -> None:
    """Serialize back to the JSONL + label-file format (round-trips with load_graph)."""
    data_path = Path(data_path)
    labels_path = Path(labels_path)
    labels_path.write_text("".join(f"{label}\n" for label in graph.label_set), encoding="utf-8")
    with data_path.open("w", encoding="utf-8") as fh:
        for node in graph.nodes:
            rec = {
                "id": node.id,
                "text": node.text,
                "label": node.label,
                "neighbors": sorted(graph._adjacency[node.id]),
            }
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def make_split(graph: TextAttributedGraph, test_size: int, seed: int) -> TextAttributedGraph:
    """Mark `test_size` labeled nodes as unlabeled-test, the rest as labeled-train.

    Deterministic for a fixed seed; returns a new graph.
    """
    labeled = graph.labeled_ids()
    if test_size >= len(labeled):
        raise TestSizeTooLargeError(
            f"test_size {test_size} must be smaller than the {len(labeled)} labeled nodes"
        )
    rng = random.Random(seed)
    test_ids = set(rng.sample(labeled, test_size))
    nodes = []
    for node in graph.nodes:
        if node.label is None:
            nodes.append(replace(node, split=None))
        elif node.id in test_ids:
            nodes.append(replace(node, split=TEST_SPLIT))
        else:
            nodes.append(replace(node, split=TRAIN_SPLIT))
    return TextAttributedGraph(nodes=nodes, edges=set(graph.edges), label_set=list(graph.label_set))


def make_batches(graph: TextAttributedGraph, batch_size: int, seed: int, num_steps: int) -> list[MiniBatch]:
    """Seeded one-pass shuffled sweeps over labeled-train nodes, reshuffled per sweep.

    Produces exactly `num_steps` batches; within a sweep every train node
    appears exactly once, so a sweep partitions the train pool.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    if num_steps < 1:
        raise ValueError(f"num_steps must be >= 1, got {num_steps}")
    pool = graph.split_ids(TRAIN_SPLIT)
    if not pool:
        raise NoTrainNodesError("graph has no labeled-train nodes")
    rng = random.Random(seed)
    batches: list[MiniBatch] = []
    while len(batches) < num_steps:
        order = pool[:]
        rng.shuffle(order)
        for start in range(0, len(order), batch_size):
            if len(batches) == num_steps:
                break
            chunk = tuple(order[start:start + batch_size])
            batches.append(MiniBatch(step_index=len(batches) + 1, node_ids=chunk))
    return batches
