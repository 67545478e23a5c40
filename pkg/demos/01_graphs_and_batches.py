"""Working with text-attributed graphs: loading, neighborhoods, splits, batches.

Builds a small synthetic citation graph, writes it in the line-delimited
dataset format, reads it back, and walks through the query surface.
"""

from pathlib import Path
from tempfile import mkdtemp

from verbalgraph import (
    build_synthetic_graph,
    load_graph,
    make_batches,
    make_split,
    save_graph,
)

workdir = Path(mkdtemp(prefix="verbalgraph-demo-"))
print(f"working in {workdir}\n")

# --- build and persist a dataset -------------------------------------------
graph = build_synthetic_graph(seed=0)
data_path, labels_path = workdir / "papers.jsonl", workdir / "papers.labels"
save_graph(graph, data_path, labels_path)
print(f"wrote {len(graph.nodes)} nodes / {len(graph.edges)} edges to {data_path.name}")

graph = load_graph(data_path, labels_path)
print(f"reloaded: {len(graph.nodes)} nodes, labels = {', '.join(graph.label_set)}\n")

# --- neighborhood queries ----------------------------------------------------
node = graph.nodes[0]
print(f"node {node.id} ({node.label}):")
print(f"  text: {node.text[:70]}...")
for k in (1, 2, 3):
    layer = graph.k_hop_neighbors(node.id, k)
    print(f"  exactly {k} hop(s) away: {len(layer)} nodes")
print(f"  ordered within 2 hops: {graph.nodes_within_hops(node.id, 2)[:6]} ...\n")

# --- train/test split and seeded mini-batches --------------------------------
graph = make_split(graph, test_size=40, seed=11)
train = graph.split_ids("labeled-train")
test = graph.split_ids("unlabeled-test")
print(f"split: {len(train)} train / {len(test)} test (seeded, reproducible)")

batches = make_batches(graph, batch_size=8, seed=3, num_steps=12)
print(f"{len(batches)} mini-batches; sizes per sweep: {[len(b.node_ids) for b in batches[:9]]}")
covered = sorted(nid for b in batches[:9] for nid in b.node_ids)
print(f"first sweep covers every train node exactly once: {covered == sorted(train)}")
