"""What each pipeline role contributes: the three ablation variants side by side.

`none` runs the full loop; `no-optimizer` freezes the descriptions at their
initial state (so accuracy stays flat); `no-summary` skips consolidation and
concatenates each batch's raw revisions onto the previous descriptions.
"""

from pathlib import Path
from tempfile import mkdtemp

from verbalgraph import (
    build_oracle_backends,
    build_synthetic_graph,
    hermetic_run_config,
    make_split,
    run,
)

graph = make_split(build_synthetic_graph(seed=0), test_size=40, seed=11)
root = Path(mkdtemp(prefix="verbalgraph-ablate-"))

results = {}
for ablation in ("none", "no-optimizer", "no-summary"):
    config = hermetic_run_config(num_steps=10, eval_every=5, split_seed=11, batch_seed=3,
                                 ablation=ablation)
    backends = build_oracle_backends()
    results[ablation] = (run(config, graph, root / ablation, backends), backends)

print(f"{'step':>6}" + "".join(f"{name:>16}" for name in results))
steps = [m.step for m in results["none"][0].metrics]
for i, step in enumerate(steps):
    row = f"{step:>6}"
    for name, (result, _) in results.items():
        row += f"{result.metrics[i].accuracy:>16.3f}"
    print(row)

print("\nrole call counts per variant:")
for name, (_, backends) in results.items():
    print(f"  {name:<14} predictor={backends.predictor.call_count:4d} "
          f"optimizer={backends.optimizer.call_count:3d} summary={backends.summary.call_count:2d}")

print("\nfinal Theory description per variant:")
for name, (result, _) in results.items():
    print(f"  {name:<14} {result.theta.per_class['Theory']!r}")
