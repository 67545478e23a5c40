"""The command-line surface, end to end, against the scripted backend.

Creates a dataset and a script file, then drives ingest -> run -> inspect ->
resume -> evaluate -> theory-check exactly as you would from a shell.
"""

import subprocess
import sys
from pathlib import Path
from tempfile import mkdtemp

from verbalgraph import build_synthetic_graph, save_graph, write_oracle_script
import json

root = Path(mkdtemp(prefix="verbalgraph-cli-"))
data, labels = root / "papers.jsonl", root / "papers.labels"
save_graph(build_synthetic_graph(seed=0), data, labels)
script = write_oracle_script(root / "oracles.json")
config = root / "config.json"
config.write_text(json.dumps({
    "dataset": {"data": str(data), "labels": str(labels)},
    "out_dir": str(root / "run"),
    "backend": {"kind": "scripted", "script": str(script)},
    "run": {"batch_size": 8, "num_steps": 10, "eval_every": 5, "test_size": 40,
            "split_seed": 11, "batch_seed": 3, "optimize_correct": False},
}, indent=2))


def cli(*args: str) -> None:
    cmd = [sys.executable, "-m", "verbalgraph.cli", *args]
    print(f"\n$ verbalgraph {' '.join(args)}")
    proc = subprocess.run(cmd, capture_output=True, text=True)
    print(proc.stdout.rstrip() or proc.stderr.rstrip())
    proc.check_returncode()


cli("ingest", "--data", str(data), "--labels", str(labels))
cli("run", "--config", str(config))
cli("inspect", "--run-dir", str(root / "run"), "--step", "10")
cli("resume", "--run-dir", str(root / "run"))
cli("evaluate", "--theta", str(root / "run" / "theta_final.txt"),
    "--data", str(data), "--labels", str(labels),
    "--backend", f"scripted:{script}", "--test-size", "40", "--split-seed", "11")
cli("theory-check", "--trials", "200", "--chain-trials", "100", "--seed", "1")

print(f"\nall artifacts under {root}")
