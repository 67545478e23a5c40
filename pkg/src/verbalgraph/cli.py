"""Command-line front end: ingest, run, resume, evaluate, ablate, inspect, theory-check.

Runs are driven by a declarative JSON config file; every run field can be
overridden by a flag. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine, entropy, evaluation, graphs
from .engine import RoleBackends, RunConfig
from .llm import BackendConfig, LlmError, build_backend
from .prompts import CoTMode, PromptError


class CliError(Exception):
    pass


DOMAIN_ERRORS = (
    CliError,
    graphs.GraphError,
    engine.EngineError,
    evaluation.EvalError,
    LlmError,
    PromptError,
    entropy.InvalidVariableSubsetError,
    ValueError,
    OSError,
)


def _parse_backend_spec(spec: str) -> BackendConfig:
    """`scripted:<script-file>` or `http:<base-url>`."""
    kind, _, rest = spec.partition(":")
    if kind == "scripted" and rest:
        return BackendConfig(kind="scripted", script_path=rest)
    if kind == "http" and rest:
        return BackendConfig(kind="http", base_url=rest)
    raise CliError(f"bad backend spec {spec!r}; expected scripted:<script-file> or http:<base-url>")


def _load_config_file(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}") from exc


def _build_run_config(cfg: dict, args) -> RunConfig:
    run_cfg = dict(cfg.get("run", {}))
    exemplar_path = run_cfg.pop("exemplar_path", None)
    if getattr(args, "exemplar", None):
        exemplar_path = args.exemplar
    overrides = {
        "batch_size": getattr(args, "batch_size", None),
        "temperature": getattr(args, "temperature", None),
        "hop_count": getattr(args, "hop_count", None),
        "prior_path": getattr(args, "prior", None),
        "num_steps": getattr(args, "num_steps", None),
        "eval_every": getattr(args, "eval_every", None),
        "ablation": getattr(args, "ablation", None),
        "split_seed": getattr(args, "split_seed", None),
        "batch_seed": getattr(args, "batch_seed", None),
        "test_size": getattr(args, "test_size", None),
        "max_desc_words": getattr(args, "max_desc_words", None),
        "max_tokens": getattr(args, "max_tokens", None),
        "model": getattr(args, "model", None),
    }
    for key, value in overrides.items():
        if value is not None:
            run_cfg[key] = value
    if getattr(args, "node_only", False):
        run_cfg["node_only"] = True
    if getattr(args, "optimize_errors_only", False):
        run_cfg["optimize_correct"] = False
    config_cot = run_cfg.pop("cot", "zero-shot")
    if isinstance(config_cot, dict):  # config may inline {"kind": ..., "exemplar": ...}
        exemplar = config_cot.get("exemplar", "")
        config_kind = config_cot.get("kind", "zero-shot")
    else:
        exemplar = ""
        config_kind = config_cot
    cot_kind = getattr(args, "cot", None) or config_kind
    if exemplar_path:
        exemplar = Path(exemplar_path).read_text(encoding="utf-8")
    run_cfg["cot"] = CoTMode(kind=cot_kind, exemplar=exemplar)
    return RunConfig(**run_cfg)


def _resolve_backends(cfg: dict, args) -> tuple[RoleBackends, dict]:
    """Backend objects plus the serializable backend config block."""
    if getattr(args, "backend", None):
        backend_cfg = _parse_backend_spec(args.backend)
        role_map = {"all": backend_cfg}
    else:
        block = cfg.get("backend")
        if block is None:
            raise CliError("no backend configured; use --backend or a 'backend' config block")
        if "roles" in block:
            role_map = {role: _backend_from_block(b) for role, b in block["roles"].items()}
        else:
            role_map = {"all": _backend_from_block(block)}
    built = {role: build_backend(bc) for role, bc in role_map.items()}
    default = built.get("all")
    roles = {}
    for role in ("enhancer", "predictor", "optimizer", "summary"):
        roles[role] = built.get(role, default)
        if roles[role] is None:
            raise CliError(f"no backend configured for role {role!r}")
    serializable = {role: bc.to_dict() for role, bc in role_map.items()}
    return RoleBackends(**roles), serializable


def _backend_from_block(block: dict) -> BackendConfig:
    if block.get("kind") == "scripted":
        return BackendConfig(kind="scripted", script_path=block.get("script") or block.get("script_path"))
    if block.get("kind") == "http":
        keys = ("base_url", "api_key", "max_concurrency", "max_attempts", "backoff_ms", "timeout_ms")
        return BackendConfig(kind="http", **{k: block[k] for k in keys if k in block})
    raise CliError(f"backend block needs kind 'scripted' or 'http', got {block.get('kind')!r}")


def _load_split_graph(data: str, labels: str, test_size: int, split_seed: int):
    graph = graphs.load_graph(data, labels)
    if not graph.split_ids(graphs.TEST_SPLIT):
        graph = graphs.make_split(graph, test_size, split_seed)
    return graph


def _cmd_ingest(args) -> int:
    graph = graphs.load_graph(args.data, args.labels)
    print(f"nodes: {len(graph.nodes)}")
    print(f"edges: {len(graph.edges)}")
    print(f"labels: {len(graph.label_set)} ({', '.join(graph.label_set)})")
    labeled = len(graph.labeled_ids())
    print(f"labeled nodes: {labeled}; unlabeled: {len(graph.nodes) - labeled}")
    if args.normalized_data:
        graphs.save_graph(graph, args.normalized_data, args.normalized_labels or args.normalized_data + ".labels")
        print(f"normalized dataset written to {args.normalized_data}")
    return 0


def _cmd_run(args) -> int:
    cfg = _load_config_file(args.config)
    run_config = _build_run_config(cfg, args)
    dataset = cfg.get("dataset") or {}
    data = args.data or dataset.get("data")
    labels = args.labels or dataset.get("labels")
    if not data or not labels:
        raise CliError("dataset paths missing; set config 'dataset' or --data/--labels")
    out_dir = args.out or cfg.get("out_dir")
    if not out_dir:
        raise CliError("output directory missing; set config 'out_dir' or --out")
    backends, backend_block = _resolve_backends(cfg, args)
    graph = _load_split_graph(data, labels, run_config.test_size, run_config.split_seed)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    snapshot = {"dataset": {"data": str(data), "labels": str(labels)},
                "backend_roles": backend_block, "run": run_config.to_dict()}
    (run_dir / "cli_config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
    result = engine.run(run_config, graph, run_dir, backends)
    final = result.metrics[-1]
    print(f"run complete: {len(result.metrics)} metric rows -> {result.metrics_path}")
    print(f"final accuracy at step {final.step}: {final.accuracy:.6f}")
    print(f"descriptions exported to {result.theta_path}")
    return 0


def _cmd_resume(args) -> int:
    run_dir = Path(args.run_dir)
    snapshot_path = run_dir / "cli_config.json"
    if not snapshot_path.exists():
        raise CliError(f"{run_dir} has no cli_config.json; was it created by 'run'?")
    snapshot = json.loads(snapshot_path.read_text(encoding="utf-8"))
    run_config = RunConfig.from_dict(snapshot["run"])
    dataset = snapshot["dataset"]
    graph = _load_split_graph(dataset["data"], dataset["labels"], run_config.test_size, run_config.split_seed)
    if args.backend:
        backends, _ = _resolve_backends({}, args)
    else:
        role_map = {role: BackendConfig(**block) for role, block in snapshot["backend_roles"].items()}
        built = {role: build_backend(bc) for role, bc in role_map.items()}
        default = built.get("all")
        backends = RoleBackends(**{
            role: built.get(role, default) for role in ("enhancer", "predictor", "optimizer", "summary")
        })
    checkpoint = Path(args.checkpoint) if args.checkpoint else None
    result = engine.resume(run_config, graph, run_dir, backends, checkpoint_path=checkpoint)
    final = result.metrics[-1]
    print(f"resume complete: {len(result.metrics)} metric rows -> {result.metrics_path}")
    print(f"final accuracy at step {final.step}: {final.accuracy:.6f}")
    return 0


def _cmd_evaluate(args) -> int:
    graph = _load_split_graph(args.data, args.labels, args.test_size, args.split_seed)
    per_class = engine.read_theta_file(args.theta, graph.label_set)
    theta = engine.VerbalParameters(step=0, per_class=per_class, origin="prior")
    backend_cfg = _parse_backend_spec(args.backend)
    backend = build_backend(backend_cfg)
    backends = RoleBackends.shared(backend)
    config = RunConfig(test_size=args.test_size, split_seed=args.split_seed,
                       hop_count=args.hop_count, node_only=args.node_only)
    record, confusion = evaluation.evaluate_theta(theta, graph, config, backends)
    print(f"test accuracy: {record.accuracy:.6f} ({record.num_test} nodes, "
          f"{record.num_invalid} unparseable)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        evaluation.emit_metrics([record], out / "metrics.csv")
        evaluation.emit_confusion(confusion, out / "confusion.csv")
        print(f"metrics written to {out}")
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config_file(args.config)
    base_config = _build_run_config(cfg, args)
    dataset = cfg.get("dataset") or {}
    data = args.data or dataset.get("data")
    labels = args.labels or dataset.get("labels")
    if not data or not labels:
        raise CliError("dataset paths missing; set config 'dataset' or --data/--labels")
    out_root = Path(args.out or cfg.get("out_dir") or "ablation")
    out_root.mkdir(parents=True, exist_ok=True)
    graph = _load_split_graph(data, labels, base_config.test_size, base_config.split_seed)
    exemplar = base_config.cot.exemplar
    prior = base_config.prior_path
    rows = []
    for ablation in ("none", "no-optimizer", "no-summary"):
        for cot_kind in ("zero-shot", "one-shot"):
            for with_prior in (True, False):
                cell = f"{ablation}_{cot_kind}_{'prior' if with_prior else 'noprior'}"
                if cot_kind == "one-shot" and not exemplar:
                    rows.append((ablation, cot_kind, with_prior, "skipped (no exemplar)", None))
                    continue
                if with_prior and not prior:
                    rows.append((ablation, cot_kind, with_prior, "skipped (no prior file)", None))
                    continue
                variant = replace(
                    base_config,
                    ablation=ablation,
                    cot=CoTMode(kind=cot_kind, exemplar=exemplar if cot_kind == "one-shot" else ""),
                    prior_path=prior if with_prior else None,
                )
                backends, _ = _resolve_backends(cfg, args)
                result = engine.run(variant, graph, out_root / cell, backends)
                rows.append((ablation, cot_kind, with_prior, "ok", result.metrics[-1].accuracy))
    lines = ["variant,cot,prior,status,final_accuracy"]
    print(f"{'variant':<14} {'cot':<10} {'prior':<8} {'final accuracy'}")
    for ablation, cot_kind, with_prior, status, acc in rows:
        acc_text = f"{acc:.6f}" if acc is not None else status
        print(f"{ablation:<14} {cot_kind:<10} {'w/' if with_prior else 'w/o':<8} {acc_text}")
        lines.append(f"{ablation},{cot_kind},{'with' if with_prior else 'without'},{status},"
                     f"{'' if acc is None else f'{acc:.6f}'}")
    (out_root / "ablation.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"grid written to {out_root / 'ablation.csv'}")
    return 0


def _cmd_inspect(args) -> int:
    if args.checkpoint:
        ckpt = engine.load_checkpoint(args.checkpoint)
        current = ckpt.theta
        previous = None
        if args.diff and ckpt.step > 0:
            prev_path = Path(args.checkpoint).parent / f"step_{ckpt.step - 1:04d}.json"
            if prev_path.exists():
                previous = engine.load_checkpoint(prev_path).theta
    elif args.run_dir and args.step is not None:
        ckpt_dir = Path(args.run_dir) / "checkpoints"
        current = engine.load_checkpoint(ckpt_dir / f"step_{args.step:04d}.json").theta
        previous = None
        if args.diff and args.step > 0:
            previous = engine.load_checkpoint(ckpt_dir / f"step_{args.step - 1:04d}.json").theta
    else:
        raise CliError("inspect needs --checkpoint, or --run-dir with --step")
    print(f"descriptions at step {current.step} (origin: {current.origin})")
    for label, desc in current.per_class.items():
        if previous is not None:
            changed = previous.per_class.get(label) != desc
            marker = "*" if changed else " "
            print(f"\n[{marker}] {label}:")
            if changed:
                print(f"    before: {previous.per_class.get(label)}")
                print(f"    after:  {desc}")
            else:
                print(f"    {desc}")
        else:
            print(f"\n{label}:\n    {desc}")
    return 0


def _cmd_theory_check(args) -> int:
    report = entropy.run_suite(trials=args.trials, chain_trials=args.chain_trials, seed=args.seed)
    sample = entropy.verify_theorem(
        entropy.condition_satisfying_joint(np.random.default_rng(args.seed))
    )
    print(f"{'constructed joints':<28} {report.trials}")
    print(f"{'hypotheses held on all':<28} {report.conditions_met_all}")
    print(f"{'conclusion failures':<28} {report.conclusion_failures}")
    print(f"{'max bound violation (bits)':<28} {report.max_bound_violation:.3e}")
    print(f"{'min eps-gap (bits)':<28} {report.min_epsilon_gap:.6f}")
    print(f"{'arbitrary joints':<28} {report.chain_trials}")
    print(f"{'chain failures':<28} {report.chain_failures}")
    print(f"{'max chain slack (bits)':<28} {report.max_chain_slack:.3e}")
    print()
    print("sample report on one constructed joint:")
    print(f"  epsilon        = {sample.epsilon:.6f}")
    print(f"  epsilon_prime  = {sample.epsilon_prime:.6f}")
    print(f"  H(label|input,description) = {sample.lhs:.6f}")
    print(f"  H(label|input)              = {sample.rhs:.6f}")
    print(f"  conditions_met = {sample.conditions_met}, conclusion_holds = {sample.conclusion_holds}")
    return 0 if report.passed else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="verbalgraph",
        description="Iterative natural-language class descriptions for node classification "
                    "on text-attributed graphs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and optionally normalize a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--normalized-data")
    p.add_argument("--normalized-labels")
    p.set_defaults(func=_cmd_ingest)

    def add_run_flags(p):
        p.add_argument("--data")
        p.add_argument("--labels")
        p.add_argument("--out")
        p.add_argument("--backend", help="scripted:<script-file> or http:<base-url>")
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--temperature", type=float)
        p.add_argument("--hop-count", type=int, dest="hop_count")
        p.add_argument("--prior")
        p.add_argument("--num-steps", type=int, dest="num_steps")
        p.add_argument("--eval-every", type=int, dest="eval_every")
        p.add_argument("--ablation", choices=["none", "no-optimizer", "no-summary"])
        p.add_argument("--node-only", action="store_true", dest="node_only")
        p.add_argument("--cot", choices=["zero-shot", "one-shot"])
        p.add_argument("--exemplar", help="text file with the one-shot worked example")
        p.add_argument("--split-seed", type=int, dest="split_seed")
        p.add_argument("--batch-seed", type=int, dest="batch_seed")
        p.add_argument("--test-size", type=int, dest="test_size")
        p.add_argument("--max-desc-words", type=int, dest="max_desc_words")
        p.add_argument("--max-tokens", type=int, dest="max_tokens")
        p.add_argument("--model")
        p.add_argument("--optimize-errors-only", action="store_true", dest="optimize_errors_only")

    p = sub.add_parser("run", help="execute a full run from a config file")
    p.add_argument("--config", required=True)
    add_run_flags(p)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("resume", help="continue a run from its checkpoints")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--backend")
    p.set_defaults(func=_cmd_resume)

    p = sub.add_parser("evaluate", help="score an exported description file on a test split")
    p.add_argument("--theta", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--backend", required=True)
    p.add_argument("--test-size", type=int, default=40, dest="test_size")
    p.add_argument("--split-seed", type=int, default=0, dest="split_seed")
    p.add_argument("--hop-count", type=int, default=1, dest="hop_count")
    p.add_argument("--node-only", action="store_true", dest="node_only")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="run the ablation grid from one config")
    p.add_argument("--config", required=True)
    add_run_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("inspect", help="pretty-print descriptions from a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--run-dir")
    p.add_argument("--step", type=int)
    p.add_argument("--diff", action="store_true")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("theory-check", help="randomized entropy-bound verification")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--chain-trials", type=int, default=500, dest="chain_trials")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_theory_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
