"""The optimization loop: enhance, predict, optimize, summarize over mini-batches.

Model state is a set of per-class natural-language descriptions, versioned by
step. Each step consumes one mini-batch, proposes per-node description
revisions, and consolidates them into the next version. Every prompt and
completion is appended to a transcript before parsing, buffered per step and
flushed only at step boundaries, so an aborted step leaves no partial
artifacts on disk. Checkpoints are written every step and a run can resume
from any of them, reproducing the uninterrupted artifacts byte for byte under
scripted backends.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .graphs import TRAIN_SPLIT, TextAttributedGraph, make_batches
from .llm import BackendConfig, ChatMessage, ChatRequest, LlmError, build_backend
from .prompts import (
    BLANK_DESCRIPTION,
    ENHANCER,
    INVALID,
    OPTIMIZER,
    PREDICTOR,
    SUMMARY,
    CoTMode,
    NoClassBlocksFoundError,
    PromptBundle,
    count_words,
    normalize_label,
    parse_prediction,
    parse_theta_text,
    render_enhancer_prompt,
    render_optimizer_prompt,
    render_predictor_prompt,
    render_summary_prompt,
    scan_class_blocks,
    truncate_words,
)
from .evaluation import EvalCache, MetricsRecord, emit_confusion, emit_metrics, evaluate_theta

ORIGIN_PRIOR = "prior"
ORIGIN_BLANK = "blank"
ORIGIN_SUMMARIZED = "summarized"
ORIGIN_CONCAT = "ablation-concat"

ABLATION_NONE = "none"
ABLATION_NO_OPTIMIZER = "no-optimizer"
ABLATION_NO_SUMMARY = "no-summary"

STRICT_RETRY_SUFFIX = (
    "Your previous answer could not be parsed. Answer again and output only the LABEL line, "
    'exactly of the form "LABEL: <one label from the candidate list>".'
)


class EngineError(Exception):
    pass


class PriorMissingClassError(EngineError):
    pass


class PriorUnknownClassError(EngineError):
    pass


class CheckpointMismatchError(EngineError):
    pass


class RunAbortedError(EngineError):
    def __init__(self, message: str, last_checkpoint: Path | None):
        super().__init__(message)
        self.last_checkpoint = last_checkpoint


@dataclass
class VerbalParameters:
    """Versioned per-class descriptions; the whole of the model's learned state."""

    step: int
    per_class: dict[str, str]
    origin: str = ORIGIN_BLANK

    def validate(self, label_set: list[str], max_desc_words: int) -> None:
        if list(self.per_class) != list(label_set):
            raise ValueError("per_class keys must cover the label set exactly, in order")
        for label, desc in self.per_class.items():
            if count_words(desc) > max_desc_words:
                raise ValueError(f"description for {label!r} exceeds {max_desc_words} words")


@dataclass
class EnhancedRepresentation:
    node_id: str
    own_text: str
    neighbor_summary: str | None
    hop_count: int


@dataclass
class PredictionRecord:
    node_id: str
    label: str  # label-set member or INVALID
    judgment: str
    analysis: str
    raw: str
    retried: bool = False


@dataclass
class IntermediateUpdate:
    node_id: str
    step: int
    per_class_revisions: dict[str, str]
    rationale: str
    was_correct: bool
    skipped: bool = False
    parse_failed: bool = False


@dataclass
class StepResult:
    step: int
    predictions: list[PredictionRecord]
    true_labels: dict[str, str]
    updates: list[IntermediateUpdate]
    batch_accuracy: float


@dataclass
class RunConfig:
    batch_size: int = 8
    temperature: float = 0.1
    hop_count: int = 1
    cot: CoTMode = field(default_factory=CoTMode)
    prior_path: str | None = None
    num_steps: int = 80
    eval_every: int = 5
    ablation: str = ABLATION_NONE
    node_only: bool = False
    split_seed: int = 0
    batch_seed: int = 0
    test_size: int = 40
    max_desc_words: int = 200
    max_tokens: int = 1024
    model: str = "default"
    optimize_correct: bool = True  # False restricts the optimizer to mispredicted nodes
    backends: dict[str, BackendConfig] | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.num_steps < 1 or self.eval_every < 1:
            raise ValueError("batch_size, num_steps and eval_every must all be >= 1")
        if self.ablation not in (ABLATION_NONE, ABLATION_NO_OPTIMIZER, ABLATION_NO_SUMMARY):
            raise ValueError(f"unknown ablation {self.ablation!r}")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "temperature": self.temperature,
            "hop_count": self.hop_count,
            "cot": {"kind": self.cot.kind, "exemplar": self.cot.exemplar},
            "prior_path": self.prior_path,
            "num_steps": self.num_steps,
            "eval_every": self.eval_every,
            "ablation": self.ablation,
            "node_only": self.node_only,
            "split_seed": self.split_seed,
            "batch_seed": self.batch_seed,
            "test_size": self.test_size,
            "max_desc_words": self.max_desc_words,
            "max_tokens": self.max_tokens,
            "model": self.model,
            "optimize_correct": self.optimize_correct,
            "backends": {role: cfg.to_dict() for role, cfg in self.backends.items()}
            if self.backends
            else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        cot = data.get("cot") or {}
        data["cot"] = CoTMode(kind=cot.get("kind", "zero-shot"), exemplar=cot.get("exemplar", ""))
        backends = data.get("backends")
        if backends:
            data["backends"] = {role: BackendConfig(**cfg) for role, cfg in backends.items()}
        return cls(**data)

    def digest(self) -> str:
        payload = self.to_dict()
        if self.prior_path and Path(self.prior_path).exists():
            payload["prior_sha256"] = hashlib.sha256(Path(self.prior_path).read_bytes()).hexdigest()
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class RoleBackends:
    """One completion backend per pipeline role (they may all be the same object)."""

    enhancer: object
    predictor: object
    optimizer: object
    summary: object

    @classmethod
    def shared(cls, backend) -> "RoleBackends":
        return cls(enhancer=backend, predictor=backend, optimizer=backend, summary=backend)

    @classmethod
    def from_config(cls, config: RunConfig) -> "RoleBackends":
        if not config.backends:
            raise ValueError("config declares no backends; pass backends explicitly")
        built = {role: build_backend(cfg) for role, cfg in config.backends.items()}
        default = built.get("all")
        roles = {}
        for role in (ENHANCER, PREDICTOR, OPTIMIZER, SUMMARY):
            backend = built.get(role, default)
            if backend is None:
                raise ValueError(f"no backend configured for role {role!r}")
            roles[role] = backend
        return cls(**roles)


class TranscriptRecorder:
    """Ordered prompt/completion log with per-step buffering.

    Entries carry a monotone sequence number and are flushed to a JSON-lines
    file only at step boundaries; `discard_buffer` drops the un-flushed tail
    when a step aborts.
    """

    def __init__(self, path: Path | None, start_seq: int = 1, append: bool = False):
        self.path = Path(path) if path is not None else None
        self.buffer: list[dict] = []
        self.entries: list[dict] = []
        self.next_seq = start_seq
        if self.path is not None and not append:
            self.path.write_text("", encoding="utf-8")

    def record(self, step: int, role: str, node_id: str | None, bundle: PromptBundle,
               completion: str, note: str = "") -> dict:
        entry = {
            "seq": self.next_seq,
            "step": step,
            "role": role,
            "node_id": node_id,
            "system": bundle.system,
            "prompt": bundle.user,
            "completion": completion,
            "note": note,
        }
        self.next_seq += 1
        self.buffer.append(entry)
        return entry

    def flush(self) -> None:
        if not self.buffer:
            return
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                for entry in self.buffer:
                    fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
        self.entries.extend(self.buffer)
        self.buffer = []

    def discard_buffer(self) -> None:
        self.buffer = []

    def completions(self) -> list[str]:
        return [e["completion"] for e in self.entries + self.buffer]


def load_transcript(path) -> list[dict]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def _request(bundle: PromptBundle, config: RunConfig) -> ChatRequest:
    return ChatRequest(
        messages=[ChatMessage("system", bundle.system), ChatMessage("user", bundle.user)],
        model=config.model,
        temperature=config.temperature,
        max_tokens=config.max_tokens,
    )


def read_theta_file(path, label_set: list[str], max_desc_words: int = 200) -> dict[str, str]:
    """Strictly read a description file: every class covered, no strangers."""
    text = Path(path).read_text(encoding="utf-8")
    per: dict[str, str] = {}
    for raw_label, desc in scan_class_blocks(text):
        label = normalize_label(raw_label, label_set)
        if label is None:
            raise PriorUnknownClassError(f"{path}: unknown class {raw_label!r}")
        per[label] = truncate_words(desc, max_desc_words)
    missing = [label for label in label_set if label not in per]
    if missing:
        raise PriorMissingClassError(f"{path}: no description for {', '.join(missing)}")
    return {label: per[label] for label in label_set}


def write_theta_file(theta: VerbalParameters, path) -> None:
    blocks = "\n\n".join(f"[CLASS] {label}: {desc}" for label, desc in theta.per_class.items())
    Path(path).write_text(blocks + "\n", encoding="utf-8")


def init_theta(label_set: list[str], prior_path=None, max_desc_words: int = 200) -> VerbalParameters:
    """Step-0 descriptions: from a prior file, or the fixed blank placeholder."""
    if prior_path is None:
        per_class = {label: BLANK_DESCRIPTION for label in label_set}
        return VerbalParameters(step=0, per_class=per_class, origin=ORIGIN_BLANK)
    per_class = read_theta_file(prior_path, label_set, max_desc_words)
    return VerbalParameters(step=0, per_class=per_class, origin=ORIGIN_PRIOR)


def enhance(node_id: str, graph: TextAttributedGraph, config: RunConfig, backend,
            transcript: TranscriptRecorder | None = None, step: int = 0) -> EnhancedRepresentation:
    """Build the node's enhanced representation; one completion unless the
    neighborhood is empty or node-only mode is on."""
    node = graph.node(node_id)
    if config.node_only or config.hop_count == 0:
        return EnhancedRepresentation(node_id, node.text, None, 0)
    neighbor_ids = graph.nodes_within_hops(node_id, config.hop_count)
    if not neighbor_ids:
        return EnhancedRepresentation(node_id, node.text, None, config.hop_count)
    infos = []
    for nid in neighbor_ids:
        neighbor = graph.node(nid)
        category = neighbor.label if neighbor.split == TRAIN_SPLIT else None
        infos.append((neighbor.text, category))
    bundle = render_enhancer_prompt(infos)
    response = backend.complete(_request(bundle, config))
    if transcript is not None:
        transcript.record(step, ENHANCER, node_id, bundle, response.text)
    return EnhancedRepresentation(node_id, node.text, response.text, config.hop_count)


def predict(z: EnhancedRepresentation, theta: VerbalParameters, config: RunConfig, backend,
            transcript: TranscriptRecorder | None = None, step: int = 0,
            label_set: list[str] | None = None, note: str = "") -> PredictionRecord:
    """One predictor completion, plus at most one retry when the label is unparseable."""
    labels = label_set if label_set is not None else list(theta.per_class)
    bundle = render_predictor_prompt(z.own_text, z.neighbor_summary, theta.per_class, config.cot, labels)
    response = backend.complete(_request(bundle, config))
    if transcript is not None:
        transcript.record(step, PREDICTOR, z.node_id, bundle, response.text, note=note)
    parsed = parse_prediction(response.text, labels)
    retried = False
    if parsed.label == INVALID:
        stricter = PromptBundle(
            system=bundle.system, user=bundle.user + "\n\n" + STRICT_RETRY_SUFFIX, role_tag=bundle.role_tag
        )
        response = backend.complete(_request(stricter, config))
        if transcript is not None:
            retry_note = f"{note}+parse-retry" if note else "parse-retry"
            transcript.record(step, PREDICTOR, z.node_id, stricter, response.text, note=retry_note)
        parsed = parse_prediction(response.text, labels)
        retried = True
    return PredictionRecord(
        node_id=z.node_id,
        label=parsed.label,
        judgment=parsed.judgment,
        analysis=parsed.analysis,
        raw=parsed.raw,
        retried=retried,
    )


def optimize(z: EnhancedRepresentation, y_true: str, prediction: PredictionRecord,
             theta_prev: VerbalParameters, config: RunConfig, backend,
             transcript: TranscriptRecorder | None = None, step: int = 0) -> IntermediateUpdate:
    """Ask for per-class revisions for one node; unusable output degrades to an
    empty update instead of failing the step."""
    was_correct = prediction.label == y_true
    if was_correct and not config.optimize_correct:
        return IntermediateUpdate(
            node_id=z.node_id, step=step, per_class_revisions={}, rationale="",
            was_correct=True, skipped=True,
        )
    bundle = render_optimizer_prompt(
        z.own_text, z.neighbor_summary, y_true, prediction.label,
        theta_prev.per_class, config.max_desc_words,
    )
    response = backend.complete(_request(bundle, config))
    entry = None
    if transcript is not None:
        entry = transcript.record(step, OPTIMIZER, z.node_id, bundle, response.text)
    try:
        parsed = parse_theta_text(response.text, list(theta_prev.per_class), config.max_desc_words)
        revisions, rationale, parse_failed = parsed.per_class, parsed.rationale, False
    except NoClassBlocksFoundError:
        revisions, rationale, parse_failed = {}, "", True
        if entry is not None:
            entry["note"] = "no-class-blocks"
    return IntermediateUpdate(
        node_id=z.node_id, step=step, per_class_revisions=revisions, rationale=rationale,
        was_correct=was_correct, parse_failed=parse_failed,
    )


def summarize(updates: list[IntermediateUpdate], theta_prev: VerbalParameters, config: RunConfig,
              backend, transcript: TranscriptRecorder | None = None, step: int = 0,
              label_set: list[str] | None = None) -> VerbalParameters:
    """Consolidate a batch's revisions into the next description set.

    Classes missing from the parsed completion inherit the previous
    description; with nothing to consolidate the previous contents carry over
    without an LLM call.
    """
    labels = label_set if label_set is not None else list(theta_prev.per_class)
    usable = [u for u in updates if u.per_class_revisions]
    if not usable:
        return VerbalParameters(step=theta_prev.step + 1, per_class=dict(theta_prev.per_class),
                                origin=theta_prev.origin)
    bundle = render_summary_prompt(
        [(u.node_id, u.per_class_revisions) for u in usable],
        theta_prev.per_class, config.max_desc_words,
    )
    response = backend.complete(_request(bundle, config))
    entry = None
    if transcript is not None:
        entry = transcript.record(step, SUMMARY, None, bundle, response.text)
    try:
        parsed = parse_theta_text(response.text, labels, config.max_desc_words).per_class
    except NoClassBlocksFoundError:
        if entry is not None:
            entry["note"] = "no-class-blocks"
        return VerbalParameters(step=theta_prev.step + 1, per_class=dict(theta_prev.per_class),
                                origin=theta_prev.origin)
    per_class = {label: parsed.get(label, theta_prev.per_class[label]) for label in labels}
    return VerbalParameters(step=theta_prev.step + 1, per_class=per_class, origin=ORIGIN_SUMMARIZED)


def run_step(batch, theta_prev: VerbalParameters, graph: TextAttributedGraph, config: RunConfig,
             backends: RoleBackends, transcript: TranscriptRecorder | None = None) -> tuple[VerbalParameters, StepResult]:
    """Process one mini-batch and produce the next description version."""
    label_set = graph.label_set
    step = batch.step_index
    predictions: list[PredictionRecord] = []
    true_labels: dict[str, str] = {}
    updates: list[IntermediateUpdate] = []
    for node_id in batch.node_ids:
        node = graph.node(node_id)
        z = enhance(node_id, graph, config, backends.enhancer, transcript, step)
        pred = predict(z, theta_prev, config, backends.predictor, transcript, step, label_set)
        predictions.append(pred)
        true_labels[node_id] = node.label
        if config.ablation != ABLATION_NO_OPTIMIZER:
            updates.append(
                optimize(z, node.label, pred, theta_prev, config, backends.optimizer, transcript, step)
            )

    if config.ablation == ABLATION_NO_OPTIMIZER:
        theta_next = VerbalParameters(step=theta_prev.step + 1, per_class=dict(theta_prev.per_class),
                                      origin=theta_prev.origin)
    elif config.ablation == ABLATION_NO_SUMMARY:
        per_class = {}
        for label in label_set:
            parts = [theta_prev.per_class[label]]
            parts.extend(u.per_class_revisions[label] for u in updates if label in u.per_class_revisions)
            per_class[label] = truncate_words(" ".join(p for p in parts if p), config.max_desc_words)
        theta_next = VerbalParameters(step=theta_prev.step + 1, per_class=per_class, origin=ORIGIN_CONCAT)
    else:
        theta_next = summarize(updates, theta_prev, config, backends.summary, transcript, step, label_set)

    correct = sum(1 for p in predictions if p.label == true_labels[p.node_id])
    result = StepResult(step=step, predictions=predictions, true_labels=true_labels,
                        updates=updates, batch_accuracy=correct / len(predictions))
    return theta_next, result


@dataclass
class Checkpoint:
    config_digest: str
    step: int
    theta: VerbalParameters
    batch_cursor: int
    metrics_so_far: list[MetricsRecord]


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    payload = {
        "config_digest": ckpt.config_digest,
        "step": ckpt.step,
        "theta": {"step": ckpt.theta.step, "origin": ckpt.theta.origin, "per_class": ckpt.theta.per_class},
        "batch_cursor": ckpt.batch_cursor,
        "metrics_so_far": [
            {"step": m.step, "accuracy": m.accuracy, "num_test": m.num_test, "num_invalid": m.num_invalid}
            for m in ckpt.metrics_so_far
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
                          encoding="utf-8")


def load_checkpoint(path, label_set: list[str] | None = None) -> Checkpoint:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    per_class = data["theta"]["per_class"]
    if label_set is not None:
        per_class = {label: per_class[label] for label in label_set}
    theta = VerbalParameters(step=data["theta"]["step"], per_class=per_class, origin=data["theta"]["origin"])
    metrics = [MetricsRecord(**row) for row in data["metrics_so_far"]]
    return Checkpoint(
        config_digest=data["config_digest"], step=data["step"], theta=theta,
        batch_cursor=data["batch_cursor"], metrics_so_far=metrics,
    )


@dataclass
class RunResult:
    theta: VerbalParameters
    metrics: list[MetricsRecord]
    run_dir: Path
    metrics_path: Path
    transcript_path: Path
    checkpoint_dir: Path
    theta_path: Path


def _checkpoint_path(run_dir: Path, step: int) -> Path:
    return run_dir / "checkpoints" / f"step_{step:04d}.json"


def run(config: RunConfig, graph: TextAttributedGraph, out_dir, backends: RoleBackends | None = None) -> RunResult:
    """Execute a full run from scratch, evaluating at step 0 and every
    eval_every steps, checkpointing every step."""
    run_dir = Path(out_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    for stale in ["metrics.csv", "confusion.csv", "eval_cache.json", "theta_final.txt"]:
        (run_dir / stale).unlink(missing_ok=True)
    for stale_ckpt in (run_dir / "checkpoints").glob("step_*.json"):
        stale_ckpt.unlink()
    (run_dir / "run_config.json").write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    if backends is None:
        backends = RoleBackends.from_config(config)
    theta = init_theta(graph.label_set, config.prior_path, config.max_desc_words)
    transcript = TranscriptRecorder(run_dir / "transcript.jsonl")
    cache = EvalCache()
    return _run_loop(config, graph, backends, run_dir, theta, transcript, cache,
                     metrics=[], start_step=0)


def resume(config: RunConfig, graph: TextAttributedGraph, run_dir, backends: RoleBackends | None = None,
           checkpoint_path=None) -> RunResult:
    """Continue a run from its latest (or a given) checkpoint."""
    run_dir = Path(run_dir)
    if checkpoint_path is None:
        candidates = sorted((run_dir / "checkpoints").glob("step_*.json"))
        if not candidates:
            raise CheckpointMismatchError(f"{run_dir}: no checkpoints to resume from")
        checkpoint_path = candidates[-1]
    ckpt = load_checkpoint(checkpoint_path, graph.label_set)
    if ckpt.config_digest != config.digest():
        raise CheckpointMismatchError(
            f"{checkpoint_path}: checkpoint was produced by a different config"
        )
    if backends is None:
        backends = RoleBackends.from_config(config)
    transcript_path = run_dir / "transcript.jsonl"
    start_seq = 1
    if transcript_path.exists():
        # drop any entries past the checkpoint boundary (resuming from an
        # earlier checkpoint re-executes those steps)
        entries = [e for e in load_transcript(transcript_path) if e["step"] <= ckpt.step]
        with transcript_path.open("w", encoding="utf-8") as fh:
            for entry in entries:
                fh.write(json.dumps(entry, ensure_ascii=False, sort_keys=True) + "\n")
        start_seq = (entries[-1]["seq"] + 1) if entries else 1
    transcript = TranscriptRecorder(transcript_path, start_seq=start_seq, append=True)
    cache = EvalCache.load(run_dir / "eval_cache.json")
    metrics = list(ckpt.metrics_so_far)
    emit_metrics(metrics, run_dir / "metrics.csv")
    return _run_loop(config, graph, backends, run_dir, ckpt.theta, transcript, cache,
                     metrics=metrics, start_step=ckpt.batch_cursor)


def _run_loop(config, graph, backends, run_dir: Path, theta, transcript, cache, metrics,
              start_step: int) -> RunResult:
    theta.validate(graph.label_set, config.max_desc_words)
    metrics_path = run_dir / "metrics.csv"
    cache_path = run_dir / "eval_cache.json"
    batches = make_batches(graph, config.batch_size, config.batch_seed, config.num_steps)
    last_checkpoint = _checkpoint_path(run_dir, start_step) if start_step > 0 else None

    def _evaluate(current_theta):
        record, confusion = evaluate_theta(current_theta, graph, config, backends, transcript, cache)
        metrics.append(record)
        emit_metrics(metrics, metrics_path)
        emit_confusion(confusion, run_dir / "confusion.csv")

    def _commit(step: int, current_theta):
        nonlocal last_checkpoint
        ckpt = Checkpoint(config_digest=config.digest(), step=step, theta=current_theta,
                          batch_cursor=step, metrics_so_far=list(metrics))
        path = _checkpoint_path(run_dir, step)
        save_checkpoint(ckpt, path)
        last_checkpoint = path
        transcript.flush()
        cache.save(cache_path)

    try:
        if start_step == 0:
            _evaluate(theta)
            _commit(0, theta)
        for batch in batches[start_step:]:
            theta, _ = run_step(batch, theta, graph, config, backends, transcript)
            if batch.step_index % config.eval_every == 0:
                _evaluate(theta)
            _commit(batch.step_index, theta)
    except LlmError as exc:
        transcript.discard_buffer()
        where = f"last checkpoint: {last_checkpoint}" if last_checkpoint else "no checkpoint written"
        raise RunAbortedError(f"run aborted at a step boundary ({where}): {exc}", last_checkpoint) from exc

    theta_path = run_dir / "theta_final.txt"
    write_theta_file(theta, theta_path)
    return RunResult(
        theta=theta, metrics=metrics, run_dir=run_dir, metrics_path=metrics_path,
        transcript_path=run_dir / "transcript.jsonl", checkpoint_dir=run_dir / "checkpoints",
        theta_path=theta_path,
    )


@dataclass
class ProvenanceReport:
    total: int
    carried: int
    derived: int
    violations: list[tuple[int, str]]

    @property
    def fully_accounted(self) -> bool:
        return not self.violations


def audit_description_provenance(thetas: list[VerbalParameters], completions: list[str]) -> ProvenanceReport:
    """Check that every description is carried from the previous version or is
    a verbatim (possibly truncated) substring of some recorded completion."""
    ordered = sorted(thetas, key=lambda t: t.step)
    total = carried = derived = 0
    violations: list[tuple[int, str]] = []
    for prev, cur in zip(ordered, ordered[1:]):
        for label, desc in cur.per_class.items():
            total += 1
            if desc == prev.per_class[label]:
                carried += 1
            elif any(desc in completion for completion in completions):
                derived += 1
            else:
                violations.append((cur.step, label))
    return ProvenanceReport(total=total, carried=carried, derived=derived, violations=violations)
