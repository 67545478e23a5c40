"""Hermetic test bench: a synthetic keyword-planted dataset and scripted oracle backends.

Each class gets one planted keyword that appears in every node text of that
class and nowhere else. The scripted roles close a loop that provably
converges: the predictor picks the class whose description overlaps the node
text most (ties to the first label), the optimizer answers a wrong prediction
by proposing the true class's planted keyword, and the summary unions the
keywords seen so far per class. Once every class description contains its own
keyword, test accuracy is exact.

The same responders back the ``scripted:<script-file>`` backend of the CLI.
"""

from __future__ import annotations

import json
import random
import re
from pathlib import Path

from .graphs import NodeRecord, TextAttributedGraph
from .llm import ChatRequest, ScriptRule, ScriptedBackend
from .prompts import (
    ENHANCER,
    OPTIMIZER,
    PREDICTOR,
    ROLE_MARKERS,
    SUMMARY,
    scan_class_blocks,
)
from .engine import RoleBackends, RunConfig

DEFAULT_CLASS_KEYWORDS = {
    "Case_Based": "precedent",
    "Genetic_Algorithms": "chromosome",
    "Neural_Networks": "perceptron",
    "Probabilistic_Methods": "bayesian",
    "Reinforcement_Learning": "reward",
    "Rule_Learning": "ruleset",
    "Theory": "lemma",
}

# Filler fragments share no token with any planted keyword.
_OPENINGS = [
    "We study scalable methods for classifying research papers",
    "This paper presents an empirical analysis of literature organization",
    "We revisit a classic question in automated document triage",
    "The authors examine practical pipelines for archive curation",
]
_CLOSINGS = [
    "Experiments on benchmark corpora show consistent gains.",
    "An extensive evaluation highlights failure modes and remedies.",
    "Results indicate robust behavior across collection sizes.",
    "We close with a discussion of open measurement questions.",
]


def build_synthetic_graph(
    classes: dict[str, str] | None = None,
    num_nodes: int = 110,
    seed: int = 0,
    intra_edges: int = 2,
    cross_edge_prob: float = 0.15,
) -> TextAttributedGraph:
    """Homophilous labeled graph whose node texts carry their class keyword."""
    classes = classes or DEFAULT_CLASS_KEYWORDS
    labels = list(classes)
    rng = random.Random(seed)
    nodes: list[NodeRecord] = []
    for i in range(num_nodes):
        label = labels[i % len(labels)]
        keyword = classes[label]
        text = (
            f"{rng.choice(_OPENINGS)} built around {keyword} techniques. "
            f"Our approach treats {keyword} structure as the organizing signal. "
            f"{rng.choice(_CLOSINGS)}"
        )
        nodes.append(NodeRecord(id=f"n{i:04d}", text=text, label=label, split="labeled-train"))

    by_label: dict[str, list[str]] = {}
    for node in nodes:
        by_label.setdefault(node.label, []).append(node.id)
    edges: set[tuple[str, str]] = set()
    ids = [n.id for n in nodes]
    for node in nodes:
        peers = [p for p in by_label[node.label] if p != node.id]
        for other in rng.sample(peers, min(intra_edges, len(peers))):
            edges.add((min(node.id, other), max(node.id, other)))
        if rng.random() < cross_edge_prob:
            other = rng.choice([p for p in ids if p != node.id])
            edges.add((min(node.id, other), max(node.id, other)))
    return TextAttributedGraph(nodes=nodes, edges=edges, label_set=labels)


_TOKEN = re.compile(r"[a-z0-9_]+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN.findall(text.lower()))


def _user_text(request: ChatRequest) -> str:
    for message in reversed(request.messages):
        if message.role == "user":
            return message.content
    return request.rendered()


def _slice_between(text: str, start_marker: str, end_marker: str | None) -> str:
    start = text.rfind(start_marker)
    if start < 0:
        return ""
    start += len(start_marker)
    if end_marker is None:
        return text[start:]
    end = text.find(end_marker, start)
    return text[start:end] if end >= 0 else text[start:]


def keyword_predictor_responder(request: ChatRequest) -> str:
    """argmax keyword overlap between the node's own text and each class
    description; ties resolve to the first candidate label."""
    prompt = _user_text(request)
    own = _slice_between(prompt, "## Target paper", "## Neighbor summary")
    desc_section = _slice_between(prompt, "## Class descriptions", "## Candidate labels")
    label_line = _slice_between(prompt, "## Candidate labels", "## Instructions").strip()
    labels = [lab.strip() for lab in label_line.split(",") if lab.strip()]
    descriptions = {}
    for raw_label, desc in scan_class_blocks(desc_section):
        descriptions[raw_label.strip()] = desc
    own_tokens = _tokens(own)
    best_label, best_score = labels[0], -1
    for label in labels:
        score = len(own_tokens & _tokens(descriptions.get(label, "")))
        if score > best_score:
            best_label, best_score = label, score
    return (
        f"Judgment: The paper's own terminology matches {best_label} best.\n"
        f"Step-by-Step Analysis: 1. Tokenized the paper text. 2. Counted overlapping terms with each "
        f"class description. 3. {best_label} scored {best_score}, the highest (ties go to the first "
        f"candidate).\n"
        f"LABEL: {best_label}"
    )


def make_keyword_optimizer_responder(classes: dict[str, str]):
    def responder(request: ChatRequest) -> str:
        prompt = _user_text(request)
        true_match = re.search(r"^True label:\s*(.+)$", prompt, re.MULTILINE)
        pred_match = re.search(r"^Predicted label:\s*(.+)$", prompt, re.MULTILINE)
        true_label = true_match.group(1).strip() if true_match else ""
        predicted = pred_match.group(1).strip() if pred_match else ""
        wrong = predicted != true_label  # covers the INVALID annotation too
        if wrong and true_label in classes:
            keyword = classes[true_label]
            return (
                f"[CLASS] {true_label}: {keyword}\n"
                f"[RATIONALE] The paper contains the discriminative term '{keyword}'; anchoring the "
                f"description of {true_label} on it separates the two confused classes."
            )
        return "[RATIONALE] The prediction was already correct; no revision proposed."

    return responder


def make_keyword_summary_responder(classes: dict[str, str]):
    keyword_vocab = set(classes.values())

    def responder(request: ChatRequest) -> str:
        prompt = _user_text(request)
        label_line = re.search(r"Cover every one of these classes:\s*(.+)$", prompt, re.MULTILINE)
        labels = [lab.strip() for lab in label_line.group(1).split(",")] if label_line else list(classes)
        gathered: dict[str, list[str]] = {label: [] for label in labels}
        for raw_label, desc in scan_class_blocks(prompt):
            label = raw_label.strip()
            if label not in gathered:
                continue
            for token in _TOKEN.findall(desc.lower()):
                if token in keyword_vocab and token not in gathered[label]:
                    gathered[label].append(token)
        blocks = []
        for label in labels:
            if gathered[label]:
                blocks.append(f"[CLASS] {label}: {' '.join(gathered[label][:200])}")
        if not blocks:
            return "[RATIONALE] No usable revisions were proposed; keeping previous descriptions."
        blocks.append("[RATIONALE] Unioned the planted keywords proposed for each class so far.")
        return "\n".join(blocks)

    return responder


def keyword_enhancer_responder(request: ChatRequest) -> str:
    prompt = _user_text(request)
    categories: list[str] = []
    for match in re.finditer(r'"category":\s*"([^"]+)"', prompt):
        if match.group(1) not in categories:
            categories.append(match.group(1))
    if categories:
        listed = ", ".join(categories)
        return (
            f"The papers cited in this essay are mainly about {listed} and share closely "
            f"related terminology."
        )
    return "The papers cited in this essay do not state their categories but appear closely related."


def build_oracle_backends(classes: dict[str, str] | None = None) -> RoleBackends:
    """One scripted backend per role, each keyed on that role's prompt marker."""
    classes = classes or DEFAULT_CLASS_KEYWORDS
    return RoleBackends(
        enhancer=ScriptedBackend(
            [ScriptRule(ROLE_MARKERS[ENHANCER], keyword_enhancer_responder)], backend_id="oracle-enhancer"
        ),
        predictor=ScriptedBackend(
            [ScriptRule(ROLE_MARKERS[PREDICTOR], keyword_predictor_responder)], backend_id="oracle-predictor"
        ),
        optimizer=ScriptedBackend(
            [ScriptRule(ROLE_MARKERS[OPTIMIZER], make_keyword_optimizer_responder(classes))],
            backend_id="oracle-optimizer",
        ),
        summary=ScriptedBackend(
            [ScriptRule(ROLE_MARKERS[SUMMARY], make_keyword_summary_responder(classes))],
            backend_id="oracle-summary",
        ),
    )


def hermetic_run_config(num_steps: int = 10, eval_every: int = 5, **overrides) -> RunConfig:
    """Run settings for the converging hermetic scenario."""
    defaults = dict(
        batch_size=8,
        temperature=0.1,
        hop_count=1,
        num_steps=num_steps,
        eval_every=eval_every,
        test_size=40,
        optimize_correct=False,  # the oracle optimizer only acts on errors
    )
    defaults.update(overrides)
    return RunConfig(**defaults)


_BUILTIN_RESPONDERS = {
    "keyword_enhancer": lambda classes: keyword_enhancer_responder,
    "keyword_predictor": lambda classes: keyword_predictor_responder,
    "keyword_optimizer": make_keyword_optimizer_responder,
    "keyword_summary": make_keyword_summary_responder,
}


def scripted_backend_from_file(path) -> ScriptedBackend:
    """Load a scripted backend description.

    JSON schema: {"keywords": {label: keyword, ...} (optional),
    "rules": [{"contains" | "pattern": str, "text" | "builtin": str}, ...]}.
    Rules apply in order; builtins are the keyword-oracle responders above.
    """
    spec = json.loads(Path(path).read_text(encoding="utf-8"))
    classes = spec.get("keywords") or DEFAULT_CLASS_KEYWORDS
    rules = []
    for i, rule in enumerate(spec.get("rules", [])):
        if "contains" in rule:
            matcher = rule["contains"]
        elif "pattern" in rule:
            matcher = re.compile(rule["pattern"], re.DOTALL)
        else:
            raise ValueError(f"{path}: rule {i} needs 'contains' or 'pattern'")
        if "text" in rule:
            responder = rule["text"]
        elif "builtin" in rule:
            name = rule["builtin"]
            if name not in _BUILTIN_RESPONDERS:
                raise ValueError(f"{path}: rule {i} names unknown builtin {name!r}")
            responder = _BUILTIN_RESPONDERS[name](classes)
        else:
            raise ValueError(f"{path}: rule {i} needs 'text' or 'builtin'")
        rules.append(ScriptRule(matcher, responder))
    if not rules:
        raise ValueError(f"{path}: script file declares no rules")
    return ScriptedBackend(rules, backend_id=f"scripted:{path}")


def write_oracle_script(path, classes: dict[str, str] | None = None) -> Path:
    """Emit a script file wiring all four roles to the keyword oracles."""
    classes = classes or DEFAULT_CLASS_KEYWORDS
    spec = {
        "keywords": classes,
        "rules": [
            {"contains": ROLE_MARKERS[SUMMARY], "builtin": "keyword_summary"},
            {"contains": ROLE_MARKERS[OPTIMIZER], "builtin": "keyword_optimizer"},
            {"contains": ROLE_MARKERS[PREDICTOR], "builtin": "keyword_predictor"},
            {"contains": ROLE_MARKERS[ENHANCER], "builtin": "keyword_enhancer"},
        ],
    }
    path = Path(path)
    path.write_text(json.dumps(spec, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
