"""Render the four role prompts and parse structure back out of free-text completions.

Rendering is deterministic (identical inputs give byte-identical prompts) and
embeds class descriptions verbatim, so the chain from description text to
prompt to completion stays auditable. The output grammar the prompts impose is
deliberately small: a final ``LABEL: <label>`` line for predictions, and
``[CLASS] <label>: <description>`` blocks plus an optional ``[RATIONALE]``
section for description updates.

Templates ship as text resources under ``templates/`` (see TEMPLATE_VERSION).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from string import Template

TEMPLATE_VERSION = "1"

INVALID = "INVALID"
BLANK_DESCRIPTION = "No description available yet."

NO_NEIGHBORS_NOTICE = "There are no cited papers available for this paper."
NO_SUMMARY_NOTICE = "(no neighbor summary available)"

ZERO_SHOT = "zero-shot"
ONE_SHOT = "one-shot"

ENHANCER = "enhancer"
PREDICTOR = "predictor"
OPTIMIZER = "optimizer"
SUMMARY = "summary"

# Stable substrings that identify each role's rendered prompt; scripted
# backends key their rules off these.
ROLE_MARKERS = {
    ENHANCER: "papers cited in a paper",
    PREDICTOR: "## Candidate labels",
    OPTIMIZER: "## Prediction outcome",
    SUMMARY: "## Proposed revisions from this batch",
}

SYSTEM_PROMPTS = {
    ENHANCER: "You are a careful scientific assistant who condenses the citation context of a research paper.",
    PREDICTOR: "You are a careful scientific paper classifier. You match papers to class descriptions and explain your reasoning.",
    OPTIMIZER: "You maintain natural-language class descriptions used to classify scientific papers, revising them based on observed prediction outcomes.",
    SUMMARY: "You consolidate proposed revisions to class descriptions into one coherent description per class.",
}


class PromptError(Exception):
    pass


class MissingClassDescriptionError(PromptError):
    pass


class EmptyBatchUpdatesError(PromptError):
    pass


class NoClassBlocksFoundError(PromptError):
    pass


def _template(name: str) -> Template:
    text = resources.files(__package__).joinpath(f"templates/{name}.txt").read_text(encoding="utf-8")
    return Template(text)


_TEMPLATES = {name: _template(name) for name in (ENHANCER, PREDICTOR, OPTIMIZER, SUMMARY)}


@dataclass(frozen=True)
class CoTMode:
    """Chain-of-thought style: instructions only, or instructions plus a worked example."""

    kind: str = ZERO_SHOT
    exemplar: str = ""

    def __post_init__(self):
        if self.kind not in (ZERO_SHOT, ONE_SHOT):
            raise ValueError(f"unknown CoT mode {self.kind!r}")
        if self.kind == ONE_SHOT and not self.exemplar.strip():
            raise ValueError("one-shot mode requires a non-empty exemplar")


@dataclass(frozen=True)
class PromptBundle:
    system: str
    user: str
    role_tag: str


@dataclass
class ParsedPrediction:
    label: str  # member of the label set, or INVALID
    judgment: str
    analysis: str
    raw: str


@dataclass
class ParsedThetaText:
    per_class: dict[str, str]
    rationale: str
    raw: str


def normalize_label(candidate: str, label_set: list[str]) -> str | None:
    """Map free-text label spellings onto the canonical label set.

    Case-folds, trims, and treats runs of whitespace and underscores as
    interchangeable. Returns None when nothing matches.
    """
    wanted = _label_key(candidate)
    for label in label_set:
        if _label_key(label) == wanted:
            return label
    return None


def _label_key(s: str) -> str:
    return re.sub(r"[\s_]+", "_", s.strip().casefold())


def count_words(text: str) -> int:
    return len(re.findall(r"\S+", text))


def truncate_words(text: str, max_words: int) -> str:
    """Cut at a word boundary after `max_words` words, preserving the original
    spelling and internal whitespace (so the result stays a substring)."""
    matches = list(re.finditer(r"\S+", text))
    if len(matches) <= max_words:
        return text.strip()
    return text[: matches[max_words - 1].end()].strip()


def format_class_blocks(per_class: dict[str, str]) -> str:
    """Inverse of scan_class_blocks: one `[CLASS] label: description` block per class."""
    return "\n".join(f"[CLASS] {label}: {desc}" for label, desc in per_class.items())


def scan_class_blocks(text: str) -> list[tuple[str, str]]:
    """Extract raw (label, description) pairs from `[CLASS] label: ...` blocks.

    A block runs until the next [CLASS] / [RATIONALE] marker or end of text;
    descriptions keep their original spelling, trimmed at the ends.
    """
    marker = re.compile(r"^[ \t]*\[(CLASS|RATIONALE)\]", re.MULTILINE | re.IGNORECASE)
    head = re.compile(r"^[ \t]*\[CLASS\][ \t]*([^:\n]+?)[ \t]*:", re.MULTILINE | re.IGNORECASE)
    blocks: list[tuple[str, str]] = []
    for match in head.finditer(text):
        nxt = marker.search(text, match.end())
        end = nxt.start() if nxt else len(text)
        blocks.append((match.group(1), text[match.end():end].strip()))
    return blocks


def extract_rationale(text: str) -> str:
    match = re.search(r"^[ \t]*(?:\[RATIONALE\]|Rationale\s*:)[ \t]*:?", text, re.MULTILINE | re.IGNORECASE)
    if not match:
        return ""
    nxt = re.compile(r"^[ \t]*\[CLASS\]", re.MULTILINE | re.IGNORECASE).search(text, match.end())
    end = nxt.start() if nxt else len(text)
    return text[match.end():end].strip()


def render_enhancer_prompt(neighbor_infos: list[tuple[str, str | None]]) -> PromptBundle:
    """Prompt asking for a short summary of the papers cited around a node.

    `neighbor_infos` pairs each neighbor's text with its category when known.
    An empty list renders an explicit no-neighbors notice instead of the record
    list.
    """
    if neighbor_infos:
        records = []
        for text, category in neighbor_infos:
            rec: dict[str, str] = {"content": text}
            if category is not None:
                rec["category"] = category
            records.append(json.dumps(rec, ensure_ascii=False))
        neighbor_list = "[" + ",\n ".join(records) + "]"
    else:
        neighbor_list = NO_NEIGHBORS_NOTICE
    user = _TEMPLATES[ENHANCER].substitute(neighbor_list=neighbor_list)
    return PromptBundle(system=SYSTEM_PROMPTS[ENHANCER], user=user, role_tag=ENHANCER)


def render_predictor_prompt(
    own_text: str,
    neighbor_summary: str | None,
    per_class: dict[str, str],
    mode: CoTMode,
    label_set: list[str],
) -> PromptBundle:
    """Prompt asking for a label choice plus Judgment / Step-by-Step Analysis sections."""
    missing = [label for label in label_set if label not in per_class]
    if missing:
        raise MissingClassDescriptionError(f"no description for classes: {', '.join(missing)}")
    ordered = {label: per_class[label] for label in label_set}
    blank = all(desc == BLANK_DESCRIPTION for desc in ordered.values())
    fallback_line = (
        "No class descriptions have been written yet, so match the paper on its own text "
        "and the neighbor summary alone.\n"
        if blank
        else ""
    )
    exemplar_block = f"## Worked example\n{mode.exemplar}\n\n" if mode.kind == ONE_SHOT else ""
    user = _TEMPLATES[PREDICTOR].substitute(
        exemplar_block=exemplar_block,
        own_text=own_text,
        neighbor_summary=neighbor_summary if neighbor_summary else NO_SUMMARY_NOTICE,
        class_blocks=format_class_blocks(ordered),
        label_list=", ".join(label_set),
        fallback_line=fallback_line,
    )
    return PromptBundle(system=SYSTEM_PROMPTS[PREDICTOR], user=user, role_tag=PREDICTOR)


def render_optimizer_prompt(
    own_text: str,
    neighbor_summary: str | None,
    y_true: str,
    y_pred: str,
    per_class_prev: dict[str, str],
    max_desc_words: int = 200,
) -> PromptBundle:
    """Prompt asking for revised class descriptions given a prediction outcome.

    Three variants: wrong prediction (revise both involved classes, stating why
    the true class fits and the predicted one does not), correct prediction
    (reinforce the true class only), unparseable prediction (sharpen the true
    class).
    """
    if y_pred == INVALID:
        predicted_label = "INVALID (the prediction could not be parsed)"
        case = (
            f'The prediction could not be parsed into a valid label. Sharpen the description of the '
            f'true class "{y_true}" so that papers like this one match it unambiguously.'
        )
    elif y_pred == y_true:
        predicted_label = y_pred
        case = (
            f'The prediction was correct. Refine the description of the true class "{y_true}" only, '
            f"reinforcing the characteristics that made this match succeed."
        )
    else:
        predicted_label = y_pred
        case = (
            f'The prediction was wrong. Revise the descriptions of the two classes involved — the true '
            f'class "{y_true}" and the predicted class "{y_pred}" — so that this paper would match the '
            f"true class; the description must explain why the true class fits and the predicted class "
            f"does not."
        )
    user = _TEMPLATES[OPTIMIZER].substitute(
        own_text=own_text,
        neighbor_summary=neighbor_summary if neighbor_summary else NO_SUMMARY_NOTICE,
        class_blocks=format_class_blocks(per_class_prev),
        true_label=y_true,
        predicted_label=predicted_label,
        case_instructions=case,
        max_desc_words=max_desc_words,
    )
    return PromptBundle(system=SYSTEM_PROMPTS[OPTIMIZER], user=user, role_tag=OPTIMIZER)


def render_summary_prompt(
    updates: list[tuple[str, dict[str, str]]],
    per_class_prev: dict[str, str],
    max_desc_words: int = 200,
) -> PromptBundle:
    """Prompt asking for one consolidated description per class.

    `updates` pairs a node id with that node's proposed per-class revisions.
    """
    if not updates:
        raise EmptyBatchUpdatesError("summary prompt needs at least one update")
    chunks = []
    for node_id, revisions in updates:
        body = format_class_blocks(revisions) if revisions else "(no usable revision)"
        chunks.append(f"### Update from node {node_id}\n{body}")
    user = _TEMPLATES[SUMMARY].substitute(
        class_blocks=format_class_blocks(per_class_prev),
        revision_blocks="\n\n".join(chunks),
        label_list=", ".join(per_class_prev.keys()),
        max_desc_words=max_desc_words,
    )
    return PromptBundle(system=SYSTEM_PROMPTS[SUMMARY], user=user, role_tag=SUMMARY)


_LABEL_LINE = re.compile(r"^[ \t]*\**[ \t]*label\s*\**\s*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_JUDGMENT = re.compile(r"judgment\s*:\s*", re.IGNORECASE)
_ANALYSIS = re.compile(r"step.by.step\s+analysis\s*:\s*", re.IGNORECASE)


def parse_prediction(raw: str, label_set: list[str]) -> ParsedPrediction:
    """Recover the label and the explanation sections from a predictor completion.

    The last ``LABEL:`` line whose value normalizes into the label set wins.
    With no usable LABEL line, the final three non-blank lines are scanned for
    exactly one label-name occurrence; any ambiguity yields INVALID.
    """
    label: str | None = None
    lines = raw.splitlines()
    for line in reversed(lines):
        m = _LABEL_LINE.match(line)
        if m:
            candidate = normalize_label(m.group(1), label_set)
            if candidate is not None:
                label = candidate
                break
    if label is None:
        tail = "\n".join([l for l in lines if l.strip()][-3:]).casefold()
        found = {
            lab
            for lab in label_set
            if lab.casefold() in tail or lab.replace("_", " ").casefold() in tail
        }
        label = found.pop() if len(found) == 1 else INVALID
    return ParsedPrediction(
        label=label,
        judgment=_section(raw, _JUDGMENT),
        analysis=_section(raw, _ANALYSIS),
        raw=raw,
    )


def _section(raw: str, header: re.Pattern) -> str:
    match = header.search(raw)
    if not match:
        return ""
    stops = [
        m.start()
        for pat in (_JUDGMENT, _ANALYSIS, _LABEL_LINE)
        for m in [pat.search(raw, match.end())]
        if m
    ]
    end = min(stops) if stops else len(raw)
    return raw[match.end():end].strip()


def parse_theta_text(raw: str, label_set: list[str], max_desc_words: int = 200) -> ParsedThetaText:
    """Recover per-class description revisions from an optimizer/summary completion.

    Blocks whose label falls outside the label set are dropped; duplicate
    blocks for one class keep the last; descriptions are truncated to
    `max_desc_words` on a word boundary. Raises NoClassBlocksFoundError when
    the completion contains no usable block at all.
    """
    per_class: dict[str, str] = {}
    for raw_label, desc in scan_class_blocks(raw):
        label = normalize_label(raw_label, label_set)
        if label is None:
            continue
        per_class[label] = truncate_words(desc, max_desc_words)
    if not per_class:
        raise NoClassBlocksFoundError("completion contains no [CLASS] block with a known label")
    return ParsedThetaText(per_class=per_class, rationale=extract_rationale(raw), raw=raw)
