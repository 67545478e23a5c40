from __future__ import annotations

import pytest

from verbalgraph.prompts import (
    BLANK_DESCRIPTION,
    INVALID,
    CoTMode,
    EmptyBatchUpdatesError,
    MissingClassDescriptionError,
    NoClassBlocksFoundError,
    count_words,
    format_class_blocks,
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

CORA_LABELS = [
    "Case_Based",
    "Genetic_Algorithms",
    "Neural_Networks",
    "Probabilistic_Methods",
    "Reinforcement_Learning",
    "Rule_Learning",
    "Theory",
]


def _theta(desc_for=None):
    return {label: (desc_for or {}).get(label, f"papers about {label.lower()}") for label in CORA_LABELS}


# --- enhancer ----------------------------------------------------------------


def test_enhancer_prompt_lists_neighbors_and_instruction():
    bundle = render_enhancer_prompt(
        [("This paper firstly provides a rule induction survey", "Rule_Learning"),
         ("A genetic operator analysis", "Genetic_Algorithms")]
    )
    assert "This paper firstly provides a rule induction survey" in bundle.user
    assert '"category": "Rule_Learning"' in bundle.user
    assert "A genetic operator analysis" in bundle.user
    assert "Please summarize the information above" in bundle.user
    assert "ONLY your summary information" in bundle.user
    assert 'Please start with "The papers cited in this essay"' in bundle.user
    assert bundle.role_tag == "enhancer"


def test_enhancer_prompt_without_neighbors_states_notice():
    bundle = render_enhancer_prompt([])
    assert "no cited papers available" in bundle.user
    assert '"content"' not in bundle.user


def test_enhancer_neighbor_without_category_omits_field():
    bundle = render_enhancer_prompt([("mystery paper", None)])
    assert '"content": "mystery paper"' in bundle.user
    assert '"category"' not in bundle.user


def test_enhancer_permutation_changes_only_list_order():
    a = render_enhancer_prompt([("one", "A"), ("two", "B")]).user
    b = render_enhancer_prompt([("two", "B"), ("one", "A")]).user
    assert a != b

    def normalized(text):
        return sorted(line.strip("[] ,") for line in text.splitlines())

    assert normalized(a) == normalized(b)


# --- predictor ---------------------------------------------------------------


def test_predictor_prompt_contains_all_parts():
    theta = _theta()
    bundle = render_predictor_prompt("own text body", "The papers cited in this essay focus on rules",
                                     theta, CoTMode(), CORA_LABELS)
    assert "own text body" in bundle.user
    assert "The papers cited in this essay focus on rules" in bundle.user
    for label in CORA_LABELS:
        assert theta[label] in bundle.user  # descriptions verbatim
        assert label in bundle.user
    assert "LABEL: <one label from the candidate list>" in bundle.user
    assert "Judgment:" in bundle.user
    assert "Step-by-Step Analysis:" in bundle.user


def test_predictor_modes_differ_only_by_exemplar_block():
    theta = _theta()
    zero = render_predictor_prompt("text", None, theta, CoTMode(), CORA_LABELS).user
    exemplar = "Judgment: sample\nStep-by-Step Analysis: 1. sample\nLABEL: Theory"
    one = render_predictor_prompt("text", None, theta, CoTMode("one-shot", exemplar), CORA_LABELS).user
    assert one.endswith(zero)
    assert one.replace(f"## Worked example\n{exemplar}\n\n", "") == zero


def test_predictor_blank_theta_adds_fallback_instruction():
    blank = {label: BLANK_DESCRIPTION for label in CORA_LABELS}
    bundle = render_predictor_prompt("text", None, blank, CoTMode(), CORA_LABELS)
    assert "No class descriptions have been written yet" in bundle.user
    informative = render_predictor_prompt("text", None, _theta(), CoTMode(), CORA_LABELS)
    assert "No class descriptions have been written yet" not in informative.user


def test_predictor_requires_every_class_description():
    theta = _theta()
    del theta["Theory"]
    with pytest.raises(MissingClassDescriptionError, match="Theory"):
        render_predictor_prompt("text", None, theta, CoTMode(), CORA_LABELS)


def test_one_shot_requires_exemplar():
    with pytest.raises(ValueError):
        CoTMode("one-shot", "")


def test_rendering_is_deterministic():
    theta = _theta()
    args = ("text body", "a summary", theta, CoTMode(), CORA_LABELS)
    assert render_predictor_prompt(*args).user == render_predictor_prompt(*args).user


# --- optimizer ---------------------------------------------------------------


def test_optimizer_wrong_prediction_names_both_classes():
    bundle = render_optimizer_prompt("evidence", None, "Reinforcement_Learning",
                                     "Genetic_Algorithms", _theta())
    assert '"Reinforcement_Learning"' in bundle.user
    assert '"Genetic_Algorithms"' in bundle.user
    assert "why the true class fits and the predicted class does not" in bundle.user
    assert "True label: Reinforcement_Learning" in bundle.user
    assert "Predicted label: Genetic_Algorithms" in bundle.user


def test_optimizer_correct_prediction_reinforces_true_class():
    bundle = render_optimizer_prompt("evidence", None, "Theory", "Theory", _theta())
    assert "The prediction was correct" in bundle.user
    assert 'true class "Theory"' in bundle.user


def test_optimizer_invalid_prediction_sharpens_true_class():
    bundle = render_optimizer_prompt("evidence", None, "Theory", INVALID, _theta())
    assert "could not be parsed" in bundle.user
    assert "INVALID" in bundle.user


# --- summary -----------------------------------------------------------------


def test_summary_prompt_lists_all_updates():
    updates = [(f"n{i}", {"Theory": f"revision {i}"}) for i in range(8)]
    bundle = render_summary_prompt(updates, _theta())
    for i in range(8):
        assert f"revision {i}" in bundle.user
        assert f"Update from node n{i}" in bundle.user


def test_summary_prompt_demands_every_class():
    updates = [("n0", {"Theory": "rev"}), ("n1", {"Rule_Learning": "rev2"})]
    bundle = render_summary_prompt(updates, _theta())
    assert "Cover every one of these classes: " + ", ".join(CORA_LABELS) in bundle.user


def test_summary_prompt_rejects_empty_updates():
    with pytest.raises(EmptyBatchUpdatesError):
        render_summary_prompt([], _theta())


def test_summary_single_update_still_renders():
    bundle = render_summary_prompt([("n0", _theta())], _theta())
    assert "Update from node n0" in bundle.user


# --- parsing: predictions -----------------------------------------------------


def test_parse_prediction_simple():
    parsed = parse_prediction("Judgment: fits\nStep-by-Step Analysis: 1. ok\nLABEL: Theory", CORA_LABELS)
    assert parsed.label == "Theory"
    assert parsed.judgment == "fits"
    assert "1. ok" in parsed.analysis


def test_parse_prediction_last_label_line_wins():
    raw = "LABEL: Theory\nmore text\nLABEL: Case_Based"
    assert parse_prediction(raw, CORA_LABELS).label == "Case_Based"


def test_parse_prediction_normalizes_spaces_and_case():
    assert parse_prediction("LABEL: rule learning", CORA_LABELS).label == "Rule_Learning"


def test_parse_prediction_fallback_unique_mention():
    raw = "After thought I conclude this is about\nProbabilistic_Methods\nwhich seems right"
    assert parse_prediction(raw, CORA_LABELS).label == "Probabilistic_Methods"


def test_parse_prediction_ambiguous_is_invalid():
    raw = "could be Theory or Rule_Learning or Case_Based honestly"
    assert parse_prediction(raw, CORA_LABELS).label == INVALID


def test_parse_prediction_round_trips_every_label():
    for label in CORA_LABELS:
        completion = f"Judgment: it matches\nStep-by-Step Analysis: 1. match\nLABEL: {label}"
        assert parse_prediction(completion, CORA_LABELS).label == label


def test_parse_prediction_retains_raw():
    raw = "garbage with no label at all, nothing here"
    parsed = parse_prediction(raw, CORA_LABELS)
    assert parsed.label == INVALID
    assert parsed.raw == raw


# --- parsing: description updates ---------------------------------------------


def test_parse_theta_text_full_set():
    raw = "\n".join(f"[CLASS] {label}: all about {label}" for label in CORA_LABELS)
    parsed = parse_theta_text(raw, CORA_LABELS)
    assert set(parsed.per_class) == set(CORA_LABELS)


def test_parse_theta_text_duplicate_block_last_wins():
    raw = "[CLASS] Theory: first version\n[CLASS] Theory: second version"
    assert parse_theta_text(raw, CORA_LABELS).per_class["Theory"] == "second version"


def test_parse_theta_text_skips_unknown_classes():
    raw = "[CLASS] Astrology: stars\n[CLASS] Theory: proofs"
    parsed = parse_theta_text(raw, CORA_LABELS)
    assert parsed.per_class == {"Theory": "proofs"}


def test_parse_theta_text_truncates_on_word_boundary():
    words = [f"w{i}" for i in range(300)]
    raw = "[CLASS] Theory: " + " ".join(words)
    parsed = parse_theta_text(raw, CORA_LABELS, max_desc_words=200)
    desc = parsed.per_class["Theory"]
    assert count_words(desc) == 200
    assert desc.endswith("w199")
    assert desc in raw  # still a verbatim substring


def test_parse_theta_text_rationale():
    raw = "[CLASS] Theory: about proofs\n[RATIONALE] sharpened after an error"
    parsed = parse_theta_text(raw, CORA_LABELS)
    assert parsed.rationale == "sharpened after an error"


def test_parse_theta_text_no_blocks_raises():
    with pytest.raises(NoClassBlocksFoundError):
        parse_theta_text("just chatting, no blocks here", CORA_LABELS)


def test_parse_theta_text_never_exceeds_word_budget():
    raw = "[CLASS] Theory: " + "word " * 500 + "\n[CLASS] Rule_Learning: short"
    parsed = parse_theta_text(raw, CORA_LABELS, max_desc_words=50)
    for desc in parsed.per_class.values():
        assert count_words(desc) <= 50


# --- helpers ------------------------------------------------------------------


def test_normalize_label_variants():
    assert normalize_label(" rule learning ", CORA_LABELS) == "Rule_Learning"
    assert normalize_label("RULE_LEARNING", CORA_LABELS) == "Rule_Learning"
    assert normalize_label("rule  learning", CORA_LABELS) == "Rule_Learning"
    assert normalize_label("Astronomy", CORA_LABELS) is None


def test_truncate_words_preserves_substring():
    text = "alpha  beta\tgamma delta"
    cut = truncate_words(text, 2)
    assert cut == "alpha  beta"
    assert cut in text


def test_scan_blocks_round_trip():
    per_class = {"Theory": "a b c", "Rule_Learning": "d e"}
    blocks = format_class_blocks(per_class)
    assert dict(scan_class_blocks(blocks)) == per_class
