from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentihop.corpus import Example
from sentihop.prompts import (
    BASELINE_MODES,
    PromptMode,
    explain_input,
    predict_input,
    render,
    render_baseline,
    render_th_ra,
    render_th_re,
    render_verify,
)

GOLDEN_DIR = Path(__file__).parent / "goldens"
FIXTURES = Path(__file__).parent / "fixtures"

PRICE = Example(
    id="r1",
    sentence='a cheaper price should not equal a "cheap" product.',
    aspect_term="price",
    polarity="positive",
    implicit=True,
    split="test",
)


def golden(name: str) -> str:
    return (GOLDEN_DIR / name).read_bytes().decode("utf-8")


def test_th_re_matches_golden_byte_exact():
    assert render_th_re(PRICE).text.encode("utf-8") == (GOLDEN_DIR / "th_re.txt").read_bytes()


def test_th_ra_matches_golden_byte_exact():
    assert render_th_ra(PRICE).text.encode("utf-8") == (GOLDEN_DIR / "th_ra.txt").read_bytes()


@pytest.mark.parametrize("mode", BASELINE_MODES)
def test_baselines_match_goldens_byte_exact(mode):
    rendered = render_baseline(PRICE, mode)
    assert rendered.text.encode("utf-8") == (GOLDEN_DIR / f"{mode.value}.txt").read_bytes()


def test_verify_matches_golden_byte_exact():
    rationale = (FIXTURES / "price_rationale.txt").read_bytes().decode("utf-8")
    rendered = render_verify(rationale, "r1")
    assert rendered.text.encode("utf-8") == (GOLDEN_DIR / "verify.txt").read_bytes()


def test_th_re_contains_three_hop_anchors():
    text = render_th_re(PRICE).text
    for anchor in ("The mentioned aspect", "The underlying opinion", "Therefore, the sentiment polarity"):
        assert anchor in text
    assert "Therefore, the sentiment polarity towards price is ..." in text


def test_th_ra_states_gold_label():
    assert "towards price is positive, why?" in render_th_ra(PRICE).text


def test_metacharacters_render_literally():
    ex = Example(
        id="m1",
        sentence='the screen (13") is fine',
        aspect_term='screen (13")',
        polarity="neutral",
        implicit=False,
        split="test",
    )
    text = render_th_re(ex).text
    assert 'towards screen (13"), why?' in text
    assert "\\" not in text


def test_empty_sentence_is_permitted():
    ex = Example(
        id="m2", sentence="", aspect_term="", polarity="neutral", implicit=False, split="test"
    )
    text = render_th_re(ex).text
    assert text.startswith('Given the sentence "", ')


def test_rendering_is_deterministic():
    assert render_th_ra(PRICE).text == render_th_ra(PRICE).text
    assert render_th_re(PRICE) == render_th_re(PRICE)


def test_direct_has_no_why_and_zero_cot_has_suffix():
    assert "why" not in render_baseline(PRICE, PromptMode.DIRECT).text
    assert render_baseline(PRICE, PromptMode.ZERO_COT).text.endswith("Let's think step by step.")
    assert render_baseline(PRICE, PromptMode.RE).text.endswith(", why?")


def test_verify_edge_cases():
    with pytest.raises(ValueError):
        render_verify("")
    assert render_verify("x").text.endswith("Return True or False.")
    embedded = render_verify('it is "fine"').text
    assert '"it is "fine""' in embedded  # embedded verbatim, no escaping


_clean_text = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), whitelist_characters=" "),
    min_size=1,
    max_size=30,
).filter(lambda s: s.strip())


@given(st.lists(st.tuples(_clean_text, _clean_text), min_size=2, max_size=6, unique=True))
@settings(max_examples=50, deadline=None)
def test_injectivity_within_each_mode(pairs):
    examples = [
        Example(
            id=f"p{i}",
            sentence=f"{sentence} {aspect}",
            aspect_term=aspect,
            polarity="neutral",
            implicit=False,
            split="test",
        )
        for i, (sentence, aspect) in enumerate(pairs)
    ]
    # distinct (sentence, aspect) pairs only
    keyed = {(e.sentence, e.aspect_term) for e in examples}
    if len(keyed) != len(examples):
        return
    for mode in (PromptMode.TH_RE, PromptMode.DIRECT, PromptMode.RE, PromptMode.ZERO_COT):
        rendered = [render(e, mode).text for e in examples]
        assert len(set(rendered)) == len(rendered)


def test_explain_input_re_omits_gold_and_scaffold():
    text = explain_input(PRICE, "re")
    assert "why?" in text
    assert "positive" not in text
    assert "The mentioned aspect" not in text
    assert text.endswith("Let's think step by step.")


def test_explain_input_ra_includes_gold():
    text = explain_input(PRICE, "ra")
    assert "is positive, why?" in text
    assert "The mentioned aspect" not in text


def test_predict_input_is_direct_question():
    assert predict_input(PRICE) == render_baseline(PRICE, PromptMode.DIRECT).text
