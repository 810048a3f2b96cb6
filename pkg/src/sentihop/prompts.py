"""Deterministic prompt rendering for every mode the pipeline uses.

All renders are pure string substitution: placeholders are replaced
literally, with no escaping, so a sentence containing double quotes is
embedded verbatim. Identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .corpus import Example


class PromptMode(str, Enum):
    DIRECT = "direct"
    RE = "re"
    RA = "ra"
    ZERO_COT = "zero_cot"
    TH_RE = "th_re"
    TH_RA = "th_ra"
    VERIFY = "verify"


BASELINE_MODES = (PromptMode.DIRECT, PromptMode.RE, PromptMode.RA, PromptMode.ZERO_COT)

# Modes that reveal the gold label at render time.
LABELED_MODES = (PromptMode.RA, PromptMode.TH_RA)

STEP_BY_STEP = "Let's think step by step."

# The three-hop scaffold: mentioned aspect -> underlying opinion -> polarity.
_SCAFFOLD = (
    "The mentioned aspect towards {t} is about ... "
    "The underlying opinion towards {t} is about ... "
    "Therefore, the sentiment polarity towards {t} is ..."
)

_QUESTION_STEM = 'Given the sentence "{x}", what is the sentiment polarity towards {t}'
_LABELED_STEM = 'Given the sentence "{x}", the sentiment polarity towards {t} is {y}, why?'

_VERIFY_TEMPLATE = (
    'Given the rationale "{e}", Please verify whether the above given rationale '
    "is reasonable. Return True or False."
)


@dataclass(frozen=True)
class RenderedPrompt:
    mode: PromptMode
    example_id: str
    text: str


def scaffold(aspect_term: str) -> str:
    return _SCAFFOLD.format(t=aspect_term)


def question(example: Example, mode: PromptMode) -> str:
    """The question clause alone, before any scaffold.

    For the label-revealing modes this includes the gold polarity; the
    reasoning modes ask "why?" without it.
    """
    if mode in (PromptMode.RA, PromptMode.TH_RA):
        return _LABELED_STEM.format(x=example.sentence, t=example.aspect_term, y=example.polarity)
    if mode is PromptMode.DIRECT:
        return _QUESTION_STEM.format(x=example.sentence, t=example.aspect_term) + "?"
    if mode in (PromptMode.RE, PromptMode.TH_RE):
        return _QUESTION_STEM.format(x=example.sentence, t=example.aspect_term) + ", why?"
    if mode is PromptMode.ZERO_COT:
        return (
            _QUESTION_STEM.format(x=example.sentence, t=example.aspect_term)
            + ", why? "
            + STEP_BY_STEP
        )
    raise ValueError(f"no question clause for mode {mode}")


def render_th_re(example: Example) -> RenderedPrompt:
    """Three-hop reasoning prompt: question, step-by-step cue, scaffold."""
    text = (
        question(example, PromptMode.TH_RE)
        + " "
        + STEP_BY_STEP
        + " "
        + scaffold(example.aspect_term)
    )
    return RenderedPrompt(PromptMode.TH_RE, example.id, text)


def render_th_ra(example: Example) -> RenderedPrompt:
    """Three-hop rationalization prompt: same scaffold, gold label revealed."""
    text = (
        question(example, PromptMode.TH_RA)
        + " "
        + STEP_BY_STEP
        + " "
        + scaffold(example.aspect_term)
    )
    return RenderedPrompt(PromptMode.TH_RA, example.id, text)


def render_baseline(example: Example, mode: PromptMode) -> RenderedPrompt:
    """Render one of the four baseline modes (direct, re, ra, zero_cot)."""
    if mode not in BASELINE_MODES:
        raise ValueError(f"{mode} is not a baseline mode")
    return RenderedPrompt(mode, example.id, question(example, mode))


def render_verify(rationale_text: str, example_id: str = "") -> RenderedPrompt:
    """Verification prompt wrapping a rationale; asks for True or False."""
    if not rationale_text:
        raise ValueError("rationale text must be non-empty")
    text = _VERIFY_TEMPLATE.format(e=rationale_text)
    return RenderedPrompt(PromptMode.VERIFY, example_id, text)


def render(example: Example, mode: PromptMode) -> RenderedPrompt:
    """Dispatch on mode for the example-driven prompts (all but verify)."""
    if mode is PromptMode.TH_RE:
        return render_th_re(example)
    if mode is PromptMode.TH_RA:
        return render_th_ra(example)
    if mode in BASELINE_MODES:
        return render_baseline(example, mode)
    raise ValueError(f"mode {mode} needs a rationale, not an example")


def explain_input(example: Example, mode: str) -> str:
    """Input text for the explanation task: the three-hop question with the
    step-by-step cue but without the scaffold, which the model must produce.

    ``mode`` is "re" (no gold label) or "ra" (gold label given).
    """
    if mode == "re":
        return question(example, PromptMode.TH_RE) + " " + STEP_BY_STEP
    if mode == "ra":
        return question(example, PromptMode.TH_RA) + " " + STEP_BY_STEP
    raise ValueError(f"explain mode must be 're' or 'ra', got {mode!r}")


def predict_input(example: Example) -> str:
    """Input text for the prediction task: the direct question."""
    return question(example, PromptMode.DIRECT)
