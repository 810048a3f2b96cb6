"""Parsing of generated rationales: polarity extraction, first-mention
resolution, span recovery, and answer-based verification signals."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .corpus import POLARITIES

_POLARITY_TOKEN = re.compile(r"\b(positive|negative|neutral)\b", re.IGNORECASE)
_SENTENCE_END = re.compile(r"[.!?]")


@dataclass(frozen=True)
class PolarityMention:
    label: str
    char_offset: int


def extract_polarities(text: str) -> list[PolarityMention]:
    """Scan left to right for whole-word polarity tokens, case-insensitive.

    Consecutive duplicates collapse to the first occurrence, so the result
    alternates labels; an empty list is a valid outcome.
    """
    mentions: list[PolarityMention] = []
    for m in _POLARITY_TOKEN.finditer(text):
        label = m.group(1).lower()
        if mentions and mentions[-1].label == label:
            continue
        mentions.append(PolarityMention(label=label, char_offset=m.start()))
    return mentions


def resolve_fcfs(mentions: list[PolarityMention]) -> str | None:
    """First mention wins: the label generated earliest is the prediction."""
    if not mentions:
        return None
    return mentions[0].label


def ambiguity_flag(mentions: list[PolarityMention]) -> bool:
    """True iff the rationale mentions two or more distinct polarities."""
    return len({m.label for m in mentions}) >= 2


@dataclass(frozen=True)
class VerificationSignal:
    example_id: str
    value: bool
    reason: str  # match | mismatch | unparseable


def verification_signal(
    resolved: str | None, gold: str, example_id: str = ""
) -> VerificationSignal:
    """True iff the resolved prediction equals the gold label; a rationale
    with no polarity token counts as not matching (reason ``unparseable``)."""
    if gold not in POLARITIES:
        raise ValueError(f"gold polarity {gold!r} not in {POLARITIES}")
    if resolved is None:
        return VerificationSignal(example_id, False, "unparseable")
    if resolved == gold:
        return VerificationSignal(example_id, True, "match")
    return VerificationSignal(example_id, False, "mismatch")


def _clause_after(text: str, anchor: str) -> str | None:
    i = text.lower().find(anchor.lower())
    if i < 0:
        return None
    rest = text[i + len(anchor):]
    m = _SENTENCE_END.search(rest)
    clause = rest[: m.start()] if m else rest
    clause = clause.strip()
    return clause or None


def extract_spans(text: str, aspect_term: str) -> tuple[str | None, str | None]:
    """Best-effort recovery of the aspect and opinion clauses that follow the
    three-hop anchors; absent when an anchor is missing or trails off."""
    aspect_anchor = f"The mentioned aspect towards {aspect_term} is about"
    opinion_anchor = f"The underlying opinion towards {aspect_term} is about"
    return _clause_after(text, aspect_anchor), _clause_after(text, opinion_anchor)


@dataclass(frozen=True)
class Rationale:
    """A generated explanation with its parsed polarity structure."""

    example_id: str
    mode: str
    generator_id: str
    text: str
    polarity_mentions: tuple[PolarityMention, ...] = ()
    resolved: str | None = None
    aspect_span: str | None = None
    opinion_span: str | None = None


def parse_rationale(
    example_id: str,
    mode: str,
    generator_id: str,
    text: str,
    aspect_term: str = "",
) -> Rationale:
    """Build a :class:`Rationale` by running all extractors over the text."""
    mentions = tuple(extract_polarities(text))
    aspect_span, opinion_span = extract_spans(text, aspect_term) if aspect_term else (None, None)
    return Rationale(
        example_id=example_id,
        mode=mode,
        generator_id=generator_id,
        text=text,
        polarity_mentions=mentions,
        resolved=resolve_fcfs(list(mentions)),
        aspect_span=aspect_span,
        opinion_span=opinion_span,
    )


@dataclass(frozen=True)
class RationaleRecord:
    """One row of the rationale store: a rationale plus its verification."""

    rationale: Rationale
    verification: VerificationSignal

    def to_json_obj(self) -> dict:
        return {
            "example_id": self.rationale.example_id,
            "mode": self.rationale.mode,
            "generator_id": self.rationale.generator_id,
            "text": self.rationale.text,
            "resolved": self.rationale.resolved,
            "verification": {
                "value": self.verification.value,
                "reason": self.verification.reason,
            },
        }


def write_store(records: Iterable[RationaleRecord], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_obj(), ensure_ascii=False) + "\n")
    return path


def load_store(path: str | Path) -> dict[str, RationaleRecord]:
    """Read a rationale store back, keyed by example id. Parsed fields not
    serialized (mentions, spans) are re-derived from the stored text."""
    out: dict[str, RationaleRecord] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            mentions = tuple(extract_polarities(obj["text"]))
            rationale = Rationale(
                example_id=obj["example_id"],
                mode=obj["mode"],
                generator_id=obj["generator_id"],
                text=obj["text"],
                polarity_mentions=mentions,
                resolved=obj.get("resolved"),
            )
            signal = VerificationSignal(
                example_id=obj["example_id"],
                value=obj["verification"]["value"],
                reason=obj["verification"]["reason"],
            )
            out[obj["example_id"]] = RationaleRecord(rationale=rationale, verification=signal)
    return out
