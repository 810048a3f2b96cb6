"""Canonical corpus handling: ingest SemEval-style ABSA data with
explicit/implicit tags into one JSONL record format and manage splits.

The canonical format is JSON Lines, UTF-8, one example per line with the
fields ``id, sentence, aspect_term, polarity, implicit, split`` in that
order.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass, replace
from pathlib import Path

POLARITIES = ("positive", "negative", "neutral")
SPLITS = ("train", "validation", "test")
DATASET_NAMES = ("restaurant", "laptop", "custom")

_FIELD_ORDER = ("id", "sentence", "aspect_term", "polarity", "implicit", "split")


class CorpusError(Exception):
    """Base class for corpus ingestion problems."""


class ParseError(CorpusError):
    """A line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ValidationError(CorpusError):
    """An invariant was violated; names the offending example id."""

    def __init__(self, example_id: str, message: str):
        super().__init__(f"example {example_id!r}: {message}")
        self.example_id = example_id


@dataclass(frozen=True)
class Example:
    """One labeled instance: a sentence, an aspect term inside it, the gold
    polarity, and whether the sentiment is expressed implicitly."""

    id: str
    sentence: str
    aspect_term: str
    polarity: str
    implicit: bool
    split: str

    def validate(self) -> None:
        if self.polarity not in POLARITIES:
            raise ValidationError(self.id, f"polarity {self.polarity!r} not in {POLARITIES}")
        if self.split not in SPLITS:
            raise ValidationError(self.id, f"split {self.split!r} not in {SPLITS}")
        if self.aspect_term not in self.sentence:
            raise ValidationError(
                self.id,
                f"aspect term {self.aspect_term!r} does not occur verbatim in the sentence",
            )

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "sentence": self.sentence,
            "aspect_term": self.aspect_term,
            "polarity": self.polarity,
            "implicit": self.implicit,
            "split": self.split,
        }


@dataclass(frozen=True)
class Dataset:
    """An immutable, order-preserving collection of examples."""

    name: str
    examples: tuple[Example, ...]

    def validate(self) -> None:
        if self.name not in DATASET_NAMES:
            raise CorpusError(f"dataset name {self.name!r} not in {DATASET_NAMES}")
        seen: set[str] = set()
        for ex in self.examples:
            ex.validate()
            if ex.id in seen:
                raise ValidationError(ex.id, "duplicate id")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)


def _example_from_obj(obj: dict, line_no: int) -> Example:
    missing = [k for k in _FIELD_ORDER if k not in obj]
    if missing:
        raise ParseError(line_no, f"missing fields {missing}")
    if not isinstance(obj["implicit"], bool):
        raise ParseError(line_no, f"implicit must be a JSON boolean, got {obj['implicit']!r}")
    return Example(
        id=str(obj["id"]),
        sentence=str(obj["sentence"]),
        aspect_term=str(obj["aspect_term"]),
        polarity=str(obj["polarity"]),
        implicit=obj["implicit"],
        split=str(obj["split"]),
    )


def load_canonical(path: str | Path, name: str = "custom") -> Dataset:
    """Read a canonical JSONL file into a validated :class:`Dataset`.

    Raises :class:`ParseError` with the line number on malformed lines and
    :class:`ValidationError` naming the id on invariant violations.
    """
    path = Path(path)
    examples: list[Example] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, str(exc)) from exc
            if not isinstance(obj, dict):
                raise ParseError(line_no, "line is not a JSON object")
            examples.append(_example_from_obj(obj, line_no))
    dataset = Dataset(name=name, examples=tuple(examples))
    dataset.validate()
    return dataset


def write_canonical(dataset: Dataset, path: str | Path) -> Path:
    """Write a dataset back to canonical JSONL, one example per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for ex in dataset.examples:
            fh.write(json.dumps(ex.to_json_obj(), ensure_ascii=False) + "\n")
    return path


def _load_sidecar(path: str | Path) -> tuple[set[str], set[tuple[str, str]]]:
    """Implicit-tag sidecar: JSONL rows carrying either an ``id`` or a
    ``(sentence, term)`` key, each flagged implicit."""
    ids: set[str] = set()
    keys: set[tuple[str, str]] = set()
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"sidecar: {exc}") from exc
            if not obj.get("implicit", True):
                continue
            if "id" in obj:
                ids.add(str(obj["id"]))
            elif "sentence" in obj and "term" in obj:
                keys.add((str(obj["sentence"]), str(obj["term"])))
            else:
                raise ParseError(line_no, "sidecar row needs 'id' or ('sentence', 'term')")
    return ids, keys


@dataclass(frozen=True)
class ConversionReport:
    dataset: Dataset
    dropped_conflict: int
    unknown_sidecar_refs: tuple[str, ...]


def convert_semeval(
    xml_path: str | Path,
    implicit_tag_path: str | Path | None = None,
    split: str = "train",
    name: str = "custom",
    id_prefix: str | None = None,
) -> ConversionReport:
    """Convert a SemEval-2014 ABSA XML file into the canonical format.

    Aspect terms labeled ``conflict`` are dropped (the 3-class protocol has
    no home for them) and the drop count is reported. Sidecar rows that
    reference no example produce a warning entry, not an error.

    ``split`` tags every produced example; the source distributes one XML
    file per split. ``id_prefix`` (default: the split name) keeps ids unique
    when several files are merged into one dataset.
    """
    if split not in SPLITS:
        raise CorpusError(f"split {split!r} not in {SPLITS}")
    prefix = id_prefix if id_prefix is not None else split
    try:
        tree = ET.parse(str(xml_path))
    except ET.ParseError as exc:
        raise CorpusError(f"XML structure mismatch in {xml_path}: {exc}") from exc
    root = tree.getroot()
    if root.tag != "sentences":
        raise CorpusError(f"XML structure mismatch: expected <sentences> root, got <{root.tag}>")

    examples: list[Example] = []
    dropped = 0
    for sent in root.iter("sentence"):
        sid = sent.get("id", "")
        text_el = sent.find("text")
        if text_el is None or text_el.text is None:
            raise CorpusError(f"XML structure mismatch: sentence {sid!r} has no <text>")
        sentence = text_el.text
        terms = sent.find("aspectTerms")
        if terms is None:
            continue
        for k, term_el in enumerate(terms.findall("aspectTerm")):
            term = term_el.get("term")
            polarity = term_el.get("polarity")
            if term is None or polarity is None:
                raise CorpusError(
                    f"XML structure mismatch: aspectTerm in sentence {sid!r} "
                    "lacks term/polarity attributes"
                )
            if polarity == "conflict":
                dropped += 1
                continue
            examples.append(
                Example(
                    id=f"{prefix}-{sid}-{k}",
                    sentence=sentence,
                    aspect_term=term,
                    polarity=polarity,
                    implicit=False,
                    split=split,
                )
            )

    unknown: list[str] = []
    if implicit_tag_path is not None:
        ids, keys = _load_sidecar(implicit_tag_path)
        by_id = {ex.id: i for i, ex in enumerate(examples)}
        by_key = {(ex.sentence, ex.aspect_term): i for i, ex in enumerate(examples)}
        for ref in sorted(ids):
            if ref in by_id:
                i = by_id[ref]
                examples[i] = replace(examples[i], implicit=True)
            else:
                unknown.append(ref)
        for key in sorted(keys):
            if key in by_key:
                i = by_key[key]
                examples[i] = replace(examples[i], implicit=True)
            else:
                unknown.append(f"{key[0]!r}/{key[1]!r}")

    dataset = Dataset(name=name, examples=tuple(examples))
    dataset.validate()
    return ConversionReport(
        dataset=dataset, dropped_conflict=dropped, unknown_sidecar_refs=tuple(unknown)
    )


def merge(datasets: list[Dataset], name: str = "custom") -> Dataset:
    """Concatenate datasets, revalidating id uniqueness."""
    examples: list[Example] = []
    for ds in datasets:
        examples.extend(ds.examples)
    merged = Dataset(name=name, examples=tuple(examples))
    merged.validate()
    return merged


def hold_out_validation(dataset: Dataset, fraction: float = 0.1) -> Dataset:
    """Reassign the last ``fraction`` of train examples (stable by id sort)
    to the validation split. No-op when a validation split already exists."""
    if any(ex.split == "validation" for ex in dataset.examples):
        return dataset
    train_ids = sorted(ex.id for ex in dataset.examples if ex.split == "train")
    n_held = int(len(train_ids) * fraction)
    if n_held == 0:
        return dataset
    held = set(train_ids[-n_held:])
    examples = tuple(
        replace(ex, split="validation") if ex.id in held else ex for ex in dataset.examples
    )
    return Dataset(name=dataset.name, examples=examples)


def slice_dataset(dataset: Dataset, split: str, implicit_only: bool = False) -> list[Example]:
    """Filter examples by split, keeping input order; optionally keep only
    the implicit slice."""
    out = [ex for ex in dataset.examples if ex.split == split]
    if implicit_only:
        out = [ex for ex in out if ex.implicit]
    return out
