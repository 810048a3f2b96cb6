import json
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sentihop.corpus import (
    CorpusError,
    Dataset,
    Example,
    ParseError,
    ValidationError,
    convert_semeval,
    hold_out_validation,
    load_canonical,
    merge,
    slice_dataset,
    write_canonical,
)

PRICE_LINE = (
    '{"id":"r1","sentence":"a cheaper price should not equal a \\"cheap\\" product.",'
    '"aspect_term":"price","polarity":"positive","implicit":true,"split":"test"}'
)


def _write(tmp_path: Path, text: str) -> Path:
    p = tmp_path / "data.jsonl"
    p.write_text(text, encoding="utf-8")
    return p


def test_load_canonical_single_line(tmp_path):
    ds = load_canonical(_write(tmp_path, PRICE_LINE + "\n"))
    assert len(ds) == 1
    ex = ds.examples[0]
    assert ex.id == "r1"
    assert ex.sentence == 'a cheaper price should not equal a "cheap" product.'
    assert ex.aspect_term == "price"
    assert ex.polarity == "positive"
    assert ex.implicit is True
    assert ex.split == "test"


def test_load_canonical_empty_file(tmp_path):
    ds = load_canonical(_write(tmp_path, ""))
    assert len(ds) == 0


def test_load_canonical_bad_polarity(tmp_path):
    line = PRICE_LINE.replace('"positive"', '"joyful"')
    with pytest.raises(ValidationError) as exc:
        load_canonical(_write(tmp_path, line))
    assert "r1" in str(exc.value)


def test_load_canonical_malformed_line_reports_line_number(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_canonical(_write(tmp_path, PRICE_LINE + "\n{not json\n"))
    assert exc.value.line_no == 2


def test_load_canonical_duplicate_id(tmp_path):
    with pytest.raises(ValidationError) as exc:
        load_canonical(_write(tmp_path, PRICE_LINE + "\n" + PRICE_LINE))
    assert "duplicate" in str(exc.value)


def test_load_canonical_aspect_not_in_sentence(tmp_path):
    line = PRICE_LINE.replace('"price"', '"pasta"')
    with pytest.raises(ValidationError):
        load_canonical(_write(tmp_path, line))


def _ex(i, split="test", implicit=False, polarity="positive", aspect="food"):
    return Example(
        id=f"e{i}",
        sentence=f"sample {i}: the {aspect} here",
        aspect_term=aspect,
        polarity=polarity,
        implicit=implicit,
        split=split,
    )


def test_slice_filters_split_and_implicit():
    ds = Dataset(
        "custom", (_ex(1), _ex(2, implicit=True), _ex(3), _ex(4, split="train"))
    )
    test_all = slice_dataset(ds, "test")
    assert [e.id for e in test_all] == ["e1", "e2", "e3"]
    assert [e.id for e in slice_dataset(ds, "test", implicit_only=True)] == ["e2"]
    assert slice_dataset(ds, "validation") == []


# Strategies for canonical datasets: aspect term is embedded in the sentence
# by construction, so Example invariants hold.
_word = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd")), min_size=1, max_size=8
)


@st.composite
def examples_strategy(draw, index):
    aspect = draw(_word)
    prefix = draw(_word)
    suffix = draw(_word)
    return Example(
        id=f"gen{index}",
        sentence=f"{prefix} {aspect} {suffix}",
        aspect_term=aspect,
        polarity=draw(st.sampled_from(("positive", "negative", "neutral"))),
        implicit=draw(st.booleans()),
        split=draw(st.sampled_from(("train", "validation", "test"))),
    )


@st.composite
def dataset_strategy(draw):
    n = draw(st.integers(min_value=0, max_value=12))
    return Dataset("custom", tuple(draw(examples_strategy(i)) for i in range(n)))


@given(dataset_strategy())
@settings(max_examples=40, deadline=None)
def test_round_trip_write_load_write_byte_identical(tmp_path_factory, ds):
    tmp = tmp_path_factory.mktemp("roundtrip")
    first = tmp / "a.jsonl"
    second = tmp / "b.jsonl"
    write_canonical(ds, first)
    loaded = load_canonical(first)
    assert loaded.examples == ds.examples
    write_canonical(loaded, second)
    assert first.read_bytes() == second.read_bytes()


@given(dataset_strategy(), st.sampled_from(("train", "validation", "test")))
@settings(max_examples=40, deadline=None)
def test_slice_implicit_subset_of_all(ds, split):
    implicit = slice_dataset(ds, split, implicit_only=True)
    everything = slice_dataset(ds, split, implicit_only=False)
    ids = [e.id for e in everything]
    for ex in implicit:
        assert ex.id in ids


# --- SemEval XML conversion ---------------------------------------------


def _semeval_xml(tmp_path: Path, sentences) -> Path:
    root = ET.Element("sentences")
    for sid, text, terms in sentences:
        s = ET.SubElement(root, "sentence", id=sid)
        ET.SubElement(s, "text").text = text
        if terms:
            holder = ET.SubElement(s, "aspectTerms")
            for term, polarity in terms:
                ET.SubElement(holder, "aspectTerm", term=term, polarity=polarity)
    path = tmp_path / "data.xml"
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
    return path


def test_convert_semeval_direct_mapping(tmp_path):
    xml = _semeval_xml(tmp_path, [("10", "a fair price for lunch", [("price", "positive")])])
    report = convert_semeval(xml, split="test")
    assert len(report.dataset) == 1
    ex = report.dataset.examples[0]
    assert ex.aspect_term == "price"
    assert ex.polarity == "positive"
    assert ex.split == "test"
    assert ex.implicit is False
    assert report.dropped_conflict == 0


def test_convert_semeval_drops_conflict(tmp_path):
    xml = _semeval_xml(
        tmp_path, [("10", "the price was high but fair", [("price", "conflict")])]
    )
    # Independent count of conflict terms straight off the source XML.
    raw_conflicts = ET.parse(xml).getroot().findall(".//aspectTerm[@polarity='conflict']")
    report = convert_semeval(xml)
    assert len(report.dataset) == 0
    assert report.dropped_conflict == len(raw_conflicts) == 1


def test_convert_semeval_sidecar_marks_implicit(tmp_path):
    xml = _semeval_xml(tmp_path, [("7", "the staff forgot us twice", [("staff", "negative")])])
    sidecar = tmp_path / "implicit.jsonl"
    sidecar.write_text(json.dumps({"id": "train-7-0", "implicit": True}) + "\n")
    report = convert_semeval(xml, sidecar, split="train")
    assert report.dataset.examples[0].implicit is True
    assert report.unknown_sidecar_refs == ()


def test_convert_semeval_sidecar_sentence_term_key(tmp_path):
    xml = _semeval_xml(tmp_path, [("7", "the staff forgot us twice", [("staff", "negative")])])
    sidecar = tmp_path / "implicit.jsonl"
    sidecar.write_text(
        json.dumps({"sentence": "the staff forgot us twice", "term": "staff"}) + "\n"
    )
    report = convert_semeval(xml, sidecar)
    assert report.dataset.examples[0].implicit is True


def test_convert_semeval_unknown_sidecar_ref_is_warning(tmp_path):
    xml = _semeval_xml(tmp_path, [("7", "the staff forgot us twice", [("staff", "negative")])])
    sidecar = tmp_path / "implicit.jsonl"
    sidecar.write_text(json.dumps({"id": "nope", "implicit": True}) + "\n")
    report = convert_semeval(xml, sidecar)
    assert report.dataset.examples[0].implicit is False
    assert report.unknown_sidecar_refs == ("nope",)


def test_convert_semeval_structure_mismatch(tmp_path):
    path = tmp_path / "bad.xml"
    path.write_text("<reviews><review/></reviews>")
    with pytest.raises(CorpusError):
        convert_semeval(path)


_xml_word = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu")), min_size=1, max_size=8
)


@given(
    st.lists(
        st.tuples(
            _xml_word,
            _xml_word,
            st.sampled_from(("positive", "negative", "neutral", "conflict")),
        ),
        min_size=0,
        max_size=8,
    )
)
@settings(max_examples=40, deadline=None)
def test_convert_semeval_output_always_valid(tmp_path_factory, rows):
    tmp = tmp_path_factory.mktemp("fuzzxml")
    sentences = [
        (str(i), f"{prefix} {term} here", [(term, polarity)])
        for i, (prefix, term, polarity) in enumerate(rows)
    ]
    report = convert_semeval(_semeval_xml(tmp, sentences))
    report.dataset.validate()  # would raise on any invariant violation
    n_conflict = sum(1 for _, _, p in rows if p == "conflict")
    assert report.dropped_conflict == n_conflict
    assert len(report.dataset) == len(rows) - n_conflict


def test_hold_out_validation_moves_last_tenth_by_id():
    examples = tuple(_ex(i, split="train") for i in range(20))
    ds = Dataset("custom", examples)
    held = hold_out_validation(ds, fraction=0.1)
    val_ids = {e.id for e in slice_dataset(held, "validation")}
    assert val_ids == {"e8", "e9"}  # id sort is lexicographic
    # idempotent once a validation split exists
    assert hold_out_validation(held) == held


def test_merge_rejects_duplicate_ids():
    a = Dataset("custom", (_ex(1),))
    with pytest.raises(ValidationError):
        merge([a, a])
