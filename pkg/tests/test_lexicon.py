import json

import pytest

from bisense.errors import DataError, FormatError
from bisense.lexicon import (
    LemmaKey,
    candidate_senses,
    first_sense,
    gloss_text,
    load_inventory,
    save_inventory,
)

from conftest import PLANT_GLOSS, write_inventory


def test_load_single_record(tmp_path):
    path = write_inventory(
        tmp_path / "one.jsonl",
        [{"sense_id": "plant%v:1", "lemma": "plant", "pos": "verb", "gloss": PLANT_GLOSS}],
    )
    inv = load_inventory(path)
    assert len(inv) == 1
    entry = inv.entry("plant%v:1")
    assert entry.rank == 1
    assert entry.gloss == PLANT_GLOSS


def test_empty_file_is_an_error(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(FormatError):
        load_inventory(path)


def test_header_only_file_has_no_entries(tmp_path):
    path = write_inventory(tmp_path / "noentries.jsonl", [])
    with pytest.raises(DataError, match="no entries"):
        load_inventory(path)


def test_duplicate_sense_id_names_the_id(tmp_path):
    rec = {"sense_id": "dup%n:1", "lemma": "dup", "pos": "noun", "gloss": "g"}
    path = write_inventory(tmp_path / "dup.jsonl", [rec, rec])
    with pytest.raises(DataError, match="dup%n:1"):
        load_inventory(path)


def test_missing_header_rejected(tmp_path):
    path = tmp_path / "nohdr.jsonl"
    path.write_text('{"sense_id": "a", "lemma": "a", "pos": "noun", "gloss": "g"}\n')
    with pytest.raises(FormatError):
        load_inventory(path)


def test_extra_field_rejected_with_line_number(tmp_path):
    path = tmp_path / "extra.jsonl"
    path.write_text(
        '{"format": "sense-inventory", "version": 1}\n'
        '{"sense_id": "a%n:1", "lemma": "a", "pos": "noun", "gloss": "g", "rank": 1}\n'
    )
    with pytest.raises(FormatError, match=":2"):
        load_inventory(path)


def test_bad_json_line_reports_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"format": "sense-inventory", "version": 1}\nnot json\n')
    with pytest.raises(FormatError, match=":2"):
        load_inventory(path)


def test_candidate_senses_rank_order(inventory):
    key = LemmaKey("plant", "noun")
    assert candidate_senses(inventory, key) == ["plant%n:1", "plant%n:2", "plant%n:3"]


def test_candidate_senses_unknown_lemma_is_empty(inventory):
    assert candidate_senses(inventory, LemmaKey("zebra", "noun")) == []


def test_candidate_senses_singleton(inventory):
    assert candidate_senses(inventory, LemmaKey("run", "verb")) == ["run%v:1"]


def test_first_sense(inventory):
    assert first_sense(inventory, LemmaKey("bank", "noun")) == "bank%n:1"
    assert first_sense(inventory, LemmaKey("run", "verb")) == "run%v:1"
    with pytest.raises(DataError):
        first_sense(inventory, LemmaKey("zebra", "noun"))


def test_first_sense_matches_candidate_head(inventory):
    for key in inventory.lemma_keys:
        cands = candidate_senses(inventory, key)
        assert cands[0] == first_sense(inventory, key)


def test_gloss_text_verbatim(inventory):
    assert gloss_text(inventory, "plant%v:1") == PLANT_GLOSS
    with pytest.raises(DataError):
        gloss_text(inventory, "nope%n:1")


def test_gloss_unicode_round_trip(tmp_path):
    gloss = "a “fancy” gloss — with unicode punctuation…"
    path = write_inventory(
        tmp_path / "uni.jsonl",
        [{"sense_id": "x%n:1", "lemma": "x", "pos": "noun", "gloss": gloss}],
    )
    inv = load_inventory(path)
    assert gloss_text(inv, "x%n:1") == gloss
    out = tmp_path / "uni2.jsonl"
    save_inventory(inv, out)
    inv2 = load_inventory(out)
    assert gloss_text(inv2, "x%n:1") == gloss


def test_save_load_round_trip_preserves_ranks_and_glosses(inventory, tmp_path):
    out = tmp_path / "roundtrip.jsonl"
    save_inventory(inventory, out)
    inv2 = load_inventory(out)
    assert len(inv2) == len(inventory)
    for e, e2 in zip(inventory.entries, inv2.entries):
        assert (e.sense_id, e.lemma_key, e.gloss, e.rank) == (
            e2.sense_id,
            e2.lemma_key,
            e2.gloss,
            e2.rank,
        )


def test_lemma_case_folded_at_load(tmp_path):
    path = write_inventory(
        tmp_path / "case.jsonl",
        [{"sense_id": "x%n:1", "lemma": "MixedCase", "pos": "noun", "gloss": "Gloss Stays"}],
    )
    inv = load_inventory(path)
    entry = inv.entry("x%n:1")
    assert entry.lemma_key.lemma == "mixedcase"
    assert entry.gloss == "Gloss Stays"


def test_lemma_key_validation():
    with pytest.raises(DataError):
        LemmaKey("", "noun")
    with pytest.raises(DataError):
        LemmaKey("x", "pronoun")
