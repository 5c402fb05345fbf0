import json

import pytest

from bisense.corpus import load_corpus
from bisense.lexicon import load_inventory

PLANT_GLOSS = "put or set [something] firmly into the ground"

INVENTORY_RECORDS = [
    {"sense_id": "plant%v:1", "lemma": "plant", "pos": "verb", "gloss": PLANT_GLOSS},
    {"sense_id": "plant%n:1", "lemma": "plant", "pos": "noun",
     "gloss": "buildings for carrying on industrial labor"},
    {"sense_id": "plant%n:2", "lemma": "plant", "pos": "noun",
     "gloss": "a living organism lacking the power of locomotion"},
    {"sense_id": "plant%n:3", "lemma": "plant", "pos": "noun",
     "gloss": "an actor situated in the audience"},
    {"sense_id": "bank%n:1", "lemma": "bank", "pos": "noun",
     "gloss": "a financial institution that accepts deposits"},
    {"sense_id": "bank%n:2", "lemma": "bank", "pos": "noun",
     "gloss": "sloping land beside a body of water"},
    {"sense_id": "run%v:1", "lemma": "run", "pos": "verb",
     "gloss": "move fast by using one's feet"},
]


def write_inventory(path, records=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "sense-inventory", "version": 1}) + "\n")
        for rec in records if records is not None else INVENTORY_RECORDS:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return path


def write_corpus(path, sentences, name="toy"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": "wsd-corpus", "version": 1, "name": name}) + "\n")
        for sent in sentences:
            fh.write(json.dumps({"tokens": sent}, ensure_ascii=False) + "\n")
    return path


def token(surface, lemma=None, pos=None, gold=None, iid=None):
    t = {"surface": surface}
    if lemma is not None:
        t["lemma"] = lemma
        t["pos"] = pos
    if gold is not None:
        t["gold"] = gold
    if iid is not None:
        t["id"] = iid
    return t


CORPUS_SENTENCES = [
    [token("she"), token("planted", "plant", "verb", ["plant%v:1"], "t.001"), token("the"), token("tree")],
    [token("the"), token("plant", "plant", "noun", ["plant%n:2"], "t.002"), token("grew")],
    [token("the"), token("plant", "plant", "noun", ["plant%n:1"], "t.003"), token("closed")],
    [token("the"), token("bank", "bank", "noun", ["bank%n:1"], "t.004"), token("opened")],
    [token("river"), token("bank", "bank", "noun", ["bank%n:2"], "t.005")],
    [token("dogs"), token("run", "run", "verb", ["run%v:1"], "t.006"), token("fast")],
]


@pytest.fixture
def inventory_path(tmp_path):
    return write_inventory(tmp_path / "inventory.jsonl")


@pytest.fixture
def inventory(inventory_path):
    return load_inventory(inventory_path)


@pytest.fixture
def corpus_path(tmp_path):
    return write_corpus(tmp_path / "corpus.jsonl", CORPUS_SENTENCES)


@pytest.fixture
def corpus(corpus_path, inventory):
    return load_corpus(corpus_path, inventory)
