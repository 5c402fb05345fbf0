"""Sense inventory: lemma -> ordered candidate senses -> gloss text.

The inventory file is UTF-8 JSON-lines. The first line is a header
``{"format": "sense-inventory", "version": 1}``; every following line is an
object with exactly the fields ``sense_id``, ``lemma``, ``pos``, ``gloss``.
Line order within a lemma+pos defines the sense ranking (rank 1 = first,
most common sense). Lemmas are case-folded at load; glosses never are.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError, FormatError

# A sense id is an opaque, non-empty string, unique within an inventory.
SenseId = str

POS_TAGS = ("noun", "verb", "adj", "adv")

INVENTORY_FORMAT = "sense-inventory"
INVENTORY_VERSION = 1

_RECORD_FIELDS = {"sense_id", "lemma", "pos", "gloss"}


@dataclass(frozen=True)
class LemmaKey:
    """A disambiguation target: lowercase lemma plus one of the four content POS."""

    lemma: str
    pos: str

    def __post_init__(self) -> None:
        if not self.lemma:
            raise DataError("lemma must be non-empty")
        if self.pos not in POS_TAGS:
            raise DataError(f"pos must be one of {POS_TAGS}, got {self.pos!r}")

    def __str__(self) -> str:
        return f"{self.lemma}|{self.pos}"


@dataclass(frozen=True)
class SenseEntry:
    sense_id: SenseId
    lemma_key: LemmaKey
    gloss: str
    rank: int  # 1-based position in the lemma's ordered sense list


class SenseInventory:
    """Immutable after construction; safe for concurrent readers."""

    def __init__(self, entries: list[SenseEntry]):
        if not entries:
            raise DataError("inventory has no entries")
        self.entries: tuple[SenseEntry, ...] = tuple(entries)
        self._by_id: dict[SenseId, SenseEntry] = {}
        self._by_lemma: dict[LemmaKey, list[SenseEntry]] = {}
        for e in entries:
            if e.sense_id in self._by_id:
                raise DataError(f"duplicate sense_id {e.sense_id!r}")
            if not e.gloss:
                raise DataError(f"empty gloss for sense {e.sense_id!r}")
            self._by_id[e.sense_id] = e
            self._by_lemma.setdefault(e.lemma_key, []).append(e)
        for key, group in self._by_lemma.items():
            ranks = [e.rank for e in group]
            if ranks != list(range(1, len(group) + 1)):
                raise DataError(f"ranks for {key} are not contiguous 1..n: {ranks}")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, sense_id: SenseId) -> bool:
        return sense_id in self._by_id

    @property
    def lemma_keys(self) -> list[LemmaKey]:
        return list(self._by_lemma)

    def has_lemma(self, key: LemmaKey) -> bool:
        return key in self._by_lemma

    def entry(self, sense_id: SenseId) -> SenseEntry:
        try:
            return self._by_id[sense_id]
        except KeyError:
            raise DataError(f"unknown sense_id {sense_id!r}") from None


def candidate_senses(inv: SenseInventory, key: LemmaKey) -> list[SenseId]:
    """Candidate senses in rank order; empty list for an unknown lemma
    (the caller decides how to handle uncovered words)."""
    return [e.sense_id for e in inv._by_lemma.get(key, [])]


def first_sense(inv: SenseInventory, key: LemmaKey) -> SenseId:
    """The rank-1 sense of a lemma; the knowledge baseline's prediction."""
    group = inv._by_lemma.get(key)
    if not group:
        raise DataError(f"lemma {key} not in inventory")
    return group[0].sense_id


def gloss_text(inv: SenseInventory, sense_id: SenseId) -> str:
    return inv.entry(sense_id).gloss


def load_inventory(path: str) -> SenseInventory:
    entries: list[SenseEntry] = []
    next_rank: dict[LemmaKey, int] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, expected a header line")
    _check_header(path, lines[0], INVENTORY_FORMAT, INVENTORY_VERSION)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        if not isinstance(obj, dict) or set(obj) != _RECORD_FIELDS:
            raise FormatError(
                f"{path}:{lineno}: record must have exactly the fields "
                f"{sorted(_RECORD_FIELDS)}"
            )
        if not obj["sense_id"] or not isinstance(obj["sense_id"], str):
            raise FormatError(f"{path}:{lineno}: sense_id must be a non-empty string")
        if not obj["gloss"] or not isinstance(obj["gloss"], str):
            raise FormatError(f"{path}:{lineno}: gloss must be a non-empty string")
        try:
            key = LemmaKey(lemma=str(obj["lemma"]).casefold(), pos=obj["pos"])
        except DataError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        rank = next_rank.get(key, 0) + 1
        next_rank[key] = rank
        entries.append(SenseEntry(obj["sense_id"], key, obj["gloss"], rank))
    if not entries:
        raise DataError(f"{path}: no entries")
    return SenseInventory(entries)


def save_inventory(inv: SenseInventory, path: str) -> None:
    """Writes entries in construction order; round-trips gloss text byte-identically."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"format": INVENTORY_FORMAT, "version": INVENTORY_VERSION}) + "\n")
        for e in inv.entries:
            rec = {
                "sense_id": e.sense_id,
                "lemma": e.lemma_key.lemma,
                "pos": e.lemma_key.pos,
                "gloss": e.gloss,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def _check_header(path: str, line: str, expected_format: str, expected_version: int) -> None:
    try:
        header = json.loads(line)
    except json.JSONDecodeError:
        raise FormatError(f"{path}:1: header line is not valid JSON") from None
    if not isinstance(header, dict) or header.get("format") != expected_format:
        raise FormatError(f"{path}:1: expected format {expected_format!r} header")
    if header.get("version") != expected_version:
        raise FormatError(
            f"{path}:1: unsupported version {header.get('version')!r}, "
            f"expected {expected_version}"
        )
