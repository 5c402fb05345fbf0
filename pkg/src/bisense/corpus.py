"""Sense-annotated corpora: loading, frequency statistics, evaluation
partitions (MFS/LFS and zero-shot words/senses), and k-shot filtering.

Corpus files are UTF-8 JSON-lines. The first line is a header
``{"format": "wsd-corpus", "version": 1, "name": ...}``; every following
line is one sentence: ``{"tokens": [{"surface": ..., "lemma": ...,
"pos": ..., "gold": [...], "id": ...}, ...]}`` where lemma/pos/gold/id are
optional per token. A token with a non-empty gold list is an *instance*
and must carry a lemma, pos and a corpus-unique id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .lexicon import LemmaKey, SenseId, SenseInventory, _check_header, candidate_senses, first_sense

CORPUS_FORMAT = "wsd-corpus"
CORPUS_VERSION = 1

FREQ_FORMAT = "sense-frequencies"
FREQ_VERSION = 1


@dataclass(frozen=True)
class AnnotatedToken:
    surface: str
    lemma_key: LemmaKey | None = None
    gold: tuple[SenseId, ...] = ()
    instance_id: str | None = None

    def __post_init__(self) -> None:
        if self.gold and (self.lemma_key is None or self.instance_id is None):
            raise DataError(
                f"gold-labeled token {self.surface!r} needs both lemma/pos and id"
            )


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[AnnotatedToken, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise DataError("sentence with zero tokens")

    @property
    def words(self) -> list[str]:
        return [t.surface for t in self.tokens]


@dataclass(frozen=True)
class Instance:
    """One gold-labeled token, resolved to its position in the corpus."""

    instance_id: str
    sentence_index: int
    token_index: int
    lemma_key: LemmaKey
    gold: tuple[SenseId, ...]


class Corpus:
    """Immutable after construction. `instances` lists gold-labeled tokens
    in corpus order."""

    def __init__(self, name: str, sentences: list[Sentence]):
        self.name = name
        self.sentences: tuple[Sentence, ...] = tuple(sentences)
        self.instances: tuple[Instance, ...] = tuple(self._collect())
        seen: set[str] = set()
        for inst in self.instances:
            if inst.instance_id in seen:
                raise DataError(f"duplicate instance_id {inst.instance_id!r}")
            seen.add(inst.instance_id)
        self._by_id = {inst.instance_id: inst for inst in self.instances}

    def _collect(self):
        for si, sent in enumerate(self.sentences):
            for ti, tok in enumerate(sent.tokens):
                if tok.gold:
                    yield Instance(tok.instance_id, si, ti, tok.lemma_key, tok.gold)

    def instance(self, instance_id: str) -> Instance:
        try:
            return self._by_id[instance_id]
        except KeyError:
            raise DataError(f"unknown instance_id {instance_id!r}") from None

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class SenseFrequencyTable:
    """Gold-label counts from a training corpus. An instance with several
    gold ids contributes one count to each of them."""

    count: dict[SenseId, int] = field(default_factory=dict)
    per_lemma: dict[LemmaKey, dict[SenseId, int]] = field(default_factory=dict)

    def lemma_occurrences(self, key: LemmaKey) -> int:
        return sum(self.per_lemma.get(key, {}).values())


@dataclass(frozen=True)
class EvalPartition:
    """MFS/LFS partition of the gold-labeled instances, plus the zero-shot subsets."""

    mfs_ids: frozenset[str]
    lfs_ids: frozenset[str]
    zero_shot_word_ids: frozenset[str]
    zero_shot_sense_ids: frozenset[str]


def validate_against_inventory(corpus: Corpus, inv: SenseInventory) -> None:
    """Every gold id must resolve and belong to the token's lemma key."""
    for inst in corpus.instances:
        for sid in inst.gold:
            entry = inv.entry(sid) if sid in inv else None
            if entry is None:
                raise DataError(
                    f"instance {inst.instance_id!r}: gold sense {sid!r} "
                    f"not in inventory"
                )
            if entry.lemma_key != inst.lemma_key:
                raise DataError(
                    f"instance {inst.instance_id!r}: gold sense {sid!r} belongs "
                    f"to {entry.lemma_key}, token says {inst.lemma_key}"
                )


def load_corpus(
    path: str, inv: SenseInventory, max_sentence_words: int = 64
) -> Corpus:
    """Loads and validates a corpus. Sentences longer than
    `max_sentence_words` are split into consecutive chunks, preserving labels."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file, expected a header line")
    _check_header(path, lines[0], CORPUS_FORMAT, CORPUS_VERSION)
    try:
        name = json.loads(lines[0]).get("name") or "corpus"
    except json.JSONDecodeError:  # unreachable after _check_header
        name = "corpus"
    sentences: list[Sentence] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from None
        if not isinstance(obj, dict) or "tokens" not in obj:
            raise FormatError(f"{path}:{lineno}: sentence object must have 'tokens'")
        tokens = []
        for t in obj["tokens"]:
            try:
                key = None
                if "lemma" in t or "pos" in t:
                    key = LemmaKey(str(t["lemma"]).casefold(), t["pos"])
                tokens.append(
                    AnnotatedToken(
                        surface=str(t["surface"]),
                        lemma_key=key,
                        gold=tuple(t.get("gold", ())),
                        instance_id=t.get("id"),
                    )
                )
            except (KeyError, DataError) as exc:
                raise FormatError(f"{path}:{lineno}: bad token: {exc}") from None
        if not tokens:
            raise FormatError(f"{path}:{lineno}: sentence with zero tokens")
        for start in range(0, len(tokens), max_sentence_words):
            sentences.append(Sentence(tuple(tokens[start : start + max_sentence_words])))
    corpus = Corpus(name, sentences)
    validate_against_inventory(corpus, inv)
    return corpus


def save_corpus(corpus: Corpus, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps({"format": CORPUS_FORMAT, "version": CORPUS_VERSION, "name": corpus.name})
            + "\n"
        )
        for sent in corpus.sentences:
            toks = []
            for t in sent.tokens:
                rec: dict = {"surface": t.surface}
                if t.lemma_key is not None:
                    rec["lemma"] = t.lemma_key.lemma
                    rec["pos"] = t.lemma_key.pos
                if t.gold:
                    rec["gold"] = list(t.gold)
                if t.instance_id is not None:
                    rec["id"] = t.instance_id
                toks.append(rec)
            fh.write(json.dumps({"tokens": toks}, ensure_ascii=False) + "\n")


def sense_frequencies(corpus: Corpus) -> SenseFrequencyTable:
    table = SenseFrequencyTable()
    for inst in corpus.instances:
        lemma_counts = table.per_lemma.setdefault(inst.lemma_key, {})
        for sid in inst.gold:
            table.count[sid] = table.count.get(sid, 0) + 1
            lemma_counts[sid] = lemma_counts.get(sid, 0) + 1
    return table


def save_frequencies(table: SenseFrequencyTable, path: str) -> None:
    obj = {
        "format": FREQ_FORMAT,
        "version": FREQ_VERSION,
        "per_lemma": {
            str(key): dict(sorted(counts.items()))
            for key, counts in sorted(table.per_lemma.items(), key=lambda kv: str(kv[0]))
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=0, sort_keys=True)
        fh.write("\n")


def load_frequencies(path: str) -> SenseFrequencyTable:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if obj.get("format") != FREQ_FORMAT or obj.get("version") != FREQ_VERSION:
        raise FormatError(f"{path}: not a {FREQ_FORMAT} v{FREQ_VERSION} file")
    table = SenseFrequencyTable()
    for key_str, counts in obj["per_lemma"].items():
        lemma, _, pos = key_str.rpartition("|")
        key = LemmaKey(lemma, pos)
        table.per_lemma[key] = {sid: int(n) for sid, n in counts.items()}
        for sid, n in counts.items():
            table.count[sid] = table.count.get(sid, 0) + int(n)
    return table


def training_mfs(
    table: SenseFrequencyTable, key: LemmaKey, inv: SenseInventory
) -> SenseId:
    """Most frequent training sense of a lemma; ties and zero-count lemmas
    fall back to inventory rank."""
    cands = candidate_senses(inv, key)
    if not cands:
        raise DataError(f"lemma {key} not in inventory")
    counts = table.per_lemma.get(key, {})
    best = cands[0]
    best_count = counts.get(best, 0)
    for sid in cands[1:]:
        if counts.get(sid, 0) > best_count:
            best, best_count = sid, counts.get(sid, 0)
    return best


def kshot_filter(corpus: Corpus, k: int, seed: int) -> Corpus:
    """Keeps at most k gold instances of every sense, sampled uniformly
    without replacement under `seed`. Unlabeled tokens stay as context;
    sentence and instance order are preserved."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    # (instance_id, sense) pairs per sense, in corpus order
    per_sense: dict[SenseId, list[str]] = {}
    for inst in corpus.instances:
        for sid in inst.gold:
            per_sense.setdefault(sid, []).append(inst.instance_id)
    rng = np.random.Generator(np.random.PCG64(seed))
    keep: set[tuple[str, SenseId]] = set()
    for sid in sorted(per_sense):
        ids = per_sense[sid]
        if len(ids) <= k:
            chosen = ids
        else:
            idx = rng.choice(len(ids), size=k, replace=False)
            chosen = [ids[i] for i in sorted(idx)]
        keep.update((iid, sid) for iid in chosen)

    new_sentences = []
    for sent in corpus.sentences:
        toks = []
        for tok in sent.tokens:
            if tok.gold:
                surviving = tuple(s for s in tok.gold if (tok.instance_id, s) in keep)
                if surviving:
                    toks.append(replace(tok, gold=surviving))
                else:
                    toks.append(replace(tok, gold=(), instance_id=None))
            else:
                toks.append(tok)
        new_sentences.append(Sentence(tuple(toks)))
    return Corpus(corpus.name, new_sentences)


def build_partition(
    eval_corpus: Corpus,
    train_freq: SenseFrequencyTable,
    train_corpus: Corpus | None,
    inv: SenseInventory,
) -> EvalPartition:
    """MFS membership is defined by inventory rank-1 (an instance is MFS iff
    any of its gold ids is the rank-1 sense); this is what pins the
    first-sense baseline to exactly 100/0 on the two subsets. Zero-shot
    words/senses are those with no gold-labeled occurrence in training."""
    mfs, lfs, zs_words, zs_senses = set(), set(), set(), set()
    if train_corpus is not None:
        seen_lemmas = {inst.lemma_key for inst in train_corpus.instances}
    else:
        seen_lemmas = {
            key for key in train_freq.per_lemma if train_freq.lemma_occurrences(key) > 0
        }
    for inst in eval_corpus.instances:
        rank1 = first_sense(inv, inst.lemma_key)
        if rank1 in inst.gold:
            mfs.add(inst.instance_id)
        else:
            lfs.add(inst.instance_id)
        if inst.lemma_key not in seen_lemmas:
            zs_words.add(inst.instance_id)
        if all(train_freq.count.get(sid, 0) == 0 for sid in inst.gold):
            zs_senses.add(inst.instance_id)
    return EvalPartition(
        mfs_ids=frozenset(mfs),
        lfs_ids=frozenset(lfs),
        zero_shot_word_ids=frozenset(zs_words),
        zero_shot_sense_ids=frozenset(zs_senses),
    )
