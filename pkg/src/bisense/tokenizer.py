"""Subword vocabulary and encoding.

The vocabulary is whole case-folded words above a frequency threshold plus
every single character seen at build time (both plain and ``##``-prefixed
continuation form), so greedy longest-match segmentation always terminates.
Encoding pads the sequence with [CLS]/[SEP] and reports one half-open
subword span per surviving input word; downstream pooling averages over
exactly these spans.
"""

from __future__ import annotations

from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass

from .errors import DataError, FormatError

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, CLS, SEP)


class Vocab:
    """Immutable token -> id map with dense ids; reserved ids 0..3."""

    def __init__(self, tokens: list[str]):
        if list(tokens[:4]) != list(RESERVED):
            raise DataError(f"first four tokens must be {RESERVED}")
        self.tokens: tuple[str, ...] = tuple(tokens)
        self.id_of: dict[str, int] = {t: i for i, t in enumerate(tokens)}
        if len(self.id_of) != len(self.tokens):
            raise DataError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    pad_id, unk_id, cls_id, sep_id = 0, 1, 2, 3


@dataclass(frozen=True)
class TokenizedInput:
    """ids[0] is [CLS], ids[-1] is [SEP]; one (start, end) half-open span of
    subword positions per surviving word, in order and non-overlapping."""

    ids: tuple[int, ...]
    word_spans: tuple[tuple[int, int], ...]

    @property
    def length(self) -> int:
        return len(self.ids)


def build_vocab(texts: Iterable[list[str]], min_freq: int = 1) -> Vocab:
    """Whole words with frequency >= min_freq plus all seen characters.
    Non-reserved ids are assigned by frequency (descending), then token."""
    if min_freq < 1:
        raise DataError(f"min_freq must be >= 1, got {min_freq}")
    word_freq: Counter[str] = Counter()
    char_freq: Counter[str] = Counter()
    for words in texts:
        for word in words:
            w = word.casefold()
            word_freq[w] += 1
            char_freq.update(w)
    if not word_freq:
        raise DataError("cannot build a vocabulary from an empty collection")
    freq: dict[str, int] = {}
    for w, n in word_freq.items():
        if n >= min_freq:
            freq[w] = max(freq.get(w, 0), n)
    for c, n in char_freq.items():
        for tok in (c, "##" + c):
            freq[tok] = max(freq.get(tok, 0), n)
    for r in RESERVED:
        freq.pop(r, None)
    ordered = sorted(freq, key=lambda t: (-freq[t], t))
    return Vocab(list(RESERVED) + ordered)


def _segment(vocab: Vocab, word: str) -> list[int]:
    """Greedy longest match; first piece plain, continuations ##-prefixed.
    An unseen character becomes a single [UNK] piece."""
    pieces: list[int] = []
    i, n = 0, len(word)
    while i < n:
        match = None
        for j in range(n, i, -1):
            cand = word[i:j] if i == 0 else "##" + word[i:j]
            hit = vocab.id_of.get(cand)
            if hit is not None:
                match = (hit, j)
                break
        if match is None:
            pieces.append(Vocab.unk_id)
            i += 1
        else:
            pieces.append(match[0])
            i = match[1]
    return pieces


def encode(vocab: Vocab, words: list[str], max_len: int) -> TokenizedInput:
    """Case-folds and segments each word; truncation drops whole trailing
    words rather than splitting one across the boundary."""
    if max_len < 3:
        raise DataError(f"max_len must be >= 3, got {max_len}")
    ids: list[int] = [Vocab.cls_id]
    spans: list[tuple[int, int]] = []
    for wi, word in enumerate(words):
        pieces = _segment(vocab, word.casefold())
        if len(ids) + len(pieces) + 1 > max_len:
            if wi == 0:
                raise DataError(
                    f"word {word!r} segments into {len(pieces)} pieces, "
                    f"more than max_len-2 = {max_len - 2}"
                )
            break
        start = len(ids)
        ids.extend(pieces)
        spans.append((start, len(ids)))
    ids.append(Vocab.sep_id)
    return TokenizedInput(ids=tuple(ids), word_spans=tuple(spans))


def save_vocab(vocab: Vocab, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok in vocab.tokens:
            fh.write(tok + "\n")


def load_vocab(path: str) -> Vocab:
    with open(path, encoding="utf-8") as fh:
        tokens = fh.read().splitlines()
    if len(tokens) < 4 or tokens[:4] != list(RESERVED):
        raise FormatError(f"{path}: reserved tokens must occupy lines 0-3")
    return Vocab(tokens)
