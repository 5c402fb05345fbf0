"""Seeded synthetic WSD corpora.

Each lemma gets a handful of senses whose usage follows a Zipf law over
sense rank. Every sense owns a small keyword set; its gloss is built from
those keywords, and context sentences embed the target word among keywords
sampled from the gold sense's set plus noise words. A configurable fraction
of evaluation instances use senses held out of training entirely (and a
sub-fraction come from lemmas held out of training), which gives the
zero-shot splits real content at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import AnnotatedToken, Corpus, Sentence
from .errors import ConfigError
from .lexicon import LemmaKey, SenseEntry, SenseInventory

KEYWORDS_PER_SENSE = 6
GOLD_KEYWORDS = (2, 3)  # inclusive range per sentence
NOISE_WORDS = (5, 7)  # inclusive range per sentence
ZS_WORD_SUBFRACTION = 0.3  # share of zero-shot instances drawn from held-out lemmas
ZS_LEMMA_FRACTION = 0.05  # share of lemmas held out of training entirely
ZS_SENSE_LEMMA_FRACTION = 0.4  # share of eligible lemmas with a held-out sense

_POS_CYCLE = ("noun", "verb", "adj", "adv")
_POS_LETTER = {"noun": "n", "verb": "v", "adj": "a", "adv": "r"}


@dataclass(frozen=True)
class SynthConfig:
    n_lemmas: int = 40
    senses_per_lemma: tuple[int, int] = (2, 4)
    zipf_exponent: float = 1.0
    vocab_size: int = 1200
    train_instances: int = 4000
    eval_instances: int = 800
    zero_shot_fraction: float = 0.1

    def __post_init__(self) -> None:
        lo, hi = self.senses_per_lemma
        if not (1 <= lo <= hi):
            raise ConfigError(f"bad senses_per_lemma range {self.senses_per_lemma}")
        if self.n_lemmas < 1 or self.train_instances < 1 or self.eval_instances < 1:
            raise ConfigError("n_lemmas and instance counts must be >= 1")
        if not 0.0 <= self.zero_shot_fraction < 1.0:
            raise ConfigError("zero_shot_fraction must be in [0, 1)")
        if self.vocab_size < hi * KEYWORDS_PER_SENSE + NOISE_WORDS[1]:
            raise ConfigError(
                f"vocab_size {self.vocab_size} too small for "
                f"{hi} senses x {KEYWORDS_PER_SENSE} keywords plus noise"
            )


@dataclass(frozen=True)
class _SynthSense:
    sense_id: str
    lemma_key: LemmaKey
    surface: str
    rank: int
    keywords: tuple[str, ...]
    lemma_index: int


def _zipf_pick(rng: np.random.Generator, ranks: list[int], exponent: float) -> int:
    w = np.asarray(ranks, dtype=np.float64) ** (-exponent)
    return ranks[int(rng.choice(len(ranks), p=w / w.sum()))]


def generate_synthetic(cfg: SynthConfig, seed: int) -> tuple[Corpus, Corpus, SenseInventory]:
    rng = np.random.Generator(np.random.PCG64(seed))
    words = [f"w{i:04d}" for i in range(cfg.vocab_size)]
    lo, hi = cfg.senses_per_lemma

    lemmas: list[list[_SynthSense]] = []
    noise_pools: list[np.ndarray] = []
    entries: list[SenseEntry] = []
    for li in range(cfg.n_lemmas):
        pos = _POS_CYCLE[li % 4]
        surface = f"lemma{li:03d}"
        key = LemmaKey(surface, pos)
        n_senses = int(rng.integers(lo, hi + 1))
        kw_idx = rng.choice(cfg.vocab_size, size=n_senses * KEYWORDS_PER_SENSE, replace=False)
        senses = []
        for r in range(1, n_senses + 1):
            chunk = kw_idx[(r - 1) * KEYWORDS_PER_SENSE : r * KEYWORDS_PER_SENSE]
            kws = tuple(words[i] for i in chunk)
            sid = f"{surface}%{_POS_LETTER[pos]}:{r}"
            senses.append(_SynthSense(sid, key, surface, r, kws, li))
            entries.append(SenseEntry(sid, key, " ".join(kws), r))
        lemmas.append(senses)
        pool = np.setdiff1d(np.arange(cfg.vocab_size), kw_idx)
        noise_pools.append(pool)
    inv = SenseInventory(entries)

    # held-out structure for the zero-shot splits
    zs_lemma_ids: list[int] = []
    held_out: list[_SynthSense] = []
    n_zs = round(cfg.zero_shot_fraction * cfg.eval_instances)
    n_zs_word = round(ZS_WORD_SUBFRACTION * n_zs)
    n_zs_sense_only = n_zs - n_zs_word
    if n_zs > 0:
        n_zs_lemmas = max(1, round(ZS_LEMMA_FRACTION * cfg.n_lemmas)) if n_zs_word > 0 else 0
        if cfg.n_lemmas - n_zs_lemmas < 1:
            raise ConfigError("zero-shot words would leave no lemmas for training")
        if n_zs_lemmas:
            zs_lemma_ids = sorted(
                int(i) for i in rng.choice(cfg.n_lemmas, size=n_zs_lemmas, replace=False)
            )
        eligible = [
            li for li in range(cfg.n_lemmas)
            if li not in zs_lemma_ids and len(lemmas[li]) >= 2
        ]
        if n_zs_sense_only > 0:
            if not eligible:
                raise ConfigError(
                    "zero_shot_fraction requires lemmas with at least two senses"
                )
            n_held = max(1, round(ZS_SENSE_LEMMA_FRACTION * len(eligible)))
            chosen = sorted(
                int(i) for i in rng.choice(len(eligible), size=n_held, replace=False)
            )
            held_out = [lemmas[eligible[i]][-1] for i in chosen]
    held_out_ids = {s.sense_id for s in held_out}
    train_lemma_ids = [li for li in range(cfg.n_lemmas) if li not in zs_lemma_ids]

    def train_ranks(li: int) -> list[int]:
        return [s.rank for s in lemmas[li] if s.sense_id not in held_out_ids]

    def make_sentence(split: str, idx: int, sense: _SynthSense, li: int) -> Sentence:
        n_gold = int(rng.integers(GOLD_KEYWORDS[0], GOLD_KEYWORDS[1] + 1))
        gold_kw = [sense.keywords[i] for i in rng.choice(KEYWORDS_PER_SENSE, n_gold, replace=False)]
        n_noise = int(rng.integers(NOISE_WORDS[0], NOISE_WORDS[1] + 1))
        noise = [words[i] for i in rng.choice(noise_pools[li], size=n_noise)]
        other = gold_kw + noise
        order = rng.permutation(len(other))
        toks = [AnnotatedToken(surface=other[i]) for i in order]
        target = AnnotatedToken(
            surface=sense.surface,
            lemma_key=sense.lemma_key,
            gold=(sense.sense_id,),
            instance_id=f"{split}.{idx:06d}",
        )
        toks.insert(int(rng.integers(0, len(toks) + 1)), target)
        return Sentence(tuple(toks))

    train_sentences = []
    for i in range(cfg.train_instances):
        li = train_lemma_ids[int(rng.integers(0, len(train_lemma_ids)))]
        rank = _zipf_pick(rng, train_ranks(li), cfg.zipf_exponent)
        train_sentences.append(make_sentence("train", i, lemmas[li][rank - 1], li))
    train = Corpus("synth-train", train_sentences)

    # eval spec list: regular / held-out sense / held-out lemma, then shuffled
    specs: list[tuple[str, int]] = [("regular", 0)] * (cfg.eval_instances - n_zs)
    specs += [("zs_sense", 0)] * n_zs_sense_only
    specs += [("zs_word", 0)] * n_zs_word
    order = rng.permutation(len(specs))
    eval_sentences = []
    for i, oi in enumerate(order):
        kind = specs[oi][0]
        if kind == "regular":
            li = train_lemma_ids[int(rng.integers(0, len(train_lemma_ids)))]
            rank = _zipf_pick(rng, train_ranks(li), cfg.zipf_exponent)
            sense = lemmas[li][rank - 1]
        elif kind == "zs_sense":
            sense = held_out[int(rng.integers(0, len(held_out)))]
            li = sense.lemma_index
        else:
            li = zs_lemma_ids[int(rng.integers(0, len(zs_lemma_ids)))]
            rank = _zipf_pick(rng, [s.rank for s in lemmas[li]], cfg.zipf_exponent)
            sense = lemmas[li][rank - 1]
        eval_sentences.append(make_sentence("eval", i, sense, li))
    eval_corpus = Corpus("synth-eval", eval_sentences)
    return train, eval_corpus, inv
