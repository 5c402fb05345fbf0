"""The bi-encoder disambiguation model.

A context encoder embeds the target word (mean of its subword states) and a
gloss encoder embeds each candidate sense definition (its [CLS] state);
candidates are scored by dot product and trained with a cross-entropy loss
over the candidate set, optionally re-weighted by normalized inverse
training frequency of the gold sense. Also provides the frozen-encoder
linear classifier used as the discrete baseline.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint as ckpt
from .corpus import SenseFrequencyTable
from .encoder import (
    EncoderConfig,
    ForwardRecord,
    ParamDict,
    forward,
    init_params,
    pool_cls,
    pool_word,
)
from .errors import ConfigError, DataError, FormatError
from .lexicon import LemmaKey, SenseId, SenseInventory, candidate_senses, gloss_text
from .tokenizer import TokenizedInput, Vocab, encode


@dataclass(frozen=True)
class BiEncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    dropout_rate: float = 0.1
    max_context_len: int = 64
    max_gloss_len: int = 32
    tied: bool = False
    freeze_ctx: bool = False
    freeze_gls: bool = False

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class BiEncoderModel:
    """Two encoders over one vocabulary. With tied=True, `gls_params` is the
    same object as `ctx_params`. Freeze flags gate gradient application
    only; they never change forward behavior."""

    cfg: BiEncoderConfig
    vocab: Vocab
    ctx_cfg: EncoderConfig
    gls_cfg: EncoderConfig
    ctx_params: ParamDict
    gls_params: ParamDict

    @property
    def tied(self) -> bool:
        return self.cfg.tied

    def clone(self) -> "BiEncoderModel":
        ctx = {k: v.copy() for k, v in self.ctx_params.items()}
        gls = ctx if self.tied else {k: v.copy() for k, v in self.gls_params.items()}
        return BiEncoderModel(self.cfg, self.vocab, self.ctx_cfg, self.gls_cfg, ctx, gls)

    def parameter_groups(self) -> list[tuple[str, ParamDict]]:
        if self.tied:
            return [("ctx", self.ctx_params)]
        return [("ctx", self.ctx_params), ("gls", self.gls_params)]


def init_bi_encoder(
    vocab: Vocab, cfg: BiEncoderConfig, seed: int, dtype=np.float32
) -> BiEncoderModel:
    common = dict(
        vocab_size=len(vocab),
        d_model=cfg.d_model,
        n_layers=cfg.n_layers,
        n_heads=cfg.n_heads,
        d_ff=cfg.d_ff,
        dropout_rate=cfg.dropout_rate,
    )
    ctx_cfg = EncoderConfig(max_len=cfg.max_context_len, **common)
    if cfg.tied:
        gls_cfg = ctx_cfg
        if cfg.max_gloss_len > cfg.max_context_len:
            raise ConfigError("tied encoders need max_gloss_len <= max_context_len")
    else:
        gls_cfg = EncoderConfig(max_len=cfg.max_gloss_len, **common)
    ctx_params = init_params(ctx_cfg, seed, dtype=dtype)
    gls_params = ctx_params if cfg.tied else init_params(gls_cfg, seed + 1, dtype=dtype)
    return BiEncoderModel(cfg, vocab, ctx_cfg, gls_cfg, ctx_params, gls_params)


def pad_batch(items: list[TokenizedInput], dtype=np.float32):
    """Stacks tokenized inputs into an id matrix and 0/1 attention mask."""
    if not items:
        raise DataError("empty batch")
    t = max(x.length for x in items)
    ids = np.zeros((len(items), t), dtype=np.int64)  # [PAD] id is 0
    mask = np.zeros((len(items), t), dtype=dtype)
    for i, x in enumerate(items):
        ids[i, : x.length] = x.ids
        mask[i, : x.length] = 1.0
    return ids, mask


def context_forward(
    model: BiEncoderModel,
    word_lists: list[list[str]],
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> tuple[ForwardRecord, list[TokenizedInput]]:
    encoded = [encode(model.vocab, ws, model.cfg.max_context_len) for ws in word_lists]
    ids, mask = pad_batch(encoded, dtype=model.ctx_params["embed.ln.scale"].dtype)
    rec = forward(model.ctx_params, model.ctx_cfg, ids, mask, train_mode, dropout_seed)
    return rec, encoded


def gloss_forward(
    model: BiEncoderModel,
    sense_ids: list[SenseId],
    inv: SenseInventory,
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> ForwardRecord:
    encoded = [
        encode(model.vocab, gloss_text(inv, s).split(), model.cfg.max_gloss_len)
        for s in sense_ids
    ]
    ids, mask = pad_batch(encoded, dtype=model.gls_params["embed.ln.scale"].dtype)
    return forward(model.gls_params, model.gls_cfg, ids, mask, train_mode, dropout_seed)


def embed_target(model: BiEncoderModel, words: list[str], target_index: int) -> np.ndarray:
    """Context representation of one target word (eval mode)."""
    rec, encoded = context_forward(model, [words])
    spans = encoded[0].word_spans
    if target_index >= len(spans):
        raise DataError(
            f"target word {target_index} was truncated away "
            f"(only {len(spans)} words survive)"
        )
    return pool_word(rec.hidden[0], spans[target_index])


def embed_senses(
    model: BiEncoderModel,
    senses: list[SenseId],
    inv: SenseInventory,
    gloss_batch_size: int = 256,
) -> dict[SenseId, np.ndarray]:
    """Gloss [CLS] representations (eval mode), deduplicated and encoded in
    chunks of at most gloss_batch_size. Padding-masked attention makes the
    result independent of chunking and batch composition."""
    if gloss_batch_size < 1:
        raise ConfigError("gloss_batch_size must be >= 1")
    unique: list[SenseId] = []
    seen = set()
    for s in senses:
        if s not in seen:
            seen.add(s)
            unique.append(s)
    out: dict[SenseId, np.ndarray] = {}
    for start in range(0, len(unique), gloss_batch_size):
        chunk = unique[start : start + gloss_batch_size]
        rec = gloss_forward(model, chunk, inv)
        vecs = pool_cls(rec.hidden)
        for s, v in zip(chunk, vecs):
            out[s] = v
    return out


def score_candidates(r_w: np.ndarray, cand_vectors: np.ndarray) -> np.ndarray:
    """Dot product of the target representation against each candidate
    sense vector; order preserved."""
    cand_vectors = np.atleast_2d(cand_vectors)
    if cand_vectors.shape[-1] != r_w.shape[-1]:
        raise DataError(
            f"dimension mismatch: target {r_w.shape[-1]}, "
            f"candidates {cand_vectors.shape[-1]}"
        )
    return cand_vectors @ r_w


def argmax_by_rank(scores: np.ndarray) -> int:
    """Index of the maximal score; ties go to the earlier (lower-rank) entry."""
    return int(np.argmax(scores))


def predict(
    model: BiEncoderModel,
    words: list[str],
    target_index: int,
    key: LemmaKey,
    inv: SenseInventory,
    sense_vectors: dict[SenseId, np.ndarray] | None = None,
) -> SenseId:
    """Highest-scoring candidate sense for one target occurrence."""
    cands = candidate_senses(inv, key)
    if not cands:
        raise DataError(f"no candidate senses for {key}")
    if sense_vectors is None:
        sense_vectors = embed_senses(model, cands, inv)
    r_w = embed_target(model, words, target_index)
    scores = score_candidates(r_w, np.stack([sense_vectors[s] for s in cands]))
    return cands[argmax_by_rank(scores)]


def log_softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max()
    return scores - (m + np.log(np.exp(scores - m).sum()))


def bi_encoder_loss(scores: np.ndarray, gold_index: int, weight: float = 1.0) -> float:
    """weight * (-score[gold] + logsumexp(scores)), the cross-entropy over
    the candidate set, computed with max subtraction."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= gold_index < scores.shape[0]:
        raise DataError(f"gold index {gold_index} out of range {scores.shape[0]}")
    if weight <= 0:
        raise DataError(f"loss weight must be positive, got {weight}")
    m = scores.max()
    lse = m + np.log(np.exp(scores - m).sum())
    return float(weight * (lse - scores[gold_index]))


def loss_gradient(scores: np.ndarray, gold_index: int, weight: float = 1.0) -> np.ndarray:
    """d loss / d scores = weight * (softmax(scores) - onehot(gold))."""
    p = np.exp(log_softmax(np.asarray(scores, dtype=np.float64)))
    p[gold_index] -= 1.0
    return weight * p


@dataclass
class BalanceWeights:
    """Per-sense loss weights: add-one-smoothed inverse training frequency,
    normalized so each lemma's candidate set averages to 1."""

    weight: dict[SenseId, float] = field(default_factory=dict)

    def of(self, sense_id: SenseId) -> float:
        return self.weight.get(sense_id, 1.0)


def balance_weights(freq: SenseFrequencyTable, inv: SenseInventory) -> BalanceWeights:
    weights: dict[SenseId, float] = {}
    for key in inv.lemma_keys:
        cands = candidate_senses(inv, key)
        raw = [1.0 / (freq.count.get(s, 0) + 1.0) for s in cands]
        norm = len(cands) / sum(raw)
        for s, r in zip(cands, raw):
            weights[s] = r * norm
    return BalanceWeights(weights)


@dataclass
class LinearHead:
    """Discrete classifier over the senses seen in training, applied to a
    frozen context representation; candidates outside the index cannot be
    predicted and force an S1 back-off upstream."""

    sense_ids: tuple[SenseId, ...]
    weight: np.ndarray  # [n_senses, d_model]
    bias: np.ndarray  # [n_senses]
    index: dict[SenseId, int] = field(init=False)

    def __post_init__(self) -> None:
        self.index = {s: i for i, s in enumerate(self.sense_ids)}

    def __contains__(self, sense_id: SenseId) -> bool:
        return sense_id in self.index


def init_linear_head(sense_ids: list[SenseId], d_model: int, dtype=np.float32) -> LinearHead:
    return LinearHead(
        sense_ids=tuple(sense_ids),
        weight=np.zeros((len(sense_ids), d_model), dtype=dtype),
        bias=np.zeros(len(sense_ids), dtype=dtype),
    )


def linear_head_logits(
    head: LinearHead, r_w: np.ndarray, candidates: list[SenseId]
) -> np.ndarray:
    """Logits restricted to the given candidates (all other senses are
    masked out by exclusion)."""
    rows = []
    for s in candidates:
        if s not in head.index:
            raise DataError(f"sense {s!r} not in linear head index")
        rows.append(head.index[s])
    return head.weight[rows] @ r_w + head.bias[rows]


def vocab_sha256(vocab: Vocab) -> str:
    return hashlib.sha256("\n".join(vocab.tokens).encode("utf-8")).hexdigest()


def save_model(
    path: str,
    model: BiEncoderModel,
    head: LinearHead | None = None,
    extra_meta: dict | None = None,
) -> None:
    tensors: dict[str, np.ndarray] = {}
    for name, arr in model.ctx_params.items():
        tensors["ctx." + name] = arr
    if not model.tied:
        for name, arr in model.gls_params.items():
            tensors["gls." + name] = arr
    meta = {
        "format": ckpt.CHECKPOINT_FORMAT,
        "version": ckpt.CHECKPOINT_VERSION,
        "kind": "linear" if head is not None else "bem",
        "model_config": model.cfg.to_dict(),
        "vocab_sha256": vocab_sha256(model.vocab),
    }
    if head is not None:
        tensors["head.weight"] = head.weight
        tensors["head.bias"] = head.bias
        meta["head_senses"] = list(head.sense_ids)
    if extra_meta:
        meta.update(extra_meta)
    ckpt.save_tensors(path, meta, tensors)


def load_model(path: str, vocab: Vocab) -> tuple[BiEncoderModel, LinearHead | None, dict]:
    header, tensors = ckpt.load_tensors(path)
    if header.get("format") != ckpt.CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a {ckpt.CHECKPOINT_FORMAT} file")
    if header.get("vocab_sha256") != vocab_sha256(vocab):
        raise DataError(f"{path}: checkpoint was built against a different vocabulary")
    mc = dict(header["model_config"])
    mc["tied"] = bool(mc.get("tied", False))
    cfg = BiEncoderConfig(**mc)
    model = init_bi_encoder(vocab, cfg, seed=0)
    for name in model.ctx_params:
        model.ctx_params[name][...] = tensors["ctx." + name]
    if not cfg.tied:
        for name in model.gls_params:
            model.gls_params[name][...] = tensors["gls." + name]
    head = None
    if header.get("kind") == "linear":
        head = LinearHead(
            sense_ids=tuple(header["head_senses"]),
            weight=tensors["head.weight"],
            bias=tensors["head.bias"],
        )
    return model, head, header
