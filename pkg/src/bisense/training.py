"""End-to-end joint optimization of both encoders.

Each step samples a batch of labeled instances, encodes their sentences
through the context encoder and the union of their candidate glosses
through the gloss encoder (in chunks no larger than the gloss batch size,
with gradient accumulation so the update is independent of chunking),
applies the candidate cross-entropy loss, and takes one Adam step under a
linear warmup / linear decay schedule. Everything is deterministic in the
seed: per-epoch shuffles and per-step dropout streams are derived
statelessly, which also makes checkpoint resume bit-exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import checkpoint as ckpt
from .corpus import Corpus, SenseFrequencyTable, kshot_filter, sense_frequencies
from .encoder import backward, pool_cls, pool_word
from .errors import ConfigError, DataError, FormatError
from .evaluation import predict_corpus, score
from .lexicon import SenseInventory, candidate_senses
from .model import (
    BalanceWeights,
    BiEncoderConfig,
    BiEncoderModel,
    LinearHead,
    balance_weights,
    bi_encoder_loss,
    context_forward,
    gloss_forward,
    init_bi_encoder,
    init_linear_head,
    loss_gradient,
    vocab_sha256,
)

TRAINSTATE_FORMAT = "bem-trainstate"
TRAINSTATE_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    context_batch: int = 4
    gloss_batch: int = 256
    peak_lr: float = 1e-4
    warmup_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    seed: int = 0
    balanced: bool = False
    fixed_total_steps: int | None = None

    def __post_init__(self) -> None:
        if self.context_batch < 1 or self.gloss_batch < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")
        if self.peak_lr <= 0:
            raise ConfigError("peak_lr must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def lr_at(cfg: TrainConfig, step: int, total_steps: int) -> float:
    """Linear ramp 0 -> peak over warmup_steps, then linear decay to 0 at
    total_steps."""
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    if cfg.warmup_steps > 0 and step <= cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    if total_steps <= cfg.warmup_steps:
        return cfg.peak_lr
    return cfg.peak_lr * (total_steps - step) / (total_steps - cfg.warmup_steps)


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    best_dev: float = float("-inf")
    best_params: dict[str, np.ndarray] | None = None
    loss_trace: list[float] = field(default_factory=list)
    dev_trace: list[tuple[int, float]] = field(default_factory=list)  # (epoch, ALL-F1)
    skipped: int = 0


@dataclass
class TrainResult:
    model: BiEncoderModel
    state: TrainState

    @property
    def loss_trace(self) -> list[float]:
        return self.state.loss_trace

    @property
    def dev_trace(self) -> list[tuple[int, float]]:
        return self.state.dev_trace

    def best_model(self) -> BiEncoderModel:
        """Model with the best-dev parameter snapshot (final params if no
        dev evaluation ran)."""
        if self.state.best_params is None:
            return self.model
        out = self.model.clone()
        for name, arr in self.state.best_params.items():
            role, _, pname = name.partition(".")
            group = out.ctx_params if role == "ctx" else out.gls_params
            group[pname][...] = arr
        return out


def _dropout_key(seed: int, step: int, role: int) -> int:
    return ((seed & 0xFFFFFFFF) << 31) ^ (step << 6) ^ role


def _adam_update(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: TrainState,
    role: str,
    t: int,
    lr: float,
    cfg: TrainConfig,
) -> None:
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        g = grads[name]
        if cfg.weight_decay != 0.0:
            g = g + cfg.weight_decay * p
        key = f"{role}.{name}"
        m = state.adam_m.get(key)
        if m is None:
            m = state.adam_m[key] = np.zeros_like(p)
            state.adam_v[key] = np.zeros_like(p)
        v = state.adam_v[key]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p -= (lr / bc1) * m / (np.sqrt(v / bc2) + cfg.adam_eps)


def _usable_instances(train_c: Corpus, inv: SenseInventory) -> tuple[list, int]:
    usable, skipped = [], 0
    for inst in train_c.instances:
        if candidate_senses(inv, inst.lemma_key):
            usable.append(inst)
        else:
            skipped += 1
    return usable, skipped


def train_step(
    model: BiEncoderModel,
    batch: list,
    train_c: Corpus,
    inv: SenseInventory,
    weights: BalanceWeights | None,
    cfg: TrainConfig,
    state: TrainState,
    total_steps: int,
) -> float:
    """One optimizer step on a batch of instances. Returns the mean loss."""
    step = state.step
    dtype = model.ctx_params["embed.ln.scale"].dtype
    word_lists = [train_c.sentences[inst.sentence_index].words for inst in batch]
    ctx_rec, encoded = context_forward(
        model, word_lists, train_mode=True, dropout_seed=_dropout_key(cfg.seed, step, 0)
    )

    cand_lists: list[list[str]] = []
    used: list[int] = []
    union: list[str] = []
    pos_of: dict[str, int] = {}
    for b, inst in enumerate(batch):
        cands = candidate_senses(inv, inst.lemma_key)
        if inst.token_index >= len(encoded[b].word_spans):
            state.skipped += 1
            cand_lists.append([])
            continue
        used.append(b)
        cand_lists.append(cands)
        for s in cands:
            if s not in pos_of:
                pos_of[s] = len(union)
                union.append(s)
    if not used:
        return 0.0

    gls_recs = []
    r_s_chunks = []
    for ci, start in enumerate(range(0, len(union), cfg.gloss_batch)):
        chunk = union[start : start + cfg.gloss_batch]
        rec = gloss_forward(
            model, chunk, inv, train_mode=True,
            dropout_seed=_dropout_key(cfg.seed, step, 2 + ci),
        )
        gls_recs.append(rec)
        r_s_chunks.append(pool_cls(rec.hidden))
    r_s = np.concatenate(r_s_chunks, axis=0)

    n_used = len(used)
    total_loss = 0.0
    d_hidden_ctx = np.zeros_like(ctx_rec.hidden)
    d_r_s = np.zeros_like(r_s)
    for b in used:
        inst = batch[b]
        span = encoded[b].word_spans[inst.token_index]
        r_w = pool_word(ctx_rec.hidden[b], span)
        cands = cand_lists[b]
        idx = [pos_of[s] for s in cands]
        scores = r_s[idx] @ r_w
        gold_positions = [i for i, s in enumerate(cands) if s in inst.gold]
        gold_idx = min(gold_positions)  # lowest-rank gold sense is the target
        weight = weights.of(cands[gold_idx]) if weights is not None else 1.0
        total_loss += bi_encoder_loss(scores, gold_idx, weight)
        d_scores = (loss_gradient(scores, gold_idx, weight) / n_used).astype(dtype)
        d_r_w = d_scores @ r_s[idx]
        j, k = span
        d_hidden_ctx[b, j:k, :] += d_r_w / (k - j)
        np.add.at(d_r_s, idx, d_scores[:, None] * r_w[None, :])
    mean_loss = total_loss / n_used
    if not math.isfinite(mean_loss):
        raise DataError(f"non-finite loss {mean_loss} at step {step}")

    grads: dict[str, dict[str, np.ndarray]] = {}
    if not model.cfg.freeze_ctx:
        g, _ = backward(ctx_rec, d_hidden_ctx)
        grads["ctx"] = g
    if not model.cfg.freeze_gls:
        offset = 0
        for rec in gls_recs:
            n = rec.ids.shape[0]
            d_hidden = np.zeros_like(rec.hidden)
            d_hidden[:, 0, :] = d_r_s[offset : offset + n]
            g, _ = backward(rec, d_hidden)
            if "gls" in grads:
                for name in g:
                    grads["gls"][name] += g[name]
            else:
                grads["gls"] = g
            offset += n

    lr = lr_at(cfg, step, total_steps)
    t = step + 1
    if model.tied:
        merged = None
        for role in ("ctx", "gls"):
            if role in grads:
                if merged is None:
                    merged = {k: v.copy() for k, v in grads[role].items()}
                else:
                    for name in merged:
                        merged[name] += grads[role][name]
        if merged is not None:
            _adam_update(model.ctx_params, merged, state, "ctx", t, lr, cfg)
    else:
        for role, params in (("ctx", model.ctx_params), ("gls", model.gls_params)):
            if role in grads:
                _adam_update(params, grads[role], state, role, t, lr, cfg)
    return mean_loss


def _total_steps(cfg: TrainConfig, n_instances: int) -> int:
    if cfg.fixed_total_steps is not None:
        return cfg.fixed_total_steps
    return cfg.epochs * math.ceil(n_instances / cfg.context_batch)


def train(
    model: BiEncoderModel,
    train_c: Corpus,
    dev_c: Corpus | None,
    inv: SenseInventory,
    freq: SenseFrequencyTable,
    cfg: TrainConfig,
    state: TrainState | None = None,
) -> TrainResult:
    """Trains in place. Deterministic in cfg.seed (single-threaded mode);
    pass a loaded TrainState to resume an interrupted run bit-exactly."""
    usable, skipped = _usable_instances(train_c, inv)
    if not usable:
        raise DataError("no trainable instances (all candidate sets empty)")
    if state is None:
        state = TrainState()
        state.skipped = skipped
    weights = balance_weights(freq, inv) if cfg.balanced else None
    steps_per_epoch = math.ceil(len(usable) / cfg.context_batch)
    total = _total_steps(cfg, len(usable))

    while state.step < total:
        order = np.random.Generator(
            np.random.PCG64([cfg.seed & 0xFFFFFFFF, state.epoch])
        ).permutation(len(usable))
        start_batch = state.step - state.epoch * steps_per_epoch
        for bi in range(start_batch, steps_per_epoch):
            if state.step >= total:
                break
            batch = [
                usable[i]
                for i in order[bi * cfg.context_batch : (bi + 1) * cfg.context_batch]
            ]
            loss = train_step(model, batch, train_c, inv, weights, cfg, state, total)
            state.loss_trace.append(float(loss))
            state.step += 1
        state.epoch += 1
        if dev_c is not None:
            preds, _ = predict_corpus(model, dev_c, inv, gloss_batch=cfg.gloss_batch)
            f1 = score(preds, dev_c).overall.f1
            state.dev_trace.append((state.epoch, float(f1)))
            if f1 > state.best_dev:
                state.best_dev = float(f1)
                snap = {f"ctx.{k}": v.copy() for k, v in model.ctx_params.items()}
                if not model.tied:
                    snap.update({f"gls.{k}": v.copy() for k, v in model.gls_params.items()})
                state.best_params = snap
    return TrainResult(model=model, state=state)


def train_kshot(
    model: BiEncoderModel,
    train_c: Corpus,
    dev_c: Corpus | None,
    inv: SenseInventory,
    k_values: list[int],
    seed: int,
    cfg: TrainConfig,
) -> dict[int, TrainResult]:
    """Trains one model per k on the k-shot-filtered corpus, each for the
    same number of steps as the full-data run."""
    usable, _ = _usable_instances(train_c, inv)
    full_total = cfg.epochs * math.ceil(len(usable) / cfg.context_batch)
    results: dict[int, TrainResult] = {}
    for k in k_values:
        if k < 1:
            raise ConfigError(f"k must be >= 1, got {k}")
        filtered = kshot_filter(train_c, k, seed)
        freq_k = sense_frequencies(filtered)
        cfg_k = replace(cfg, fixed_total_steps=full_total)
        results[k] = train(model.clone(), filtered, dev_c, inv, freq_k, cfg_k)
    return results


def train_linear_head(
    model: BiEncoderModel,
    train_c: Corpus,
    inv: SenseInventory,
    cfg: TrainConfig,
    steps: int = 2000,
    lr: float = 1e-2,
    batch_size: int = 32,
) -> LinearHead:
    """Trains the discrete baseline: a softmax classifier over training
    senses on top of frozen context representations, masked to each
    instance's candidate set."""
    freq = sense_frequencies(train_c)
    head_senses = sorted(s for s, n in freq.count.items() if n > 0)
    if not head_senses:
        raise DataError("no labeled senses to build a linear head from")
    head = init_linear_head(head_senses, model.cfg.d_model)

    feats, cand_rows, gold_pos = _frozen_features(model, train_c, inv, head)
    if not feats:
        raise DataError("no trainable instances for the linear head")
    x = np.stack(feats)
    n = x.shape[0]
    m = {"w": np.zeros_like(head.weight), "b": np.zeros_like(head.bias)}
    v = {"w": np.zeros_like(head.weight), "b": np.zeros_like(head.bias)}
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    for t in range(1, steps + 1):
        idx = rng.choice(n, size=min(batch_size, n), replace=False)
        gw = np.zeros_like(head.weight)
        gb = np.zeros_like(head.bias)
        for i in idx:
            rows = cand_rows[i]
            logits = head.weight[rows] @ x[i] + head.bias[rows]
            d = loss_gradient(logits, gold_pos[i]).astype(head.weight.dtype) / len(idx)
            gw[rows] += d[:, None] * x[i][None, :]
            gb[rows] += d
        for name, p, g in (("w", head.weight, gw), ("b", head.bias, gb)):
            m[name] = cfg.beta1 * m[name] + (1 - cfg.beta1) * g
            v[name] = cfg.beta2 * v[name] + (1 - cfg.beta2) * g * g
            mhat = m[name] / (1 - cfg.beta1**t)
            vhat = v[name] / (1 - cfg.beta2**t)
            p -= lr * mhat / (np.sqrt(vhat) + cfg.adam_eps)
    return head


def _frozen_features(model: BiEncoderModel, train_c: Corpus, inv: SenseInventory, head: LinearHead):
    """Frozen context representations for every instance whose gold sense is
    in the head index, plus candidate row lists and gold positions."""
    feats, cand_rows, gold_pos = [], [], []
    by_sentence: dict[int, list] = {}
    for inst in train_c.instances:
        by_sentence.setdefault(inst.sentence_index, []).append(inst)
    sent_ids = sorted(by_sentence)
    for start in range(0, len(sent_ids), 32):
        chunk = sent_ids[start : start + 32]
        rec, encoded = context_forward(
            model, [train_c.sentences[si].words for si in chunk]
        )
        for row, si in enumerate(chunk):
            for inst in by_sentence[si]:
                if inst.token_index >= len(encoded[row].word_spans):
                    continue
                cands = [s for s in candidate_senses(inv, inst.lemma_key) if s in head]
                golds = [i for i, s in enumerate(cands) if s in inst.gold]
                if not cands or not golds:
                    continue
                feats.append(pool_word(rec.hidden[row], encoded[row].word_spans[inst.token_index]))
                cand_rows.append([head.index[s] for s in cands])
                gold_pos.append(min(golds))
    return feats, cand_rows, gold_pos


def save_train_state(path: str, model: BiEncoderModel, state: TrainState, cfg: TrainConfig) -> None:
    tensors: dict[str, np.ndarray] = {}
    for name, arr in model.ctx_params.items():
        tensors[f"param.ctx.{name}"] = arr
    if not model.tied:
        for name, arr in model.gls_params.items():
            tensors[f"param.gls.{name}"] = arr
    for key, arr in state.adam_m.items():
        tensors[f"adam.m.{key}"] = arr
    for key, arr in state.adam_v.items():
        tensors[f"adam.v.{key}"] = arr
    if state.best_params is not None:
        for key, arr in state.best_params.items():
            tensors[f"best.{key}"] = arr
    tensors["trace.loss"] = np.asarray(state.loss_trace, dtype=np.float64)
    tensors["trace.dev"] = np.asarray(
        [[e, f] for e, f in state.dev_trace], dtype=np.float64
    ).reshape(-1, 2)
    meta = {
        "format": TRAINSTATE_FORMAT,
        "version": TRAINSTATE_VERSION,
        "step": state.step,
        "epoch": state.epoch,
        "best_dev": state.best_dev,
        "skipped": state.skipped,
        "model_config": model.cfg.to_dict(),
        "train_config": cfg.to_dict(),
        "vocab_sha256": vocab_sha256(model.vocab),
    }
    ckpt.save_tensors(path, meta, tensors)


def load_train_state(path: str, vocab) -> tuple[BiEncoderModel, TrainState, TrainConfig]:
    header, tensors = ckpt.load_tensors(path)
    if header.get("format") != TRAINSTATE_FORMAT:
        raise FormatError(f"{path}: not a {TRAINSTATE_FORMAT} file")
    if header.get("vocab_sha256") != vocab_sha256(vocab):
        raise DataError(f"{path}: state was built against a different vocabulary")
    model = init_bi_encoder(vocab, BiEncoderConfig(**header["model_config"]), seed=0)
    for name in model.ctx_params:
        model.ctx_params[name][...] = tensors[f"param.ctx.{name}"]
    if not model.tied:
        for name in model.gls_params:
            model.gls_params[name][...] = tensors[f"param.gls.{name}"]
    state = TrainState(step=header["step"], epoch=header["epoch"],
                       best_dev=header["best_dev"], skipped=header.get("skipped", 0))
    for key, arr in tensors.items():
        if key.startswith("adam.m."):
            state.adam_m[key[len("adam.m.") :]] = arr
        elif key.startswith("adam.v."):
            state.adam_v[key[len("adam.v.") :]] = arr
    best = {k[len("best.") :]: v for k, v in tensors.items() if k.startswith("best.")}
    state.best_params = best or None
    state.loss_trace = [float(x) for x in tensors["trace.loss"]]
    state.dev_trace = [(int(e), float(f)) for e, f in tensors["trace.dev"]]
    tc = header["train_config"]
    return model, state, TrainConfig(**tc)
