"""From-scratch post-layer-norm transformer encoder in numpy.

Forward computes, per layer, x' = LN(x + Dropout(MHSA(x))) and
x'' = LN(x' + Dropout(FFN(x'))) with FFN(u) = W2 @ gelu(W1 u + b1) + b2,
GELU in its tanh approximation, attention logits scaled by 1/sqrt(d_head),
and padding keys masked to -inf before the softmax. Embeddings are learned
token + learned position vectors, followed by one layer norm and dropout.

`backward` is exact reverse-mode differentiation of this computation; the
test suite checks it against central finite differences at fp64. Dropout
masks come from counter-based Philox streams keyed on (dropout_seed, site),
so a forward pass is exactly replayable.

Training runs in fp32; pass dtype=np.float64 to `init_params` for
gradient-check precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

ParamDict = dict[str, np.ndarray]

LN_EPS = 1e-12  # layer-norm epsilon, convention of the architecture family
INIT_STD = 0.02
GELU_K = 0.7978845608028654  # sqrt(2/pi)
GELU_C = 0.044715


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 64
    dropout_rate: float = 0.1

    def __post_init__(self) -> None:
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"n_heads ({self.n_heads}) must divide d_model ({self.d_model})"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_ff": self.d_ff,
            "max_len": self.max_len,
            "dropout_rate": self.dropout_rate,
        }


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Canonical tensor names and shapes, in a fixed order."""
    d, v = cfg.d_model, cfg.vocab_size
    shapes: dict[str, tuple[int, ...]] = {
        "embed.token.weight": (v, d),
        "embed.pos.weight": (cfg.max_len, d),
        "embed.ln.scale": (d,),
        "embed.ln.shift": (d,),
    }
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        for proj in ("q", "k", "v", "o"):
            shapes[p + f"attn.{proj}.weight"] = (d, d)
            shapes[p + f"attn.{proj}.bias"] = (d,)
        shapes[p + "attn.ln.scale"] = (d,)
        shapes[p + "attn.ln.shift"] = (d,)
        shapes[p + "ffn.w1.weight"] = (d, cfg.d_ff)
        shapes[p + "ffn.w1.bias"] = (cfg.d_ff,)
        shapes[p + "ffn.w2.weight"] = (cfg.d_ff, d)
        shapes[p + "ffn.w2.bias"] = (d,)
        shapes[p + "ffn.ln.scale"] = (d,)
        shapes[p + "ffn.ln.shift"] = (d,)
    return shapes


def init_params(cfg: EncoderConfig, seed: int, dtype=np.float32) -> ParamDict:
    """Weights ~ N(0, 0.02^2) truncated (clamped) at two standard deviations;
    biases and layer-norm shifts start at 0, layer-norm scales at 1."""
    rng = np.random.Generator(np.random.PCG64(seed))
    params: ParamDict = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("ln.scale"):
            params[name] = np.ones(shape, dtype=dtype)
        elif name.endswith("bias") or name.endswith("ln.shift"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            w = rng.normal(0.0, INIT_STD, size=shape)
            params[name] = np.clip(w, -2 * INIT_STD, 2 * INIT_STD).astype(dtype)
    return params


@dataclass
class HiddenStates:
    """Final-layer outputs [batch, seq, d_model] plus the attention mask
    [batch, seq] (1 = real token, 0 = padding)."""

    hidden: np.ndarray
    mask: np.ndarray


@dataclass
class ForwardRecord:
    """Everything `backward` needs to replay the forward pass exactly."""

    cfg: EncoderConfig
    params: ParamDict
    ids: np.ndarray
    mask: np.ndarray
    hidden: np.ndarray
    caches: dict = field(default_factory=dict)
    layer_caches: list = field(default_factory=list)

    @property
    def states(self) -> HiddenStates:
        return HiddenStates(hidden=self.hidden, mask=self.mask)


def _ln_forward(x: np.ndarray, scale: np.ndarray, shift: np.ndarray):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * scale + shift, (xhat, inv)


def _ln_backward(d: np.ndarray, cache, scale: np.ndarray):
    xhat, inv = cache
    dscale = np.sum(d * xhat, axis=tuple(range(d.ndim - 1)))
    dshift = np.sum(d, axis=tuple(range(d.ndim - 1)))
    dxhat = d * scale
    m1 = dxhat.mean(axis=-1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxhat - m1 - xhat * m2)
    return dx, dscale, dshift


def _gelu_forward(u: np.ndarray):
    t = np.tanh(GELU_K * (u + GELU_C * u * u * u))
    return 0.5 * u * (1.0 + t), (u, t)


def _gelu_backward(d: np.ndarray, cache):
    u, t = cache
    du = 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_K * (1.0 + 3.0 * GELU_C * u * u)
    return d * du


def _dropout_keep(shape, rate: float, dropout_seed: int, site: int, dtype) -> np.ndarray:
    """Keep-and-rescale multiplier for one dropout site. Philox keyed by
    (seed, site) makes the mask a pure function of its arguments."""
    key = np.array([dropout_seed & 0xFFFFFFFFFFFFFFFF, site], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    keep = (rng.random(shape) >= rate).astype(dtype)
    return keep / (1.0 - rate)


def _linear_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w + b


def _linear_backward(x: np.ndarray, w: np.ndarray, d: np.ndarray):
    din = x.shape[-1]
    x2 = x.reshape(-1, din)
    d2 = d.reshape(-1, d.shape[-1])
    dw = x2.T @ d2
    db = d2.sum(axis=0)
    dx = (d2 @ w.T).reshape(x.shape)
    return dx, dw, db


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def forward(
    params: ParamDict,
    cfg: EncoderConfig,
    ids: np.ndarray,
    mask: np.ndarray,
    train_mode: bool = False,
    dropout_seed: int = 0,
) -> ForwardRecord:
    """Runs the encoder on an id batch [B, T] with mask [B, T]. Deterministic
    given (params, ids, mask, train_mode, dropout_seed); eval mode applies
    no dropout."""
    ids = np.asarray(ids, dtype=np.int64)
    dtype = params["embed.token.weight"].dtype
    mask = np.asarray(mask, dtype=dtype)
    if ids.ndim != 2 or mask.shape != ids.shape:
        raise DataError(f"ids/mask must be [batch, seq], got {ids.shape}/{mask.shape}")
    b, t = ids.shape
    if t > cfg.max_len:
        raise DataError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise DataError("token id out of vocabulary range")

    rate = cfg.dropout_rate if train_mode else 0.0
    rec = ForwardRecord(cfg=cfg, params=params, ids=ids, mask=mask, hidden=None)

    x0 = params["embed.token.weight"][ids] + params["embed.pos.weight"][:t]
    x0n, ln0 = _ln_forward(x0, params["embed.ln.scale"], params["embed.ln.shift"])
    if rate > 0.0:
        keep0 = _dropout_keep(x0n.shape, rate, dropout_seed, 0, dtype)
        x = x0n * keep0
    else:
        keep0 = None
        x = x0n
    # additive key bias: 0 for real tokens, -inf for padding
    kbias = np.where(mask > 0, 0.0, -np.inf).astype(dtype)[:, None, None, :]
    rec.caches = {"ln0": ln0, "keep0": keep0, "kbias": kbias}

    scale = 1.0 / np.sqrt(cfg.d_head)
    for i in range(cfg.n_layers):
        p = f"layer{i}."
        q = _linear_forward(x, params[p + "attn.q.weight"], params[p + "attn.q.bias"])
        k = _linear_forward(x, params[p + "attn.k.weight"], params[p + "attn.k.bias"])
        v = _linear_forward(x, params[p + "attn.v.weight"], params[p + "attn.v.bias"])
        q4, k4, v4 = (_split_heads(z, cfg.n_heads) for z in (q, k, v))
        scores = (q4 @ k4.swapaxes(-1, -2)) * scale + kbias
        m = scores.max(axis=-1, keepdims=True)
        e = np.exp(scores - m)
        probs = e / e.sum(axis=-1, keepdims=True)
        ctx4 = probs @ v4
        ctx = _merge_heads(ctx4)
        attn_out = _linear_forward(ctx, params[p + "attn.o.weight"], params[p + "attn.o.bias"])
        if rate > 0.0:
            keep_a = _dropout_keep(attn_out.shape, rate, dropout_seed, 1 + 2 * i, dtype)
            attn_drop = attn_out * keep_a
        else:
            keep_a = None
            attn_drop = attn_out
        x1, ln1 = _ln_forward(x + attn_drop, params[p + "attn.ln.scale"], params[p + "attn.ln.shift"])

        h1 = _linear_forward(x1, params[p + "ffn.w1.weight"], params[p + "ffn.w1.bias"])
        g, gelu_cache = _gelu_forward(h1)
        h2 = _linear_forward(g, params[p + "ffn.w2.weight"], params[p + "ffn.w2.bias"])
        if rate > 0.0:
            keep_f = _dropout_keep(h2.shape, rate, dropout_seed, 2 + 2 * i, dtype)
            ffn_drop = h2 * keep_f
        else:
            keep_f = None
            ffn_drop = h2
        x2, ln2 = _ln_forward(x1 + ffn_drop, params[p + "ffn.ln.scale"], params[p + "ffn.ln.shift"])

        rec.layer_caches.append(
            {
                "x_in": x, "q4": q4, "k4": k4, "v4": v4, "probs": probs,
                "ctx": ctx, "keep_a": keep_a, "ln1": ln1, "x1": x1,
                "gelu": gelu_cache, "g": g, "keep_f": keep_f, "ln2": ln2,
            }
        )
        x = x2

    rec.hidden = x
    return rec


def backward(rec: ForwardRecord, d_out: np.ndarray):
    """Exact gradients of the recorded forward pass.

    Returns (param gradients, gradient w.r.t. the summed input embeddings,
    shape [B, T, d_model]). Token/position embedding gradients are also
    scattered into the returned ParamDict.
    """
    cfg, params = rec.cfg, rec.params
    if d_out.shape != rec.hidden.shape:
        raise DataError(f"d_out shape {d_out.shape} != hidden shape {rec.hidden.shape}")
    dtype = rec.hidden.dtype
    grads: ParamDict = {name: np.zeros_like(p) for name, p in params.items()}
    scale = 1.0 / np.sqrt(cfg.d_head)

    d = np.asarray(d_out, dtype=dtype)
    for i in reversed(range(cfg.n_layers)):
        p = f"layer{i}."
        c = rec.layer_caches[i]

        d_res2, dsc, dsh = _ln_backward(d, c["ln2"], params[p + "ffn.ln.scale"])
        grads[p + "ffn.ln.scale"] += dsc
        grads[p + "ffn.ln.shift"] += dsh
        d_x1 = d_res2.copy()
        d_h2 = d_res2 if c["keep_f"] is None else d_res2 * c["keep_f"]
        d_g, dw2, db2 = _linear_backward(c["g"], params[p + "ffn.w2.weight"], d_h2)
        grads[p + "ffn.w2.weight"] += dw2
        grads[p + "ffn.w2.bias"] += db2
        d_h1 = _gelu_backward(d_g, c["gelu"])
        d_x1_ffn, dw1, db1 = _linear_backward(c["x1"], params[p + "ffn.w1.weight"], d_h1)
        grads[p + "ffn.w1.weight"] += dw1
        grads[p + "ffn.w1.bias"] += db1
        d_x1 += d_x1_ffn

        d_res1, dsc, dsh = _ln_backward(d_x1, c["ln1"], params[p + "attn.ln.scale"])
        grads[p + "attn.ln.scale"] += dsc
        grads[p + "attn.ln.shift"] += dsh
        d_x = d_res1.copy()
        d_attn_out = d_res1 if c["keep_a"] is None else d_res1 * c["keep_a"]
        d_ctx, dwo, dbo = _linear_backward(c["ctx"], params[p + "attn.o.weight"], d_attn_out)
        grads[p + "attn.o.weight"] += dwo
        grads[p + "attn.o.bias"] += dbo

        d_ctx4 = _split_heads(d_ctx, cfg.n_heads)
        probs, q4, k4, v4 = c["probs"], c["q4"], c["k4"], c["v4"]
        d_probs = d_ctx4 @ v4.swapaxes(-1, -2)
        d_v4 = probs.swapaxes(-1, -2) @ d_ctx4
        # softmax backward; zero at -inf-masked keys since probs are zero there
        d_scores = probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True))
        d_q4 = (d_scores @ k4) * scale
        d_k4 = (d_scores.swapaxes(-1, -2) @ q4) * scale

        for proj, d4 in (("q", d_q4), ("k", d_k4), ("v", d_v4)):
            dz = _merge_heads(d4)
            dxp, dw, db = _linear_backward(c["x_in"], params[p + f"attn.{proj}.weight"], dz)
            grads[p + f"attn.{proj}.weight"] += dw
            grads[p + f"attn.{proj}.bias"] += db
            d_x += dxp
        d = d_x

    d_x0n = d if rec.caches["keep0"] is None else d * rec.caches["keep0"]
    d_x0, dsc, dsh = _ln_backward(d_x0n, rec.caches["ln0"], params["embed.ln.scale"])
    grads["embed.ln.scale"] += dsc
    grads["embed.ln.shift"] += dsh
    dim = cfg.d_model
    np.add.at(grads["embed.token.weight"], rec.ids.reshape(-1), d_x0.reshape(-1, dim))
    grads["embed.pos.weight"][: d_x0.shape[1]] += d_x0.sum(axis=0)
    return grads, d_x0


def pool_word(hidden: np.ndarray, span: tuple[int, int]) -> np.ndarray:
    """Mean of rows span[0]..span[1]-1 of one sequence's hidden states."""
    j, k = span
    if k <= j:
        raise DataError(f"empty word span {span}")
    return hidden[j:k].mean(axis=0)


def pool_cls(hidden: np.ndarray) -> np.ndarray:
    """Row 0 (the [CLS] position); works on [T, d] or [B, T, d]."""
    return hidden[..., 0, :]
