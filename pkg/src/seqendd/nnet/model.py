"""Tiny attention encoder-decoder with a softmax or a concentration head."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from ..errors import ContractError
from . import autodiff as ad

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")

LOGIT_CLAMP = 15.0

HeadMode = Literal["softmax", "concentration"]


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 32
    hidden_dim: int = 64
    head_mode: HeadMode = "softmax"
    max_len: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 4:
            raise ContractError("vocab_size must cover the four special tokens")
        if min(self.embed_dim, self.hidden_dim, self.max_len) <= 0:
            raise ContractError("embed_dim, hidden_dim and max_len must be positive")
        if self.head_mode not in ("softmax", "concentration"):
            raise ContractError(f"unknown head_mode {self.head_mode!r}")

    def to_dict(self):
        return asdict(self)


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    v, e, h = config.vocab_size, config.embed_dim, config.hidden_dim
    return {
        "src_embed": (v, e),
        "tgt_embed": (v, e),
        "enc_wx": (e, 3 * h),
        "enc_wh": (h, 3 * h),
        "enc_bx": (3 * h,),
        "enc_bh": (3 * h,),
        "init_w": (h, h),
        "init_b": (h,),
        "att_wq": (h, h),
        "att_wk": (h, h),
        "att_v": (h,),
        "dec_wx": (e + h, 3 * h),
        "dec_wh": (h, 3 * h),
        "dec_bx": (3 * h,),
        "dec_bh": (3 * h,),
        "out_w": (2 * h, v),
        "out_b": (v,),
    }


class SeqModel:
    """Parameters plus the forward computation.

    ``params`` maps names to leaf :class:`~seqendd.nnet.autodiff.Tensor`
    objects whose shapes are fixed by ``config``.
    """

    def __init__(self, config: ModelConfig, params: dict[str, ad.Tensor]):
        shapes = parameter_shapes(config)
        if set(params) != set(shapes):
            raise ContractError(f"parameter names do not match config: {sorted(set(params) ^ set(shapes))}")
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ContractError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = params

    def copy(self) -> SeqModel:
        return SeqModel(self.config, {k: ad.parameter(p.value.copy(), name=k) for k, p in self.params.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self.params.items()}

    # -- building blocks -------------------------------------------------

    def encode(self, src_ids: np.ndarray, src_mask: np.ndarray) -> EncoderState:
        p = self.params
        batch, steps = src_ids.shape
        h = ad.Tensor(np.zeros((batch, self.config.hidden_dim)))
        emb = ad.embed(p["src_embed"], src_ids)
        states = []
        for t in range(steps):
            h = ad.gru_cell(emb[:, t, :], h, p["enc_wx"], p["enc_wh"], p["enc_bx"], p["enc_bh"])
            states.append(h)
        stacked = ad.stack(states, axis=1)
        last = src_mask.sum(axis=1) - 1
        final = stacked[np.arange(batch), last]
        init = ad.tanh(ad.linear(final, p["init_w"], p["init_b"]))
        keys = ad.matmul(stacked, p["att_wk"])
        return EncoderState(stacked, keys, src_mask, init)

    def step(self, enc: EncoderState, state: ad.Tensor, prev_tokens: np.ndarray):
        """One decoder step; returns (new_state, logits)."""
        p = self.params
        query = ad.matmul(state, p["att_wq"])
        ctx = ad.additive_attention(query, enc.keys, enc.states, p["att_v"], enc.mask)
        prev = ad.embed(p["tgt_embed"], prev_tokens)
        state = ad.gru_cell(ad.concat([prev, ctx]), state, p["dec_wx"], p["dec_wh"], p["dec_bx"], p["dec_bh"])
        logits = ad.linear(ad.concat([state, ctx]), p["out_w"], p["out_b"])
        return state, logits

    def teacher_forced_logits(self, src_ids, src_mask, tgt_in) -> ad.Tensor:
        """Logits (B, L, V) for every decoder input position."""
        enc = self.encode(src_ids, src_mask)
        state = enc.init
        out = []
        for t in range(tgt_in.shape[1]):
            state, logits = self.step(enc, state, tgt_in[:, t])
            out.append(logits)
        return ad.stack(out, axis=1)

    def head(self, logits: np.ndarray) -> np.ndarray:
        """Map raw logits to probabilities or concentrations."""
        if self.config.head_mode == "softmax":
            return softmax(logits)
        return concentrations(logits)


@dataclass
class EncoderState:
    states: ad.Tensor  # (B, S, H)
    keys: ad.Tensor  # (B, S, H)
    mask: np.ndarray  # (B, S) bool
    init: ad.Tensor  # (B, H)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def concentrations(logits):
    return np.exp(np.clip(logits, -LOGIT_CLAMP, LOGIT_CLAMP))


# ---------------------------------------------------------------------------
# construction and batching

def init_model(config: ModelConfig, zero: bool = False) -> SeqModel:
    """Seeded uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.

    ``zero=True`` gives an all-zero model whose logits are identically 0.
    """
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if zero:
            value = np.zeros(shape)
        elif name.endswith("embed"):
            value = rng.normal(0.0, 1.0, size=shape)
        else:
            bound = 1.0 / np.sqrt(shape[0] if len(shape) > 1 else config.hidden_dim)
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = ad.parameter(value, name=name)
    return SeqModel(config, params)


def _check_tokens(seq, config):
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1:
        raise ContractError("token sequence must be one-dimensional")
    if arr.size and (arr.min() < 0 or arr.max() >= config.vocab_size):
        raise ContractError(f"token out of range for vocab_size {config.vocab_size}")
    return arr


def pad_batch(seqs, prefix=(), suffix=()):
    """Pad token lists into (ids, mask) arrays, optionally wrapping each sequence."""
    seqs = [list(prefix) + list(s) + list(suffix) for s in seqs]
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


def source_batch(srcs):
    return pad_batch(srcs, suffix=(EOS,))


def target_batch(refs):
    """Decoder inputs ([BOS] + ref), outputs (ref + [EOS]) and the loss mask."""
    tgt_in, _ = pad_batch(refs, prefix=(BOS,))
    tgt_out, mask = pad_batch(refs, suffix=(EOS,))
    return tgt_in, tgt_out, mask


def _check_pair(model, src, ref):
    cfg = model.config
    src = _check_tokens(src, cfg)
    ref = _check_tokens(ref, cfg)
    if len(src) + 1 > cfg.max_len or len(ref) + 1 > cfg.max_len:
        raise ContractError(f"sequence longer than max_len {cfg.max_len}")
    return src, ref


def forward_teacher_forced(model: SeqModel, src, ref) -> np.ndarray:
    """Per-position outputs (L, V) with L = len(ref) + 1 (the end marker).

    Rows are categoricals for the softmax head and Dirichlet
    concentrations for the concentration head.
    """
    src, ref = _check_pair(model, src, ref)
    src_ids, src_mask = source_batch([src])
    tgt_in, _, _ = target_batch([ref])
    with ad.no_grad():
        logits = model.teacher_forced_logits(src_ids, src_mask, tgt_in).value[0]
    return model.head(logits)


def forward_step(model: SeqModel, src, history) -> np.ndarray:
    """Output for the position following ``history`` (a generated or reference prefix)."""
    src, history = _check_pair(model, src, history)
    src_ids, src_mask = source_batch([src])
    tgt_in, _, _ = target_batch([history])
    with ad.no_grad():
        logits = model.teacher_forced_logits(src_ids, src_mask, tgt_in).value[0, -1]
    return model.head(logits)


def backward(loss: ad.Tensor, model: SeqModel) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss for every model parameter."""
    return ad.backward(loss, model.params)
