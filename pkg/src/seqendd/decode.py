"""Greedy (beam-of-one) decoding for single models, ensembles and GUA pairs.

Batched routines decode many sources at once; the single-source functions
are the same routines with a batch of one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dirmath as dm
from .errors import ContractError
from .nnet import autodiff as ad
from .nnet.model import BOS, EOS, PAD, SeqModel, source_batch, target_batch

EVAL_TEMPERATURE = 3.0


@dataclass
class DecodeResult:
    """Emitted tokens (end marker excluded) and the per-step outputs.

    ``outputs`` has one row per predicted position, the end marker
    included when it was emitted: categoricals for softmax heads and
    concentrations for Dirichlet heads. ``member_outputs`` (L, M, K) is
    filled for ensemble decodes.
    """

    tokens: tuple
    outputs: np.ndarray
    truncated: bool = False
    member_outputs: np.ndarray | None = None

    @property
    def length(self) -> int:
        return len(self.outputs)


def _pick(probs):
    """Argmax over non-pad tokens; lowest index wins ties."""
    masked = probs.copy()
    masked[:, PAD] = -np.inf
    return np.argmax(masked, axis=1)


def _run(models, srcs, combine, max_len):
    src_ids, src_mask = source_batch(srcs)
    batch = len(srcs)
    with ad.no_grad():
        encs = [m.encode(src_ids, src_mask) for m in models]
        states = [e.init for e in encs]
        prev = np.full(batch, BOS, dtype=np.int64)
        finished = np.zeros(batch, dtype=bool)
        ended = np.zeros(batch, dtype=bool)
        tokens = [[] for _ in range(batch)]
        outputs = [[] for _ in range(batch)]
        members = [[] for _ in range(batch)]
        for _ in range(max_len):
            per_model = []
            for k, m in enumerate(models):
                states[k], logits = m.step(encs[k], states[k], prev)
                per_model.append(logits.value)
            combined, record, member_probs = combine(per_model)
            choice = _pick(combined)
            for b in np.flatnonzero(~finished):
                outputs[b].append(record[b])
                if member_probs is not None:
                    members[b].append(member_probs[:, b])
                if choice[b] == EOS:
                    ended[b] = True
                else:
                    tokens[b].append(int(choice[b]))
            finished |= choice == EOS
            if finished.all():
                break
            prev = choice
    return [
        DecodeResult(
            tuple(tokens[b]),
            np.array(outputs[b]),
            truncated=not ended[b],
            member_outputs=np.array(members[b]) if members[b] else None,
        )
        for b in range(batch)
    ]


def _batched(srcs, batch_size, fn):
    results = []
    for start in range(0, len(srcs), batch_size):
        results += fn([list(s) for s in srcs[start : start + batch_size]])
    return results


def greedy_decode_batch(model: SeqModel, srcs, batch_size=128, max_len=None) -> list[DecodeResult]:
    if model.config.head_mode != "softmax":
        # Dirichlet students decode from their predictive mean alpha / alpha_0
        def combine(per_model):
            alpha = model.head(per_model[0])
            return dm.dirichlet_mean(alpha), alpha, None
    else:
        def combine(per_model):
            probs = model.head(per_model[0])
            return probs, probs, None

    max_len = max_len or model.config.max_len
    return _batched(srcs, batch_size, lambda chunk: _run([model], chunk, combine, max_len))


def greedy_decode(model: SeqModel, src, max_len=None) -> DecodeResult:
    return greedy_decode_batch(model, [src], batch_size=1, max_len=max_len)[0]


def _check_ensemble(ensemble):
    if len(ensemble) == 0:
        raise ContractError("ensemble is empty")
    vocab = {m.config.vocab_size for m in ensemble}
    if len(vocab) != 1:
        raise ContractError("ensemble members disagree on vocab_size")
    if any(m.config.head_mode != "softmax" for m in ensemble):
        raise ContractError("ensemble members must have softmax heads")


def ensemble_greedy_decode_batch(ensemble, srcs, temperature=EVAL_TEMPERATURE, batch_size=128, max_len=None):
    """Products of expectations: average tempered member categoricals at every step."""
    _check_ensemble(ensemble)

    def combine(per_model):
        probs = np.stack([dm.temper_categorical(m.head(z), temperature) for m, z in zip(ensemble, per_model)])
        mean = probs.mean(axis=0)
        return mean, mean, probs

    max_len = max_len or min(m.config.max_len for m in ensemble)
    return _batched(srcs, batch_size, lambda chunk: _run(ensemble, chunk, combine, max_len))


def ensemble_greedy_decode(ensemble, src, temperature=EVAL_TEMPERATURE, max_len=None) -> DecodeResult:
    return ensemble_greedy_decode_batch(ensemble, [src], temperature, batch_size=1, max_len=max_len)[0]


def gua_decode_batch(predictor: SeqModel, uq_model: SeqModel, srcs, batch_size=128, max_len=None):
    """Decode with ``predictor``; feed the same generated history to ``uq_model``.

    Returns (DecodeResult, alphas) pairs with one concentration vector per
    emitted position.
    """
    if predictor.config.head_mode != "softmax" or uq_model.config.head_mode != "concentration":
        raise ContractError("GUA needs a softmax predictor and a concentration uncertainty model")
    if predictor.config.vocab_size != uq_model.config.vocab_size:
        raise ContractError("predictor and uncertainty model use different vocabularies")
    decoded = greedy_decode_batch(predictor, srcs, batch_size=batch_size, max_len=max_len)
    out = []
    for start in range(0, len(srcs), batch_size):
        chunk = decoded[start : start + batch_size]
        src_ids, src_mask = source_batch([list(s) for s in srcs[start : start + batch_size]])
        tgt_in, _, _ = target_batch([list(r.tokens) for r in chunk])
        with ad.no_grad():
            alphas = uq_model.head(uq_model.teacher_forced_logits(src_ids, src_mask, tgt_in).value)
        for b, r in enumerate(chunk):
            out.append((r, alphas[b, : r.length]))
    return out


def gua_decode(predictor: SeqModel, uq_model: SeqModel, src, max_len=None):
    return gua_decode_batch(predictor, uq_model, [src], batch_size=1, max_len=max_len)[0]
