"""Training objectives.

The ``*_op`` functions act on a logits tensor (B, L, V) with a (B, L)
token mask and return a scalar :class:`Tensor` averaged over real
tokens, with analytic gradients. The plain functions take per-position
arrays and return floats; they are the reference forms of the same
quantities.
"""

from __future__ import annotations

import numpy as np

from .. import dirmath as dm
from ..errors import ContractError
from ..nnet import autodiff as ad
from ..nnet.model import LOGIT_CLAMP, log_softmax, softmax


def _rows(logits: ad.Tensor, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != logits.shape[:2]:
        raise ContractError(f"mask shape {mask.shape} does not match logits {logits.shape[:2]}")
    idx = np.flatnonzero(mask.reshape(-1))
    if idx.size == 0:
        raise ContractError("mask selects no tokens")
    return idx, logits.value.reshape(-1, logits.shape[-1])[idx]


def _scatter(logits, idx, grad_rows):
    full = np.zeros((logits.shape[0] * logits.shape[1], logits.shape[2]))
    full[idx] = grad_rows
    return full.reshape(logits.shape)


def cross_entropy_op(logits: ad.Tensor, target_ids, mask) -> ad.Tensor:
    idx, z = _rows(logits, mask)
    tgt = np.asarray(target_ids).reshape(-1)[idx]
    logp = log_softmax(z)
    n = idx.size
    value = -logp[np.arange(n), tgt].sum() / n

    def back(g):
        d = np.exp(logp)
        d[np.arange(n), tgt] -= 1.0
        return (_scatter(logits, idx, d * (g / n)),)

    return ad.record(value, (logits,), back)


def kd_loss_op(logits: ad.Tensor, target_probs, mask) -> ad.Tensor:
    """Mean over tokens of KL(target || softmax(logits))."""
    idx, z = _rows(logits, mask)
    t = np.asarray(target_probs).reshape(-1, logits.shape[-1])[idx]
    logq = log_softmax(z)
    n = idx.size
    with np.errstate(divide="ignore", invalid="ignore"):
        tlogt = np.where(t > 0, t * np.log(np.where(t > 0, t, 1.0)), 0.0)
    value = (tlogt - t * logq).sum() / n

    def back(g):
        return (_scatter(logits, idx, (np.exp(logq) - t) * (g / n)),)

    return ad.record(value, (logits,), back)


def _alpha_and_mask(z):
    inside = (z > -LOGIT_CLAMP) & (z < LOGIT_CLAMP)
    return np.exp(np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)), inside


def dirichlet_nll_op(logits: ad.Tensor, mean_log_targets, mask) -> ad.Tensor:
    """Mean over tokens of -(1/M) sum_m ln Dir(pi_m; alpha), alpha = exp(clamped logits).

    ``mean_log_targets`` holds the member average of ln(pi) per position,
    which is all the objective needs.
    """
    idx, z = _rows(logits, mask)
    mlp = np.asarray(mean_log_targets).reshape(-1, logits.shape[-1])[idx]
    alpha, inside = _alpha_and_mask(z)
    a0 = alpha.sum(-1)
    n = idx.size
    per_tok = -(dm.log_gamma(a0) - dm.log_gamma(alpha).sum(-1) + ((alpha - 1.0) * mlp).sum(-1))
    value = per_tok.sum() / n

    def back(g):
        dalpha = dm.digamma(alpha) - dm.digamma(a0)[:, None] - mlp
        return (_scatter(logits, idx, dalpha * alpha * inside * (g / n)),)

    return ad.record(value, (logits,), back)


def dirichlet_kl_op(logits: ad.Tensor, fitted_alpha, mask) -> ad.Tensor:
    """Mean over tokens of KL(Dir(fitted) || Dir(alpha)), alpha = exp(clamped logits)."""
    idx, z = _rows(logits, mask)
    fitted = np.asarray(fitted_alpha, dtype=np.float64).reshape(-1, logits.shape[-1])[idx]
    alpha, inside = _alpha_and_mask(z)
    n = idx.size
    value = dm.dirichlet_kl(fitted, alpha).sum() / n
    expected_log = dm.digamma(fitted) - dm.digamma(fitted.sum(-1))[:, None]

    def back(g):
        dalpha = dm.digamma(alpha) - dm.digamma(alpha.sum(-1))[:, None] - expected_log
        return (_scatter(logits, idx, dalpha * alpha * inside * (g / n)),)

    return ad.record(value, (logits,), back)


# ---------------------------------------------------------------------------
# per-sentence reference forms

def _check_lengths(a, b):
    if len(a) != len(b):
        raise ContractError(f"length mismatch: {len(a)} targets vs {len(b)} student outputs")
    if len(a) == 0:
        raise ContractError("empty target list")


def kd_loss(targets, student_outputs) -> float:
    """(1/L) sum_l KL(mean_m pi_l^m || student_l).

    ``targets`` is a sequence of (M, K) member sets, ``student_outputs`` a
    sequence of K-vectors.
    """
    _check_lengths(targets, student_outputs)
    total = 0.0
    for members, q in zip(targets, student_outputs):
        mean = np.asarray(members, dtype=np.float64).mean(axis=0)
        q = dm.floor_probs(q)
        if mean.shape != q.shape:
            raise ContractError("target and student dimensions differ")
        cross = -(mean * np.log(q)).sum()
        total += cross - dm.categorical_entropy(mean)
    return total / len(targets)


def endd_nll_loss(targets, student_alphas) -> float:
    """-(1/(M L)) sum_l sum_m ln Dir(pi_l^m; alpha_l), targets floored."""
    _check_lengths(targets, student_alphas)
    total = 0.0
    for members, alpha in zip(targets, student_alphas):
        total += float(np.mean(dm.dirichlet_log_pdf(alpha, dm.floor_probs(members))))
    return -total / len(targets)


def endd_kl_loss(fitted, student_alphas) -> float:
    """(1/L) sum_l KL(Dir(fitted_l) || Dir(alpha_l))."""
    _check_lengths(fitted, student_alphas)
    return float(sum(dm.dirichlet_kl(f, a) for f, a in zip(fitted, student_alphas)) / len(fitted))


def student_probs(logits):
    return softmax(np.asarray(logits))
