"""Teacher targets: tempered member posteriors and per-token Dirichlet fits."""

from __future__ import annotations

import logging

import numpy as np

from .. import dirmath as dm
from ..errors import ContractError
from ..nnet import autodiff as ad
from ..nnet.model import forward_teacher_forced, log_softmax, source_batch, target_batch

log = logging.getLogger(__name__)


def _check_ensemble(ensemble):
    if not ensemble:
        raise ContractError("empty ensemble")
    if len({m.config.vocab_size for m in ensemble}) != 1:
        raise ContractError("ensemble members disagree on vocab_size")
    if any(m.config.head_mode != "softmax" for m in ensemble):
        raise ContractError("teacher members must have softmax heads")


def collect_targets(ensemble, src, ref, temperature: float) -> np.ndarray:
    """Tempered member categoricals under teacher forcing, shape (L, M, K)."""
    _check_ensemble(ensemble)
    member = [dm.temper_categorical(forward_teacher_forced(m, src, ref), temperature) for m in ensemble]
    return np.stack(member, axis=1)


def fit_token_dirichlets(targets, tol=1e-8, max_iter=200) -> dm.FitResult:
    """Maximum-likelihood Dirichlet per position of an (L, M, K) target array."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 3 or targets.shape[1] < 2:
        raise ContractError("targets must be (L, M, K) with M >= 2")
    fit = dm.dirichlet_mle_fit(np.moveaxis(targets, 1, 0), tol=tol, max_iter=max_iter)
    if not fit.converged.all():
        log.info("%d of %d token fits did not converge (flagged)", int((~fit.converged).sum()), len(fit.converged))
    return fit


class TeacherCache:
    """Raw teacher-forced member log-probabilities for a whole corpus.

    Member outputs never change during distillation, so they are computed
    once and tempered per batch. Stored as float32 (M, L, K) per sentence.
    """

    def __init__(self, ensemble, corpus, batch_size=128):
        _check_ensemble(ensemble)
        self.size = len(ensemble)
        self.logp: list[np.ndarray] = [None] * len(corpus)
        self._fits: dict[float, list[np.ndarray]] = {}
        order = np.argsort([len(p.reference) for p in corpus], kind="stable")
        with ad.no_grad():
            for start in range(0, len(order), batch_size):
                idx = order[start : start + batch_size]
                src_ids, src_mask = source_batch([corpus[i].source for i in idx])
                tgt_in, _, tgt_mask = target_batch([corpus[i].reference for i in idx])
                per_member = [log_softmax(m.teacher_forced_logits(src_ids, src_mask, tgt_in).value) for m in ensemble]
                stacked = np.stack(per_member, axis=1).astype(np.float32)
                for row, i in enumerate(idx):
                    self.logp[i] = stacked[row, :, : tgt_mask[row].sum()]

    def tempered(self, indices, temperature):
        """Padded (B, L, M, K) tempered member categoricals."""
        width = max(self.logp[i].shape[1] for i in indices)
        k = self.logp[indices[0]].shape[2]
        out = np.full((len(indices), width, self.size, k), 1.0 / k)
        for row, i in enumerate(indices):
            z = self.logp[i].astype(np.float64) / temperature
            z -= z.max(axis=-1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=-1, keepdims=True)
            out[row, : p.shape[1]] = np.swapaxes(p, 0, 1)
        return out

    def fitted(self, indices, temperature, chunk=20000):
        """Padded (B, L, K) Dirichlet MLE fits at ``temperature`` (cached per temperature)."""
        if temperature not in self._fits:
            self._fits[temperature] = self._fit_all(temperature, chunk)
        fits = self._fits[temperature]
        width = max(fits[i].shape[0] for i in indices)
        k = fits[indices[0]].shape[1]
        out = np.ones((len(indices), width, k))
        for row, i in enumerate(indices):
            out[row, : fits[i].shape[0]] = fits[i]
        return out

    def _fit_all(self, temperature, chunk):
        lengths = [lp.shape[1] for lp in self.logp]
        flat = np.concatenate([np.swapaxes(lp, 0, 1) for lp in self.logp])  # (P, M, K)
        alphas = np.empty((flat.shape[0], flat.shape[2]), dtype=np.float32)
        flagged = 0
        for start in range(0, len(flat), chunk):
            z = flat[start : start + chunk].astype(np.float64) / temperature
            z -= z.max(axis=-1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=-1, keepdims=True)
            p = dm.floor_probs(p)
            fit = dm.fit_dirichlet_stats(np.log(p).mean(1), p.mean(1), (p * p).mean(1))
            alphas[start : start + chunk] = fit.alpha
            flagged += int((~fit.converged).sum())
        log.info("fitted %d token Dirichlets at T=%.3f (%d flagged)", len(flat), temperature, flagged)
        return np.split(alphas, np.cumsum(lengths)[:-1])
