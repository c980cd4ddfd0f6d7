"""Token- and sequence-level uncertainties for ensembles and Dirichlet models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dirmath as dm
from .errors import ContractError


@dataclass(frozen=True)
class TokenUncertainty:
    position: int
    triple: dm.UncertaintyTriple


@dataclass(frozen=True)
class SequenceUncertainty:
    total_sum: float
    data_sum: float
    knowledge_sum: float
    length: int

    @property
    def total_rate(self) -> float:
        return self.total_sum / self.length

    @property
    def data_rate(self) -> float:
        return self.data_sum / self.length

    @property
    def knowledge_rate(self) -> float:
        return self.knowledge_sum / self.length

    def as_dict(self) -> dict:
        return {
            "tu_sum": self.total_sum,
            "du_sum": self.data_sum,
            "ku_sum": self.knowledge_sum,
            "tu_rate": self.total_rate,
            "du_rate": self.data_rate,
            "ku_rate": self.knowledge_rate,
            "length": self.length,
        }

    def metric(self, name: str, use_rate: bool = False) -> float:
        """Look up ``tu``/``du``/``ku`` as a sum or a per-token rate."""
        key = {"tu": "total", "du": "data", "ku": "knowledge"}[name]
        return getattr(self, f"{key}_{'rate' if use_rate else 'sum'}")


def token_uncertainty_ensemble(members, position: int = 0) -> TokenUncertainty:
    """Uncertainties of one position from its (M, K) member categoricals."""
    t = dm.ensemble_uncertainties(np.asarray(members, dtype=np.float64))
    return TokenUncertainty(position, dm.UncertaintyTriple(float(t.total), float(t.data), float(t.knowledge)))


def token_uncertainty_dirichlet(alpha, position: int = 0) -> TokenUncertainty:
    t = dm.mutual_information(alpha)
    return TokenUncertainty(position, dm.UncertaintyTriple(float(t.total), float(t.data), float(t.knowledge)))


def ensemble_token_uncertainties(member_probs) -> list[TokenUncertainty]:
    """All positions of an (L, M, K) array at once."""
    member_probs = np.asarray(member_probs, dtype=np.float64)
    t = dm.ensemble_uncertainties(np.moveaxis(member_probs, 1, 0))
    return [
        TokenUncertainty(i, dm.UncertaintyTriple(float(a), float(b), float(c)))
        for i, (a, b, c) in enumerate(zip(t.total, t.data, t.knowledge))
    ]


def dirichlet_token_uncertainties(alphas) -> list[TokenUncertainty]:
    """All positions of an (L, K) concentration array at once."""
    t = dm.mutual_information(np.asarray(alphas, dtype=np.float64))
    return [
        TokenUncertainty(i, dm.UncertaintyTriple(float(a), float(b), float(c)))
        for i, (a, b, c) in enumerate(zip(np.atleast_1d(t.total), np.atleast_1d(t.data), np.atleast_1d(t.knowledge)))
    ]


def sequence_uncertainty(tokens) -> SequenceUncertainty:
    """Sum token uncertainties left to right (one decoded sample)."""
    if len(tokens) == 0:
        raise ContractError("no token uncertainties to aggregate")
    tu = du = 0.0
    for tok in tokens:
        tu += tok.triple.total
        du += tok.triple.data
    return SequenceUncertainty(tu, du, tu - du, len(tokens))


def sequence_uncertainty_mc(samples) -> SequenceUncertainty:
    """Average of per-sample sums over S decoded samples; length is the mean sample length."""
    if len(samples) == 0:
        raise ContractError("need at least one sample")
    seqs = [sequence_uncertainty(s) for s in samples]
    s = len(seqs)
    tu = sum(q.total_sum for q in seqs) / s
    du = sum(q.data_sum for q in seqs) / s
    length = sum(q.length for q in seqs) / s
    return SequenceUncertainty(tu, du, tu - du, length)
