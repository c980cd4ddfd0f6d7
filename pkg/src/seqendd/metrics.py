"""GLEU scoring, rejection curves, AUC_RR and rank correlation."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

MAX_ORDER = 4
SMOOTH = 1e-12


def _ngrams(tokens, n):
    tokens = tuple(tokens)
    return Counter(tokens[i : i + n] for i in range(len(tokens) - n + 1))


def gleu_stats(source, reference, hypothesis) -> np.ndarray:
    """Sufficient statistics [num_1..4, den_1..4, ref_len, hyp_len].

    The n-gram numerator rewards hypothesis n-grams found in the reference
    and subtracts those copied from the source that the reference dropped.
    """
    stats = np.zeros(2 * MAX_ORDER + 2)
    for n in range(1, MAX_ORDER + 1):
        ch = _ngrams(hypothesis, n)
        cr = _ngrams(reference, n)
        cs = _ngrams(source, n)
        num = 0
        for g, c in ch.items():
            r = cr.get(g, 0)
            num += max(0, min(c, r) - max(0, min(c, cs.get(g, 0)) - r))
        stats[n - 1] = num
        stats[MAX_ORDER + n - 1] = sum(ch.values())
    stats[-2] = len(reference)
    stats[-1] = len(hypothesis)
    return stats


def perfect_stats(reference) -> np.ndarray:
    """Statistics of a hypothesis equal to the reference."""
    n = len(reference)
    counts = [max(0, n - k + 1) for k in range(1, MAX_ORDER + 1)]
    return np.array(counts + counts + [n, n], dtype=np.float64)


def gleu_from_stats(stats) -> float:
    stats = np.asarray(stats, dtype=np.float64)
    ref_len, hyp_len = stats[-2], stats[-1]
    if hyp_len <= 0:
        return 0.0
    num = stats[:MAX_ORDER]
    den = stats[MAX_ORDER : 2 * MAX_ORDER]
    log_p = np.log((num + SMOOTH) / (den + SMOOTH)).mean()
    brevity = min(0.0, 1.0 - ref_len / hyp_len)
    return float(math.exp(log_p + brevity))


def gleu_sentence(source, reference, hypothesis) -> float:
    if len(reference) == 0:
        raise ContractError("reference must be non-empty")
    return gleu_from_stats(gleu_stats(source, reference, hypothesis))


@dataclass
class ScoredSentence:
    source: tuple
    reference: tuple
    hypothesis: tuple
    gleu: float = float("nan")
    uncertainties: object = None  # SequenceUncertainty or None

    def __post_init__(self):
        self.source = tuple(self.source)
        self.reference = tuple(self.reference)
        self.hypothesis = tuple(self.hypothesis)
        if math.isnan(self.gleu):
            self.gleu = gleu_sentence(self.source, self.reference, self.hypothesis)

    @property
    def length(self) -> int:
        return len(self.hypothesis)

    def stats(self) -> np.ndarray:
        return gleu_stats(self.source, self.reference, self.hypothesis)


def gleu_corpus(sentences) -> float:
    """Corpus GLEU from pooled n-gram and length statistics."""
    if len(sentences) == 0:
        raise ContractError("empty corpus")
    return gleu_from_stats(sum(s.stats() for s in sentences))


def manual_score(s: ScoredSentence) -> float:
    """Reference length times (1 - sentence GLEU); needs the true correction."""
    return len(s.reference) * (1.0 - s.gleu)


# ---------------------------------------------------------------------------
# rejection

@dataclass
class RejectionCurve:
    fractions: np.ndarray
    scores: np.ndarray
    auc: float


def _grid(step):
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ContractError(f"grid step {step} does not divide 1 evenly")
    return np.linspace(0.0, 1.0, n + 1)


def _n_rejected(fraction, n):
    return min(n, int(math.ceil(fraction * n - 1e-9)))


def rejection_order(scores) -> np.ndarray:
    """Indices from highest to lowest score; ties keep sentence order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def _rejection_scores(sentences, ranking_scores, fractions):
    if len(ranking_scores) != len(sentences):
        raise ContractError(f"{len(ranking_scores)} scores for {len(sentences)} sentences")
    if len(sentences) == 0:
        raise ContractError("empty corpus")
    stats = np.array([s.stats() for s in sentences])
    gain = np.array([perfect_stats(s.reference) for s in sentences]) - stats
    order = rejection_order(ranking_scores)
    cumulative = np.vstack([np.zeros(stats.shape[1]), np.cumsum(gain[order], axis=0)])
    base = stats.sum(axis=0)
    n = len(sentences)
    return np.array([gleu_from_stats(base + cumulative[_n_rejected(f, n)]) for f in fractions])


def rejection_curve(sentences, ranking_scores, grid_step=0.02) -> RejectionCurve:
    """Corpus GLEU as the highest-scored sentences are handed to an oracle."""
    fractions = _grid(grid_step)
    scores = _rejection_scores(sentences, ranking_scores, fractions)
    return RejectionCurve(fractions, scores, float(np.trapezoid(scores, fractions)))


def rejection_at(sentences, ranking_scores, fraction=0.10) -> float:
    return float(_rejection_scores(sentences, ranking_scores, [fraction])[0])


def random_rejection_curve(sentences, grid_step=0.02) -> RejectionCurve:
    """Expected random rejection, modelled as the line from the base score to 1."""
    fractions = _grid(grid_step)
    base = gleu_corpus(sentences)
    scores = base + (1.0 - base) * fractions
    return RejectionCurve(fractions, scores, float(np.trapezoid(scores, fractions)))


def random_rejection_auc(sentences, grid_step=0.02) -> float:
    return random_rejection_curve(sentences, grid_step).auc


def auc_rr(curve: RejectionCurve, manual_curve: RejectionCurve, random_auc: float) -> float:
    """(AUC - AUC_random) / (AUC_manual - AUC_random)."""
    if len(curve.fractions) != len(manual_curve.fractions) or not np.allclose(curve.fractions, manual_curve.fractions):
        raise ContractError("curves are on different grids")
    denom = manual_curve.auc - random_auc
    if abs(denom) < 1e-15:
        raise ContractError("manual and random AUC coincide; AUC_RR is undefined")
    return (curve.auc - random_auc) / denom


# ---------------------------------------------------------------------------

def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties sharing their mean rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman_rank(xs, ys) -> float:
    """Spearman correlation; NaN when either list has no variance."""
    if len(xs) != len(ys) or len(xs) == 0:
        raise ContractError("spearman_rank needs two non-empty lists of equal length")
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx * rx).sum() * (ry * ry).sum()))
    if denom == 0.0:
        return float("nan")
    return float((rx * ry).sum() / denom)
