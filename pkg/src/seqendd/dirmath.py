"""Special functions and closed-form Dirichlet mathematics.

Every function broadcasts over leading axes; the class axis is always the
last one. Scalars in, floats out; arrays in, arrays out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ContractError, DomainError

PROB_FLOOR = 1e-10
ALPHA_MIN = 1e-3
ALPHA_MAX = 1e5

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_EULER = 0.57721566490153286061


def _positive_array(x, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be positive and finite")
    return arr


def _out(arr, scalar):
    return float(arr) if scalar else arr


# ---------------------------------------------------------------------------
# special functions

def log_gamma(x):
    """Natural log of the gamma function for positive arguments.

    Shifts the argument up to >= 10 with the recurrence, then applies the
    Stirling series through the x**-9 term.
    """
    scalar = np.ndim(x) == 0
    z = _positive_array(x).copy()
    prod = np.ones_like(z)
    for _ in range(10):
        small = z < 10.0
        if not small.any():
            break
        prod = np.where(small, prod * z, prod)
        z = np.where(small, z + 1.0, z)
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv * (1.0 / 12 + inv2 * (-1.0 / 360 + inv2 * (1.0 / 1260 + inv2 * (-1.0 / 1680 + inv2 / 1188))))
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - np.log(prod)
    return _out(out, scalar)


def digamma(x):
    """Digamma function psi(x) = d/dx ln Gamma(x) for x > 0."""
    scalar = np.ndim(x) == 0
    z = _positive_array(x).copy()
    acc = np.zeros_like(z)
    for _ in range(6):
        small = z < 6.0
        if not small.any():
            break
        acc = np.where(small, acc - 1.0 / z, acc)
        z = np.where(small, z + 1.0, z)
    inv2 = 1.0 / (z * z)
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132 - inv2 * 691.0 / 32760)))))
    out = acc + np.log(z) - 0.5 / z - series
    return _out(out, scalar)


def trigamma(x):
    """First derivative of digamma for x > 0."""
    scalar = np.ndim(x) == 0
    z = _positive_array(x).copy()
    acc = np.zeros_like(z)
    for _ in range(10):
        small = z < 10.0
        if not small.any():
            break
        acc = np.where(small, acc + 1.0 / (z * z), acc)
        z = np.where(small, z + 1.0, z)
    inv = 1.0 / z
    inv2 = inv * inv
    series = inv + 0.5 * inv2 + inv * inv2 * (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * 5.0 / 66))))
    return _out(acc + series, scalar)


def inverse_digamma(y, x0=None, iters=6):
    """Solve psi(x) = y by Newton's method.

    ``x0`` warm-starts the iteration (used inside the MLE fixed point);
    otherwise the usual piecewise initializer is used.
    """
    y = np.asarray(y, dtype=np.float64)
    if x0 is None:
        x = np.where(y >= -2.22, np.exp(np.minimum(y, 700.0)) + 0.5, -1.0 / (y + _EULER))
    else:
        x = np.asarray(x0, dtype=np.float64).copy()
    for _ in range(iters):
        step = (digamma(x) - y) / trigamma(x)
        x = x - step
        # Newton can overshoot below zero from a poor start; halve toward zero instead
        x = np.where(x <= 0, (x + step) * 0.5, x)
    return x


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector of a Dirichlet over the probability simplex."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 1 or alpha.size < 2:
            raise ContractError("alpha must be a vector with at least two entries")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise ContractError("alpha entries must be positive and finite")
        object.__setattr__(self, "alpha", alpha)

    @property
    def alpha0(self) -> float:
        return float(self.alpha.sum())


@dataclass(frozen=True)
class Categorical:
    """Probability vector over K >= 2 classes."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size < 2:
            raise ContractError("probs must be a vector with at least two entries")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ContractError("probs must be nonnegative and sum to one")
        object.__setattr__(self, "probs", probs)


class UncertaintyTriple(NamedTuple):
    """Total, expected-data and knowledge uncertainty in nats."""

    total: float
    data: float
    knowledge: float


def _alpha(d):
    return np.asarray(d.alpha if isinstance(d, DirichletParams) else d, dtype=np.float64)


def _probs(p):
    return np.asarray(p.probs if isinstance(p, Categorical) else p, dtype=np.float64)


def floor_probs(p, floor=PROB_FLOOR):
    """Clamp entries to ``floor`` and renormalize along the class axis."""
    p = np.maximum(_probs(p), floor)
    return p / p.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# densities, divergences, moments

def dirichlet_log_pdf(d, p):
    alpha = _alpha(d)
    p = _probs(p)
    if alpha.shape[-1] != p.shape[-1]:
        raise ContractError(f"dimension mismatch: alpha has {alpha.shape[-1]} classes, p has {p.shape[-1]}")
    logp = np.log(floor_probs(p))
    out = log_gamma(alpha.sum(-1)) - log_gamma(alpha).sum(-1) + ((alpha - 1.0) * logp).sum(-1)
    return _out(out, np.ndim(out) == 0)


def dirichlet_kl(p, q):
    """KL(Dir(p) || Dir(q))."""
    a = _alpha(p)
    b = _alpha(q)
    if a.shape[-1] != b.shape[-1]:
        raise ContractError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]} classes")
    a0 = a.sum(-1)
    b0 = b.sum(-1)
    out = (
        log_gamma(a0) - log_gamma(b0)
        - (log_gamma(a) - log_gamma(b)).sum(-1)
        + ((a - b) * (digamma(a) - np.asarray(digamma(a0))[..., None])).sum(-1)
    )
    return _out(out, np.ndim(out) == 0)


def dirichlet_mean(d):
    alpha = _alpha(d)
    return alpha / alpha.sum(-1, keepdims=True)


def categorical_entropy(p):
    p = _probs(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    out = terms.sum(-1)
    return _out(out, np.ndim(out) == 0)


def expected_categorical_entropy(d):
    """E_{pi ~ Dir(alpha)} H[pi], closed form."""
    alpha = _alpha(d)
    a0 = alpha.sum(-1, keepdims=True)
    out = -((alpha / a0) * (digamma(alpha + 1.0) - digamma(a0 + 1.0))).sum(-1)
    return _out(out, np.ndim(out) == 0)


def mutual_information(d) -> UncertaintyTriple:
    total = categorical_entropy(dirichlet_mean(d))
    data = expected_categorical_entropy(d)
    return UncertaintyTriple(total, data, total - data)


def ensemble_uncertainties(members) -> UncertaintyTriple:
    """Uncertainties from M member categoricals stacked on axis 0."""
    members = _probs(members) if not isinstance(members, (list, tuple)) else np.stack([_probs(m) for m in members])
    if members.ndim < 2 or members.shape[0] == 0:
        raise ContractError("need a non-empty set of member categoricals")
    total = categorical_entropy(members.mean(axis=0))
    data = categorical_entropy(members).mean(axis=0)
    data = _out(np.asarray(data), np.ndim(data) == 0)
    return UncertaintyTriple(total, data, total - data)


def temper_categorical(p, temperature):
    """Flatten ``p`` by raising it to 1/T and renormalizing."""
    if not temperature > 0:
        raise DomainError("temperature must be positive")
    p = _probs(p)
    if temperature == 1.0:
        return p.copy()
    with np.errstate(divide="ignore"):
        logits = np.log(p) / temperature
    logits = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=-1, keepdims=True)


def dirichlet_sample(d, rng: np.random.Generator, size=None):
    """Draw categoricals from Dir(alpha) via normalized gamma variates."""
    alpha = _alpha(d)
    shape = alpha.shape if size is None else tuple(np.atleast_1d(size)) + alpha.shape
    g = rng.standard_gamma(np.broadcast_to(alpha, shape))
    total = g.sum(-1, keepdims=True)
    # tiny alphas can underflow every gamma variate; fall back to a point mass on the largest alpha
    bad = total[..., 0] <= 0
    if np.any(bad):
        g[bad] = np.eye(alpha.shape[-1])[np.argmax(np.broadcast_to(alpha, shape)[bad], axis=-1)]
        total = g.sum(-1, keepdims=True)
    return g / total


# ---------------------------------------------------------------------------
# maximum likelihood

class FitResult(NamedTuple):
    alpha: np.ndarray
    converged: np.ndarray  # bool per fitted row
    iterations: int


def _bound(alpha):
    """Keep every component inside [ALPHA_MIN, ALPHA_MAX] without moving the mean
    when the ceiling is hit; returns the bounded alpha and a ceiling flag."""
    top = alpha.max(-1, keepdims=True)
    at_ceiling = top[..., 0] >= ALPHA_MAX
    alpha = np.where(top > ALPHA_MAX, alpha * (ALPHA_MAX / top), alpha)
    return np.maximum(alpha, ALPHA_MIN), at_ceiling


def _moment_start(m, s, k):
    var = (s - m * m).sum(-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(var > 0, (m - s).sum(-1) / var, ALPHA_MAX * k)
    precision = np.clip(np.nan_to_num(precision, nan=1.0, posinf=ALPHA_MAX * k), ALPHA_MIN * k, ALPHA_MAX * k)
    return _bound(m * precision[:, None])


def _fixed_point_update(alpha, mlp):
    target = digamma(alpha.sum(-1))[:, None] + mlp
    return inverse_digamma(target, x0=alpha, iters=3)


def _newton_update(alpha, mlp):
    # Hessian of the mean log-likelihood is diag(-trigamma(alpha)) + trigamma(alpha0) 11^T
    a0 = alpha.sum(-1)
    grad = digamma(a0)[:, None] - digamma(alpha) + mlp
    q = -trigamma(alpha)
    z = trigamma(a0)
    b = (grad / q).sum(-1) / (1.0 / z + (1.0 / q).sum(-1))
    step = (grad - b[:, None]) / q
    new = alpha - step
    for _ in range(30):
        bad = np.any(new <= 0, axis=-1)
        if not bad.any():
            break
        step = np.where(bad[:, None], step * 0.5, step)
        new = alpha - step
    return np.where(new > 0, new, alpha * 0.5)


def fit_dirichlet_stats(mean_log_p, mean_p, mean_sq, tol=1e-8, max_iter=200, method="newton") -> FitResult:
    """Vectorized Dirichlet MLE from sufficient statistics.

    Parameters
    ----------
    mean_log_p : (..., K) average of log p over the samples
    mean_p, mean_sq : (..., K) first and second raw moments, used for the
        moment-matching start.
    method : "newton" (default) or "fixed-point"; both solve
        psi(alpha_c) = psi(alpha_0) + mean_log_p_c.

    Rows whose relative change drops below ``tol`` stop updating; rows that
    end at the ceiling or run out of iterations come back with
    ``converged`` False.
    """
    update = {"newton": _newton_update, "fixed-point": _fixed_point_update}[method]
    mean_log_p = np.asarray(mean_log_p, dtype=np.float64)
    lead = mean_log_p.shape[:-1]
    k = mean_log_p.shape[-1]
    mlp = mean_log_p.reshape(-1, k)
    m = np.asarray(mean_p, dtype=np.float64).reshape(-1, k)
    s = np.asarray(mean_sq, dtype=np.float64).reshape(-1, k)
    alpha, ceiling = _moment_start(m, s, k)

    active = np.ones(len(mlp), dtype=bool)
    converged = np.zeros(len(mlp), dtype=bool)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            iterations -= 1
            break
        cur = alpha[idx]
        new, ceil_now = _bound(update(cur, mlp[idx]))
        residual = np.max(np.abs(new - cur) / cur, axis=-1)
        alpha[idx] = new
        ceiling[idx] = ceil_now
        done = (residual < tol) | ceil_now
        converged[idx[done]] = True
        active[idx[done]] = False
    converged &= ~ceiling
    return FitResult(alpha.reshape(lead + (k,)), converged.reshape(lead), iterations)


def dirichlet_mle_fit(samples, tol=1e-8, max_iter=200, method="newton") -> FitResult:
    """Fit Dir(alpha) to categorical samples stacked on axis 0.

    Extra middle axes are fitted independently, so ``samples`` of shape
    (M, L, K) gives L fits at once.
    """
    samples = np.stack([_probs(s) for s in samples]) if isinstance(samples, (list, tuple)) else _probs(samples)
    if samples.ndim < 2 or samples.shape[0] < 2:
        raise ContractError("need at least two samples to fit a Dirichlet")
    p = floor_probs(samples)
    return fit_dirichlet_stats(np.log(p).mean(0), p.mean(0), (p * p).mean(0), tol=tol, max_iter=max_iter, method=method)
