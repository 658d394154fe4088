"""Client-selection maths: bias PMF, product of experts, sampling, simplex ascent.

Distributions are carried as log-probabilities. At large bias factors the
linear-space probabilities of all but the best client underflow to zero,
yet their relative order still decides which clients are drawn after the
first, so sampling works on the log weights directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DegenerateDistributionError(ValueError):
    """The product of two distributions has no mass anywhere."""


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return m
    return float(m + np.log(math.fsum(np.exp(a - m))))


def _normalise_log(z: np.ndarray) -> np.ndarray:
    # shift to a zero maximum first so large magnitudes do not eat precision;
    # fsum is correctly rounded, so the result does not depend on client order
    z = z - np.max(z)
    return z - np.log(math.fsum(np.exp(z)))


@dataclass(frozen=True)
class SelectionDistribution:
    log_values: np.ndarray
    policy: str = ""
    # linear probabilities when they are known exactly; exp(log(1/n)) != 1/n in general
    probs: np.ndarray | None = field(default=None, repr=False, compare=False)

    @classmethod
    def from_probs(cls, probs, policy: str = "") -> "SelectionDistribution":
        probs = np.asarray(probs, dtype=np.float64)
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        total = probs.sum()
        if not total > 0:
            raise DegenerateDistributionError("distribution has no mass")
        probs = probs / total
        with np.errstate(divide="ignore"):
            return cls(np.log(probs), policy, probs)

    @property
    def values(self) -> np.ndarray:
        if self.probs is not None:
            return self.probs.copy()
        return np.exp(self.log_values)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.log_values))

    def __len__(self) -> int:
        return len(self.log_values)


def uniform(n: int, policy: str = "") -> SelectionDistribution:
    return SelectionDistribution(np.full(n, -np.log(n)), policy, np.full(n, 1.0 / n))


def bias_pmf(channels, c_factor: float) -> SelectionDistribution:
    """Energy expert: client i gets weight |h_i|^C, normalised over clients."""
    h = np.asarray(channels, dtype=np.float64)
    if np.any(h <= 0) or not np.all(np.isfinite(h)):
        raise ValueError("channel magnitudes must be positive and finite")
    if not np.isfinite(c_factor):
        raise ValueError("bias factor must be finite")
    if c_factor == 0:
        return uniform(len(h), "bias")
    return SelectionDistribution(_normalise_log(c_factor * np.log(h / h.max())), "bias")


def poe_combine(lam, y: SelectionDistribution, policy: str = "ca_afl") -> SelectionDistribution:
    """Normalised elementwise product of the robustness weights and an expert."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != y.log_values.shape:
        raise ValueError("lambda and expert must have the same length")
    if np.any(lam < 0):
        raise ValueError("lambda entries must be non-negative")
    with np.errstate(divide="ignore"):
        z = np.log(lam) + y.log_values
    lse = _logsumexp(z)
    if not np.isfinite(lse):
        raise DegenerateDistributionError("lambda and the expert share no support")
    return SelectionDistribution(_normalise_log(z), policy)


def sample_without_replacement_batch(
    rho: SelectionDistribution, k: int, n_trials: int, rng: np.random.Generator
) -> np.ndarray:
    """``n_trials`` ordered draws of k distinct ids, shape (n_trials, k).

    Uses the exponential race: client i gets key log(E_i) - log(rho_i) with
    E_i ~ Exp(1), and the ids with the k smallest keys, in key order, are
    distributed exactly as k sequential draws where each draw is renormalised
    over the clients not yet chosen. Zero-probability clients never win.
    """
    n = len(rho)
    if k > n:
        raise ValueError(f"cannot draw {k} distinct ids from {n} clients")
    if k > len(rho.support):
        raise ValueError(f"only {len(rho.support)} clients have positive probability, need {k}")
    if k == 0:
        return np.empty((n_trials, 0), dtype=np.int64)
    keys = np.log(rng.exponential(size=(n_trials, n))) - rho.log_values
    if k < n:
        part = np.argpartition(keys, k - 1, axis=1)[:, :k]
    else:
        part = np.broadcast_to(np.arange(n), (n_trials, n))
    part_keys = np.take_along_axis(keys, part, axis=1)
    order = np.argsort(part_keys, axis=1, kind="stable")
    return np.take_along_axis(part, order, axis=1).astype(np.int64)


def sample_without_replacement(
    rho: SelectionDistribution, k: int, rng: np.random.Generator
) -> list[int]:
    return sample_without_replacement_batch(rho, k, 1, rng)[0].tolist()


def sample_with_fallback(
    rho: SelectionDistribution, k: int, rng: np.random.Generator
) -> list[int]:
    """Draw k ids; if fewer than k clients have mass, take all of them and
    fill the remaining slots uniformly from the zero-probability clients."""
    n = len(rho)
    if k > n:
        raise ValueError(f"cannot draw {k} distinct ids from {n} clients")
    support = rho.support
    if len(support) >= k:
        return sample_without_replacement(rho, k, rng)
    chosen = sample_without_replacement(rho, len(support), rng)
    rest = np.setdiff1d(np.arange(n), support)
    filler = rng.choice(rest, size=k - len(support), replace=False)
    return chosen + [int(i) for i in filler]


def top_k(channels, k: int) -> list[int]:
    """Ids of the k largest channels, best first; ties go to the lower id."""
    h = np.asarray(channels, dtype=np.float64)
    return np.argsort(-h, kind="stable")[:k].tolist()


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("expected a non-empty vector")
    u = -np.sort(-v, kind="stable")
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, len(u) + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def ascent_update(lam, losses: dict[int, float], gamma: float) -> np.ndarray:
    """Add gamma * loss to each sampled client's weight, then project back."""
    lam = np.asarray(lam, dtype=np.float64)
    if not gamma >= 0:
        raise ValueError("ascent step size must be non-negative")
    shifted = lam.copy()
    for i, f in losses.items():
        if not 0 <= i < len(lam):
            raise KeyError(f"unknown client id {i}")
        shifted[i] += gamma * f
    return project_simplex(shifted)
