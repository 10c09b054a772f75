"""Accepted-token-count distribution of draft-then-verify decoding.

Each round the draft model proposes ``n_cand`` tokens; the verifier keeps
the longest correct prefix plus one bonus token, so the number of tokens
committed per round lives on {1, ..., n_cand + 1}.  Acceptance of each
draft token is an independent Bernoulli(p) event.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class AcceptanceModel:
    p: float
    n_cand: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError("p must be in [0, 1]")
        if self.n_cand < 1:
            raise ValidationError("n_cand must be >= 1")


def pmf(model: AcceptanceModel) -> np.ndarray:
    """Probability of committing exactly k tokens, for k = 1 .. n_cand + 1.

    P[k] = p^(k-1) (1-p) for k <= n_cand, and P[n_cand + 1] = p^n_cand.
    """
    p, n = model.p, model.n_cand
    k = np.arange(1, n + 2, dtype=np.float64)
    out = p ** (k - 1) * (1.0 - p)
    out[-1] = p**n
    return out


def expected_accepted(model: AcceptanceModel) -> float:
    """Mean committed tokens per round: (1 - p^(n_cand+1)) / (1 - p).

    Equals the dot product of k with the pmf.  A popular algebraic
    "simplification" of that sum, n*p^(n+2) - (n+1)*p^(n+1) + 1 over
    (1 - p), is inconsistent with the pmf (it drops a geometric term)
    and is deliberately not used here.
    """
    p, n = model.p, model.n_cand
    if p == 1.0:
        return float(n + 1)
    return float((1.0 - p ** (n + 1)) / (1.0 - p))


def sample_accepted(
    model: AcceptanceModel,
    rng: np.random.Generator,
    size: int | None = None,
) -> int | np.ndarray:
    """Draw committed-token counts distributed exactly per :func:`pmf`.

    Inverse-CDF sampling on a caller-owned generator, so sequences are
    reproducible from the generator's seed.
    """
    cdf = np.cumsum(pmf(model))
    cdf[-1] = 1.0  # guard against rounding at the tail
    u = rng.random(size if size is not None else 1)
    counts = np.searchsorted(cdf, u, side="right") + 1
    counts = np.minimum(counts, model.n_cand + 1)
    if size is None:
        return int(counts[0])
    return counts.astype(np.int64)
