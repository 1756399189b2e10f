"""Sinkhorn relaxation of permutation matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DimensionError, NumericalError

_DENOM_FLOOR = 1e-30


@dataclass(frozen=True)
class SinkhornConfig:
    temperature: float = 2.0
    unroll: int = 5

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if int(self.unroll) != self.unroll or self.unroll < 1:
            raise ConfigError(f"unroll must be a positive integer, got {self.unroll}")


def _safe_denominator(s):
    if np.any(s.value <= 0.0) or not np.all(np.isfinite(s.value)):
        raise NumericalError("sinkhorn: degenerate row/column sum during normalization")
    if np.any(s.value < _DENOM_FLOOR):
        floor = np.maximum(s.value, _DENOM_FLOOR) - s.value
        return ad.add(s, floor)
    return s


def sinkhorn(logits, cfg=SinkhornConfig()):
    """Map square ``logits`` to an approximately doubly stochastic matrix.

    The logits are shifted by their global max, scaled by the temperature and
    exponentiated; then ``cfg.unroll`` rounds of row normalisation followed by
    column normalisation are applied. Columns therefore sum to one exactly
    (up to rounding); rows converge as ``unroll`` grows.
    """
    logits = ad.as_tensor(logits)
    if logits.ndim != 2 or logits.shape[0] != logits.shape[1]:
        raise DimensionError(f"sinkhorn: expected a square matrix, got shape {logits.shape}")
    if not np.all(np.isfinite(logits.value)):
        raise NumericalError("sinkhorn: non-finite logits")
    x = ad.exp(ad.scale(ad.sub(logits, ad.global_max(logits)), cfg.temperature))
    for _ in range(int(cfg.unroll)):
        x = ad.div(x, _safe_denominator(ad.row_sum(x, keepdims=True)))
        x = ad.div(x, _safe_denominator(ad.col_sum(x, keepdims=True)))
    return x


def hardness(P):
    """Mean over rows of the largest entry; 1.0 for an exact permutation."""
    P = np.asarray(getattr(P, "value", P), dtype=np.float64)
    return float(P.max(axis=1).mean())


def round_to_permutation(P):
    """Greedy hard assignment: ``perm[row] = column``.

    Repeatedly takes the largest remaining entry, fixes that row-to-column
    assignment and strikes out its row and column.
    """
    P = np.asarray(getattr(P, "value", P), dtype=np.float64)
    n = P.shape[0]
    # stable sort on negated values keeps first-index tie breaking
    order = np.argsort(-P, axis=None, kind="stable")
    perm = np.full(n, -1, dtype=np.int64)
    col_used = np.zeros(n, dtype=bool)
    assigned = 0
    for flat in order:
        r, c = divmod(int(flat), n)
        if perm[r] >= 0 or col_used[c]:
            continue
        perm[r] = c
        col_used[c] = True
        assigned += 1
        if assigned == n:
            break
    return perm


def permutation_matrix(perm):
    """Dense 0/1 matrix with ``P[i, perm[i]] = 1``."""
    perm = np.asarray(perm)
    P = np.zeros((len(perm), len(perm)))
    P[np.arange(len(perm)), perm] = 1.0
    return P
