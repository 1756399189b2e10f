"""The permuted causal mask ``M = P L P^T`` and adjacency extraction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .sinkhorn import SinkhornConfig, permutation_matrix, round_to_permutation, sinkhorn

FIXED_DENSE = "fixed-dense"
LEARNABLE = "learnable"
STRUCTURE_MODES = (FIXED_DENSE, LEARNABLE)


@dataclass
class CausalMaskParams:
    ordering_logits: ad.Tensor
    structure_logits: ad.Tensor
    structure_mode: str = LEARNABLE
    alpha: float = 1.0
    sinkhorn_cfg: SinkhornConfig = field(default_factory=SinkhornConfig)

    def __post_init__(self):
        if self.structure_mode not in STRUCTURE_MODES:
            raise ConfigError(f"unknown structure mode {self.structure_mode!r}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        c = self.ordering_logits.shape
        if len(c) != 2 or c[0] != c[1] or c[0] < 1 or self.structure_logits.shape != c:
            raise ConfigError("ordering and structure logits must be equal C x C matrices, C >= 1")

    @property
    def num_skills(self):
        return self.ordering_logits.shape[0]

    @classmethod
    def init(cls, num_skills, rng, structure_mode=LEARNABLE, alpha=1.0, sinkhorn_cfg=None, std=0.1):
        shape = (num_skills, num_skills)
        return cls(
            ordering_logits=ad.tensor(rng.normal(0.0, std, shape), requires_grad=True, name="P_bar"),
            structure_logits=ad.tensor(
                rng.normal(0.0, std, shape), requires_grad=structure_mode == LEARNABLE, name="L_bar"
            ),
            structure_mode=structure_mode,
            alpha=alpha,
            sinkhorn_cfg=sinkhorn_cfg or SinkhornConfig(),
        )


def _strict_lower(c):
    return np.tril(np.ones((c, c)), k=-1)


def build_L(params):
    """Lower-triangular structure matrix with unit diagonal.

    Strictly-lower entries are ``sigmoid(alpha * L_bar)`` in learnable mode and
    one in fixed-dense mode; the strictly-upper part is exactly zero.
    """
    c = params.num_skills
    eye = np.eye(c)
    if params.structure_mode == FIXED_DENSE:
        return ad.tensor(np.tril(np.ones((c, c))))
    soft = ad.sigmoid(ad.scale(params.structure_logits, params.alpha))
    return ad.add(ad.mul(soft, _strict_lower(c)), eye)


def build_mask(params, P=None):
    """``M = P L P^T`` with ``P = sinkhorn(P_bar)`` unless ``P`` is supplied."""
    if P is None:
        P = sinkhorn(params.ordering_logits, params.sinkhorn_cfg)
    L = build_L(params)
    return ad.matmul(ad.matmul(P, L), ad.transpose(P)), P, L


def binarize_structure(L, kappa):
    """Threshold the strictly-lower part of ``L``: ``>= kappa`` becomes 1."""
    _check_kappa(kappa)
    L = np.asarray(getattr(L, "value", L), dtype=np.float64)
    return (np.tril(L, k=-1) >= kappa).astype(np.int64)


def conjugate(perm, structure):
    """Relabel an ordered-space matrix back to skill indices: ``A[i, j] = S[perm[i], perm[j]]``."""
    perm = np.asarray(perm)
    return np.asarray(structure)[np.ix_(perm, perm)]


def extract_adjacency(L, P, kappa):
    """Binary prerequisite adjacency over skill indices.

    ``A[i, k] = 1`` means skill ``k`` is a prerequisite of skill ``i``. ``L`` is
    thresholded at ``kappa`` in causal-order space, then relabelled through
    the greedy hard rounding of ``P``. The diagonal is always zero.
    """
    binary = binarize_structure(L, kappa)
    perm = round_to_permutation(P)
    adj = conjugate(perm, binary)
    np.fill_diagonal(adj, 0)
    return adj, perm


def threshold_mask(M, kappa):
    """Direct thresholding of a (soft) mask, diagonal cleared."""
    _check_kappa(kappa)
    M = np.asarray(getattr(M, "value", M), dtype=np.float64)
    adj = (M >= kappa).astype(np.int64)
    np.fill_diagonal(adj, 0)
    return adj


def causal_order(perm):
    """Skill indices listed from most-prerequisite (position 0) onwards."""
    perm = np.asarray(perm)
    order = np.empty_like(perm)
    order[perm] = np.arange(len(perm))
    return order


def hard_mask(perm, structure):
    """Exact ``P L P^T`` for a hard permutation; equal to ``conjugate``."""
    P = permutation_matrix(perm)
    return P @ np.asarray(structure, dtype=np.float64) @ P.T


def _check_kappa(kappa):
    if not 0.0 < kappa < 1.0:
        raise ConfigError(f"kappa must lie in (0, 1), got {kappa}")
