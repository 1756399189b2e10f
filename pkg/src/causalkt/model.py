"""The causal knowledge-tracing model: mask + causal GRU + heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .gru import CausalGruParams, gru_cell, mask_weights
from .heads import EmbeddingParams, bernoulli_nll, encode_batch, response_logits
from .mask import LEARNABLE, CausalMaskParams, build_mask
from .sinkhorn import SinkhornConfig


@dataclass
class CausalKT:
    mask: CausalMaskParams
    gru: CausalGruParams
    heads: EmbeddingParams

    @classmethod
    def init(cls, num_skills, embedding_dim=32, structure_mode=LEARNABLE, alpha=1.0, sinkhorn_cfg=None, seed=0):
        rng = np.random.default_rng(seed)
        heads = EmbeddingParams.init(num_skills, embedding_dim, rng)
        gru = CausalGruParams.init(num_skills, heads.input_dim, rng)
        mask = CausalMaskParams.init(
            num_skills, rng, structure_mode=structure_mode, alpha=alpha, sinkhorn_cfg=sinkhorn_cfg
        )
        return cls(mask=mask, gru=gru, heads=heads)

    @property
    def num_skills(self):
        return self.gru.num_skills

    def parameters(self):
        """Trainable tensors keyed by a stable name."""
        params = {}
        params.update(self.gru.tensors())
        params.update(self.heads.tensors())
        params["P_bar"] = self.mask.ordering_logits
        if self.mask.structure_logits.requires_grad:
            params["L_bar"] = self.mask.structure_logits
        return params

    def all_arrays(self):
        """Every array needed to rebuild the model, trainable or not."""
        arrays = {name: t.value for name, t in self.parameters().items()}
        arrays["L_bar"] = self.mask.structure_logits.value
        arrays["E"] = self.heads.E.value
        return arrays

    def set_schedule(self, temperature, unroll, alpha):
        self.mask.sinkhorn_cfg = SinkhornConfig(temperature=float(temperature), unroll=int(unroll))
        self.mask.alpha = float(alpha)

    def build_mask(self):
        """Returns ``(M, P, L)`` as graph tensors."""
        return build_mask(self.mask)

    def batch_logits(self, skills, correct, M=None):
        """Logits for events 2..T of each row; shape ``(T-1, B)``."""
        skills = np.asarray(skills, dtype=np.int64)
        b, t = skills.shape
        k = t - 1
        if M is None:
            M, _, _ = self.build_mask()
        masked = mask_weights(self.gru, M)
        c = self.num_skills
        x = encode_batch(skills[:, :k].T, np.asarray(correct)[:, :k].T, self.heads)  # time-major
        in_z = ad.reshape(ad.add(ad.matmul(x, masked.Uz_T), masked.b_z), (k, b, c))
        in_r = ad.reshape(ad.add(ad.matmul(x, masked.Ur_T), masked.b_r), (k, b, c))
        in_h = ad.reshape(ad.add(ad.matmul(x, masked.U_T), masked.b), (k, b, c))
        h = ad.tensor(np.zeros((b, c)))
        states = []
        for step in range(k):
            h = gru_cell(
                h, ad.take(in_z, step), ad.take(in_r, step), ad.take(in_h, step), masked, step=step + 1
            )
            states.append(h)
        return response_logits(states, skills[:, 1:], self.heads)

    def batch_loss(self, skills, correct, valid, M=None):
        """Mean over sequences of each sequence's mean negative log-likelihood."""
        skills = np.asarray(skills, dtype=np.int64)
        valid = np.asarray(valid, dtype=bool)
        targets = np.asarray(correct, dtype=np.float64)[:, 1:].T
        counts = valid[:, 1:].sum(axis=1)
        usable = counts > 0
        weights = np.zeros(valid[:, 1:].shape)
        weights[usable] = valid[usable, 1:] / counts[usable, None] / usable.sum()
        logits = self.batch_logits(skills, correct, M)
        return bernoulli_nll(logits, targets, weights.T)

    def predict_proba(self, skills, correct, M=None):
        """Predicted correctness probabilities for events 2..T, shape ``(B, T-1)``."""
        logits = self.batch_logits(skills, correct, M).value.T
        return ad._sigmoid(logits)
