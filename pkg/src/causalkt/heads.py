"""Input encoding and response prediction around the causal GRU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DataError


@dataclass
class EmbeddingParams:
    """Skill embeddings and the two single-layer heads.

    ``E`` has one column per skill. In one-hot mode ``E`` is a frozen identity,
    ``d`` and the input projection are absent and the GRU input is the signed
    one-hot vector of the answered skill.
    """

    E: ad.Tensor
    d: ad.Tensor | None
    proj_W: ad.Tensor | None
    proj_b: ad.Tensor | None
    out_w: ad.Tensor
    out_b: ad.Tensor

    @classmethod
    def init(cls, num_skills, embedding_dim, rng):
        c = num_skills
        if not embedding_dim:
            bound = 1.0 / np.sqrt(2 * c)
            return cls(
                E=ad.tensor(np.eye(c), name="E"),
                d=None,
                proj_W=None,
                proj_b=None,
                out_w=ad.tensor(rng.uniform(-bound, bound, 2 * c), requires_grad=True, name="out_w"),
                out_b=ad.tensor(np.zeros(1), requires_grad=True, name="out_b"),
            )
        de = int(embedding_dim)
        proj_bound = 1.0 / np.sqrt(de)
        out_bound = 1.0 / np.sqrt(de + c)
        return cls(
            E=ad.tensor(rng.normal(0.0, 1.0, (de, c)), requires_grad=True, name="E"),
            d=ad.tensor(rng.normal(0.0, 1.0, de), requires_grad=True, name="d"),
            proj_W=ad.tensor(rng.uniform(-proj_bound, proj_bound, (de, de)), requires_grad=True, name="proj_W"),
            proj_b=ad.tensor(np.zeros(de), requires_grad=True, name="proj_b"),
            out_w=ad.tensor(rng.uniform(-out_bound, out_bound, de + c), requires_grad=True, name="out_w"),
            out_b=ad.tensor(np.zeros(1), requires_grad=True, name="out_b"),
        )

    @property
    def one_hot(self):
        return self.d is None

    @property
    def num_skills(self):
        return self.E.shape[1]

    @property
    def embedding_dim(self):
        return self.E.shape[0]

    @property
    def input_dim(self):
        return self.num_skills if self.one_hot else self.proj_W.shape[0]

    def tensors(self):
        names = ("E", "d", "proj_W", "proj_b", "out_w", "out_b")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None and getattr(self, n).requires_grad}


def _check_skills(skills, num_skills):
    skills = np.asarray(skills, dtype=np.int64)
    if skills.size and (skills.min() < 0 or skills.max() >= num_skills):
        bad = skills[(skills < 0) | (skills >= num_skills)][0]
        raise DataError(f"unknown skill index {int(bad)} (have {num_skills} skills)")
    return skills


def encode_batch(skills, correct, params):
    """Encode many events at once; returns a ``(N, D_in)`` tensor."""
    skills = _check_skills(np.ravel(skills), params.num_skills)
    sign = np.where(np.ravel(correct).astype(bool), 1.0, -1.0)[:, None]
    if params.one_hot:
        x = np.zeros((len(skills), params.num_skills))
        x[np.arange(len(skills)), skills] = sign[:, 0]
        return ad.tensor(x)
    e = ad.transpose(ad.take(params.E, skills, axis=1))
    v = ad.add(e, ad.mul(sign, params.d))
    return ad.add(ad.matmul(v, ad.transpose(params.proj_W)), params.proj_b)


def encode_input(skill, correct, params):
    """GRU input for one answered question: ``NN(e_c + d)`` if correct else ``NN(e_c - d)``."""
    return ad.reshape(encode_batch([skill], [correct], params), (params.input_dim,))


def masked_state(h, skill):
    """Copy of ``h`` with every entry except ``skill`` set to zero."""
    h = ad.as_tensor(h)
    keep = np.zeros(h.shape)
    keep[..., skill] = 1.0
    return ad.mul(h, keep)


def predict_response(h, skill, params):
    """Probability that the next answer, on ``skill``, is correct given state ``h``."""
    (skill,) = _check_skills([skill], params.num_skills)
    e_c = ad.reshape(ad.take(params.E, skill, axis=1), (params.embedding_dim,))
    features = ad.concat([e_c, masked_state(h, skill)], axis=0)
    logit = ad.add(ad.sum(ad.mul(features, params.out_w)), ad.reshape(params.out_b, ()))
    return ad.sigmoid(logit)


def response_logits(h_steps, skills, params):
    """Output-head logits for a batch.

    ``h_steps`` is a list of ``(B, C)`` states; ``skills`` the ``(B, K)`` skill
    indices being predicted from each of those states (``K = len(h_steps)``).
    Returns a ``(K, B)`` tensor. Equivalent to :func:`predict_response` applied
    entry by entry, but built from a handful of batched ops.
    """
    skills = _check_skills(skills, params.num_skills)
    b, k = skills.shape
    c, de = params.num_skills, params.embedding_dim
    picked = []
    for t, h in enumerate(h_steps):
        onehot = np.zeros((b, c))
        onehot[np.arange(b), skills[:, t]] = 1.0
        picked.append(ad.reshape(ad.row_sum(ad.mul(h, onehot)), (1, b)))
    h_val = ad.concat(picked, axis=0)  # (K, B)
    flat = skills.T.ravel()  # time-major
    w_e = ad.reshape(ad.take(params.out_w, np.arange(de)), (de, 1))
    w_h = ad.take(params.out_w, de + flat)
    emb_term = ad.matmul(ad.transpose(ad.take(params.E, flat, axis=1)), w_e)  # (K*B, 1)
    logits = ad.add(
        ad.add(ad.mul(h_val, ad.reshape(w_h, (k, b))), ad.reshape(emb_term, (k, b))),
        params.out_b,
    )
    return logits


def bernoulli_nll(logits, targets, weights):
    """Weighted sum of ``-log p(y)`` with ``p = sigmoid(logits)``."""
    targets = np.asarray(targets, dtype=np.float64)
    per_event = ad.sub(ad.softplus(logits), ad.mul(logits, targets))
    return ad.sum(ad.mul(per_event, np.asarray(weights, dtype=np.float64)))


def sequence_loss(skills, correct, model):
    """Mean negative log-likelihood of events 2..T of one sequence."""
    skills = np.asarray(skills)
    if len(skills) < 2:
        raise DataError("sequence_loss: need at least two events")
    return model.batch_loss(skills[None, :], np.asarray(correct)[None, :], np.ones((1, len(skills)), bool))
