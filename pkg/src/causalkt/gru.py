"""GRU transition whose recurrent matrices are masked by the causal mask.

States are batched row-wise: ``h`` has shape ``(batch, C)`` and inputs
``(batch, D_in)``. A single (unbatched) state may be passed as a 1-D array.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, NumericalError


@dataclass
class CausalGruParams:
    W_z: ad.Tensor
    W_r: ad.Tensor
    W: ad.Tensor
    U_z: ad.Tensor
    U_r: ad.Tensor
    U: ad.Tensor
    b_z: ad.Tensor
    b_r: ad.Tensor
    b: ad.Tensor

    @classmethod
    def init(cls, num_skills, input_dim, rng):
        bound = 1.0 / np.sqrt(num_skills)

        def uniform(*shape, name):
            return ad.tensor(rng.uniform(-bound, bound, shape), requires_grad=True, name=name)

        c, d = num_skills, input_dim
        return cls(
            W_z=uniform(c, c, name="W_z"),
            W_r=uniform(c, c, name="W_r"),
            W=uniform(c, c, name="W"),
            U_z=uniform(c, d, name="U_z"),
            U_r=uniform(c, d, name="U_r"),
            U=uniform(c, d, name="U"),
            b_z=uniform(c, name="b_z"),
            b_r=uniform(c, name="b_r"),
            b=uniform(c, name="b"),
        )

    @property
    def num_skills(self):
        return self.W.shape[0]

    @property
    def input_dim(self):
        return self.U.shape[1]

    def tensors(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class MaskedGru:
    """Recurrent weights after masking, stored transposed for row-batched matmuls."""

    Wz_T: ad.Tensor
    Wr_T: ad.Tensor
    W_T: ad.Tensor
    Uz_T: ad.Tensor
    Ur_T: ad.Tensor
    U_T: ad.Tensor
    b_z: ad.Tensor
    b_r: ad.Tensor
    b: ad.Tensor

    @property
    def num_skills(self):
        return self.W_T.shape[0]


def mask_weights(params, M):
    """Elementwise-mask ``W_z``, ``W_r`` and ``W`` by ``M``; inputs and biases pass through."""
    M = ad.as_tensor(M)
    if M.shape != params.W.shape:
        raise DimensionError(f"mask shape {M.shape} does not match recurrent weights {params.W.shape}")
    return MaskedGru(
        Wz_T=ad.transpose(ad.mul(M, params.W_z)),
        Wr_T=ad.transpose(ad.mul(M, params.W_r)),
        W_T=ad.transpose(ad.mul(M, params.W)),
        Uz_T=ad.transpose(params.U_z),
        Ur_T=ad.transpose(params.U_r),
        U_T=ad.transpose(params.U),
        b_z=params.b_z,
        b_r=params.b_r,
        b=params.b,
    )


def gru_step(h_prev, x, masked, step=None):
    """One causal GRU transition.

    z = sigmoid(W'_z h + U_z x + b_z), r = sigmoid(W'_r h + U_r x + b_r),
    h~ = tanh(r * (W' h) + U x + b), h_new = (1 - z) * h + z * h~.

    The reset gate multiplies after the recurrent product, so every path from
    ``h[k]`` into ``h_new[i]`` runs through row ``i`` of a masked matrix.
    """
    h_prev, x = ad.as_tensor(h_prev), ad.as_tensor(x)
    single = h_prev.ndim == 1
    if single:
        h_prev = ad.reshape(h_prev, (1, -1))
        x = ad.reshape(x, (1, -1))
    c = masked.num_skills
    if h_prev.shape[1] != c or x.shape[1] != masked.U_T.shape[0] or x.shape[0] != h_prev.shape[0]:
        raise DimensionError(
            f"gru_step: state {h_prev.shape} / input {x.shape} do not fit C={c}, D_in={masked.U_T.shape[0]}"
        )
    h = gru_cell(
        h_prev,
        ad.add(ad.matmul(x, masked.Uz_T), masked.b_z),
        ad.add(ad.matmul(x, masked.Ur_T), masked.b_r),
        ad.add(ad.matmul(x, masked.U_T), masked.b),
        masked,
        step=step,
    )
    return ad.reshape(h, (c,)) if single else h


def gru_cell(h_prev, in_z, in_r, in_h, masked, step=None):
    """GRU update given precomputed input pre-activations ``U_* x + b_*``."""
    z = ad.sigmoid(ad.add(ad.matmul(h_prev, masked.Wz_T), in_z))
    r = ad.sigmoid(ad.add(ad.matmul(h_prev, masked.Wr_T), in_r))
    cand = ad.tanh(ad.add(ad.mul(r, ad.matmul(h_prev, masked.W_T)), in_h))
    h = ad.add(h_prev, ad.mul(z, ad.sub(cand, h_prev)))
    if not np.all(np.isfinite(h.value)):
        where = "" if step is None else f" at time step {step}"
        raise NumericalError(f"gru_step: non-finite knowledge state{where}")
    return h


def unroll_sequence(inputs, masked, h0=None):
    """Run ``gru_step`` over ``inputs`` and return the list of states h_1..h_T."""
    if len(inputs) == 0:
        raise DimensionError("unroll_sequence: empty input sequence")
    first = ad.as_tensor(inputs[0])
    if h0 is None:
        shape = (masked.num_skills,) if first.ndim == 1 else (first.shape[0], masked.num_skills)
        h0 = ad.tensor(np.zeros(shape))
    states, h = [], h0
    for t, x in enumerate(inputs, start=1):
        h = gru_step(h, x, masked, step=t)
        states.append(h)
    return states
