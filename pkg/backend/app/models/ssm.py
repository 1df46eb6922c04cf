"""
Selective SSM Module
One directional Mamba-style scan over a token sequence
"""

import numpy as np

from app.autograd import functional as F
from app.autograd.nn import Linear, Module, Parameter
from app.autograd.tensor import Tensor
from app.exceptions import ShapeError
from app.services.ssm_kernel import zoh

DT_INIT = 0.1


class SelectiveSsm(Module):
    """
    Input-dependent diagonal SSM over (B, T, D) tokens.

    Each channel carries its own N-dimensional state with A = −exp(A_log)
    (S4D-real init −1..−N). Δ = softplus(x·W_Δ + b_Δ) per channel, B and C
    are shared (B, T, N) projections of the token. No skip term: a zero C
    yields a zero output.
    """

    def __init__(self, channels: int, state_dim: int, rng: np.random.Generator, dt_init: float = DT_INIT):
        self.channels = channels
        self.state_dim = state_dim
        self.delta_proj = Linear(channels, channels, rng)
        self.delta_proj.weight.assign(self.delta_proj.weight.data * 0.1)
        self.delta_proj.bias.assign(np.full(channels, np.log(np.expm1(dt_init))))
        self.b_proj = Linear(channels, state_dim, rng, bias=False)
        self.c_proj = Linear(channels, state_dim, rng, bias=False)
        self.A_log = Parameter(np.log(np.tile(np.arange(1, state_dim + 1, dtype=np.float64), (channels, 1))))

    def forward(self, seq: Tensor) -> Tensor:
        if seq.ndim != 3 or seq.shape[-1] != self.channels:
            raise ShapeError("selective_ssm", seq.shape, ("B", "T", self.channels))
        batch, steps, channels = seq.shape
        n = self.state_dim

        delta = F.softplus(self.delta_proj(seq))
        A = F.neg(F.exp(self.A_log))
        b = F.reshape(self.b_proj(seq), (batch, steps, 1, n))
        c = F.reshape(self.c_proj(seq), (batch, steps, 1, n))
        a_bar, b_bar = zoh(A, F.reshape(delta, (batch, steps, channels, 1)), b)

        # (B, T, D, N) → (B, D, T, N) for the per-channel recurrence
        a_bar = F.transpose(a_bar, (0, 2, 1, 3))
        b_bar = F.transpose(b_bar, (0, 2, 1, 3))
        c = F.transpose(F.expand(c, (batch, steps, channels, n)), (0, 2, 1, 3))
        y = F.linear_recurrence(F.transpose(seq, (0, 2, 1)), a_bar, b_bar, c)
        return F.transpose(y, (0, 2, 1))
