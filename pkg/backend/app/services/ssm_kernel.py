"""
State-Space Kernel
Zero-order-hold discretization and the sequential selective scan
"""

from typing import Optional, Tuple
import logging

import numpy as np

from app.autograd import functional as F
from app.autograd.tensor import ArrayLike, Tensor, no_grad
from app.exceptions import NumericalError, ShapeError
from app.schemas.ssm import DiscreteSsm, SsmParams

logger = logging.getLogger(__name__)


def zoh(a: ArrayLike, delta: ArrayLike, b: ArrayLike) -> Tuple[Tensor, Tensor]:
    """
    Differentiable diagonal ZOH: ā = exp(Δa), b̄ = Δ·φ(Δa)·b with φ(x) = (eˣ − 1)/x.

    φ switches to its series near 0, so b̄ tends to Δ·b as Δa → 0.
    """
    delta_a = F.mul(delta, a)
    a_bar = F.exp(delta_a)
    b_bar = F.mul(F.mul(delta, F.expm1_ratio(delta_a)), b)
    return a_bar, b_bar


def discretize(params: SsmParams) -> DiscreteSsm:
    """Closed-form discretization of a diagonal SSM"""
    delta = params.delta[..., None] if params.delta.ndim else params.delta
    with no_grad():
        a_bar, b_bar = zoh(params.A, delta, params.B)
    for name, value in (("A_bar", a_bar.data), ("B_bar", b_bar.data)):
        bad = np.argwhere(~np.isfinite(value))
        if bad.size:
            raise NumericalError(f"{name} entry {tuple(int(i) for i in bad[0])} is not finite")
    return DiscreteSsm(A_bar=a_bar.data, B_bar=b_bar.data, C_bar=params.C)


def selective_scan(seq: ArrayLike, d: DiscreteSsm, h0: Optional[ArrayLike] = None) -> Tensor:
    """
    y(t) = C̄(t)·h(t) with h(t) = Ā(t)·h(t−1) + B̄(t)·x(t).

    Time-invariant parameters of shape (N,) are broadcast over the T steps.
    """
    seq = F.as_tensor(seq)
    if seq.ndim != 1 or seq.shape[0] < 1:
        raise ShapeError("selective_scan", seq.shape, ("T",), detail="expects a non-empty 1D sequence")
    steps, n = seq.shape[0], d.state_dim

    def per_step(name: str, value: np.ndarray) -> np.ndarray:
        if value.shape == (n,):
            return np.broadcast_to(value, (steps, n))
        if value.shape != (steps, n):
            raise ShapeError("selective_scan", seq.shape, value.shape, detail=name)
        return value

    a_bar = per_step("A_bar", d.A_bar)
    b_bar = per_step("B_bar", d.B_bar)
    c_bar = per_step("C_bar", d.C_bar)
    if h0 is not None and F.as_tensor(h0).shape != (n,):
        raise ShapeError("selective_scan", (n,), F.as_tensor(h0).shape, detail="h0")
    return F.linear_recurrence(seq, a_bar, b_bar, c_bar, h0)


def ssm_scan(
    x: ArrayLike,
    A: ArrayLike,
    B: ArrayLike,
    C: ArrayLike,
    delta: ArrayLike,
    h0: Optional[ArrayLike] = None,
) -> Tensor:
    """
    End-to-end differentiable scan from continuous parameters.

    x (T,), A (N,), B and C (N,) or (T, N), delta scalar or (T,).
    """
    x, A, B, C, delta = (F.as_tensor(v) for v in (x, A, B, C, delta))
    steps, n = x.shape[0], A.shape[0]
    step_delta = F.reshape(delta, (-1, 1)) if delta.ndim == 1 else delta
    a_bar, b_bar = zoh(A, step_delta, B)
    a_bar = F.expand(a_bar, (steps, n)) if a_bar.shape != (steps, n) else a_bar
    b_bar = F.expand(b_bar, (steps, n)) if b_bar.shape != (steps, n) else b_bar
    C = F.expand(C, (steps, n)) if C.shape != (steps, n) else C
    return F.linear_recurrence(x, a_bar, b_bar, C, h0)
