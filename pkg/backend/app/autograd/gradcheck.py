"""
Gradient Check
Central finite-difference probes against the tape's analytic gradients
"""

from dataclasses import dataclass, field
from typing import Callable, List, Sequence
import logging

import numpy as np

from app.autograd.tensor import Tensor, backward, get_tape, no_grad

logger = logging.getLogger(__name__)


@dataclass
class Probe:
    input_index: int
    flat_index: int
    analytic: float
    numeric: float
    rel_error: float


def relative_error(analytic: float, numeric: float, floor: float = 1e-3) -> float:
    """
    |a − n| / max(|a|, |n|, floor).

    A mixed tolerance: for gradients larger than ``floor`` in magnitude it is
    relative, below that it becomes absolute, so ``passed(rtol)`` accepts
    |a − n| < rtol · floor there (1e-7 with the defaults).
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


@dataclass
class GradcheckReport:
    probes: List[Probe] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((p.rel_error for p in self.probes), default=0.0)

    def passed(self, rtol: float = 1e-4) -> bool:
        return self.max_rel_error < rtol


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    probes: int = 10,
    eps: float = 1e-5,
    seed: int = 0,
    floor: float = 1e-3,
) -> GradcheckReport:
    """
    Compare analytic and numeric gradients of a random projection of ``fn()``.

    ``fn`` is re-evaluated with each probed entry nudged by ±eps; the scalar
    checked is sum(fn() · w) for a fixed Gaussian ``w``. Errors come from
    ``relative_error``, which is absolute for entries smaller than ``floor``;
    pass a smaller floor to hold tiny gradients to a relative bound.
    """
    rng = np.random.default_rng(seed)
    get_tape().clear()
    for tensor in inputs:
        tensor.grad = None

    out = fn()
    weights = rng.standard_normal(out.shape)
    backward((out * weights).sum())
    analytic = [
        np.zeros(t.shape) if t.grad is None else np.array(t.grad)
        for t in inputs
    ]

    def objective() -> float:
        with no_grad():
            return float(np.sum(fn().data * weights))

    sizes = np.array([t.size for t in inputs], dtype=np.float64)
    report = GradcheckReport()
    for _ in range(probes):
        which = int(rng.choice(len(inputs), p=sizes / sizes.sum()))
        tensor = inputs[which]
        flat = int(rng.integers(tensor.size))
        original = tensor.data

        values = original.copy().reshape(-1)
        values[flat] += eps
        tensor.assign(values.reshape(original.shape))
        upper = objective()
        values[flat] -= 2 * eps
        tensor.assign(values.reshape(original.shape))
        lower = objective()
        tensor.assign(original)

        numeric = (upper - lower) / (2 * eps)
        exact = float(analytic[which].reshape(-1)[flat])
        rel = relative_error(exact, numeric, floor)
        report.probes.append(Probe(which, flat, exact, numeric, rel))

    logger.debug(f"gradcheck: {probes} probes, max rel error {report.max_rel_error:.3e}")
    return report
