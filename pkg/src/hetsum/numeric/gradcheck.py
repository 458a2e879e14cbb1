"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import ShapeError, Tensor, no_grad


@dataclass
class GradCheckReport:
    analytic: list = field(default_factory=list)
    numeric: list = field(default_factory=list)
    max_rel_error: float = 0.0
    tolerance: float = 1e-4
    checked: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)


def relative_error(a: np.ndarray, n: np.ndarray, floor: float) -> np.ndarray:
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], step: float = 1e-5,
               tolerance: float = 1e-4, floor: float = 1e-6,
               max_elements: Optional[int] = None, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients of scalar ``f(*inputs)`` with central differences.

    ``floor`` bounds the denominator of the relative error so gradients that are
    zero up to rounding do not dominate. With ``max_elements`` only a random
    subset of entries per input is perturbed.
    """
    for x in inputs:
        x.grad = None
    out = f(*inputs)
    if out.data.size != 1:
        raise ShapeError("grad_check", out.shape, (), detail="f must return a scalar")
    out.backward()
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    worst = 0.0
    for x in inputs:
        analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
        numeric = np.full_like(x.data, np.nan)
        x.data = np.ascontiguousarray(x.data)
        flat = x.data.reshape(-1)
        positions = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            positions = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        with no_grad():
            for pos in positions:
                orig = flat[pos]
                flat[pos] = orig + step
                up = float(f(*inputs).data)
                flat[pos] = orig - step
                down = float(f(*inputs).data)
                flat[pos] = orig
                numeric.reshape(-1)[pos] = (up - down) / (2.0 * step)
        a = analytic.reshape(-1)[positions]
        n = numeric.reshape(-1)[positions]
        if positions.size:
            worst = max(worst, float(relative_error(a, n, floor).max()))
        report.analytic.append(analytic)
        report.numeric.append(numeric)
        report.checked += int(positions.size)
    report.max_rel_error = worst
    for x in inputs:
        x.grad = None
    return report
