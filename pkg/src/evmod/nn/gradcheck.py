"""Central finite-difference verification of analytic gradients.

The check path runs the forward graph in 64-bit: callers are expected to
hand in float64 tensors (``Module.astype(np.float64)`` for layers). Elements
sitting exactly on a nondifferentiable point (e.g. relu at 0) can be
excluded via a mask.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import NonFiniteGradient
from . import tensor as T
from .tensor import Tensor


@dataclass
class GradCheckReport:
    tolerance: float
    max_errors: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_errors.values()) if self.max_errors else 0.0

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.max_errors.values())

    def __str__(self) -> str:
        lines = [f"grad check (tol {self.tolerance:g}):"]
        for name, err in self.max_errors.items():
            mark = "ok " if err <= self.tolerance else "FAIL"
            lines.append(f"  [{mark}] {name}: max rel err {err:.3e}")
        return "\n".join(lines)


def grad_check(
    build_loss: Callable[[], Tensor],
    wrt: list[Tensor],
    tol: float = 1e-4,
    h: float = 1e-5,
    exclude: Mapping[int, np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar loss against central differences.

    ``build_loss`` must rebuild the graph from the current ``.data`` of the
    tensors in ``wrt`` on every call. ``exclude`` maps an index into ``wrt``
    to a boolean mask of elements to skip (nondifferentiable points).

    Relative error is |a - n| / max(|a|, |n|, 1e-8).
    """
    for t in wrt:
        t.zero_grad()
    prev_flag = T.check_finite_gradients
    T.check_finite_gradients = True
    try:
        loss = build_loss()
        if not np.isfinite(loss.data).all():
            raise NonFiniteGradient("loss is not finite at the linearization point")
        loss.backward()
    finally:
        T.check_finite_gradients = prev_flag
    analytic = [t.grad.copy() for t in wrt]
    for i, a in enumerate(analytic):
        if not np.isfinite(a).all():
            raise NonFiniteGradient(f"analytic gradient of wrt[{i}] is not finite")

    report = GradCheckReport(tolerance=tol)
    for i, t in enumerate(wrt):
        flat = t.data.reshape(-1)
        skip = None
        if exclude is not None and i in exclude:
            skip = np.asarray(exclude[i], dtype=bool).reshape(-1)
        worst = 0.0
        with T.no_grad():
            for j in range(flat.size):
                if skip is not None and skip[j]:
                    continue
                orig = flat[j]
                flat[j] = orig + h
                up = float(build_loss().data)
                flat[j] = orig - h
                dn = float(build_loss().data)
                flat[j] = orig
                numeric = (up - dn) / (2.0 * h)
                a = float(analytic[i].reshape(-1)[j])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
                if err > worst:
                    worst = err
        name = t.name or f"wrt[{i}]"
        report.max_errors[name] = worst
    return report
