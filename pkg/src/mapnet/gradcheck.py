"""Central finite-difference checking of recorded gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .tensor import Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    n_checked: int


def finite_diff_check(
    op_closure,
    inputs,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    excludes=None,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar-valued closure to central
    differences.

    ``op_closure(*inputs)`` must return a scalar Tensor; every input must be
    double precision (single precision is too coarse to check against).
    ``excludes`` optionally maps input position to a boolean mask of elements
    to skip (e.g. relu inputs exactly at zero).
    """
    if not 1e-6 <= step <= 1e-2:
        raise UsageError(f"step must be in [1e-6, 1e-2], got {step}")
    inputs = list(inputs)
    for i, t in enumerate(inputs):
        if t.data.dtype != np.float64:
            raise UsageError(f"input {i} must be float64 for gradient checking")
    excludes = excludes or {}

    for t in inputs:
        t.zero_grad()
    out = op_closure(*inputs)
    backward(out)
    analytic = [
        np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs
    ]

    max_rel = 0.0
    n_checked = 0
    for i, t in enumerate(inputs):
        if not t.requires_grad:
            continue
        mask = excludes.get(i)
        flat = t.data.reshape(-1)
        a_flat = analytic[i].reshape(-1)
        m_flat = None if mask is None else np.asarray(mask).reshape(-1)
        for j in range(flat.size):
            if m_flat is not None and m_flat[j]:
                continue
            orig = flat[j]
            with no_grad():
                flat[j] = orig + step
                f_plus = op_closure(*inputs).item()
                flat[j] = orig - step
                f_minus = op_closure(*inputs).item()
                flat[j] = orig
            numeric = (f_plus - f_minus) / (2 * step)
            a = a_flat[j]
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            max_rel = max(max_rel, rel)
            n_checked += 1
    return GradCheckReport(max_rel_err=max_rel, passed=max_rel <= tolerance,
                           n_checked=n_checked)


def check_op(op_closure, inputs, tolerance=1e-4, step=1e-5, excludes=None):
    report = finite_diff_check(op_closure, inputs, step=step,
                               tolerance=tolerance, excludes=excludes)
    return report.passed, report.max_rel_err


__all__ = ["GradCheckReport", "finite_diff_check", "check_op"]
