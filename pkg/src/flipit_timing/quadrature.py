"""Adaptive Simpson integration with a hard subdivision budget."""

from __future__ import annotations

import math
from typing import Callable


class QuadratureError(RuntimeError):
    """Raised when adaptive integration fails to reach the requested tolerance."""


def adaptive_simpson(
    func: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-9,
    max_subdivisions: int = 10_000,
) -> float:
    """Integrate ``func`` over ``[a, b]`` to absolute tolerance ``tol``.

    Each accepted panel carries its share of the tolerance, so the sum of local
    error estimates stays below ``tol``. The Richardson correction
    ``(S2 - S1) / 15`` is added to every accepted panel.

    Raises
    ------
    QuadratureError
        If more than ``max_subdivisions`` panel splits are needed.
    """
    if b == a:
        return 0.0
    if b < a:
        return -adaptive_simpson(func, b, a, tol, max_subdivisions)

    fa, fb = func(a), func(b)
    m = 0.5 * (a + b)
    fm = func(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    total = 0.0
    splits = 0
    stack = [(a, b, fa, fm, fb, whole, tol)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps = stack.pop()
        mid = 0.5 * (lo + hi)
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = func(lm), func(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        diff = left + right - s
        if abs(diff) <= 15.0 * eps or hi - lo <= 1e-12 * max(1.0, abs(hi)):
            total += left + right + diff / 15.0
            continue
        splits += 1
        if splits > max_subdivisions:
            raise QuadratureError(
                f"adaptive Simpson exceeded {max_subdivisions} subdivisions on [{a}, {b}]"
            )
        stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps))
        stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps))
    if not math.isfinite(total):
        raise QuadratureError(f"non-finite integral on [{a}, {b}]")
    return total
