"""Bracketed scalar root finding for monotone equations."""
from __future__ import annotations

import math
from typing import Callable, Optional


def bisect_monotone(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    *,
    atol: float = 1e-12,
    fprime: Optional[Callable[[float], float]] = None,
    max_iter: int = 400,
) -> float:
    """Root of ``f`` on ``[lo, hi]`` where ``f(lo)`` and ``f(hi)`` differ in sign.

    Bisects until the residual is below ``atol`` or the bracket collapses to
    adjacent floats, then takes one Newton step from the best point if that
    step stays inside the bracket and lowers the residual.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.copysign(1.0, flo) == math.copysign(1.0, fhi):
        raise ValueError(f"root not bracketed: f({lo!r})={flo!r}, f({hi!r})={fhi!r}")
    increasing = fhi > 0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0) == increasing:
            hi, fhi = mid, fmid
        else:
            lo, flo = mid, fmid
        if min(abs(flo), abs(fhi)) <= atol * 1e-3:
            break
    x, fx = (lo, flo) if abs(flo) <= abs(fhi) else (hi, fhi)
    if fprime is not None:
        d = fprime(x)
        if d != 0.0 and math.isfinite(d):
            xn = x - fx / d
            if lo <= xn <= hi:
                fn = f(xn)
                if abs(fn) < abs(fx):
                    x = xn
    return x
