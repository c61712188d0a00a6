"""Independent reference implementations used as test oracles.

Everything here is deliberately written against the plain ``math``
module with a different structure than the library code (linear level
search, explicit loops) so that agreement between the two is evidence,
not tautology.
"""

import math


def nearest_level(x: float, levels) -> float:
    """Nearest of the given values; exact ties go to the larger one."""
    best = None
    best_d = None
    for v in levels:
        d = abs(x - v)
        if best_d is None or d < best_d or (d == best_d and v > best):
            best, best_d = v, d
    return best


def uniform_reference(x: float, bits: int, lo: float, hi: float) -> float:
    """Clip then snap to the nearest of the 2**bits grid levels."""
    n = 2 ** bits - 1
    delta = (hi - lo) / n
    xc = min(max(x, lo), hi)
    # grid spans the clip range; endpoints are the range bounds themselves
    levels = [lo + j * delta for j in range(n + 1)]
    levels[-1] = hi
    return nearest_level(xc, levels)


def soft_reference(x: float, bits: int, lo: float, hi: float, alpha: float) -> float:
    """Scalar soft quantizer, linear interval search, math-module only."""
    n = 2 ** bits - 1
    delta = (hi - lo) / n
    if x < lo:
        return lo
    if x > hi:
        return hi
    i = n - 1
    for j in range(n):
        if x < lo + (j + 1) * delta:
            i = j
            break
    k = min(math.log(2.0 / alpha - 1.0) / delta, 1000.0)
    m = lo + (i + 0.5) * delta
    phi = math.tanh(k * (x - m)) / math.tanh(0.5 * k * delta)
    y = lo + delta * (i + (phi + 1.0) / 2.0)
    return min(max(y, lo), hi)


def central_diff(f, x: float, h: float = 1e-6) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)
