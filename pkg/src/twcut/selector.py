"""Choice of the grouping parameter from the node count.

``alpha * 2**alpha = x`` has a unique positive root for ``x > 0`` because the
left side is strictly increasing on ``[0, inf)``.  With ``x = log2(n)``
the grouping parameter is ``max(2, ceil(alpha))``.

Bisection runs in 50-digit arithmetic: near ``x = 2**20`` one double ulp of
``alpha`` already moves ``alpha * 2**alpha`` by about 1e-10.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath

RESIDUAL_TOL = 1e-12
MIN_NODES = 16
_DPS = 50


@dataclass(frozen=True)
class AlphaSolution:
    x: float
    alpha_star: mpmath.mpf
    residual: float

    @property
    def ceil(self) -> int:
        return int(mpmath.ceil(self.alpha_star))


def solve_alpha(x: float) -> AlphaSolution:
    if not x >= 4:
        raise ValueError(f"solve_alpha needs x >= 4, got {x}")
    with mpmath.workdps(_DPS):
        target = mpmath.mpf(x)
        g = lambda a: a * mpmath.power(2, a)  # noqa: E731
        lo, hi = mpmath.mpf("0.27") * mpmath.log(target, 2), mpmath.log(target, 2)
        if g(lo) > target or g(hi) < target:
            raise ArithmeticError(f"root of a*2^a = {x} outside the expected bracket")
        for _ in range(4 * _DPS):
            mid = (lo + hi) / 2
            if g(mid) < target:
                lo = mid
            else:
                hi = mid
        # snap to an integer root when one exists so ceil() is not thrown off by 1e-50
        near = mpmath.nint(hi)
        alpha = near if g(near) == target else hi
        residual = float(abs(g(alpha) - target))
    if residual > RESIDUAL_TOL:
        raise ArithmeticError(f"bisection residual {residual:g} for x={x}")
    return AlphaSolution(x, alpha, residual)


def choose_ell(n: int) -> int:
    if n < MIN_NODES:
        raise ValueError(f"choose_ell needs n >= {MIN_NODES}, got {n}")
    return max(2, solve_alpha(math.log2(n)).ceil)


def size_bound_holds(x: float) -> bool:
    """``2^c + x/c <= 12 x / log2(x)`` with ``c = ceil(alpha)``."""
    c = solve_alpha(x).ceil
    return 2**c + x / c <= 12 * x / math.log2(x)
