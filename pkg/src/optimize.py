"""
Golden Section Search
Derivative-free 1D optimizers used by the minimax oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


# Golden ratio constant
PHI = (1 + math.sqrt(5)) / 2


@dataclass(frozen=True)
class SearchResult:
    x: float
    value: float
    evaluations: int


def golden_section_maximize(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-9,
) -> SearchResult:
    """Derivative-free 1D maximization via golden section search.

    Finds the value x in [a, b] that maximizes a unimodal f(x).

    Args:
        f: Objective function to maximize.
        a: Lower bound of search interval.
        b: Upper bound of search interval.
        tol: Width of the final bracket.

    Returns:
        SearchResult with the bracket midpoint, f there, and the number of
        objective evaluations spent.
    """
    c = b - (b - a) / PHI
    d = a + (b - a) / PHI

    fc = f(c)
    fd = f(d)
    evaluations = 2

    while abs(b - a) > tol:
        if fc < fd:  # Maximizing, so move toward higher value
            a = c
            c = d
            fc = fd
            d = a + (b - a) / PHI
            fd = f(d)
        else:
            b = d
            d = c
            fd = fc
            c = b - (b - a) / PHI
            fc = f(c)
        evaluations += 1

    x_opt = (a + b) / 2
    return SearchResult(x_opt, f(x_opt), evaluations + 1)


def golden_section_minimize(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-9,
) -> SearchResult:
    """Derivative-free 1D minimization via golden section search."""
    result = golden_section_maximize(lambda x: -f(x), a, b, tol)
    return SearchResult(result.x, -result.value, result.evaluations)


def bracket_around(grid: Sequence[float], index: int) -> tuple:
    """Neighbours of grid[index], clipped to the grid ends"""
    grid = np.asarray(grid)
    lo = grid[max(index - 1, 0)]
    hi = grid[min(index + 1, len(grid) - 1)]
    return float(lo), float(hi)
