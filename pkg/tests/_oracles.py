"""Independent numerical oracles shared by the test modules.

Central finite differences (h=1e-5 unless stated) and brute-force
reference computations.  Nothing here touches the tape machinery beyond
calling the function under test, so these stay independent of the code
paths they check.
"""

from __future__ import annotations

import itertools

import numpy as np

H = 1e-5


def fd_grad(f, x: np.ndarray, h: float = H) -> np.ndarray:
    """Central finite-difference gradient of scalar-valued f at x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise |a-b| / max(|a|, |b|, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b) / denom))


def nudge_off_kinks(x: np.ndarray, margin: float = 1e-3) -> np.ndarray:
    """Shift values that sit within `margin` of zero so piecewise-linear
    ops (relu, leaky_relu) differentiate cleanly under finite differences."""
    x = np.array(x, dtype=np.float64)
    close = np.abs(x) < margin
    x[close] = x[close] + np.where(x[close] >= 0, 2 * margin, -2 * margin)
    return x


def brute_force_assignment(cost: np.ndarray) -> float:
    """Minimum-cost perfect assignment by enumerating all permutations."""
    n = cost.shape[0]
    assert cost.shape == (n, n) and n <= 8
    best = np.inf
    for perm in itertools.permutations(range(n)):
        total = sum(cost[i, j] for i, j in enumerate(perm))
        best = min(best, total)
    return float(best)
