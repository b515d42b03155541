"""Composite Simpson rule on piecewise-uniform grids.

The pricing integrands have kinks wherever the monthly mean-reversion speed
changes, so grids are split at those breakpoints and each piece gets its own
uniform Simpson panel set.
"""
from __future__ import annotations

import numpy as np


class SimpsonGrid:
    """Nodes on ``[a, b]`` with Simpson weights.

    Every segment between consecutive breakpoints is split into an even number
    of equal steps no longer than ``h_max``. A break node is shared by both
    neighbouring segments, so integrands may kink there but must be continuous.
    """

    def __init__(self, a: float, b: float, h_max: float, breaks=()):
        if not b >= a:
            raise ValueError(f"empty interval [{a}, {b}]")
        if h_max <= 0:
            raise ValueError("h_max must be positive")
        inner = sorted(float(x) for x in breaks if a < x < b)
        edges = [float(a)] + inner + [float(b)]
        nodes, weights = [np.array([float(a)])], [np.zeros(1)]
        for lo, hi in zip(edges[:-1], edges[1:]):
            length = hi - lo
            if length <= 0:
                continue
            n = max(2, int(np.ceil(length / h_max - 1e-12)))
            n += n % 2
            x = np.linspace(lo, hi, n + 1)
            w = np.full(n + 1, 2.0)
            w[1::2] = 4.0
            w[0] = w[-1] = 1.0
            w *= (hi - lo) / n / 3.0
            weights[-1][-1] += w[0]
            nodes.append(x[1:])
            weights.append(w[1:])
        self.nodes = np.concatenate(nodes)
        self.weights = np.concatenate(weights)
        self.edges = np.array(edges)

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values) -> float | np.ndarray:
        """Integrate samples taken at ``self.nodes`` (last axis)."""
        return np.asarray(values) @ self.weights


def simpson(f, a: float, b: float, h_max: float = 0.25, breaks=()) -> float:
    """Integrate a vectorised callable over ``[a, b]``."""
    if b == a:
        return 0.0
    if b < a:
        return -simpson(f, b, a, h_max, breaks)
    grid = SimpsonGrid(a, b, h_max, breaks)
    return float(grid.integrate(f(grid.nodes)))


def trapezoid(values, times) -> np.ndarray:
    """Trapezoidal integral along the last axis."""
    y = np.asarray(values, dtype=float)
    h = np.diff(np.asarray(times, dtype=float))
    return 0.5 * ((y[..., 1:] + y[..., :-1]) * h).sum(axis=-1)
