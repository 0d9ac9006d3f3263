"""Damped Newton iteration for smooth strictly convex energies.

Only gradients are needed: the step length is found by an exact line search
on the directional derivative, which is nondecreasing along any line for a
convex energy.
"""

from __future__ import annotations

import numpy as np


class NewtonDivergence(RuntimeError):
    def __init__(self, stage, residual: float, message: str = "Newton iteration did not converge"):
        super().__init__(f"{message} at stage {stage} (residual={residual:.3e})")
        self.stage = stage
        self.residual = residual


def line_search(dphi, slope0: float, *, max_iter: int = 60) -> float:
    """Approximate zero of the nondecreasing ``dphi`` on ``(0, 1]``, given ``dphi(0) = slope0 < 0``."""
    s1 = dphi(1.0)
    if s1 <= 0 or not np.isfinite(slope0):
        return 1.0
    a, fa, b, fb = 0.0, slope0, 1.0, s1
    side = 0
    t = 0.5
    for _ in range(max_iter):
        # Illinois variant of regula falsi
        t = (a * fb - b * fa) / (fb - fa) if fb != fa else 0.5 * (a + b)
        if not a < t < b:
            t = 0.5 * (a + b)
        ft = dphi(t)
        if abs(ft) <= 0.1 * abs(slope0):
            return t
        if ft < 0:
            a, fa = t, ft
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb = t, ft
            if side == 1:
                fa *= 0.5
            side = 1
        if b - a <= 1e-15:
            break
    return t if t > 0 else b


def newton_minimize(grad, step, y0, *, converged, max_iter: int = 100, stage=None):
    """Minimize a convex energy from its gradient.

    Parameters
    ----------
    grad : callable
        ``grad(y)`` returns the gradient vector.
    step : callable
        ``step(y, g)`` returns a descent direction, usually ``-H(y)^{-1} g``.
    converged : callable
        ``converged(y, g)`` returns ``(done, residual)``.

    Returns ``(y, iterations, residual)``.  Raises :class:`NewtonDivergence`
    when the iteration limit is hit or the iterate becomes non-finite.
    """
    y = np.array(y0, dtype=float)
    g = grad(y)
    done, res = converged(y, g)
    it = 0
    while not done:
        if it >= max_iter:
            raise NewtonDivergence(stage, res)
        d = step(y, g)
        slope = float(g @ d)
        if not np.all(np.isfinite(d)) or slope >= 0:
            d = -g
            slope = -float(g @ g)
        t = line_search(lambda t: float(grad(y + t * d) @ d), slope)
        y_new = y + t * d
        if not np.all(np.isfinite(y_new)):
            raise NewtonDivergence(stage, res, "Newton iterate became non-finite")
        stalled = np.array_equal(y_new, y)
        y = y_new
        g = grad(y)
        done, res = converged(y, g)
        it += 1
        if stalled and not done:
            raise NewtonDivergence(stage, res, "Newton iteration stalled")
    return y, it, res
