"""Feedback law: pick the displacement in ``[-alpha_bar, alpha_bar]`` that
minimizes ``V`` of the displaced post-measurement state.

The minimization is a symmetric grid scan followed by golden-section
refinement inside the cell around the best grid point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import DisplacementTable
from .lyapunov import LyapunovParams, value_from_populations

INV_GOLDEN = (math.sqrt(5) - 1) / 2
# grid values this close to the minimum count as tied
TIE_TOL = 1e-12


@dataclass(frozen=True)
class ControlParams:
    alpha_bar: float
    grid_points: int = 41
    refine_tol: float | None = None

    def __post_init__(self):
        if self.alpha_bar < 0:
            raise ValueError(f"alpha_bar must be nonnegative, got {self.alpha_bar}")
        if self.grid_points < 3 or self.grid_points % 2 == 0:
            raise ValueError(f"grid_points must be odd and >= 3, got {self.grid_points}")
        if self.refine_tol is not None and self.refine_tol <= 0:
            raise ValueError("refine_tol must be positive")

    @property
    def tol(self) -> float:
        return self.refine_tol if self.refine_tol is not None else self.alpha_bar * 1e-6

    def grid(self) -> np.ndarray:
        half = self.grid_points // 2
        steps = np.arange(-half, half + 1)
        return steps * (self.alpha_bar / half)  # index ``half`` is exactly 0.0


def golden_section(f, a: float, b: float, tol: float) -> tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[a, b]``; returns the best point seen."""
    c = b - INV_GOLDEN * (b - a)
    d = a + INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc < fd else (d, fd)


class _Objective:
    """``alpha -> V(D_alpha psi)`` with ``psi`` pre-rotated to the eigenbasis."""

    def __init__(self, state, lp: LyapunovParams, table: DisplacementTable):
        self.state = state
        self.lp = lp
        self.table = table
        self.coeffs = table.to_eigenbasis(state)
        self.v0 = float(value_from_populations(np.abs(state) ** 2, lp))

    def __call__(self, alpha: float) -> float:
        if alpha == 0:
            return self.v0
        amps = self.table.from_eigenbasis(self.coeffs, alpha)
        return float(value_from_populations(np.abs(amps) ** 2, self.lp))

    def on_grid(self, alphas: np.ndarray) -> np.ndarray:
        amps = self.table.from_eigenbasis(self.coeffs, alphas)
        vals = value_from_populations(np.abs(amps) ** 2, self.lp)
        vals[alphas == 0] = self.v0
        return vals


def landscape(state, cp: ControlParams, lp: LyapunovParams, table: DisplacementTable):
    """``(alpha, V(D_alpha psi))`` sampled on the controller grid."""
    alphas = cp.grid()
    if cp.alpha_bar == 0:
        vals = np.full(alphas.shape, _Objective(state, lp, table).v0)
    else:
        vals = _Objective(state, lp, table).on_grid(alphas)
    return list(zip(alphas.tolist(), vals.tolist()))


def choose_alpha(state, cp: ControlParams, lp: LyapunovParams, table: DisplacementTable):
    """Return ``(alpha_star, v_star)`` with ``v_star <= V(state)``."""
    obj = _Objective(state, lp, table)
    if cp.alpha_bar == 0:
        return 0.0, obj.v0
    alphas = cp.grid()
    vals = obj.on_grid(alphas)
    vmin = vals.min()
    tied = np.flatnonzero(vals <= vmin + TIE_TOL)
    # smallest |alpha| first, negative before positive
    i = min(tied, key=lambda k: (abs(alphas[k]), alphas[k]))
    best_alpha, best_v = float(alphas[i]), float(vals[i])
    lo = alphas[max(i - 1, 0)]
    hi = alphas[min(i + 1, alphas.size - 1)]
    x, fx = golden_section(obj, float(lo), float(hi), cp.tol)
    if fx < best_v - TIE_TOL:
        best_alpha, best_v = x, fx
    return best_alpha, best_v
