"""Lyapunov function for the target Fock state and its local expansions.

``V(psi) = sum_n sigma_n |c_n|^2
           + delta * (cos^4 phi_nbar + sin^4 phi_nbar - |M_g psi|^4 - |M_e psi|^4)``

with ``phi_n = theta + n phi``. The first part (``v1``) is a weighted photon
number distribution; the second part (``v2``) strictly decreases in
expectation under measurement except at Fock states.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .fock import ModelParams, collapse, generator_matrix

# Constant added to sigma_0. 1/4 makes the curvature identity at n = 0, 1
# equal -1/4; 1/8 is the literal table constant (gives -1/8 and -3/8 there).
SIGMA0_OFFSET = Fraction(1, 4)
SIGMA0_OFFSET_LITERAL = Fraction(1, 8)


def sigma_table(n_bar: int, n_max: int, sigma0_offset=SIGMA0_OFFSET, exact: bool = False):
    """Weights ``sigma_0..sigma_{n_max}``.

    With ``exact=True`` a list of ``Fraction`` is returned, otherwise a float
    array rounded from the exact values.
    """
    if n_bar < 2:
        raise ValueError(f"sigma table requires n_bar >= 2, got n_bar={n_bar}")
    if n_bar + 2 > n_max:
        raise ValueError(f"sigma table needs n_bar + 2 <= n_max (n_bar={n_bar}, n_max={n_max})")
    below = lambda k: Fraction(1, k) - Fraction(1, k * k)  # noqa: E731
    above = lambda k: Fraction(1, k) + Fraction(1, k * k)  # noqa: E731
    sig = [Fraction(0)] * (n_max + 1)
    for n in range(n_bar - 1, 0, -1):
        sig[n] = sig[n + 1] + below(n + 1)
    # k = 1 term of the n = 0 branch vanishes, so sigma_0 = offset + sigma_1
    sig[0] = Fraction(sigma0_offset) + sig[1]
    for n in range(n_bar + 1, n_max + 1):
        sig[n] = sig[n - 1] + above(n)
    if exact:
        return sig
    return np.array([float(s) for s in sig])


def curvature_coefficients(sigma) -> list:
    """``(n+1) sigma_{n+1} + n sigma_{n-1} - (2n+1) sigma_n`` for ``n = 0..len-2``.

    Works on floats or Fractions; at ``n = 0`` the ``sigma_{-1}`` term carries
    a zero weight and is dropped.
    """
    out = []
    for n in range(len(sigma) - 1):
        lower = n * sigma[n - 1] if n > 0 else 0
        out.append((n + 1) * sigma[n + 1] + lower - (2 * n + 1) * sigma[n])
    return out


def delta_bound(sigma, n_bar: int) -> float:
    """Strict upper bound on ``delta`` keeping ``V >= 0``."""
    return float(min(sigma[n_bar - 1], sigma[n_bar + 1])) / 2


def default_delta(sigma, n_bar: int) -> float:
    return 0.3 * delta_bound(sigma, n_bar)


@dataclass(frozen=True)
class LyapunovParams:
    delta: float
    sigma: np.ndarray = field(repr=False)
    phi_table: np.ndarray = field(repr=False)
    n_bar: int

    def __post_init__(self):
        sig = self.sigma
        if sig[self.n_bar] != 0:
            raise ValueError("sigma must vanish at the target level")
        if np.any(np.delete(sig, self.n_bar) <= 0):
            raise ValueError("sigma must be positive away from the target level")
        if np.any(np.diff(sig[self.n_bar:]) <= 0):
            raise ValueError("sigma must be strictly increasing above the target level")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        bound = delta_bound(sig, self.n_bar)
        if not self.delta < bound:
            raise ValueError(
                f"delta={self.delta:.6g} violates the non-negativity bound "
                f"2*delta < min(sigma[n_bar-1], sigma[n_bar+1]) (delta < {bound:.6g})"
            )

    @classmethod
    def build(cls, mp: ModelParams, delta="auto", sigma=None, sigma0_offset=SIGMA0_OFFSET):
        if sigma is None:
            sigma = sigma_table(mp.n_bar, mp.n_max, sigma0_offset)
        sigma = np.asarray(sigma, dtype=float)
        if delta == "auto" or delta is None:
            delta = default_delta(sigma, mp.n_bar)
        phi_table = mp.theta + np.arange(mp.dim) * mp.phi
        return cls(delta=float(delta), sigma=sigma, phi_table=phi_table, n_bar=mp.n_bar)

    @property
    def cos2(self) -> np.ndarray:
        return np.cos(self.phi_table) ** 2

    @property
    def sin2(self) -> np.ndarray:
        return np.sin(self.phi_table) ** 2

    @property
    def v2_offset(self) -> float:
        c, s = self.cos2[self.n_bar], self.sin2[self.n_bar]
        return float(c * c + s * s)


@dataclass(frozen=True)
class LyapunovBreakdown:
    v1: float
    v2: float

    @property
    def total(self) -> float:
        return self.v1 + self.v2


def value_from_populations(pop: np.ndarray, lp: LyapunovParams) -> np.ndarray:
    """``V`` from populations ``|c_n|^2``; ``pop`` may carry extra trailing axes."""
    t_g = lp.cos2 @ pop
    t_e = lp.sin2 @ pop
    return lp.sigma @ pop + lp.delta * (lp.v2_offset - t_g * t_g - t_e * t_e)


def lyapunov_value(state: np.ndarray, lp: LyapunovParams) -> LyapunovBreakdown:
    pop = np.abs(state) ** 2
    t_g = float(lp.cos2 @ pop)
    t_e = float(lp.sin2 @ pop)
    v1 = float(lp.sigma @ pop)
    v2 = lp.delta * (lp.v2_offset - t_g * t_g - t_e * t_e)
    return LyapunovBreakdown(v1=v1, v2=v2)


def V(state: np.ndarray, lp: LyapunovParams) -> float:
    return lyapunov_value(state, lp).total


def k2_closed_form(state: np.ndarray, lp: LyapunovParams) -> float:
    """Expected change of ``V`` over one measurement (no displacement).

    ``-2 delta (t4 - t2^2)^2 / (t2 (1 - t2))`` with ``t2 = <M_g^2>``,
    ``t4 = <M_g^4>``; zero when either outcome is impossible.
    """
    pop = np.abs(state) ** 2
    t2 = float(lp.cos2 @ pop)
    te = float(lp.sin2 @ pop)
    if t2 <= 0 or te <= 0:
        return 0.0
    t4 = float((lp.cos2 * lp.cos2) @ pop)
    return -2.0 * lp.delta * (t4 - t2 * t2) ** 2 / (t2 * te)


def expected_halfstep_value(state: np.ndarray, lp: LyapunovParams, mp: ModelParams) -> float:
    """Two-outcome sum ``P_g V(psi_g) + P_e V(psi_e) - V(psi)``."""
    total = 0.0
    for s in ("g", "e"):
        try:
            post, prob = collapse(state, s, mp)
        except ValueError:
            continue
        total += prob * V(post, lp)
    return total - V(state, lp)


def f1_slope(state: np.ndarray, lp: LyapunovParams) -> float:
    """First Taylor coefficient of ``v1(D_alpha psi)`` at ``alpha = 0``."""
    g_psi = generator_matrix(state.size - 1) @ state
    return float(2.0 * np.sum(lp.sigma * (g_psi * state.conj()).real))


def f2_curvature(state: np.ndarray, lp: LyapunovParams) -> float:
    """Second Taylor coefficient of ``v1(D_alpha psi)`` at ``alpha = 0``.

    Terms that would reference levels outside ``0..n_max`` are dropped, so
    the value is exact only for states with no weight on the top level.
    """
    sig = lp.sigma
    c = state
    n = np.arange(c.size)
    pop = np.abs(c) ** 2
    diag = np.array(curvature_coefficients(sig) + [0.0])
    # n = n_max keeps only the part not involving sigma_{n_max+1}
    diag[-1] = n[-1] * sig[-2] - (2 * n[-1] + 1) * sig[-1]
    total = float(diag @ pop)
    m = n[1:-1]
    cross = (c[:-2] * c[2:].conj()).real
    total += float(np.sum(cross * np.sqrt(m * (m + 1)) * (sig[:-2] + sig[2:] - 2 * sig[1:-1])))
    return total
