"""Truncated Fock-space linear algebra.

States are plain complex numpy arrays ``c[n] = <n|psi>`` over ``n = 0..n_max``.
All tables built here are immutable after construction and safe to share
between worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

NORM_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the cavity model and the truncation size."""

    theta: float
    phi: float
    n_bar: int
    n_max: int

    def __post_init__(self):
        if self.n_bar < 2:
            raise ValueError(f"sigma table requires n_bar >= 2, got n_bar={self.n_bar}")
        if self.n_bar + 2 > self.n_max:
            raise ValueError(
                f"target must sit inside the truncation: n_bar + 2 <= n_max "
                f"(n_bar={self.n_bar}, n_max={self.n_max})"
            )
        if self.phi == 0:
            raise ValueError("phi must be nonzero")

    @property
    def dim(self) -> int:
        return self.n_max + 1


def _unit(vec: np.ndarray) -> np.ndarray:
    return vec / np.linalg.norm(vec)


def fock_state(n: int, params: ModelParams) -> np.ndarray:
    if not 0 <= n <= params.n_max:
        raise IndexError(f"Fock index {n} outside 0..{params.n_max}")
    psi = np.zeros(params.dim, dtype=complex)
    psi[n] = 1.0
    return psi


def coherent_state(alpha: float, params: ModelParams, max_tail: float = 1e-9) -> np.ndarray:
    """Real-amplitude coherent state ``exp(-a^2/2) sum a^n/sqrt(n!) |n>``.

    Raises ``ValueError`` if the Poisson weight beyond ``n_max`` exceeds
    ``max_tail``; otherwise the truncated vector is renormalized.
    """
    tail = poisson.sf(params.n_max, alpha * alpha) if alpha != 0 else 0.0
    if tail >= max_tail:
        raise ValueError(
            f"coherent state alpha={alpha} leaks {tail:.3g} beyond n_max={params.n_max}"
        )
    c = np.empty(params.dim)
    c[0] = math.exp(-alpha * alpha / 2)
    for n in range(1, params.dim):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    return _unit(c.astype(complex))


def state_from_amplitudes(amplitudes, params: ModelParams) -> np.ndarray:
    c = np.zeros(params.dim, dtype=complex)
    amps = np.asarray(amplitudes, dtype=complex)
    if amps.size > params.dim:
        raise ValueError(f"{amps.size} amplitudes do not fit n_max={params.n_max}")
    c[: amps.size] = amps
    norm = np.linalg.norm(c)
    if norm == 0:
        raise ValueError("amplitude list is identically zero")
    return c / norm


def apply_ladder(state: np.ndarray, which: str) -> tuple[np.ndarray, float]:
    """Exact truncated action of ``a`` or ``a^dagger`` (not renormalized).

    For the creation operator the component pushed past ``n_max`` is dropped
    and its squared magnitude is returned as leakage.
    """
    n = np.arange(state.size)
    out = np.zeros_like(state)
    if which == "annihilation":
        out[:-1] = np.sqrt(n[1:]) * state[1:]
        return out, 0.0
    if which == "creation":
        out[1:] = np.sqrt(n[1:]) * state[:-1]
        leak = state.size * abs(state[-1]) ** 2
        return out, float(leak)
    raise ValueError(f"unknown ladder operator {which!r}")


def generator_matrix(n_max: int) -> np.ndarray:
    """Truncated ``a^dagger - a``: real antisymmetric tridiagonal."""
    off = np.sqrt(np.arange(1, n_max + 1, dtype=float))
    return np.diag(off, -1) - np.diag(off, 1)


def measurement_values(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    angles = params.theta + np.arange(params.dim) * params.phi
    return np.cos(angles), np.sin(angles)


def branch_probabilities(state: np.ndarray, params: ModelParams) -> tuple[float, float]:
    g, e = measurement_values(params)
    pop = np.abs(state) ** 2
    return float(np.dot(g * g, pop)), float(np.dot(e * e, pop))


def collapse(state: np.ndarray, s: str, params: ModelParams) -> tuple[np.ndarray, float]:
    """Apply ``M_s`` and renormalize; returns the new state and ``P_s``."""
    g, e = measurement_values(params)
    if s == "g":
        m = g
    elif s == "e":
        m = e
    else:
        raise ValueError(f"outcome must be 'g' or 'e', got {s!r}")
    out = m * state
    prob = float(np.vdot(out, out).real)
    if not prob > 0:
        raise ValueError(f"outcome {s!r} has zero probability for this state")
    return out / math.sqrt(prob), prob


@dataclass(frozen=True)
class DisplacementTable:
    """Spectral factors of the truncated generator ``G = a^dagger - a``.

    ``i G`` is Hermitian, so ``i G = U diag(lam) U^H`` and
    ``D_alpha = U diag(exp(-i alpha lam)) U^H``. Applying ``D_alpha`` to a
    vector costs O(d^2) once the vector is in the eigenbasis.
    """

    n_max: int
    alpha_limit: float
    eigvecs: np.ndarray = field(repr=False)
    eigvals: np.ndarray = field(repr=False)

    def to_eigenbasis(self, state: np.ndarray) -> np.ndarray:
        return self.eigvecs.conj().T @ state

    def from_eigenbasis(self, coeffs: np.ndarray, alphas) -> np.ndarray:
        """Displaced states for one or many ``alpha``; columns follow ``alphas``."""
        alphas = np.asarray(alphas, dtype=float)
        phases = np.exp(-1j * np.multiply.outer(self.eigvals, alphas))
        if phases.ndim == 1:
            return self.eigvecs @ (phases * coeffs)
        return self.eigvecs @ (phases * coeffs[:, None])

    def matrix(self, alpha: float) -> np.ndarray:
        phases = np.exp(-1j * alpha * self.eigvals)
        d = (self.eigvecs * phases) @ self.eigvecs.conj().T
        return d.real


def build_displacement_table(n_max: int, alpha_limit: float = 1.0) -> DisplacementTable:
    lam, vecs = np.linalg.eigh(1j * generator_matrix(n_max))
    table = DisplacementTable(n_max=n_max, alpha_limit=float(alpha_limit), eigvecs=vecs, eigvals=lam)
    for arr in (table.eigvecs, table.eigvals):
        arr.setflags(write=False)
    ident = table.matrix(0.0)
    err = np.max(np.abs(ident - np.eye(n_max + 1)))
    if err > NORM_TOL:
        raise RuntimeError(f"spectral factorization of the generator is inaccurate ({err:.3g})")
    return table


def displacement_apply(
    state: np.ndarray, alpha: float, table: DisplacementTable, return_drift: bool = False
):
    """``D_alpha |psi>`` with the truncated-generator exponential.

    The result is renormalized; with ``return_drift`` the norm deviation
    before renormalization is returned as well.
    """
    if abs(alpha) > table.alpha_limit:
        raise ValueError(f"|alpha|={abs(alpha)} exceeds table limit {table.alpha_limit}")
    if alpha == 0:
        out = state.copy()
    else:
        out = table.from_eigenbasis(table.to_eigenbasis(state), alpha)
    norm = np.linalg.norm(out)
    drift = abs(norm - np.linalg.norm(state))
    out = out / norm
    return (out, drift) if return_drift else out


def _laguerre(n: int, k: int, x: float) -> float:
    """Associated Laguerre ``L_n^{(k)}(x)`` by the three-term recurrence."""
    prev, cur = 1.0, 1.0 + k - x
    if n == 0:
        return prev
    for j in range(1, n):
        prev, cur = cur, ((2 * j + 1 + k - x) * cur - (j + k) * prev) / (j + 1)
    return cur


def displacement_oracle_entry(m: int, n: int, alpha: float) -> float:
    """Untruncated ``<m|D_alpha|n>`` for real ``alpha`` (closed form)."""
    if m < 0 or n < 0:
        raise IndexError("Fock indices must be nonnegative")
    if m < n:
        return (-1) ** (n - m) * displacement_oracle_entry(n, m, alpha)
    if alpha == 0:
        return 1.0 if m == n else 0.0
    k = m - n
    x = alpha * alpha
    log_mag = 0.5 * (math.lgamma(n + 1) - math.lgamma(m + 1)) + k * math.log(abs(alpha)) - x / 2
    sign = -1.0 if (alpha < 0 and k % 2) else 1.0
    return sign * math.exp(log_mag) * _laguerre(n, k, x)


def displacement_oracle_matrix(size: int, alpha: float) -> np.ndarray:
    return np.array(
        [[displacement_oracle_entry(m, n, alpha) for n in range(size)] for m in range(size)]
    )


@dataclass
class A1Report:
    passed: bool
    tol: float
    collisions: list = field(default_factory=list)  # (n, m, |gap|)

    def describe(self) -> str:
        if self.passed:
            return f"measurement eigenvalues distinct within tol={self.tol:g}"
        pairs = ", ".join(f"({n},{m})" for n, m, _ in self.collisions[:10])
        more = "" if len(self.collisions) <= 10 else f" and {len(self.collisions) - 10} more"
        return f"degenerate cos^2(theta+n*phi) levels within tol={self.tol:g}: {pairs}{more}"


def check_A1(params: ModelParams, tol: float = 1e-6) -> A1Report:
    """Pairwise scan of ``cos^2(theta + n phi)`` over the truncated basis."""
    g, _ = measurement_values(params)
    g2 = g * g
    gap = np.abs(g2[:, None] - g2[None, :])
    ii, jj = np.nonzero(np.triu(gap <= tol, k=1))
    collisions = [(int(i), int(j), float(gap[i, j])) for i, j in zip(ii, jj)]
    return A1Report(passed=not collisions, tol=tol, collisions=collisions)


def random_state(rng: np.random.Generator, params: ModelParams, support: int | None = None, real: bool = False):
    """Haar-like random unit vector on levels ``0..support-1`` (default: all)."""
    k = params.dim if support is None else support
    c = np.zeros(params.dim, dtype=complex)
    c[:k] = rng.standard_normal(k)
    if not real:
        c[:k] += 1j * rng.standard_normal(k)
    return _unit(c)
