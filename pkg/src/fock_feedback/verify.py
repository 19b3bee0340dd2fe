"""Deterministic identity checks run by ``fock-feedback verify``."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .config import Setup
from .fock import (
    branch_probabilities,
    check_A1,
    collapse,
    displacement_apply,
    displacement_oracle_matrix,
    fock_state,
    random_state,
)
from .lyapunov import (
    curvature_coefficients,
    expected_halfstep_value,
    f1_slope,
    f2_curvature,
    k2_closed_form,
    lyapunov_value,
    sigma_table,
)
from .markov import expected_next_value


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{flag}  {self.name:<24} error={self.error:.3e}  tol={self.tolerance:.1e}{extra}"


def _check(name, error, tol, detail=""):
    return CheckResult(name, float(error), tol, bool(error <= tol), detail)


def sigma_identity_residuals(sigma, n_bar: int) -> dict:
    """Residual of the curvature coefficient against its closed form, per eligible ``n``.

    ``-1/(n(n+1))`` for ``2 <= n != n_bar``, ``-1/4`` for ``n`` in {0, 1}.
    """
    coef = curvature_coefficients(sigma)
    out = {}
    for n, c in enumerate(coef):
        if n == n_bar:
            continue
        target = Fraction(-1, 4) if n < 2 else Fraction(-1, n * (n + 1))
        out[n] = abs(float(c - target)) if isinstance(c, Fraction) else abs(float(c) - float(target))
    return out


def check_sigma_identity(setup: Setup, sigma=None, tol: float = 1e-14) -> CheckResult:
    mp = setup.model
    if sigma is None:
        sigma = sigma_table(mp.n_bar, mp.n_max, setup.config.sigma0_offset, exact=True)
    res = sigma_identity_residuals(sigma, mp.n_bar)
    worst = max(res, key=res.get)
    bad = [n for n, r in res.items() if r > tol]
    detail = f"offending n: {bad}" if bad else f"worst n={worst}"
    return _check("sigma_identity", res[worst], tol, detail)


def check_k2_identity(setup: Setup, rng, count: int) -> CheckResult:
    lp, mp = setup.lyapunov, setup.model
    err = max(
        abs(expected_halfstep_value(psi, lp, mp) - k2_closed_form(psi, lp))
        for psi in (random_state(rng, mp) for _ in range(count))
    )
    return _check("k2_identity", err, 1e-10)


def check_population_martingale(setup: Setup, rng, count: int) -> CheckResult:
    mp = setup.model
    err = 0.0
    for _ in range(count):
        psi = random_state(rng, mp)
        mix = np.zeros(mp.dim)
        for s in ("g", "e"):
            post, p = collapse(psi, s, mp)
            mix += p * np.abs(post) ** 2
        err = max(err, np.max(np.abs(mix - np.abs(psi) ** 2)))
        err = max(err, abs(sum(branch_probabilities(psi, mp)) - 1))
    return _check("population_martingale", err, 1e-12)


def _v1_displaced(psi, alpha, setup: Setup) -> float:
    return lyapunov_value(displacement_apply(psi, alpha, setup.table), setup.lyapunov).v1


def check_taylor_coefficients(setup: Setup, rng, count: int) -> list:
    mp, lp = setup.model, setup.lyapunov
    support = mp.n_max // 2
    e1 = e2 = rich = 0.0
    for _ in range(count):
        psi = random_state(rng, mp, support=support)
        v0 = lp.sigma @ (np.abs(psi) ** 2)
        h = 1e-4
        fd1 = (_v1_displaced(psi, h, setup) - _v1_displaced(psi, -h, setup)) / (2 * h)
        h = 1e-3
        fd2 = (_v1_displaced(psi, h, setup) - 2 * v0 + _v1_displaced(psi, -h, setup)) / (2 * h * h)
        f1, f2 = f1_slope(psi, lp), f2_curvature(psi, lp)
        e1 = max(e1, abs(f1 - fd1) / abs(f1))
        e2 = max(e2, abs(f2 - fd2) / abs(f2))
        # halving h and extrapolating removes the O(h^2) stencil bias
        h = 5e-4
        half = (_v1_displaced(psi, h, setup) - 2 * v0 + _v1_displaced(psi, -h, setup)) / (2 * h * h)
        rich = max(rich, abs(f2 - (4 * half - fd2) / 3))
    fock_err = 0.0
    for m in range(2, mp.n_max):
        if m != mp.n_bar:
            fock_err = max(fock_err, abs(f2_curvature(fock_state(m, mp), lp) + 1 / (m * (m + 1))))
    target_curv = f2_curvature(fock_state(mp.n_bar, mp), lp)
    return [
        _check("f1_finite_difference", e1, 1e-6),
        _check("f2_finite_difference", e2, 1e-5),
        _check("f2_richardson", rich, 1e-8, "absolute"),
        _check("f2_fock_identity", fock_err, 1e-12),
        CheckResult("f2_target_positive", -target_curv, 0.0, target_curv > 0, f"f2(|n_bar>)={target_curv:.6g}"),
    ]


def check_displacement(setup: Setup, alphas=(0.1, 0.5, 1.0)) -> list:
    tb = setup.table
    block = (tb.n_max + 1) // 2
    oracle_err = ortho_err = 0.0
    for a in alphas:
        d = tb.matrix(a)
        oracle_err = max(oracle_err, np.max(np.abs(d[:block, :block] - displacement_oracle_matrix(block, a))))
        ortho_err = max(ortho_err, np.max(np.abs(d.T @ d - np.eye(d.shape[0]))))
    return [
        _check("displacement_oracle", oracle_err, 1e-8, f"{block}x{block} block"),
        _check("displacement_orthogonal", ortho_err, 1e-10),
    ]


def check_supermartingale(setup: Setup, rng, count: int) -> CheckResult:
    mp, lp = setup.model, setup.lyapunov
    worst = -np.inf
    for _ in range(count):
        psi = random_state(rng, mp, support=mp.n_max // 2)
        gap = expected_next_value(psi, setup.control, lp, mp, setup.table) - lyapunov_value(psi, lp).total
        worst = max(worst, gap)
    return CheckResult("supermartingale", worst, 1e-12, worst <= 1e-12, "max E[V'] - V")


def check_a1(setup: Setup) -> CheckResult:
    rep = check_A1(setup.model, setup.config.a1_tol)
    return CheckResult("assumption_A1", float(len(rep.collisions)), 0.0, rep.passed, rep.describe())


def run_checks(setup: Setup, seed: int = 0, samples: int = 200, sigma=None) -> list:
    """All identity checks; ``sigma`` replaces the weight table for the sigma check (fault injection)."""
    rng = np.random.default_rng(seed)
    results = [check_a1(setup), check_sigma_identity(setup, sigma)]
    results.append(check_k2_identity(setup, rng, samples))
    results.append(check_population_martingale(setup, rng, samples))
    results.extend(check_taylor_coefficients(setup, rng, min(samples, 100)))
    results.extend(check_displacement(setup))
    results.append(check_supermartingale(setup, rng, min(samples, 100)))
    return results
