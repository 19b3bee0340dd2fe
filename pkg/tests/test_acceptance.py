"""Acceptance criteria, each run at its stated tolerance.

Every test reports one PASS/FAIL line (collected in the terminal summary)
before asserting. Criteria 7 and 8 share one default-configuration ensemble.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from fock_feedback import cli
from fock_feedback.config import RunConfig, build
from fock_feedback.controller import ControlParams
from fock_feedback.ensemble import doob_audit, fock_concentration_audit, run_ensemble
from fock_feedback.fock import (
    build_displacement_table,
    collapse,
    displacement_apply,
    displacement_oracle_matrix,
    fock_state,
    random_state,
)
from fock_feedback.lyapunov import (
    curvature_coefficients,
    expected_halfstep_value,
    f1_slope,
    f2_curvature,
    k2_closed_form,
    lyapunov_value,
    sigma_table,
)
from fock_feedback.markov import expected_next_value

SEED = 42


@pytest.fixture(scope="module")
def setup():
    return build(RunConfig())


def test_c1_k2_identity(setup, criterion):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    err = max(
        abs(expected_halfstep_value(psi, setup.lyapunov, setup.model) - k2_closed_form(psi, setup.lyapunov))
        for psi in (random_state(rng, setup.model) for _ in range(1000))
    )
    dt = time.perf_counter() - t0
    ok = criterion(1, err <= 1e-10 and dt < 10, f"K2 identity max error {err:.2e} (tol 1e-10), {dt:.1f}s")
    assert ok


def test_c2_sigma_identity(criterion):
    t0 = time.perf_counter()
    worst = Fraction(0)
    low = []
    for n_bar in (2, 3, 5):
        coef = curvature_coefficients(sigma_table(n_bar, 40, exact=True))
        for n in range(2, 40):
            if n != n_bar:
                worst = max(worst, abs(coef[n] + Fraction(1, n * (n + 1))))
        if n_bar > 2:
            low += [coef[0], coef[1]]
    dt = time.perf_counter() - t0
    low_ok = all(c == Fraction(-1, 4) for c in low)
    ok = criterion(
        2, float(worst) <= 1e-14 and low_ok and dt < 1,
        f"sigma identity max residual {float(worst):.2e} (tol 1e-14), n in {{0,1}} equal -1/4: {low_ok}, {dt:.2f}s",
    )
    assert ok


def test_c3_displacement_oracle(criterion):
    t0 = time.perf_counter()
    tb = build_displacement_table(60)
    oracle_err = ortho_err = 0.0
    for alpha in (0.1, 0.5, 1.0):
        d = tb.matrix(alpha)
        oracle_err = max(oracle_err, np.max(np.abs(d[:30, :30] - displacement_oracle_matrix(30, alpha))))
        ortho_err = max(ortho_err, np.max(np.abs(d.T @ d - np.eye(61))))
    dt = time.perf_counter() - t0
    ok = criterion(
        3, oracle_err <= 1e-8 and ortho_err <= 1e-10 and dt < 5,
        f"oracle max error {oracle_err:.2e} (tol 1e-8), orthogonality {ortho_err:.2e} (tol 1e-10), {dt:.2f}s",
    )
    assert ok


def test_c4_taylor_coefficients(setup, criterion):
    mp, lp, tb = setup.model, setup.lyapunov, setup.table
    rng = np.random.default_rng(SEED)

    def v1(psi, alpha):
        return lyapunov_value(displacement_apply(psi, alpha, tb), lp).v1

    t0 = time.perf_counter()
    e1 = e2 = 0.0
    for _ in range(100):
        psi = random_state(rng, mp, support=mp.n_max // 2)
        v0 = v1(psi, 0.0)
        fd1 = (v1(psi, 1e-4) - v1(psi, -1e-4)) / 2e-4
        fd2 = (v1(psi, 1e-3) - 2 * v0 + v1(psi, -1e-3)) / (2 * 1e-6)
        f1, f2 = f1_slope(psi, lp), f2_curvature(psi, lp)
        e1 = max(e1, abs(f1 - fd1) / abs(f1))
        e2 = max(e2, abs(f2 - fd2) / abs(f2))
    fock_err = max(
        abs(f2_curvature(fock_state(m, mp), lp) + 1 / (m * (m + 1))) for m in range(2, mp.n_max) if m != mp.n_bar
    )
    target = f2_curvature(fock_state(mp.n_bar, mp), lp)
    dt = time.perf_counter() - t0
    ok = criterion(
        4, e1 <= 1e-6 and e2 <= 1e-5 and fock_err <= 1e-12 and target > 0 and dt < 10,
        f"f1 rel {e1:.2e} (tol 1e-6), f2 rel {e2:.2e} (tol 1e-5), "
        f"Fock identity {fock_err:.2e} (tol 1e-12), f2(target) {target:.4g} > 0, {dt:.1f}s",
    )
    assert ok


def test_c5_supermartingale(setup, criterion):
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    worst = -math.inf
    for _ in range(500):
        psi = random_state(rng, setup.model)
        gap = expected_next_value(psi, setup.control, setup.lyapunov, setup.model, setup.table)
        worst = max(worst, gap - lyapunov_value(psi, setup.lyapunov).total)
    dt = time.perf_counter() - t0
    ok = criterion(5, worst <= 1e-12 and dt < 60, f"max E[V'] - V = {worst:.3e} (tol 1e-12), {dt:.1f}s")
    assert ok


def test_c6_population_martingale(setup, criterion):
    mp = setup.model
    rng = np.random.default_rng(SEED)
    t0 = time.perf_counter()
    err = 0.0
    for _ in range(100):
        psi = random_state(rng, mp)
        mix = sum(p * np.abs(post) ** 2 for post, p in (collapse(psi, s, mp) for s in "ge"))
        err = max(err, np.max(np.abs(mix - np.abs(psi) ** 2)))
    dt = time.perf_counter() - t0
    ok = criterion(6, err <= 1e-12 and dt < 5, f"population martingale max error {err:.2e} (tol 1e-12), {dt:.2f}s")
    assert ok


@pytest.fixture(scope="module")
def default_run(setup):
    t0 = time.perf_counter()
    res = run_ensemble(
        setup.ensemble, setup.initial, setup.control, setup.lyapunov, setup.model, setup.table,
        leakage_budget=setup.config.leakage_budget,
    )
    return res, time.perf_counter() - t0


def test_c7_doob(default_run, criterion):
    res, dt = default_run
    rep = doob_audit(res, 10 * res.initial_v)
    ok = criterion(
        7, rep.passed and dt < 300,
        f"exceedance {rep.exceed_fraction:.4f} <= bound {rep.bound:.4f} + 3 SE ({3 * rep.se:.4f}), "
        f"{res.config.trajectories} trajectories, {dt:.0f}s",
    )
    assert ok


def test_c8_convergence(setup, default_run, criterion):
    res, dt = default_run
    s = res.stats
    slack = [s.mean_v[k] - s.mean_v[k - 1] - 3 * max(s.se_v[k], s.se_v[k - 1]) for k in range(1, s.steps.size)]
    monotone = max(slack) <= 0
    conc = fock_concentration_audit(res.final_states, setup.model.n_bar)

    t0 = time.perf_counter()
    base = run_ensemble(
        setup.ensemble, setup.initial, ControlParams(0.0), setup.lyapunov, setup.model, setup.table,
        leakage_budget=setup.config.leakage_budget,
    )
    dt += time.perf_counter() - t0
    baseline_mass = fock_concentration_audit(base.final_states, setup.model.n_bar).target_mass
    margin = s.conv_fraction[-1] - baseline_mass
    ok = criterion(
        8, monotone and conc.fraction >= 0.9 and margin >= 0.2 and dt < 900,
        f"(a) worst mean-V rise beyond 3 SE {max(slack):.2e} <= 0; (b) Fock fraction {conc.fraction:.3f} >= 0.9; "
        f"(c) conv {s.conv_fraction[-1]:.3f} - baseline {baseline_mass:.3f} = {margin:.3f} >= 0.2; {dt:.0f}s",
    )
    assert ok


def test_c9_worker_reproducibility(tmp_path, criterion):
    cfg = RunConfig(trajectories=24, steps=30)
    paths = []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        cli.simulate(cfg.with_overrides(out_dir=str(out)), workers=workers)
        paths.append(out / cfg.stats_file)
    same = paths[0].read_bytes() == paths[1].read_bytes()
    ok = criterion(9, same, f"stats CSV bit-identical for 1 vs 8 workers: {same}")
    assert ok
