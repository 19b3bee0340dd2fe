import numpy as np
import pytest

from fock_feedback.controller import ControlParams, choose_alpha, golden_section, landscape
from fock_feedback.fock import displacement_apply, fock_state, random_state
from fock_feedback.lyapunov import LyapunovParams, V, f2_curvature


def test_grid_is_symmetric_with_exact_zero():
    grid = ControlParams(0.2, grid_points=41).grid()
    assert grid[20] == 0.0
    np.testing.assert_array_equal(grid, -grid[::-1])
    assert grid[0] == -0.2 and grid[-1] == 0.2


@pytest.mark.parametrize("bad", [{"grid_points": 40}, {"grid_points": 1}, {"alpha_bar": -0.1}])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        ControlParams(**{"alpha_bar": 0.2, **bad})


def test_default_refine_tol():
    assert ControlParams(0.2).tol == pytest.approx(2e-7)


def test_golden_section_quadratic():
    x, fx = golden_section(lambda a: (a - 0.123) ** 2, -1, 1, 1e-9)
    assert x == pytest.approx(0.123, abs=1e-8)
    assert fx <= 1e-16


def test_target_is_kept(mp, lp, cp, table):
    alpha, v = choose_alpha(fock_state(mp.n_bar, mp), ControlParams(0.05), lp, table)
    assert alpha == 0.0 and v == pytest.approx(0, abs=1e-15)


def test_improves_every_state(mp, lp, cp, table, rng):
    for _ in range(200):
        psi = random_state(rng, mp, support=int(rng.integers(1, 25)))
        _, v = choose_alpha(psi, cp, lp, table)
        assert v <= V(psi, lp)


def test_refinement_not_worse_than_grid(mp, lp, cp, table, rng):
    for _ in range(100):
        psi = random_state(rng, mp, support=15)
        _, v = choose_alpha(psi, cp, lp, table)
        assert v <= min(val for _, val in landscape(psi, cp, lp, table)) + 1e-12


def test_v_star_matches_displaced_value(mp, lp, cp, table, rng):
    psi = random_state(rng, mp, support=10)
    alpha, v = choose_alpha(psi, cp, lp, table)
    assert V(displacement_apply(psi, alpha, table), lp) == pytest.approx(v, abs=1e-13)


def test_deterministic(mp, lp, cp, table, rng):
    psi = random_state(rng, mp, support=10)
    assert choose_alpha(psi, cp, lp, table) == choose_alpha(psi.copy(), cp, lp, table)


def test_tie_break_prefers_negative(mp, lp, table):
    # a Fock state's landscape is even in alpha; |6> is not a local minimum
    alpha, _ = choose_alpha(fock_state(6, mp), ControlParams(0.2), lp, table)
    assert alpha < 0


@pytest.mark.parametrize("m", [3, 4, 5, 6, 7, 8, 10])
@pytest.mark.parametrize("alpha_bar", [0.1, 0.05])
def test_quadratic_decrease_at_fock_states(mp, table, m, alpha_bar):
    # needs the delta-weighted term's curvature below |f2|; delta = 1e-4 clears m <= 24
    lp = LyapunovParams.build(mp, delta=1e-4)
    psi = fock_state(m, mp)
    _, v = choose_alpha(psi, ControlParams(alpha_bar), lp, table)
    assert v <= V(psi, lp) - 0.75 * abs(f2_curvature(psi, lp)) * alpha_bar**2


def test_default_delta_traps_some_levels(mp, lp, table):
    # with the default delta the measurement term's curvature dominates at |4>
    alpha, _ = choose_alpha(fock_state(4, mp), ControlParams(0.2), lp, table)
    assert alpha == 0.0


class TestLandscape:
    def test_target_minimum_at_zero(self, mp, lp, table):
        pts = landscape(fock_state(mp.n_bar, mp), ControlParams(0.05), lp, table)
        alphas, vals = zip(*pts)
        assert alphas[int(np.argmin(vals))] == 0.0

    @pytest.mark.parametrize("m", [0, 3, 6, 11])
    def test_even_for_fock_states(self, mp, lp, cp, table, m):
        vals = [v for _, v in landscape(fock_state(m, mp), cp, lp, table)]
        np.testing.assert_allclose(vals, vals[::-1], atol=1e-13)

    def test_endpoints_match_direct_evaluation(self, mp, lp, cp, table, rng):
        psi = random_state(rng, mp, support=12)
        pts = landscape(psi, cp, lp, table)
        for a, v in (pts[0], pts[-1]):
            assert v == pytest.approx(V(displacement_apply(psi, a, table), lp), abs=1e-13)

    def test_zero_alpha_bar(self, mp, lp, table, rng):
        psi = random_state(rng, mp)
        pts = landscape(psi, ControlParams(0.0, grid_points=3), lp, table)
        assert all(v == V(psi, lp) for _, v in pts)
        assert choose_alpha(psi, ControlParams(0.0), lp, table) == (0.0, V(psi, lp))
