"""Closed-loop Markov chain: QND measurement, then feedback displacement."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controller import ControlParams, choose_alpha
from .fock import DisplacementTable, ModelParams, branch_probabilities, collapse, displacement_apply
from .lyapunov import LyapunovParams, V

DEFAULT_LEAKAGE_BUDGET = 1e-6


class LeakageError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepRecord:
    step_index: int
    outcome: str
    p_g: float
    alpha: float
    v_before: float
    v_half: float
    v_after: float
    fidelity: float
    leakage: float
    concentration: float = float("nan")  # max_n |c_n|^2 after the step


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    aborted: bool = False
    cumulative_leakage: float = 0.0


def displacement_leakage(state: np.ndarray, alpha: float) -> float:
    """First-order weight an untruncated ``D_alpha`` would push past ``n_max``."""
    return float(alpha * alpha * state.size * abs(state[-1]) ** 2)


def markov_step(
    state: np.ndarray,
    rng: np.random.Generator,
    cp: ControlParams,
    lp: LyapunovParams,
    mp: ModelParams,
    table: DisplacementTable,
    step_index: int = 0,
):
    """One transition. Consumes exactly one uniform draw: ``u < P_g`` selects g."""
    p_g, p_e = branch_probabilities(state, mp)
    u = rng.random()
    outcome = "g" if (u < p_g or p_e == 0) else "e"
    half, _ = collapse(state, outcome, mp)
    alpha, _ = choose_alpha(half, cp, lp, table)
    nxt = displacement_apply(half, alpha, table)
    rec = StepRecord(
        step_index=step_index,
        outcome=outcome,
        p_g=p_g,
        alpha=alpha,
        v_before=V(state, lp),
        v_half=V(half, lp),
        v_after=V(nxt, lp),
        fidelity=float(abs(nxt[mp.n_bar]) ** 2),
        leakage=displacement_leakage(half, alpha),
        concentration=float(np.max(np.abs(nxt) ** 2)),
    )
    return nxt, rec


def expected_next_value(
    state: np.ndarray,
    cp: ControlParams,
    lp: LyapunovParams,
    mp: ModelParams,
    table: DisplacementTable,
) -> float:
    """``E[V(psi_{k+1}) | psi_k = state]`` as an exact two-outcome sum."""
    total = 0.0
    for s in ("g", "e"):
        try:
            half, prob = collapse(state, s, mp)
        except ValueError:
            continue
        _, v_star = choose_alpha(half, cp, lp, table)
        total += prob * v_star
    return total


def simulate_trajectory(
    initial: np.ndarray,
    steps: int,
    seed,
    cp: ControlParams,
    lp: LyapunovParams,
    mp: ModelParams,
    table: DisplacementTable,
    leakage_budget: float = DEFAULT_LEAKAGE_BUDGET,
) -> Trajectory:
    """Run ``steps`` transitions; ``seed`` is anything ``np.random.default_rng`` accepts.

    Exceeding the cumulative leakage budget stops the run with
    ``aborted=True`` and the records produced so far.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    rng = np.random.default_rng(seed)
    traj = Trajectory()
    state = initial
    for k in range(steps):
        state, rec = markov_step(state, rng, cp, lp, mp, table, step_index=k + 1)
        traj.records.append(rec)
        traj.cumulative_leakage += rec.leakage
        if traj.cumulative_leakage > leakage_budget:
            traj.aborted = True
            break
    traj.final_state = state
    return traj
