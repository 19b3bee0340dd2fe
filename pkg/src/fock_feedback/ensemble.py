"""Monte Carlo ensembles of closed-loop trajectories and their audits.

Per-trajectory random streams come from
``np.random.SeedSequence(master_seed, spawn_key=(index,))`` feeding a PCG64
generator, i.e. exactly what ``SeedSequence(master_seed).spawn(n)[index]``
yields. Results are reduced in trajectory-index order, so statistics do not
depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .controller import ControlParams
from .fock import DisplacementTable, ModelParams
from .lyapunov import LyapunovParams, V
from .markov import DEFAULT_LEAKAGE_BUDGET, simulate_trajectory

MAX_ABORT_FRACTION = 0.01


@dataclass(frozen=True)
class EnsembleConfig:
    trajectories: int
    steps: int
    master_seed: int = 42
    convergence_fidelity: float = 0.99
    record_stride: int = 1

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if not 0 < self.convergence_fidelity < 1:
            raise ValueError("convergence_fidelity must lie in (0, 1)")

    def recorded_steps(self) -> np.ndarray:
        steps = list(range(0, self.steps + 1, self.record_stride))
        if steps[-1] != self.steps:
            steps.append(self.steps)
        return np.array(steps)


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


class EnsembleError(RuntimeError):
    pass


@dataclass
class TrajectorySummary:
    """Per-trajectory series on the recorded steps, plus whole-run extremes."""

    index: int
    v: np.ndarray
    fidelity: np.ndarray
    max_pop: np.ndarray
    leakage: np.ndarray
    running_max_v: float
    final_state: np.ndarray
    aborted: bool
    records: list


def _run_one(index, initial, cfg: EnsembleConfig, cp, lp, mp, table, leakage_budget, keep_records):
    traj = simulate_trajectory(
        initial, cfg.steps, trajectory_seed(cfg.master_seed, index), cp, lp, mp, table, leakage_budget
    )
    recs = traj.records
    # full per-step series; an aborted run holds its last values
    n = cfg.steps + 1
    pop0 = np.abs(initial) ** 2
    v_all = np.full(n, np.nan)
    fid_all = np.full(n, np.nan)
    max_all = np.full(n, np.nan)
    leak_all = np.zeros(n)
    v_all[0], fid_all[0], max_all[0] = V(initial, lp), pop0[mp.n_bar], pop0.max()
    for r in recs:
        k = r.step_index
        v_all[k], fid_all[k], max_all[k], leak_all[k] = r.v_after, r.fidelity, r.concentration, r.leakage
    last = len(recs)
    for arr in (v_all, fid_all, max_all):
        arr[last + 1 :] = arr[last]
    sel = cfg.recorded_steps()
    return TrajectorySummary(
        index=index,
        v=v_all[sel],
        fidelity=fid_all[sel],
        max_pop=max_all[sel],
        leakage=leak_all[sel],
        running_max_v=float(v_all.max()),
        final_state=traj.final_state,
        aborted=traj.aborted,
        records=[r for r in recs if r.step_index % cfg.record_stride == 0] if keep_records else [],
    )


@dataclass
class EnsembleStats:
    steps: np.ndarray
    mean_v: np.ndarray
    se_v: np.ndarray
    mean_fidelity: np.ndarray
    conv_fraction: np.ndarray
    fock_fraction: np.ndarray
    mean_leakage: np.ndarray
    histogram: np.ndarray  # final dominant Fock index counts


@dataclass
class EnsembleResult:
    config: EnsembleConfig
    stats: EnsembleStats
    initial_v: float
    running_max_v: np.ndarray
    final_states: np.ndarray
    aborted: np.ndarray
    records: dict = field(default_factory=dict)  # trajectory index -> list[StepRecord]


def _mean_fixed_order(x: np.ndarray) -> np.ndarray:
    return np.add.reduce(x, axis=0) / x.shape[0]


def _aggregate(summaries, cfg: EnsembleConfig, mp: ModelParams, table_dim: int) -> EnsembleStats:
    v = np.stack([s.v for s in summaries])
    fid = np.stack([s.fidelity for s in summaries])
    leak = np.stack([s.leakage for s in summaries])
    n = v.shape[0]
    mean_v = _mean_fixed_order(v)
    if n > 1:
        var = _mean_fixed_order((v - mean_v) ** 2) * n / (n - 1)
        se_v = np.sqrt(var / n)
    else:
        se_v = np.zeros_like(mean_v)
    thr = cfg.convergence_fidelity
    fock = np.stack([s.max_pop for s in summaries])
    final_dom = np.array([int(np.argmax(np.abs(s.final_state) ** 2)) for s in summaries])
    return EnsembleStats(
        steps=cfg.recorded_steps(),
        mean_v=mean_v,
        se_v=se_v,
        mean_fidelity=_mean_fixed_order(fid),
        conv_fraction=_mean_fixed_order((fid > thr).astype(float)),
        fock_fraction=_mean_fixed_order((fock > thr).astype(float)),
        mean_leakage=_mean_fixed_order(leak),
        histogram=np.bincount(final_dom, minlength=table_dim),
    )


def run_ensemble(
    cfg: EnsembleConfig,
    initial: np.ndarray,
    cp: ControlParams,
    lp: LyapunovParams,
    mp: ModelParams,
    table: DisplacementTable,
    workers: int = 1,
    leakage_budget: float = DEFAULT_LEAKAGE_BUDGET,
    keep_records: bool = False,
) -> EnsembleResult:
    """Run ``cfg.trajectories`` independent trajectories from ``initial``."""
    job = partial(
        _run_one,
        initial=initial,
        cfg=cfg,
        cp=cp,
        lp=lp,
        mp=mp,
        table=table,
        leakage_budget=leakage_budget,
        keep_records=keep_records,
    )
    indices = range(cfg.trajectories)
    if workers <= 1:
        summaries = [job(i) for i in indices]
    else:
        chunk = max(1, cfg.trajectories // (4 * workers))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            summaries = list(pool.map(job, indices, chunksize=chunk))
    aborted = np.array([s.aborted for s in summaries])
    if aborted.mean() > MAX_ABORT_FRACTION:
        raise EnsembleError(
            f"{int(aborted.sum())} of {aborted.size} trajectories exceeded the leakage budget"
        )
    return EnsembleResult(
        config=cfg,
        stats=_aggregate(summaries, cfg, mp, mp.dim),
        initial_v=V(initial, lp),
        running_max_v=np.array([s.running_max_v for s in summaries]),
        final_states=np.stack([s.final_state for s in summaries]),
        aborted=aborted,
        records={s.index: s.records for s in summaries} if keep_records else {},
    )


@dataclass
class DoobReport:
    gamma: float
    initial_v: float
    bound: float
    exceed_fraction: float
    se: float
    passed: bool


def doob_audit(result: EnsembleResult, gamma: float) -> DoobReport:
    """Compare the fraction of runs whose ``V`` ever reaches ``gamma`` with ``V(x)/gamma``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    bound = result.initial_v / gamma
    n = result.running_max_v.size
    frac = float(np.mean(result.running_max_v >= gamma))
    p = min(bound, 1.0)
    se = math.sqrt(p * (1 - p) / n)
    return DoobReport(
        gamma=gamma,
        initial_v=result.initial_v,
        bound=bound,
        exceed_fraction=frac,
        se=se,
        passed=frac <= bound + 3 * se,
    )


@dataclass
class ConcentrationReport:
    threshold: float
    fraction: float
    histogram: np.ndarray
    target_mass: float


def fock_concentration_audit(final_states: np.ndarray, n_bar: int, threshold: float = 0.99) -> ConcentrationReport:
    pops = np.abs(np.asarray(final_states)) ** 2
    dom = np.argmax(pops, axis=1)
    hist = np.bincount(dom, minlength=pops.shape[1])
    return ConcentrationReport(
        threshold=threshold,
        fraction=float(np.mean(pops.max(axis=1) > threshold)),
        histogram=hist,
        target_mass=float(hist[n_bar] / pops.shape[0]),
    )
