"""Run configuration: a single flat JSON document, validated on load."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .controller import ControlParams
from .ensemble import EnsembleConfig
from .fock import (
    ModelParams,
    build_displacement_table,
    check_A1,
    coherent_state,
    fock_state,
    state_from_amplitudes,
)
from .lyapunov import SIGMA0_OFFSET, LyapunovParams


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


@dataclass(frozen=True)
class RunConfig:
    theta: float = 0.25
    phi: float = 0.61
    n_bar: int = 2
    n_max: int = 40
    delta: float | str = "auto"
    sigma0_offset: float = float(SIGMA0_OFFSET)
    alpha_bar: float = 0.2
    grid_points: int = 41
    refine_tol: float | None = None
    trajectories: int = 1000
    steps: int = 200
    master_seed: int = 42
    convergence_fidelity: float = 0.99
    record_stride: int = 1
    initial: str = "coherent"  # coherent | fock | amplitudes
    initial_alpha: float | None = None  # coherent amplitude; defaults to sqrt(n_bar)
    initial_n: int | None = None
    initial_amplitudes: list | None = None
    leakage_budget: float = 1e-6
    a1_tol: float = 1e-6
    write_trajectories: bool = False
    out_dir: str = "."
    stats_file: str = "stats.csv"
    trajectories_file: str = "trajectories.csv"
    histogram_file: str = "histogram.csv"
    report_file: str = "report.json"

    def __post_init__(self):
        if self.initial == "coherent" and self.initial_alpha is None:
            object.__setattr__(self, "initial_alpha", math.sqrt(self.n_bar))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "RunConfig":
        return RunConfig.from_dict({**self.to_dict(), **kw})


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return RunConfig.from_dict(data)


@dataclass
class Setup:
    """Everything a run needs, built from a validated ``RunConfig``."""

    config: RunConfig
    model: ModelParams
    lyapunov: LyapunovParams
    control: ControlParams
    ensemble: EnsembleConfig
    table: object
    initial: object


def build(cfg: RunConfig, check_a1: bool = True) -> Setup:
    """Validate ``cfg`` and construct the simulation objects.

    All validation failures (target range, delta bound, A1 degeneracy,
    initial state) surface as ``ConfigError``.
    """
    try:
        mp = ModelParams(theta=cfg.theta, phi=cfg.phi, n_bar=cfg.n_bar, n_max=cfg.n_max)
        if check_a1:
            report = check_A1(mp, cfg.a1_tol)
            if not report.passed:
                raise ConfigError(f"assumption A1 fails: {report.describe()}")
        lp = LyapunovParams.build(mp, delta=cfg.delta, sigma0_offset=cfg.sigma0_offset)
        cp = ControlParams(alpha_bar=cfg.alpha_bar, grid_points=cfg.grid_points, refine_tol=cfg.refine_tol)
        ec = EnsembleConfig(
            trajectories=cfg.trajectories,
            steps=cfg.steps,
            master_seed=cfg.master_seed,
            convergence_fidelity=cfg.convergence_fidelity,
            record_stride=cfg.record_stride,
        )
        if cfg.leakage_budget <= 0:
            raise ConfigError("leakage_budget must be positive")
        if cfg.initial == "coherent":
            psi0 = coherent_state(cfg.initial_alpha, mp)
        elif cfg.initial == "fock":
            psi0 = fock_state(cfg.n_bar if cfg.initial_n is None else cfg.initial_n, mp)
        elif cfg.initial == "amplitudes":
            if not cfg.initial_amplitudes:
                raise ConfigError("initial='amplitudes' needs initial_amplitudes")
            psi0 = state_from_amplitudes(cfg.initial_amplitudes, mp)
        else:
            raise ConfigError(f"unknown initial state kind {cfg.initial!r}")
    except ConfigError:
        raise
    except (ValueError, IndexError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    table = build_displacement_table(mp.n_max, alpha_limit=max(cfg.alpha_bar, 1.0))
    return Setup(cfg, mp, lp, cp, ec, table, psi0)
