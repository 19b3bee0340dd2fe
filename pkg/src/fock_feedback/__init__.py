"""Measurement-based feedback stabilization of a photon-number state."""

from .config import ConfigError, RunConfig, build, load_config
from .controller import ControlParams, choose_alpha, landscape
from .ensemble import EnsembleConfig, doob_audit, fock_concentration_audit, run_ensemble
from .fock import (
    ModelParams,
    build_displacement_table,
    check_A1,
    coherent_state,
    collapse,
    displacement_apply,
    fock_state,
)
from .lyapunov import LyapunovParams, k2_closed_form, lyapunov_value, sigma_table
from .markov import expected_next_value, markov_step, simulate_trajectory

__version__ = "0.1.0"
