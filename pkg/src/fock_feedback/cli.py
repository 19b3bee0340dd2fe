"""Command-line entry point: ``simulate``, ``verify`` and ``sweep``.

Exit codes: 0 success, 1 failed verification check, 2 invalid configuration
(or oversize sweep grid), 3 leakage-budget abort.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, build, load_config
from .ensemble import EnsembleError, doob_audit, fock_concentration_audit, run_ensemble
from .verify import run_checks

log = logging.getLogger("fock_feedback")

WORKERS_ENV = "FOCK_FEEDBACK_WORKERS"
STATS_COLUMNS = ["step", "mean_V", "se_V", "mean_fidelity", "conv_fraction", "fock_fraction", "mean_leakage"]
TRAJECTORY_COLUMNS = [
    "traj_id", "step", "outcome", "p_g", "alpha", "v_before", "v_half", "v_after", "fidelity", "leakage",
]
SWEEP_KEYS = ("alpha_bar", "delta", "n_max", "steps")
DEFAULT_MAX_CELLS = 64

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_LEAKAGE = 0, 1, 2, 3


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def stats_rows(stats):
    for i, step in enumerate(stats.steps):
        yield [
            step, stats.mean_v[i], stats.se_v[i], stats.mean_fidelity[i],
            stats.conv_fraction[i], stats.fock_fraction[i], stats.mean_leakage[i],
        ]


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    return int(os.environ.get(WORKERS_ENV, "1"))


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.out_dir is not None:
        over["out_dir"] = args.out_dir
    return cfg.with_overrides(**over) if over else cfg


def simulate(cfg: RunConfig, workers: int = 1) -> dict:
    """Run one ensemble and write its CSV/JSON outputs; returns the report dict."""
    setup = build(cfg)
    result = run_ensemble(
        setup.ensemble, setup.initial, setup.control, setup.lyapunov, setup.model, setup.table,
        workers=workers, leakage_budget=cfg.leakage_budget, keep_records=cfg.write_trajectories,
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / cfg.stats_file, STATS_COLUMNS, stats_rows(result.stats))
    write_csv(out / cfg.histogram_file, ["n", "count"], enumerate(result.stats.histogram))
    if cfg.write_trajectories:
        rows = (
            [tid, r.step_index, r.outcome, r.p_g, r.alpha, r.v_before, r.v_half, r.v_after, r.fidelity, r.leakage]
            for tid in sorted(result.records)
            for r in result.records[tid]
        )
        write_csv(out / cfg.trajectories_file, TRAJECTORY_COLUMNS, rows)
    report = {
        "effective_config": cfg.to_dict(),
        "delta": setup.lyapunov.delta,
        "initial_V": result.initial_v,
        "aborted_trajectories": int(result.aborted.sum()),
    }
    if result.initial_v > 0:
        doob = doob_audit(result, 10 * result.initial_v)
        report["doob"] = {k: (bool(v) if k == "passed" else v) for k, v in vars(doob).items()}
    conc = fock_concentration_audit(result.final_states, setup.model.n_bar, cfg.convergence_fidelity)
    report["concentration"] = {
        "threshold": conc.threshold,
        "fraction": conc.fraction,
        "target_mass": conc.target_mass,
        "histogram": conc.histogram.tolist(),
    }
    (out / cfg.report_file).write_text(json.dumps(report, indent=2) + "\n")
    (out / "effective_config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    return report


def cmd_simulate(args) -> int:
    cfg = _load(args)
    try:
        simulate(cfg, _workers(args))
    except EnsembleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LEAKAGE
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    setup = build(cfg)
    results = run_checks(setup, seed=cfg.master_seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def sweep_cells(spec: dict):
    """Grid cells in lexicographic order: keys sorted by name, values as listed."""
    grid = spec.get("grid", {})
    bad = sorted(set(grid) - set(SWEEP_KEYS))
    if bad:
        raise ConfigError(f"sweep grid keys not supported: {', '.join(bad)}")
    keys = sorted(grid)
    for values in itertools.product(*(grid[k] for k in keys)):
        yield dict(zip(keys, values))


def cmd_sweep(args) -> int:
    try:
        spec = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep spec {args.config}: {exc}") from exc
    unknown = sorted(set(spec) - {"base", "grid", "max_cells", "summary_file"})
    if unknown:
        raise ConfigError(f"unknown sweep spec keys: {', '.join(unknown)}")
    base = RunConfig.from_dict(spec.get("base", {}))
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.out_dir is not None:
        over["out_dir"] = args.out_dir
    base = base.with_overrides(**over)
    cells = list(sweep_cells(spec))
    cap = spec.get("max_cells", DEFAULT_MAX_CELLS)
    if len(cells) > cap:
        raise ConfigError(f"sweep grid has {len(cells)} cells, cap is {cap}")
    keys = sorted(spec.get("grid", {}))
    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, cell in enumerate(cells):
        cell_dir = out / f"cell_{i:03d}"
        cfg = base.with_overrides(**cell, out_dir=str(cell_dir))
        prefix = [i] + [cell[k] for k in keys]
        try:
            report = simulate(cfg, _workers(args))
        except ConfigError as exc:
            log.warning("cell %d skipped: %s", i, exc)
            rows.append(prefix + ["skipped"] + [""] * (len(STATS_COLUMNS) + 1))
            continue
        except EnsembleError as exc:
            log.warning("cell %d aborted: %s", i, exc)
            rows.append(prefix + ["leakage_abort"] + [""] * (len(STATS_COLUMNS) + 1))
            continue
        with open(cell_dir / cfg.stats_file) as fh:
            last = list(csv.reader(fh))[-1]
        rows.append(prefix + ["ok"] + last + [fmt(report["concentration"]["target_mass"])])
    header = ["cell"] + keys + ["status"] + STATS_COLUMNS + ["target_mass"]
    with open(out / spec.get("summary_file", "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else fmt(x) for x in row])
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fock-feedback", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, func, target in (
        ("simulate", cmd_simulate, "config"),
        ("verify", cmd_verify, "config"),
        ("sweep", cmd_sweep, "sweep spec"),
    ):
        sp = sub.add_parser(name)
        sp.add_argument("config", help=f"path to the JSON {target}")
        sp.add_argument("--out-dir", default=None)
        sp.add_argument("--seed", type=int, default=None, help="overrides master_seed")
        sp.add_argument("--workers", type=int, default=None, help=f"worker processes (env {WORKERS_ENV})")
        sp.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
