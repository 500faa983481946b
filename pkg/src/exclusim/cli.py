"""Command-line entry point.

    exclusim simulate|operators|pde|convergence|flux|replacement \
        --config cfg.json [--seed N] [--jobs K] [--out DIR]

Exit codes: 0 all verdicts pass, 1 verdict failure, 2 configuration refusal.
The master seed resolves as CLI flag > EXCLUSIM_SEED environment variable >
config file > default.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .harness import (
    ExperimentConfig,
    emit_reports,
    constants_table,
    run_barrier_flux_experiment,
    run_convergence_experiment,
    run_operator_convergence,
    run_pde_report,
    run_replacement_residual,
    run_simulate_experiment,
)
from .pde import UnsupportedRegimeError

_RUNNERS = {
    "simulate": run_simulate_experiment,
    "operators": run_operator_convergence,
    "convergence": run_convergence_experiment,
    "flux": run_barrier_flux_experiment,
    "replacement": run_replacement_residual,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="exclusim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("simulate", "operators", "pde", "convergence", "flux", "replacement"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--seed", type=int, default=None, help="master seed override")
        sp.add_argument("--jobs", type=int, default=None, help="replica worker cap")
        sp.add_argument("--out", default=None, help="output directory (default: ./exclusim-out)")
    return ap


def _resolve_seed(cli_seed):
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get("EXCLUSIM_SEED")
    if env is not None:
        return int(env)
    return None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    started = time.time()
    out_dir = Path(args.out or "exclusim-out")
    try:
        cfg = ExperimentConfig.from_file(
            args.config,
            experiment=args.command,
            seed=_resolve_seed(args.seed),
            jobs=args.jobs,
        )
    except (ValueError, OSError) as exc:
        print(f"configuration refused: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "pde":
            report, grid_lines = run_pde_report(cfg)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "pde_grid.csv").write_text("\n".join(grid_lines) + "\n")
            reports = [report]
        else:
            reports = [_RUNNERS[args.command](cfg)]
        if args.command == "operators":
            from .harness import operators_table_csv

            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "operators_table.csv").write_text(operators_table_csv(reports[0]))
        if args.command == "simulate" and cfg.params.get("dump_snapshots"):
            from .harness import dump_trajectory_snapshots

            out_dir.mkdir(parents=True, exist_ok=True)
            for p in dump_trajectory_snapshots(cfg, out_dir):
                print(f"snapshot dump: {p}")
    except UnsupportedRegimeError as exc:
        print(f"configuration refused: {exc}", file=sys.stderr)
        return 2

    summary = emit_reports(
        reports,
        out_dir,
        config_echo=cfg.echo(),
        seed=cfg.params["seed"],
        started=started,
        constants=constants_table(cfg),
    )
    all_pass = all(v.get("passed", False) for v in summary["verdicts"].values())
    for name, verd in summary["verdicts"].items():
        status = "PASS" if verd.get("passed") else "FAIL"
        print(f"[{status}] {name}: " + ", ".join(f"{k}={v}" for k, v in verd.items() if k != "passed"))
    print(f"reports written to {out_dir}")
    return 0 if all_pass else 1


if __name__ == "__main__":
    sys.exit(main())
