"""``relax-hydro`` command line.

    relax-hydro <euler|limit|sweep|verify|subsolution> --config PATH [--out DIR] [--seed N]

Exit status: 0 when every enabled check passes, 1 when a check fails,
2 on a configuration error, 3 when a solver aborts (a diagnostic dump is
written next to the report).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ConfigParseError, RunConfig, load_config
from .fields import write_snapshot
from .hyperbolic import SolverAbort, StepRecord
from .scenarios import (SWEEP_COLUMNS, Check, energy_checks, euler_run, limit_energy_check,
                        limit_run, run_sweep, subsolution_study, sweep_checks, sweep_rows,
                        verify_suites)

log = logging.getLogger("relax_hydro")

COMMANDS = ("euler", "limit", "sweep", "verify", "subsolution")
LIMIT_COLUMNS = ("step", "t", "free_energy")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, columns: Sequence[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Artifacts:
    """Collects outputs; the report is the single place that lists them."""

    def __init__(self, out: Path, fmt: str):
        self.out, self.fmt = out, fmt
        self.paths: List[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    def csv(self, name, columns, rows) -> Path:
        p = write_csv(self.out / name, columns, rows)
        self.paths.append(p)
        return p

    def snapshot(self, stem, grid, values, t) -> Path:
        p = write_snapshot(self.out / f"{stem}.{self.fmt}", grid, values, t, self.fmt)
        self.paths.append(p)
        return p

    def report(self, command: str, cfg: RunConfig, checks: List[Check], extra: Sequence[str] = ()):
        lines = [f"relax-hydro {__version__} {command}", "", "[config]"]
        lines += cfg.echo()
        if cfg.warnings:
            lines += ["", "[warnings]"] + list(cfg.warnings)
        if extra:
            lines += ["", "[results]"] + list(extra)
        lines += ["", "[checks]"] + [c.line() for c in checks]
        status = "PASS" if all(c.passed for c in checks) else "FAIL"
        lines += ["", f"overall: {status}", "", "[artifacts]"]
        lines += [f"{sha256(p)}  {p.name}" for p in self.paths]
        path = self.out / "report.txt"
        path.write_text("\n".join(lines) + "\n")
        return path


def _snapshot_states(art: Artifacts, cfg: RunConfig, snaps, prefix: str):
    if cfg.snapshots == "none":
        return
    chosen = snaps if cfg.snapshots == "all" else [snaps[-1]]
    for s in chosen:
        i = snaps.index(s) if cfg.snapshots == "all" else len(snaps) - 1
        art.snapshot(f"{prefix}_rho_{i:05d}", s.grid, s.rho, s.t)
        for a in range(s.grid.dim):
            art.snapshot(f"{prefix}_mom{a}_{i:05d}", s.grid, s.mom[a], s.t)


def cmd_euler(cfg: RunConfig, art: Artifacts):
    run = euler_run(cfg)
    art.csv("euler_steps.csv", StepRecord.CSV_COLUMNS, (r.row() for r in run.records))
    _snapshot_states(art, cfg, run.snapshots, "euler")
    extra = [f"steps = {len(run.records) - 1}", f"t_final = {run.final.t!r}",
             f"E_total_final = {run.records[-1].E_total!r}"]
    return energy_checks(run), extra


def cmd_limit(cfg: RunConfig, art: Artifacts):
    lim = limit_run(cfg)
    art.csv("limit_energy.csv", LIMIT_COLUMNS,
            ([i, t, e] for i, (t, e) in enumerate(zip(lim.energy_times, lim.free_energy))))
    if cfg.snapshots != "none":
        idx = range(len(lim.times)) if cfg.snapshots == "all" else [len(lim.times) - 1]
        for i in idx:
            art.snapshot(f"limit_rho_{i:05d}", cfg.grid, lim.rho[i], lim.times[i])
    extra = [f"steps = {len(lim.free_energy) - 1}", f"free_energy_final = {lim.free_energy[-1]!r}"]
    return [limit_energy_check(lim)], extra


def cmd_sweep(cfg: RunConfig, art: Artifacts):
    members, fit = run_sweep(cfg)
    art.csv("sweep.csv", SWEEP_COLUMNS, sweep_rows(members, fit))
    extra = [f"fitted_order = {fit.fitted_order!r}",
             "constants sup_theta/eps = " + ", ".join(f"{c:.6g}" for c in fit.constants)]
    return sweep_checks(members, fit, cfg.C_k), extra


def cmd_verify(cfg: RunConfig, art: Artifacts):
    checks = verify_suites(cfg)
    art.csv("verify.csv", ("check", "passed", "detail"),
            ([c.name, int(c.passed), c.detail] for c in checks))
    return checks, []


def cmd_subsolution(cfg: RunConfig, art: Artifacts):
    st = subsolution_study(cfg)
    art.snapshot("x0_margin", cfg.grid, st.margin, cfg.t_end)
    art.snapshot("e_gauge", cfg.grid, st.frame.e_gauge, cfg.t_end)
    extra = [f"Pi_0 = {st.Pi0!r}", f"V = {[float(v) for v in st.frame.V]}",
             f"max margin at Pi_0 = {float(np.max(st.margin))!r}"]
    return st.checks, extra


HANDLERS = {"euler": cmd_euler, "limit": cmd_limit, "sweep": cmd_sweep, "verify": cmd_verify,
            "subsolution": cmd_subsolution}


def _dump_abort(art: Artifacts, cfg: RunConfig, exc: SolverAbort):
    if exc.records:
        art.csv("abort_steps.csv", StepRecord.CSV_COLUMNS, (r.row() for r in exc.records))
    st = exc.last_state
    if st is not None and hasattr(st, "mom"):
        art.snapshot("abort_rho", st.grid, st.rho, st.t)
    elif st is not None:
        art.snapshot("abort_rho", st.grid, st.rho_bar, st.t)
    art.report("abort", cfg, [Check("solver", False, str(exc))])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relax-hydro", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--seed", type=int, help="master seed for randomized checks")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigParseError, ConfigError, OSError) as exc:
        print(f"relax-hydro: config error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        cfg = cfg.with_out(args.out)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    for w in cfg.warnings:
        log.warning(w)
    art = Artifacts(Path(cfg.out_dir), cfg.snapshot_format)
    try:
        checks, extra = HANDLERS[args.command](cfg, art)
    except SolverAbort as exc:
        _dump_abort(art, cfg, exc)
        print(f"relax-hydro: solver abort: {exc}", file=sys.stderr)
        return 3
    report = art.report(args.command, cfg, checks, extra)
    for c in checks:
        print(c.line())
    print(f"report: {report}")
    return 0 if all(c.passed for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
