"""Command-line entry point: ``levyhedge <command> --config run.json``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import warnings
from typing import Callable, Optional

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .default_dist import intensity_compensator_check, martingale_identity_check
from .hedging import HedgeRecord, hedge_error_stats, risk_free_check, uniform_dates, write_hedge_csv
from .levy_model import ModelError
from .outputs import atomic_write_text
from .operators import residual_table
from .path_sim import batch_simulate, write_paths_csv
from .quadrature import QuadratureError
from .rng import derive_seed
from .value_surface import (ValueSurface, as_surface_fn, default_grids, estimate_surface,
                            load_surface, pide_residual, save_surface)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class MissingSurfaceError(FileNotFoundError):
    pass


def write_json(path: str, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path: str, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    atomic_write_text(path, buf.getvalue())


class Run:
    """Shared state for one command: config, model, output directory, manifest."""

    def __init__(self, cfg: RunConfig, out: str, threads: int):
        self.cfg = cfg
        self.model = cfg.build_model()
        self.out = out
        self.threads = threads
        self.quad = cfg.quad_spec()
        self.files: list[str] = []
        os.makedirs(out, exist_ok=True)

    def path(self, name: str) -> str:
        p = os.path.join(self.out, name)
        self.files.append(name)
        return p

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.output.formats

    @property
    def seed(self) -> int:
        return self.cfg.mc.base_seed

    def surface_paths(self):
        return os.path.join(self.out, "surface.csv"), os.path.join(self.out, "surface.json")

    def build_surface(self) -> ValueSurface:
        cfg = self.cfg
        T = cfg.horizon
        tg, xg = default_grids(self.model, T, cfg.grids.t_nodes, cfg.grids.x_nodes, cfg.grids.x_max)
        return estimate_surface(self.model, cfg.payoff_fn(), T, tg, xg, cfg.mc.surface_paths,
                                derive_seed(self.seed, "surface"), self.threads,
                                nonmartingale_ack=not self.model.is_martingale)

    def load_or_build_surface(self, explicit: Optional[str], build: bool) -> ValueSurface:
        if explicit:
            csv_path = explicit
            json_path = os.path.splitext(explicit)[0] + ".json"
        else:
            csv_path, json_path = self.surface_paths()
        if os.path.exists(csv_path) and os.path.exists(json_path):
            return load_surface(csv_path, json_path, self.model)
        if build:
            return self.build_surface()
        raise MissingSurfaceError(f"surface file not found: {csv_path} (run `surface` first "
                                  "or set hedge.build_surface)")


def cmd_simulate(run: Run) -> dict:
    cfg, m = run.cfg, run.model
    T = cfg.horizon
    res = batch_simulate(m, T, cfg.mc.n_paths, run.seed, run.threads, retain=cfg.mc.dump_paths)
    d = np.isfinite(res.tau)
    comp = []
    for t in cfg.mc.compensator_times:
        if 0 <= t <= T:
            comp.append(intensity_compensator_check(m, t, cfg.mc.n_paths, run.seed, run.threads).to_dict())
    summary = {
        "default_rate": res.default_rate, "std_err": res.std_err, "n_paths": res.n_paths,
        "n_defaults": res.n_defaults,
        "creep_violations": int(np.count_nonzero(res.x_tau[d] >= 0) + np.count_nonzero(res.x_tau_left[d] <= 0)),
        "compensator": comp,
    }
    if run.wants("json"):
        write_json(run.path("simulate.json"), {"model": m.to_dict(), "horizon": T, **summary})
    if cfg.mc.dump_paths and run.wants("csv"):
        write_paths_csv(run.path("paths.csv"), res.paths)
    return {"default_rate": res.default_rate, "std_err": res.std_err,
            "creep_violations": summary["creep_violations"],
            "compensator_max_abs_z": max((abs(c["z"]) for c in comp), default=0.0)}


def cmd_surface(run: Run) -> dict:
    s = run.build_surface()
    csv_path, json_path = run.surface_paths()
    save_surface(s, csv_path, json_path)
    run.files += ["surface.csv", "surface.json"]
    head = {"f_0_u": None, "surface_paths": s.n_paths_per_node}
    if s.x_grid.size and np.any(s.x_grid == run.model.u):
        v, e = s.node(0.0, run.model.u)
        head["f_0_u"], head["f_0_u_se"] = v, e
    if run.model.is_martingale:
        rep = pide_residual(s, run.model, run.quad)
        head["pide_interior_pass_rate"] = rep.interior_pass_rate
        if run.wants("csv"):
            rows = residual_table(as_surface_fn(s), s.t_grid[::4], s.x_grid[::4], run.model, run.quad)
            write_csv(run.path("operators.csv"), ["t", "x", "A_f", "K_f", "L_f", "theta"],
                      [[r[c] for c in ("t", "x", "A_f", "K_f", "L_f", "theta")] for r in rows])
    if run.wants("json"):
        write_json(run.path("surface_report.json"), head)
    return head


def cmd_hedge(run: Run) -> dict:
    cfg, m = run.cfg, run.model
    s = run.load_or_build_surface(cfg.hedge.surface, cfg.hedge.build_surface)
    dates = uniform_dates(s.horizon, cfg.hedge.n_trading_dates)
    st = hedge_error_stats(m, s, cfg.hedge.n_paths, dates, derive_seed(run.seed, "hedge"),
                           run.threads, run.quad, keep_paths=cfg.hedge.dump_paths)
    if cfg.hedge.dump_paths and run.wants("csv"):
        records = []
        for X, out in st.extra.get("paths", []):
            for r in range(X.shape[0]):
                records.append(HedgeRecord(dates, X[r], out["theta"][r], out["eta"][r], out["V"][r],
                                           out["I"][r], out["L"][r], out["C"][r], float(out["payoff"][r])))
        write_hedge_csv(run.path("hedge_paths.csv"), records)
    summary = st.to_dict()
    if run.wants("json"):
        write_json(run.path("hedge_summary.json"), summary)
    return {"mean_L": st.mean_L, "mean_L_se": st.mean_L_se, "var_L": st.var_L,
            "corr_dL_dX": st.corr, "corr_se": st.corr_se,
            "max_accounting_residual": st.max_accounting_residual}


def cmd_identity(run: Run) -> dict:
    cfg = run.cfg
    seed = derive_seed(run.seed, "identity")
    reps = [martingale_identity_check(run.model, float(t), cfg.identity.n_paths, seed, run.threads)
            for t in cfg.identity.times]
    if run.wants("csv"):
        write_csv(run.path("identity.csv"), ["t", "lhs", "rhs", "se"],
                  [[r.t, r.lhs, r.rhs, r.std_err] for r in reps])
    if run.wants("json"):
        write_json(run.path("identity.json"), [r.to_dict() for r in reps])
    worst = max(reps, key=lambda r: abs(r.discrepancy) / r.std_err if r.std_err > 0 else 0.0)
    return {"status": "identity vacuous" if reps and reps[0].vacuous else
            ("discrepancy" if any(r.flagged for r in reps) else "pass"),
            "max_abs_discrepancy": max(abs(r.discrepancy) for r in reps),
            "worst_t": worst.t}


def cmd_riskfree(run: Run) -> dict:
    cfg = run.cfg
    s = run.load_or_build_surface(cfg.riskfree.surface, False)
    tp = np.linspace(0.0, s.horizon, cfg.riskfree.t_nodes)
    xp = np.linspace(0.0, s.x_grid[-1], cfg.riskfree.x_nodes)
    rep = risk_free_check(s, run.model, run.quad, (tp, xp), cfg.riskfree.tolerance)
    if run.wants("csv"):
        write_csv(run.path("riskfree.csv"), ["t", "x", "L_f"], rep.residual)
    if run.wants("json"):
        write_json(run.path("riskfree.json"), rep.to_dict())
    return rep.to_dict()


COMMANDS: dict[str, Callable[[Run], dict]] = {
    "simulate": cmd_simulate, "surface": cmd_surface, "hedge": cmd_hedge,
    "identity": cmd_identity, "riskfree": cmd_riskfree,
}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levyhedge",
                                description="Hedging of defaultable claims on a jump firm-value model")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")
    p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config)
        out = args.out or cfg.output.directory
        run = Run(cfg, out, max(1, args.threads))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            head = COMMANDS[args.command](run)
    except (ConfigError, ModelError, MissingSurfaceError) as exc:
        print(f"levyhedge: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureError as exc:
        print(f"levyhedge: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report = {
        "command": args.command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.mc.base_seed,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "headline": head,
        "files": sorted(set(run.files)),
    }
    print(json.dumps(report, indent=2, sort_keys=True, default=float))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
