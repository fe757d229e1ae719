"""Experiment harness: the exhaustive state sweep, the nine-phase experiment
driver for all three algorithm variants, tilt/position analysis sweeps, CSV
emission and the command-line interface."""

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import agent as agent_mod
from .agent import AgentHyperparams, run_training
from .config import (ConfigError, RunConfig, apply_profile, config_from_dict,
                     load_config, save_config)
from .metrics import (KPI_CSV_FIELDS, NormalizationBounds, RewardWeights,
                      THROUGHPUT_FEATURES, kpi_csv_values, normalize, reward)
from .rlenv import (CandidateGrids, Env, StateEvaluator, UavState, all_states,
                    initial_state)

CSV_VERSION = "uav-iab-csv v1"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str, name: str, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# {CSV_VERSION} {name}\n")
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Oracle sweep
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    index: int
    state: UavState
    values: tuple           # (tilt_deg, x_m, y_m, z_m)
    kpi: object
    kpi_norm: object
    reward: float
    bh_dl_rate_bps: float
    bh_ul_rate_bps: float


@dataclass
class SweepResult:
    phase: int
    load_mode: str
    rows: list
    bounds: NormalizationBounds
    argmax_index: int

    @property
    def argmax_row(self) -> SweepRow:
        return self.rows[self.argmax_index]

    @property
    def max_reward(self) -> float:
        return self.rows[self.argmax_index].reward


def derive_bounds_from_kpis(kpis) -> NormalizationBounds:
    """Min 0, max = best observed value per throughput feature."""
    bounds = {}
    for feat in THROUGHPUT_FEATURES:
        hi = max(getattr(k, feat) for k in kpis)
        bounds[feat] = (0.0, hi if hi > 0 else 1.0)
    return NormalizationBounds(bounds=bounds)


def _sweep_chunk(cfg_dict: dict, phase: int, load_mode: str, idx_list: list):
    cfg = config_from_dict(cfg_dict)
    ev = StateEvaluator(cfg, load_mode)
    states = all_states(ev.grids)
    out = []
    for i in idx_list:
        res = ev.evaluate(states[i], phase)
        out.append((i, res.kpi, res.bh_dl_rate_bps, res.bh_ul_rate_bps))
    return out


def oracle_sweep(cfg: RunConfig, phase: int, load_mode: str,
                 bounds: NormalizationBounds | None = None,
                 evaluator: StateEvaluator | None = None,
                 workers: int | None = None) -> SweepResult:
    """Evaluate every joint state of the candidate grids, in canonical order.

    Without explicit bounds, normalization bounds are derived from this
    sweep's own raw KPIs and reported in the result.
    """
    grids = CandidateGrids.from_config(cfg)
    states = all_states(grids)
    n = len(states)
    workers = workers or cfg.workers
    raw = [None] * n
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        chunks = [list(range(w, n, workers)) for w in range(workers)]
        cfg_dict = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_sweep_chunk, cfg_dict, phase, load_mode, ch)
                    for ch in chunks if ch]
            for fut in futs:
                for i, kpi, bh_dl, bh_ul in fut.result():
                    raw[i] = (kpi, bh_dl, bh_ul)
    else:
        ev = evaluator or StateEvaluator(cfg, load_mode)
        for i, s in enumerate(states):
            res = ev.evaluate(s, phase)
            raw[i] = (res.kpi, res.bh_dl_rate_bps, res.bh_ul_rate_bps)

    if bounds is None:
        bounds = derive_bounds_from_kpis([r[0] for r in raw])
    w = RewardWeights(cfg.reward_w1, cfg.reward_w2, cfg.reward_w3)
    rows = []
    best_i = 0
    best_r = -1.0
    for i, (kpi, bh_dl, bh_ul) in enumerate(raw):
        kn = normalize(kpi, bounds)
        r = reward(kn, w)
        rows.append(SweepRow(index=i, state=states[i], values=states[i].values(grids),
                             kpi=kpi, kpi_norm=kn, reward=r,
                             bh_dl_rate_bps=bh_dl, bh_ul_rate_bps=bh_ul))
        if r > best_r:
            best_r = r
            best_i = i
    return SweepResult(phase=phase, load_mode=load_mode, rows=rows,
                       bounds=bounds, argmax_index=best_i)


SWEEP_HEADER = ["index", "phase", "tilt_deg", "x_m", "y_m", "z_m",
                *KPI_CSV_FIELDS,
                *[f"{f}_norm" for f in KPI_CSV_FIELDS],
                "reward", "bh_dl_rate_bps", "bh_ul_rate_bps"]


def write_sweep_csv(result: SweepResult, path: str) -> None:
    rows = []
    for r in result.rows:
        rows.append([r.index, result.phase, *r.values,
                     *kpi_csv_values(r.kpi), *kpi_csv_values(r.kpi_norm),
                     r.reward, r.bh_dl_rate_bps, r.bh_ul_rate_bps])
    write_csv(path, f"sweep phase={result.phase} load={result.load_mode}",
              SWEEP_HEADER, rows)


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

TRACE_HEADER = ["step", "phase", "iteration", "step_in_iteration",
                "tilt_deg", "x_m", "y_m", "z_m", "action_id",
                "reward", "epsilon", *KPI_CSV_FIELDS]


@dataclass
class ExperimentResult:
    cfg: RunConfig
    bounds: NormalizationBounds
    trace: list
    per_phase: list          # (phase, n_steps, mean_reward)
    table_rows: list
    sweeps: dict             # phase -> SweepResult (when computed)


def resolve_bounds(cfg: RunConfig, load_mode: str,
                   evaluator: StateEvaluator | None = None,
                   sweeps_out: dict | None = None) -> NormalizationBounds:
    """Bounds from the config when present, else from the training-phase sweep."""
    if cfg.normalization_bounds and load_mode in cfg.normalization_bounds:
        return NormalizationBounds.from_dict(cfg.normalization_bounds[load_mode])
    sweep0 = oracle_sweep(cfg, 0, load_mode, evaluator=evaluator)
    if sweeps_out is not None:
        sweeps_out[0] = sweep0
    return sweep0.bounds


def run_experiment(cfg: RunConfig, out_dir: str | None = None) -> ExperimentResult:
    """Train the configured variant across all phases and emit the CSVs."""
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    load = cfg.load_mode
    evaluator = StateEvaluator(cfg, load)
    sweeps = {}
    bounds = resolve_bounds(cfg, load, evaluator=evaluator, sweeps_out=sweeps)

    env = Env(cfg, load, bounds, evaluator=evaluator)
    hp = AgentHyperparams.from_config(cfg)
    result = run_training(env, hp, cfg.variant, cfg.effective_agent_seed())

    grids = evaluator.grids
    trace_rows = []
    for row in result.trace:
        vals = row.state.values(grids)
        kpi_vals = kpi_csv_values(row.kpi) if row.kpi is not None else [0.0] * 6
        trace_rows.append([row.global_step, row.phase, row.iteration,
                           row.step_in_iteration, *vals, row.action_id,
                           row.reward, row.epsilon, *kpi_vals])
    write_csv(os.path.join(out_dir, "trace.csv"),
              f"trace variant={cfg.variant} load={load}", TRACE_HEADER, trace_rows)

    per_phase = []
    for phase in range(cfg.n_phases):
        rewards = [r.reward for r in result.trace if r.phase == phase]
        if rewards:
            per_phase.append((phase, len(rewards), sum(rewards) / len(rewards)))
    write_csv(os.path.join(out_dir, "per_phase_reward.csv"),
              f"per-phase mean reward variant={cfg.variant} load={load}",
              ["phase", "n_steps", "mean_reward"],
              [[p, n, m] for p, n, m in per_phase])

    validation_phases = list(range(1, cfg.n_phases)) or [0]
    table_rows = []
    if cfg.table3_optimal_row:
        for phase in validation_phases:
            if phase not in sweeps:
                sweeps[phase] = oracle_sweep(cfg, phase, load, bounds=bounds,
                                             evaluator=evaluator)
        opt_kpis = np.array([kpi_csv_values(sweeps[p].argmax_row.kpi)
                             for p in validation_phases])
        opt_reward = float(np.mean([sweeps[p].max_reward for p in validation_phases]))
        table_rows.append(["optimal-state", load, *opt_kpis.mean(axis=0).tolist(),
                           opt_reward])
    val_trace = [r for r in result.trace if r.phase in validation_phases]
    if val_trace:
        kpis = np.array([kpi_csv_values(r.kpi) for r in val_trace if r.kpi is not None])
        mean_reward = float(np.mean([r.reward for r in val_trace]))
        table_rows.append([cfg.variant, load, *kpis.mean(axis=0).tolist(), mean_reward])
    write_csv(os.path.join(out_dir, "table3.csv"),
              f"validation-phase averages load={load}",
              ["row", "load", *KPI_CSV_FIELDS, "reward"], table_rows)

    for phase, sw in sorted(sweeps.items()):
        write_sweep_csv(sw, os.path.join(out_dir, f"sweep_phase{phase}_{load}.csv"))

    echo = dataclasses.replace(cfg)
    echo.normalization_bounds = {load: bounds.to_dict()}
    save_config(echo, os.path.join(out_dir, "effective_config.json"))

    return ExperimentResult(cfg=cfg, bounds=bounds, trace=result.trace,
                            per_phase=per_phase, table_rows=table_rows, sweeps=sweeps)


# ---------------------------------------------------------------------------
# Tilt / position analysis sweeps
# ---------------------------------------------------------------------------

TILT_HEADER = ["load", "z_m", "tilt_deg", *KPI_CSV_FIELDS,
               "bh_dl_rate_bps", "bh_ul_rate_bps"]
POS_HEADER = ["load", "x_m", "y_m", *KPI_CSV_FIELDS,
              "bh_dl_rate_bps", "bh_ul_rate_bps"]


def analysis_tilt(cfg: RunConfig, phase: int = 0) -> list:
    """Tilt impact at the MC-area center for the lowest and highest heights."""
    grids = CandidateGrids.from_config(cfg)
    x_idx = grids.x_m.index(min(grids.x_m, key=abs))
    y_idx = grids.y_m.index(min(grids.y_m, key=abs))
    rows = []
    for load in ("light", "heavy"):
        ev = StateEvaluator(cfg, load)
        for z_idx in (0, len(grids.z_m) - 1):
            for t_idx in range(len(grids.tilt_deg)):
                s = UavState(t_idx, x_idx, y_idx, z_idx)
                res = ev.evaluate(s, phase)
                rows.append([load, grids.z_m[z_idx], grids.tilt_deg[t_idx],
                             *kpi_csv_values(res.kpi),
                             res.bh_dl_rate_bps, res.bh_ul_rate_bps])
    return rows


def analysis_position(cfg: RunConfig, phase: int = 0) -> list:
    """Position impact across the horizontal grid at zero tilt, lowest height."""
    grids = CandidateGrids.from_config(cfg)
    t_idx = grids.tilt_deg.index(min(grids.tilt_deg, key=abs))
    rows = []
    for load in ("light", "heavy"):
        ev = StateEvaluator(cfg, load)
        for x_idx in range(len(grids.x_m)):
            for y_idx in range(len(grids.y_m)):
                s = UavState(t_idx, x_idx, y_idx, 0)
                res = ev.evaluate(s, phase)
                rows.append([load, grids.x_m[x_idx], grids.y_m[y_idx],
                             *kpi_csv_values(res.kpi),
                             res.bh_dl_rate_bps, res.bh_ul_rate_bps])
    return rows


def analysis_sweeps(cfg: RunConfig, kind: str, out_dir: str | None = None) -> str:
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    if kind == "tilt":
        rows = analysis_tilt(cfg)
        path = os.path.join(out_dir, "analysis_tilt.csv")
        write_csv(path, "tilt analysis", TILT_HEADER, rows)
    elif kind == "position":
        rows = analysis_position(cfg)
        path = os.path.join(out_dir, "analysis_position.csv")
        write_csv(path, "position analysis", POS_HEADER, rows)
    else:
        raise ValueError(f"unknown analysis kind {kind!r}")
    return path


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _base_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.profile:
        cfg = apply_profile(cfg, args.profile)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "load", None):
        cfg.load_mode = args.load
    if getattr(args, "variant", None):
        cfg.variant = args.variant
    if args.out:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def _add_common(p):
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--profile", choices=["full", "fast"], default=None)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uav-iab",
        description="UAV relay-node network simulator with a DQN placement controller")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="exhaustive state sweep of one phase")
    p.add_argument("--phase", type=int, default=0)
    p.add_argument("--load", choices=["light", "heavy"], default=None)
    p.add_argument("--workers", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("train", help="run one training variant across all phases")
    p.add_argument("--variant", choices=["ae-vas", "vas-retrained", "baseline"],
                   default=None)
    p.add_argument("--load", choices=["light", "heavy"], default=None)
    _add_common(p)

    p = sub.add_parser("analyze", help="tilt or position analysis sweep")
    p.add_argument("kind", choices=["tilt", "position"])
    p.add_argument("--load", choices=["light", "heavy"], default=None)
    _add_common(p)

    p = sub.add_parser("validate-config", help="check a config file")
    p.add_argument("--config", required=True)

    args = parser.parse_args(argv)

    if args.command == "validate-config":
        try:
            cfg = load_config(args.config)
        except ConfigError as e:
            print(str(e), file=sys.stderr)
            return 1
        print("config OK")
        return 0

    try:
        cfg = _base_cfg(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return 1

    os.makedirs(cfg.out_dir, exist_ok=True)
    if args.command == "sweep":
        workers = args.workers or cfg.workers
        result = oracle_sweep(cfg, args.phase, cfg.load_mode, workers=workers)
        path = os.path.join(cfg.out_dir,
                            f"sweep_phase{args.phase}_{cfg.load_mode}.csv")
        write_sweep_csv(result, path)
        save_config(cfg, os.path.join(cfg.out_dir, "effective_config.json"))
        best = result.argmax_row
        print(f"wrote {path}")
        print(f"argmax state (tilt,x,y,z) = {best.values}, reward = {best.reward:.4f}")
    elif args.command == "train":
        res = run_experiment(cfg)
        print(f"wrote outputs to {cfg.out_dir}")
        for row in res.table_rows:
            print(f"  {row[0]}: mean validation reward = {row[-1]:.4f}")
    elif args.command == "analyze":
        path = analysis_sweeps(cfg, args.kind)
        save_config(cfg, os.path.join(cfg.out_dir, "effective_config.json"))
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
