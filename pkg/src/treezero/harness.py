"""Run orchestration: per-seed training runs, the metrics CSV, summaries.

Layout under an output root:

    <root>/<group>/seed_<s>/config.json      effective config, reloadable
    <root>/<group>/seed_<s>/metrics.csv      one row per evaluation
    <root>/<group>/seed_<s>/checkpoint_final.npz
    <root>/summary.csv                       per-group aggregates
    <root>/envelope_<group>.csv              per-step mean/min/max across seeds

where <group> is "<preset>_<env>" (grid size appended for minigrid). The
metrics schema is fixed; seeds are independent runs and may execute in a
process pool (results are identical either way, every RNG derives from the
run seed).
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, config_from_dict, save_config
from .networks import save_checkpoint
from .presets import build_config
from .trainer import EvalRecord, Trainer

CSV_COLUMNS = (
    "step", "eval_mean", "eval_min", "eval_max",
    "loss_real_value", "loss_real_policy", "loss_sim_value", "loss_sim_policy",
    "alpha", "beta", "gamma_w", "delta", "buffer_games",
)

FINAL_WINDOW = 10   # evaluations averaged into the "final reward" of a run


def group_name(config: RunConfig) -> str:
    env = config.env
    if env == "minigrid":
        env = f"minigrid{config.grid_size}"
    return f"{config.preset}_{env}"


def record_row(record: EvalRecord) -> list:
    return [getattr(record, col) for col in CSV_COLUMNS]


def run_one(config: RunConfig, run_dir, verbose: bool = True) -> dict:
    """Train one seed, streaming metrics to CSV. Returns a small summary."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "config.json")
    trainer = Trainer(config)
    csv_path = run_dir / "metrics.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)

        def sink(record: EvalRecord):
            writer.writerow(record_row(record))
            fh.flush()
            if verbose:
                print(f"[{group_name(config)} seed={config.seed}] "
                      f"step={record.step} eval_mean={record.eval_mean:.2f}",
                      flush=True)
            if (config.checkpoint_interval > 0
                    and record.step % config.checkpoint_interval == 0):
                _save(trainer, config, run_dir / f"checkpoint_{record.step}.npz")

        result = trainer.run(record_sink=sink)
    _save(trainer, config, run_dir / "checkpoint_final.npz")
    finals = [r.eval_mean for r in result.records[-FINAL_WINDOW:]]
    summary = {
        "seed": config.seed,
        "steps": result.steps,
        "solved_at": result.solved_at,
        "final_reward": float(np.mean(finals)) if finals else math.nan,
    }
    if verbose:
        print(f"[{group_name(config)} seed={config.seed}] done: "
              f"final={summary['final_reward']:.2f} solved_at={result.solved_at}",
              flush=True)
    return summary


def _save(trainer: Trainer, config: RunConfig, path):
    save_checkpoint(path, trainer.net,
                    meta={"config_json": json.dumps(config.to_dict(), sort_keys=True),
                          "step": trainer.steps})


def _run_job(config_dict: dict, run_dir: str, verbose: bool) -> dict:
    return run_one(config_from_dict(config_dict), run_dir, verbose=verbose)


def run_many(configs: list[RunConfig], out_root, mode: str = "sequential",
             verbose: bool = True) -> list[dict]:
    """Run each config under <out_root>/<group>/seed_<seed>. Returns the
    per-run summaries; raises if any run fails."""
    out_root = Path(out_root)
    jobs = [(cfg, out_root / group_name(cfg) / f"seed_{cfg.seed}") for cfg in configs]
    if mode == "sequential":
        results = [run_one(cfg, run_dir, verbose=verbose) for cfg, run_dir in jobs]
    elif mode == "concurrent":
        with ProcessPoolExecutor() as pool:
            futures = [pool.submit(_run_job, cfg.to_dict(), str(run_dir), verbose)
                       for cfg, run_dir in jobs]
            results = [f.result() for f in futures]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    summarize(out_root)
    return results


def run_preset(preset: str, env: str, seeds, out_root, grid_size: int = 4,
               overrides: dict | None = None, mode: str = "sequential",
               verbose: bool = True) -> list[dict]:
    configs = [build_config(preset, env, grid_size=grid_size, seed=s,
                            overrides=overrides) for s in seeds]
    return run_many(configs, out_root, mode=mode, verbose=verbose)


# ---------------------------------------------------------------------------
# summaries

def read_metrics(path) -> list[dict]:
    with open(path) as fh:
        rows = []
        for raw in csv.DictReader(fh):
            row = {k: float(v) for k, v in raw.items()}
            row["step"] = int(raw["step"])
            rows.append(row)
    return rows


def solved_step_from_rows(rows: list[dict], threshold, window: int) -> int | None:
    """First step whose trailing `window` evaluations average at or above
    the threshold (evaluations carry equal episode counts, so the mean of
    means is the pooled mean)."""
    if threshold is None:
        return None
    means = [r["eval_mean"] for r in rows]
    for i in range(window - 1, len(means)):
        if np.mean(means[i - window + 1:i + 1]) >= threshold:
            return rows[i]["step"]
    return None


def summarize(out_root, final_window: int = FINAL_WINDOW) -> list[dict]:
    """Aggregate every <group>/seed_* under `out_root` into summary.csv and
    one envelope file per group. Returns the summary rows."""
    out_root = Path(out_root)
    groups = {}
    for csv_path in sorted(out_root.glob("*/seed_*/metrics.csv")):
        groups.setdefault(csv_path.parent.parent.name, []).append(csv_path)
    summary_rows = []
    for group, paths in sorted(groups.items()):
        finals, solved, per_seed_rows = [], [], []
        for path in paths:
            rows = read_metrics(path)
            if not rows:
                continue
            per_seed_rows.append(rows)
            finals.append(np.mean([r["eval_mean"] for r in rows[-final_window:]]))
            cfg_path = path.parent / "config.json"
            threshold, window = None, 5
            if cfg_path.exists():
                cfg = json.loads(cfg_path.read_text())
                threshold = cfg.get("solved_threshold")
                window = cfg.get("solved_window_evals", 5)
            solved.append(solved_step_from_rows(rows, threshold, window))
        if not finals:
            continue
        solved_steps = [s for s in solved if s is not None]
        summary_rows.append({
            "group": group,
            "runs": len(finals),
            "final_reward_mean": float(np.mean(finals)),
            "final_reward_std": float(np.std(finals)),   # population stddev
            "solved_runs": len(solved_steps),
            "solved_steps_mean": float(np.mean(solved_steps)) if solved_steps else "",
        })
        _write_envelope(out_root / f"envelope_{group}.csv", per_seed_rows)
    with open(out_root / "summary.csv", "w", newline="") as fh:
        fh.write(f"# final_reward = mean eval reward over the final {final_window} "
                 "evaluations of each run; std is the population stddev across runs\n")
        writer = csv.DictWriter(fh, fieldnames=["group", "runs", "final_reward_mean",
                                                "final_reward_std", "solved_runs",
                                                "solved_steps_mean"])
        writer.writeheader()
        writer.writerows(summary_rows)
    return summary_rows


def _write_envelope(path, per_seed_rows: list[list[dict]]):
    by_step = {}
    for rows in per_seed_rows:
        for r in rows:
            by_step.setdefault(r["step"], []).append(r["eval_mean"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "eval_mean", "eval_min", "eval_max", "seeds"])
        for step in sorted(by_step):
            vals = by_step[step]
            writer.writerow([step, float(np.mean(vals)), float(np.min(vals)),
                             float(np.max(vals)), len(vals)])
