"""Run experiments and sweeps from a validated config; persist traces, summaries and a manifest."""
from __future__ import annotations

import copy
import csv
import io
import itertools
import json
import logging
import os
import subprocess
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..algorithms import (
    ALGORITHM_IDS,
    RunResult,
    run_boss,
    run_boss_doubling,
    run_pege_independent,
    run_pege_oracle,
    run_seqrepl,
)
from ..environment import make_schedule, spawn_rng
from ..errors import ConfigError
from ..subspace_select import build_expert_set
from .config import AlgoSpec, ExperimentConfig, check_algo, parse_config, resolve_params

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("task_index", "algorithm", "Z", "per_task_regret", "cumulative_regret", "subspace_error",
                 "theta_error", "chosen_expert_index")
SUMMARY_COLUMNS = ("algorithm", "seed", "repetition", "final_regret", "mean_subspace_error_last10pct",
                   "wall_seconds", "status", "error")
AGGREGATE_COLUMNS = ("algorithm", "n_runs", "mean_final_regret", "std_final_regret", "mean_subspace_error_last10pct")
SWEEP_COLUMNS = ("rank", "algorithm", "point", "params", "mean_final_regret", "std_final_regret", "n_runs",
                 "status", "reason")
SWEEP_KEYS = ("c2", "tau1", "tau2", "alpha", "p", "eta")

# stream keys under each master seed
_ENV_STREAM, _EXPERT_STREAM, _RUN_STREAM = 0, 1, 2


def run_seed(master_seed: int, algorithm_id: str, repetition: int) -> int:
    """Integer seed of one run, derived from ``(master_seed, algorithm, repetition)``."""
    ss = np.random.SeedSequence(int(master_seed),
                                spawn_key=(_RUN_STREAM, ALGORITHM_IDS.index(algorithm_id), int(repetition)))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def mean_std(values) -> tuple[float, float]:
    """Mean and sample standard deviation (``ddof=1``; 0 for a single value)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    mean = float(x.mean())
    std = float(x.std(ddof=1)) if x.size > 1 else 0.0
    return mean, std


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def trace_rows(result: RunResult, label: str, stride: int = 1):
    cum = 0.0
    n = len(result.traces)
    for k, t in enumerate(result.traces):
        cum += t.per_task_regret
        if k % stride and k != n - 1:
            continue
        yield {
            "task_index": t.task_index,
            "algorithm": label,
            "Z": t.Z,
            "per_task_regret": float(t.per_task_regret),
            "cumulative_regret": float(cum),
            "subspace_error": float(t.subspace_error),
            "theta_error": float(t.theta_error),
            "chosen_expert_index": t.expert_index,
        }


def trace_csv(result: RunResult, label: str, stride: int = 1) -> str:
    return _csv_text(TRACE_COLUMNS, trace_rows(result, label, stride))


def tail_subspace_error(result: RunResult, fraction: float = 0.1) -> float:
    err = result.subspace_error
    k = max(1, int(round(fraction * len(err))))
    return float(err[-k:].mean())


# --------------------------------------------------------------------------
# single runs


def build_problem(cfg: ExperimentConfig, master_seed: int, repetition: int):
    """Task schedule and action set shared by every algorithm at ``(master_seed, repetition)``."""
    env = cfg.env
    kwargs = dict(d=env.d, m=env.m, N=env.N, theta_min=env.theta_min, theta_max=env.theta_max,
                  rng=spawn_rng(master_seed, _ENV_STREAM, repetition))
    if env.generator != "diverse":
        kwargs["reveal_tasks"] = env.reveals()
    return make_schedule(env.generator, **kwargs), env.ellipsoid()


def build_experts(cfg: ExperimentConfig, schedule, master_seed: int, repetition: int, with_oracle: bool):
    ex = cfg.experts
    rng = spawn_rng(master_seed, _EXPERT_STREAM, repetition)
    oracle = schedule.hidden_basis if with_oracle else None
    return build_expert_set(ex.mode, schedule.d, schedule.m, rng, ex.count, oracle=oracle, epsilon=ex.epsilon)


def execute(cfg: ExperimentConfig, spec: AlgoSpec, master_seed: int, repetition: int, problem=None) -> RunResult:
    """Run one (algorithm, seed, repetition) job and return its result."""
    schedule, E = problem if problem is not None else build_problem(cfg, master_seed, repetition)
    env = cfg.env
    seed = run_seed(master_seed, spec.id, repetition)
    params = resolve_params(spec, env)
    sigma = env.noise_std
    if spec.id in ("boss", "boss_no_oracle", "boss_doubling"):
        with_oracle = spec.id != "boss_no_oracle" and cfg.experts.include_oracle
        experts, oracle_index = build_experts(cfg, schedule, master_seed, repetition, with_oracle)
        bp = params["boss_params"]
        if spec.id == "boss_doubling":
            result = run_boss_doubling(schedule, E, env.tau, bp, experts, seed, sigma, oracle_index)
        else:
            result = run_boss(schedule, E, env.tau, bp, experts, seed, sigma, oracle_index, algorithm=spec.id)
    elif spec.id == "pege":
        result = run_pege_independent(schedule, E, env.tau, params["tau1"], seed, sigma)
    elif spec.id == "pege_oracle":
        result = run_pege_oracle(schedule, E, env.tau, params["tau2"], seed, sigma)
    elif spec.id == "seqrepl":
        result = run_seqrepl(schedule, E, env.tau, params["tau1"], params["tau2"], seed, sigma)
    else:
        raise ConfigError(f"unknown algorithm {spec.id!r}")
    result.config_digest = cfg.digest
    return result


@dataclass
class JobOutcome:
    label: str
    seed: int
    repetition: int
    result: RunResult | None
    wall_seconds: float
    error: str = ""


def _job(cfg, spec, seed, rep, out_dir, write_trace):
    t0 = time.perf_counter()
    try:
        result = execute(cfg, spec, seed, rep)
    except Exception as exc:  # one failed run must not abort the others
        log.exception("run %s seed=%s rep=%s failed", spec.label, seed, rep)
        return JobOutcome(spec.label, seed, rep, None, time.perf_counter() - t0, f"{type(exc).__name__}: {exc}")
    if write_trace:
        path = Path(out_dir) / "traces" / f"{spec.label}_seed{seed}_rep{rep}.csv"
        write_atomic(path, trace_csv(result, spec.label, cfg.trace_stride))
    return JobOutcome(spec.label, seed, rep, result, time.perf_counter() - t0)


def _run_jobs(cfg, jobs, out_dir, write_trace):
    if cfg.workers == 1 or len(jobs) == 1:
        return [_job(cfg, spec, s, r, out_dir, write_trace) for spec, s, r in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(_job, cfg, spec, s, r, out_dir, write_trace) for spec, s, r in jobs]
        return [f.result() for f in futures]


# --------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    outcomes: list
    output_dir: Path | None

    @property
    def results(self) -> dict:
        return {(o.label, o.seed, o.repetition): o.result for o in self.outcomes if o.result is not None}

    @property
    def failures(self) -> list:
        return [o for o in self.outcomes if o.result is None]

    def final_regrets(self, label: str) -> list[float]:
        return [o.result.final_regret for o in self.outcomes if o.label == label and o.result is not None]


def summary_rows(outcomes):
    for o in outcomes:
        ok = o.result is not None
        yield {
            "algorithm": o.label,
            "seed": o.seed,
            "repetition": o.repetition,
            "final_regret": o.result.final_regret if ok else float("nan"),
            "mean_subspace_error_last10pct": tail_subspace_error(o.result) if ok else float("nan"),
            "wall_seconds": round(o.wall_seconds, 3),
            "status": "ok" if ok else "failed",
            "error": o.error,
        }


def aggregate_rows(cfg, outcomes):
    for spec in cfg.algorithms:
        done = [o.result for o in outcomes if o.label == spec.label and o.result is not None]
        mean, std = mean_std([r.final_regret for r in done])
        yield {
            "algorithm": spec.label,
            "n_runs": len(done),
            "mean_final_regret": mean,
            "std_final_regret": std,
            "mean_subspace_error_last10pct": float(np.mean([tail_subspace_error(r) for r in done])) if done else float("nan"),
        }


def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True, timeout=5,
                             cwd=Path(__file__).resolve().parent)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def run_experiment(cfg: ExperimentConfig | dict, write: bool = True) -> ExperimentResult:
    """Execute every (algorithm, seed, repetition) job of ``cfg``.

    Writes ``traces/<label>_seed<s>_rep<r>.csv``, ``summary.csv``,
    ``aggregate.csv`` and ``manifest.json`` under the output directory when
    ``write`` is true.
    """
    if isinstance(cfg, dict):
        cfg = parse_config(cfg)
    out_dir = cfg.resolved_output_dir() if write else None
    jobs = [(spec, s, r) for spec in cfg.algorithms for s in cfg.seeds for r in range(cfg.repetitions)]
    outcomes = _run_jobs(cfg, jobs, out_dir, write)
    if write:
        write_atomic(out_dir / "summary.csv", _csv_text(SUMMARY_COLUMNS, summary_rows(outcomes)))
        write_atomic(out_dir / "aggregate.csv", _csv_text(AGGREGATE_COLUMNS, aggregate_rows(cfg, outcomes)))
        manifest = {
            "name": cfg.name,
            "config_digest": cfg.digest,
            "code_version": code_version(),
            "config": cfg.raw,
            "runs": [{"algorithm": o.label, "seed": o.seed, "repetition": o.repetition,
                      "run_seed": run_seed(o.seed, next(a.id for a in cfg.algorithms if a.label == o.label),
                                           o.repetition),
                      "status": "ok" if o.result is not None else "failed"} for o in outcomes],
        }
        write_atomic(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return ExperimentResult(cfg, outcomes, out_dir)


# --------------------------------------------------------------------------
# sweeps


def grid_points(grid: dict) -> list[dict]:
    params = grid.get("params", {})
    unknown = set(params) - set(SWEEP_KEYS)
    if unknown:
        raise ConfigError(f"sweep grid has unknown parameter(s) {sorted(unknown)}; allowed: {list(SWEEP_KEYS)}")
    keys = sorted(params)
    values = [params[k] if isinstance(params[k], list) else [params[k]] for k in keys]
    if any(len(v) == 0 for v in values):
        raise ConfigError("every sweep parameter needs at least one value")
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def sweep(cfg: ExperimentConfig | dict, grid: dict, write: bool = True) -> list[dict]:
    """Run every grid point for one algorithm block and rank the points by mean final regret.

    ``grid`` has keys ``algorithm`` (a label in the config), ``params`` (mapping of
    parameter name to list of values) and optionally ``seeds`` (defaults to the
    first two seeds of the config).  Invalid points are skipped with a reason.
    """
    if isinstance(cfg, dict):
        cfg = parse_config(cfg)
    unknown = set(grid) - {"algorithm", "params", "seeds"}
    if unknown:
        raise ConfigError(f"unknown sweep key(s) {sorted(unknown)}")
    label = grid.get("algorithm")
    base = next((a for a in cfg.algorithms if a.label == label), None)
    if base is None:
        raise ConfigError(f"sweep algorithm {label!r} is not a label in the config")
    seeds = tuple(grid.get("seeds", cfg.seeds[:2]))
    rows = []
    for i, point in enumerate(grid_points(grid)):
        allowed = set(base.params) | _allowed_for(base.id)
        bad = sorted(set(point) - allowed)
        params = dict(base.params)
        params.update(point)
        spec = AlgoSpec(base.id, base.label, params)
        problems = [f"{k} does not apply to {base.id}" for k in bad] or check_algo(spec, cfg.env)
        row = {"algorithm": label, "point": i, "params": json.dumps(point, sort_keys=True)}
        if problems:
            rows.append({**row, "mean_final_regret": float("nan"), "std_final_regret": float("nan"), "n_runs": 0,
                         "status": "skipped", "reason": "; ".join(problems)})
            continue
        point_cfg = _with_algorithms(cfg, [spec], seeds)
        outcomes = _run_jobs(point_cfg, [(spec, s, 0) for s in seeds], None, False)
        regrets = [o.result.final_regret for o in outcomes if o.result is not None]
        errors = [o.error for o in outcomes if o.result is None]
        mean, std = mean_std(regrets)
        rows.append({**row, "mean_final_regret": mean, "std_final_regret": std, "n_runs": len(regrets),
                     "status": "ok" if not errors else "failed", "reason": "; ".join(errors)})
    ranked = sorted(rows, key=lambda r: (r["status"] != "ok", np.nan_to_num(r["mean_final_regret"], nan=np.inf)))
    for k, r in enumerate(ranked, 1):
        r["rank"] = k
    if write:
        out = cfg.resolved_output_dir() / f"sweep_{label}.csv"
        write_atomic(out, _csv_text(SWEEP_COLUMNS, ranked))
    return ranked


def _allowed_for(algorithm_id):
    from .config import ALGO_KEYS

    return set(ALGO_KEYS[algorithm_id])


def _with_algorithms(cfg: ExperimentConfig, specs, seeds) -> ExperimentConfig:
    raw = copy.deepcopy(cfg.raw)
    raw["algorithms"] = [{"id": s.id, "label": s.label, **s.params} for s in specs]
    raw["seeds"] = list(seeds)
    raw["repetitions"] = 1
    return parse_config(raw)
