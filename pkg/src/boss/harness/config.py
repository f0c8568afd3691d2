"""Experiment configuration: YAML schema, strict validation, defaults and digest."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..algorithms import ALGORITHM_IDS, theorem1_params
from ..environment import GENERATOR_IDS, Ellipsoid, default_reveal_tasks
from ..errors import ConfigError
from ..subspace_select import EXPERT_MODES, CostParams

OUTPUT_ROOT_ENV = "BOSS_OUTPUT_ROOT"

TOP_KEYS = {"name", "environment", "experts", "algorithms", "seeds", "repetitions", "output_dir", "workers",
            "trace_stride"}
ENV_KEYS = {"generator", "N", "tau", "d", "m", "theta_min", "theta_max", "reveal_tasks", "noise_std", "action_set"}
EXPERT_KEYS = {"mode", "count", "include_oracle", "epsilon"}
BOSS_KEYS = {"c2", "p", "tau1", "tau2", "alpha", "eta"}
ALGO_KEYS = {
    "boss": BOSS_KEYS,
    "boss_no_oracle": BOSS_KEYS,
    "boss_doubling": BOSS_KEYS,
    "pege": {"tau1"},
    "pege_oracle": {"tau2"},
    "seqrepl": {"tau1", "tau2"},
}
BOSS_FAMILY = ("boss", "boss_no_oracle", "boss_doubling")


class ConfigValidationError(ConfigError):
    """Raised with every violated constraint listed in ``problems``."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class EnvSpec:
    generator: str
    N: int
    tau: int
    d: int
    m: int
    theta_min: float = 0.8
    theta_max: float = 1.0
    reveal_tasks: tuple | None = None
    noise_std: float = 1.0
    action_set: dict = field(default_factory=lambda: {"kind": "sphere"})

    def ellipsoid(self) -> Ellipsoid:
        if self.action_set.get("kind") == "diagonal":
            return Ellipsoid.diagonal(self.action_set["diag"])
        return Ellipsoid.sphere(self.d)

    def reveals(self) -> list[int]:
        if self.reveal_tasks is not None:
            return list(self.reveal_tasks)
        return default_reveal_tasks(self.N, self.m)


@dataclass(frozen=True)
class ExpertSpec:
    mode: str = "random"
    count: int = 100_000
    include_oracle: bool = True
    epsilon: float | None = None


@dataclass(frozen=True)
class AlgoSpec:
    id: str
    label: str
    params: dict


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env: EnvSpec
    experts: ExpertSpec
    algorithms: tuple
    seeds: tuple
    repetitions: int
    output_dir: str
    workers: int
    trace_stride: int
    raw: dict

    @property
    def digest(self) -> str:
        return config_digest(self.raw)

    def resolved_output_dir(self) -> Path:
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            return Path(root) / out
        return out


def config_digest(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()


def _is_int(x):
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_num(x):
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool)


def resolve_params(spec: AlgoSpec, env: EnvSpec) -> dict:
    """Concrete hyperparameters for one algorithm, filling defaults from the closed forms."""
    N, tau, d, m = env.N, env.tau, env.d, env.m
    params = dict(spec.params)
    if spec.id in BOSS_FAMILY:
        c2 = params.pop("c2", 1.0)
        return {"boss_params": theorem1_params(N, tau, d, m, c2, **params)}
    full = theorem1_params(N, tau, d, m, p=1.0)
    tau1 = params.get("tau1", full.tau1)
    tau2 = params.get("tau2", full.tau2)
    if spec.id == "pege":
        return {"tau1": tau1}
    if spec.id == "pege_oracle":
        return {"tau2": tau2}
    return {"tau1": tau1, "tau2": tau2}


def check_algo(spec: AlgoSpec, env: EnvSpec) -> list[str]:
    """Constraint violations of one algorithm block (empty when valid)."""
    tag = f"algorithms[{spec.label}]"
    problems = []
    for k, v in spec.params.items():
        if k in ("tau1", "tau2"):
            if not _is_int(v):
                problems.append(f"{tag}.{k} must be an integer, got {v!r}")
        elif not _is_num(v):
            problems.append(f"{tag}.{k} must be a number, got {v!r}")
    if problems:
        return problems
    d, m, tau = env.d, env.m, env.tau
    try:
        resolved = resolve_params(spec, env)
    except ConfigError as exc:
        return [f"{tag}: {exc}"]
    if "boss_params" in resolved:
        bp = resolved["boss_params"]
        try:
            bp.validate(tau, d, m)
            CostParams.from_lengths(tau, bp.tau2, m, bp.alpha, bp.p)
        except ConfigError as exc:
            problems.append(f"{tag}: {exc}")
        return problems
    tau1 = resolved.get("tau1")
    tau2 = resolved.get("tau2")
    if tau1 is not None and (tau1 < d or tau1 % d or tau1 > tau):
        problems.append(f"{tag}.tau1={tau1} must be a multiple of d={d} in [d, tau={tau}]")
    if tau2 is not None and (tau2 < m or tau2 % m or tau2 > tau):
        problems.append(f"{tag}.tau2={tau2} must be a multiple of m={m} in [m, tau={tau}]")
    return problems


def _unknown(block, allowed, where, problems):
    for k in sorted(set(block) - set(allowed)):
        problems.append(f"unknown key {where}{k!r}")


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed YAML mapping; raises :class:`ConfigValidationError` listing every problem."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigValidationError(["configuration must be a mapping"])
    raw = copy.deepcopy(raw)
    _unknown(raw, TOP_KEYS, "", problems)

    env_raw = raw.get("environment")
    env = None
    if not isinstance(env_raw, dict):
        problems.append("missing 'environment' block")
    else:
        _unknown(env_raw, ENV_KEYS, "environment.", problems)
        env_problems = []
        for k in ("generator", "N", "tau", "d", "m"):
            if k not in env_raw:
                env_problems.append(f"environment.{k} is required")
        gen = env_raw.get("generator")
        if gen is not None and gen not in GENERATOR_IDS:
            env_problems.append(f"environment.generator {gen!r} is not one of {list(GENERATOR_IDS)}")
        for k in ("N", "tau", "d", "m"):
            if k in env_raw and not (_is_int(env_raw[k]) and env_raw[k] >= 1):
                env_problems.append(f"environment.{k} must be a positive integer, got {env_raw[k]!r}")
        for k in ("theta_min", "theta_max", "noise_std"):
            if k in env_raw and not _is_num(env_raw[k]):
                env_problems.append(f"environment.{k} must be a number")
        if not env_problems:
            N, tau, d, m = (int(env_raw[k]) for k in ("N", "tau", "d", "m"))
            if m >= d:
                env_problems.append(f"environment: need m < d (m={m}, d={d})")
            if tau < d:
                env_problems.append(f"environment: need tau >= d (tau={tau}, d={d})")
            tmin = float(env_raw.get("theta_min", 0.8))
            tmax = float(env_raw.get("theta_max", 1.0))
            if not 0 < tmin <= tmax <= 1:
                env_problems.append(f"environment: need 0 < theta_min <= theta_max <= 1, got [{tmin}, {tmax}]")
            sigma = float(env_raw.get("noise_std", 1.0))
            if not 0 <= sigma <= 1:
                env_problems.append(f"environment.noise_std must lie in [0, 1], got {sigma}")
            reveals = env_raw.get("reveal_tasks")
            if reveals is not None:
                if not (isinstance(reveals, list) and all(_is_int(r) for r in reveals)):
                    env_problems.append("environment.reveal_tasks must be a list of integers")
                else:
                    if len(reveals) != m:
                        env_problems.append(f"environment.reveal_tasks needs m={m} entries, got {len(reveals)}")
                    if reveals and (reveals[0] != 1 or any(b <= a for a, b in zip(reveals, reveals[1:]))):
                        env_problems.append("environment.reveal_tasks must start at 1 and strictly increase")
                    if reveals and max(reveals) > N:
                        env_problems.append(f"environment.reveal_tasks index {max(reveals)} exceeds N={N}")
            aset = env_raw.get("action_set", {"kind": "sphere"})
            if not isinstance(aset, dict) or aset.get("kind") not in ("sphere", "diagonal"):
                env_problems.append("environment.action_set.kind must be 'sphere' or 'diagonal'")
            elif aset["kind"] == "diagonal":
                diag = aset.get("diag")
                if not (isinstance(diag, list) and len(diag) == d and all(_is_num(x) and x > 0 for x in diag)):
                    env_problems.append(f"environment.action_set.diag must list {d} positive numbers")
            if not env_problems:
                env = EnvSpec(
                    generator=gen, N=N, tau=tau, d=d, m=m, theta_min=tmin, theta_max=tmax,
                    reveal_tasks=tuple(reveals) if reveals is not None else None,
                    noise_std=sigma, action_set=dict(aset),
                )
        problems.extend(env_problems)

    ex_raw = raw.get("experts", {})
    experts = None
    if not isinstance(ex_raw, dict):
        problems.append("'experts' must be a mapping")
    else:
        _unknown(ex_raw, EXPERT_KEYS, "experts.", problems)
        mode = ex_raw.get("mode", "random")
        count = ex_raw.get("count", 100_000)
        eps = ex_raw.get("epsilon")
        ok = True
        if mode not in EXPERT_MODES:
            problems.append(f"experts.mode {mode!r} is not one of {list(EXPERT_MODES)}")
            ok = False
        if not (_is_int(count) and count >= 1):
            problems.append(f"experts.count must be a positive integer, got {count!r}")
            ok = False
        if mode == "eps_cover" and not (_is_num(eps) and eps > 0):
            problems.append("experts.epsilon must be positive in eps_cover mode")
            ok = False
        if not isinstance(ex_raw.get("include_oracle", True), bool):
            problems.append("experts.include_oracle must be true or false")
            ok = False
        if ok:
            experts = ExpertSpec(mode, int(count), ex_raw.get("include_oracle", True), eps)

    algos = []
    algo_raw = raw.get("algorithms")
    if not isinstance(algo_raw, list) or not algo_raw:
        problems.append("'algorithms' must be a nonempty list")
    else:
        labels = set()
        for i, block in enumerate(algo_raw):
            if not isinstance(block, dict) or "id" not in block:
                problems.append(f"algorithms[{i}] must be a mapping with an 'id'")
                continue
            aid = block["id"]
            if aid not in ALGORITHM_IDS:
                problems.append(f"algorithms[{i}].id {aid!r} is not one of {list(ALGORITHM_IDS)}")
                continue
            label = block.get("label", aid)
            if label in labels:
                problems.append(f"algorithms[{i}]: duplicate label {label!r}")
            labels.add(label)
            params = {k: v for k, v in block.items() if k not in ("id", "label")}
            _unknown(params, ALGO_KEYS[aid], f"algorithms[{label}].", problems)
            spec = AlgoSpec(aid, label, {k: v for k, v in params.items() if k in ALGO_KEYS[aid]})
            if env is not None:
                problems.extend(check_algo(spec, env))
            algos.append(spec)

    seeds = raw.get("seeds", [0])
    if not (isinstance(seeds, list) and seeds and all(_is_int(s) and s >= 0 for s in seeds)):
        problems.append("'seeds' must be a nonempty list of nonnegative integers")
    elif len(set(seeds)) != len(seeds):
        problems.append("'seeds' must not repeat")
    reps = raw.get("repetitions", 1)
    if not (_is_int(reps) and reps >= 1):
        problems.append("'repetitions' must be a positive integer")
    workers = raw.get("workers", 1)
    if not (_is_int(workers) and workers >= 1):
        problems.append("'workers' must be a positive integer")
    stride = raw.get("trace_stride", 1)
    if not (_is_int(stride) and stride >= 1):
        problems.append("'trace_stride' must be a positive integer")
    name = raw.get("name", "experiment")
    if not isinstance(name, str) or not name:
        problems.append("'name' must be a nonempty string")

    if problems:
        raise ConfigValidationError(problems)
    return ExperimentConfig(
        name=name, env=env, experts=experts, algorithms=tuple(algos), seeds=tuple(seeds),
        repetitions=int(reps), output_dir=str(raw.get("output_dir", f"runs/{name}")), workers=int(workers),
        trace_stride=int(stride), raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigValidationError([f"cannot parse {path}: {exc}"]) from None
    return parse_config(raw)

