"""Experiment orchestration: config loading, seeded agent populations, CSV/JSON output.

Every agent ``i`` draws from its own PCG64 stream seeded with
``SeedSequence(master_seed, spawn_key=(i,))``, and per-trial aggregates are
reduced in agent order, so results do not depend on the thread count.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from photon_rl import __version__, kernel
from photon_rl.agents import AgentConfig, ConfigError, make_agent
from photon_rl.envs import Environment, FactorizedBandit, FlatTwoArmBandit, GridSpec, GridWorld3D, min_path_length
from photon_rl.mesh import NoiseSpec, SamplingError, TreeTopology

SCHEMA_VERSION = 1
KINDS = ("gridworld-learning", "gridworld-noise-compare", "bandit-boost", "bandit-factorized", "equivalence-suite")
FULL_SCALE = {"gridworld": 10_000, "bandit": 5_000}
CAP_POLICIES = ("count", "exclude")

_EXPERIMENT_KEYS = {"kind", "agents", "trials", "seed", "parallel", "out", "cap_policy"}
_AGENT_KEYS = {f.name for f in fields(AgentConfig)} - {"noise", "defrag_period"}
_NOISE_KEYS = {"sigma", "mode", "target"}
_DEFRAG_KEYS = {"period"}
_ENV_KEYS = {
    "gridworld": {"dims", "start", "goal", "walls", "wall_density", "wall_seed", "reward", "max_steps"},
    "bandit-boost": {"d", "m", "reward"},
    "bandit-factorized": {"x", "epsilon", "combine"},
    "equivalence-suite": set(),
}

# per-kind defaults, overridden by whatever the config file sets
_DEFAULTS = {
    "gridworld": {"agents": 1000, "trials": 300, "agent": {}, "defrag": 0},
    "bandit-boost": {"agents": 500, "trials": 2000, "agent": {"eta": 1.0, "gamma": 0.9975, "damping_period": 1}, "defrag": 1},
    "bandit-factorized": {"agents": 500, "trials": 3000, "agent": {"eta": 1.0, "gamma": 0.9975, "damping_period": 1}, "defrag": 0},
    "equivalence-suite": {"agents": 1, "trials": 1, "agent": {}, "defrag": 0},
}


def _family(kind: str) -> str:
    return "gridworld" if kind.startswith("gridworld") else kind


def _check_keys(section: str, data: dict, allowed: set) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}; allowed: {', '.join(sorted(allowed)) or 'none'}")


@dataclass
class ExperimentConfig:
    kind: str
    agent: AgentConfig
    environment: dict
    agents: int
    trials: int
    seed: int
    parallel: int = 1
    out: str = "results"
    cap_policy: str = "count"
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        _check_keys("top level", data, {"experiment", "agent", "environment", "noise", "defrag"})
        exp = data.get("experiment", {})
        _check_keys("experiment", exp, _EXPERIMENT_KEYS)
        kind = exp.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"[experiment] kind must be one of {', '.join(KINDS)}, got {kind!r}")
        family = _family(kind)
        defaults = _DEFAULTS[family]

        agent_raw = data.get("agent", {})
        _check_keys("agent", agent_raw, _AGENT_KEYS)
        noise_raw = data.get("noise", {})
        _check_keys("noise", noise_raw, _NOISE_KEYS)
        defrag_raw = data.get("defrag", {})
        _check_keys("defrag", defrag_raw, _DEFRAG_KEYS)
        env = data.get("environment", {})
        _check_keys("environment", env, _ENV_KEYS[family])

        try:
            noise = NoiseSpec(**noise_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[noise]: {exc}") from exc
        agent = AgentConfig(**{**defaults["agent"], **agent_raw}, noise=noise,
                            defrag_period=int(defrag_raw.get("period", defaults["defrag"])))
        if kind == "bandit-boost" and agent.defrag_period == 0:
            raise ConfigError("bandit-boost compares defragmenting agents against plain ones; set [defrag] period >= 1")
        if kind == "bandit-factorized" and agent.model in ("oracle-2L-PS", "oracle-tabular"):
            raise ConfigError("bandit-factorized reports node probabilities; choose a tree model")

        cfg = cls(
            kind=kind,
            agent=agent,
            environment=env,
            agents=int(exp.get("agents", defaults["agents"])),
            trials=int(exp.get("trials", defaults["trials"])),
            seed=int(exp.get("seed", 0)),
            parallel=int(exp.get("parallel", 1)),
            out=str(exp.get("out", "results")),
            cap_policy=str(exp.get("cap_policy", "count")),
            raw=data,
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.agents < 1:
            raise ConfigError("population must be >= 1 agent")
        if self.trials < 1:
            raise ConfigError("trial count must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.parallel < 0:
            raise ConfigError("parallel must be >= 0 (0 = one thread per CPU)")
        if self.cap_policy not in CAP_POLICIES:
            raise ConfigError(f"cap_policy must be one of {', '.join(CAP_POLICIES)}")
        # build the environments once so bad geometry fails before any run
        for _label, env in self.environments():
            if env.n_actions < 1:
                raise ConfigError("environment has no actions")

    def with_value(self, dotted: str, value) -> "ExperimentConfig":
        """Copy with one ``section.key`` entry replaced."""
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"parameter must look like section.key, got {dotted!r}")
        data = copy.deepcopy(self.raw)
        data.setdefault(section, {})[key] = value
        return ExperimentConfig.from_dict(data)

    def environments(self) -> list:
        """Labelled environment instances this experiment runs against."""
        env = self.environment
        family = _family(self.kind)
        try:
            if family == "gridworld":
                kw = {k: env[k] for k in ("dims", "start", "goal", "reward", "max_steps") if k in env}
                if "wall_density" in env:
                    if "walls" in env:
                        raise ConfigError("give either explicit walls or a wall_density, not both")
                    spec = GridSpec.with_random_walls(env["wall_density"], env.get("wall_seed", 0), **kw)
                else:
                    spec = GridSpec(walls=frozenset(tuple(w) for w in env.get("walls", [])), **kw)
                min_path_length(spec)
                return [("grid", GridWorld3D(spec))]
            if family == "bandit-boost":
                out = []
                for d in env.get("d", [3, 4, 5, 6]):
                    for m in env.get("m", ["neighbour", "faraway"]):
                        mode = {"neighbour": 2, "faraway": 1 << d}.get(m, m)
                        out.append((f"d{d}_m{mode}", FlatTwoArmBandit(int(d), int(mode), env.get("reward", 0.025))))
                return out
            if family == "bandit-factorized":
                xs = env.get("x", [0.0, 0.25, 0.5, 0.75, 1.0])
                return [(f"x{x:g}", FactorizedBandit.with_mixing(float(x), env.get("epsilon", 0.004), env.get("combine", "sum"))) for x in xs]
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"[environment]: {exc}") from exc
        return []

    def scaled(self, full_scale: bool) -> "ExperimentConfig":
        if not full_scale:
            return self
        family = "gridworld" if self.kind.startswith("gridworld") else "bandit"
        return self.with_value("experiment.agents", FULL_SCALE[family])


@dataclass
class ExperimentResult:
    kind: str
    columns: dict  # name -> per-trial array
    summary: dict
    nodes: list = field(default_factory=list)  # rows for nodes.csv
    seeds: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def n_trials(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0


def agent_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,))))


def run_episode(agent, env: Environment) -> tuple[int, float]:
    """Play one episode to termination or the step cap; returns ``(steps, total reward)``."""
    if agent.n_actions != env.n_actions:
        raise ValueError(f"agent has {agent.n_actions} actions, environment {env.n_actions}")
    agent.begin_episode()
    percept = env.reset()
    steps, total = 0, 0.0
    done = False
    while not done:
        action = agent.act(percept)
        percept, reward, done = env.step(action)
        agent.learn(reward, percept, done)
        steps += 1
        total += reward
    agent.end_trial()
    return steps, total


def _node_probabilities(agent_or_chi) -> np.ndarray:
    """Ideal upper-branch probability of every node of percept 0."""
    if isinstance(agent_or_chi, np.ndarray):
        chi = agent_or_chi
    elif hasattr(agent_or_chi, "memories"):
        chi = agent_or_chi.memory(0).chi
    else:
        xi = agent_or_chi.tree(0).xi
        return xi / (1.0 + xi)
    return np.sin(np.pi / 4 * (1.0 + np.tanh(chi))) ** 2


class AgentFailure(RuntimeError):
    """A single agent of a population could not finish its trials."""

    def __init__(self, index: int, seed: int, cause: Exception):
        super().__init__(f"agent {index} (master seed {seed}) failed: {cause}")
        self.index = index


@dataclass
class PopulationRun:
    steps: np.ndarray  # [agents, trials]
    reward: np.ndarray
    nodes: np.ndarray | None = None  # [agents, nodes] after the last trial


def run_population(env: Environment, config: AgentConfig, n_agents: int, n_trials: int, seed: int,
                   parallel: int = 1, node_probs: bool = False) -> PopulationRun:
    steps = np.zeros((n_agents, n_trials), dtype=np.int64)
    reward = np.zeros((n_agents, n_trials))
    nodes = np.zeros((n_agents, TreeTopology.for_actions(env.n_actions).n_nodes)) if node_probs else None
    tables = env.tables() if config.model == "tree-PS" else None

    def work(i):
        try:
            _run_one(i)
        except (kernel.KernelError, SamplingError) as exc:
            raise AgentFailure(i, seed, exc) from exc

    def _run_one(i):
        rng = agent_rng(seed, i)
        if tables is not None:
            s, r, state = kernel.run_tree_ps(tables, config, rng, n_trials)
            steps[i], reward[i] = s, r
            if node_probs:
                nodes[i] = _node_probabilities(state.chi[0])
            return
        agent = make_agent(config, env.n_actions, rng)
        local = copy.deepcopy(env)
        for t in range(n_trials):
            steps[i, t], reward[i, t] = run_episode(agent, local)
        if node_probs:
            nodes[i] = _node_probabilities(agent)

    workers = parallel or os.cpu_count() or 1
    if workers == 1:
        for i in range(n_agents):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(n_agents)))
    return PopulationRun(steps, reward, nodes)


def compute_boost(reward_defrag, reward_nodefrag) -> np.ndarray:
    a = np.asarray(reward_defrag, dtype=float)
    b = np.asarray(reward_nodefrag, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"boost needs equal trial counts, got {a.shape} and {b.shape}")
    return a - b


def _path_stats(run: PopulationRun, cap: int, policy: str):
    steps = run.steps.astype(float)
    if policy == "exclude":
        capped = (run.steps >= cap) & (run.reward == 0.0)
        steps = np.where(capped, np.nan, steps)
        with warnings.catch_warnings():
            # all-capped trials legitimately average to nan
            warnings.simplefilter("ignore", RuntimeWarning)
            return np.nanmean(steps, axis=0), np.nanstd(steps, axis=0)
    return steps.mean(axis=0), steps.std(axis=0)


def _at(series, trial: int):
    """Value at 1-based ``trial`` or None when the run is shorter."""
    return float(series[trial - 1]) if len(series) >= trial else None


def _run_gridworld(cfg: ExperimentConfig):
    (_, env), = cfg.environments()
    cap = env.spec.max_steps
    columns, summary = {}, {"min_path_length": min_path_length(env.spec)}
    if cfg.kind == "gridworld-learning":
        run = run_population(env, cfg.agent, cfg.agents, cfg.trials, cfg.seed, cfg.parallel)
        mean, std = _path_stats(run, cap, cfg.cap_policy)
        columns = {"mean_steps": mean, "std_steps": std, "mean_reward": run.reward.mean(axis=0)}
        summary.update(initial_mean_steps=_at(mean, 1), final_mean_steps=float(mean[-1]))
        return columns, summary, []
    ideal_cfg = AgentConfig(**{**{f.name: getattr(cfg.agent, f.name) for f in fields(AgentConfig)}, "noise": NoiseSpec()})
    for label, agent_cfg in (("ideal", ideal_cfg), ("noisy", cfg.agent)):
        run = run_population(env, agent_cfg, cfg.agents, cfg.trials, cfg.seed, cfg.parallel)
        mean, std = _path_stats(run, cap, cfg.cap_policy)
        columns[f"{label}_mean_steps"] = mean
        columns[f"{label}_std_steps"] = std
        summary[f"{label}_final_mean_steps"] = float(mean[-1])
        summary[f"{label}_trial50_mean_steps"] = _at(mean, 50)
    summary["sigma"] = cfg.agent.noise.sigma
    summary["final_relative_gap"] = abs(summary["noisy_final_mean_steps"] - summary["ideal_final_mean_steps"]) / summary["ideal_final_mean_steps"]
    return columns, summary, []


def _run_boost(cfg: ExperimentConfig):
    plain = AgentConfig(**{**{f.name: getattr(cfg.agent, f.name) for f in fields(AgentConfig)}, "defrag_period": 0})
    columns, summary = {}, {}
    for label, env in cfg.environments():
        on = run_population(env, cfg.agent, cfg.agents, cfg.trials, cfg.seed, cfg.parallel).reward.mean(axis=0)
        off = run_population(env, plain, cfg.agents, cfg.trials, cfg.seed, cfg.parallel).reward.mean(axis=0)
        boost = compute_boost(on, off)
        columns[f"reward_defrag_{label}"] = on
        columns[f"reward_plain_{label}"] = off
        columns[f"boost_{label}"] = boost
        summary[f"mean_boost_{label}"] = float(boost.mean())
    return columns, summary, []


def _run_factorized(cfg: ExperimentConfig):
    columns, summary, rows = {}, {}, []
    topo = None
    for label, env in cfg.environments():
        run = run_population(env, cfg.agent, cfg.agents, cfg.trials, cfg.seed, cfg.parallel, node_probs=True)
        columns[f"reward_{label}"] = run.reward.mean(axis=0)
        topo = TreeTopology.for_actions(env.n_actions)
        mean = run.nodes.mean(axis=0)
        se = run.nodes.std(axis=0) / math.sqrt(cfg.agents)
        x = float(label[1:])
        for j, (k, l) in enumerate(topo.nodes()):
            rows.append({"x": x, "k": k, "l": l, "mean_p": float(mean[j]), "std_p": float(run.nodes[:, j].std()), "se_p": float(se[j])})
        summary[f"root_p_{label}"] = float(mean[0])
    return columns, summary, rows


def _run_suite(cfg: ExperimentConfig):
    from photon_rl.verify import run_suite

    results = run_suite()
    columns = {
        "passed": np.array([int(r.passed) for r in results]),
        "error": np.array([r.error for r in results]),
        "tolerance": np.array([r.tolerance for r in results]),
    }
    summary = {"checks": [r.name for r in results], "all_passed": all(r.passed for r in results)}
    return columns, summary, []


_RUNNERS = {
    "gridworld": _run_gridworld,
    "bandit-boost": _run_boost,
    "bandit-factorized": _run_factorized,
    "equivalence-suite": _run_suite,
}


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: Path, columns: dict, index_name: str = "trial") -> None:
    names = list(columns)
    n = len(columns[names[0]]) if names else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([index_name, *names])
        for i in range(n):
            w.writerow([i + 1, *(_fmt(columns[c][i]) for c in names)])


def _write_rows(path: Path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_fmt(v) for v in row.values()])


def run_experiment(config: ExperimentConfig, out_dir=None, write: bool = True) -> ExperimentResult:
    t0 = time.perf_counter()
    columns, summary, rows = _RUNNERS[_family(config.kind)](config)
    result = ExperimentResult(
        kind=config.kind,
        columns=columns,
        summary=summary,
        nodes=rows,
        seeds={"master": config.seed, "per_agent": "SeedSequence(master, spawn_key=(agent_index,)) -> PCG64"},
        wall_clock=time.perf_counter() - t0,
    )
    if write:
        out = Path(out_dir or config.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "result.csv", columns, "check" if config.kind == "equivalence-suite" else "trial")
        if rows:
            _write_rows(out / "nodes.csv", rows)
        meta = {
            "schema_version": SCHEMA_VERSION,
            "version": __version__,
            "kind": config.kind,
            "config": config.raw,
            "resolved": {"agents": config.agents, "trials": config.trials, "parallel": config.parallel,
                         "cap_policy": config.cap_policy, "agent": _agent_echo(config.agent)},
            "seeds": result.seeds,
            "summary": summary,
            "backend": kernel.BACKEND,
            "wall_clock_seconds": result.wall_clock,
        }
        with open(out / "result.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result


def _agent_echo(agent: AgentConfig) -> dict:
    out = {f.name: getattr(agent, f.name) for f in fields(AgentConfig) if f.name != "noise"}
    out["noise"] = {"sigma": agent.noise.sigma, "mode": agent.noise.mode, "target": agent.noise.target}
    return out
