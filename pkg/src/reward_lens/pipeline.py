"""Experiment configs and the generate / preprocess / render stages behind the CLI.

Everything a stage writes lives under the output root:

    rewards/<variant>.json          tabular reward files (gridworld)
    rollouts/{train,eval}.csv       expert trajectories (mountain car)
    bundles/<variant>__<cost>/      one directory per preprocessing run
    figures/sheet.svg               rendered panel plus per-cell CSV twins
    manifest_<stage>.json           provenance: config, version, file hashes
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .costs import CostSpec, TrajectoryPool, UniformTransitions
from .env import (
    GridSpec,
    Trajectory,
    enumerate_transitions,
    grid_random_walks,
    mc_rollout,
    trajectories_from_csv,
    trajectories_to_csv,
)
from .equivalence import equivalence_report, return_invariance_check
from .errors import AcceptanceFailure, ConfigError, EquivalenceFailure, InputError
from .optimize import PRESETS, default_config, preprocess
from .policy import greedy_policy, mc_expert, value_iteration
from .potentials import (
    MC_FEATURE_SCALE,
    MC_TERMINAL,
    LinearPotential,
    MLPPotential,
    PotentialModel,
    TabularPotential,
    load_potential,
    save_potential,
)
from .rewards import (
    RewardSource,
    TabularReward,
    add_noise,
    apply_shaping,
    goal_reward,
    load_tabular,
    manhattan_potential,
    mc_ground_truth,
    mc_learnedlike,
    mc_linear_potential,
    mc_value_potential,
    path_reward,
    random_potential,
    save_tabular,
    to_tabular,
)
from .viz import SvgDoc, render_grid_heatmap, render_panel, render_timeline, shared_scale

OUT_ENV = "REWARD_LENS_OUT"
DEFAULT_OUT = "reward_lens_out"
PENALTY_ALIASES = {"l1": "l1", "log": "log1p_abs", "log1p_abs": "log1p_abs"}
GRID_BASES = ("goal", "path")
MC_BASES = ("mc_ground_truth",)


@dataclass
class ExperimentConfig:
    seed: int
    environment: dict
    base_reward: str
    shapings: list[dict] = field(default_factory=list)
    noise: dict | None = None
    potential: str = "tabular"
    costs: list[dict] = field(default_factory=lambda: [{"family": "sparse", "penalty": "l1"}])
    optimize: dict = field(default_factory=dict)
    rollout: dict = field(default_factory=dict)
    gamma: float = 0.99
    tol: float = 1e-6
    out: str | None = None
    jobs: int = 1

    @property
    def is_grid(self) -> bool:
        return self.environment.get("kind") == "grid"

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "gamma": self.gamma,
            "tol": self.tol,
            "environment": self.environment,
            "base_reward": self.base_reward,
            "shapings": self.shapings,
            "noise": self.noise,
            "potential": self.potential,
            "costs": self.costs,
            "optimize": self.optimize,
            "rollout": self.rollout,
        }


def _cost_dict(c) -> dict:
    if isinstance(c, str):
        family, _, pen = c.partition("-")
        c = {"family": family, "penalty": pen}
    if not isinstance(c, dict) or "family" not in c or "penalty" not in c:
        raise ConfigError(f"bad cost descriptor {c!r}")
    if c["penalty"] not in PENALTY_ALIASES or c["family"] not in ("sparse", "smooth"):
        raise ConfigError(f"unknown cost {c['family']}-{c['penalty']}")
    return {"family": c["family"], "penalty": PENALTY_ALIASES[c["penalty"]]}


def load_config(data: dict, seed: int | None = None, out: str | None = None, steps: int | None = None) -> ExperimentConfig:
    """Validate a config dict; flag values win over file values."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    data = copy.deepcopy(data)
    if seed is not None:
        data["seed"] = seed
    if "seed" not in data:
        raise ConfigError("config needs a seed")
    for key in ("environment", "base_reward"):
        if key not in data:
            raise ConfigError(f"config needs {key!r}")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    data["costs"] = [_cost_dict(c) for c in data.get("costs", ["sparse-l1"])]
    if steps is not None:
        data.setdefault("optimize", {})["steps"] = steps
    try:
        cfg = ExperimentConfig(**data)
        cfg.seed = int(cfg.seed)
        cfg.gamma = float(cfg.gamma)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if out is not None:
        cfg.out = out
    env = cfg.environment
    if env.get("kind") not in ("grid", "mountain_car"):
        raise ConfigError("environment.kind must be 'grid' or 'mountain_car'")
    bases = GRID_BASES if cfg.is_grid else MC_BASES
    if cfg.base_reward not in bases:
        raise ConfigError(f"base_reward must be one of {bases}")
    if cfg.potential not in PRESETS:
        raise ConfigError(f"unknown potential kind {cfg.potential!r}")
    if cfg.is_grid and cfg.potential != "tabular":
        raise ConfigError("gridworld experiments use a tabular potential")
    names = [shaping_name(s) for s in cfg.shapings]
    if len(set(names)) != len(names):
        raise ConfigError("shaping names must be unique")
    try:
        for k, v in cfg.optimize.items():
            default_config(cfg.potential, **{k: v})
        if cfg.is_grid:
            grid_spec(cfg)
    except (TypeError, InputError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config_file(path, **overrides) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return load_config(data, **overrides)


def output_root(cfg: ExperimentConfig, flag: str | None = None) -> Path:
    """``--out`` beats ``$REWARD_LENS_OUT`` beats the config file."""
    return Path(flag or os.environ.get(OUT_ENV) or cfg.out or DEFAULT_OUT)


# --- building rewards from descriptors -------------------------------------


def grid_spec(cfg: ExperimentConfig) -> GridSpec:
    env = cfg.environment
    return GridSpec(
        int(env.get("width", 10)),
        int(env.get("height", 10)),
        terminal_cells=frozenset(tuple(c) for c in env.get("terminal_cells", [])),
    )


def shaping_name(d: dict) -> str:
    if "name" in d:
        return str(d["name"])
    kind = d.get("kind")
    if kind == "manhattan":
        return "manhattan" + ("+" if d.get("sign", 1) > 0 else "-")
    if kind == "random":
        return f"random{d.get('seed', 0)}"
    if kind == "linear":
        return f"linear_{d.get('c_p', 0):g}_{d.get('c_v', 0):g}"
    if kind == "value":
        return "value"
    raise ConfigError(f"unknown shaping kind {kind!r}")


@lru_cache(maxsize=8)
def _value_potential(gamma: float, resolution: int):
    return mc_value_potential(gamma, resolution)


def _shaping_potential(cfg: ExperimentConfig, d: dict):
    kind = d.get("kind")
    if cfg.is_grid:
        spec = grid_spec(cfg)
        if kind == "manhattan":
            return manhattan_potential(spec, int(d.get("sign", 1)))
        if kind == "random":
            return random_potential(spec, int(d.get("seed", 0)), float(d.get("scale", 5.0)))
    else:
        if kind == "linear":
            return mc_linear_potential(float(d.get("c_p", 0.0)), float(d.get("c_v", 0.0)))
        if kind == "value":
            return _value_potential(cfg.gamma, int(d.get("resolution", 64)))
    raise ConfigError(f"shaping {kind!r} is not available for this environment")


def base_reward(cfg: ExperimentConfig) -> RewardSource:
    if cfg.base_reward == "goal":
        return goal_reward(grid_spec(cfg))
    if cfg.base_reward == "path":
        return path_reward(grid_spec(cfg))
    return mc_ground_truth()


def build_variants(cfg: ExperimentConfig) -> dict[str, RewardSource]:
    """Named reward variants in a fixed order: base, shapings, then noisy copies."""
    base = base_reward(cfg)
    clean = {cfg.base_reward: base}
    for d in cfg.shapings:
        clean[shaping_name(d)] = apply_shaping(base, _shaping_potential(cfg, d), cfg.gamma)
    if not cfg.noise:
        return clean
    sigma = float(cfg.noise.get("sigma", 0.0))
    nseed = int(cfg.noise.get("seed", cfg.seed))
    out = dict(clean) if cfg.noise.get("keep_clean", True) else {}
    for name, r in clean.items():
        if cfg.noise.get("random_shaping", False):
            out[f"noisy_{name}"] = mc_learnedlike(r, cfg.gamma, sigma, nseed)
        else:
            out[f"noisy_{name}"] = add_noise(r, sigma, nseed)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(root: Path, stage: str, cfg: ExperimentConfig, files: list[Path]) -> Path:
    from . import __version__

    manifest = {
        "stage": stage,
        "package": "reward_lens",
        "version": __version__,
        "config": cfg.to_dict(),
        "files": {str(p.relative_to(root)): _sha256(p) for p in sorted(files)},
    }
    path = root / f"manifest_{stage}.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


# --- generate ---------------------------------------------------------------


def rollout_seeds(cfg: ExperimentConfig) -> dict:
    r = cfg.rollout
    return {
        "train_episodes": int(r.get("train_episodes", 20)),
        "train_seed": int(r.get("train_seed", cfg.seed + 1)),
        "eval_episodes": int(r.get("eval_episodes", 5)),
        "eval_seed": int(r.get("eval_seed", cfg.seed + 2)),
        "max_steps": int(r.get("max_steps", 500)),
    }


def generate(cfg: ExperimentConfig, root: Path) -> list[Path]:
    """Gridworld: one tabular file per variant.  Mountain car: expert rollouts."""
    written = []
    if cfg.is_grid:
        spec = grid_spec(cfg)
        d = root / "rewards"
        d.mkdir(parents=True, exist_ok=True)
        for name, r in build_variants(cfg).items():
            path = d / f"{name}.json"
            save_tabular(to_tabular(r, spec, cfg.gamma), path)
            written.append(path)
    else:
        rs = rollout_seeds(cfg)
        d = root / "rollouts"
        d.mkdir(parents=True, exist_ok=True)
        for split in ("train", "eval"):
            trajs = mc_rollout(mc_expert, rs[f"{split}_episodes"], rs["max_steps"], rs[f"{split}_seed"])
            path = d / f"{split}.csv"
            path.write_text(trajectories_to_csv(trajs))
            written.append(path)
    write_manifest(root, "generate", cfg, written)
    return written


# --- preprocess -------------------------------------------------------------


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing {path}; run the earlier stage first")
    return path


def load_rollouts(root: Path, split: str) -> list[Trajectory]:
    return trajectories_from_csv(_require(root / "rollouts" / f"{split}.csv").read_text())


def source_reward(cfg: ExperimentConfig, root: Path, variant: str) -> RewardSource:
    if cfg.is_grid:
        return load_tabular(_require(root / "rewards" / f"{variant}.json"))
    variants = build_variants(cfg)
    if variant not in variants:
        raise ConfigError(f"unknown variant {variant!r}")
    return variants[variant]


def new_potential(cfg: ExperimentConfig) -> PotentialModel:
    if cfg.is_grid:
        spec = grid_spec(cfg)
        return TabularPotential(spec.n_states, spec.terminal_indices())
    if cfg.potential == "linear":
        return LinearPotential(2, MC_TERMINAL, MC_FEATURE_SCALE)
    if cfg.potential == "mlp":
        return MLPPotential((2, 64, 64, 1), cfg.seed, MC_TERMINAL, MC_FEATURE_SCALE)
    raise ConfigError("mountain car needs a linear or mlp potential")


def cost_name(c: dict) -> str:
    return f"{c['family']}-{'l1' if c['penalty'] == 'l1' else 'log'}"


def bundle_dir(root: Path, variant: str, cost: dict) -> Path:
    return root / "bundles" / f"{variant}__{cost_name(cost)}"


def variant_names(cfg: ExperimentConfig) -> list[str]:
    return list(build_variants(cfg))


def run_bundle(cfg: ExperimentConfig, root: Path, variant: str, cost: dict) -> dict:
    """One preprocessing run; writes its bundle and returns the summary."""
    r = source_reward(cfg, root, variant)
    opt = default_config(cfg.potential, **{"seed": cfg.seed, **cfg.optimize})
    if cfg.is_grid:
        spec = grid_spec(cfg)
        dist = UniformTransitions(spec)
    else:
        dist = TrajectoryPool(load_rollouts(root, "train"), cfg.seed)
    cs = CostSpec(cost["family"], cost["penalty"], dist)
    result = preprocess(r, new_potential(cfg), cfg.gamma, cs, opt)

    out = bundle_dir(root, variant, cost)
    out.mkdir(parents=True, exist_ok=True)
    save_potential(result.potential, out / "potential.json")
    (out / "cost_trace.csv").write_text(result.trace_csv())
    summary = {
        "variant": variant,
        "cost": cost_name(cost),
        "initial_cost": result.initial_cost,
        "final_cost": result.final_cost,
        "steps_run": result.steps_run,
    }
    if cfg.is_grid:
        pre = to_tabular(result.preprocessed, spec, cfg.gamma)
        save_tabular(pre, out / "preprocessed.json")
        walks = grid_random_walks(spec, 100, 20, cfg.seed)
        report = equivalence_report(r, pre, cfg.gamma, cfg.tol, walks)
        (out / "equivalence.json").write_text(report.to_json())
        summary["equivalent"] = report.passed
    else:
        eval_trajs = load_rollouts(root, "eval")
        err = return_invariance_check(r, result.preprocessed, eval_trajs, cfg.gamma, result.potential)
        ecs = CostSpec(cost["family"], cost["penalty"], TrajectoryPool(eval_trajs, cfg.seed))
        summary["eval_initial_cost"] = ecs.evaluate(r)
        summary["eval_final_cost"] = ecs.evaluate(result.preprocessed)
        summary["equivalent"] = bool(err < 1e-9)
        report = {"return_invariance_max_error": err, "is_equivalent": summary["equivalent"], "gamma": cfg.gamma}
        (out / "equivalence.json").write_text(json.dumps(report, indent=1) + "\n")
    (out / "result.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary


def _run_bundle_task(args) -> dict:
    cfg, root, variant, cost = args
    return run_bundle(cfg, root, variant, cost)


def preprocess_all(cfg: ExperimentConfig, root: Path, jobs: int | None = None) -> list[dict]:
    """Every variant times every cost.  Bundles are independent, so they may run in parallel."""
    tasks = [(cfg, root, v, c) for v in variant_names(cfg) for c in cfg.costs]
    jobs = jobs or cfg.jobs
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_run_bundle_task, tasks))
    else:
        summaries = [_run_bundle_task(t) for t in tasks]
    files = [p for t in tasks for p in sorted(bundle_dir(root, t[2], t[3]).iterdir())]
    write_manifest(root, "preprocess", cfg, files)
    failed = [f"{s['variant']}__{s['cost']}" for s in summaries if not s["equivalent"]]
    if failed:
        raise EquivalenceFailure(f"equivalence check failed for {', '.join(failed)}")
    return summaries


# --- render -----------------------------------------------------------------


def _preprocessed(cfg: ExperimentConfig, root: Path, variant: str, cost: dict) -> RewardSource:
    d = bundle_dir(root, variant, cost)
    if not d.exists():
        raise FileNotFoundError(f"missing result bundle {d.name}")
    if cfg.is_grid:
        return load_tabular(_require(d / "preprocessed.json"))
    return apply_shaping(source_reward(cfg, root, variant), load_potential(_require(d / "potential.json")), cfg.gamma)


def episode_rewards(r: RewardSource, trajs: list[Trajectory]) -> list[np.ndarray]:
    return [np.asarray(r.evaluate(t.transitions()), dtype=float) for t in trajs]


def render(cfg: ExperimentConfig, root: Path) -> Path:
    """Rows are reward variants; columns are the source then one per cost."""
    names = variant_names(cfg)
    col_titles = ["original"] + [cost_name(c) for c in cfg.costs]
    grid: list[list[SvgDoc]] = []
    if cfg.is_grid:
        spec = grid_spec(cfg)
        for v in names:
            row = [source_reward(cfg, root, v)] + [_preprocessed(cfg, root, v, c) for c in cfg.costs]
            scale = shared_scale(row)
            grid.append([render_grid_heatmap(r, spec, scale) for r in row])
    else:
        trajs = load_rollouts(root, "eval")
        for v in names:
            row = [source_reward(cfg, root, v)] + [_preprocessed(cfg, root, v, c) for c in cfg.costs]
            grid.append([render_timeline(episode_rewards(r, trajs)) for r in row])
    sheet = render_panel(grid, names, col_titles)
    d = root / "figures"
    d.mkdir(parents=True, exist_ok=True)
    path = d / "sheet.svg"
    path.write_text(sheet.to_svg())
    written = [path]
    for i, v in enumerate(names):
        for j, ct in enumerate(col_titles):
            p = d / f"{v}__{ct}.csv"
            p.write_text(grid[i][j].csv)
            written.append(p)
    write_manifest(root, "render", cfg, written)
    return path


# --- demos ------------------------------------------------------------------

GRID10_GOAL = {"kind": "grid", "width": 10, "height": 10, "terminal_cells": [[9, 9]]}
GRID10 = {"kind": "grid", "width": 10, "height": 10, "terminal_cells": []}
MC = {"kind": "mountain_car"}

DEMOS: dict[str, dict] = {
    "fig-goal": {
        "seed": 0,
        "environment": GRID10_GOAL,
        "base_reward": "goal",
        "shapings": [{"kind": "manhattan", "sign": 1}, {"kind": "manhattan", "sign": -1}, {"kind": "random", "seed": 1}],
        "costs": ["sparse-l1", "smooth-l1"],
    },
    "fig-path": {
        "seed": 0,
        "environment": GRID10,
        "base_reward": "path",
        "shapings": [{"kind": "manhattan", "sign": 1}, {"kind": "manhattan", "sign": -1}, {"kind": "random", "seed": 1}],
        "costs": ["sparse-l1", "smooth-l1"],
    },
    "fig-mc-ground-truth": {
        "seed": 0,
        "environment": MC,
        "base_reward": "mc_ground_truth",
        "shapings": [{"kind": "linear", "c_p": 5.0, "c_v": 0.0}, {"kind": "linear", "c_p": 0.0, "c_v": 50.0}],
        "potential": "linear",
        "costs": ["sparse-log", "smooth-log"],
    },
    "fig-mc-learnedlike": {
        "seed": 0,
        "environment": MC,
        "base_reward": "mc_ground_truth",
        "shapings": [{"kind": "value", "resolution": 64}],
        "noise": {"sigma": 0.01, "random_shaping": True},
        "potential": "mlp",
        "costs": ["sparse-log"],
    },
}


def goal_mass_fraction(r: TabularReward, spec: GridSpec) -> float:
    """Share of the table's L1 mass on transitions that enter the goal."""
    t = enumerate_transitions(spec)
    vals = np.abs(r.evaluate(t))
    total = vals.sum()
    if total == 0:
        return 0.0
    return float(vals[t.s_next == spec.index(spec.goal)].sum() / total)


def shift_recovery_error(r: RewardSource, reference: RewardSource, trajs: list[Trajectory]) -> float:
    """Max per-step deviation of ``r`` from ``reference`` plus the median offset."""
    d = np.concatenate([a - b for a, b in zip(episode_rewards(r, trajs), episode_rewards(reference, trajs))])
    return float(np.max(np.abs(d - np.median(d))))


def demo_checks(name: str, cfg: ExperimentConfig, root: Path, summaries: list[dict]) -> list[tuple[str, bool, str]]:
    """Properties each demo must show, as ``(label, passed, detail)``."""
    checks = []
    by_key = {(s["variant"], s["cost"]): s for s in summaries}
    for s in summaries:
        checks.append((f"{s['variant']} {s['cost']} equivalent", bool(s["equivalent"]), ""))
    if name == "fig-goal":
        spec = grid_spec(cfg)
        target = float(np.mean(np.abs(goal_reward(spec).flat)))
        for v in variant_names(cfg):
            s = by_key[(v, "sparse-l1")]
            ok = abs(s["final_cost"] - target) <= 0.05 * target
            checks.append((f"{v} sparse-l1 cost near {target:g}", ok, f"{s['final_cost']:.6f}"))
            pre = _preprocessed(cfg, root, v, {"family": "sparse", "penalty": "l1"})
            frac = goal_mass_fraction(pre, spec)
            checks.append((f"{v} goal mass >= 0.9", frac >= 0.9, f"{frac:.4f}"))
    elif name == "fig-path":
        spec = grid_spec(cfg)
        base = path_reward(spec)
        target = float(np.mean(np.abs(base.flat)))
        want = greedy_policy(value_iteration(spec, base, cfg.gamma, 1e-12))
        for v in variant_names(cfg):
            s = by_key[(v, "sparse-l1")]
            checks.append((f"{v} sparse-l1 cost <= 1.05 x {target:.4f}", s["final_cost"] <= 1.05 * target, f"{s['final_cost']:.6f}"))
            pre = _preprocessed(cfg, root, v, {"family": "sparse", "penalty": "l1"})
            got = greedy_policy(value_iteration(spec, pre, cfg.gamma, 1e-12))
            checks.append((f"{v} greedy policy matches path", got == want, ""))
    elif name == "fig-mc-ground-truth":
        trajs = load_rollouts(root, "eval")
        gt = mc_ground_truth()
        for d in cfg.shapings:
            v = shaping_name(d)
            pre = _preprocessed(cfg, root, v, {"family": "sparse", "penalty": "log1p_abs"})
            err = shift_recovery_error(pre, gt, trajs)
            checks.append((f"{v} recovers ground truth up to a shift", err <= 1e-2, f"{err:.2e}"))
    elif name == "fig-mc-learnedlike":
        # clean value-shaped rows must simplify a lot, noisy stand-ins less so
        for v in variant_names(cfg):
            if v == cfg.base_reward:
                continue
            need = 0.25 if v.startswith("noisy_") else 0.5
            s = by_key[(v, "sparse-log")]
            cut = 1.0 - s["eval_final_cost"] / s["eval_initial_cost"]
            checks.append((f"{v} sparse-log eval cost reduced by >= {need:.0%}", cut >= need, f"{cut:.1%}"))
    return checks


def run_demo(name: str, root: Path, seed: int | None = None, steps: int | None = None, jobs: int = 1):
    if name not in DEMOS:
        raise ConfigError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")
    cfg = load_config(DEMOS[name], seed=seed, steps=steps)
    root.mkdir(parents=True, exist_ok=True)
    (root / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    generate(cfg, root)
    summaries = preprocess_all(cfg, root, jobs)
    render(cfg, root)
    checks = demo_checks(name, cfg, root, summaries)
    (root / "checks.json").write_text(
        json.dumps([{"check": c, "passed": ok, "detail": d} for c, ok, d in checks], indent=1) + "\n"
    )
    failed = [c for c, ok, _ in checks if not ok]
    if failed:
        raise AcceptanceFailure(f"{name}: failed {', '.join(failed)}")
    return checks
