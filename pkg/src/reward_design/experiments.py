"""Named environments and the seeded multi-technique comparison."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .envs import (InitialPolicyFamily, LineKConfig, RoomConfig, build_linek, build_room,
                   linek_policy_family, room_policy_family, target_policy)
from .harness import TrainingConfig, compare_runs, run_technique
from .mdp import TabularMdp, uniform_policy

SETTINGS = ("single", "diverse")


@dataclass
class Environment:
    name: str
    mdp: TabularMdp
    feature_map: object
    target: np.ndarray
    family: InitialPolicyFamily
    r_max: float

    def initial_policy(self, setting: str, run_index: int) -> np.ndarray:
        if setting == "single":
            return uniform_policy(self.mdp.n_states, self.mdp.n_actions)
        if setting == "diverse":
            return self.family.policy(self.mdp, self.target, run_index)
        raise ValueError(f"unknown setting {setting!r}; choose from {SETTINGS}")


def make_environment(name: str, **overrides) -> Environment:
    if name == "room":
        cfg = RoomConfig(**overrides)
        mdp, fmap = build_room(cfg)
        family = room_policy_family(cfg)
    elif name == "linek":
        cfg = LineKConfig(**overrides)
        mdp, fmap = build_linek(cfg)
        family = linek_policy_family(cfg)
    else:
        raise ValueError(f"unknown environment {name!r}")
    return Environment(name, mdp, fmap, target_policy(mdp), family, cfg.r_max)


def run_comparison(env: Environment, cfg: TrainingConfig, techniques, seeds, setting="single",
                   external_reward=None, workers: int = 1):
    """One run per (technique, seed); the seed doubles as the run index, so a
    run's generator streams depend only on (master_seed, seed)."""
    jobs = [(tech, int(seed)) for tech in techniques for seed in seeds]
    args = [(env, cfg, tech, seed, setting, external_reward) for tech, seed in jobs]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_one, args))
    return [_run_one(a) for a in args]


def _run_one(args):
    env, cfg, tech, seed, setting, external_reward = args
    return run_technique(tech, env.mdp, env.feature_map, env.target, cfg, seed,
                         env.initial_policy(setting, seed), external_reward, env.r_max,
                         {"environment": env.name, "setting": setting})


def ordering_holds(summary: dict, lead: str = "adaptive", others=("orig", "invar")):
    """True when ``lead`` has a smaller median episodes-to-threshold than
    every other technique and its interquartile range lies strictly below
    theirs. Returns (passed, detail)."""
    s = summary[lead]
    ok, parts = True, []
    for other in others:
        o = summary[other]
        faster = s.median < o.median
        separated = s.q75 < o.q25
        ok &= faster and separated
        parts.append(f"{lead} {s.median:.0f} [{s.q25:.0f},{s.q75:.0f}] vs {other} "
                     f"{o.median:.0f} [{o.q25:.0f},{o.q75:.0f}]")
    return bool(ok), "; ".join(parts)


def ordering_experiment(env_name: str, cfg: TrainingConfig, seeds, setting: str = "single",
                        techniques=("adaptive", "orig", "invar"), threshold_fraction: float = 0.9,
                        workers: int = 1, **env_overrides):
    """Run every technique over ``seeds`` and summarize episodes-to-threshold."""
    env = make_environment(env_name, **env_overrides)
    records = run_comparison(env, cfg, techniques, seeds, setting, workers=workers)
    return compare_runs(records, threshold_fraction, cfg.episodes), records


def with_seed(cfg: TrainingConfig, master_seed: int) -> TrainingConfig:
    return replace(cfg, master_seed=master_seed)


__all__ = ["Environment", "SETTINGS", "compare_runs", "make_environment", "ordering_experiment",
           "ordering_holds", "run_comparison", "with_seed"]
