"""Command-line entry point: ``reward-design {design,train,compare,theorem1,verify,replay}``.

Configs are JSON objects. Unknown keys are rejected with the offending key
named. Every subcommand writes ``manifest.json`` into its output directory
before doing any work; the manifest holds the config text verbatim and the
resolved config, so ``reward-design replay manifest.json`` reruns it.

Exit codes: 0 success, 1 validation error, 2 infeasible design,
3 property violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
import typing
from pathlib import Path

import numpy as np

from . import __version__
from .designer import DesignProblem, solve_design, verify_policy_invariance
from .envs import (FeatureMap, InitialPolicyFamily, LineKConfig, MapParseError, RoomConfig,
                   target_policy)
from .experiments import SETTINGS, Environment, make_environment, run_comparison
from .formats import (FormatError, load_mdp, load_table, lp_solution_dict, save_table,
                      start_run_dir, write_comparison, write_json, write_run)
from .harness import (TECHNIQUES, DesignFailure, DesignerConfig, TrainingConfig, compare_runs,
                      make_designer, theorem1_suite)
from .mdp import uniform_policy

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_VIOLATION = 0, 1, 2, 3
MANIFEST_TAG = "reward-design-cli/1"
SUBCOMMANDS = ("design", "train", "compare", "theorem1", "verify")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config parsing


def from_dict(cls, data, where: str):
    """Build dataclass ``cls`` from ``data``, recursing into dataclass-typed
    fields and rejecting keys that are not fields."""
    if isinstance(data, cls):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in {where}; expected one of {sorted(names)}")
    kwargs = {}
    for key, value in data.items():
        ftype = hints.get(key)
        if dataclasses.is_dataclass(ftype) and value is not None:
            value = from_dict(ftype, value, f"{where}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _check_keys(data: dict, allowed, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}; expected one of {sorted(allowed)}")


TOP_KEYS = {
    "design": {"environment", "designer", "learner_policy", "comment"},
    "train": {"environment", "training", "technique", "seeds", "setting", "external_reward",
              "comment"},
    "compare": {"environment", "training", "techniques", "seeds", "setting", "external_reward",
                "threshold_fraction", "workers", "comment"},
    "theorem1": {"n_mdps", "max_states", "min_actions", "max_actions", "seed", "r_max",
                 "comment"},
    "verify": {"checks", "comment"},
}
ENV_KEYS = {"name", "path", "options", "features"}


@dataclasses.dataclass
class EnvSpec:
    name: str = "room"
    path: str = None
    options: dict = None
    features: str = "default"   # or "tabular"


def parse_env(data, base_dir: Path) -> EnvSpec:
    data = {} if data is None else data
    _check_keys(data, ENV_KEYS, "environment")
    spec = EnvSpec(**data)
    if spec.name not in ("room", "linek", "mdp"):
        raise ConfigError(f"environment.name must be room, linek or mdp, got {spec.name!r}")
    if spec.features not in ("default", "tabular"):
        raise ConfigError(f"environment.features must be default or tabular, got {spec.features!r}")
    if spec.name == "mdp":
        if not spec.path:
            raise ConfigError("environment.path is required for name 'mdp'")
        spec.path = str(_resolve(spec.path, base_dir))
        if spec.options:
            raise ConfigError("environment.options is not used for name 'mdp'")
    elif spec.path:
        raise ConfigError("environment.path is only used for name 'mdp'")
    if spec.options is not None:
        if spec.name == "room":
            from_dict(RoomConfig, spec.options, "environment.options")
        else:
            from_dict(LineKConfig, spec.options, "environment.options")
    return spec


def _resolve(path, base_dir: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else (base_dir / p)


def tabular_feature_map(n_states: int, n_actions: int) -> FeatureMap:
    return FeatureMap(np.eye(n_states * n_actions).reshape(n_states, n_actions, -1))


def build_environment(spec: EnvSpec) -> Environment:
    if spec.name == "mdp":
        mdp = load_mdp(spec.path)
        r_max = float(np.abs(mdp.base_reward).max()) or 1.0
        env = Environment("mdp", mdp, tabular_feature_map(mdp.n_states, mdp.n_actions),
                          target_policy(mdp), InitialPolicyFamily([]), r_max)
    else:
        env = make_environment(spec.name, **(spec.options or {}))
    if spec.features == "tabular":
        env.feature_map = tabular_feature_map(env.mdp.n_states, env.mdp.n_actions)
    return env


def parse_seeds(value) -> list:
    """An int n means seeds 0..n-1; a list is taken as is; "a-b" is inclusive."""
    if isinstance(value, bool):
        raise ConfigError("seeds must be an integer, a list or a range 'a-b'")
    if isinstance(value, int):
        if value < 1:
            raise ConfigError("seeds must be positive")
        return list(range(value))
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
        out = []
        for p in parts:
            if "-" in p:
                lo, hi = p.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(p))
        if not out:
            raise ConfigError("empty seed list")
        return out
    if isinstance(value, list) and value and all(isinstance(v, int) for v in value):
        return list(value)
    raise ConfigError("seeds must be an integer, a list or a range 'a-b'")


def load_config_text(path) -> str:
    if path is None:
        return "{}"
    return Path(path).read_text()


def parse_config(text: str, subcommand: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(data, TOP_KEYS[subcommand], "config")
    return data


def apply_overrides(data: dict, args) -> dict:
    """Command-line flags win over the config file."""
    data = json.loads(json.dumps(data))
    if getattr(args, "env", None):
        env = data.setdefault("environment", {})
        if env.get("name") not in (None, args.env):
            env.pop("options", None)
            env.pop("path", None)
        env["name"] = args.env
    if getattr(args, "mdp", None):
        data["environment"] = dict(data.get("environment", {}), name="mdp",
                                   path=str(Path(args.mdp).resolve()))
        data["environment"].pop("options", None)
    if getattr(args, "seed", None) is not None:
        if "training" in TOP_KEYS.get(args.command, ()):
            data.setdefault("training", {})["master_seed"] = args.seed
        elif args.command == "theorem1":
            data["seed"] = args.seed
    if getattr(args, "seeds", None):
        data["seeds"] = args.seeds
    if getattr(args, "episodes", None) is not None:
        data.setdefault("training", {})["episodes"] = args.episodes
    if getattr(args, "workers", None) is not None:
        data["workers"] = args.workers
    return data


# ---------------------------------------------------------------- subcommands


def _manifest(command: str, config_text: str, resolved: dict, argv) -> dict:
    return {"format": MANIFEST_TAG, "subcommand": command, "code_version": __version__,
            "argv": list(argv), "config_text": config_text, "config": resolved,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S")}


def _training_config(data: dict) -> TrainingConfig:
    return from_dict(TrainingConfig, data.get("training", {}), "training")


def _external_reward(data: dict, env: Environment, base_dir: Path):
    if "external_reward" not in data:
        return None
    _, table, _, _ = load_table(_resolve(data["external_reward"], base_dir))
    if table.shape != (env.mdp.n_states, env.mdp.n_actions):
        raise ConfigError(f"external_reward has shape {table.shape}, expected "
                          f"{(env.mdp.n_states, env.mdp.n_actions)}")
    return table


def _setting(data: dict, env: Environment) -> str:
    setting = data.get("setting", "single")
    if setting not in SETTINGS:
        raise ConfigError(f"setting must be one of {SETTINGS}, got {setting!r}")
    if setting == "diverse" and not env.family.designated:
        raise ConfigError("the diverse setting needs the room or linek environment")
    return setting


def cmd_design(data: dict, out: Path, base_dir: Path) -> int:
    env = build_environment(parse_env(data.get("environment"), base_dir))
    dcfg = from_dict(DesignerConfig, data.get("designer", {}), "designer")
    learner = data.get("learner_policy", "uniform")
    S, A = env.mdp.n_states, env.mdp.n_actions
    if learner == "uniform":
        learner = uniform_policy(S, A)
    elif learner == "target":
        learner = env.target
    elif isinstance(learner, str):
        _, learner, _, _ = load_table(_resolve(learner, base_dir))
    else:
        raise ConfigError("learner_policy must be 'uniform', 'target' or a table path")
    designer = make_designer(env.mdp, env.feature_map, env.target, dcfg, None, env.r_max)
    ctx = designer.context(learner)
    problem = DesignProblem(ctx, env.feature_map, designer.r_max, dcfg.objective, dcfg.depth,
                            dcfg.support, dcfg.invariance, dcfg.strict_margin)
    sol = solve_design(problem)
    if sol.status != "optimal":
        write_json(out / "design_failure.json",
                   {"status": sol.status, "iterations": sol.iterations,
                    "n_constraints": int(designer.G.shape[0]), "r_max": designer.r_max})
        print(f"design failed: {sol.status}", file=sys.stderr)
        return EXIT_INFEASIBLE
    reward = sol.reward(env.feature_map)
    names = (env.mdp.state_names, env.mdp.action_names)
    save_table(out / "reward.tsv", reward, "reward", *names)
    report = verify_policy_invariance(reward, env.mdp, env.target)
    write_json(out / "design.json", {
        "solution": lp_solution_dict(sol), "phi": sol.phi, "objective": dcfg.objective,
        "objective_value": sol.objective_value, "r_max": designer.r_max,
        "invariance": {"checked": True, "passed": report.passed,
                       "state_pass": report.state_pass,
                       "new_optimal_actions": report.new_optimal_actions}})
    print(f"objective {dcfg.objective} = {sol.objective_value:.6g}; "
          f"invariance {'PASS' if report.passed else 'FAIL'}")
    return EXIT_OK


def _run_and_write(data, out, base_dir, techniques, seeds):
    env = build_environment(parse_env(data.get("environment"), base_dir))
    cfg = _training_config(data)
    setting = _setting(data, env)
    external = _external_reward(data, env, base_dir)
    if "external" in techniques and external is None:
        raise ConfigError("technique 'external' needs external_reward")
    workers = int(data.get("workers", 1))
    records = run_comparison(env, cfg, techniques, seeds, setting, external, workers)
    for rec in records:
        write_run(out / "runs" / f"{rec.technique}_seed{rec.run_index}", rec, env.mdp)
    return env, cfg, records


def cmd_train(data: dict, out: Path, base_dir: Path) -> int:
    tech = data.get("technique", "adaptive")
    if tech not in TECHNIQUES:
        raise ConfigError(f"technique must be one of {TECHNIQUES}, got {tech!r}")
    seeds = parse_seeds(data.get("seeds", 1))
    _, _, records = _run_and_write(data, out, base_dir, [tech], seeds)
    for rec in records:
        print(f"{rec.technique} seed {rec.run_index}: final J = {rec.rows[-1].mean_J:.4f} "
              f"(target {rec.target_return:.4f}) after {rec.rows[-1].episode} episodes")
    return EXIT_OK


def cmd_compare(data: dict, out: Path, base_dir: Path) -> int:
    techs = data.get("techniques", ["adaptive", "orig", "invar"])
    if not isinstance(techs, list) or len(set(techs)) < 2:
        raise ConfigError("compare needs at least two distinct techniques")
    for t in techs:
        if t not in TECHNIQUES:
            raise ConfigError(f"unknown technique {t!r}; choose from {TECHNIQUES}")
    frac = float(data.get("threshold_fraction", 0.9))
    seeds = parse_seeds(data.get("seeds", 20))
    env, cfg, records = _run_and_write(data, out, base_dir, techs, seeds)
    summary = compare_runs(records, frac, cfg.episodes)
    ranking = sorted(summary, key=lambda t: summary[t].median)
    write_comparison(out / "comparison.json", summary, frac,
                     {"environment": env.name, "setting": data.get("setting", "single"),
                      "seeds": seeds, "ranking_by_median": ranking})
    print(f"episodes to {frac:.0%} of J(pi_t) ({len(seeds)} seeds, censored at "
          f"{cfg.episodes + 1}):")
    for t in ranking:
        s = summary[t]
        print(f"  {t:10s} median {s.median:8.0f}  IQR [{s.q25:.0f}, {s.q75:.0f}]  "
              f"censored {s.n_censored}")
    return EXIT_OK


def cmd_theorem1(data: dict, out: Path, base_dir: Path) -> int:
    kw = {k: data[k] for k in ("n_mdps", "max_states", "min_actions", "max_actions", "seed",
                               "r_max") if k in data}
    t0 = time.perf_counter()
    reports = theorem1_suite(**kw)
    elapsed = time.perf_counter() - t0
    n_ok = sum(r.passed for r in reports)
    sizes = {r.n_actions for r in reports}
    bound = str(sizes.pop()) if len(sizes) == 1 else "|A|"
    write_json(out / "theorem1.json", {
        "n_mdps": len(reports), "converged": n_ok, "seconds": elapsed,
        "instances": [{"n_states": int(len(r.target_support)), "n_actions": r.n_actions,
                       "converged_round": r.converged_round} for r in reports]})
    print(f"converged ≤ {bound} rounds: {n_ok}/{len(reports)} ({elapsed:.2f} s)")
    return EXIT_OK if n_ok == len(reports) else EXIT_VIOLATION


def cmd_verify(data: dict, out: Path, base_dir: Path) -> int:
    from .verify import CHECKS, run_checks

    names = data.get("checks")
    if names is not None:
        unknown = [n for n in names if n not in CHECKS]
        if unknown:
            raise ConfigError(f"unknown checks {unknown}")
    results = run_checks(names)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail} ({r.seconds:.1f} s)")
    write_json(out / "verify.json", [dataclasses.asdict(r) for r in results])
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"violated: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"all {len(results)} checks passed")
    return EXIT_OK


COMMANDS = {"design": cmd_design, "train": cmd_train, "compare": cmd_compare,
            "theorem1": cmd_theorem1, "verify": cmd_verify}


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reward-design",
                                     description="Adaptive explicable reward design toolkit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "design": "solve one reward-design problem and verify invariance",
        "train": "train one technique over one or more seeds",
        "compare": "run several techniques over seeds and summarize episodes-to-threshold",
        "theorem1": "bang-bang design with a greedy learner on random MDPs",
        "verify": "run the named property suite",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name], description=helps[name])
        p.add_argument("-c", "--config", help="JSON config file (default: built-in defaults)")
        p.add_argument("-o", "--out", help="output directory (default: reward-design-out/<cmd>)")
        if name in ("design", "train", "compare"):
            p.add_argument("--env", choices=("room", "linek"), help="environment selector")
            p.add_argument("--mdp", help="custom MDP file (overrides --env)")
        if name in ("train", "compare", "theorem1"):
            p.add_argument("--seed", type=int, help="master seed override")
        if name in ("train", "compare"):
            p.add_argument("--seeds", help="run indices, e.g. 20, '0-19' or '1,4,7'")
            p.add_argument("--episodes", type=int, help="episodes per run override")
        if name == "compare":
            p.add_argument("--workers", type=int, help="parallel processes across runs")
    p = sub.add_parser("replay", help="rerun a subcommand from its manifest",
                       description="rerun a subcommand from its manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--out", required=True, help="output directory")
    return parser


def _normalize_seeds_flag(args):
    if getattr(args, "seeds", None):
        s = args.seeds
        args.seeds = int(s) if s.isdigit() else s


def run(command: str, config_text: str, resolved: dict, out: Path, base_dir: Path, argv) -> int:
    out.mkdir(parents=True, exist_ok=True)
    start_run_dir(out, _manifest(command, config_text, resolved, argv))
    try:
        return COMMANDS[command](resolved, out, base_dir)
    except DesignFailure as exc:
        write_json(out / "design_failure.json",
                   {"message": str(exc), "episode": exc.episode, "status": exc.status})
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            manifest = json.loads(Path(args.manifest).read_text())
            if manifest.get("format") != MANIFEST_TAG:
                raise ConfigError(f"{args.manifest} is not a {MANIFEST_TAG} manifest")
            command, resolved = manifest["subcommand"], manifest["config"]
            _check_keys(resolved, TOP_KEYS[command], "config")
            return run(command, manifest["config_text"], resolved, Path(args.out),
                       Path(args.manifest).resolve().parent, argv)
        _normalize_seeds_flag(args)
        text = load_config_text(args.config)
        data = parse_config(text, args.command)
        base_dir = Path(args.config).resolve().parent if args.config else Path.cwd()
        resolved = _absolute_paths(apply_overrides(data, args), base_dir)
        out = Path(args.out or Path("reward-design-out") / args.command)
        return run(args.command, text, resolved, out, base_dir, argv)
    except (ValueError, FileNotFoundError) as exc:  # ConfigError, FormatError, MapParseError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def _absolute_paths(data: dict, base_dir: Path) -> dict:
    """Make file references absolute so the manifest replays from anywhere."""
    env = data.get("environment")
    if isinstance(env, dict) and env.get("path"):
        env["path"] = str(_resolve(env["path"], base_dir).resolve())
    for key in ("external_reward", "learner_policy"):
        v = data.get(key)
        if isinstance(v, str) and v not in ("uniform", "target"):
            data[key] = str(_resolve(v, base_dir).resolve())
    return data


if __name__ == "__main__":
    sys.exit(main())
