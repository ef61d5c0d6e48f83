"""Plain-text file formats: MDPs, tables, LP problems/solutions, configs and
run directories. Every format starts with a versioned tag.

MDP matrix format (``reward-design-mdp/1``)
-------------------------------------------
::

    # reward-design-mdp/1
    n_states 3
    n_actions 2
    gamma 0.9
    horizon 30
    states s0 s1 s2            (optional)
    actions left right         (optional)
    [initial]
    0.5 0.5 0
    [transition]
    0 0 : 1 0 0                s a : T(.|s,a), one row per pair
    ...
    [reward]
    0 : 0 1                    s : R(s,.)
    ...
    [terminal]
    0 : 0 1                    s : 0/1 flag per action

Blank lines and text after ``#`` are ignored. Floats are written with
``repr`` so a file round-trips bit for bit.

Table format (``reward-design-table/1``)
----------------------------------------
Tab-separated: a ``# reward-design-table/1 kind=<kind>`` line, a header row
``state`` followed by one column per action, then one row per state.

Run directory
-------------
``manifest.json`` (written first), ``convergence.csv``,
``snapshots/{reward,policy}_<episode>.tsv``, ``record.json`` (final policy and
summary). Comparisons add ``comparison.json``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from .mdp import TabularMdp

MDP_TAG = "reward-design-mdp/1"
TABLE_TAG = "reward-design-table/1"
LP_TAG = "reward-design-lp/1"
LP_SOLUTION_TAG = "reward-design-lp-solution/1"
CONVERGENCE_TAG = "reward-design-convergence/1"
COMPARISON_TAG = "reward-design-comparison/1"
CONVERGENCE_COLUMNS = ("episode", "mean_J", "stderr_J", "objective", "reward_hash")


class FormatError(ValueError):
    pass


def _num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


# ---------------------------------------------------------------- MDP


def dump_mdp(mdp: TabularMdp) -> str:
    S, A = mdp.n_states, mdp.n_actions
    out = [f"# {MDP_TAG}", f"n_states {S}", f"n_actions {A}", f"gamma {mdp.gamma!r}",
           f"horizon {mdp.horizon}"]
    if mdp.state_names:
        out.append("states " + " ".join(mdp.state_names))
    if mdp.action_names:
        out.append("actions " + " ".join(mdp.action_names))
    out += ["[initial]", " ".join(_num(p) for p in mdp.initial_dist), "[transition]"]
    for s in range(S):
        for a in range(A):
            out.append(f"{s} {a} : " + " ".join(_num(p) for p in mdp.transition[s, a]))
    out.append("[reward]")
    out += [f"{s} : " + " ".join(_num(r) for r in mdp.base_reward[s]) for s in range(S)]
    out.append("[terminal]")
    out += [f"{s} : " + " ".join(str(int(t)) for t in mdp.terminal_mask[s]) for s in range(S)]
    return "\n".join(out) + "\n"


def parse_mdp(text: str) -> TabularMdp:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {MDP_TAG}":
        raise FormatError(f"first line must be '# {MDP_TAG}'")
    header, sections, current = {}, {}, None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in ("initial", "transition", "reward", "terminal"):
                raise FormatError(f"line {lineno}: unknown section [{current}]")
            sections[current] = []
            continue
        if current is None:
            key, _, value = line.partition(" ")
            header[key] = value.strip()
        else:
            sections[current].append((lineno, line))
    try:
        S, A = int(header["n_states"]), int(header["n_actions"])
        gamma, horizon = float(header["gamma"]), int(header["horizon"])
    except KeyError as e:
        raise FormatError(f"missing header field {e.args[0]!r}") from None
    for name in ("initial", "transition", "reward", "terminal"):
        if name not in sections:
            raise FormatError(f"missing section [{name}]")
    if len(sections["initial"]) != 1:
        raise FormatError("[initial] must hold exactly one line")
    p0 = _floats(*sections["initial"][0], S)
    T = np.full((S, A, S), np.nan)
    for lineno, line in sections["transition"]:
        idx, values = _keyed(lineno, line, 2)
        T[idx[0], idx[1]] = _floats(lineno, values, S)
    R = np.full((S, A), np.nan)
    term = np.full((S, A), -1)
    for lineno, line in sections["reward"]:
        idx, values = _keyed(lineno, line, 1)
        R[idx[0]] = _floats(lineno, values, A)
    for lineno, line in sections["terminal"]:
        idx, values = _keyed(lineno, line, 1)
        term[idx[0]] = _floats(lineno, values, A)
    if np.isnan(T).any() or np.isnan(R).any() or (term < 0).any():
        raise FormatError("every (s, a) needs a transition row and every state a reward and terminal row")
    states = tuple(header["states"].split()) if "states" in header else None
    actions = tuple(header["actions"].split()) if "actions" in header else None
    return TabularMdp(T, p0, gamma, horizon, R, term.astype(bool), states, actions)


def _keyed(lineno, line, n_keys):
    key, sep, values = line.partition(":")
    if not sep:
        raise FormatError(f"line {lineno}: expected 'index : values'")
    try:
        idx = [int(k) for k in key.split()]
    except ValueError:
        raise FormatError(f"line {lineno}: bad index {key.strip()!r}") from None
    if len(idx) != n_keys:
        raise FormatError(f"line {lineno}: expected {n_keys} index values")
    return idx, values


def _floats(lineno, text, n):
    try:
        vals = np.array([float(v) for v in text.split()])
    except ValueError:
        raise FormatError(f"line {lineno}: non-numeric entry") from None
    if len(vals) != n:
        raise FormatError(f"line {lineno}: expected {n} values, got {len(vals)}")
    return vals


def save_mdp(mdp: TabularMdp, path) -> None:
    Path(path).write_text(dump_mdp(mdp))


def load_mdp(path) -> TabularMdp:
    return parse_mdp(Path(path).read_text())


# ---------------------------------------------------------------- tables


def dump_table(table, kind: str, state_names=None, action_names=None) -> str:
    table = np.asarray(table, dtype=float)
    S, A = table.shape
    state_names = state_names or [str(s) for s in range(S)]
    action_names = action_names or [f"a{a}" for a in range(A)]
    out = [f"# {TABLE_TAG} kind={kind}", "\t".join(["state", *action_names])]
    out += ["\t".join([state_names[s], *(repr(float(x)) for x in table[s])]) for s in range(S)]
    return "\n".join(out) + "\n"


def parse_table(text: str):
    """Returns (kind, table, state_names, action_names)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith(f"# {TABLE_TAG}"):
        raise FormatError(f"first line must start with '# {TABLE_TAG}'")
    kind = lines[0].partition("kind=")[2].strip()
    header = lines[1].split("\t")
    rows = [ln.split("\t") for ln in lines[2:]]
    table = np.array([[float(x) for x in r[1:]] for r in rows])
    return kind, table, [r[0] for r in rows], header[1:]


def save_table(path, table, kind: str, state_names=None, action_names=None) -> None:
    Path(path).write_text(dump_table(table, kind, state_names, action_names))


def load_table(path):
    return parse_table(Path(path).read_text())


# ---------------------------------------------------------------- LP


def lp_problem_dict(c, A_ub, b_ub, lower, upper=None) -> dict:
    return {"format": LP_TAG, "c": np.asarray(c, float).tolist(),
            "A_ub": np.asarray(A_ub, float).tolist(), "b_ub": np.asarray(b_ub, float).tolist(),
            "lower": np.asarray(lower, float).tolist(),
            "upper": None if upper is None else np.asarray(upper, float).tolist()}


def lp_problem_from_dict(d: dict):
    if d.get("format") != LP_TAG:
        raise FormatError(f"expected format {LP_TAG!r}")
    n = len(d["c"])
    A = np.array(d["A_ub"], dtype=float).reshape(-1, n)
    upper = None if d.get("upper") is None else np.array(d["upper"], dtype=float)
    return np.array(d["c"], float), A, np.array(d["b_ub"], float), np.array(d["lower"], float), upper


def lp_solution_dict(solution) -> dict:
    """Works for both LpResult (x) and LpSolution (phi)."""
    x = getattr(solution, "phi", None)
    if x is None:
        x = getattr(solution, "x", None)
    obj = getattr(solution, "objective_value", getattr(solution, "objective", float("nan")))
    active = getattr(solution, "certificate", getattr(solution, "active", []))
    return {"format": LP_SOLUTION_TAG, "status": solution.status,
            "x": None if x is None else np.asarray(x, float).tolist(),
            "objective": None if obj is None or np.isnan(obj) else float(obj),
            "active": [[k, int(i)] for k, i in active],
            "iterations": int(getattr(solution, "iterations", 0))}


# ---------------------------------------------------------------- JSON helpers


def to_jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: to_jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


# ---------------------------------------------------------------- run directories


def write_convergence_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CONVERGENCE_TAG}\n")
        w = csv.writer(fh)
        w.writerow(CONVERGENCE_COLUMNS)
        for r in rows:
            w.writerow([r.episode, repr(float(r.mean_J)), repr(float(r.stderr_J)),
                        repr(float(r.objective)), r.reward_hash])


def read_convergence_csv(path):
    from .harness import EvalRow

    with open(path, newline="") as fh:
        tag = fh.readline().strip()
        if tag != f"# {CONVERGENCE_TAG}":
            raise FormatError(f"unexpected header {tag!r}")
        reader = csv.reader(fh)
        cols = tuple(next(reader))
        if cols != CONVERGENCE_COLUMNS:
            raise FormatError(f"unexpected columns {cols}")
        return [EvalRow(int(e), float(m), float(s), float(o), h) for e, m, s, o, h in reader]


def start_run_dir(path, manifest: dict) -> Path:
    """Create the directory and write the manifest before anything else."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_json(path / "manifest.json", manifest)
    return path


def write_run(path, record, mdp: TabularMdp = None) -> Path:
    path = start_run_dir(path, record.manifest)
    write_convergence_csv(path / "convergence.csv", record.rows)
    names = (mdp.state_names, mdp.action_names) if mdp is not None else (None, None)
    if record.snapshots:
        snap = path / "snapshots"
        snap.mkdir(exist_ok=True)
        for k, reward, policy in record.snapshots:
            save_table(snap / f"reward_{k}.tsv", reward, "reward", *names)
            save_table(snap / f"policy_{k}.tsv", policy, "policy", *names)
    save_table(path / "final_policy.tsv", record.final_policy, "policy", *names)
    write_json(path / "record.json", {
        "technique": record.technique, "run_index": record.run_index,
        "target_return": record.target_return, "n_designs": record.n_designs,
        "fingerprint": record.fingerprint()})
    return path


def write_comparison(path, summary: dict, threshold_fraction: float, extra=None) -> None:
    out = {"format": COMPARISON_TAG, "threshold_fraction": threshold_fraction,
           "techniques": {k: v.as_dict() for k, v in summary.items()}}
    out.update(extra or {})
    write_json(path, out)


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
