"""JSON configs, JSON-lines episode logs and CSV exports, all written atomically."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from typing import Iterable, Optional

import numpy as np

from .forward import SolvedPolicy, policy_table, termination_set
from .inverse import DataInconsistency, PosteriorChain
from .problem import (
    ACQUIRE,
    DECIDE,
    DecisionProblem,
    Episode,
    Preferences,
    Step,
    validate_episode,
    validate_preferences,
    validate_problem,
)
from .simulate import EpisodeDataset


class ConfigError(ValueError):
    """A configuration file is unreadable, malformed or fails validation."""


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_json(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return doc


# -- problems -----------------------------------------------------------------


def problem_to_dict(problem: DecisionProblem) -> dict:
    return {
        "theta": list(problem.theta_names),
        "lambda": list(problem.lambda_names),
        "omega_count": problem.n_omega,
        "q": np.asarray(problem.q, dtype=float).tolist(),
        "p": np.asarray(problem.p, dtype=float).tolist(),
        "c": np.asarray(problem.c, dtype=float).tolist(),
        "mu0": np.asarray(problem.mu0, dtype=float).tolist(),
    }


def problem_from_dict(doc: dict) -> DecisionProblem:
    missing = [k for k in ("theta", "lambda", "omega_count", "q", "p", "c", "mu0") if k not in doc]
    if missing:
        raise ConfigError(f"problem config lacks keys: {', '.join(missing)}")
    try:
        problem = DecisionProblem(
            q=np.asarray(doc["q"], dtype=float),
            p=np.asarray(doc["p"], dtype=float),
            c=np.asarray(doc["c"], dtype=float),
            mu0=np.asarray(doc["mu0"], dtype=float),
            theta_names=tuple(doc["theta"]),
            lambda_names=tuple(doc["lambda"]),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"problem config: {exc}") from None
    if problem.n_omega != int(doc["omega_count"]):
        raise ConfigError(f"q has {problem.n_omega} outcomes but omega_count is {doc['omega_count']}")
    report = validate_problem(problem)
    if report:
        raise ConfigError("invalid problem: " + "; ".join(report))
    return problem


def load_problem(path: str) -> DecisionProblem:
    return problem_from_dict(_read_json(path))


def save_problem(problem: DecisionProblem, path: str) -> None:
    atomic_write(path, json.dumps(problem_to_dict(problem), indent=2) + "\n")


# -- preferences -----------------------------------------------------------------


def prefs_to_dict(prefs: Preferences) -> dict:
    doc = {
        "criterion": prefs.criterion.value,
        "eta_a": prefs.eta_a.tolist(),
        "eta_b": prefs.eta_b.tolist(),
        "eta_c": prefs.eta_c.tolist(),
        "rho": prefs.rho,
    }
    if prefs.eta_d is not None:
        doc["eta_d"] = prefs.eta_d.tolist()
    if prefs.weighted_entropy:
        doc["weighted_entropy"] = True
    return doc


def prefs_from_dict(doc: dict, problem: Optional[DecisionProblem] = None) -> Preferences:
    try:
        prefs = Preferences(
            eta_a=doc.get("eta_a", np.ones(len(doc.get("eta_b", [])))),
            eta_b=doc["eta_b"],
            eta_c=doc["eta_c"],
            eta_d=doc.get("eta_d"),
            criterion=doc.get("criterion", "optimal"),
            rho=doc.get("rho", 10.0),
            weighted_entropy=bool(doc.get("weighted_entropy", False)),
        )
    except KeyError as exc:
        raise ConfigError(f"preferences lack key {exc}") from None
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"preferences: {exc}") from None
    if problem is not None:
        report = validate_preferences(prefs, problem)
        if report:
            raise ConfigError("invalid preferences: " + "; ".join(report))
    return prefs


def load_prefs(path: str, problem: Optional[DecisionProblem] = None) -> Preferences:
    return prefs_from_dict(_read_json(path), problem)


def save_prefs(prefs: Preferences, path: str) -> None:
    atomic_write(path, json.dumps(prefs_to_dict(prefs), indent=2) + "\n")


# -- episodes ----------------------------------------------------------------------


def episode_to_record(episode: Episode, include_truth: bool = True) -> dict:
    steps = [
        {
            "t": t,
            "action": {"kind": s.kind, "index": s.index},
            "outcome": s.outcome,
            "survived": s.survived,
        }
        for t, s in enumerate(episode.steps)
    ]
    return {
        "episode_id": episode.episode_id,
        "prior": [float(x) for x in episode.prior],
        "steps": steps,
        "truth": episode.truth if include_truth else None,
    }


def episode_from_record(rec: dict) -> Episode:
    steps = []
    for s in rec["steps"]:
        action = s["action"]
        kind = action["kind"]
        if kind not in (ACQUIRE, DECIDE):
            raise ValueError(f"unknown action kind {kind!r}")
        outcome = s.get("outcome")
        steps.append(Step(kind, int(action["index"]), None if outcome is None else int(outcome), bool(s.get("survived", True))))
    truth = rec.get("truth")
    return Episode(np.asarray(rec["prior"], dtype=float), tuple(steps), None if truth is None else int(truth), int(rec["episode_id"]))


def dataset_to_jsonl(dataset: EpisodeDataset, include_truth: bool = True) -> str:
    header = {"header": {"fingerprint": dataset.fingerprint, **dataset.metadata}}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(episode_to_record(ep, include_truth)) for ep in dataset]
    return "\n".join(lines) + "\n"


def save_dataset(dataset: EpisodeDataset, path: str, include_truth: bool = True) -> None:
    atomic_write(path, dataset_to_jsonl(dataset, include_truth))


def read_dataset(lines: Iterable[str], problem: Optional[DecisionProblem] = None) -> EpisodeDataset:
    """Parse a JSON-lines log; problems are reported with their 1-based line number."""
    episodes = []
    meta: dict = {}
    fingerprint = ""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataInconsistency(f"line {lineno}: invalid JSON ({exc.msg})") from None
        if "header" in rec:
            meta = dict(rec["header"])
            fingerprint = meta.pop("fingerprint", "")
            continue
        try:
            ep = episode_from_record(rec)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataInconsistency(f"line {lineno}: malformed episode record ({exc})") from None
        if problem is not None:
            report = validate_episode(ep, problem)
            if report:
                raise DataInconsistency(f"line {lineno}: " + "; ".join(report))
        episodes.append(ep)
    return EpisodeDataset(tuple(episodes), fingerprint, meta)


def load_dataset(path: str, problem: Optional[DecisionProblem] = None) -> EpisodeDataset:
    with open(path, encoding="utf-8") as fh:
        return read_dataset(fh, problem)


# -- tables ------------------------------------------------------------------------


def csv_text(header: list[str], rows: Iterable[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def policy_csv(policy: SolvedPolicy, problem: DecisionProblem) -> str:
    header, rows = policy_table(policy, problem)
    return csv_text(header, rows)


def strategy_map_csv(policy: SolvedPolicy, problem: DecisionProblem) -> str:
    """Grid point coordinates with the action the optimal strategy takes there."""
    tmap = termination_set(policy)
    header = [f"mu_{name}" for name in problem.theta_names] + ["label", "action"]
    rows = []
    for i, point in enumerate(policy.grid.points):
        kind, index = tmap.label(i)
        name = problem.theta_names[index] if kind == "terminate" else problem.lambda_names[index]
        rows.append([f"{x:.12g}" for x in point] + [kind, name])
    return csv_text(header, rows)


def chain_csv(chain: PosteriorChain) -> str:
    """Retained samples: every weight coordinate, rho, log-posterior and acceptance flag."""
    lattice = chain.lattice
    header = ["step"] + lattice.axis_names + ["rho", "log_posterior", "accepted"]
    rows = []
    for i in range(chain.burn_in, len(chain.points)):
        pt = chain.points[i]
        rows.append(
            [i]
            + [f"{v / lattice.steps:.10g}" for v in pt[:-1]]
            + [repr(lattice.rho_grid[pt[-1]]), repr(float(chain.log_post[i])), int(chain.accepted[i])]
        )
    return csv_text(header, rows)


def read_chain_csv(path: str) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader]
    data = np.array(rows).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}
