"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np


def check_f1_matrix(y, n_samples: int, n_agents: int | None = None) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError(f"expected a 2-d (records, agents) F1 matrix, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise ValueError(f"F1 matrix has {y.shape[0]} rows for {n_samples} graphs")
    if n_agents is not None and y.shape[1] != n_agents:
        raise ValueError(f"F1 matrix has {y.shape[1]} columns for {n_agents} agents")
    if not np.all(np.isfinite(y)) or y.min() < 0 or y.max() > 1:
        raise ValueError("F1 scores must be finite and lie in [0, 1]")
    return y


def check_encoded_graphs(X) -> list:
    X = list(X)
    if not X:
        raise ValueError("expected at least one encoded graph")
    dims = {x.features.shape[1] for x in X}
    if len(dims) != 1:
        raise ValueError(f"encoded graphs disagree on feature dimension: {sorted(dims)}")
    orders = {tuple(x.compiled.agent_ids) for x in X}
    if len(orders) != 1:
        raise ValueError("encoded graphs disagree on the agent pool or its order")
    return X


def check_answers(answers, n_samples: int, n_agents: int) -> list:
    answers = [list(a) for a in answers]
    if len(answers) != n_samples:
        raise ValueError(f"{len(answers)} answer rows for {n_samples} graphs")
    for i, row in enumerate(answers):
        if len(row) != n_agents:
            raise ValueError(f"answer row {i} has {len(row)} entries for {n_agents} agents")
    return answers


def check_agent_order(expected, found, where: str = "checkpoint") -> None:
    if list(expected) != list(found):
        raise ValueError(f"agent order of the {where} does not match the data's canonical order")
