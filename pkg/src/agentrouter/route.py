"""Inference-time routing: top-k clipping and weighted voting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluate import normalize_answer
from .gnn import forward


@dataclass
class RoutingResult:
    record_id: str
    probs: np.ndarray
    selected: list  # (agent_id, weight), clip order
    fused_answer: str
    tally: dict
    flags: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "probs": [float(p) for p in self.probs],
            "selected": [[a, float(w)] for a, w in self.selected],
            "fused_answer": self.fused_answer,
            "tally": {k: float(v) for k, v in self.tally.items()},
        }


def top_k_clip(probs, k: int) -> list[tuple[int, float]]:
    """Keep the k largest entries (ties -> lower index) and renormalize."""
    if k < 1:
        raise ValueError("k must be at least 1")
    probs = np.asarray(probs, dtype=float)
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))[:k]
    total = float(sum(probs[i] for i in order))
    if total <= 0:
        return [(i, 1.0 / len(order)) for i in order]
    return [(i, float(probs[i]) / total) for i in order]


def weighted_vote(answers, weights, indices=None):
    """Pool weights per normalized answer; returns (winner, tally, flags).

    Ties between answer groups go to the group with the heavier single
    supporter, then to the one whose supporter has the lowest index.  The
    winner is reported in the surface form of its heaviest supporter.
    """
    if len(answers) != len(weights):
        raise ValueError("answers and weights differ in length")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be nonnegative")
    indices = list(range(len(answers))) if indices is None else list(indices)
    tally: dict[str, float] = {}
    best_single: dict[str, tuple] = {}
    for ans, w, idx in zip(answers, weights, indices):
        key = normalize_answer(ans)
        tally[key] = tally.get(key, 0.0) + w
        cand = (w, -idx, ans)
        if key not in best_single or cand[:2] > best_single[key][:2]:
            best_single[key] = cand
    contenders = [k for k in tally if k] or [k for k in tally]
    if not any(contenders):
        return "", tally, ["all answers empty after normalization"]
    winner = max(contenders, key=lambda k: (tally[k], best_single[k][0], best_single[k][1]))
    return best_single[winner][2].strip(), tally, []


def fuse(probs, answers, k: int, agent_ids=None, record_id: str = "") -> RoutingResult:
    """Clip a routing distribution and vote over the selected agents' answers."""
    agent_ids = list(agent_ids) if agent_ids is not None else [str(i) for i in range(len(probs))]
    if len(answers) != len(probs):
        raise ValueError(f"{len(answers)} answers for {len(probs)} agents")
    selected = top_k_clip(probs, k)
    winner, tally, flags = weighted_vote(
        [answers[i] for i, _ in selected], [w for _, w in selected], [i for i, _ in selected]
    )
    return RoutingResult(
        record_id=record_id,
        probs=np.asarray(probs, dtype=float),
        selected=[(agent_ids[i], w) for i, w in selected],
        fused_answer=winner,
        tally=tally,
        flags=flags,
    )


def route_record(record_id: str, cg, X, params, answers, k: int) -> RoutingResult:
    """Forward pass, clip and vote for one record (answers in canonical agent order)."""
    _, dist = forward(cg, X, params)
    return fuse(dist.probs, answers, k, cg.agent_ids, record_id)
