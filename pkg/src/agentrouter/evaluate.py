"""SQuAD-style EM/F1, seed aggregation, heuristic baselines and drop tables."""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)

BASELINE_METHODS = ("average", "majority_vote", "best_llm", "best_agent", "oracle")
TABLE_METHODS = ("average", "majority_vote", "best_llm", "best_agent", "router", "oracle")
TRANSFER_KS = (3, 6, 9, 12, 15, 18, 21, 24)


def normalize_answer(s: str) -> str:
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def exact_match(pred: str, golds) -> int:
    p = normalize_answer(pred)
    return int(any(p == normalize_answer(g) for g in golds))


def _f1_single(pred_tokens, gold_tokens) -> float:
    if not pred_tokens and not gold_tokens:
        return 1.0
    if not pred_tokens or not gold_tokens:
        return 0.0
    common = Counter(pred_tokens) & Counter(gold_tokens)
    overlap = sum(common.values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(pred: str, golds) -> float:
    """Bag-of-tokens F1 against the best-matching gold answer."""
    pred_tokens = normalize_answer(pred).split()
    return max(_f1_single(pred_tokens, normalize_answer(g).split()) for g in golds)


@dataclass
class EvalReport:
    method: str
    dataset: str
    f1_mean: float
    f1_std: float
    em_mean: float
    em_std: float
    n_seeds: int
    k: int | None = None
    detail: str = ""
    per_record: list = field(default_factory=list, repr=False)  # per seed: list of (em, f1)

    def row(self) -> dict:
        return {
            "method": self.method, "dataset": self.dataset, "k": self.k,
            "f1_mean": round(self.f1_mean, 6), "f1_std": round(self.f1_std, 6),
            "em_mean": round(self.em_mean, 6), "em_std": round(self.em_std, 6),
            "n_seeds": self.n_seeds,
        }


def aggregate_scores(em_per_seed, f1_per_seed, method: str, dataset: str = "", k=None) -> EvalReport:
    """Per-seed dataset means (x100), then mean and population std across seeds."""
    if not em_per_seed or len(em_per_seed) != len(f1_per_seed):
        raise ValueError("need the same non-zero number of EM and F1 seed results")
    lengths = {len(s) for s in em_per_seed} | {len(s) for s in f1_per_seed}
    if len(lengths) != 1:
        raise ValueError(f"seed results have mismatched lengths {sorted(lengths)}")
    em_means = np.array([100.0 * np.mean(s) for s in em_per_seed])
    f1_means = np.array([100.0 * np.mean(s) for s in f1_per_seed])
    return EvalReport(
        method=method, dataset=dataset,
        f1_mean=float(f1_means.mean()), f1_std=float(f1_means.std()),
        em_mean=float(em_means.mean()), em_std=float(em_means.std()),
        n_seeds=len(em_per_seed), k=k,
        per_record=[list(zip(e, f)) for e, f in zip(em_per_seed, f1_per_seed)],
    )


def evaluate_method(predictions_per_seed, golds, method: str, dataset: str = "", k=None) -> EvalReport:
    ems, f1s = [], []
    for preds in predictions_per_seed:
        if len(preds) != len(golds):
            raise ValueError(f"{len(preds)} predictions for {len(golds)} records")
        ems.append([exact_match(p, g) for p, g in zip(preds, golds)])
        f1s.append([token_f1(p, g) for p, g in zip(preds, golds)])
    return aggregate_scores(ems, f1s, method, dataset, k)


def score_matrix(joined) -> tuple[np.ndarray, np.ndarray]:
    """EM and F1 matrices of shape (records, agents)."""
    em = np.array([[exact_match(a, j.record.gold_answers) for a in j.answers] for j in joined], dtype=float)
    f1 = np.array([[token_f1(a, j.record.gold_answers) for a in j.answers] for j in joined])
    return em, f1


def _available(joined, agent_ids) -> np.ndarray:
    avail = np.ones((len(joined), len(agent_ids)), dtype=bool)
    index = {a: i for i, a in enumerate(agent_ids)}
    for r, j in enumerate(joined):
        for a in j.missing:
            avail[r, index[a]] = False
    return avail


def baselines(test_joined, agent_ids, train_joined=None, n_seeds: int = 1, dataset: str = "",
              flags=None) -> dict[str, EvalReport]:
    """Heuristic ensembling baselines from cached agent answers.

    ``best_llm`` and ``best_agent`` pick on ``train_joined`` (the test set
    itself when none is given, which is flagged) and are scored on the test set.
    """
    from .route import weighted_vote

    flags = flags if flags is not None else []
    if not test_joined:
        raise ValueError("baselines need at least one test record")
    em, f1 = score_matrix(test_joined)
    avail = _available(test_joined, agent_ids)
    if not avail.all():
        flags.append(f"{int((~avail).sum())} missing (record, agent) answers; averages use available ones")

    def row(name, em_rec, f1_rec):
        return aggregate_scores([list(em_rec)] * n_seeds, [list(f1_rec)] * n_seeds, name, dataset)

    counts = np.maximum(avail.sum(axis=1), 1)
    out = {"average": row("average", (em * avail).sum(1) / counts, (f1 * avail).sum(1) / counts)}

    votes = [weighted_vote(j.answers, [1.0] * len(j.answers))[0] for j in test_joined]
    golds = [j.record.gold_answers for j in test_joined]
    out["majority_vote"] = row(
        "majority_vote",
        [exact_match(p, g) for p, g in zip(votes, golds)],
        [token_f1(p, g) for p, g in zip(votes, golds)],
    )

    if train_joined:
        _, sel_f1 = score_matrix(train_joined)
    else:
        flags.append("no train split given: best_llm/best_agent selected on the test records")
        sel_f1 = f1
    sel_mean = sel_f1.mean(axis=0)
    best_agent = int(np.argmax(sel_mean))  # first index wins ties
    raw_idx = [i for i, a in enumerate(agent_ids) if a.endswith("::AGENT::raw")] or list(range(len(agent_ids)))
    best_llm = raw_idx[int(np.argmax(sel_mean[raw_idx]))]
    out["best_llm"] = row("best_llm", em[:, best_llm], f1[:, best_llm])
    out["best_agent"] = row("best_agent", em[:, best_agent], f1[:, best_agent])

    masked_em = np.where(avail, em, 0.0)
    masked_f1 = np.where(avail, f1, 0.0)
    out["oracle"] = row("oracle", masked_em.max(axis=1), masked_f1.max(axis=1))
    out["best_llm"].detail = agent_ids[best_llm]
    out["best_agent"].detail = agent_ids[best_agent]
    return out


def drop_pct(m_in: float, m_xfer: float, mode: str = "relative") -> float:
    """Transfer drop: relative (% of the in-domain score) or absolute points."""
    if mode == "absolute":
        return m_in - m_xfer
    if mode != "relative":
        raise ValueError(f"unknown drop mode {mode!r}")
    if m_in == 0:
        return 0.0 if m_xfer == 0 else float("-inf")
    return 100.0 * (m_in - m_xfer) / m_in


def transfer_report(in_domain: dict, transferred: dict, ks=TRANSFER_KS, mode: str = "relative") -> list[dict]:
    """Drop table; both inputs map k -> {"f1": mean, "em": mean} of the target test set."""
    rows = []
    for k in ks:
        if k not in in_domain:
            raise KeyError(f"no in-domain reference at k={k}")
        if k not in transferred:
            raise KeyError(f"no transferred result at k={k}")
        rows.append({
            "k": k,
            "f1_drop": drop_pct(in_domain[k]["f1"], transferred[k]["f1"], mode),
            "em_drop": drop_pct(in_domain[k]["em"], transferred[k]["em"], mode),
        })
    return rows


def topk_deltas(by_k: dict, base_k: int = 24) -> list[dict]:
    """Percentage change of F1/EM at each k relative to ``base_k``."""
    if base_k not in by_k:
        raise KeyError(f"sweep needs the base k={base_k}")
    base = by_k[base_k]

    def delta(v, b):
        if b == 0:
            return 0.0 if v == 0 else float("inf")
        return 100.0 * (v - b) / b

    return [
        {"k": k, "f1": by_k[k]["f1"], "em": by_k[k]["em"],
         "f1_delta_pct": delta(by_k[k]["f1"], base["f1"]),
         "em_delta_pct": delta(by_k[k]["em"], base["em"])}
        for k in sorted(by_k)
    ]


def format_table(rows: list[dict], columns: list[str]) -> str:
    """Aligned plain-text table."""
    cells = [[str(c) for c in columns]]
    for r in rows:
        cells.append([_fmt(r.get(c)) for c in columns])
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}"
    return "" if v is None else str(v)


def report_rows(reports) -> list[dict]:
    rows = []
    for rep in reports:
        rows.append({
            "method": rep.method, "k": rep.k,
            "F1": f"{rep.f1_mean:.2f} ± {rep.f1_std:.2f}",
            "EM": f"{rep.em_mean:.2f} ± {rep.em_std:.2f}",
            "seeds": rep.n_seeds,
        })
    return rows
