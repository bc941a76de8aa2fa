"""KL-supervised training of RouterGNN from per-agent F1 scores."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .evaluate import exact_match, token_f1
from .gnn import NumericError, backprop, forward, init_params, save_checkpoint
from .route import fuse

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    clip_norm: float = 1.0
    tau: float = 0.25
    eps: float = 1e-3
    epochs: int = 50
    seed: int = 0
    hidden: int = 256
    layers: int = 2
    k: int = 24
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("lr", "clip_norm", "tau", "epochs", "hidden", "layers", "k"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if not 0 <= self.eps < 1:
            raise ValueError("eps must lie in [0, 1)")


@dataclass
class SoftTarget:
    probs: np.ndarray
    tau: float
    eps: float


@dataclass
class RoutingExample:
    """One record ready for training or evaluation."""

    record_id: str
    graph: object  # CompiledGraph
    features: np.ndarray
    f1: np.ndarray
    answers: list = field(default_factory=list)
    golds: tuple = ()


def soft_targets(f1_vector, tau: float = 0.25, eps: float = 1e-3) -> SoftTarget:
    """softmax(F1 / tau), then mixed with the uniform distribution by eps."""
    f1 = np.asarray(f1_vector, dtype=float)
    if tau <= 0:
        raise ValueError("tau must be positive")
    if np.any(f1 < 0) or np.any(f1 > 1):
        raise ValueError("F1 scores must lie in [0, 1]")
    z = np.exp((f1 - f1.max()) / tau)
    p = z / z.sum()
    p = (1.0 - eps) * p + eps / len(p)
    return SoftTarget(p, tau, eps)


def kl_loss(target, predicted) -> float:
    p_star = getattr(target, "probs", target)
    p = getattr(predicted, "probs", predicted)
    p_star, p = np.asarray(p_star, dtype=float), np.asarray(p, dtype=float)
    if p_star.shape != p.shape:
        raise ValueError(f"length mismatch: {p_star.shape} vs {p.shape}")
    nz = p_star > 0
    return float(np.sum(p_star[nz] * (np.log(p_star[nz]) - np.log(p[nz]))))


def backward(cg, X, params, target):
    """(loss, gradients) of the KL objective for one graph."""
    _, dist, tape = forward(cg, X, params, return_tape=True)
    p_star = getattr(target, "probs", target)
    loss = kl_loss(p_star, dist)
    # d/ds of sum p* log(p*/softmax(s)) is softmax(s) - p*
    grads = backprop(tape, dist.probs - p_star, params)
    return loss, grads


def clip_gradients(grads: dict, max_norm: float) -> float:
    """Scale gradients in place to a global L2 norm of at most max_norm; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        for g in grads.values():
            g *= scale
    return total


class AdamW:
    """Adam with decoupled weight decay (decay hits the weights, not the moments)."""

    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-4):
        self.lr, self.betas, self.eps, self.weight_decay = lr, betas, eps, weight_decay
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1 - b1 ** self.t, 1 - b2 ** self.t
        for name, p in params.items():
            g = grads[name]
            p *= 1 - self.lr * self.weight_decay
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            p -= self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


class BestTracker:
    """Strict-improvement rule: ties never replace the earlier best."""

    def __init__(self):
        self.best = -math.inf
        self.best_epoch: Optional[int] = None

    def update(self, value: float, epoch: int) -> bool:
        if value > self.best:
            self.best, self.best_epoch = value, epoch
            return True
        return False


def evaluate_examples(examples, params, k: int) -> tuple[float, float]:
    """Mean routed (F1, EM) x100 over examples."""
    f1s, ems = [], []
    for ex in examples:
        _, dist = forward(ex.graph, ex.features, params)
        res = fuse(dist.probs, ex.answers, k, ex.graph.agent_ids, ex.record_id)
        f1s.append(token_f1(res.fused_answer, ex.golds))
        ems.append(exact_match(res.fused_answer, ex.golds))
    return 100.0 * float(np.mean(f1s)), 100.0 * float(np.mean(ems))


def mean_kl(examples, params, tau, eps) -> float:
    total = 0.0
    for ex in examples:
        _, dist = forward(ex.graph, ex.features, params)
        total += kl_loss(soft_targets(ex.f1, tau, eps), dist)
    return total / len(examples)


def fit(train, val, config: TrainConfig, params=None, checkpoint_path=None, log_path=None,
        agent_order=None, callback=None):
    """Train on ``train`` examples, keep the validation-best parameters.

    Returns ``(best_params, log)`` where each log entry has epoch,
    mean_train_kl, val_f1, val_em and checkpoint_written.  ``callback``
    sees every log entry and may return True to stop early.
    """
    train, val = list(train), list(val)
    if not train or not val:
        raise ValueError("fit needs non-empty train and validation sets")
    d_in = train[0].features.shape[1]
    if params is None:
        params = init_params(config.seed, d_in, config.hidden, config.layers)
    params = params.copy()
    agent_order = agent_order or train[0].graph.agent_ids
    opt = AdamW(params, config.lr, (config.beta1, config.beta2), config.adam_eps, config.weight_decay)
    rng = np.random.default_rng(config.seed)
    targets = {id(ex): soft_targets(ex.f1, config.tau, config.eps) for ex in train}
    tracker, best, log = BestTracker(), params.copy(), []
    log_fh = Path(log_path).open("w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            losses = []
            for i in rng.permutation(len(train)):
                ex = train[i]
                loss, grads = backward(ex.graph, ex.features, params, targets[id(ex)])
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite loss at epoch {epoch}, record {ex.record_id}")
                clip_gradients(grads, config.clip_norm)
                opt.step(params, grads)
                losses.append(loss)
            val_f1, val_em = evaluate_examples(val, params, config.k)
            improved = tracker.update(val_f1, epoch)
            if improved:
                best = params.copy()
                if checkpoint_path:
                    save_checkpoint(checkpoint_path, best, agent_order,
                                    extra={"epoch": epoch, "val_f1": val_f1, "config": asdict(config)})
            entry = {
                "epoch": epoch,
                "mean_train_kl": float(np.mean(losses)),
                "val_f1": val_f1,
                "val_em": val_em,
                "checkpoint_written": improved,
            }
            log.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")
            logger.info("epoch %d kl=%.5f val_f1=%.2f%s", epoch, entry["mean_train_kl"], val_f1,
                        " *" if improved else "")
            if callback is not None and callback(entry):
                break
    finally:
        if log_fh:
            log_fh.close()
    return best, log
