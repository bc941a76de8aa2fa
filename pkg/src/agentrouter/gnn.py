"""RouterGNN: type-aware heterogeneous message passing and query-agent scoring.

Shapes (row-vector convention, ``N`` nodes, ``d`` hidden size)::

    H0[v]   = P[kind(v)] @ x[v]
    M_psi   = A_psi @ (H @ W[l, psi].T)            # mean over in-neighbours via psi
    agg     = sum_psi gate[l, psi] * M_psi
    H'[v]   = relu(U[l, kind(v)] @ [H[v] | agg[v]] + b[l, kind(v)])
    s(q, a) = w2 . relu(W1 @ [H_q | H_a] + b1) + b2
    p       = softmax(s)

Every stored edge family also gets a reverse message kind (``rev:<kind>``)
with its own weights, so context reaches query and agent nodes.  Gradients
are computed by an explicit reverse pass over the recorded forward tape.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .graph import AGENT, EDGE_KINDS, NODE_KINDS

MESSAGE_KINDS = EDGE_KINDS + tuple(f"rev:{k}" for k in EDGE_KINDS)

CHECKPOINT_MAGIC = b"AGRTCKPT"
FORMAT_VERSION = 1


class NumericError(FloatingPointError):
    pass


@dataclass(frozen=True)
class RoutingDistribution:
    scores: np.ndarray
    probs: np.ndarray


class ModelParams:
    """Named float64 tensors of one RouterGNN plus its dimensions."""

    def __init__(self, tensors: dict, d_in: int, d_h: int, layers: int):
        self.tensors = tensors
        self.d_in = d_in
        self.d_h = d_h
        self.layers = layers

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.tensors.items()},
                           self.d_in, self.d_h, self.layers)

    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def equals(self, other: "ModelParams") -> bool:
        return (
            (self.d_in, self.d_h, self.layers) == (other.d_in, other.d_h, other.layers)
            and list(self.tensors) == list(other.tensors)
            and all(np.array_equal(self[k], other[k]) for k in self.tensors)
        )


def param_count(d_in: int, d_h: int, layers: int, n_message_kinds: int = len(MESSAGE_KINDS)) -> int:
    n_kinds = len(NODE_KINDS)
    per_layer = n_message_kinds * (d_h * d_h + 1) + n_kinds * (2 * d_h * d_h + d_h)
    head = 2 * d_h * d_h + d_h + d_h + 1
    return n_kinds * d_h * d_in + layers * per_layer + head


def _glorot(rng, shape):
    fan_out, fan_in = shape
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(seed: int, d_in: int, d_h: int = 256, layers: int = 2) -> ModelParams:
    if d_in < 1 or d_h < 1 or layers < 1:
        raise ValueError("d_in, d_h and layers must be positive")
    rng = np.random.default_rng(seed)
    t: dict[str, np.ndarray] = {}
    for kind in NODE_KINDS:
        t[f"proj.{kind}"] = _glorot(rng, (d_h, d_in))
    for l in range(1, layers + 1):
        for psi in MESSAGE_KINDS:
            t[f"msg.{l}.{psi}"] = _glorot(rng, (d_h, d_h))
            t[f"gate.{l}.{psi}"] = np.array(1.0)
        for kind in NODE_KINDS:
            t[f"upd.{l}.{kind}.W"] = _glorot(rng, (d_h, 2 * d_h))
            t[f"upd.{l}.{kind}.b"] = np.zeros(d_h)
    t["head.W1"] = _glorot(rng, (d_h, 2 * d_h))
    t["head.b1"] = np.zeros(d_h)
    t["head.w2"] = _glorot(rng, (1, d_h))[0]
    t["head.b2"] = np.array(0.0)
    return ModelParams(t, d_in, d_h, layers)


@dataclass
class CompiledGraph:
    """Index structures for one KnowledgeGraph, independent of edge-list order."""

    n_nodes: int
    kind_rows: dict  # node kind -> sorted row indices
    agents: np.ndarray  # agent node ids in canonical order
    adjacency: dict = field(default_factory=dict)  # message kind -> row-normalized CSR (dst x src)
    agent_ids: tuple = ()
    present: tuple = ()  # message kinds with at least one edge, in MESSAGE_KINDS order
    stacked: object = None  # [A_psi1 | A_psi2 | ...], n x (n * len(present))


def compile_graph(graph) -> CompiledGraph:
    n = len(graph.nodes)
    kinds = [node.kind for node in graph.nodes]
    kind_rows = {k: np.array([i for i, kk in enumerate(kinds) if kk == k], dtype=np.int64)
                 for k in NODE_KINDS}
    pairs: dict[str, set] = {psi: set() for psi in MESSAGE_KINDS}
    for src, kind, dst in graph.edges:
        pairs[kind].add((dst, src))
        pairs[f"rev:{kind}"].add((src, dst))
    adjacency = {}
    for psi in MESSAGE_KINDS:
        if not pairs[psi]:
            continue
        rows, cols = map(np.array, zip(*sorted(pairs[psi])))
        deg = np.bincount(rows, minlength=n).astype(float)
        A = sparse.csr_matrix((1.0 / deg[rows], (rows, cols)), shape=(n, n))
        A.sort_indices()
        adjacency[psi] = A
    present = tuple(adjacency)
    stacked = sparse.hstack([adjacency[p] for p in present], format="csr") if present else None
    return CompiledGraph(
        n_nodes=n,
        kind_rows=kind_rows,
        agents=kind_rows[AGENT],
        adjacency=adjacency,
        agent_ids=tuple(graph.agent_order),
        present=present,
        stacked=stacked,
    )


def _relu(x):
    return np.maximum(x, 0.0)


def _check_finite(arr, where: str):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {where}")


def project_inputs(cg: CompiledGraph, X: np.ndarray, params: ModelParams) -> np.ndarray:
    H = np.zeros((cg.n_nodes, params.d_h))
    for kind, rows in cg.kind_rows.items():
        if len(rows):
            H[rows] = X[rows] @ params[f"proj.{kind}"].T
    return H


def _transformed(cg, H, params, l):
    """H @ W[l, psi].T for every present kind, stacked to (P * n, d)."""
    n, d = H.shape
    W = np.concatenate([params[f"msg.{l}.{psi}"] for psi in cg.present])
    return (H @ W.T).reshape(n, len(cg.present), d).transpose(1, 0, 2)


def _layer(cg, H, params, l):
    # all kinds in one sparse product: agg = sum_psi gate_psi * A_psi @ (H W_psi^T)
    if cg.present:
        HW = _transformed(cg, H, params, l)
        gates = np.array([params[f"gate.{l}.{psi}"] for psi in cg.present])
        agg = cg.stacked @ (gates[:, None, None] * HW).reshape(-1, H.shape[1])
    else:
        HW, agg = None, np.zeros_like(H)
    Z = np.hstack([H, agg])
    pre = np.zeros_like(H)
    for kind, rows in cg.kind_rows.items():
        if len(rows):
            pre[rows] = Z[rows] @ params[f"upd.{l}.{kind}.W"].T + params[f"upd.{l}.{kind}.b"]
    return _relu(pre), (H, HW, Z, pre)


def message_pass_layer(cg: CompiledGraph, h_prev: np.ndarray, params: ModelParams, l: int) -> np.ndarray:
    """One gated, type-aware message-passing layer (``l`` counts from 1)."""
    return _layer(cg, h_prev, params, l)[0]


def score_to_distribution(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("cannot normalize an empty score vector")
    z = np.exp(scores - scores.max())
    return z / z.sum()


@dataclass
class Tape:
    cg: CompiledGraph
    X: np.ndarray
    layer_caches: list
    hidden: list
    head_in: np.ndarray
    head_pre: np.ndarray


def forward(cg: CompiledGraph, X: np.ndarray, params: ModelParams, return_tape: bool = False):
    """Run L layers and the scoring head; returns (hidden states, distribution[, tape])."""
    H = project_inputs(cg, X, params)
    _check_finite(H, "input projection")
    hidden, caches = [H], []
    for l in range(1, params.layers + 1):
        H, cache = _layer(cg, H, params, l)
        _check_finite(H, f"layer {l}")
        hidden.append(H)
        caches.append(cache)
    n_agents = len(cg.agents)
    head_in = np.hstack([np.repeat(H[:1], n_agents, axis=0), H[cg.agents]])
    head_pre = head_in @ params["head.W1"].T + params["head.b1"]
    scores = _relu(head_pre) @ params["head.w2"] + params["head.b2"]
    _check_finite(scores, "scoring head")
    dist = RoutingDistribution(scores, score_to_distribution(scores))
    if return_tape:
        return hidden, dist, Tape(cg, X, caches, hidden, head_in, head_pre)
    return hidden, dist


def backprop(tape: Tape, dscores: np.ndarray, params: ModelParams) -> dict:
    """Reverse pass: gradients of a scalar loss w.r.t. every parameter tensor."""
    cg, d = tape.cg, params.d_h
    grads = params.zeros_like()

    R = _relu(tape.head_pre)
    grads["head.w2"] = R.T @ dscores
    grads["head.b2"] = np.array(dscores.sum())
    dpre = np.outer(dscores, params["head.w2"]) * (tape.head_pre > 0)
    grads["head.W1"] = dpre.T @ tape.head_in
    grads["head.b1"] = dpre.sum(axis=0)
    dhead_in = dpre @ params["head.W1"]

    dH = np.zeros((cg.n_nodes, d))
    dH[0] += dhead_in[:, :d].sum(axis=0)
    dH[cg.agents] += dhead_in[:, d:]

    for l in range(params.layers, 0, -1):
        H, HW, Z, pre = tape.layer_caches[l - 1]
        dpre = dH * (pre > 0)
        dZ = np.zeros_like(Z)
        for kind, rows in cg.kind_rows.items():
            if not len(rows):
                continue
            g = dpre[rows]
            grads[f"upd.{l}.{kind}.W"] = g.T @ Z[rows]
            grads[f"upd.{l}.{kind}.b"] = g.sum(axis=0)
            dZ[rows] = g @ params[f"upd.{l}.{kind}.W"]
        dH = dZ[:, :d].copy()
        dagg = dZ[:, d:]
        if not cg.present:
            continue
        # G[p] = A_p^T @ dagg; sum(dagg * (A_p @ HW_p)) = sum(G[p] * HW_p)
        G = (cg.stacked.T @ dagg).reshape(len(cg.present), cg.n_nodes, d)
        for p, psi in enumerate(cg.present):
            gate = params[f"gate.{l}.{psi}"]
            grads[f"gate.{l}.{psi}"] = np.array(np.sum(G[p] * HW[p]))
            dHW = gate * G[p]
            grads[f"msg.{l}.{psi}"] = dHW.T @ H
            dH += dHW @ params[f"msg.{l}.{psi}"]

    for kind, rows in cg.kind_rows.items():
        if len(rows):
            grads[f"proj.{kind}"] = dH[rows].T @ tape.X[rows]
    for name, g in grads.items():
        _check_finite(g, f"gradient of {name}")
    return grads


# --- checkpoints -----------------------------------------------------------
#
# layout: MAGIC(8) | header_len uint32 LE | header JSON (utf-8) | tensors
# header: format_version, L, d_h, d_in, node_kinds, edge_kinds, agent_order,
#         tensors=[{name, shape, offset}] with offset counted in float64 items;
# tensor payload: row-major little-endian float64, in header order.

def save_checkpoint(path, params: ModelParams, agent_order, extra=None) -> None:
    entries, offset, chunks = [], 0, []
    for name, arr in params.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "L": params.layers,
        "d_h": params.d_h,
        "d_in": params.d_in,
        "node_kinds": list(NODE_KINDS),
        "edge_kinds": list(MESSAGE_KINDS),
        "agent_order": list(agent_order),
        "tensors": entries,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a RouterGNN checkpoint")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header['format_version']}")
    if header["edge_kinds"] != list(MESSAGE_KINDS) or header["node_kinds"] != list(NODE_KINDS):
        raise ValueError("checkpoint node/edge kinds do not match this build")
    payload = np.frombuffer(raw[12 + hlen:], dtype="<f8")
    tensors = {}
    for e in header["tensors"]:
        size = int(np.prod(e["shape"], dtype=np.int64))
        tensors[e["name"]] = payload[e["offset"]:e["offset"] + size].reshape(e["shape"]).astype(np.float64)
    params = ModelParams(tensors, header["d_in"], header["d_h"], header["L"])
    return params, header
