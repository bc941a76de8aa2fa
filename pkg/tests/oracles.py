"""Independent reference computations used by the tests.

Nothing here shares code with the package's numeric paths: the forward
oracle loops over nodes and raw edge lists with dense vectors, and the
gradient oracle is plain central differencing.
"""

import numpy as np

EDGE_FAMILIES = ("QueryEntity", "IncSrc", "IncTgt", "AgentEntity", "QueryAgent")


def _relu(x):
    return np.where(x > 0, x, 0.0)


def naive_forward(graph, X, params):
    """Scores and probabilities by direct evaluation of the layer equations."""
    t, L = params.tensors, params.layers
    kinds = [node.kind for node in graph.nodes]
    n = len(kinds)
    h = [t[f"proj.{kinds[v]}"].dot(X[v]) for v in range(n)]
    for l in range(1, L + 1):
        nxt = []
        for v in range(n):
            agg = np.zeros_like(h[v])
            for fam in EDGE_FAMILIES:
                fwd = sorted({s for s, k, d in graph.edges if k == fam and d == v})
                back = sorted({d for s, k, d in graph.edges if k == fam and s == v})
                for name, nbrs in ((fam, fwd), ("rev:" + fam, back)):
                    if not nbrs:
                        continue
                    W = t[f"msg.{l}.{name}"]
                    total = np.zeros_like(h[v])
                    for u in nbrs:
                        total = total + W.dot(h[u])
                    agg = agg + float(t[f"gate.{l}.{name}"]) * (total / len(nbrs))
            z = np.concatenate([h[v], agg])
            nxt.append(_relu(t[f"upd.{l}.{kinds[v]}.W"].dot(z) + t[f"upd.{l}.{kinds[v]}.b"]))
        h = nxt
    q = kinds.index("Query")
    scores = []
    for a in (v for v in range(n) if kinds[v] == "Agent"):
        hidden = _relu(t["head.W1"].dot(np.concatenate([h[q], h[a]])) + t["head.b1"])
        scores.append(float(t["head.w2"].dot(hidden) + t["head.b2"]))
    scores = np.array(scores)
    e = np.exp(scores - scores.max())
    return scores, e / e.sum()


def kl(p_star, p):
    return float(sum(a * np.log(a / b) for a, b in zip(p_star, p) if a > 0))


def central_difference(loss_fn, params, name, index, step=1e-5):
    arr = params.tensors[name]
    old = arr[index]
    arr[index] = old + step
    up = loss_fn()
    arr[index] = old - step
    down = loss_fn()
    arr[index] = old
    return (up - down) / (2 * step)
