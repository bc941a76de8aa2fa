"""Graph-supervised routing over a pool of LLM agents.

Each question becomes a small heterogeneous graph of the query, the
entities and relations in its context, and the candidate agents.  A
typed message-passing network scores the agents, and the answers of the
top-scoring agents are fused by weighted vote.
"""

from .dataio import AgentProfile, DataError, DatasetRecord, SplitSpec, default_profiles
from .estimator import AgentRouter, GraphFeaturizer
from .evaluate import exact_match, normalize_answer, token_f1
from .gnn import NumericError, forward, init_params
from .graph import KnowledgeGraph, build_graph
from .route import fuse, top_k_clip, weighted_vote
from .train import TrainConfig, fit, kl_loss, soft_targets

__version__ = "0.1.0"

__all__ = [
    "AgentProfile", "AgentRouter", "DataError", "DatasetRecord", "GraphFeaturizer", "KnowledgeGraph",
    "NumericError", "SplitSpec", "TrainConfig", "build_graph", "default_profiles", "exact_match", "fit",
    "forward", "fuse", "init_params", "kl_loss", "normalize_answer", "soft_targets", "token_f1",
    "top_k_clip", "weighted_vote", "__version__",
]
