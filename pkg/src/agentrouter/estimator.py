"""scikit-learn style wrappers: a graph featurizer and the router itself."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dataio import canonical_order, default_profiles
from .embed import TextEmbedder, feature_dim
from .gnn import forward, init_params, load_checkpoint, save_checkpoint
from .pipeline import encode, graph_for_record
from .route import fuse
from .train import RoutingExample, TrainConfig, fit, kl_loss, soft_targets
from .validation import check_agent_order, check_answers, check_encoded_graphs, check_f1_matrix


class GraphFeaturizer(TransformerMixin, BaseEstimator):
    """Turn dataset records into encoded heterogeneous graphs.

    Stateless apart from fixing the agent pool and the embedder, so
    ``fit`` only validates its arguments.
    """

    def __init__(self, profiles=None, d_text=256, embed_seed=0, embeddings=None, agent_entity_map=None):
        self.profiles = profiles
        self.d_text = d_text
        self.embed_seed = embed_seed
        self.embeddings = embeddings
        self.agent_entity_map = agent_entity_map

    def fit(self, X=None, y=None):
        if self.d_text < 8:
            raise ValueError("d_text must be at least 8")
        self.profiles_ = canonical_order(self.profiles if self.profiles is not None else default_profiles())
        self.agent_ids_ = [p.agent_id for p in self.profiles_]
        self.embedder_ = TextEmbedder(self.d_text, self.embed_seed, self.embeddings)
        self.n_features_out_ = feature_dim(self.d_text)
        self.warnings_ = []
        return self

    def transform(self, X):
        check_is_fitted(self, "embedder_")
        out = []
        for record in X:
            amap = (self.agent_entity_map or {}).get(record.id)
            graph = graph_for_record(record, self.profiles_, amap, self.warnings_)
            out.append(encode(graph, self.embedder_))
        return out


class AgentRouter(BaseEstimator):
    """RouterGNN trained to match softened per-agent F1 distributions.

    ``X`` is a list of encoded graphs, ``y`` a (records, agents) matrix of
    agent F1 scores in canonical agent order.
    """

    def __init__(self, hidden=256, layers=2, lr=1e-4, weight_decay=1e-4, clip_norm=1.0, tau=0.25,
                 eps=1e-3, epochs=50, k=24, random_state=0):
        self.hidden = hidden
        self.layers = layers
        self.lr = lr
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.tau = tau
        self.eps = eps
        self.epochs = epochs
        self.k = k
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay, clip_norm=self.clip_norm,
                           tau=self.tau, eps=self.eps, epochs=self.epochs, seed=self.random_state,
                           hidden=self.hidden, layers=self.layers, k=self.k)

    @staticmethod
    def _examples(X, y, answers, golds):
        n_agents = len(X[0].compiled.agent_ids)
        y = check_f1_matrix(y, len(X), n_agents)
        answers = check_answers(answers, len(X), n_agents)
        if len(golds) != len(X):
            raise ValueError(f"{len(golds)} gold rows for {len(X)} graphs")
        return [RoutingExample(x.record_id, x.compiled, x.features, f, a, tuple(g))
                for x, f, a, g in zip(X, y, answers, golds)]

    def fit(self, X, y, answers, golds, eval_set=None, checkpoint_path=None, log_path=None):
        """Train; ``eval_set`` is ``(X_val, y_val, answers_val, golds_val)``.

        Without an eval set the training records double as validation data.
        """
        X = check_encoded_graphs(X)
        config = self._config()
        train = self._examples(X, y, answers, golds)
        if eval_set is None:
            val = train
        else:
            Xv = check_encoded_graphs(eval_set[0])
            val = self._examples(Xv, *eval_set[1:])
        self.agent_ids_ = list(X[0].compiled.agent_ids)
        self.n_features_in_ = X[0].features.shape[1]
        start = init_params(config.seed, self.n_features_in_, config.hidden, config.layers)
        self.params_, self.log_ = fit(train, val, config, start, checkpoint_path, log_path, self.agent_ids_)
        return self

    def _check_X(self, X):
        check_is_fitted(self, "params_")
        X = check_encoded_graphs(X)
        check_agent_order(self.agent_ids_, X[0].compiled.agent_ids, where="model")
        if X[0].features.shape[1] != self.n_features_in_:
            raise ValueError(f"feature dimension {X[0].features.shape[1]} ≠ {self.n_features_in_}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_X(X)
        return np.stack([forward(x.compiled, x.features, self.params_)[1].probs for x in X])

    def route(self, X, answers, k=None):
        """Full routing results (selected agents, tally, fused answer)."""
        X = self._check_X(X)
        answers = check_answers(answers, len(X), len(self.agent_ids_))
        probs = self.predict_proba(X)
        k = self.k if k is None else k
        return [fuse(p, a, k, self.agent_ids_, x.record_id) for p, a, x in zip(probs, answers, X)]

    def predict(self, X, answers, k=None) -> list[str]:
        return [r.fused_answer for r in self.route(X, answers, k)]

    def score(self, X, y) -> float:
        """Negative mean KL between soft targets and predictions (higher is better)."""
        probs = self.predict_proba(X)
        y = check_f1_matrix(y, len(probs), len(self.agent_ids_))
        return -float(np.mean([kl_loss(soft_targets(f, self.tau, self.eps), p) for f, p in zip(y, probs)]))

    def save(self, path, extra=None) -> None:
        check_is_fitted(self, "params_")
        meta = {"estimator": self.get_params()}
        meta.update(extra or {})
        save_checkpoint(path, self.params_, self.agent_ids_, extra=meta)

    @classmethod
    def load(cls, path) -> "AgentRouter":
        params, header = load_checkpoint(path)
        est_params = (header.get("extra") or {}).get("estimator", {})
        est = cls(**{k: v for k, v in est_params.items() if k in cls._get_param_names()})
        est.hidden, est.layers = params.d_h, params.layers
        est.params_ = params
        est.agent_ids_ = list(header["agent_order"])
        est.n_features_in_ = params.d_in
        est.log_ = []
        return est
