"""scikit-learn style wrappers around the model and the spherical-harmonic features."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .autodiff import TrainConfig
from .geomgraph import GeometricGraph
from .model import ModelConfig, forward, init_params, pool
from .specfun import MAX_DEGREE, sph_harm
from .training import mse, nbody_model_config, predict, train


def check_graphs(X):
    """Validate a sequence of :class:`GeometricGraph` objects and return it as a list."""
    if isinstance(X, GeometricGraph):
        raise TypeError("expected a sequence of graphs, got a single graph")
    graphs = list(X)
    if not graphs:
        raise ValueError("no graphs given")
    for k, g in enumerate(graphs):
        if not isinstance(g, GeometricGraph):
            raise TypeError(f"item {k} is {type(g).__name__}, not a GeometricGraph")
    return graphs


def check_positions(y, graphs):
    """Targets: one ``(n_i, 3)`` finite array per graph."""
    ys = [np.asarray(t, dtype=float) for t in y]
    if len(ys) != len(graphs):
        raise ValueError(f"{len(ys)} targets for {len(graphs)} graphs")
    for k, (t, g) in enumerate(zip(ys, graphs)):
        if t.shape != (g.n_nodes, 3):
            raise ValueError(f"target {k} has shape {t.shape}, expected {(g.n_nodes, 3)}")
        if not np.all(np.isfinite(t)):
            raise ValueError(f"target {k} is not finite")
    return ys


class HEGNNRegressor(RegressorMixin, BaseEstimator):
    """Predict final particle positions from an initial N-body graph.

    ``X`` is a sequence of graphs carrying charges, coordinates and
    velocities; ``y`` the matching positions at the end of the horizon.
    ``score`` is the negative position MSE (higher is better), since
    per-sample targets are matrices rather than a flat vector.
    """

    def __init__(self, max_degree=2, hidden_width=64, n_layers=4, lr=1e-3, epochs=40,
                 batch_size=50, coord_gain=0.01, seed=0):
        self.max_degree = max_degree
        self.hidden_width = hidden_width
        self.n_layers = n_layers
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.coord_gain = coord_gain
        self.seed = seed

    def _configs(self):
        cfg = nbody_model_config(self.max_degree, hidden_width=self.hidden_width,
                                 n_layers=self.n_layers, coord_gain=self.coord_gain)
        tcfg = TrainConfig(lr=self.lr, epochs=self.epochs, batch_size=self.batch_size, seed=self.seed)
        return cfg, tcfg

    def fit(self, X, y, X_val=None, y_val=None):
        graphs = check_graphs(X)
        ys = check_positions(y, graphs)
        val = None
        if X_val is not None:
            vg = check_graphs(X_val)
            val = list(zip(vg, check_positions(y_val, vg)))
        cfg, tcfg = self._configs()
        self.config_ = cfg
        self.params_, self.history_ = train(list(zip(graphs, ys)), cfg, tcfg, val=val)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return predict(check_graphs(X), self.config_, self.params_)

    def score(self, X, y, sample_weight=None):
        check_is_fitted(self, "params_")
        graphs = check_graphs(X)
        return -mse(list(zip(graphs, check_positions(y, graphs))), self.config_, self.params_)


class SphericalHarmonicSumTransformer(TransformerMixin, BaseEstimator):
    """Per graph, the norms of ``sum_i Y^(l)(x_i / |x_i|)`` for ``l = 1..max_degree``.

    Coordinates are centered first.  The output is rotation invariant and
    vanishes on the degrees a symmetric structure cannot express.
    """

    def __init__(self, max_degree=10):
        self.max_degree = max_degree

    def fit(self, X, y=None):
        check_graphs(X)
        if not 1 <= self.max_degree <= MAX_DEGREE:
            raise ValueError(f"max_degree must lie in 1..{MAX_DEGREE}")
        self.n_features_out_ = self.max_degree
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_out_")
        rows = []
        for g in check_graphs(X):
            x = g.coords - g.centroid
            r = np.linalg.norm(x, axis=1)
            if np.any(r < 1e-12):
                raise ValueError("a node sits at the centroid; its direction is undefined")
            u = x / r[:, None]
            rows.append([np.linalg.norm(sph_harm(l, u).sum(axis=0)) for l in range(1, self.max_degree + 1)])
        return np.array(rows)


class PooledFeatureTransformer(TransformerMixin, BaseEstimator):
    """Node-mean pooled outputs of a randomly initialized model.

    ``mode="invariant"`` returns pooled ``h``; ``mode="equivariant"``
    concatenates pooled ``v^(l)`` blocks for every active degree.
    """

    def __init__(self, max_degree=3, hidden_width=32, n_layers=2, mode="invariant", seed=0):
        self.max_degree = max_degree
        self.hidden_width = hidden_width
        self.n_layers = n_layers
        self.mode = mode
        self.seed = seed

    def fit(self, X, y=None):
        graphs = check_graphs(X)
        if self.mode not in ("invariant", "equivariant"):
            raise ValueError("mode must be 'invariant' or 'equivariant'")
        g = graphs[0]
        self.config_ = ModelConfig(max_degree=self.max_degree, hidden_width=self.hidden_width,
                                   n_layers=self.n_layers, node_in=g.node_scalars.shape[1],
                                   edge_in=0 if g.edge_scalars is None else g.edge_scalars.shape[1])
        self.params_ = init_params(self.config_, self.seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        rows = []
        for g in check_graphs(X):
            p = pool(forward(g, self.config_, self.params_), mode=self.mode)
            if self.mode == "invariant":
                rows.append(p)
            else:
                rows.append(np.concatenate([p[l].ravel() for l in self.config_.active_degrees]))
        return np.array(rows)


__all__ = [
    "HEGNNRegressor",
    "PooledFeatureTransformer",
    "SphericalHarmonicSumTransformer",
    "check_graphs",
    "check_positions",
]
