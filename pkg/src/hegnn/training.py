"""Desk-scale training on N-body trajectories: MSE on final positions, Adam updates."""
from __future__ import annotations

import csv
import logging
from dataclasses import replace

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, TrainConfig
from .geomgraph import record_to_graph
from .model import ModelConfig, batch_graphs, forward_vars, init_params

log = logging.getLogger(__name__)


def nbody_model_config(max_degree=2, **kwargs):
    """Model settings for N-body graphs: scalars (charge, speed), edge scalar ``q_i q_j``."""
    opts = dict(max_degree=max_degree, node_in=2, edge_in=1, use_velocity=True, n_layers=4, coord_gain=0.01)
    opts.update(kwargs)
    return ModelConfig(**opts)


def prepare_graph(g):
    """Append the speed ``|v_i|`` to the charge scalar (both rotation invariant)."""
    if g.node_scalars.shape[1] == 2:
        return g
    speed = np.linalg.norm(g.velocities, axis=1, keepdims=True)
    return replace(g, node_scalars=np.hstack([g.node_scalars, speed]))


def _as_pairs(dataset):
    pairs = []
    for item in dataset:
        g, y = record_to_graph(item) if isinstance(item, dict) else item
        pairs.append((prepare_graph(g), np.asarray(y, dtype=float)))
    return pairs


def _batched_loss(pairs, cfg, params):
    g, _ = batch_graphs([p[0] for p in pairs])
    target = np.vstack([p[1] for p in pairs])
    state = forward_vars(g, cfg, params)
    return ad.mean(ad.square(state.x - target))


def predict(graphs, cfg, params, batch_size=256):
    """Predicted final positions for each graph (list of ``(n_i, 3)`` arrays)."""
    graphs = [prepare_graph(g) for g in graphs]
    out = []
    for k in range(0, len(graphs), batch_size):
        chunk = graphs[k:k + batch_size]
        g, offsets = batch_graphs(chunk)
        x = forward_vars(g, cfg, params).x.value
        out.extend(x[a:b] for a, b in zip(offsets[:-1], offsets[1:]))
    return out


def mse(dataset, cfg, params):
    pairs = _as_pairs(dataset)
    if not pairs:
        raise ValueError("empty dataset")
    preds = predict([p[0] for p in pairs], cfg, params)
    return float(np.mean(np.concatenate([(a - p[1]).ravel() ** 2 for a, p in zip(preds, pairs)])))


def linear_baseline_mse(dataset, horizon):
    """Error of the constant-velocity extrapolation ``x + v * horizon``."""
    pairs = _as_pairs(dataset)
    if not pairs:
        raise ValueError("empty dataset")
    err = [(g.coords + horizon * g.velocities - y).ravel() ** 2 for g, y in pairs]
    return float(np.mean(np.concatenate(err)))


def train(dataset, cfg: ModelConfig, tcfg: TrainConfig, val=None, params=None, keep_best=True):
    """Fit HEGNN by Adam on position MSE.

    Returns ``(params, history)`` with one ``(epoch, train_mse, val_mse)``
    row per epoch (``val_mse`` is NaN without a validation set).  With
    ``keep_best`` and a validation set, the parameters with the lowest
    validation error are returned.
    """
    pairs = _as_pairs(dataset)
    if not pairs:
        raise ValueError("empty dataset")
    val_pairs = _as_pairs(val) if val else None
    params = {k: np.array(v, dtype=float) for k, v in (params or init_params(cfg, tcfg.seed)).items()}
    names = sorted(params)
    opt = Adam(params, tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps, tcfg.weight_decay)
    rng = np.random.default_rng(tcfg.seed)
    history = []
    best = (np.inf, None)
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(len(pairs))
        total, count = 0.0, 0
        for k in range(0, len(order), tcfg.batch_size):
            chunk = [pairs[i] for i in order[k:k + tcfg.batch_size]]
            tape = ad.Tape()
            leaves = {n: tape.variable(params[n]) for n in names}
            loss = _batched_loss(chunk, cfg, leaves)
            value = float(loss.value)
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite loss {value} at epoch {epoch}, batch starting {k}")
            grads = ad.grad(tape, loss, [leaves[n] for n in names])
            opt.step(dict(zip(names, grads)))
            total += value * len(chunk)
            count += len(chunk)
        train_mse = total / count
        val_mse = mse(val_pairs, cfg, params) if val_pairs else float("nan")
        history.append((epoch, train_mse, val_mse))
        log.info("epoch %d train %.6f val %.6f", epoch, train_mse, val_mse)
        if keep_best and val_pairs and val_mse < best[0]:
            best = (val_mse, {n: v.copy() for n, v in params.items()})
    if keep_best and best[1] is not None:
        params = best[1]
    return params, history


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, tr, va in history:
            w.writerow([epoch, repr(float(tr)), repr(float(va))])
