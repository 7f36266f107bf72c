"""HEGNN: EGNN-style message passing extended with high-degree steerable features.

Per node the model carries invariant scalars ``h`` (width ``C_0``), a
coordinate ``x`` and, for every active degree ``l >= 1``, a block
``v[l]`` of ``C_l`` channels of real spherical-harmonic coefficients
(shape ``(N, C_l, 2l+1)``).  High-degree features are seeded from spherical
harmonics of neighbor directions; afterwards degrees only talk to each other
through invariant inner products fed to the message MLP.

All functions accept parameters as plain arrays or as autodiff ``Var``
leaves, so one code path serves inference and training.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .specfun import L1_TO_CARTESIAN, MAX_DEGREE, sph_harm_all

FORMAT_VERSION = 1
MIN_EDGE_LENGTH = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    max_degree: int = 2
    channels: tuple = ()  # C_0..C_L; empty -> (hidden_width, 1, 1, ...)
    hidden_width: int = 64
    mlp_depth: int = 2  # hidden layers per MLP
    n_layers: int = 4
    node_in: int = 1
    edge_in: int = 0
    degree_mask: tuple | None = None  # active degrees >= 1; None -> all of 1..L
    use_velocity: bool = False
    z_mode: str = "diagonal"  # or "gram"
    unit_init_gates: bool = False
    x_from_v1: bool = False
    coord_gain: float = 1.0  # scale of the last layer of the coordinate gate at init

    def __post_init__(self):
        L = int(self.max_degree)
        if not 0 <= L <= MAX_DEGREE:
            raise ValueError(f"max_degree must lie in 0..{MAX_DEGREE}")
        ch = tuple(int(c) for c in self.channels) or (self.hidden_width,) + (1,) * L
        if len(ch) != L + 1:
            raise ValueError("channels must list C_0..C_L")
        mask = tuple(range(1, L + 1)) if self.degree_mask is None else tuple(sorted(set(int(l) for l in self.degree_mask)))
        if any(l < 1 or l > L for l in mask):
            raise ValueError("degree_mask must be a subset of 1..max_degree")
        if any(ch[l] < 1 for l in mask) or ch[0] < 1:
            raise ValueError("active degrees need at least one channel")
        if self.z_mode not in ("diagonal", "gram"):
            raise ValueError("z_mode must be 'diagonal' or 'gram'")
        if self.x_from_v1 and 1 not in mask:
            raise ValueError("x_from_v1 needs degree 1 active")
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "degree_mask", mask)

    @property
    def active_degrees(self):
        return self.degree_mask

    def z_width(self):
        if self.z_mode == "diagonal":
            return sum(self.channels[l] for l in self.active_degrees)
        return sum(self.channels[l] ** 2 for l in self.active_degrees)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("channels", "degree_mask"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class SteerableState:
    """Node features plus the edge structure they were computed on."""

    h: object
    x: object
    v: dict
    edges: np.ndarray
    edge_scalars: object = None
    velocities: object = None
    inv_degree: np.ndarray = field(default=None, repr=False)

    @property
    def n_nodes(self):
        return self.x.shape[0]

    def numpy(self):
        """Copy with every ``Var`` replaced by its array value."""
        val = lambda a: a.value if isinstance(a, ad.Var) else a
        return replace(self, h=val(self.h), x=val(self.x), v={l: val(b) for l, b in self.v.items()},
                       edge_scalars=val(self.edge_scalars), velocities=val(self.velocities))


# --------------------------------------------------------------------------- parameters

def _dense(rng, fan_in, fan_out, gain=1.0):
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    W = rng.uniform(-bound, bound, size=(fan_in, fan_out)) * gain
    b = rng.uniform(-bound, bound, size=fan_out) * gain
    return W, b


def _add_mlp(params, rng, prefix, sizes, gain=1.0):
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = k == len(sizes) - 2
        W, bias = _dense(rng, a, b, gain if last else 1.0)
        params[f"{prefix}.{k}.W"] = W
        params[f"{prefix}.{k}.b"] = bias


def init_params(cfg, seed=0):
    """Seeded weights for every MLP the configuration needs (flat name -> array)."""
    rng = np.random.default_rng(seed)
    H, C0 = cfg.hidden_width, cfg.channels[0]
    hidden = [H] * cfg.mlp_depth
    pair_in = 2 * C0 + cfg.edge_in + 1
    p = {}
    W, b = _dense(rng, cfg.node_in, C0)
    p["embed.W"], p["embed.b"] = W, b
    _add_mlp(p, rng, "init.m", [pair_in] + hidden + [H])
    if not cfg.unit_init_gates:
        for l in cfg.active_degrees:
            _add_mlp(p, rng, f"init.v{l}", [H] + hidden + [cfg.channels[l]])
    for k in range(cfg.n_layers):
        _add_mlp(p, rng, f"layer{k}.m", [pair_in + cfg.z_width()] + hidden + [H])
        _add_mlp(p, rng, f"layer{k}.h", [C0 + H] + hidden + [C0])
        _add_mlp(p, rng, f"layer{k}.x", [H] + hidden + [1], gain=cfg.coord_gain)
        for l in cfg.active_degrees:
            _add_mlp(p, rng, f"layer{k}.v{l}", [H] + hidden + [cfg.channels[l]])
        if cfg.x_from_v1:
            _add_mlp(p, rng, f"layer{k}.xv1", [C0] + hidden + [cfg.channels[1]], gain=cfg.coord_gain)
    if cfg.use_velocity:
        _add_mlp(p, rng, "vel", [C0] + hidden + [1])
    return p


def save_params(path, params, cfg, extra=None):
    """One ``.npz`` file: flat named arrays plus a JSON header with the config."""
    header = {"format_version": FORMAT_VERSION, "config": cfg.to_dict(), "extra": extra or {}}
    arrays = {k: np.asarray(v.value if isinstance(v, ad.Var) else v) for k, v in params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_params(path):
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('format_version')}")
        params = {k: data[k].copy() for k in data.files if k != "__header__"}
    return params, ModelConfig.from_dict(header["config"]), header.get("extra", {})


# --------------------------------------------------------------------------- building blocks

def mlp(params, prefix, x, final_act=False):
    k = 0
    while f"{prefix}.{k}.W" in params:
        x = ad.matmul(x, params[f"{prefix}.{k}.W"]) + params[f"{prefix}.{k}.b"]
        last = f"{prefix}.{k + 1}.W" not in params
        if not last or final_act:
            x = ad.silu(x)
        k += 1
    if k == 0:
        raise KeyError(f"no parameters under {prefix!r}")
    return x


def _mean_over_neighbors(values, edges, inv_degree):
    n = inv_degree.shape[0]
    summed = ad.scatter_add(values, edges[:, 0], n)
    shape = (n,) + (1,) * (summed.ndim - 1)
    return summed * inv_degree.reshape(shape)


def _pair_inputs(h, x, edges, edge_scalars):
    i, j = edges[:, 0], edges[:, 1]
    rel = x[i] - x[j]
    d2 = ad.sum_(ad.square(rel), axis=-1, keepdims=True)
    parts = [h[i], h[j]]
    if edge_scalars is not None:
        parts.append(edge_scalars)
    parts.append(d2)
    return parts, rel


def _check_graph(g, cfg):
    if g.node_scalars.shape[1] != cfg.node_in:
        raise ValueError(f"graph has {g.node_scalars.shape[1]} node scalars, config expects {cfg.node_in}")
    ew = 0 if g.edge_scalars is None else g.edge_scalars.shape[1]
    if ew != cfg.edge_in:
        raise ValueError(f"graph has {ew} edge scalars, config expects {cfg.edge_in}")
    deg = g.degrees()
    if np.any(deg == 0):
        raise ValueError(f"isolated node(s): {np.nonzero(deg == 0)[0].tolist()}")
    if cfg.use_velocity and g.velocities is None:
        raise ValueError("config uses velocities but the graph has none")
    return deg


def init_features(g, cfg, params):
    """Embed scalars and seed each active degree from neighbor spherical harmonics."""
    deg = _check_graph(g, cfg)
    edges = g.edges
    inv_degree = 1.0 / deg
    rel = g.coords[edges[:, 0]] - g.coords[edges[:, 1]]
    dist = np.linalg.norm(rel, axis=1)
    if np.any(dist < MIN_EDGE_LENGTH):
        raise ValueError("coincident endpoints on an edge; directions are undefined")
    h = ad.matmul(ad.as_var(g.node_scalars), params["embed.W"]) + params["embed.b"]
    es = None if g.edge_scalars is None else ad.as_var(g.edge_scalars)
    x = ad.as_var(g.coords)
    v = {}
    active = cfg.active_degrees
    if active:
        Y = sph_harm_all(max(active), rel / dist[:, None])
        parts, _ = _pair_inputs(h, x, edges, es)
        m_init = mlp(params, "init.m", ad.concat(parts, -1), final_act=True) if not cfg.unit_init_gates else None
        for l in active:
            basis = np.repeat(Y[l][:, None, :], cfg.channels[l], axis=1)
            if cfg.unit_init_gates:
                contrib = ad.as_var(basis)
            else:
                gate = mlp(params, f"init.v{l}", m_init)
                contrib = ad.reshape(gate, gate.shape + (1,)) * basis
            v[l] = _mean_over_neighbors(contrib, edges, inv_degree)
    vel = None if g.velocities is None else ad.as_var(g.velocities)
    return SteerableState(h, x, v, edges, es, vel, inv_degree)


def _z_scalars(state, cfg, i, j):
    out = []
    for l in cfg.active_degrees:
        vi, vj = state.v[l][i], state.v[l][j]
        if cfg.z_mode == "diagonal":
            out.append(ad.inner(vi, vj, axis=-1))
        else:
            C = cfg.channels[l]
            grams = [ad.inner(vi[:, a, :], vj[:, b, :], axis=-1) for a in range(C) for b in range(C)]
            out.append(ad.concat([ad.reshape(z, (-1, 1)) for z in grams], -1))
    return out


def messages(state, cfg, params, layer=0):
    """Invariant messages ``m_ij`` for every edge and the degree-wise inner products."""
    i, j = state.edges[:, 0], state.edges[:, 1]
    parts, _ = _pair_inputs(state.h, state.x, state.edges, state.edge_scalars)
    z = _z_scalars(state, cfg, i, j)
    m = mlp(params, f"layer{layer}.m", ad.concat(parts + z, -1), final_act=True)
    return m, dict(zip(cfg.active_degrees, z))


def message(state, edge, cfg, params, layer=0):
    """``(m_ij, {l: z_ij^(l)})`` for a single edge ``(i, j)`` given as a pair."""
    i, j = int(edge[0]), int(edge[1])
    sub = replace(state, edges=np.array([[i, j]]),
                  edge_scalars=None if state.edge_scalars is None else _row(state, i, j))
    m, z = messages(sub, cfg, params, layer)
    val = lambda a: a.value[0] if isinstance(a, ad.Var) else a[0]
    return val(m), {l: val(zl) for l, zl in z.items()}


def _row(state, i, j):
    k = np.nonzero((state.edges[:, 0] == i) & (state.edges[:, 1] == j))[0]
    if not len(k):
        raise KeyError(f"edge {(i, j)} not in graph")
    return state.edge_scalars[k]


def aggregate_update(state, cfg, params, layer=0):
    """One round of message passing with residual updates of ``h``, ``x`` and every ``v[l]``."""
    m, _ = messages(state, cfg, params, layer)
    edges, inv_degree = state.edges, state.inv_degree
    i, j = edges[:, 0], edges[:, 1]
    pre = f"layer{layer}"

    m_mean = _mean_over_neighbors(m, edges, inv_degree)
    dh = mlp(params, f"{pre}.h", ad.concat([state.h, m_mean], -1))

    rel = state.x[i] - state.x[j]
    dx = _mean_over_neighbors(mlp(params, f"{pre}.x", m) * rel, edges, inv_degree)

    new_v = {}
    for l in cfg.active_degrees:
        gate = mlp(params, f"{pre}.v{l}", m)
        diff = state.v[l][i] - state.v[l][j]
        dv = _mean_over_neighbors(ad.reshape(gate, gate.shape + (1,)) * diff, edges, inv_degree)
        new_v[l] = state.v[l] + dv

    x = state.x + dx
    if cfg.use_velocity and layer == 0:
        x = x + mlp(params, "vel", state.h) * state.velocities
    if cfg.x_from_v1:
        w = mlp(params, f"{pre}.xv1", state.h)  # (N, C_1)
        v1 = state.v[1][:, :, L1_TO_CARTESIAN]
        x = x + ad.sum_(ad.reshape(w, w.shape + (1,)) * v1, axis=1)
    return replace(state, h=state.h + dh, x=x, v=new_v)


def forward_vars(g, cfg, params):
    state = init_features(g, cfg, params)
    for k in range(cfg.n_layers):
        state = aggregate_update(state, cfg, params, k)
    return state


def forward(g, cfg, params, n_layers=None):
    """Full model: initialization followed by ``n_layers`` (default ``cfg.n_layers``) updates."""
    if n_layers is not None and n_layers != cfg.n_layers:
        if n_layers > cfg.n_layers:
            raise ValueError("more layers requested than parameters exist for")
        cfg = replace(cfg, n_layers=n_layers)
    return forward_vars(g, cfg, params).numpy()


def pool(state, mode="equivariant", nodes=None):
    """Node means: ``"invariant"`` -> mean ``h``; ``"equivariant"`` -> ``{l: mean v[l]}`` plus ``"x"``.

    ``nodes`` restricts the mean to a subset (index array or slice).
    """
    st = state.numpy()
    sel = slice(None) if nodes is None else nodes
    if mode in ("invariant", "mean_invariant"):
        return st.h[sel].mean(axis=0)
    if mode in ("equivariant", "mean_equivariant"):
        out = {l: b[sel].mean(axis=0) for l, b in st.v.items()}
        out["x"] = st.x[sel].mean(axis=0)
        return out
    raise ValueError(f"unknown pooling mode {mode!r}")


def batch_graphs(graphs):
    """Disjoint union of graphs, for batched evaluation; returns ``(graph, node offsets)``."""
    from .geomgraph import GeometricGraph

    offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    edges = np.vstack([g.edges + o for g, o in zip(graphs, offsets[:-1])])
    vel = None if graphs[0].velocities is None else np.vstack([g.velocities for g in graphs])
    es = None if graphs[0].edge_scalars is None else np.vstack([g.edge_scalars for g in graphs])
    merged = GeometricGraph(
        np.vstack([g.node_scalars for g in graphs]),
        np.vstack([g.coords for g in graphs]),
        edges,
        velocities=vel,
        edge_scalars=es,
    )
    return merged, offsets
