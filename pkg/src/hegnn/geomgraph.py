"""Geometric graphs, symmetric structures, symmetry detection and N-body data."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .groups import O3Element, enumerate_group

SYMMETRY_TOL = 1e-6
CENTER_TOL = 1e-10
SOFTENING = 0.05

POLYHEDRA = ("tetrahedron", "cube", "octahedron", "dodecahedron", "icosahedron")


def complete_edges(n):
    """All ordered pairs ``(i, j)`` with ``i != j``; ``j`` is a neighbor of ``i``."""
    i, j = np.nonzero(~np.eye(n, dtype=bool))
    return np.stack([i, j], axis=1)


@dataclass(frozen=True)
class GeometricGraph:
    """Node scalars, 3D coordinates, optional velocities and a directed edge list.

    Edge ``(i, j)`` means ``j`` is in the neighborhood of ``i``.  Instances
    are treated as immutable; the transform helpers return new graphs.
    """

    node_scalars: np.ndarray
    coords: np.ndarray
    edges: np.ndarray
    velocities: np.ndarray | None = None
    edge_scalars: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.node_scalars, dtype=float))
        if h.shape[0] == 1 and np.ndim(self.node_scalars) == 1 and len(self.node_scalars) != 1:
            h = h.T
        x = np.asarray(self.coords, dtype=float).reshape(-1, 3)
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        n = x.shape[0]
        if h.shape[0] != n:
            raise ValueError(f"{h.shape[0]} node scalar rows for {n} nodes")
        if e.size and (e.min() < 0 or e.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "node_scalars", h)
        object.__setattr__(self, "coords", x)
        object.__setattr__(self, "edges", e)
        if self.velocities is not None:
            v = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
            if v.shape != x.shape:
                raise ValueError("velocities must match coords in shape")
            object.__setattr__(self, "velocities", v)
        if self.edge_scalars is not None:
            es = np.asarray(self.edge_scalars, dtype=float).reshape(len(e), -1)
            object.__setattr__(self, "edge_scalars", es)

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @property
    def centroid(self):
        return self.coords.mean(axis=0)

    @property
    def is_centered(self):
        return bool(np.abs(self.centroid).max() < CENTER_TOL)

    def degrees(self):
        return np.bincount(self.edges[:, 0], minlength=self.n_nodes)

    def centered(self):
        # already-centered graphs come back untouched, so centering is idempotent bitwise
        return self if self.is_centered else replace(self, coords=self.coords - self.centroid)

    def translated(self, t):
        return replace(self, coords=self.coords + np.asarray(t, dtype=float))

    def transformed(self, g):
        """Apply an O(3) element (or a raw 3x3 orthogonal matrix) to coords and velocities."""
        M = g.matrix if isinstance(g, O3Element) else np.asarray(g, dtype=float)
        v = None if self.velocities is None else self.velocities @ M.T
        return replace(self, coords=self.coords @ M.T, velocities=v)

    def permuted(self, perm):
        """Relabel nodes so that new node ``k`` is old node ``perm[k]``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        v = None if self.velocities is None else self.velocities[perm]
        return replace(
            self,
            node_scalars=self.node_scalars[perm],
            coords=self.coords[perm],
            velocities=v,
            edges=inv[self.edges],
        )

    def with_center_node(self, scalar=None):
        """Append a node at the centroid connected (both ways) to every other node.

        The new node carries node scalars ``scalar`` (default: the existing
        scalars plus one).  Every symmetry of the graph that fixes the
        centroid is still a symmetry of the result.
        """
        n = self.n_nodes
        c = self.centroid
        hs = self.node_scalars[0] + 1.0 if scalar is None else np.broadcast_to(scalar, self.node_scalars.shape[1:])
        spokes = np.array([[n, j] for j in range(n)] + [[j, n] for j in range(n)])
        es = None
        if self.edge_scalars is not None:
            es = np.vstack([self.edge_scalars, np.zeros((2 * n, self.edge_scalars.shape[1]))])
        vel = None if self.velocities is None else np.vstack([self.velocities, np.zeros(3)])
        return replace(
            self,
            node_scalars=np.vstack([self.node_scalars, hs]),
            coords=np.vstack([self.coords, c]),
            velocities=vel,
            edges=np.vstack([self.edges, spokes]),
            edge_scalars=es,
        )


def _symmetric_structure(coords, name):
    n = len(coords)
    return GeometricGraph(np.ones((n, 1)), coords, complete_edges(n), meta={"name": name})


def make_kfold(k):
    """``k`` points equally spaced on the unit circle in the xy-plane, node 0 on +x."""
    if int(k) != k or k < 2:
        raise ValueError("a k-fold needs integer k >= 2")
    k = int(k)
    ang = 2 * np.pi * np.arange(k) / k
    coords = np.stack([np.cos(ang), np.sin(ang), np.zeros(k)], axis=1)
    coords -= coords.mean(axis=0)
    return _symmetric_structure(coords, f"kfold:{k}")


def _polyhedron_vertices(name):
    p = (1 + 5**0.5) / 2
    if name == "tetrahedron":
        v = [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)]
    elif name == "cube":
        v = [(a, b, c) for a in (1, -1) for b in (1, -1) for c in (1, -1)]
    elif name == "octahedron":
        v = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
    elif name == "icosahedron":
        base = [(0, a, b * p) for a in (1, -1) for b in (1, -1)]
        v = [t for b in base for t in (b, (b[1], b[2], b[0]), (b[2], b[0], b[1]))]
    elif name == "dodecahedron":
        q = 1 / p
        v = [(a, b, c) for a in (1, -1) for b in (1, -1) for c in (1, -1)]
        base = [(0, a * p, b * q) for a in (1, -1) for b in (1, -1)]
        v += [t for b in base for t in (b, (b[1], b[2], b[0]), (b[2], b[0], b[1]))]
    else:
        raise ValueError(f"unknown polyhedron {name!r}; expected one of {POLYHEDRA}")
    v = np.array(v, dtype=float)
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def make_polyhedron(name):
    """Vertices of a regular polyhedron at unit circumradius, fully connected."""
    return _symmetric_structure(_polyhedron_vertices(name), name)


def make_structure(spec):
    """Build a structure from ``"kfold:k"`` or a bare polyhedron name."""
    spec = str(spec).strip().lower()
    if spec.startswith("kfold:"):
        return make_kfold(int(spec.split(":", 1)[1]))
    return make_polyhedron(spec)


def structure_groups(g):
    """Symmetry groups of a generated structure, for the degeneration predicate.

    Only structures built by :func:`make_kfold`/:func:`make_polyhedron` (in
    their canonical orientation) are recognised; every returned group is
    checked with :func:`is_symmetric_under`.
    """
    name = g.meta.get("name", "")
    if name.startswith("kfold:"):
        k = int(name.split(":")[1])
        tags = [f"D{k}"] + (["Ci"] if k % 2 == 0 else [])
    elif name == "tetrahedron":
        tags = ["T"]
    elif name in ("cube", "octahedron"):
        tags = ["Ci", "O"]
    elif name in ("dodecahedron", "icosahedron"):
        tags = ["Ci", "I"]
    else:
        tags = symmetry_groups(g)
        if not tags:
            raise ValueError("structure is not symmetric under any candidate group")
    for t in tags:
        if not all(is_symmetric_under(g, e) for e in enumerate_group(t)):
            raise ValueError(f"structure {name!r} is not symmetric under {t}")
    return tags


@dataclass(frozen=True)
class SymmetryWitness:
    element: O3Element
    permutation: np.ndarray


def is_symmetric_under(g, e, tol=SYMMETRY_TOL):
    """Return a :class:`SymmetryWitness` if ``e . g == g`` up to relabeling, else ``None``.

    Transformed coordinates are matched to their nearest original vertex; the
    induced map must be a bijection that preserves node scalars, edges and
    edge scalars.
    """
    M = e.matrix if isinstance(e, O3Element) else np.asarray(e, dtype=float)
    x = g.coords
    moved = x @ M.T
    d = np.linalg.norm(moved[:, None, :] - x[None, :, :], axis=-1)
    perm = d.argmin(axis=1)
    if d[np.arange(len(x)), perm].max() > tol:
        return None
    if len(np.unique(perm)) != len(perm):
        return None
    if np.abs(g.node_scalars[perm] - g.node_scalars).max(initial=0.0) > tol:
        return None
    mapped = perm[g.edges]
    index = {tuple(p): k for k, p in enumerate(g.edges.tolist())}
    targets = [index.get(tuple(p)) for p in mapped.tolist()]
    if any(t is None for t in targets):
        return None
    if g.edge_scalars is not None:
        if np.abs(g.edge_scalars[targets] - g.edge_scalars).max(initial=0.0) > tol:
            return None
    if not isinstance(e, O3Element):
        det = np.linalg.det(M)
        e = O3Element(M if det > 0 else -M, int(det < 0))
    return SymmetryWitness(e, perm)


def detect_symmetry(g, group, tol=SYMMETRY_TOL):
    """Witnesses for every element of ``group`` that maps ``g`` onto itself."""
    G = enumerate_group(group) if isinstance(group, str) else group
    out = []
    for e in G:
        w = is_symmetric_under(g, e, tol)
        if w is not None:
            out.append(w)
    return out


def symmetry_groups(g, candidates=None, tol=SYMMETRY_TOL):
    """Names of the candidate groups (in canonical orientation) that leave ``g`` invariant."""
    if candidates is None:
        nmax = max(2, g.n_nodes)
        candidates = ["Ci", "T", "O", "I"] + [f"C{n}" for n in range(2, nmax + 1)] + [f"D{n}" for n in range(2, nmax + 1)]
    out = []
    for tag in candidates:
        G = enumerate_group(tag)
        if all(is_symmetric_under(g, e, tol) is not None for e in G):
            out.append(tag)
    return out


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_rotation(seed=None):
    """Haar-uniform rotation from a normalized quaternion of four standard normals."""
    q = _rng(seed).standard_normal(4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_o3(seed=None):
    rng = _rng(seed)
    return O3Element(random_rotation(rng), int(rng.integers(2)))


def perturb(g, eps, seed=None):
    """Displace each node along a random direction by a N(0, (eps * mean radius)^2) amount."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if eps == 0:
        return g
    rng = _rng(seed)
    x = g.coords
    scale = eps * np.linalg.norm(x - x.mean(axis=0), axis=1).mean()
    dirs = rng.standard_normal(x.shape)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    mag = rng.normal(0.0, scale, size=(len(x), 1))
    moved = x + dirs * mag
    return replace(g, coords=moved - moved.mean(axis=0))


def random_graph(seed=None, n_nodes=6, node_in=1, edge_in=0, keep=0.7, velocities=False):
    """Random centered graph: a directed ring plus each other ordered pair kept with prob ``keep``.

    The ring guarantees every node has a neighbor.
    """
    rng = _rng(seed)
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    x = rng.standard_normal((n_nodes, 3))
    pairs = complete_edges(n_nodes)
    ring = (pairs[:, 1] - pairs[:, 0]) % n_nodes == 1
    edges = pairs[ring | (rng.random(len(pairs)) < keep)]
    es = rng.standard_normal((len(edges), edge_in)) if edge_in else None
    vel = rng.standard_normal((n_nodes, 3)) if velocities else None
    return GeometricGraph(rng.standard_normal((n_nodes, node_in)), x - x.mean(axis=0), edges,
                          velocities=vel, edge_scalars=es)


# --------------------------------------------------------------------------- N-body

def coulomb_forces(x, q, softening=SOFTENING):
    """Pairwise forces ``q_i q_j (x_i - x_j) / (|x_i - x_j|^2 + delta^2)^(3/2)`` summed over j.

    ``x`` has shape ``(..., n, 3)`` and ``q`` ``(..., n)``.
    """
    diff = x[..., :, None, :] - x[..., None, :, :]
    r2 = (diff**2).sum(-1) + softening**2
    coef = q[..., :, None] * q[..., None, :] / (r2 * np.sqrt(r2))
    return (coef[..., None] * diff).sum(-2)


def leapfrog(x, v, q, steps, dt, softening=SOFTENING):
    """Kick-drift-kick integration with unit masses; returns final ``(x, v)``."""
    x = np.array(x, dtype=float)
    v = np.array(v, dtype=float)
    a = coulomb_forces(x, q, softening)
    for _ in range(steps):
        v = v + 0.5 * dt * a
        x = x + dt * v
        a = coulomb_forces(x, q, softening)
        v = v + 0.5 * dt * a
    return x, v


@dataclass(frozen=True)
class NBodyConfig:
    n: int = 5
    steps: int = 1000
    dt: float = 0.001
    pos_std: float = 0.5
    vel_std: float = 0.5
    charges: str = "binary"  # "binary" -> {0, 1}; "signed" -> {-1, +1}
    softening: float = SOFTENING

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("need at least two particles")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError("steps must be a non-negative integer")
        if self.charges not in ("binary", "signed"):
            raise ValueError("charges must be 'binary' or 'signed'")


def _draw_initial(cfg, rng):
    if cfg.charges == "binary":
        q = rng.integers(0, 2, size=cfg.n).astype(float)
    else:
        q = rng.choice([-1.0, 1.0], size=cfg.n)
    x = rng.normal(0.0, cfg.pos_std, size=(cfg.n, 3))
    v = rng.normal(0.0, cfg.vel_std, size=(cfg.n, 3))
    return q, x, v


def nbody_graph(q, x, v):
    """Wrap an N-body state: node scalar = charge, edge scalar = ``q_i q_j``."""
    q = np.asarray(q, dtype=float)
    edges = complete_edges(len(q))
    return GeometricGraph(q[:, None], x, edges, velocities=v, edge_scalars=(q[edges[:, 0]] * q[edges[:, 1]])[:, None])


def nbody_simulate(n=5, steps=1000, dt=0.001, seed=0, **kwargs):
    """Simulate one charged system; returns ``(graph at t0, positions at t_end)``."""
    cfg = NBodyConfig(n=n, steps=steps, dt=dt, **kwargs)
    q, x, v = _draw_initial(cfg, _rng(seed))
    x1, _ = leapfrog(x, v, q, cfg.steps, cfg.dt, cfg.softening)
    return nbody_graph(q, x, v), x1


def generate_dataset(num_samples, cfg=None, seed=0):
    """Independent samples, one child seed each; integrated together in a batch."""
    cfg = cfg or NBodyConfig()
    children = np.random.SeedSequence(seed).spawn(num_samples)
    init = [_draw_initial(cfg, np.random.default_rng(c)) for c in children]
    q = np.stack([s[0] for s in init])
    x = np.stack([s[1] for s in init])
    v = np.stack([s[2] for s in init])
    x1, _ = leapfrog(x, v, q, cfg.steps, cfg.dt, cfg.softening)
    return [
        {"charges": q[k], "positions_t0": x[k], "velocities_t0": v[k], "positions_t1": x1[k]}
        for k in range(num_samples)
    ]


def record_to_graph(rec):
    return nbody_graph(rec["charges"], rec["positions_t0"], rec["velocities_t0"]), np.asarray(rec["positions_t1"], dtype=float)


DATASET_FIELDS = ("charges", "positions_t0", "velocities_t0", "positions_t1")


def dumps_record(rec):
    return json.dumps({k: np.asarray(rec[k], dtype=float).tolist() for k in DATASET_FIELDS}, sort_keys=True, separators=(",", ":"))


def save_dataset(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec) + "\n")


def load_dataset(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            raw = json.loads(line)
            missing = set(DATASET_FIELDS) - raw.keys()
            extra = raw.keys() - set(DATASET_FIELDS)
            if missing or extra:
                raise ValueError(f"{path}:{lineno}: bad fields (missing {sorted(missing)}, unexpected {sorted(extra)})")
            rec = {k: np.asarray(raw[k], dtype=float) for k in DATASET_FIELDS}
            n = rec["charges"].shape[0]
            for k in DATASET_FIELDS[1:]:
                if rec[k].shape != (n, 3):
                    raise ValueError(f"{path}:{lineno}: {k} must have shape ({n}, 3)")
            records.append(rec)
    return records
