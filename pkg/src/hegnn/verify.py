"""Executable invariant suites behind ``hegnn verify``.

Each check returns a :class:`CheckResult` with the worst error seen and the
tolerance it was held to.  ``fault`` switches on a deliberate defect so the
suite can prove it notices: ``"parity"`` flips the inversion sign in the
expected representation, ``"gate"`` swaps in an activation whose backward
pass is wrong.
"""
from __future__ import annotations

import contextlib
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .expressivity import legendre_double_sum, neighbor_directions, recover_angles
from .geomgraph import random_graph, random_o3, random_rotation
from .groups import INVERSION, O3Element, brute_force_trace, group_average, trace_closed_form
from .model import ModelConfig, forward, forward_vars, init_features, init_params, messages
from .specfun import addition_constant, legendre_eval, o3_rep, wigner_d

FAULTS = ("parity", "gate")
TOLERANCES = {
    "equivariance": 1e-8,
    "parity": 1e-8,
    "translation": 1e-8,
    "permutation": 1e-10,
    "wigner": 1e-10,
    "projector": 1e-10,
    "traces": 1e-6,
    "legendre_identity": 1e-9,
    "angles": 1e-6,
    "grad_primitives": 1e-6,
    "grad_model": 1e-5,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    error: float
    tol: float
    cases: int


def _result(name, errors, tol=None):
    tol = TOLERANCES[name] if tol is None else tol
    err = float(max(errors)) if errors else 0.0
    return CheckResult(name, bool(err < tol and np.isfinite(err)), err, tol, len(errors))


def _expected_rep(l, e, fault):
    if fault == "parity":
        e = O3Element(e.rotation, 1 - e.parity)
    return o3_rep(l, e)


def small_config(max_degree=3, **kw):
    opts = dict(max_degree=max_degree, hidden_width=16, n_layers=2, node_in=2, edge_in=1)
    opts.update(kw)
    return ModelConfig(**opts)


def _case(rng, **cfg_kw):
    cfg = small_config(**cfg_kw)
    g = random_graph(rng, n_nodes=int(rng.integers(3, 8)), node_in=cfg.node_in, edge_in=cfg.edge_in,
                     velocities=cfg.use_velocity)
    return g, cfg, init_params(cfg, seed=int(rng.integers(2**63)))


def equivariance_errors(g, cfg, params, e, fault=None):
    """Worst deviation of ``forward`` from exact O(3) equivariance for one element ``e``."""
    a = forward(g, cfg, params)
    b = forward(g.transformed(e), cfg, params)
    errs = [np.abs(a.h - b.h).max(), np.abs(a.x @ e.matrix.T - b.x).max()]
    for l in cfg.active_degrees:
        errs.append(np.abs(a.v[l] @ _expected_rep(l, e, fault).T - b.v[l]).max())
    return max(errs)


def check_equivariance(seed=0, cases=20, fault=None):
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(cases):
        g, cfg, params = _case(rng, use_velocity=bool(rng.integers(2)))
        errs.append(equivariance_errors(g, cfg, params, random_o3(rng), fault))
    return _result("equivariance", errs)


def check_parity(seed=0, cases=5, fault=None):
    """Pure inversion: odd-degree blocks change sign, even ones and ``h`` do not."""
    rng = np.random.default_rng(seed + 1)
    errs = []
    for _ in range(cases):
        g, cfg, params = _case(rng, max_degree=4)
        errs.append(equivariance_errors(g, cfg, params, INVERSION, fault))
    return _result("parity", errs)


def check_translation(seed=0, cases=5):
    rng = np.random.default_rng(seed + 2)
    errs = []
    for _ in range(cases):
        g, cfg, params = _case(rng)
        t = rng.standard_normal(3) * 3
        a, b = forward(g, cfg, params), forward(g.translated(t), cfg, params)
        errs.append(max([np.abs(a.h - b.h).max(), np.abs(a.x + t - b.x).max()]
                        + [np.abs(a.v[l] - b.v[l]).max() for l in cfg.active_degrees]))
    return _result("translation", errs)


def check_permutation(seed=0, cases=5):
    rng = np.random.default_rng(seed + 3)
    errs = []
    for _ in range(cases):
        g, cfg, params = _case(rng)
        perm = rng.permutation(g.n_nodes)
        a, b = forward(g, cfg, params), forward(g.permuted(perm), cfg, params)
        errs.append(max([np.abs(a.h[perm] - b.h).max(), np.abs(a.x[perm] - b.x).max()]
                        + [np.abs(a.v[l][perm] - b.v[l]).max() for l in cfg.active_degrees]))
    return _result("permutation", errs)


def check_wigner(seed=0, cases=5, lmax=10):
    """Orthogonality and the homomorphism law ``D(R1 R2) = D(R1) D(R2)``."""
    rng = np.random.default_rng(seed + 4)
    errs = []
    for _ in range(cases):
        R1, R2 = random_rotation(rng), random_rotation(rng)
        for l in range(lmax + 1):
            D1, D2 = wigner_d(l, R1), wigner_d(l, R2)
            errs.append(np.abs(D1 @ D1.T - np.eye(2 * l + 1)).max())
            errs.append(np.abs(wigner_d(l, R1 @ R2) - D1 @ D2).max())
    return _result("wigner", errs)


def check_projectors(groups=("C3", "D4", "T", "O", "I", "OxCi"), lmax=12):
    """Group averages are symmetric idempotents whose traces match the closed forms."""
    proj, trace = [], []
    for name in groups:
        for l in range(lmax + 1):
            A = group_average(l, name)
            proj.append(max(np.abs(A @ A - A).max(), np.abs(A - A.T).max()))
            trace.append(abs(brute_force_trace(l, name) - trace_closed_form(l, name)))
    return [_result("projector", proj), _result("traces", trace)]


def legendre_identity_errors(g, lmax):
    """Compare layer-0 inner products under unit gates with the Legendre double sum."""
    cfg = ModelConfig(max_degree=lmax, hidden_width=8, n_layers=1, node_in=g.node_scalars.shape[1],
                      edge_in=0, unit_init_gates=True)
    params = init_params(cfg, 0)
    state = init_features(replace(g, edge_scalars=None), cfg, params)
    _, z = messages(state, cfg, params, 0)
    nbrs = [g.edges[g.edges[:, 0] == i, 1] for i in range(g.n_nodes)]
    errs = []
    for k, (i, j) in enumerate(g.edges):
        u = neighbor_directions(g.coords, nbrs[i], i)
        w = neighbor_directions(g.coords, nbrs[j], j)
        for l in cfg.active_degrees:
            ref = addition_constant(l) * legendre_double_sum(u, w, l) / (len(u) * len(w))
            got = z[l].value[k, 0]
            errs.append(abs(got - ref) / max(1.0, abs(ref)))
    return max(errs)


def check_legendre_identity(seed=0, cases=10, lmax=6):
    rng = np.random.default_rng(seed + 5)
    return _result("legendre_identity", [legendre_identity_errors(random_graph(rng, int(rng.integers(3, 8))), lmax) for _ in range(cases)])


def angle_roundtrip_error(t, scale=1.0):
    """Forward Legendre sums of the cosines ``t`` then invert them."""
    t = np.sort(np.asarray(t, dtype=float))
    M = len(t)
    z = [addition_constant(l) / scale * legendre_eval(l, t).sum() for l in range(1, M + 1)]
    return float(np.abs(recover_angles(z, M, scale=scale) - t).max())


def _separated_cosines(rng, count, gap=0.02):
    while True:
        t = np.sort(rng.uniform(-1, 1, size=count))
        if count == 1 or np.diff(t).min() >= gap:
            return t


def check_angles(seed=0, cases=20, max_count=6):
    """Round trips for distinct cosines (pairwise gap >= 0.02) and for exact repeats."""
    rng = np.random.default_rng(seed + 6)
    errs = []
    for _ in range(cases):
        t = _separated_cosines(rng, int(rng.integers(1, max_count + 1)))
        errs.append(angle_roundtrip_error(t))
        errs.append(angle_roundtrip_error(rng.choice(t, size=len(t))))
    return _result("angles", errs)


# --------------------------------------------------------------------------- gradients

def primitive_cases(rng):
    """``name -> (fn, params)`` exercising every differentiable primitive."""
    A = rng.standard_normal((4, 3))
    B = rng.standard_normal((3, 5))
    C = rng.standard_normal((4, 3))
    P = rng.uniform(0.5, 2.0, size=(4, 3))
    idx = rng.integers(0, 4, size=7)
    w = rng.standard_normal((4, 5))
    lin = lambda out: ad.sum_(out * rng_weights(out.shape))
    cache = {}

    def rng_weights(shape):
        if shape not in cache:
            cache[shape] = rng.standard_normal(shape)
        return cache[shape]

    return {
        "add": (lambda p: lin(p["a"] + p["c"]), {"a": A, "c": C}),
        "broadcast_add": (lambda p: lin(p["a"] + p["b"]), {"a": A, "b": B[:, 0]}),
        "neg": (lambda p: lin(-p["a"]), {"a": A}),
        "mul": (lambda p: lin(p["a"] * p["c"]), {"a": A, "c": C}),
        "matmul": (lambda p: lin(p["a"] @ p["b"]), {"a": A, "b": B}),
        "sum": (lambda p: lin(ad.sum_(p["a"], axis=0)), {"a": A}),
        "mean": (lambda p: lin(ad.mean(p["a"], axis=1)), {"a": A}),
        "reshape": (lambda p: lin(ad.reshape(p["a"], (3, 4))), {"a": A}),
        "take": (lambda p: lin(p["a"][idx]), {"a": A}),
        "concat": (lambda p: lin(ad.concat([p["a"], p["c"]], -1)), {"a": A, "c": C}),
        "scatter_add": (lambda p: lin(ad.scatter_add(p["a"][idx], idx[::-1], 4)), {"a": A}),
        "silu": (lambda p: lin(ad.silu(p["a"])), {"a": A}),
        "square": (lambda p: lin(ad.square(p["a"])), {"a": A}),
        "sqrt": (lambda p: lin(ad.sqrt(p["p"])), {"p": P}),
        "inner": (lambda p: lin(ad.inner(p["a"], p["c"])), {"a": A, "c": C}),
        "norm": (lambda p: lin(ad.norm(p["p"])), {"p": P}),
        "dense": (lambda p: lin(ad.silu(p["a"] @ p["b"] + p["c0"])), {"a": A, "b": B, "c0": w[0]}),
    }


def model_loss_fn(g, cfg, target):
    def fn(p):
        return ad.mean(ad.square(forward_vars(g, cfg, p).x - target))
    return fn


def model_grad_error(seed, cfg=None, n_dirs=20):
    """Finite-difference check of the full model MSE on a small random graph."""
    rng = np.random.default_rng(seed)
    cfg = cfg or small_config(max_degree=2, hidden_width=8, use_velocity=True)
    g = random_graph(rng, 3, node_in=cfg.node_in, edge_in=cfg.edge_in, velocities=True)
    params = init_params(cfg, seed)
    target = rng.standard_normal((g.n_nodes, 3))
    return ad.grad_check(model_loss_fn(g, cfg, target), params, seed=seed, n_dirs=n_dirs)


def _broken_silu(a):
    a = ad.as_var(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return ad.custom_op(a.value * s, (a,), lambda g: (g * s,))  # drops the x * s' term


@contextlib.contextmanager
def injected_gate_fault():
    original = ad.silu
    ad.silu = _broken_silu
    try:
        yield
    finally:
        ad.silu = original


def check_gradients(seed=0, seeds=5, fault=None):
    ctx = injected_gate_fault() if fault == "gate" else contextlib.nullcontext()
    prim, model = [], []
    with ctx:
        for s in range(seed, seed + seeds):
            for fn, params in primitive_cases(np.random.default_rng(s)).values():
                prim.append(ad.grad_check(fn, params, seed=s))
            model.append(model_grad_error(s))
    return [_result("grad_primitives", prim), _result("grad_model", model)]


def run_all(seed=0, fault=None, quick=False):
    """Run every suite; returns a JSON-ready report dict."""
    if fault is not None and fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    n = 5 if quick else 20
    results = [
        check_equivariance(seed, cases=n, fault=fault),
        check_parity(seed, fault=fault),
        check_translation(seed),
        check_permutation(seed),
        check_wigner(seed),
        *check_projectors(lmax=8 if quick else 12),
        check_legendre_identity(seed, cases=n // 2),
        check_angles(seed),
        *check_gradients(seed, seeds=2 if quick else 5, fault=fault),
    ]
    return {
        "seed": seed,
        "fault": fault,
        "passed": all(r.passed for r in results),
        "checks": [asdict(r) for r in results],
    }
