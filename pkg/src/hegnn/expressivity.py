"""Orientation discrimination on symmetric structures and angle recovery from inner products."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from .geomgraph import is_symmetric_under, random_rotation, structure_groups
from .groups import O3Element
from .model import ModelConfig, forward, init_params, pool
from .specfun import addition_constant, legendre_eval, sph_harm

DISTINGUISH_TOL = 1e-3
MAX_ANGLES = 12


class ConditioningError(ValueError):
    """Raised when recovering more angles than the power-sum route can resolve."""


@dataclass(frozen=True)
class Trial:
    trial: int
    verdict: bool
    score: float  # max_l |pool(G0) - pool(G1)| / (1 + |pool(G0)|)
    norm: float  # max_l |pool(G0)|


def _draw_rotation(structure, rng, max_tries=1000):
    for _ in range(max_tries):
        R = random_rotation(rng)
        if is_symmetric_under(structure, O3Element(R)) is None:
            return R
    raise RuntimeError("could not draw a rotation that moves the structure")


def discrimination_trials(structure, degrees, trials=5, seed=0, require_symmetric=True,
                          center_node=True, **cfg_overrides):
    """Run the forward-only orientation test and return one :class:`Trial` per draw.

    Each trial draws fresh model parameters and a rotation ``R`` that does not
    map the structure onto itself, then compares the pooled degree-``l``
    features of the structure and of its rotated copy.

    With ``center_node`` the centroid is attached as an extra node (distinct
    scalar, linked to every vertex) that only relays messages; pooling runs
    over the original vertices.  Without it, identical node scalars on a
    complete graph make every odd-degree node mean cancel pairwise.
    """
    degrees = sorted(set(int(l) for l in degrees))
    if not degrees or degrees[0] < 1:
        raise ValueError("degrees must be a non-empty set of integers >= 1")
    if not structure.is_centered:
        raise ValueError("structure must be centered")
    if require_symmetric:
        structure_groups(structure)  # raises when no symmetry group applies
    options = dict(max_degree=max(degrees), degree_mask=tuple(degrees), n_layers=2,
                   node_in=structure.node_scalars.shape[1],
                   edge_in=0 if structure.edge_scalars is None else structure.edge_scalars.shape[1])
    options.update(cfg_overrides)
    cfg = ModelConfig(**options)

    ss = np.random.SeedSequence(seed)
    n = structure.n_nodes
    out = []
    for t, child in enumerate(ss.spawn(trials)):
        rng = np.random.default_rng(child)
        params = init_params(cfg, seed=rng.integers(2**63))
        R = _draw_rotation(structure, rng)
        g0, g1 = structure, structure.transformed(R)
        if center_node:
            g0, g1 = g0.with_center_node(), g1.with_center_node()
        p0 = pool(forward(g0, cfg, params), nodes=slice(0, n))
        p1 = pool(forward(g1, cfg, params), nodes=slice(0, n))
        score = norm = 0.0
        for l in degrees:
            a = np.linalg.norm(p0[l])
            score = max(score, np.linalg.norm(p0[l] - p1[l]) / (1.0 + a))
            norm = max(norm, a)
        out.append(Trial(t, bool(score > DISTINGUISH_TOL), float(score), float(norm)))
    return out


def discriminates(structure, degrees, trials=5, seed=0, **kwargs):
    """Majority verdict of :func:`discrimination_trials`."""
    res = discrimination_trials(structure, degrees, trials, seed, **kwargs)
    return sum(r.verdict for r in res) * 2 > len(res)


def sph_sum_check(structure, l):
    """Norm of ``sum_i Y^(l)(x_i / |x_i|)`` over a centered structure and its verdict."""
    x = structure.coords
    r = np.linalg.norm(x, axis=1)
    if np.any(r < 1e-12):
        raise ValueError("a node sits at the origin; its direction is undefined")
    norm = float(np.linalg.norm(sph_harm(l, x / r[:, None]).sum(axis=0)))
    return norm, norm > DISTINGUISH_TOL


# --------------------------------------------------------------------------- angle recovery

def neighbor_directions(coords, nbrs, i):
    d = coords[i] - coords[list(nbrs)]
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def legendre_double_sum(u, w, l):
    """``sum_{s,t} P_l(<u_s, w_t>)`` for two sets of unit vectors."""
    return float(legendre_eval(l, np.clip(u @ w.T, -1.0, 1.0)).sum())


def _cluster_means(roots, tol):
    """Replace each single-linkage cluster (complex distance < ``tol``) by its real mean."""
    n = len(roots)
    label = list(range(n))

    def find(a):
        while label[a] != a:
            label[a] = label[label[a]]
            a = label[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if abs(roots[a] - roots[b]) < tol:
                label[find(a)] = find(b)
    groups = {}
    for a in range(n):
        groups.setdefault(find(a), []).append(a)
    out = np.empty(n)
    for members in groups.values():
        out[members] = np.mean(roots[members].real)
    return np.sort(out)


def recover_angles(z_values, count, scale=1.0, cluster_tol=5e-3):
    """Recover the multiset of cosines behind degree-wise inner products.

    ``z_values[k]`` is the inner product at degree ``l = k + 1`` (``l = 1..M``)
    and equals ``addition_constant(l) / scale * sum_n P_l(t_n)`` for ``M =
    count`` unknown cosines ``t_n``.  Legendre sums are mapped to power
    sums, power sums to elementary symmetric polynomials (Newton), and
    those are the coefficients of the monic polynomial whose roots are the
    ``t_n``.

    A root of multiplicity ``m`` comes back from the eigenvalue solver as a
    small complex ring of radius ~ eps**(1/m); its mean is well conditioned.
    Roots closer than ``cluster_tol`` (complex distance, single linkage) are
    therefore merged into their mean.  Distinct cosines closer than that
    are reported as a repeated value.  Returns sorted cosines.
    """
    M = int(count)
    if M < 1:
        raise ValueError("count must be >= 1")
    if M > MAX_ANGLES:
        raise ConditioningError(f"recovering {M} angles exceeds the conditioning limit of {MAX_ANGLES}")
    z = np.asarray(z_values, dtype=float)
    if z.shape[0] < M:
        raise ValueError(f"need inner products for degrees 1..{M}")
    leg_sums = np.empty(M + 1)
    leg_sums[0] = M
    for l in range(1, M + 1):
        leg_sums[l] = z[l - 1] * scale / addition_constant(l)

    power = np.empty(M + 1)
    for k in range(M + 1):
        mono = np.zeros(k + 1)
        mono[k] = 1.0
        coef = npleg.poly2leg(mono)  # t^k in the Legendre basis
        power[k] = float(coef @ leg_sums[: k + 1])

    e = np.zeros(M + 1)
    e[0] = 1.0
    for k in range(1, M + 1):
        e[k] = sum((-1) ** (i - 1) * e[k - i] * power[i] for i in range(1, k + 1)) / k
    poly = np.array([(-1) ** k * e[k] for k in range(M + 1)])
    roots = np.roots(poly) if M > 1 else np.array([e[1]], dtype=complex)
    return np.clip(_cluster_means(roots, cluster_tol), -1.0, 1.0)
