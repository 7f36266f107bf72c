"""Finite subgroups of O(3), group-average projectors and the degeneration predicate.

Axis conventions: ``Cn``/``Dn`` rotate about z, with the first two-fold axis of
``Dn`` along x.  ``T`` and ``O`` are aligned with the cube ``(+-1, +-1, +-1)``;
``I`` with the icosahedron whose vertices are the cyclic permutations of
``(0, +-1, +-phi)``.  Any group can be combined with inversion by appending
``xCi`` to its tag (``"OxCi"``, ``"D4xCi"``).
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .specfun import MAX_DEGREE, _quadrature, _sph_harm_blocks

MATCH_TOL = 1e-9
RANK_TOL = 1e-8
ZERO_TOL = 1e-9

_TRACE_STRINGS = {
    "T": "100110",
    "O": "100010101110",
    "I": "100000100010100110101110111110",
}


@dataclass(frozen=True)
class O3Element:
    """A rotation paired with a parity bit (1 = composed with inversion)."""

    rotation: np.ndarray
    parity: int = 0

    @property
    def matrix(self):
        """The orthogonal 3x3 matrix acting on coordinates."""
        return -self.rotation if self.parity else self.rotation

    def __matmul__(self, other):
        return O3Element(self.rotation @ other.rotation, self.parity ^ other.parity)

    def inverse(self):
        return O3Element(self.rotation.T, self.parity)

    def close_to(self, other, tol=MATCH_TOL):
        return self.parity == other.parity and np.abs(self.rotation - other.rotation).max() < tol

    def is_identity(self, tol=MATCH_TOL):
        return not self.parity and np.abs(self.rotation - np.eye(3)).max() < tol


IDENTITY = O3Element(np.eye(3), 0)
INVERSION = O3Element(np.eye(3), 1)


def axis_angle(axis, angle):
    """Rotation matrix about ``axis`` (normalized here) by ``angle`` radians."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True)
class FiniteGroup:
    name: str
    elements: tuple = field(repr=False)

    @property
    def order(self):
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def find(self, g, tol=1e-8):
        """Index of the element matching ``g``, or ``None``."""
        for k, e in enumerate(self.elements):
            if e.close_to(g, tol):
                return k
        return None


def close_group(generators, tol=MATCH_TOL, max_order=240):
    """Generate the finite group spanned by ``generators`` by repeated composition."""
    elements = [IDENTITY]
    frontier = [IDENTITY]
    while frontier:
        new = []
        for a in frontier:
            for g in generators:
                c = g @ a
                if not any(c.close_to(e, tol) for e in elements):
                    elements.append(c)
                    new.append(c)
                    if len(elements) > max_order:
                        raise ValueError("generators do not span a finite group of acceptable order")
        frontier = new
    return elements


_PHI = (1 + 5**0.5) / 2


def _generators(base, n):
    if base == "Ci":
        return [INVERSION]
    if base == "C":
        return [O3Element(axis_angle([0, 0, 1], 2 * np.pi / n))]
    if base == "D":
        return [O3Element(axis_angle([0, 0, 1], 2 * np.pi / n)), O3Element(axis_angle([1, 0, 0], np.pi))]
    if base == "T":
        return [O3Element(axis_angle([1, 1, 1], 2 * np.pi / 3)), O3Element(axis_angle([0, 0, 1], np.pi))]
    if base == "O":
        return [O3Element(axis_angle([1, 1, 1], 2 * np.pi / 3)), O3Element(axis_angle([0, 0, 1], np.pi / 2))]
    if base == "I":
        return [
            O3Element(axis_angle([0, 1, _PHI], 2 * np.pi / 5)),
            O3Element(axis_angle([1, 1, 1], 2 * np.pi / 3)),
        ]
    raise ValueError(f"unknown group {base!r}")


_TAG = re.compile(r"^(Ci|T|O|I|C(\d+)|D(\d+))(xCi)?$")


def parse_tag(name):
    """Split a tag into ``(base, n, with_inversion)``; ``base`` is one of Ci, C, D, T, O, I."""
    tag = str(name).replace("×", "x").replace(" ", "")
    m = _TAG.match(tag)
    if not m:
        raise ValueError(f"unknown group tag {name!r}")
    head, cn, dn, inv = m.groups()
    if cn is not None:
        base, n = "C", int(cn)
    elif dn is not None:
        base, n = "D", int(dn)
    else:
        base, n = head, None
    if n is not None and n < 2:
        raise ValueError(f"{base}n needs n >= 2, got {n}")
    if base == "Ci" and inv:
        raise ValueError("CixCi is not a distinct group")
    return base, n, bool(inv)


def _canonical(base, n, inv):
    return (base if n is None else f"{base}{n}") + ("xCi" if inv else "")


@lru_cache(maxsize=None)
def enumerate_group(name):
    """All elements of the named group, generated by closure from fixed generators."""
    base, n, inv = parse_tag(name)
    gens = _generators(base, n)
    if inv:
        gens = gens + [INVERSION]
    return FiniteGroup(_canonical(base, n, inv), tuple(close_group(gens)))


def expected_order(name):
    base, n, inv = parse_tag(name)
    order = {"Ci": 2, "C": n, "D": None if n is None else 2 * n, "T": 12, "O": 24, "I": 60}[base]
    return order * (2 if inv else 1)


def _as_group(G):
    return G if isinstance(G, FiniteGroup) else enumerate_group(G)


def _average_blocks(G, lmax, chunk=8):
    # D(g) = sum_u w Y(g u) Y(u)^T on an exact quadrature grid, so the group
    # mean only needs the mean of Y(g u) over g before a single product
    pts, w, base = _quadrature(lmax)
    sums = {0: [np.zeros_like(b) for b in base], 1: [np.zeros_like(b) for b in base]}
    for parity in (0, 1):
        rots = [g.rotation for g in G if g.parity == parity]
        for k in range(0, len(rots), chunk):
            moved = np.einsum("gab,nb->gna", np.array(rots[k:k + chunk]), pts)
            for l, Y in enumerate(_sph_harm_blocks(lmax, moved)):
                sums[parity][l] += Y.sum(axis=0)
    out = []
    for l, b in enumerate(base):
        acc = sums[0][l] - sums[1][l] if l % 2 else sums[0][l] + sums[1][l]
        avg = (acc * w[:, None]).T @ b / G.order
        avg.setflags(write=False)
        out.append(avg)
    return out


@lru_cache(maxsize=None)
def _named_averages(name):
    return _average_blocks(enumerate_group(name), MAX_DEGREE)


def group_average(l, G):
    """Mean of ``rho^(l)(g)`` over the group: a projector onto the fixed subspace."""
    if l < 0 or l > MAX_DEGREE:
        raise ValueError(f"degree must lie in 0..{MAX_DEGREE}")
    if isinstance(G, FiniteGroup):
        try:
            named = enumerate_group(G.name) is G
        except ValueError:
            named = False
        return _named_averages(G.name)[l] if named else _average_blocks(G, l)[l]
    return _named_averages(_as_group(G).name)[l]


def brute_force_trace(l, G):
    """``sum_g tr rho^(l)(g) / |G|`` from the constructed matrices (not rounded)."""
    return float(np.trace(group_average(l, G)))


def trace_closed_form(l, name):
    """Trace of the group average from the tabulated closed forms."""
    if l < 0:
        raise ValueError("degree must be non-negative")
    base, n, inv = parse_tag(name)
    if base == "Ci":
        value = (2 * l + 1) * (l % 2 == 0)
    elif base == "C":
        value = 2 * (l // n) + 1
    elif base == "D":
        value = l // n + (l % 2 == 0)
    else:
        b = _TRACE_STRINGS[base]
        value = l // len(b) + int(b[l % len(b)])
    if inv and base != "Ci":
        # averaging with inversion keeps even degrees and kills odd ones
        value = value if l % 2 == 0 else 0
    return int(value)


def fixed_subspace_dim(l, G):
    """Dimension of the subspace left fixed by every ``rho^(l)(g)``."""
    avg = group_average(l, G)
    s = np.linalg.svd(np.eye(2 * l + 1) - avg, compute_uv=False)
    # singular values of I - avg are 0 or 1, so the scale never drops below 1;
    # otherwise an identity average would turn rounding noise into rank
    rank = int(np.sum(s > RANK_TOL * max(s[0], 1.0)))
    return 2 * l + 1 - rank


def degenerate_degrees(groups, lmax, method="closed"):
    """Degrees ``l <= lmax`` on which every equivariant output is forced to zero.

    ``groups`` is one group (tag or ``FiniteGroup``) or a list of them; the
    result is the union over the list.  ``method`` selects the closed-form
    traces (``"closed"``), the numerical group averages (``"numeric"``), or
    both with an agreement check (``"both"``).
    """
    if lmax > MAX_DEGREE:
        raise ValueError(f"lmax must be <= {MAX_DEGREE}")
    if isinstance(groups, (str, FiniteGroup)):
        groups = [groups]
    found = set()
    for G in groups:
        name = G.name if isinstance(G, FiniteGroup) else G
        closed = numeric = None
        if method in ("closed", "both"):
            closed = {l for l in range(lmax + 1) if trace_closed_form(l, name) == 0}
        if method in ("numeric", "both"):
            numeric = {l for l in range(lmax + 1) if np.abs(group_average(l, G)).max() < ZERO_TOL}
        if closed is not None and numeric is not None and closed != numeric:
            raise AssertionError(f"closed-form and numeric degeneration disagree for {name}")
        found |= closed if closed is not None else numeric
    return found
