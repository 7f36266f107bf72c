"""Legendre polynomials, real spherical harmonics and O(3) representation matrices.

Conventions
-----------
Real spherical harmonics use "component" normalization, so that
``sum_m Y_m^(l)(u)**2 == 2l + 1`` for every unit vector ``u``.  Degree 0 is the
constant 1 and the addition theorem reads

    <Y^(l)(u), Y^(l)(v)> = (2l + 1) * P_l(<u, v>).

Components are ordered m = -l..l, with negative m carrying the sine part
(``Im (x + iy)^|m|``) and positive m the cosine part.  No Condon-Shortley phase
is applied, hence the degree-1 block is ``sqrt(3) * (y, z, x)``.

Wigner-D matrices are built directly in this real basis by exact quadrature
of ``Y(R u) Y(u)^T`` over the sphere.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

MAX_DEGREE = 30
UNIT_TOL = 1e-8
ORTHO_TOL = 1e-10
CLAMP_TOL = 1e-12

# permutation taking the real degree-1 block (y, z, x) to Cartesian (x, y, z)
L1_TO_CARTESIAN = np.array([2, 0, 1])
CARTESIAN_TO_L1 = np.array([1, 2, 0])


def _check_degree(l, lmax=MAX_DEGREE):
    if int(l) != l or l < 0:
        raise ValueError(f"degree must be a non-negative integer, got {l!r}")
    if l > lmax:
        raise ValueError(f"degree {l} exceeds the supported ceiling {lmax}")
    return int(l)


def legendre_eval(l, t):
    """Evaluate the Legendre polynomial ``P_l`` by the three-term recurrence.

    ``t`` may be a scalar or an array.  Values within 1e-12 outside
    ``[-1, 1]`` are clamped; anything further out raises ``ValueError``.
    """
    if int(l) != l or l < 0:
        raise ValueError(f"degree must be a non-negative integer, got {l!r}")
    l = int(l)
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + CLAMP_TOL):
        raise ValueError("Legendre argument outside [-1, 1]")
    t = np.clip(t, -1.0, 1.0)
    p_prev = np.ones_like(t)
    if l == 0:
        return p_prev if p_prev.ndim else float(p_prev)
    p = t.copy()
    for k in range(1, l):
        p_prev, p = p, ((2 * k + 1) * t * p - k * p_prev) / (k + 1)
    return p if p.ndim else float(p)


def legendre_all(lmax, t):
    """Return ``P_0..P_lmax`` stacked along a new leading axis."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    out = np.empty((lmax + 1,) + t.shape)
    out[0] = 1.0
    if lmax >= 1:
        out[1] = t
    for k in range(1, lmax):
        out[k + 1] = ((2 * k + 1) * t * out[k] - k * out[k - 1]) / (k + 1)
    return out


@lru_cache(maxsize=None)
def _norm_table(lmax):
    # sqrt((2l+1) (l-m)!/(l+m)!) with an extra sqrt(2) for m > 0,
    # accumulated as a running product to stay in range
    table = np.zeros((lmax + 1, lmax + 1))
    for l in range(lmax + 1):
        ratio = 1.0
        table[l, 0] = np.sqrt(2 * l + 1)
        for m in range(1, l + 1):
            ratio /= (l + m) * (l - m + 1)
            table[l, m] = np.sqrt(2.0 * (2 * l + 1) * ratio)
    return table


def _sph_harm_blocks(lmax, xyz):
    """Real spherical harmonics for all degrees ``0..lmax`` at unit rows of ``xyz``.

    Returns a list whose entry ``l`` has shape ``(..., 2l+1)``.
    """
    lead = xyz.shape[:-1]
    flat = xyz.reshape(-1, 3)
    x, y, z = flat[:, 0], flat[:, 1], flat[:, 2]
    norms = _norm_table(lmax)
    # component-major buffer: row l*l + l + m holds Y_m^(l)
    out = np.empty(((lmax + 1) ** 2, flat.shape[0]))
    # (x + iy)^m carries the sin^m(theta) factor, so only the polynomial part
    # of the associated Legendre function is needed here
    re, im = np.ones_like(x), np.zeros_like(x)
    diag = np.ones_like(z)  # (2m-1)!!
    for m in range(lmax + 1):
        if m > 0:
            diag = diag * (2 * m - 1)
            re, im = re * x - im * y, re * y + im * x
        p_prev = None
        p = diag
        for l in range(m, lmax + 1):
            if l == m + 1:
                p_prev, p = p, z * (2 * m + 1) * p
            elif l > m + 1:
                p_prev, p = p, ((2 * l - 1) * z * p - (l + m - 1) * p_prev) / (l - m)
            c = norms[l, m]
            row = l * l + l
            if m == 0:
                out[row] = c * p
            else:
                cp = c * p
                np.multiply(cp, re, out=out[row + m])
                np.multiply(cp, im, out=out[row - m])
    return [out[l * l:(l + 1) ** 2].T.reshape(lead + (2 * l + 1,)) for l in range(lmax + 1)]


def _as_unit(u):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != 3:
        raise ValueError("expected 3-vectors")
    norms = np.linalg.norm(u, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValueError("spherical harmonics need unit vectors")
    return u


def sph_harm(l, u):
    """Real spherical harmonics ``Y^(l)`` at unit vector(s) ``u``.

    ``u`` has shape ``(3,)`` or ``(..., 3)``; the result has a trailing axis
    of length ``2l + 1``.
    """
    l = _check_degree(l)
    u = _as_unit(u)
    return _sph_harm_blocks(l, u)[l]


def sph_harm_all(lmax, u):
    """All degrees ``0..lmax`` at once (list of arrays); cheaper than looping."""
    lmax = _check_degree(lmax)
    return _sph_harm_blocks(lmax, _as_unit(u))


def check_rotation(R, tol=ORTHO_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError("rotation must be a 3x3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() > tol:
        raise ValueError("matrix is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise ValueError("matrix has determinant != +1 (not a proper rotation)")
    return R


@lru_cache(maxsize=None)
def _quadrature(lmax):
    # Gauss-Legendre in cos(theta) times a uniform phi grid integrates every
    # spherical polynomial of degree <= 2*lmax exactly
    nt = lmax + 1
    nphi = 2 * lmax + 1
    ct, wt = np.polynomial.legendre.leggauss(nt)
    phi = 2.0 * np.pi * np.arange(nphi) / nphi
    st = np.sqrt(1.0 - ct**2)
    pts = np.stack(
        [np.outer(st, np.cos(phi)), np.outer(st, np.sin(phi)), np.outer(ct, np.ones(nphi))],
        axis=-1,
    ).reshape(-1, 3)
    # weights of the mean over the sphere (sum to 1)
    w = np.repeat(wt / 2.0, nphi) / nphi
    blocks = _sph_harm_blocks(lmax, pts)
    for b in blocks:
        b.setflags(write=False)
    return pts, w, blocks


def wigner_d_all(lmax, R):
    """Wigner-D blocks ``D^(0..lmax)(R)`` in the real basis.

    Satisfies ``sph_harm(l, R @ u) == wigner_d(l, R) @ sph_harm(l, u)``.
    """
    lmax = _check_degree(lmax)
    R = check_rotation(R)
    pts, w, base = _quadrature(lmax)
    rotated = _sph_harm_blocks(lmax, pts @ R.T)
    return [(rb * w[:, None]).T @ b for rb, b in zip(rotated, base)]


def wigner_d(l, R):
    l = _check_degree(l)
    return wigner_d_all(l, R)[l]


def o3_rep(l, g):
    """Representation ``sigma^(l)(parity) * D^(l)(rotation)`` of an O(3) element.

    ``g`` is any object with ``rotation`` and ``parity`` attributes
    (parity 0 for proper, 1 for composed with inversion).
    """
    l = _check_degree(l)
    D = wigner_d(l, g.rotation)
    return -D if (g.parity and l % 2) else D


def o3_rep_all(lmax, g):
    blocks = wigner_d_all(lmax, g.rotation)
    if g.parity:
        blocks = [-b if l % 2 else b for l, b in enumerate(blocks)]
    return blocks


def rotation_character(l, angle):
    """Trace of ``D^(l)`` for a rotation by ``angle`` radians."""
    half = 0.5 * angle
    s = np.sin(half)
    if abs(s) < 1e-12:
        # identity rotation (angle -> 0 or 2pi)
        return float(2 * l + 1)
    return float(np.sin((2 * l + 1) * half) / s)


def addition_constant(l):
    """Constant ``c_l`` in ``<Y^(l)(u), Y^(l)(v)> = c_l P_l(<u, v>)``."""
    return float(2 * l + 1)
