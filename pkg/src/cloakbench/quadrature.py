"""Symmetric quadrature rules on triangles.

Rules are stored in barycentric form ``(lam, w)`` where ``lam`` has shape
``(n, 3)`` and the weights ``w`` sum to one, so that

    int_T f dA ~= area(T) * sum_q w[q] * f(lam[q] @ vertices).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _assemble(parts):
    lam, w = [], []
    for p, q in parts:
        lam.extend(p)
        w.extend(q)
    return np.asarray(lam, dtype=float), np.asarray(w, dtype=float)


@lru_cache(maxsize=None)
def _dunavant(degree: int):
    if degree <= 1:
        return _assemble([([(1 / 3, 1 / 3, 1 / 3)], [1.0])])
    if degree == 2:
        return _assemble([_orbit3(1 / 6, 1 / 3)])
    if degree <= 4:
        return _assemble([
            _orbit3(0.445948490915965, 0.223381589678011),
            _orbit3(0.091576213509771, 0.109951743655322),
        ])
    if degree == 5:
        return _assemble([
            ([(1 / 3, 1 / 3, 1 / 3)], [0.225]),
            _orbit3(0.470142064105115, 0.132394152788506),
            _orbit3(0.101286507323456, 0.125939180544827),
        ])
    if degree <= 8:
        return _assemble([
            ([(1 / 3, 1 / 3, 1 / 3)], [0.144315607677787]),
            _orbit3(0.459292588292723, 0.095091634267285),
            _orbit3(0.170569307751760, 0.103217370534718),
            _orbit3(0.050547228317031, 0.032458497623198),
            _orbit6(0.008394777409958, 0.263112829634638, 0.027230314174435),
        ])
    return None


@lru_cache(maxsize=None)
def collapsed_gauss(n: int):
    """Conical-product Gauss rule with ``n**2`` points, exact to degree ``2n-1``."""
    x, wx = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * wx
    # Gauss-Jacobi(1,0) would be optimal; Legendre with the explicit
    # Jacobian factor is simpler and still exact to degree 2n-2.
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    s = U
    t = V * (1.0 - U)
    w = WU * WV * (1.0 - U) * 2.0
    lam = np.stack([1.0 - s - t, s, t], axis=-1).reshape(-1, 3)
    return lam, w.ravel()


def triangle_rule(degree: int):
    """Return barycentric points and unit-sum weights exact to ``degree``."""
    rule = _dunavant(degree)
    if rule is None:
        rule = collapsed_gauss(degree // 2 + 2)
    lam, w = rule
    return lam.copy(), w.copy()


def subdivided_rule(degree: int, levels: int):
    """Composite rule obtained by splitting the reference triangle ``4**levels`` times."""
    lam, w = triangle_rule(degree)
    tris = [np.eye(3)]
    for _ in range(levels):
        nxt = []
        for T in tris:
            a, b, c = T
            ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
            nxt += [np.array([a, ab, ca]), np.array([ab, b, bc]),
                    np.array([ca, bc, c]), np.array([ab, bc, ca])]
        tris = nxt
    pts = np.concatenate([lam @ T for T in tris])
    wts = np.concatenate([w / len(tris) for _ in tris])
    return pts, wts


def gauss_legendre(n: int, a: float = 0.0, b: float = 1.0):
    """Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w
