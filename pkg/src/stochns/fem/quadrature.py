"""Gauss rules on the reference triangle {(x, y): x, y >= 0, x + y <= 1}."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["triangle_rule"]


@lru_cache(maxsize=None)
def _rule(degree: int, subdivisions: int) -> tuple[np.ndarray, np.ndarray]:
    # Collapsed (Duffy) tensor rule: x = s, y = t (1 - s) with Jacobian (1 - s),
    # exact for total degree `degree` with n >= (degree + 2) / 2 points per axis.
    n = max(1, -(-(degree + 2) // 2))
    g, w = np.polynomial.legendre.leggauss(n)
    g = 0.5 * (g + 1.0)
    w = 0.5 * w
    S, Tt = np.meshgrid(g, g, indexing="ij")
    W = np.outer(w, w) * (1.0 - S)
    pts = np.stack([S.ravel(), (Tt * (1.0 - S)).ravel()], axis=1)
    wts = W.ravel()
    if subdivisions == 1:
        return pts, wts
    # Uniform split into subdivisions^2 congruent sub-triangles.
    r = subdivisions
    allp, allw = [], []
    for i in range(r):
        for j in range(r - i):
            for up in (True, False):
                if up:
                    o = np.array([i, j], float)
                    A = np.eye(2)
                elif i + j < r - 1:
                    o = np.array([i + 1, j + 1], float)
                    A = -np.eye(2)
                else:
                    continue
                allp.append((o + pts @ A.T) / r)
                allw.append(wts / (r * r))
    return np.concatenate(allp), np.concatenate(allw)


def triangle_rule(degree: int, subdivisions: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Points (n, 2) and weights (n,) on the reference triangle; weights sum to 1/2.

    The rule integrates polynomials of total degree ``degree`` exactly.  With
    ``subdivisions`` = r > 1 the rule is applied on r^2 congruent sub-triangles,
    which helps for oscillatory (non-polynomial) integrands.
    """
    if degree < 0 or subdivisions < 1:
        raise ValueError("degree must be >= 0 and subdivisions >= 1")
    p, w = _rule(int(degree), int(subdivisions))
    return p.copy(), w.copy()
