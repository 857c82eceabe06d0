"""Quadrature rules: edge Gauss-Lobatto and polygon rules via ear clipping.

Triangle rules come from a Duffy (collapsed square) map of tensor Gauss
points, which is exact for the requested polynomial degree without any
coefficient tables.
"""

from functools import lru_cache

import numpy as np

from . import geometry

# Gauss-Lobatto nodes/weights on [-1, 1], indexed by point count
_GL_NODES = {
    2: (np.array([-1.0, 1.0]), np.array([1.0, 1.0])),
    3: (np.array([-1.0, 0.0, 1.0]), np.array([1.0, 4.0, 1.0]) / 3.0),
    4: (
        np.array([-1.0, -1.0 / np.sqrt(5.0), 1.0 / np.sqrt(5.0), 1.0]),
        np.array([1.0, 5.0, 5.0, 1.0]) / 6.0,
    ),
}


def gauss_lobatto_rule(n_points: int):
    """Nodes and weights on [-1, 1]; exact through degree 2n-3."""
    if n_points not in _GL_NODES:
        raise ValueError(f"Gauss-Lobatto rule with {n_points} points not tabulated")
    return _GL_NODES[n_points]


def gauss_lobatto_points(k: int, a, b):
    """Internal Gauss-Lobatto DOF points (and weights) of an order-k edge.

    Maps the k-1 interior nodes of the (k+1)-point rule onto the segment
    a-b; returns ((k-1, 2) points, (k-1,) weights scaled by |edge|/2).
    Empty for k < 2.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if k < 2:
        return np.empty((0, 2)), np.empty(0)
    x, w = gauss_lobatto_rule(k + 1)
    t = 0.5 * (x[1:-1] + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    halflen = 0.5 * np.hypot(*(b - a))
    return pts, w[1:-1] * halflen


def edge_lobatto_quadrature(k: int, a, b):
    """Full (k+1)-point Gauss-Lobatto rule on segment a-b, weights summing to |e|."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    x, w = gauss_lobatto_rule(k + 1)
    t = 0.5 * (x + 1.0)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return pts, w * 0.5 * np.hypot(*(b - a))


@lru_cache(maxsize=None)
def _duffy_reference(degree: int):
    """Points/weights on the reference triangle (0,0),(1,0),(0,1)."""
    nu = (degree + 3) // 2  # integrand degree d+1 in u after the Duffy jacobian
    nv = (degree + 2) // 2
    xu, wu = np.polynomial.legendre.leggauss(max(nu, 1))
    xv, wv = np.polynomial.legendre.leggauss(max(nv, 1))
    u = 0.5 * (xu + 1.0)
    v = 0.5 * (xv + 1.0)
    wu = 0.5 * wu
    wv = 0.5 * wv
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    xi = (U * (1.0 - V)).ravel()
    eta = (U * V).ravel()
    w = (WU * WV * U).ravel()
    return xi, eta, w


def triangle_quadrature(tri, degree: int):
    """Rule exact to ``degree`` on one triangle given as (3, 2) coordinates."""
    tri = np.asarray(tri, dtype=float)
    xi, eta, w = _duffy_reference(degree)
    p0, p1, p2 = tri
    pts = p0[None, :] + np.outer(xi, p1 - p0) + np.outer(eta, p2 - p0)
    jac = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p1[1] - p0[1]) * (p2[0] - p0[0])
    return pts, w * jac


def polygon_quadrature(points, degree: int):
    """Rule exact to ``degree`` on a simple CCW polygon.

    Ear-clips the polygon and maps a triangle rule of matching degree onto
    each piece; weights sum to the polygon area.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    pts = geometry.as_points(points)
    tris = geometry.ear_clip(pts)
    all_p = []
    all_w = []
    for t in tris:
        p, w = triangle_quadrature(pts[t], degree)
        all_p.append(p)
        all_w.append(w)
    return np.vstack(all_p), np.concatenate(all_w)
