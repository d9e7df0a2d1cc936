"""Generating sets, thin virtual domains and their boundary meshes.

Two domain families are supported:

* a tube of radius ``delta`` around a smooth open curve, closed by two
  hemispherical caps (the full-cloak geometry);
* a slab of half-thickness ``delta`` around a planar square, with
  half-cylinders along the edges and quarter-spheres at the corners (the
  partial-cloak geometry).

Both are level sets ``{y : dist(y, G) = delta}`` of the distance to the
generating set ``G``.  A single projector (nearest point on ``G`` plus a
radial offset) therefore re-projects refined vertices onto the exact surface
and supplies the ``z_projection`` of every vertex.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .quadrature import gauss_legendre


class GeometryError(ValueError):
    """Raised when a requested domain is geometrically invalid."""


class RegionTag(IntEnum):
    FACADE = 0
    CAP_A = 1
    CAP_B = 2
    S0 = 3
    S1 = 4
    S2 = 5
    SPHERE = 6
    SCREEN = 7


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------

def _unit(v, axis=-1):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=axis, keepdims=True)


def _any_perpendicular(t):
    t = _unit(t)
    a = np.zeros(3)
    a[int(np.argmin(np.abs(t)))] = 1.0
    n = a - (a @ t) * t
    return n / np.linalg.norm(n)


class _SegmentParam:
    def __init__(self, p0, q0):
        self.p0 = np.asarray(p0, float)
        d = np.asarray(q0, float) - self.p0
        self.length = float(np.linalg.norm(d))
        if self.length <= 0:
            raise GeometryError("zero-length segment")
        self.t = d / self.length

    def pos(self, xi):
        xi = np.asarray(xi, float)
        return self.p0 + xi[..., None] * self.t

    def d1(self, xi):
        return np.broadcast_to(self.t, np.shape(xi) + (3,)).copy()

    def d2(self, xi):
        return np.zeros(np.shape(xi) + (3,))


class _ArcParam:
    def __init__(self, radius, angle, center, e1, e2):
        if radius <= 0 or angle <= 0:
            raise GeometryError("arc needs positive radius and angle")
        if angle >= 2 * np.pi:
            raise GeometryError("arc angle must be below 2*pi (open curve)")
        self.r = float(radius)
        self.c = np.asarray(center, float)
        self.e1 = _unit(e1)
        e2 = np.asarray(e2, float) - (np.asarray(e2, float) @ self.e1) * self.e1
        self.e2 = _unit(e2)
        self.length = self.r * float(angle)

    def pos(self, xi):
        phi = np.asarray(xi, float)[..., None] / self.r
        return self.c + self.r * (np.cos(phi) * self.e1 + np.sin(phi) * self.e2)

    def d1(self, xi):
        phi = np.asarray(xi, float)[..., None] / self.r
        return -np.sin(phi) * self.e1 + np.cos(phi) * self.e2

    def d2(self, xi):
        phi = np.asarray(xi, float)[..., None] / self.r
        return -(np.cos(phi) * self.e1 + np.sin(phi) * self.e2) / self.r


class _SplineParam:
    """Chord-length cubic spline evaluated at exact arc length by Newton inversion."""

    def __init__(self, points):
        pts = np.asarray(points, float)
        if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 3:
            raise GeometryError("custom curves need at least 3 points in R^3")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 1e-12 * max(seg.max(), 1.0)):
            raise GeometryError("custom samples must be distinct")
        _check_polyline_simple(pts)
        u = np.concatenate([[0.0], np.cumsum(seg)])
        self.spline = CubicSpline(u, pts, bc_type="natural")
        self._d1 = self.spline.derivative(1)
        self._d2 = self.spline.derivative(2)
        gx, gw = gauss_legendre(8)
        knots = u
        a, b = knots[:-1], knots[1:]
        nodes = a[:, None] + (b - a)[:, None] * gx[None, :]
        speed = np.linalg.norm(self._d1(nodes.ravel()), axis=1).reshape(nodes.shape)
        piece = (speed * gw[None, :]).sum(axis=1) * (b - a)
        self.knots = knots
        self.cum = np.concatenate([[0.0], np.cumsum(piece)])
        self.length = float(self.cum[-1])
        self._gx, self._gw = gx, gw

    def _arclen(self, u):
        u = np.clip(np.asarray(u, float), self.knots[0], self.knots[-1])
        k = np.clip(np.searchsorted(self.knots, u, side="right") - 1, 0, len(self.knots) - 2)
        a = self.knots[k]
        nodes = a[..., None] + (u - a)[..., None] * self._gx
        sp = np.linalg.norm(self._d1(nodes.reshape(-1)), axis=-1).reshape(nodes.shape)
        return self.cum[k] + (sp * self._gw).sum(axis=-1) * (u - a)

    def u_of_xi(self, xi):
        xi = np.clip(np.asarray(xi, float), 0.0, self.length)
        u = np.interp(xi, self.cum, self.knots)
        for _ in range(30):
            s = self._arclen(u)
            sp = np.linalg.norm(self._d1(u), axis=-1)
            du = (s - xi) / sp
            u = np.clip(u - du, self.knots[0], self.knots[-1])
            if np.max(np.abs(du), initial=0.0) < 1e-14 * max(self.length, 1.0):
                break
        return u

    def pos(self, xi):
        return self.spline(self.u_of_xi(xi))

    def d1(self, xi):
        return _unit(self._d1(self.u_of_xi(xi)))

    def d2(self, xi):
        u = self.u_of_xi(xi)
        x1, x2 = self._d1(u), self._d2(u)
        sp2 = np.sum(x1 * x1, axis=-1, keepdims=True)
        # second derivative with respect to arc length
        return (x2 - x1 * np.sum(x1 * x2, axis=-1, keepdims=True) / sp2) / sp2


def _check_polyline_simple(pts):
    segs = np.stack([pts[:-1], pts[1:]], axis=1)
    scale = np.linalg.norm(pts.max(0) - pts.min(0))
    n = len(segs)
    for i in range(n):
        for j in range(i + 2, n):
            if _seg_seg_distance(*segs[i], *segs[j]) < 1e-9 * scale:
                raise GeometryError("self-intersecting polyline")


def _seg_seg_distance(p1, q1, p2, q2):
    d1, d2, r = q1 - p1, q2 - p2, p1 - p2
    a, e, f = d1 @ d1, d2 @ d2, d2 @ r
    c, b = d1 @ r, d1 @ d2
    den = a * e - b * b
    s = np.clip((b * f - c * e) / den, 0, 1) if den > 1e-300 else 0.0
    t = (b * s + f) / e
    if t < 0:
        t, s = 0.0, np.clip(-c / a, 0, 1)
    elif t > 1:
        t, s = 1.0, np.clip((b - c) / a, 0, 1)
    return float(np.linalg.norm(p1 + d1 * s - p2 - d2 * t))


def rotation_minimizing_frames(points, tangents, n1_start):
    """Double-reflection transport of ``n1_start`` along sampled points.

    Returns ``(n1, n2)`` with ``n2 = t x n1`` so that ``(t, n1, n2)`` is right
    handed.
    """
    n = len(points)
    r = np.empty((n, 3))
    r[0] = n1_start
    for i in range(n - 1):
        v1 = points[i + 1] - points[i]
        c1 = v1 @ v1
        rL = r[i] - (2.0 / c1) * (v1 @ r[i]) * v1
        tL = tangents[i] - (2.0 / c1) * (v1 @ tangents[i]) * v1
        v2 = tangents[i + 1] - tL
        c2 = v2 @ v2
        ri = rL - (2.0 / c2) * (v2 @ rL) * v2 if c2 > 1e-300 else rL
        ri = ri - (ri @ tangents[i + 1]) * tangents[i + 1]
        r[i + 1] = ri / np.linalg.norm(ri)
    return r, np.cross(tangents, r)


@dataclass(frozen=True, eq=False)
class Curve:
    """Arc-length parametrised open curve with rotation-minimising frames.

    Attributes
    ----------
    kind : str
        ``"segment"``, ``"arc"`` or ``"custom"``.
    xi : ndarray, shape (n,)
        Arc-length samples, strictly increasing from 0 to ``length``.
    points, tangents, normals1, normals2 : ndarray, shape (n, 3)
        Sampled positions and orthonormal frames.
    """

    kind: str
    length: float
    xi: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    normals1: np.ndarray
    normals2: np.ndarray
    _param: object = field(repr=False)

    @property
    def P0(self):
        return self.points[0].copy()

    @property
    def Q0(self):
        return self.points[-1].copy()

    @property
    def is_straight(self) -> bool:
        return self.kind == "segment"

    def position(self, xi):
        return self._param.pos(xi)

    def tangent(self, xi):
        return _unit(self._param.d1(xi))

    def curvature_vector(self, xi):
        return self._param.d2(xi)

    def frame(self, xi):
        """Frame ``(t, n1, n2)`` at arbitrary arc lengths (one transport step from the nearest sample)."""
        xi = np.clip(np.atleast_1d(np.asarray(xi, float)), 0.0, self.length)
        k = np.clip(np.searchsorted(self.xi, xi, side="right") - 1, 0, len(self.xi) - 1)
        p0, t0, r0 = self.points[k], self.tangents[k], self.normals1[k]
        p1, t1 = self.position(xi), self.tangent(xi)
        v1 = p1 - p0
        c1 = np.sum(v1 * v1, axis=-1, keepdims=True)
        safe = np.where(c1 > 0, c1, 1.0)
        rL = r0 - (2.0 / safe) * np.sum(v1 * r0, -1, keepdims=True) * v1
        tL = t0 - (2.0 / safe) * np.sum(v1 * t0, -1, keepdims=True) * v1
        v2 = t1 - tL
        c2 = np.sum(v2 * v2, axis=-1, keepdims=True)
        safe2 = np.where(c2 > 0, c2, 1.0)
        r1 = rL - (2.0 / safe2) * np.sum(v2 * rL, -1, keepdims=True) * v2 * (c2 > 0)
        r1 = np.where(c1 > 0, r1, r0)
        r1 = r1 - np.sum(r1 * t1, -1, keepdims=True) * t1
        r1 = _unit(r1)
        return t1, r1, np.cross(t1, r1)

    @cached_property
    def _tree(self):
        return cKDTree(self.points)

    def nearest(self, y):
        """Arc length and position of the nearest point of the closed curve to each ``y``."""
        y = np.atleast_2d(np.asarray(y, float))
        _, k = self._tree.query(y)
        xi = self.xi[k].astype(float)
        for _ in range(20):
            x = self.position(xi)
            t = self._param.d1(xi)
            kv = self._param.d2(xi)
            diff = x - y
            g = np.sum(diff * t, axis=-1)
            h = 1.0 + np.sum(diff * kv, axis=-1)
            h = np.where(h > 1e-3, h, 1.0)
            step = g / h
            xi_new = np.clip(xi - step, 0.0, self.length)
            if np.max(np.abs(xi_new - xi), initial=0.0) < 1e-15 * max(self.length, 1.0):
                xi = xi_new
                break
            xi = xi_new
        return xi, self.position(xi)

    @cached_property
    def tubular_radius(self) -> float:
        """Numerical estimate of the largest admissible tube radius ``q0``."""
        kappa = np.linalg.norm(self.curvature_vector(self.xi), axis=-1)
        q_curv = np.inf if kappa.max() < 1e-12 else 1.0 / kappa.max()
        d = np.linalg.norm(self.points[:, None, :] - self.points[None, :, :], axis=-1)
        s = np.abs(self.xi[:, None] - self.xi[None, :])
        # pairs that are far along the curve but close in space
        mask = s > 0.5 * np.pi * d + 1e-12 * self.length
        q_clear = 0.5 * d[mask].min() if np.any(mask) else np.inf
        return float(min(q_curv, q_clear))


def make_curve(kind: str, params: dict | None = None, *, samples_per_unit: int = 400,
               min_samples: int = 201) -> Curve:
    """Build an arc-length parametrised curve.

    Parameters
    ----------
    kind : {"segment", "arc", "custom"}
    params : dict
        ``segment``: ``p0``, ``q0``.  ``arc``: ``radius``, ``angle`` and
        optionally ``center``, ``e1``, ``e2``.  ``custom``: ``points``, an
        ordered ``(n, 3)`` array.
    """
    params = dict(params or {})
    if kind == "segment":
        par = _SegmentParam(params.get("p0", (0, 0, 0)), params.get("q0", (1, 0, 0)))
    elif kind == "arc":
        par = _ArcParam(params.get("radius", 1.0), params.get("angle", np.pi / 2),
                        params.get("center", (0, 0, 0)), params.get("e1", (1, 0, 0)),
                        params.get("e2", (0, 1, 0)))
    elif kind in ("custom", "custom-samples"):
        par = _SplineParam(params["points"])
        kind = "custom"
    else:
        raise GeometryError(f"unknown curve kind {kind!r}")
    L = par.length
    if not L > 0:
        raise GeometryError("curve length must be positive")
    n = max(min_samples, int(np.ceil(samples_per_unit * L)) + 1)
    if kind != "segment":
        # keep consecutive frame rotation well below 0.2 rad
        probe = np.linspace(0, L, 4 * n)
        kmax = np.linalg.norm(par.d2(probe), axis=-1).max()
        n = max(n, int(np.ceil(20 * kmax * L)) + 1)
    xi = np.linspace(0.0, L, n)
    pts = par.pos(xi)
    tan = _unit(par.d1(xi))
    n1, n2 = rotation_minimizing_frames(pts, tan, _any_perpendicular(tan[0]))
    return Curve(kind, float(L), xi, pts, tan, n1, n2, par)


# --------------------------------------------------------------------------
# generating square and projectors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PartialGeneratorSpec:
    """Planar square generating set."""

    side: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    normal: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not self.side > 0:
            raise GeometryError("square side must be positive")
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-12:
            raise GeometryError("square normal must be a unit vector")

    @property
    def basis(self):
        n = np.asarray(self.normal, float)
        if abs(n[2]) > 1 - 1e-12:
            e1 = np.array([1.0, 0.0, 0.0])
        else:
            e1 = _unit(np.cross([0.0, 0.0, 1.0], n))
        e2 = np.cross(n, e1)
        return e1, e2, n


class _CurveProjector:
    def __init__(self, curve: Curve, delta: float):
        self.curve, self.delta = curve, delta

    def nearest(self, y):
        xi, z = self.curve.nearest(y)
        tag = np.full(len(xi), int(RegionTag.FACADE))
        L = self.curve.length
        t0 = self.curve.tangents[0]
        tL = self.curve.tangents[-1]
        y = np.atleast_2d(y)
        tag[(xi <= 0.0) & ((y - self.curve.P0) @ t0 < 0)] = RegionTag.CAP_A
        tag[(xi >= L) & ((y - self.curve.Q0) @ tL > 0)] = RegionTag.CAP_B
        return z, tag

    def project(self, y):
        z, tag = self.nearest(y)
        return z + self.delta * _unit(y - z), z, tag

    def outward(self, y):
        z, _ = self.nearest(y)
        return _unit(y - z)


class _SquareProjector:
    def __init__(self, spec: PartialGeneratorSpec, delta: float):
        self.spec, self.delta = spec, delta
        self.e1, self.e2, self.n = spec.basis
        self.c = np.asarray(spec.center, float)
        self.a = 0.5 * spec.side

    def nearest(self, y):
        y = np.atleast_2d(y)
        r = y - self.c
        u, v = r @ self.e1, r @ self.e2
        uc, vc = np.clip(u, -self.a, self.a), np.clip(v, -self.a, self.a)
        z = self.c + uc[:, None] * self.e1 + vc[:, None] * self.e2
        tol = 1e-12 * self.a
        nclamp = (np.abs(u) > self.a - tol).astype(int) + (np.abs(v) > self.a - tol).astype(int)
        tag = np.where(nclamp == 0, int(RegionTag.S0), np.where(nclamp == 1, int(RegionTag.S1), int(RegionTag.S2)))
        return z, tag

    def project(self, y):
        z, tag = self.nearest(y)
        return z + self.delta * _unit(y - z), z, tag

    def outward(self, y):
        z, _ = self.nearest(y)
        return _unit(y - z)


class _SphereProjector:
    def __init__(self, center, radius):
        self.c, self.r = np.asarray(center, float), float(radius)

    def nearest(self, y):
        y = np.atleast_2d(y)
        return np.broadcast_to(self.c, y.shape).copy(), np.full(len(y), int(RegionTag.SPHERE))

    def project(self, y):
        z, tag = self.nearest(y)
        return z + self.r * _unit(y - z), z, tag

    def outward(self, y):
        return _unit(np.atleast_2d(y) - self.c)


class _PlaneProjector:
    """Flat open screens: points stay where they are."""

    def __init__(self, tag=RegionTag.SCREEN):
        self.tag = int(tag)

    def nearest(self, y):
        y = np.atleast_2d(y)
        return y.copy(), np.full(len(y), self.tag)

    def project(self, y):
        y = np.atleast_2d(y)
        return y.copy(), y.copy(), np.full(len(y), self.tag)

    def outward(self, y):
        raise GeometryError("open screens have no outward direction")


# --------------------------------------------------------------------------
# surface meshes
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MeshResolution:
    """Mesh-density specification.

    ``n_circ`` panels around a full circle of radius ``delta``; spacing along
    the generator is ``min(aspect * 2*pi*delta / n_circ, h_max)``.
    """

    n_circ: int = 8
    aspect: float = 2.0
    h_max: float = 0.1

    def along(self, delta: float) -> float:
        return min(self.aspect * 2 * np.pi * delta / self.n_circ, self.h_max)


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Flat-triangle surface mesh.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 3)
    triangles : ndarray of int, shape (nt, 3)
        Counter-clockwise seen from the outside.
    region_tag : ndarray of int, shape (nt,)
    z_projection : ndarray, shape (nv, 3)
    closed : bool
    delta : float
        Thickness parameter the mesh was generated for (radius for spheres).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    region_tag: np.ndarray
    z_projection: np.ndarray
    closed: bool = True
    delta: float = 1.0
    level: int = 0
    projector: object = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("vertices", "triangles", "region_tag", "z_projection"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @cached_property
    def corners(self):
        """Triangle vertex coordinates, shape (nt, 3, 3)."""
        return self.vertices[self.triangles]

    @cached_property
    def _cross(self):
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self):
        return 0.5 * np.linalg.norm(self._cross, axis=1)

    @cached_property
    def normals(self):
        return self._cross / (2.0 * self.areas[:, None])

    @cached_property
    def centroids(self):
        return self.corners.mean(axis=1)

    @cached_property
    def diameters(self):
        c = self.corners
        e = np.stack([c[:, 1] - c[:, 0], c[:, 2] - c[:, 1], c[:, 0] - c[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    @property
    def total_area(self):
        return float(self.areas.sum())

    @property
    def h(self):
        """Mean panel diameter."""
        return float(self.diameters.mean())

    @cached_property
    def volume(self):
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    @cached_property
    def _topology(self):
        tri = self.triangles
        nt = len(tri)
        # edge opposite local vertex k joins vertices k+1 and k+2
        a = np.stack([tri[:, 1], tri[:, 2], tri[:, 0]], axis=1).ravel()
        b = np.stack([tri[:, 2], tri[:, 0], tri[:, 1]], axis=1).ravel()
        key = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        edges, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        owner = np.repeat(np.arange(nt), 3)
        local = np.tile(np.arange(3), nt)
        order = np.argsort(inv, kind="stable")
        edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        edge_local = -np.ones((len(edges), 2), dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        if np.any(counts > 2):
            raise GeometryError("non-manifold edge (shared by more than two triangles)")
        edge_tris[:, 0] = owner[order[starts]]
        edge_local[:, 0] = local[order[starts]]
        two = counts == 2
        edge_tris[two, 1] = owner[order[starts[two] + 1]]
        edge_local[two, 1] = local[order[starts[two] + 1]]
        directed = np.stack([a, b], axis=1)
        tri_edge = inv.reshape(nt, 3)
        return edges, edge_tris, edge_local, tri_edge, counts, directed.reshape(nt, 3, 2)

    @property
    def edges(self):
        return self._topology[0]

    @property
    def edge_triangles(self):
        return self._topology[1]

    @property
    def edge_local(self):
        return self._topology[2]

    @property
    def triangle_edges(self):
        return self._topology[3]

    @property
    def boundary_edge_count(self):
        return int(np.sum(self._topology[4] == 1))

    @property
    def euler_characteristic(self):
        return self.n_vertices - len(self.edges) + self.n_triangles

    @cached_property
    def hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).astype(np.int64).tobytes())
        return h.hexdigest()[:16]

    def check_orientation(self) -> bool:
        """True when every interior edge is traversed in opposite directions by its two triangles."""
        edges, et, el, _, counts, directed = self._topology
        ok = counts == 2
        d0 = directed[et[ok, 0], el[ok, 0]]
        d1 = directed[et[ok, 1], el[ok, 1]]
        return bool(np.all((d0[:, 0] == d1[:, 1]) & (d0[:, 1] == d1[:, 0])))

    def vertex_normals(self):
        """Exact surface normals at the vertices (from the generating projector)."""
        if self.projector is None:
            raise GeometryError("mesh has no projector")
        return self.projector.outward(self.vertices)

    def tag_area(self, tag) -> float:
        return float(self.areas[self.region_tag == int(tag)].sum())

    def validate(self):
        """Check the structural invariants of a generated mesh; raise on failure."""
        if self.closed and self.boundary_edge_count:
            raise GeometryError(f"mesh has {self.boundary_edge_count} boundary edges")
        if not self.check_orientation():
            raise GeometryError("inconsistent triangle orientation")
        if np.any(self.areas <= 1e-14 * self.areas.mean()):
            raise GeometryError("degenerate triangle")
        if self.closed and self.volume <= 0:
            raise GeometryError("normals point inward")
        return self


def _merge_vertices(points, tris, tol):
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    root = np.array([find(i) for i in range(len(points))])
    keep, new_index = np.unique(root, return_inverse=True)
    tris = new_index[tris]
    good = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    return points[keep], tris[good], good


def _grid_tris(nu, nv, offset=0, flip_diag=False):
    """Triangulate an ``nu x nv`` structured grid of points (row-major in u)."""
    i, j = np.meshgrid(np.arange(nu - 1), np.arange(nv - 1), indexing="ij")
    i, j = i.ravel(), j.ravel()
    p00 = offset + i * nv + j
    p10 = p00 + nv
    p01 = p00 + 1
    p11 = p10 + 1
    alt = ((i + j) % 2 == 1) if flip_diag else np.zeros_like(i, dtype=bool)
    t1 = np.where(alt[:, None], np.stack([p00, p10, p01], 1), np.stack([p00, p10, p11], 1))
    t2 = np.where(alt[:, None], np.stack([p10, p11, p01], 1), np.stack([p00, p11, p01], 1))
    return np.concatenate([t1, t2])


def _finish_mesh(points, tris, projector, delta, closed=True, scale=1.0):
    pts, tris, _ = _merge_vertices(points, tris, 1e-9 * scale)
    pts, z, _ = projector.project(pts)
    cent = pts[tris].mean(axis=1)
    nrm = np.cross(pts[tris[:, 1]] - pts[tris[:, 0]], pts[tris[:, 2]] - pts[tris[:, 0]])
    out = projector.outward(cent)
    flip = np.sum(nrm * out, axis=1) < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    _, tags = projector.nearest(pts[tris].mean(axis=1))
    mesh = SurfaceMesh(np.ascontiguousarray(pts), np.ascontiguousarray(tris, dtype=np.int64),
                       np.asarray(tags, dtype=np.int64), np.ascontiguousarray(z),
                       closed=closed, delta=float(delta), projector=projector)
    return mesh.validate()


def tube_domain(curve: Curve, delta: float, resolution: MeshResolution | None = None) -> SurfaceMesh:
    """Boundary mesh of the tube of radius ``delta`` around ``curve`` with hemispherical caps."""
    res = resolution or MeshResolution()
    if not delta > 0:
        raise GeometryError("delta must be positive")
    q0 = curve.tubular_radius
    if delta > q0:
        raise GeometryError(f"delta={delta} exceeds the tubular radius q0={q0:.4g}")
    if res.n_circ < 8:
        raise GeometryError("at least 8 circumferential panels are needed to resolve the tube")
    nc = int(res.n_circ)
    n_ax = max(2, int(np.ceil(curve.length / res.along(delta))))
    n_cap = max(2, int(round(nc / 4)))
    theta = 2 * np.pi * np.arange(nc + 1) / nc
    ct, st = np.cos(theta), np.sin(theta)

    xi = np.linspace(0.0, curve.length, n_ax + 1)
    t, n1, n2 = curve.frame(xi)
    x = curve.position(xi)
    facade = x[:, None, :] + delta * (ct[None, :, None] * n1[:, None, :] + st[None, :, None] * n2[:, None, :])
    blocks = [facade.reshape(-1, 3)]
    tris = [_grid_tris(n_ax + 1, nc + 1)]
    offset = facade.shape[0] * facade.shape[1]
    psi = 0.5 * np.pi * np.arange(n_cap + 1) / n_cap
    for end, sgn in ((0, -1.0), (-1, 1.0)):
        ring = ct[None, :, None] * n1[end] + st[None, :, None] * n2[end]
        cap = x[end] + delta * (np.cos(psi)[:, None, None] * ring + sgn * np.sin(psi)[:, None, None] * t[end])
        blocks.append(cap.reshape(-1, 3))
        tris.append(_grid_tris(n_cap + 1, nc + 1, offset))
        offset += cap.shape[0] * cap.shape[1]
    pts = np.concatenate(blocks)
    proj = _CurveProjector(curve, delta)
    scale = min(delta, curve.length)
    return _finish_mesh(pts, np.concatenate(tris), proj, delta, scale=scale)


def slab_domain(spec: PartialGeneratorSpec, delta: float, resolution: MeshResolution | None = None) -> SurfaceMesh:
    """Boundary mesh of the ``delta``-neighbourhood of a planar square."""
    res = resolution or MeshResolution()
    if not 0 < delta < 0.5 * spec.side:
        raise GeometryError("slab needs 0 < delta < side/2")
    if res.n_circ < 8:
        raise GeometryError("at least 8 circumferential panels are needed to resolve the rim")
    e1, e2, n = spec.basis
    c = np.asarray(spec.center, float)
    a = 0.5 * spec.side
    nf = max(2, int(np.ceil(spec.side / res.along(delta))))
    n_rim = max(4, int(round(res.n_circ / 2)))
    n_chi = max(1, int(round(res.n_circ / 4)))
    u = np.linspace(-a, a, nf + 1)
    psi = np.pi * np.arange(n_rim + 1) / n_rim
    chi = 0.5 * np.pi * np.arange(n_chi + 1) / n_chi
    blocks, tris, offset = [], [], 0

    def add(grid):
        nonlocal offset
        nu, nv = grid.shape[:2]
        blocks.append(grid.reshape(-1, 3))
        tris.append(_grid_tris(nu, nv, offset, flip_diag=True))
        offset += nu * nv

    U, V = np.meshgrid(u, u, indexing="ij")
    base = c + U[..., None] * e1 + V[..., None] * e2
    add(base + delta * n)
    add(base - delta * n)
    for axis_dir, run_dir in ((e1, e2), (e2, e1)):
        for sgn in (1.0, -1.0):
            m = sgn * axis_dir
            line = c + sgn * a * axis_dir + u[:, None] * run_dir
            dirs = np.cos(psi)[:, None] * n + np.sin(psi)[:, None] * m
            add(line[:, None, :] + delta * dirs[None, :, :])
    for sx in (1.0, -1.0):
        for sy in (1.0, -1.0):
            corner = c + sx * a * e1 + sy * a * e2
            m1, m2 = sx * e1, sy * e2
            hor = np.cos(chi)[:, None] * m1 + np.sin(chi)[:, None] * m2
            dirs = np.cos(psi)[:, None, None] * n + np.sin(psi)[:, None, None] * hor[None, :, :]
            add(corner + delta * dirs)
    pts = np.concatenate(blocks)
    proj = _SquareProjector(spec, delta)
    return _finish_mesh(pts, np.concatenate(tris), proj, delta, scale=delta)


def _icosahedron():
    p = (1 + 5 ** 0.5) / 2
    v = np.array([(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
                  (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
                  (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)], float)
    f = np.array([(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
                  (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
                  (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
                  (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)])
    return v / np.linalg.norm(v[0]), f


def sphere_mesh(radius: float = 1.0, frequency: int = 10, center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Geodesic icosphere with ``20 * frequency**2`` triangles."""
    if frequency < 1:
        raise GeometryError("frequency must be >= 1")
    v, f = _icosahedron()
    k = int(frequency)
    ij = [(i, j) for i in range(k + 1) for j in range(k + 1 - i)]
    index = {p: q for q, p in enumerate(ij)}
    local = []
    for i in range(k):
        for j in range(k - i):
            local.append((index[(i, j)], index[(i + 1, j)], index[(i, j + 1)]))
            if j < k - i - 1:
                local.append((index[(i + 1, j)], index[(i + 1, j + 1)], index[(i, j + 1)]))
    local = np.array(local)
    bary = np.array([(k - i - j, i, j) for i, j in ij], float) / k
    pts, tris = [], []
    for q, face in enumerate(f):
        pts.append(bary @ v[face])
        tris.append(local + q * len(ij))
    pts = np.concatenate(pts)
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    proj = _SphereProjector(center, radius)
    pts = np.asarray(center, float) + radius * pts
    return _finish_mesh(pts, np.concatenate(tris), proj, radius, scale=radius)


def refine(mesh: SurfaceMesh, levels: int = 1) -> SurfaceMesh:
    """Split every triangle into four ``levels`` times, re-projecting new vertices."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    out = mesh
    for _ in range(levels):
        out = _refine_once(out)
    return out


def _refine_once(mesh: SurfaceMesh) -> SurfaceMesh:
    edges = mesh.edges
    tri_edge = mesh.triangle_edges
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    proj = mesh.projector
    if proj is not None:
        mid, zmid, _ = proj.project(mid)
    else:
        zmid = mid.copy()
    verts = np.concatenate([mesh.vertices, mid])
    z = np.concatenate([mesh.z_projection, zmid])
    t = mesh.triangles
    m = nv + tri_edge  # m[:, k] = midpoint of the edge opposite vertex k
    children = np.concatenate([
        np.stack([t[:, 0], m[:, 2], m[:, 1]], 1),
        np.stack([m[:, 2], t[:, 1], m[:, 0]], 1),
        np.stack([m[:, 1], m[:, 0], t[:, 2]], 1),
        np.stack([m[:, 0], m[:, 1], m[:, 2]], 1),
    ])
    tags = np.tile(mesh.region_tag, 4)
    order = np.argsort(np.tile(np.arange(mesh.n_triangles), 4), kind="stable")
    out = SurfaceMesh(verts, np.ascontiguousarray(children[order]), np.ascontiguousarray(tags[order]),
                      z, closed=mesh.closed, delta=mesh.delta, level=mesh.level + 1,
                      projector=proj)
    return out.validate()


def analytic_tube_area(length: float, delta: float) -> float:
    return 2 * np.pi * delta * length + 4 * np.pi * delta ** 2


def analytic_tube_volume(length: float, delta: float) -> float:
    return np.pi * delta ** 2 * length + 4.0 / 3.0 * np.pi * delta ** 3


def analytic_slab_area(side: float, delta: float) -> float:
    return 2 * side ** 2 + 4 * np.pi * delta * side + 4 * np.pi * delta ** 2


def analytic_slab_volume(side: float, delta: float) -> float:
    return 2 * delta * side ** 2 + 2 * np.pi * delta ** 2 * side + 4.0 / 3.0 * np.pi * delta ** 3


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------

def write_vtk(mesh: SurfaceMesh, path, title: str = "cloakbench mesh") -> None:
    """Legacy ASCII VTK POLYDATA with ``region_tag`` and ``z_projection``."""
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET POLYDATA",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines.append(f"POLYGONS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_DATA {mesh.n_triangles}")
    lines.append("SCALARS region_tag int 1")
    lines.append("LOOKUP_TABLE default")
    lines += [str(int(t)) for t in mesh.region_tag]
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines.append("VECTORS z_projection double")
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.z_projection]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path) -> dict:
    """Minimal reader for files written by :func:`write_vtk` (used for round-trip checks)."""
    with open(path) as fh:
        tok = fh.read().split("\n")
    out = {}
    i = 0
    while i < len(tok):
        line = tok[i].strip()
        if line.startswith("POINTS"):
            n = int(line.split()[1])
            out["vertices"] = np.array([[float(s) for s in tok[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("POLYGONS"):
            n = int(line.split()[1])
            out["triangles"] = np.array([[int(s) for s in tok[i + 1 + k].split()[1:]] for k in range(n)])
            i += n
        elif line.startswith("SCALARS region_tag"):
            n = len(out["triangles"])
            out["region_tag"] = np.array([int(tok[i + 2 + k]) for k in range(n)])
            i += n + 1
        elif line.startswith("VECTORS z_projection"):
            n = len(out["vertices"])
            out["z_projection"] = np.array([[float(s) for s in tok[i + 1 + k].split()] for k in range(n)])
            i += n
        i += 1
    return out
