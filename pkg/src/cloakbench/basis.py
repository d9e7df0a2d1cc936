"""Div-conforming linear edge functions on flat triangles.

On a triangle ``T`` with local vertices ``v0, v1, v2`` the function attached
to the edge opposite ``vk`` is ``c_k (x - v_k)``, where ``c_k = +-l/(2|T|)``.
The sign is positive on the first triangle of the edge and negative on the
second, so the normal flux through the edge is continuous and equals one.
"""
from __future__ import annotations

import numpy as np

from .geometry import SurfaceMesh
from .quadrature import gauss_legendre, triangle_rule


class EdgeBasis:
    """Edge-function basis over the interior edges of a mesh."""

    def __init__(self, mesh: SurfaceMesh):
        self.mesh = mesh
        et = mesh.edge_triangles
        interior = et[:, 1] >= 0
        self.edge_ids = np.flatnonzero(interior)
        index = -np.ones(len(et), dtype=np.int64)
        index[self.edge_ids] = np.arange(len(self.edge_ids))
        self.tri_edge = np.ascontiguousarray(index[mesh.triangle_edges])
        v = mesh.vertices
        e = mesh.edges
        self.edge_length = np.linalg.norm(v[e[:, 1]] - v[e[:, 0]], axis=1)
        lengths = self.edge_length[mesh.triangle_edges]
        coef = lengths / (2.0 * mesh.areas[:, None])
        sign = np.ones_like(coef)
        nt = mesh.n_triangles
        second = et[self.edge_ids, 1]
        local = mesh.edge_local[self.edge_ids, 1]
        sign[second, local] = -1.0
        coef = coef * sign
        coef[self.tri_edge < 0] = 0.0
        self.tri_coef = np.ascontiguousarray(coef)
        assert self.tri_coef.shape == (nt, 3)

    @property
    def n(self) -> int:
        return len(self.edge_ids)

    def values(self, coef, tri, points):
        """Evaluate the field ``sum_n coef[n] f_n`` at ``points`` lying in triangles ``tri``."""
        coef = np.asarray(coef)
        V = self.mesh.corners[tri]
        c = self.tri_coef[tri]
        idx = self.tri_edge[tri]
        a = np.where(idx >= 0, coef[np.maximum(idx, 0)], 0.0) * c
        return np.einsum("pk,pkd->pd", a, points[:, None, :] - V)

    def divergence(self, coef):
        """Piecewise-constant surface divergence per triangle."""
        coef = np.asarray(coef)
        idx = self.tri_edge
        a = np.where(idx >= 0, coef[np.maximum(idx, 0)], 0.0) * self.tri_coef
        return 2.0 * a.sum(axis=1)

    def quadrature(self, degree=4):
        """Quadrature points ``(tri, x, weights)`` over the whole mesh."""
        lam, w = triangle_rule(degree)
        V = self.mesh.corners
        x = np.einsum("qk,tkd->tqd", lam, V)
        wt = self.mesh.areas[:, None] * w[None, :]
        tri = np.repeat(np.arange(self.mesh.n_triangles), len(w))
        return tri, x.reshape(-1, 3), wt.ravel()

    def gram(self, testing: str = "rwg"):
        """Mass matrix ``<t_m, f_n>`` with ``t_m = f_m`` or ``nu x f_m``."""
        tri, x, wq = self.quadrature(2)
        nq = len(wq) // self.mesh.n_triangles
        V = self.mesh.corners[tri]
        f = self.tri_coef[tri][:, :, None] * (x[:, None, :] - V)  # (P, 3, 3)
        if testing == "rotated":
            nrm = self.mesh.normals[tri]
            tf = np.cross(nrm[:, None, :], f)
        else:
            tf = f
        loc = np.einsum("p,pid,pjd->pij", wq, tf, f)
        loc = loc.reshape(self.mesh.n_triangles, nq, 3, 3).sum(axis=1)
        G = np.zeros((self.n, self.n))
        idx = self.tri_edge
        for i in range(3):
            for j in range(3):
                ok = (idx[:, i] >= 0) & (idx[:, j] >= 0)
                np.add.at(G, (idx[ok, i], idx[ok, j]), loc[ok, i, j])
        return G

    def project(self, field, degree=4, testing="rwg"):
        """Load vector ``<t_m, field>`` for a callable ``field(x, tri) -> (P, 3)``."""
        tri, x, wq = self.quadrature(degree)
        val = field(x, tri)
        V = self.mesh.corners[tri]
        f = self.tri_coef[tri][:, :, None] * (x[:, None, :] - V)
        if testing == "rotated":
            f = np.cross(self.mesh.normals[tri][:, None, :], f)
        contrib = np.einsum("p,pid,pd->pi", wq, f, val)
        b = np.zeros(self.n, dtype=np.result_type(val, float))
        idx = self.tri_edge[tri]
        ok = idx >= 0
        np.add.at(b, idx[ok], contrib[ok])
        return b

    def interpolate(self, field):
        """Edge-flux interpolant of a tangential field ``field(x) -> (P, 3)``.

        The coefficient of edge ``n`` is the mean over the edge of the flux
        across it, averaged between the two adjacent panels.
        """
        mesh = self.mesh
        e = mesh.edges[self.edge_ids]
        v = mesh.vertices
        p0, p1 = v[e[:, 0]], v[e[:, 1]]
        gx, gw = gauss_legendre(3)
        pts = p0[:, None, :] + gx[None, :, None] * (p1 - p0)[:, None, :]
        vals = field(pts.reshape(-1, 3)).reshape(len(e), len(gx), 3)
        tdir = (p1 - p0) / self.edge_length[self.edge_ids][:, None]
        flux = np.zeros(len(e), dtype=vals.dtype)
        for side, sgn in ((0, 1.0), (1, -1.0)):
            t = mesh.edge_triangles[self.edge_ids, side]
            k = mesh.edge_local[self.edge_ids, side]
            nrm = mesh.normals[t]
            m = np.cross(tdir, nrm)
            free = mesh.corners[t, k]
            # orient m away from the free vertex of this panel
            flip = np.sum(m * (p0 - free), axis=1) < 0
            m[flip] *= -1
            fl = np.einsum("eqd,ed->eq", vals, m) @ gw
            flux += 0.5 * sgn * fl
        return flux
