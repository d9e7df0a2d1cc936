"""Small-thickness machinery: operator expansions, the screen operator and the phase factor.

The screen operator on the open square ``Gamma_0`` is

    MM = (-I/4 + M_0)^{-1} M_0 (I/4 + M_0)^{-1},

with ``M_0 = n x curl int_{Gamma_0} G_w(. - z) Theta(z) dz``.  For a flat
screen and tangential ``Theta`` the kernel ``grad G x Theta`` points along
``n``, so ``M_0`` (and with it ``MM``) vanishes identically; the discrete
matrices reproduce this to round-off.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad
from scipy.linalg import lapack
from scipy.spatial import Delaunay
from scipy.special import sph_harm_y

from . import _kernels as K
from .basis import EdgeBasis
from .geometry import (Curve, GeometryError, PartialGeneratorSpec, RegionTag, SurfaceMesh,
                       _PlaneProjector, slab_domain, tube_domain, MeshResolution)
from .potentials import (DEFAULT_QUADRATURE, BoundaryOperatorMatrix, QuadratureOptions,
                         TangentialDensity, assemble_M, mesh_arrays)
from .solver import FarFieldPattern, PlaneWave, ResonanceError, fibonacci_directions, incident_fields


# --------------------------------------------------------------------------
# phase factor and aperture identity
# --------------------------------------------------------------------------

def _angles(v):
    v = np.atleast_2d(np.asarray(v, float))
    r = np.linalg.norm(v, axis=1)
    u = v / np.where(r > 0, r, 1.0)[:, None]
    theta = np.arccos(np.clip(u[:, 2], -1, 1))
    phi = np.arctan2(u[:, 1], u[:, 0])
    return theta, phi, r


def dipole_sum(xhat, z):
    """``(4 pi / 3) sum_m Y_1^m(xhat) conj(Y_1^m(zhat))``; equals ``xhat . zhat``."""
    t1, p1, _ = _angles(xhat)
    t2, p2, r2 = _angles(z)
    s = np.zeros(np.broadcast(t1, t2).shape, dtype=complex)
    for m in (-1, 0, 1):
        s = s + sph_harm_y(1, m, t1, p1) * np.conj(sph_harm_y(1, m, t2, p2))
    return (4 * np.pi / 3) * s, r2


def phase_factor(xhat, z, omega: float = 1.0):
    """``exp(-i w (4 pi/3) sum_m Y_1^m(xhat) conj(Y_1^m(zhat)) |z|)``, i.e. ``exp(-i w xhat.z)``."""
    single = np.ndim(xhat) == 1 and np.ndim(z) == 1
    s, r = dipole_sum(xhat, z)
    out = np.exp(-1j * omega * s.real * r)
    return complex(out[0]) if single else out


def aperture_identity(p, d, n):
    """Both sides of ``(d.n) p = d x (p x n)``, valid whenever ``p.d = 0``."""
    p, d, n = (np.asarray(v, float) for v in (p, d, n))
    return (d @ n) * p, np.cross(d, np.cross(p, n))


def aperture_wave(eps: float, omega: float = 1.0, spec: PartialGeneratorSpec | None = None) -> PlaneWave:
    """Plane wave with ``|p x n| = eps``, ``d`` in the plane and ``p.d = 0``.

    ``p = sqrt(1 - eps^2) n + eps e2`` and ``d = e1`` in the square's frame.
    """
    if not 0 <= eps <= 1:
        raise ValueError("aperture parameter must lie in [0, 1]")
    e1, e2, n = (spec or PartialGeneratorSpec()).basis
    p = np.sqrt(1 - eps ** 2) * n + eps * e2
    return PlaneWave(tuple(p / np.linalg.norm(p)), tuple(e1), float(omega))


# --------------------------------------------------------------------------
# screen mesh and operator
# --------------------------------------------------------------------------

def _graded_nodes(a, h0, factor, levels):
    """Points of ``[-a, a]^2`` with rings refined geometrically toward the boundary."""
    pts = []
    n0 = max(2, int(np.ceil(2 * a / h0)))
    g = np.linspace(-a, a, n0 + 1)
    X, Y = np.meshgrid(g, g, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], 1)
    keep = np.max(np.abs(P), axis=1) <= a - h0 * (1 - 1e-9)
    pts.append(P[keep])
    offsets = [h0 * factor ** k for k in range(1, levels + 1)]
    for off in offsets + [0.0]:
        hk = offsets[-1] if off == 0.0 else off
        b = a - off
        m = max(1, int(np.ceil(2 * b / hk)))
        s = np.linspace(-b, b, m + 1)[:-1]
        ring = np.concatenate([np.stack([s, -b + 0 * s], 1), np.stack([b + 0 * s, s], 1),
                               np.stack([-s, b + 0 * s], 1), np.stack([-b + 0 * s, -s], 1)])
        pts.append(ring)
    return np.concatenate(pts)


@dataclass(eq=False)
class ScreenMesh:
    """Graded triangulation of the open square with its interior-edge basis."""

    mesh: SurfaceMesh
    spec: PartialGeneratorSpec
    h0: float
    factor: float
    levels: int
    basis: EdgeBasis = field(init=False)

    def __post_init__(self):
        self.basis = EdgeBasis(self.mesh)

    @property
    def h_min(self) -> float:
        return self.h0 * self.factor ** self.levels

    def boundary_loop_length(self) -> float:
        et = self.mesh.edge_triangles
        e = self.mesh.edges[et[:, 1] < 0]
        v = self.mesh.vertices
        return float(np.linalg.norm(v[e[:, 1]] - v[e[:, 0]], axis=1).sum())

    def grading_constant(self) -> float:
        """Largest ``diam / (rho + h_min)`` over panels, ``rho`` the centroid distance to the rim."""
        e1, e2, _ = self.spec.basis
        r = self.mesh.centroids - np.asarray(self.spec.center, float)
        a = 0.5 * self.spec.side
        rho = a - np.maximum(np.abs(r @ e1), np.abs(r @ e2))
        return float(np.max(self.mesh.diameters / (rho + self.h_min)))


def screen_mesh(spec: PartialGeneratorSpec | None = None, h0: float = 0.2, factor: float = 0.5,
                levels: int = 4) -> ScreenMesh:
    """Delaunay triangulation of the square with ``levels`` rings graded by ``factor``."""
    spec = spec or PartialGeneratorSpec()
    if not 0 < factor < 1 or levels < 0:
        raise GeometryError("grading needs 0 < factor < 1 and levels >= 0")
    a = 0.5 * spec.side
    uv = _graded_nodes(a, h0, factor, levels)
    uv = np.unique(np.round(uv, 14), axis=0)
    tri = Delaunay(uv).simplices
    e1, e2, n = spec.basis
    P = np.asarray(spec.center, float) + uv[:, :1] * e1 + uv[:, 1:] * e2
    cr = np.cross(P[tri[:, 1]] - P[tri[:, 0]], P[tri[:, 2]] - P[tri[:, 0]]) @ n
    tri = tri[np.abs(cr) > 1e-12 * h0 ** 2]
    cr = cr[np.abs(cr) > 1e-12 * h0 ** 2]
    tri[cr < 0] = tri[cr < 0][:, [0, 2, 1]]
    mesh = SurfaceMesh(np.ascontiguousarray(P), np.ascontiguousarray(tri, dtype=np.int64),
                       np.full(len(tri), int(RegionTag.SCREEN), dtype=np.int64),
                       np.ascontiguousarray(P.copy()), closed=False, delta=0.0,
                       projector=_PlaneProjector()).validate()
    return ScreenMesh(mesh, spec, float(h0), float(factor), int(levels))


def screen_M(screen: ScreenMesh, omega: float,
             options: QuadratureOptions = DEFAULT_QUADRATURE) -> BoundaryOperatorMatrix:
    """Galerkin matrix of ``M_0`` on the screen basis (edge-function testing)."""
    out = assemble_M(screen.mesh, omega, basis=screen.basis, options=options, allow_open=True)
    out.kind = "M_screen"
    return out


def _rcond(A):
    lu = sla.lu_factor(A, check_finite=False)
    anorm = np.max(np.sum(np.abs(A), axis=0))
    return lu, float(lapack.zgecon(lu[0], anorm, norm="1")[0]) if np.iscomplexobj(A) else \
        float(lapack.dgecon(lu[0], anorm, norm="1")[0])


class ScreenOperator:
    """Factorised shifted screen operators ``(+-G/4 + M_0)`` for repeated application of ``MM``."""

    def __init__(self, screen: ScreenMesh, omega: float, *, rcond_min: float = 1e-12,
                 options: QuadratureOptions = DEFAULT_QUADRATURE):
        self.screen = screen
        self.omega = float(omega)
        self.M = screen_M(screen, omega, options).matrix
        self.gram = screen.basis.gram("rwg")
        self.lu_plus, self.rcond_plus = _rcond(self.gram / 4 + self.M)
        self.lu_minus, self.rcond_minus = _rcond(-self.gram / 4 + self.M)
        worst = min(self.rcond_plus, self.rcond_minus)
        if not worst > rcond_min:
            raise ResonanceError(f"shifted screen operator is ill-conditioned "
                                 f"(condition estimate {1 / max(worst, 1e-300):.3e})")

    def load(self, theta) -> np.ndarray:
        """Load vector of a tangential field given as a callable ``theta(x) -> (P, 3)``."""
        return self.screen.basis.project(lambda x, tri: theta(x), degree=4)

    def apply(self, theta) -> TangentialDensity:
        """``MM[theta]`` by two solves and one multiplication."""
        b = self.load(theta) if callable(theta) else np.asarray(theta)
        u = sla.lu_solve(self.lu_plus, b.astype(complex), check_finite=False)
        w = sla.lu_solve(self.lu_minus, self.M @ u, check_finite=False)
        return TangentialDensity(self.screen.basis, w)


def bbM_apply(screen: ScreenMesh, omega: float, theta, **kw) -> TangentialDensity:
    """Apply ``MM = (-I/4 + M_0)^{-1} M_0 (I/4 + M_0)^{-1}`` to ``theta``."""
    return ScreenOperator(screen, omega, **kw).apply(theta)


def leading_partial_far_field(screen: ScreenMesh, omega: float, wave: PlaneWave, directions=None,
                              op: ScreenOperator | None = None) -> FarFieldPattern:
    """``-(1/2 pi) int_{Gamma_0} phase(xhat, z) MM[n x E^i](z) dz`` on a direction grid."""
    dirs = fibonacci_directions() if directions is None else np.atleast_2d(np.asarray(directions, float))
    op = op or ScreenOperator(screen, omega)
    n = screen.spec.basis[2]

    def theta(x):
        E, _ = incident_fields(wave, x)
        return np.cross(n, E)

    w = op.apply(theta)
    tri, x, wq = screen.basis.quadrature(4)
    vals = w.values(tri, x) * wq[:, None]
    ph = np.stack([phase_factor(d, x, omega) for d in dirs])  # (ndir, nq)
    A = -(1 / (2 * np.pi)) * (ph @ vals)
    return FarFieldPattern(dirs, A, wave, screen.mesh.hash)


# --------------------------------------------------------------------------
# operator-expansion checks
# --------------------------------------------------------------------------

@dataclass(eq=False)
class ExpansionTable:
    """Residuals of the small-thickness expansion of ``M`` for a fixed transplanted density."""

    delta: np.ndarray
    residual_facade: np.ndarray
    residual_cap: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self) -> np.ndarray:
        """``r(delta_{k-1}) / r(delta_k)`` of the facade residual (NaN in the first row)."""
        r = self.residual_facade
        out = np.full(len(r), np.nan)
        out[1:] = r[:-1] / np.where(r[1:] > 0, r[1:], np.nan)
        return out

    @property
    def ratio_cap(self) -> np.ndarray:
        r = self.residual_cap
        out = np.full(len(r), np.nan)
        out[1:] = r[:-1] / np.where(r[1:] > 0, r[1:], np.nan)
        return out

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "residual_facade", "residual_cap", "ratio"])
        for row in zip(self.delta, self.residual_facade, self.residual_cap, self.ratio):
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _tangential_part(c, normals):
    c = np.asarray(c, complex)
    return c[None, :] - (normals @ c)[:, None] * normals


def _pointwise_M(mesh: SurfaceMesh, X, NX, tri_vec, omega, options=DEFAULT_QUADRATURE,
                 tris=None):
    V, N, A, C, D = mesh_arrays(mesh)
    if tris is not None:
        V, N, A, C, D = (np.ascontiguousarray(q[tris]) for q in (V, N, A, C, D))
        tri_vec = tri_vec[tris]
    _, _, _, _, ls, ws, lsn, wsn = options.rules()
    return K.pointwise_M(np.ascontiguousarray(X, float), np.ascontiguousarray(NX, float), V, N, A, C, D,
                         np.ascontiguousarray(tri_vec, complex), float(omega), ls, ws, lsn, wsn,
                         float(options.near_factor))


def _facade_line_operator(xi, L, omega):
    """``(1/4 pi) p.v. int_0^L sign(s) (1 - i w |s|) e^{i w |s|} / s^2 d eta`` with ``s = xi - eta``.

    The static part is ``1/(L - xi) - 1/xi``; the rest is smooth and integrated numerically.
    """
    static = 1.0 / (L - xi) - 1.0 / xi

    def smooth(s, part):
        if s < 1e-4:
            v = (omega ** 2) * (0.5 + 1j * omega * s / 3.0)
        else:
            v = ((1 - 1j * omega * s) * np.exp(1j * omega * s) - 1.0) / s ** 2
        return v.real if part == 0 else v.imag

    vals = []
    for part in (0, 1):
        right = quad(smooth, 0.0, xi, args=(part,), limit=200)[0]
        left = quad(smooth, 0.0, L - xi, args=(part,), limit=200)[0]
        vals.append(right - left)
    return (static + vals[0] + 1j * vals[1]) / (4 * np.pi)


def expansion_check_full(curve: Curve, deltas, omega: float = 1.0, c=(0.3, 1.0, 0.5),
                         resolution: MeshResolution | None = None, window=(0.25, 0.75),
                         options: QuadratureOptions = DEFAULT_QUADRATURE) -> ExpansionTable:
    """Residual of ``M_{D_delta}[a] = delta M_{S^f}[a~] + O(delta^2)`` on the facade and of the cap
    expansion with the static unit-cap operator.

    The density is the panel-wise tangential part of the constant vector
    ``c``, which is the same field before and after the blowup.  Facade
    residuals are taken over panel centroids with arclength in
    ``window * L``; the facade operator on the unit tube is reduced to a
    one-dimensional principal value along the generator, which needs a
    straight generator.
    """
    if not curve.is_straight:
        raise GeometryError("the facade expansion check is implemented for straight generators")
    deltas = np.asarray(deltas, float)
    if np.any(np.diff(deltas) >= 0):
        raise ValueError("delta values must be strictly decreasing")
    res = resolution or MeshResolution(n_circ=12)
    c = np.asarray(c, complex)
    L = curve.length
    t = curve.tangents[0]
    rf, rc = [], []
    for delta in deltas:
        mesh = tube_domain(curve, float(delta), res)
        a = _tangential_part(c, mesh.normals)
        xi = (mesh.centroids - curve.P0) @ t
        fac = np.flatnonzero((mesh.region_tag == RegionTag.FACADE) & (xi > window[0] * L)
                             & (xi < window[1] * L))
        X, NX = mesh.centroids[fac], mesh.normals[fac]
        lhs = _pointwise_M(mesh, X, NX, a, omega, options)
        # W = int over the unit circle of the tangential part of c
        W = 2 * np.pi * c - np.pi * (c - (c @ t) * t)
        kern = np.array([_facade_line_operator(x, L, omega) for x in xi[fac]])
        rhs = delta * kern[:, None] * np.cross(NX, np.cross(t, W)[None, :])
        rf.append(float(np.max(np.linalg.norm(lhs - rhs, axis=1))) if np.any(c) else 0.0)

        cap = np.flatnonzero(mesh.region_tag == RegionTag.CAP_A)
        Xc, NXc = mesh.centroids[cap], mesh.normals[cap]
        lhs_c = _pointwise_M(mesh, Xc, NXc, a, omega, options)
        unit = SurfaceMesh(np.ascontiguousarray(curve.P0 + (mesh.vertices - curve.P0) / delta),
                           mesh.triangles, mesh.region_tag, mesh.z_projection, closed=True,
                           delta=1.0)
        Xu = curve.P0 + (Xc - curve.P0) / delta
        rhs_c = _pointwise_M(unit, Xu, NXc, a, 0.0, options, tris=cap)
        rc.append(float(np.max(np.linalg.norm(lhs_c - rhs_c, axis=1))) if np.any(c) else 0.0)
    return ExpansionTable(deltas, np.array(rf), np.array(rc),
                          {"omega": omega, "c": tuple(complex(v) for v in c), "kind": "full"})


def expansion_check_partial(spec: PartialGeneratorSpec | None, deltas, omega: float = 1.0,
                            c=(0.3, 1.0, 0.5), resolution: MeshResolution | None = None,
                            window: float = 0.25,
                            options: QuadratureOptions = DEFAULT_QUADRATURE) -> ExpansionTable:
    """Residual of ``M_{D_delta}[a] = M_{S^0}[a~] + O(delta)`` on the flat faces of the slab.

    Both sheets of ``S^0`` collapse onto ``Gamma_0`` under ``z``, and for a
    tangential density the collapsed operator vanishes at face points, so the
    residual is ``|M_{D_delta}[a]|`` over core-face centroids with
    ``|u|, |v| <= window * side``.  ``residual_cap`` holds the same quantity
    over the rim panels.
    """
    spec = spec or PartialGeneratorSpec()
    deltas = np.asarray(deltas, float)
    if np.any(np.diff(deltas) >= 0):
        raise ValueError("delta values must be strictly decreasing")
    res = resolution or MeshResolution(n_circ=8)
    c = np.asarray(c, complex)
    e1, e2, n = spec.basis
    rf, rc = [], []
    for delta in deltas:
        mesh = slab_domain(spec, float(delta), res)
        a = _tangential_part(c, mesh.normals)
        r = mesh.centroids - np.asarray(spec.center, float)
        core = np.flatnonzero((mesh.region_tag == RegionTag.S0) &
                              (np.maximum(np.abs(r @ e1), np.abs(r @ e2)) <= window * spec.side))
        rim = np.flatnonzero(mesh.region_tag != RegionTag.S0)
        out = []
        for sel in (core, rim):
            val = _pointwise_M(mesh, mesh.centroids[sel], mesh.normals[sel], a, omega, options)
            out.append(float(np.max(np.linalg.norm(val, axis=1))) if np.any(c) else 0.0)
        rf.append(out[0])
        rc.append(out[1])
    return ExpansionTable(deltas, np.array(rf), np.array(rc),
                          {"omega": omega, "c": tuple(complex(v) for v in c), "kind": "partial"})
