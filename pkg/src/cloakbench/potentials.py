"""Helmholtz layer potentials and their Galerkin discretisation.

The fundamental solution is ``G_w(x) = -exp(i w |x|) / (4 pi |x|)``.  With a
tangential density ``a`` on a closed surface,

* ``A[a](x)  = int G_w(x - y) a(y) dy``            (vector single layer)
* ``S[phi](x) = int G_w(x - y) phi(y) dy``         (scalar single layer)
* ``M[a](x)  = p.v. nu_x x curl int G_w(x - y) a(y) dy``

and the traces satisfy ``nu x curl A[a]|_+- = -+ a/2 + M[a]`` and
``dS[phi]/dnu|_+- = +- phi/2 + K*[phi]``.
"""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels as K
from .basis import EdgeBasis
from .geometry import GeometryError, SurfaceMesh
from .quadrature import triangle_rule


class NearSingularWarning(RuntimeWarning):
    """Evaluation point within one panel diameter of the surface."""


@dataclass(frozen=True)
class QuadratureOptions:
    """Quadrature orders for far and near triangle pairs.

    A pair is near when the centroid distance is below ``near_factor``
    times the larger panel diameter.
    """

    test_degree: int = 4
    test_degree_near: int = 8
    source_degree: int = 4
    source_degree_near: int = 5
    near_factor: float = 2.0

    def rules(self):
        lt, wt = triangle_rule(self.test_degree)
        ltn, wtn = triangle_rule(self.test_degree_near)
        ls, ws = triangle_rule(self.source_degree)
        lsn, wsn = triangle_rule(self.source_degree_near)
        return lt, wt, ltn, wtn, ls, ws, lsn, wsn


DEFAULT_QUADRATURE = QuadratureOptions()


def green(omega: float, x) -> complex | np.ndarray:
    """Outgoing fundamental solution ``-exp(i w |x|)/(4 pi |x|)``."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise ZeroDivisionError("Green's function is singular at x = 0")
    val = -np.exp(1j * omega * r) / (4 * np.pi * r)
    return complex(val) if np.ndim(val) == 0 else val


def mesh_arrays(mesh: SurfaceMesh):
    """Contiguous per-triangle arrays used by the compiled kernels."""
    return (np.ascontiguousarray(mesh.corners, dtype=float),
            np.ascontiguousarray(mesh.normals, dtype=float),
            np.ascontiguousarray(mesh.areas, dtype=float),
            np.ascontiguousarray(mesh.centroids, dtype=float),
            np.ascontiguousarray(mesh.diameters, dtype=float))


@dataclass(eq=False)
class TangentialDensity:
    """Edge-basis coefficients of a tangential surface field."""

    basis: EdgeBasis
    coef: np.ndarray

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=complex)
        if self.coef.shape != (self.basis.n,):
            raise ValueError("coefficient vector does not match the basis size")

    @property
    def mesh(self):
        return self.basis.mesh

    def __mul__(self, alpha):
        return TangentialDensity(self.basis, alpha * self.coef)

    __rmul__ = __mul__

    def values(self, tri, points):
        return self.basis.values(self.coef, tri, points)

    def divergence(self):
        return self.basis.divergence(self.coef)

    @classmethod
    def zeros(cls, basis):
        return cls(basis, np.zeros(basis.n, dtype=complex))

    @classmethod
    def interpolate(cls, basis, field_fn):
        return cls(basis, basis.interpolate(field_fn))


OPERATOR_KINDS = {
    "M_pv": K.KIND_M_RWG,
    "A_single": K.KIND_A,
    "divdiv": K.KIND_DIVDIV,
    "L_curlcurl": K.KIND_L,
}


@dataclass(eq=False)
class BoundaryOperatorMatrix:
    """Dense Galerkin matrix with its provenance."""

    matrix: np.ndarray
    kind: str
    omega: float
    testing: str = "rwg"
    mesh_hash: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    def dump(self, path):
        write_matrix(path, self.matrix)


def assemble_operator(mesh: SurfaceMesh, omega: float, kind: str, *, testing: str = "rwg",
                      basis: EdgeBasis | None = None,
                      options: QuadratureOptions = DEFAULT_QUADRATURE) -> BoundaryOperatorMatrix:
    """Galerkin matrix of one of the vector boundary operators.

    ``kind`` is ``"M_pv"``, ``"A_single"``, ``"divdiv"`` or ``"L_curlcurl"``;
    ``L_curlcurl`` is ``w^2 <f, A f> - <div f, S div f>``.  ``testing`` is
    ``"rwg"`` (test with the edge functions) or ``"rotated"`` (test with
    ``nu x f``); it only affects ``M_pv``.
    """
    if kind not in OPERATOR_KINDS:
        raise ValueError(f"unknown operator kind {kind!r}")
    if testing not in ("rwg", "rotated"):
        raise ValueError("testing must be 'rwg' or 'rotated'")
    basis = basis or EdgeBasis(mesh)
    code = OPERATOR_KINDS[kind]
    if code == K.KIND_M_RWG and testing == "rotated":
        code = K.KIND_M_ROT
    V, N, A, C, D = mesh_arrays(mesh)
    Z = K.galerkin(code, V, N, A, C, D, basis.tri_edge, basis.tri_coef, basis.n, float(omega),
                   *options.rules(), float(options.near_factor))
    return BoundaryOperatorMatrix(Z, kind, float(omega), testing, mesh.hash)


def assemble_M(mesh: SurfaceMesh, omega: float, *, testing: str = "rwg", basis=None,
               options: QuadratureOptions = DEFAULT_QUADRATURE, allow_open: bool = False):
    """Galerkin matrix of the principal-value operator ``M``.

    Coplanar panel pairs (in particular the self panel) contribute exactly
    zero, which is the principal-value prescription on flat panels.
    """
    if mesh.closed is False and not allow_open:
        raise GeometryError("assemble_M needs a closed mesh (use the screen operator for open surfaces)")
    if mesh.closed and mesh.boundary_edge_count:
        raise GeometryError("mesh is not closed")
    return assemble_operator(mesh, omega, "M_pv", testing=testing, basis=basis, options=options)


def scalar_operator(mesh: SurfaceMesh, omega: float, *, adjoint_double_layer: bool = False,
                    options: QuadratureOptions = DEFAULT_QUADRATURE) -> BoundaryOperatorMatrix:
    """Panel-constant Galerkin matrix of ``S`` (or of ``K*``)."""
    V, N, A, C, D = mesh_arrays(mesh)
    Z = K.scalar_galerkin(V, N, A, C, D, float(omega), *options.rules(), float(options.near_factor),
                          bool(adjoint_double_layer))
    return BoundaryOperatorMatrix(Z, "K_adj" if adjoint_double_layer else "S_scalar", float(omega),
                                  "p0", mesh.hash)


# --------------------------------------------------------------------------
# off-surface evaluation
# --------------------------------------------------------------------------

def _check_near(mesh, X, warn=True):
    if not warn:
        return
    tree = cKDTree(mesh.centroids)
    d, k = tree.query(X)
    if np.any(d < mesh.diameters[k]):
        warnings.warn("evaluation point within one panel diameter of the surface; "
                      "near-field integrals are computed semi-analytically",
                      NearSingularWarning, stacklevel=3)


def potentials_at(mesh: SurfaceMesh, omega: float, X, density: TangentialDensity | None = None,
                  phi=None, *, options: QuadratureOptions = DEFAULT_QUADRATURE, warn: bool = True):
    """All potentials at points ``X``: ``(A, curl A, grad div A, S[phi], grad S[phi])``."""
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
    _check_near(mesh, X, warn)
    if density is None:
        basis = EdgeBasis(mesh)
        coef = np.zeros(basis.n, dtype=complex)
    else:
        basis, coef = density.basis, density.coef
    phi_arr = np.zeros(0, dtype=complex) if phi is None else np.asarray(phi, dtype=complex)
    V, N, A, C, D = mesh_arrays(mesh)
    _, _, _, _, ls, ws, lsn, wsn = options.rules()
    return K.evaluate(X, V, N, A, D, basis.tri_edge, basis.tri_coef,
                      np.ascontiguousarray(coef), np.ascontiguousarray(phi_arr), float(omega),
                      ls, ws, lsn, wsn, float(options.near_factor))


def _squeeze(x, single):
    return x[0] if single else x


def single_layer_vector(mesh, omega, a: TangentialDensity, x, **kw):
    """``A[a](x) = int G(x - y) a(y) dy`` at one point or an array of points."""
    single = np.ndim(x) == 1
    Av = potentials_at(mesh, omega, x, a, **kw)[0]
    return _squeeze(Av, single)


def curl_single_layer(mesh, omega, a: TangentialDensity, x, **kw):
    """``curl A[a](x)``."""
    single = np.ndim(x) == 1
    return _squeeze(potentials_at(mesh, omega, x, a, **kw)[1], single)


def curlcurl_A(mesh, omega, a: TangentialDensity, x, **kw):
    """``curl curl A[a] = w^2 A[a] + grad div A[a]``, divergence moved onto the surface."""
    single = np.ndim(x) == 1
    Av, _, gd, _, _ = potentials_at(mesh, omega, x, a, **kw)
    return _squeeze(omega ** 2 * Av + gd, single)


def scalar_single_layer(mesh, omega, phi, x, **kw):
    """``S[phi](x)`` and its gradient for a panel-constant density ``phi``."""
    single = np.ndim(x) == 1
    out = potentials_at(mesh, omega, x, None, phi, **kw)
    return _squeeze(out[3], single), _squeeze(out[4], single)


# --------------------------------------------------------------------------
# jump relations
# --------------------------------------------------------------------------

def default_offset(mesh: SurfaceMesh) -> float:
    """``1e-3`` times the diameter of the mesh bounding box."""
    v = mesh.vertices
    return 1e-3 * float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))


def _tangential(field_fn, x, nrm):
    val = np.asarray(field_fn(x), dtype=complex)
    return val - np.sum(val * nrm, axis=1, keepdims=True) * nrm


def jump_test(mesh: SurfaceMesh, omega: float, a=None, tau: float | None = None, *,
              degree: int = 4, options: QuadratureOptions = DEFAULT_QUADRATURE) -> float:
    """Relative residual of the jump ``(nu x curl A)|_+ - (nu x curl A)|_- = -a``.

    ``a`` is a callable ``a(x) -> (P, 3)`` (its tangential part is used), a
    :class:`TangentialDensity`, or ``None`` for the zero field.  The density
    fed to the potential is the edge interpolant; the reference on the right
    is the exact tangential field at the quadrature points, so the residual
    measures the discretisation error of the identity.
    """
    basis = EdgeBasis(mesh)
    if a is None:
        return 0.0
    tau = default_offset(mesh) if tau is None else float(tau)
    tri, x, wq = basis.quadrature(degree)
    nrm = mesh.normals[tri]
    if isinstance(a, TangentialDensity):
        dens = a
        exact = a.values(tri, x)
    else:
        dens = TangentialDensity.interpolate(basis, a)
        exact = _tangential(a, x, nrm)
    norm_a = np.sqrt(np.sum(wq * np.sum(np.abs(exact) ** 2, axis=1)))
    if norm_a == 0:
        return 0.0
    out = potentials_at(mesh, omega, x + tau * nrm, dens, options=options, warn=False)[1]
    inn = potentials_at(mesh, omega, x - tau * nrm, dens, options=options, warn=False)[1]
    jump = np.cross(nrm, out) - np.cross(nrm, inn)
    res = jump + exact
    return float(np.sqrt(np.sum(wq * np.sum(np.abs(res) ** 2, axis=1))) / norm_a)


def scalar_trace_test(mesh: SurfaceMesh, omega: float, phi_fn, tau: float | None = None, *,
                      degree: int = 4, options: QuadratureOptions = DEFAULT_QUADRATURE) -> float:
    """Relative residual of ``dS/dnu|_+ - dS/dnu|_- = phi`` for a smooth scalar ``phi``.

    The potential uses panel averages of ``phi``; the reference is ``phi`` at
    the quadrature points.
    """
    tau = default_offset(mesh) if tau is None else float(tau)
    basis = EdgeBasis(mesh)
    tri, x, wq = basis.quadrature(degree)
    nrm = mesh.normals[tri]
    vals = np.asarray(phi_fn(x), dtype=complex)
    nt = mesh.n_triangles
    avg = (wq * vals).reshape(nt, -1).sum(axis=1) / mesh.areas
    norm_phi = np.sqrt(np.sum(wq * np.abs(vals) ** 2))
    if norm_phi == 0:
        return 0.0
    gp = potentials_at(mesh, omega, x + tau * nrm, None, avg, options=options, warn=False)[4]
    gm = potentials_at(mesh, omega, x - tau * nrm, None, avg, options=options, warn=False)[4]
    jump = np.sum((gp - gm) * nrm, axis=1)
    res = jump - vals
    return float(np.sqrt(np.sum(wq * np.abs(res) ** 2)) / norm_phi)


# --------------------------------------------------------------------------
# binary matrix dump
# --------------------------------------------------------------------------

_MAGIC = b"CLKB"


def write_matrix(path, matrix) -> None:
    """Write a complex matrix: 16-byte header (magic, u32 rows, u32 cols, pad) then row-major ``<c16``."""
    m = np.ascontiguousarray(matrix, dtype="<c16")
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", rows, cols) + b"\0" * 4)
        fh.write(m.tobytes(order="C"))


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != _MAGIC:
            raise ValueError("not a CLKB matrix file")
        rows, cols = struct.unpack("<II", head[4:12])
        data = np.frombuffer(fh.read(), dtype="<c16")
    return data.reshape(rows, cols).astype(complex)
