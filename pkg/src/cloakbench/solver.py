"""Perfect-conductor scattering by the magnetic-field integral equation.

For a closed surface with outward normal ``nu`` the scattered field is
``E_s = curl A[a]`` and the density solves

    (-I/2 + M) a = -nu x E^i,

the tangential trace of the total field vanishing on the outside.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from . import mie
from .basis import EdgeBasis
from .geometry import GeometryError, SurfaceMesh
from .potentials import (DEFAULT_QUADRATURE, QuadratureOptions, TangentialDensity, assemble_M,
                         potentials_at)


class ResonanceError(ArithmeticError):
    """The discrete system is singular or too ill-conditioned to trust."""


@dataclass(frozen=True)
class PlaneWave:
    """Incident plane wave ``E^i = amplitude * p * exp(i w d.x)``."""

    p: tuple
    d: tuple
    omega: float = 1.0
    amplitude: complex = 1.0

    def __post_init__(self):
        p = np.asarray(self.p, float)
        d = np.asarray(self.d, float)
        if abs(np.linalg.norm(p) - 1) > 1e-12 or abs(np.linalg.norm(d) - 1) > 1e-12:
            raise ValueError("p and d must be unit vectors")
        if abs(p @ d) > 1e-12:
            raise ValueError("polarisation must be orthogonal to the direction (p.d = 0)")
        if not self.omega > 0:
            raise ValueError("frequency must be positive")

    @classmethod
    def normalized(cls, p, d, omega=1.0, amplitude=1.0):
        """Normalise ``d``, remove the ``d`` component of ``p`` and normalise it."""
        d = np.asarray(d, float)
        d = d / np.linalg.norm(d)
        p = np.asarray(p, float)
        p = p - (p @ d) * d
        n = np.linalg.norm(p)
        if n < 1e-12:
            raise ValueError("polarisation parallel to the direction")
        return cls(tuple(p / n), tuple(d), float(omega), amplitude)

    @property
    def pv(self):
        return np.asarray(self.p, float)

    @property
    def dv(self):
        return np.asarray(self.d, float)


def incident_fields(wave: PlaneWave, x):
    """``E^i = p e^{i w x.d}`` and ``H^i = (1/(i w)) curl E^i = (d x p) e^{i w x.d}``.

    Returns arrays of shape ``(n, 3)`` (or ``(3,)`` for a single point).
    """
    x = np.asarray(x, float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    ph = wave.amplitude * np.exp(1j * wave.omega * (X @ wave.dv))
    E = ph[:, None] * wave.pv
    H = ph[:, None] * np.cross(wave.dv, wave.pv)
    if single:
        return E[0], H[0]
    return E, H


# --------------------------------------------------------------------------
# direction grids and far-field patterns
# --------------------------------------------------------------------------

def fibonacci_directions(n: int = 266) -> np.ndarray:
    """Equal-area spiral grid of ``n`` unit vectors."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z ** 2)
    phi = np.pi * (1 + 5 ** 0.5) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


@dataclass(eq=False)
class FarFieldPattern:
    """Complex far-field amplitudes on a direction grid."""

    directions: np.ndarray
    values: np.ndarray
    wave: PlaneWave | None = None
    mesh_hash: str = ""

    def norm_linf(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=1)))

    def norm_l2(self) -> float:
        """Discrete ``L^2(S^2)`` norm with equal weights ``4 pi / n``."""
        n = len(self.directions)
        return float(np.sqrt(4 * np.pi / n * np.sum(np.abs(self.values) ** 2)))

    def relative_l2(self, other: "FarFieldPattern | np.ndarray") -> float:
        ref = other.values if isinstance(other, FarFieldPattern) else np.asarray(other)
        return float(np.sqrt(np.sum(np.abs(self.values - ref) ** 2) / np.sum(np.abs(ref) ** 2)))

    def transversality(self) -> float:
        """Largest ``|<A, x>| / |A|`` over the grid."""
        num = np.abs(np.sum(self.values * self.directions, axis=1))
        den = np.maximum(np.linalg.norm(self.values, axis=1), 1e-300)
        return float(np.max(num / den))

    def angles(self):
        x, y, z = self.directions.T
        theta = np.arccos(np.clip(z, -1, 1))
        phi = np.mod(np.arctan2(y, x), 2 * np.pi)
        return theta, phi

    def to_csv(self, path=None, extra_header: dict | None = None) -> str:
        buf = io.StringIO()
        if self.wave is not None:
            buf.write(f"# omega={self.wave.omega!r}\n")
            buf.write(f"# p={tuple(float(v) for v in self.wave.p)!r}\n")
            buf.write(f"# d={tuple(float(v) for v in self.wave.d)!r}\n")
        buf.write(f"# mesh_hash={self.mesh_hash}\n")
        for k, v in (extra_header or {}).items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "phi", "ReAx", "ImAx", "ReAy", "ImAy", "ReAz", "ImAz"])
        theta, phi = self.angles()
        for t, p, v in zip(theta, phi, self.values):
            w.writerow([repr(float(t)), repr(float(p))] +
                       [repr(float(c)) for comp in v for c in (comp.real, comp.imag)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def read_far_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = [r for r in open(path).read().splitlines() if r and not r.startswith("#")]
    data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]])
    theta, phi = data[:, 0], data[:, 1]
    dirs = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], 1)
    vals = data[:, 2::2] + 1j * data[:, 3::2]
    return dirs, vals


def mie_far_field(radius: float, omega: float, wave: PlaneWave, directions=None,
                  n_terms: int | None = None) -> FarFieldPattern:
    """Far field of a perfectly conducting sphere centred at the origin (series oracle)."""
    dirs = fibonacci_directions() if directions is None else np.asarray(directions, float)
    if n_terms is None:
        mie.check_truncation(radius, omega, wave.pv, wave.dv, dirs)
    vals = wave.amplitude * mie.sphere_far_field(radius, omega, wave.pv, wave.dv, dirs, n_terms)
    return FarFieldPattern(dirs, vals, wave, "mie")


# --------------------------------------------------------------------------
# PEC solve
# --------------------------------------------------------------------------

@dataclass(eq=False)
class PECSolution:
    """Solved density together with diagnostics."""

    density: TangentialDensity
    residual: float
    rcond: float
    wave: PlaneWave
    info: dict = field(default_factory=dict)


class PECOperator:
    """Assembled and factorised system ``(-G/2 + M)`` for one mesh and frequency.

    Reusing the factorisation makes sweeps over incident waves cheap.
    """

    def __init__(self, mesh: SurfaceMesh, omega: float, *, testing: str = "rwg",
                 options: QuadratureOptions = DEFAULT_QUADRATURE, rcond_min: float = 1e-13):
        if not mesh.closed or mesh.boundary_edge_count:
            raise GeometryError("PEC solve needs a closed mesh")
        self.mesh = mesh
        self.omega = float(omega)
        self.testing = testing
        self.options = options
        self.basis = EdgeBasis(mesh)
        M = assemble_M(mesh, omega, testing=testing, basis=self.basis, options=options).matrix
        self.gram = self.basis.gram(testing)
        self.matrix = M - 0.5 * self.gram
        self.lu = sla.lu_factor(self.matrix, check_finite=False)
        anorm = np.max(np.sum(np.abs(self.matrix), axis=0))
        self.rcond = float(lapack.zgecon(self.lu[0], anorm, norm="1")[0])
        if not self.rcond > rcond_min:
            raise ResonanceError(f"system matrix is singular or near-resonant (condition estimate "
                                 f"{1 / max(self.rcond, 1e-300):.3e})")

    def rhs(self, wave: PlaneWave):
        if abs(wave.omega - self.omega) > 1e-14 * self.omega:
            raise ValueError("wave frequency differs from the assembled operator")

        def neg_nu_cross_E(x, tri):
            E, _ = incident_fields(wave, x)
            return -np.cross(self.mesh.normals[tri], E)

        return self.basis.project(neg_nu_cross_E, degree=self.options.test_degree_near, testing=self.testing)

    def solve(self, wave: PlaneWave) -> PECSolution:
        b = self.rhs(wave)
        coef = sla.lu_solve(self.lu, b, check_finite=False)
        bn = np.linalg.norm(b)
        res = float(np.linalg.norm(self.matrix @ coef - b) / bn) if bn > 0 else 0.0
        dens = TangentialDensity(self.basis, coef)
        return PECSolution(dens, res, self.rcond, wave, {"n_edges": self.basis.n})


def solve_pec(mesh: SurfaceMesh, wave: PlaneWave, *, testing: str = "rwg",
              options: QuadratureOptions = DEFAULT_QUADRATURE) -> PECSolution:
    """Solve ``(-I/2 + M) a = -nu x E^i`` on a closed mesh."""
    return PECOperator(mesh, wave.omega, testing=testing, options=options).solve(wave)


def far_field(mesh: SurfaceMesh, a: TangentialDensity, directions=None, omega: float | None = None,
              wave: PlaneWave | None = None, degree: int = 4) -> FarFieldPattern:
    """``A(x) = -(i w / 4 pi) x cross int exp(-i w x.y) a(y) dy`` on a direction grid."""
    if omega is None:
        if wave is None:
            raise ValueError("omega or wave required")
        omega = wave.omega
    dirs = fibonacci_directions() if directions is None else np.atleast_2d(np.asarray(directions, float))
    tri, x, wq = a.basis.quadrature(degree)
    av = a.values(tri, x) * wq[:, None]
    phase = np.exp(-1j * omega * (dirs @ x.T))
    J = phase @ av
    vals = -(1j * omega / (4 * np.pi)) * np.cross(dirs, J)
    return FarFieldPattern(dirs, vals, wave, mesh.hash)


def scattered_field(mesh: SurfaceMesh, a: TangentialDensity, x, omega: float, **kw):
    """``E_s = curl A[a]`` and ``H_s = (1/(i w)) curl E_s`` at off-surface points."""
    single = np.ndim(x) == 1
    Av, cA, gd, _, _ = potentials_at(mesh, omega, x, a, **kw)
    E = cA
    H = (omega ** 2 * Av + gd) / (1j * omega)
    if single:
        return E[0], H[0]
    return E, H
