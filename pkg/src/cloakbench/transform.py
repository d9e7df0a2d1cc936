"""Blowup maps, their Jacobians, push-forward of material tensors and exponent calculus.

Every blowup used here has the form ``A(y) = z_y + (y - z_y) / delta`` with
``z_y`` the nearest point of the generating set.  Its Jacobian is
``B = T + (I - T) / delta`` where ``T`` is the orthogonal projector onto the
tangent space of the generating set at ``z_y`` (the curve tangent on the
tube facade, zero in the caps, the plane in the slab core, the edge
direction on the slab rim and zero at the slab corners).
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from .geometry import Curve, GeometryError, PartialGeneratorSpec


class DomainError(ValueError):
    """Point outside the domain of a blowup map."""


class OrientationError(ValueError):
    """Jacobian with non-positive determinant."""


class LocationClass(str, Enum):
    TUBE_FACADE = "TubeFacade"
    TUBE_CAP = "TubeCap"
    SLAB_CORE = "SlabCore"
    SLAB_RIM = "SlabRim"


@dataclass(frozen=True, eq=False)
class AffineJacobian:
    """Jacobian ``B`` of a blowup map at one point."""

    B: np.ndarray
    det: float
    location: LocationClass

    def sym_eigenvalues(self):
        return np.linalg.eigvalsh(0.5 * (self.B + self.B.T))


# --------------------------------------------------------------------------
# nearest points with tangent projectors
# --------------------------------------------------------------------------

def _curve_local(y, curve: Curve):
    y = np.atleast_2d(np.asarray(y, float))
    xi, z = curve.nearest(y)
    t = curve.tangent(xi)
    L = curve.length
    cap_a = (xi <= 0.0) & (np.sum((y - curve.P0) * curve.tangents[0], axis=1) < 0)
    cap_b = (xi >= L) & (np.sum((y - curve.Q0) * curve.tangents[-1], axis=1) > 0)
    cap = cap_a | cap_b
    T = np.einsum("pi,pj->pij", t, t)
    T[cap] = 0.0
    z = np.where(cap_a[:, None], curve.P0, np.where(cap_b[:, None], curve.Q0, z))
    loc = np.where(cap, LocationClass.TUBE_CAP.value, LocationClass.TUBE_FACADE.value)
    return z, T, loc


def _square_local(y, spec: PartialGeneratorSpec):
    y = np.atleast_2d(np.asarray(y, float))
    e1, e2, n = spec.basis
    c = np.asarray(spec.center, float)
    a = 0.5 * spec.side
    r = y - c
    u, v = r @ e1, r @ e2
    uc, vc = np.clip(u, -a, a), np.clip(v, -a, a)
    z = c + uc[:, None] * e1 + vc[:, None] * e2
    tol = 1e-14 * a
    in_u = np.abs(u) < a - tol
    in_v = np.abs(v) < a - tol
    T = np.zeros((len(y), 3, 3))
    T += np.einsum("p,i,j->pij", in_u.astype(float), e1, e1)
    T += np.einsum("p,i,j->pij", in_v.astype(float), e2, e2)
    core = in_u & in_v
    loc = np.where(core, LocationClass.SLAB_CORE.value, LocationClass.SLAB_RIM.value)
    return z, T, loc


def _local(y, generator):
    if isinstance(generator, Curve):
        return _curve_local(y, generator)
    if isinstance(generator, PartialGeneratorSpec):
        return _square_local(y, generator)
    raise TypeError("generator must be a Curve or a PartialGeneratorSpec")


def _check_domain(y, z, delta):
    dist = np.linalg.norm(y - z, axis=-1)
    if np.any(dist > delta * (1 + 1e-9)):
        raise DomainError(f"point at distance {dist.max():.6g} is outside the closed "
                          f"delta-neighbourhood (delta={delta})")


def _blowup(y, delta, generator):
    if not delta > 0:
        raise ValueError("delta must be positive")
    y = np.asarray(y, float)
    single = y.ndim == 1
    Y = np.atleast_2d(y)
    z, _, _ = _local(Y, generator)
    _check_domain(Y, z, delta)
    out = z + (Y - z) / delta
    return out[0] if single else out


def blowup_full(y, delta: float, curve: Curve):
    """``A(y) = z_y + (y - z_y)/delta`` for ``y`` in the closed tube of radius ``delta``.

    In the caps ``z_y`` is the endpoint, so the map is a dilation about it.
    """
    return _blowup(y, delta, curve)


def blowup_partial(y, delta: float, spec: PartialGeneratorSpec | None = None):
    """Partial-cloak blowup: stretch along the normal in the core, dilate about the rim."""
    return _blowup(y, delta, spec or PartialGeneratorSpec())


def _jacobians(y, delta, generator, check=True):
    Y = np.atleast_2d(np.asarray(y, float))
    z, T, loc = _local(Y, generator)
    if check:
        _check_domain(Y, z, delta)
    I = np.eye(3)
    B = T + (I - T) / delta
    det = np.linalg.det(B)
    return B, det, loc


def jacobian_full(y, delta: float, curve: Curve) -> AffineJacobian:
    """``B = I/delta - (1/delta - 1) t t^T`` on the facade, ``I/delta`` in the caps."""
    B, det, loc = _jacobians(np.asarray(y, float)[None, :], delta, curve)
    return AffineJacobian(B[0], float(det[0]), LocationClass(loc[0]))


def jacobian_partial(y, delta: float, spec: PartialGeneratorSpec | None = None) -> AffineJacobian:
    """``B = I + (1/delta - 1) n n^T`` in the core; rim and corners as for the tube."""
    B, det, loc = _jacobians(np.asarray(y, float)[None, :], delta, spec or PartialGeneratorSpec())
    return AffineJacobian(B[0], float(det[0]), LocationClass(loc[0]))


def jacobians(points, delta: float, generator):
    """Vectorised Jacobians ``(B, det, location)`` at many points."""
    return _jacobians(points, delta, generator)


# --------------------------------------------------------------------------
# tensor algebra
# --------------------------------------------------------------------------

def push_forward(m, B):
    """``B m B^T / det B``; works on single 3x3 matrices or stacks ``(..., 3, 3)``."""
    m = np.asarray(m, float)
    B = np.asarray(B.B if isinstance(B, AffineJacobian) else B, float)
    det = np.linalg.det(B)
    if np.any(det <= 0):
        raise OrientationError("push-forward needs an orientation-preserving Jacobian (det B > 0)")
    out = np.einsum("...ij,...jk,...lk->...il", B, m, B) / np.asarray(det)[..., None, None]
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def lossy_layer(delta: float, r: float, s: float, t: float, B):
    """Lossy-layer tensors ``(delta^r, delta^s, delta^t) * |B| B^{-1}``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    Bm = np.asarray(B.B if isinstance(B, AffineJacobian) else B, float)
    det = np.linalg.det(Bm)
    if abs(det) < 1e-300:
        raise np.linalg.LinAlgError("singular Jacobian")
    core = det * np.linalg.inv(Bm)
    core = 0.5 * (core + core.T)
    return (delta ** float(r)) * core, (delta ** float(s)) * core, (delta ** float(t)) * core


@dataclass(frozen=True)
class CloakExponents:
    """Exponents of the regularised cloaks and the predicted far-field rates."""

    r: object
    s: object
    t: object
    beta: object
    beta_prime: object
    beta_0: object
    beta_1: object
    beta_2: object
    full_rate: object
    partial_rate: object
    admissible_full: bool
    admissible_partial: bool

    def report(self) -> str:
        f = _fmt
        return "\n".join([
            f"r={f(self.r)} s={f(self.s)} t={f(self.t)}",
            f"beta={f(self.beta)} beta'={f(self.beta_prime)}",
            f"beta_0={f(self.beta_0)} beta_1={f(self.beta_1)} beta_2={f(self.beta_2)}",
            f"full rate={f(self.full_rate)} ({'admissible' if self.admissible_full else 'inadmissible'})",
            f"partial rate={f(self.partial_rate)} ({'admissible' if self.admissible_partial else 'inadmissible'})",
        ])


def _fmt(x):
    if isinstance(x, Fraction):
        return str(x) if x.denominator != 1 else str(x.numerator)
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


def _exact(x):
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return x


def cloak_exponents(r, s, t) -> CloakExponents:
    """Exponent calculus of the full and partial regularised cloaks.

    ``beta = min(1, r+s-1, t+s-1)``, ``beta' = min(1, r+s-2, t+s-2)``,
    ``beta_j = min(1, r+s-j, t+s-j)``.  The full-cloak rate is
    ``min(beta - t/2 + 1, 2)`` (admissible when ``beta' >= t/2``) and the
    partial-cloak rate ``min(2 (beta_2 - t/2), 1)`` (admissible when
    ``beta_2 > t/2``).  Integers, fractions and strings such as ``"5/2"``
    are handled exactly.
    """
    r, s, t = _exact(r), _exact(s), _exact(t)

    def bj(j):
        return min(1, -j + r + s, -j + t + s)

    beta, beta_p = bj(1), bj(2)
    b0, b1, b2 = bj(0), bj(1), bj(2)
    full = min(beta - t / 2 + 1, 2)
    partial = min(2 * (b2 - t / 2), 1)
    return CloakExponents(r, s, t, beta, beta_p, b0, b1, b2, full, partial,
                          bool(beta_p - t / 2 >= 0), bool(b2 - t / 2 > 0))


# --------------------------------------------------------------------------
# physical cloak materials
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CloakRadii:
    """Nested neighbourhoods of the generating set: ``Omega_a``, ``Omega_c``, ``Omega``."""

    r_a: float = 0.5
    r_c: float = 1.0
    r_omega: float = 2.0


@dataclass(eq=False)
class MaterialTensorField:
    """Sampled ``(eps, mu, sigma)`` tensors with region labels."""

    points: np.ndarray
    eps: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    region: np.ndarray
    meta: dict = field(default_factory=dict)

    def check(self):
        for name in ("eps", "mu"):
            w = np.linalg.eigvalsh(getattr(self, name))
            if np.any(w <= 0):
                raise ValueError(f"{name} is not positive definite at some sample")
        if np.any(np.linalg.eigvalsh(self.sigma) < -1e-12 * max(1.0, np.abs(self.sigma).max())):
            raise ValueError("sigma is not positive semi-definite")
        return self

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        head = ["x", "y", "z"]
        for p in ("e", "m", "s"):
            head += [f"{p}{i}{j}" for i in range(1, 4) for j in range(1, 4)]
        w.writerow(head)
        for k in range(len(self.points)):
            row = list(self.points[k]) + list(self.eps[k].ravel()) + list(self.mu[k].ravel()) + \
                list(self.sigma[k].ravel())
            w.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_vtk(self, path) -> None:
        n = len(self.points)
        lines = ["# vtk DataFile Version 2.0", "cloakbench materials", "ASCII", "DATASET POLYDATA",
                 f"POINTS {n} double"]
        lines += [" ".join(f"{c:.17g}" for c in p) for p in self.points]
        lines.append(f"VERTICES {n} {2 * n}")
        lines += [f"1 {k}" for k in range(n)]
        lines.append(f"POINT_DATA {n}")
        for name, arr in (("epsilon", self.eps), ("mu", self.mu), ("sigma", self.sigma)):
            lines.append(f"TENSORS {name} double")
            for m in arr:
                lines += [" ".join(f"{c:.17g}" for c in row) for row in m]
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _radial_profile(rho_y, delta, radii: CloakRadii):
    """Radial map ``f`` of the outer layer and its derivative: ``[delta, R] -> [r_c, R]``."""
    R, rc = radii.r_omega, radii.r_c
    slope = (R - rc) / (R - delta)
    return rc + slope * (rho_y - delta), slope


def physical_cloak_materials(generator, delta: float, radii: CloakRadii | None, points,
                             exponents=(0, 2, 0)) -> MaterialTensorField:
    """Sample the physical cloak produced by ``F_delta``.

    ``F_delta`` is the identity outside ``Omega``, the blowup ``A`` on
    ``D_delta`` (so ``D_delta -> Omega_c`` with ``r_c = 1``) and, in between,
    a radial map along the normal directions of the generating set whose
    scale factor interpolates linearly between ``D_delta`` and ``Omega``.
    Region labels: ``outside``, ``cloaking_layer`` (``Omega \\ Omega_c``),
    ``conducting_layer`` (image of the lossy layer, tensors from the lossy
    recipe with the given exponents) and ``cloaked`` (arbitrary content; the
    background push-forward is stored).
    """
    radii = radii or CloakRadii()
    if not (0 < delta <= radii.r_c and radii.r_a < radii.r_c < radii.r_omega):
        raise GeometryError("nesting D_delta in D_1 in Omega is violated")
    if abs(radii.r_c - 1.0) > 1e-15 or abs(radii.r_a - 0.5) > 1e-15:
        raise GeometryError("the blowup maps D_delta onto the unit neighbourhood: use r_c=1, r_a=1/2")
    if isinstance(generator, Curve) and radii.r_omega > generator.tubular_radius:
        raise GeometryError("Omega exceeds the tubular radius of the curve")
    X = np.atleast_2d(np.asarray(points, float))
    z, T, _ = _local(X, generator)
    diff = X - z
    rho_x = np.linalg.norm(diff, axis=1)
    u = diff / np.maximum(rho_x, 1e-300)[:, None]
    n = len(X)
    I = np.eye(3)
    eps = np.broadcast_to(I, (n, 3, 3)).copy()
    mu = eps.copy()
    sig = np.zeros((n, 3, 3))
    region = np.full(n, "outside", dtype=object)
    R = radii.r_omega
    r, s, t = (float(e) for e in exponents)

    layer = (rho_x < R) & (rho_x >= radii.r_c)
    if np.any(layer):
        slope = (R - radii.r_c) / (R - delta)
        rho_y = delta + (rho_x[layer] - radii.r_c) / slope
        f, fp = _radial_profile(rho_y, delta, radii)
        uu = np.einsum("pi,pj->pij", u[layer], u[layer])
        Tl = T[layer]
        DF = Tl + fp * uu + (f / rho_y)[:, None, None] * (I - Tl - uu)
        eps[layer] = push_forward(eps[layer], DF)
        mu[layer] = push_forward(mu[layer], DF)
        region[layer] = "cloaking_layer"

    inner = rho_x < radii.r_c
    if np.any(inner):
        Ti = T[inner]
        B = Ti + (I - Ti) / delta
        cond = inner & (rho_x >= radii.r_a)
        sel = cond[inner]
        if np.any(sel):
            el, ml, sl = [], [], []
            for Bk in B[sel]:
                e_, m_, s_ = lossy_layer(delta, r, s, t, Bk)
                el.append(e_)
                ml.append(m_)
                sl.append(s_)
            eps[cond] = push_forward(np.array(el), B[sel])
            mu[cond] = push_forward(np.array(ml), B[sel])
            sig[cond] = push_forward(np.array(sl), B[sel])
            region[cond] = "conducting_layer"
        core = inner & (rho_x < radii.r_a)
        if np.any(core):
            Bc = B[~sel]
            eps[core] = push_forward(np.broadcast_to(I, Bc.shape), Bc)
            mu[core] = eps[core]
            region[core] = "cloaked"
    out = MaterialTensorField(X, eps, mu, sig, region,
                              {"delta": delta, "r_omega": R, "exponents": tuple(exponents)})
    return out


def layer_jacobian_det(generator, delta: float, radii: CloakRadii, x):
    """``det DF_delta`` evaluated at ``F_delta^{-1}(x)`` for points of the cloaking layer."""
    X = np.atleast_2d(np.asarray(x, float))
    z, T, _ = _local(X, generator)
    rho_x = np.linalg.norm(X - z, axis=1)
    R = radii.r_omega
    slope = (R - radii.r_c) / (R - delta)
    rho_y = delta + (rho_x - radii.r_c) / slope
    f, fp = _radial_profile(rho_y, delta, radii)
    k = np.trace(T, axis1=1, axis2=2)  # dimension of the tangent space
    return fp * (f / rho_y) ** (2 - np.rint(k))

