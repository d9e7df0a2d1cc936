"""Vector multipole series for plane-wave scattering by a perfectly conducting sphere.

Time dependence ``exp(-i w t)``; the scattered field behaves like
``exp(i w r)/r * A(x)`` and for a wave ``p exp(i w d.x)`` the amplitude is

    A = (i/k) [cos(phi) S2(theta) e_theta - sin(phi) S1(theta) e_phi]

in the frame where ``d`` is the polar axis and ``p`` points along ``phi = 0``.
"""
from __future__ import annotations

import numpy as np
from scipy.special import spherical_jn, spherical_yn


class SeriesNotConverged(ArithmeticError):
    pass


def pec_coefficients(x: float, n_max: int):
    """Coefficients ``a_n = psi_n'/xi_n'`` and ``b_n = psi_n/xi_n`` for ``n = 1..n_max``."""
    n = np.arange(1, n_max + 1)
    j = spherical_jn(n, x)
    y = spherical_yn(n, x)
    jp = spherical_jn(n, x, derivative=True)
    yp = spherical_yn(n, x, derivative=True)
    psi = x * j
    dpsi = j + x * jp
    xi = x * (j + 1j * y)
    dxi = (j + 1j * y) + x * (jp + 1j * yp)
    return dpsi / dxi, psi / xi


def angular_functions(mu, n_max: int):
    """``pi_n`` and ``tau_n`` for ``n = 1..n_max`` at ``mu = cos(theta)``."""
    mu = np.asarray(mu, float)
    pi = np.zeros((n_max + 1,) + mu.shape)
    tau = np.zeros_like(pi)
    pi[1] = 1.0
    tau[1] = mu
    for n in range(2, n_max + 1):
        pi[n] = (2 * n - 1) / (n - 1) * mu * pi[n - 1] - n / (n - 1) * pi[n - 2]
        tau[n] = n * mu * pi[n] - (n + 1) * pi[n - 1]
    return pi[1:], tau[1:]


def amplitude_functions(x: float, mu, n_max: int):
    a, b = pec_coefficients(x, n_max)
    pi, tau = angular_functions(mu, n_max)
    n = np.arange(1, n_max + 1)
    c = ((2 * n + 1) / (n * (n + 1)))[:, None]
    S1 = np.sum(c * (a[:, None] * pi + b[:, None] * tau), axis=0)
    S2 = np.sum(c * (a[:, None] * tau + b[:, None] * pi), axis=0)
    return S1, S2


def sphere_far_field(radius: float, omega: float, p, d, directions, n_terms: int | None = None,
                     center=(0.0, 0.0, 0.0)):
    """Far-field amplitude of a PEC sphere for ``E^i = p exp(i w d.x)``.

    Returns an array of shape ``(n_dir, 3)``.
    """
    p = np.asarray(p, float)
    d = np.asarray(d, float)
    q = np.cross(d, p)
    X = np.atleast_2d(np.asarray(directions, float))
    k = float(omega)
    x = k * radius
    N = int(np.ceil(x + 10)) if n_terms is None else int(n_terms)
    lx, ly, lz = X @ p, X @ q, X @ d
    mu = np.clip(lz, -1.0, 1.0)
    sin_t = np.sqrt(np.maximum(0.0, 1 - mu ** 2))
    phi = np.arctan2(ly, lx)
    S1, S2 = amplitude_functions(x, mu, N)
    cp, sp = np.cos(phi), np.sin(phi)
    e_theta = (mu * cp)[:, None] * p + (mu * sp)[:, None] * q - sin_t[:, None] * d
    e_phi = -sp[:, None] * p + cp[:, None] * q
    A = (1j / k) * ((cp * S2)[:, None] * e_theta - (sp * S1)[:, None] * e_phi)
    shift = np.exp(1j * k * ((d[None, :] - X) @ np.asarray(center, float)))
    return A * shift[:, None]


def check_truncation(radius: float, omega: float, p, d, directions, tol: float = 1e-10):
    """Compare truncation ``N`` and ``2N``; raise when the difference exceeds ``tol``."""
    N = int(np.ceil(omega * radius + 10))
    a = sphere_far_field(radius, omega, p, d, directions, N)
    b = sphere_far_field(radius, omega, p, d, directions, 2 * N)
    err = np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)
    if err > tol:
        raise SeriesNotConverged(f"series truncation error {err:.2e} exceeds {tol:.1e}")
    return err
