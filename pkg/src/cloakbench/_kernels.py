"""Compiled inner loops for panel integrals of the Helmholtz kernel.

Conventions: ``G(x) = -exp(i w |x|) / (4 pi |x|)``.  For one flat source
triangle ``T`` and a target point ``x`` the routines return

    S0 = int_T G(x - y) dy,   S1 = int_T G(x - y) y dy,   P = int_T grad_x G(x - y) dy.

Near pairs use the closed-form flat-panel integrals of ``1/R`` and its
gradient plus a smooth remainder ``G - G_0`` integrated by quadrature.
"""
import math

import numpy as np
from numba import njit

FOUR_PI = 4.0 * math.pi

# Galerkin operator kinds
KIND_M_RWG = 0
KIND_M_ROT = 1
KIND_A = 2
KIND_DIVDIV = 3
KIND_L = 4


@njit(cache=True)
def _static_terms(x, V, n):
    """Closed-form integrals over a flat triangle.

    Returns ``(I0, I1, Ig, h)`` with ``I0 = int 1/R``, ``I1 = int (y - rho)/R``
    (rho the projection of x on the plane), ``Ig = grad_x int 1/R`` and the
    signed height ``h`` of ``x`` above the plane.
    """
    h = (x[0] - V[0, 0]) * n[0] + (x[1] - V[0, 1]) * n[1] + (x[2] - V[0, 2]) * n[2]
    scale = 0.0
    for i in range(3):
        j = (i + 1) % 3
        scale = max(scale, abs(V[j, 0] - V[i, 0]) + abs(V[j, 1] - V[i, 1]) + abs(V[j, 2] - V[i, 2]))
    # points on the panel plane up to round-off get the principal value
    if abs(h) < 1e-11 * scale:
        h = 0.0
    rho = np.empty(3)
    for k in range(3):
        rho[k] = x[k] - h * n[k]
    ah = abs(h)
    I0 = 0.0
    I1 = np.zeros(3)
    Ig = np.zeros(3)
    sb = 0.0
    for i in range(3):
        j = (i + 1) % 3
        l = np.empty(3)
        for k in range(3):
            l[k] = V[j, k] - V[i, k]
        L = math.sqrt(l[0] * l[0] + l[1] * l[1] + l[2] * l[2])
        for k in range(3):
            l[k] /= L
        m = np.empty(3)
        m[0] = l[1] * n[2] - l[2] * n[1]
        m[1] = l[2] * n[0] - l[0] * n[2]
        m[2] = l[0] * n[1] - l[1] * n[0]
        sm = 0.0
        sp = 0.0
        t0 = 0.0
        Rm2 = 0.0
        Rp2 = 0.0
        for k in range(3):
            dm = V[i, k] - rho[k]
            dp = V[j, k] - rho[k]
            sm += dm * l[k]
            sp += dp * l[k]
            t0 += dm * m[k]
            Rm2 += (x[k] - V[i, k]) ** 2
            Rp2 += (x[k] - V[j, k]) ** 2
        Rm = math.sqrt(Rm2)
        Rp = math.sqrt(Rp2)
        R02 = t0 * t0 + h * h
        if sm >= 0.0:
            f2 = math.log((Rp + sp) / (Rm + sm))
        elif sp <= 0.0:
            f2 = math.log((Rm - sm) / (Rp - sp))
        elif R02 > 1e-300:
            f2 = math.log((Rp + sp) * (Rm - sm) / R02)
        else:
            f2 = 0.0
        if abs(t0) > 1e-300:
            beta = math.atan(t0 * sp / (R02 + ah * Rp)) - math.atan(t0 * sm / (R02 + ah * Rm))
        else:
            beta = 0.0
        sb += beta
        I0 += t0 * f2
        c1 = 0.5 * (R02 * f2 + sp * Rp - sm * Rm)
        for k in range(3):
            I1[k] += c1 * m[k]
            Ig[k] -= m[k] * f2
    I0 -= ah * sb
    sgn = 0.0
    if h > 0.0:
        sgn = 1.0
    elif h < 0.0:
        sgn = -1.0
    for k in range(3):
        Ig[k] -= sgn * n[k] * sb
    return I0, I1, Ig, h


@njit(cache=True)
def _remainder_kernels(R, omega):
    """Return ``g = G - G0`` and ``k`` with ``grad (G - G0) = (x - y) k``."""
    z = omega * R
    if z < 0.05:
        z2 = z * z
        # e^{iz} - 1 and e^{iz}(1 - iz) - 1 by series
        em1 = complex(-z2 / 2 + z2 * z2 / 24 - z2 * z2 * z2 / 720,
                      z - z2 * z / 6 + z2 * z2 * z / 120 - z2 * z2 * z2 * z / 5040)
        q = complex(z2 / 2 - z2 * z2 / 8 + z2 * z2 * z2 / 144,
                    z2 * z / 3 - z2 * z2 * z / 30 + z2 * z2 * z2 * z / 840)
        g = -omega * em1 / (FOUR_PI * z) if z > 0 else complex(0.0, -omega / FOUR_PI)
        if R > 0:
            k = q / (FOUR_PI * R * R * R)
        else:
            k = 0j
        return g, k
    e = complex(math.cos(z), math.sin(z))
    g = -(e - 1.0) / (FOUR_PI * R)
    k = (e * complex(1.0, -z) - 1.0) / (FOUR_PI * R * R * R)
    return g, k


@njit(cache=True)
def tri_moments(x, V, n, area, omega, near, lam, w, lam_n, w_n):
    """``(S0, S1, P)`` for one target point and one source triangle."""
    S0 = 0j
    S1 = np.zeros(3, dtype=np.complex128)
    P = np.zeros(3, dtype=np.complex128)
    y = np.empty(3)
    d = np.empty(3)
    if not near:
        for q in range(lam.shape[0]):
            R2 = 0.0
            for k in range(3):
                y[k] = lam[q, 0] * V[0, k] + lam[q, 1] * V[1, k] + lam[q, 2] * V[2, k]
                d[k] = x[k] - y[k]
                R2 += d[k] * d[k]
            R = math.sqrt(R2)
            z = omega * R
            e = complex(math.cos(z), math.sin(z))
            g = -e / (FOUR_PI * R) * (w[q] * area)
            kk = e * complex(1.0, -z) / (FOUR_PI * R2 * R) * (w[q] * area)
            S0 += g
            for k in range(3):
                S1[k] += g * y[k]
                P[k] += kk * d[k]
        return S0, S1, P
    I0, I1, Ig, h = _static_terms(x, V, n)
    S0 = complex(-I0 / FOUR_PI, 0.0)
    for k in range(3):
        rho_k = x[k] - h * n[k]
        S1[k] = -(I1[k] + rho_k * I0) / FOUR_PI
        P[k] = -Ig[k] / FOUR_PI
    if omega == 0.0:
        return S0, S1, P
    for q in range(lam_n.shape[0]):
        R2 = 0.0
        for k in range(3):
            y[k] = lam_n[q, 0] * V[0, k] + lam_n[q, 1] * V[1, k] + lam_n[q, 2] * V[2, k]
            d[k] = x[k] - y[k]
            R2 += d[k] * d[k]
        R = math.sqrt(R2)
        g, kk = _remainder_kernels(R, omega)
        wa = w_n[q] * area
        S0 += g * wa
        for k in range(3):
            S1[k] += g * wa * y[k]
            P[k] += kk * wa * d[k]
    return S0, S1, P


@njit(cache=True)
def _is_near(C, D, t, s, near_factor):
    d2 = 0.0
    for k in range(3):
        d2 += (C[t, k] - C[s, k]) ** 2
    dm = max(D[t], D[s])
    return d2 < (near_factor * dm) ** 2


@njit(cache=True)
def galerkin(kind, V, N, A, C, D, tri_edge, tri_coef, nb, omega,
             lt, wt, ltn, wtn, ls, ws, lsn, wsn, near_factor):
    """Dense Galerkin matrix over edge functions.

    ``kind`` selects the bilinear form (see the ``KIND_*`` constants).
    Entries are accumulated in a fixed triangle-pair order, so repeated calls
    are bitwise identical.
    """
    F = V.shape[0]
    Z = np.zeros((nb, nb), dtype=np.complex128)
    blk = np.zeros((3, 3), dtype=np.complex128)
    x = np.empty(3)
    fi = np.empty((3, 3))
    for t in range(F):
        nt = N[t]
        for s in range(F):
            near = _is_near(C, D, t, s, near_factor)
            if near:
                lam, w = ltn, wtn
            else:
                lam, w = lt, wt
            for i in range(3):
                for j in range(3):
                    blk[i, j] = 0j
            for q in range(lam.shape[0]):
                for k in range(3):
                    x[k] = lam[q, 0] * V[t, 0, k] + lam[q, 1] * V[t, 1, k] + lam[q, 2] * V[t, 2, k]
                wx = w[q] * A[t]
                S0, S1, P = tri_moments(x, V[s], N[s], A[s], omega, near, ls, ws, lsn, wsn)
                for i in range(3):
                    for k in range(3):
                        fi[i, k] = tri_coef[t, i] * (x[k] - V[t, i, k])
                if kind == KIND_M_RWG or kind == KIND_M_ROT:
                    nP = nt[0] * P[0] + nt[1] * P[1] + nt[2] * P[2]
                    for j in range(3):
                        u0 = x[0] - V[s, j, 0]
                        u1 = x[1] - V[s, j, 1]
                        u2 = x[2] - V[s, j, 2]
                        cj = tri_coef[s, j] * wx
                        if kind == KIND_M_RWG:
                            nu = nt[0] * u0 + nt[1] * u1 + nt[2] * u2
                            for i in range(3):
                                fP = fi[i, 0] * P[0] + fi[i, 1] * P[1] + fi[i, 2] * P[2]
                                fu = fi[i, 0] * u0 + fi[i, 1] * u1 + fi[i, 2] * u2
                                blk[i, j] += cj * (fP * nu - fu * nP)
                        else:
                            c0 = P[1] * u2 - P[2] * u1
                            c1 = P[2] * u0 - P[0] * u2
                            c2 = P[0] * u1 - P[1] * u0
                            for i in range(3):
                                blk[i, j] += cj * (fi[i, 0] * c0 + fi[i, 1] * c1 + fi[i, 2] * c2)
                else:
                    for j in range(3):
                        cj = tri_coef[s, j] * wx
                        acc_a0 = S1[0] - V[s, j, 0] * S0
                        acc_a1 = S1[1] - V[s, j, 1] * S0
                        acc_a2 = S1[2] - V[s, j, 2] * S0
                        for i in range(3):
                            va = fi[i, 0] * acc_a0 + fi[i, 1] * acc_a1 + fi[i, 2] * acc_a2
                            vd = 4.0 * tri_coef[t, i] * S0
                            if kind == KIND_A:
                                blk[i, j] += cj * va
                            elif kind == KIND_DIVDIV:
                                blk[i, j] += cj * vd
                            else:
                                blk[i, j] += cj * (omega * omega * va - vd)
            for i in range(3):
                ei = tri_edge[t, i]
                if ei < 0:
                    continue
                for j in range(3):
                    ej = tri_edge[s, j]
                    if ej < 0:
                        continue
                    Z[ei, ej] += blk[i, j]
    return Z


@njit(cache=True)
def scalar_galerkin(V, N, A, C, D, omega, lt, wt, ltn, wtn, ls, ws, lsn, wsn, near_factor, adjoint_dl):
    """Piecewise-constant Galerkin matrix of the scalar single layer (or of ``K*`` if ``adjoint_dl``)."""
    F = V.shape[0]
    Z = np.zeros((F, F), dtype=np.complex128)
    x = np.empty(3)
    for t in range(F):
        for s in range(F):
            near = _is_near(C, D, t, s, near_factor)
            if near:
                lam, w = ltn, wtn
            else:
                lam, w = lt, wt
            acc = 0j
            for q in range(lam.shape[0]):
                for k in range(3):
                    x[k] = lam[q, 0] * V[t, 0, k] + lam[q, 1] * V[t, 1, k] + lam[q, 2] * V[t, 2, k]
                S0, S1, P = tri_moments(x, V[s], N[s], A[s], omega, near, ls, ws, lsn, wsn)
                if adjoint_dl:
                    acc += w[q] * A[t] * (N[t, 0] * P[0] + N[t, 1] * P[1] + N[t, 2] * P[2])
                else:
                    acc += w[q] * A[t] * S0
            Z[t, s] = acc
    return Z


@njit(cache=True)
def evaluate(X, V, N, A, D, tri_edge, tri_coef, coef, phi, omega,
             ls, ws, lsn, wsn, near_factor):
    """Potentials generated by an edge density ``coef`` and a panel density ``phi``.

    Returns ``(Avec, curlA, graddivA, Sphi, gradSphi)`` at the points ``X``.
    """
    m = X.shape[0]
    F = V.shape[0]
    Av = np.zeros((m, 3), dtype=np.complex128)
    cA = np.zeros((m, 3), dtype=np.complex128)
    gd = np.zeros((m, 3), dtype=np.complex128)
    Sp = np.zeros(m, dtype=np.complex128)
    gS = np.zeros((m, 3), dtype=np.complex128)
    Cs = np.empty(3)
    x = np.empty(3)
    has_phi = phi.shape[0] == F
    for p in range(m):
        for k in range(3):
            x[k] = X[p, k]
        for s in range(F):
            for k in range(3):
                Cs[k] = (V[s, 0, k] + V[s, 1, k] + V[s, 2, k]) / 3.0
            d2 = (x[0] - Cs[0]) ** 2 + (x[1] - Cs[1]) ** 2 + (x[2] - Cs[2]) ** 2
            near = d2 < (near_factor * D[s]) ** 2
            S0, S1, P = tri_moments(x, V[s], N[s], A[s], omega, near, ls, ws, lsn, wsn)
            for j in range(3):
                e = tri_edge[s, j]
                if e < 0:
                    continue
                a = coef[e] * tri_coef[s, j]
                u0 = x[0] - V[s, j, 0]
                u1 = x[1] - V[s, j, 1]
                u2 = x[2] - V[s, j, 2]
                Av[p, 0] += a * (S1[0] - V[s, j, 0] * S0)
                Av[p, 1] += a * (S1[1] - V[s, j, 1] * S0)
                Av[p, 2] += a * (S1[2] - V[s, j, 2] * S0)
                cA[p, 0] += a * (P[1] * u2 - P[2] * u1)
                cA[p, 1] += a * (P[2] * u0 - P[0] * u2)
                cA[p, 2] += a * (P[0] * u1 - P[1] * u0)
                for k in range(3):
                    gd[p, k] += 2.0 * a * P[k]
            if has_phi:
                Sp[p] += phi[s] * S0
                for k in range(3):
                    gS[p, k] += phi[s] * P[k]
    return Av, cA, gd, Sp, gS


@njit(cache=True)
def pointwise_M(X, NX, V, N, A, C, D, tri_vec, omega, ls, ws, lsn, wsn, near_factor):
    """``nu_x x sum_s P_s(x) x a_s`` for panel-constant tangential densities ``tri_vec``.

    Points lying on a source panel get the principal value (in-plane static
    gradient), which is what the analytic static term returns for ``h = 0``.
    """
    m = X.shape[0]
    F = V.shape[0]
    out = np.zeros((m, 3), dtype=np.complex128)
    x = np.empty(3)
    for p in range(m):
        for k in range(3):
            x[k] = X[p, k]
        acc = np.zeros(3, dtype=np.complex128)
        for s in range(F):
            d2 = (x[0] - C[s, 0]) ** 2 + (x[1] - C[s, 1]) ** 2 + (x[2] - C[s, 2]) ** 2
            near = d2 < (near_factor * D[s]) ** 2
            S0, S1, P = tri_moments(x, V[s], N[s], A[s], omega, near, ls, ws, lsn, wsn)
            a0, a1, a2 = tri_vec[s, 0], tri_vec[s, 1], tri_vec[s, 2]
            acc[0] += P[1] * a2 - P[2] * a1
            acc[1] += P[2] * a0 - P[0] * a2
            acc[2] += P[0] * a1 - P[1] * a0
        n0, n1, n2 = NX[p, 0], NX[p, 1], NX[p, 2]
        out[p, 0] = n1 * acc[2] - n2 * acc[1]
        out[p, 1] = n2 * acc[0] - n0 * acc[2]
        out[p, 2] = n0 * acc[1] - n1 * acc[0]
    return out
