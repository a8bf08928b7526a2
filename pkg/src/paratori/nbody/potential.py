"""Closed forms for the escape-cluster potential decomposition.

The two-body coupling function is

    V0(alpha, theta) = M_n / D1^(1/2) + m_n / D2^(1/2) - M_{n+1},
    D1 = 1 + 2 a alpha cos(theta) + a^2 alpha^2,   a = m_n / M_{n+1},
    D2 = 1 - 2 b alpha cos(theta) + b^2 alpha^2,   b = M_n / M_{n+1},

identically zero when m_n = 0.  Its theta-critical points are theta = pi
(collinear) and theta_hat0(alpha, m_n) near pi/3 (equilateral).
"""

from __future__ import annotations

import numpy as np

from ..errors import DomainViolation, NewtonDiverged


def _surd_partials(D, dDa, dDth, dDaa, dDath, dDthth):
    """Partials of D^(-1/2) up to order 2 from the partials of D."""
    f = D ** (-0.5)
    fa = -0.5 * D ** (-1.5) * dDa
    fth = -0.5 * D ** (-1.5) * dDth
    faa = 0.75 * D ** (-2.5) * dDa**2 - 0.5 * D ** (-1.5) * dDaa
    fath = 0.75 * D ** (-2.5) * dDa * dDth - 0.5 * D ** (-1.5) * dDath
    fthth = 0.75 * D ** (-2.5) * dDth**2 - 0.5 * D ** (-1.5) * dDthth
    return f, fa, fth, faa, fath, fthth


def V0_partials(alpha, theta, Mn, mn, domain_margin=1e-6):
    """{(i, j): d^{i+j} V0 / d alpha^i d theta^j} for i + j <= 2.

    Complex arguments are accepted (analytic continuation); the collision
    direction b*alpha*e^{i theta} -> 1 raises DomainViolation.
    """
    Mnp1 = Mn + mn
    a = mn / Mnp1
    b = Mn / Mnp1
    c = np.cos(theta)
    s = np.sin(theta)
    D1 = 1.0 + 2.0 * a * alpha * c + (a * alpha) ** 2
    D2 = 1.0 - 2.0 * b * alpha * c + (b * alpha) ** 2
    for D in (D1, D2):
        if abs(D) <= domain_margin:
            raise DomainViolation("cluster geometry at the collision direction")
    p1 = _surd_partials(
        D1, 2 * a * c + 2 * a**2 * alpha, -2 * a * alpha * s,
        2 * a**2, -2 * a * s, -2 * a * alpha * c,
    )
    p2 = _surd_partials(
        D2, -2 * b * c + 2 * b**2 * alpha, 2 * b * alpha * s,
        2 * b**2, 2 * b * s, 2 * b * alpha * c,
    )
    out = {}
    keys = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    for key, v1, v2 in zip(keys, p1, p2):
        out[key] = Mn * v1 + mn * v2
    out[(0, 0)] -= Mnp1
    return out


def V0(alpha, theta, Mn, mn):
    return V0_partials(alpha, theta, Mn, mn)[(0, 0)]


def theta_hat0(alpha, Mn, mn, tol=1e-14, max_iter=60):
    """The equilateral critical angle: the root of dV0/dtheta near pi/3."""
    if mn == 0.0:
        return np.pi / 3.0
    th = np.pi / 3.0
    for _ in range(max_iter):
        parts = V0_partials(alpha, th, Mn, mn)
        g, gp = parts[(0, 1)], parts[(0, 2)]
        step = g / gp
        th -= step
        if abs(step) < tol:
            return float(th)
    raise NewtonDiverged("theta_hat0 Newton did not converge")


def coupling_A(masses, z, zbar=None):
    """A_n-type coupling: relative potential of a cluster against body k.

    ``masses`` are (m_0, ..., m_{k-1}, m_k); ``z`` the k-1 complex ratio
    arguments (r_l / r_k) e^{i phi_l}.  Returns the deviation from the
    Kepler term, zero when all z vanish... computed from the exact cluster
    geometry.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    k = z.size + 1
    m = np.asarray(masses, dtype=float)
    Msums = np.cumsum(m)
    total = m[0] / abs(1.0 + np.sum(m[1:k] / Msums[1:k] * z))
    for j in range(1, k):
        inner = np.sum(m[j:k] / Msums[j:k] * z[j - 1:])
        total += m[j] / abs(1.0 - z[j - 1] + inner)
    return total - Msums[k - 1]


def potential_parts(system, rhat, r_n, r_np1, phis, theta_n):
    """(U_hat, U_n, U_{n+1}, V0-value) at a reduced polar configuration.

    ``rhat``/``phis``: inner radii and angles relative to theta_{n+1}
    (length n-1); ``theta_n`` the escape-pair relative angle.  At n = 1 the
    inner cluster is a single body and U_hat = 0.
    """
    n = system.n
    m = system.masses
    Mn = system.M(n)
    Mnp1 = system.M(n + 1)
    # inner cluster potential U_hat via exact pairwise geometry
    U_hat = 0.0
    if n >= 2:
        from .system import jacobi_inverse, jacobi_from_polar

        qts = [np.zeros(2)]
        for j in range(1, n):
            qt, _ = jacobi_from_polar(rhat[j - 1], phis[j - 1], 0.0, 0.0)
            qts.append(qt)
        inner_sys = NBodyInner(m[:n])
        q, _ = jacobi_inverse(inner_sys, np.asarray(qts), np.zeros((n, 2)))
        for i in range(n):
            for j in range(i + 1, n):
                U_hat += m[i] * m[j] / np.linalg.norm(q[i] - q[j])
    # U_n and U_{n+1} via the coupling functions
    zs_n = [(rhat[l] / r_n) * np.exp(1j * (phis[l] - theta_n))
            for l in range(n - 1)]
    A_n = coupling_A(m[: n + 1], zs_n) if n >= 2 else 0.0
    U_n = m[n] * Mn / r_n + m[n] / r_n * A_n
    zs_np1 = [(rhat[l] / r_np1) * np.exp(1j * phis[l]) for l in range(n - 1)]
    zs_np1.append((r_n / r_np1) * np.exp(1j * theta_n))
    A_np1 = coupling_A(m[: n + 2], zs_np1)
    U_np1 = m[n + 1] * Mnp1 / r_np1 + m[n + 1] / r_np1 * A_np1
    v0 = V0((r_n / r_np1), theta_n, Mn, m[n])
    return {"U_hat": U_hat, "U_n": U_n, "U_np1": U_np1, "V0": v0,
            "A_n": A_n, "A_np1": A_np1}


class NBodyInner:
    """Lightweight mass container for inner-cluster Jacobi geometry."""

    def __init__(self, masses):
        self.masses = np.asarray(masses, dtype=float)
