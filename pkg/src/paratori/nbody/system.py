"""Planar (n+2)-body problem: Cartesian Hamiltonian, Jacobi coordinates,
symplectic polar variables and the angular-momentum-reduced Hamiltonian.

Conventions: gravitational constant 1; planar positions/momenta as (k, 2)
arrays; body n and n+1 are the two escaping bodies, bodies 0..n-1 the inner
cluster (a single body at n = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import Collision


@dataclass
class NBodySystem:
    masses: np.ndarray
    Theta: float = 0.0            # total angular momentum
    config: str = "collinear"     # or "equilateral"

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)
        if np.any(self.masses <= 0.0):
            raise ValueError("all masses must be positive")
        if self.config not in ("collinear", "equilateral"):
            raise ValueError("config must be collinear or equilateral")

    @property
    def n(self):
        return self.masses.size - 2

    def M(self, j):
        """Partial mass sum M_j = sum_{l < j} m_l."""
        return float(np.sum(self.masses[:j]))

    def mu(self, j):
        """Reduced mass 1/mu_j = 1/M_j + 1/m_j."""
        Mj, mj = self.M(j), self.masses[j]
        return Mj * mj / (Mj + mj)


# ---------------------------------------------------------------------------
# Jacobi coordinates
# ---------------------------------------------------------------------------


def jacobi_matrix(masses):
    """Matrix A with q_tilde = A q (per planar coordinate)."""
    k = len(masses)
    A = np.zeros((k, k))
    A[0, 0] = 1.0
    for j in range(1, k):
        Mj = np.sum(masses[:j])
        A[j, j] = 1.0
        A[j, :j] = -masses[:j] / Mj
    return A


def jacobi(system, q, p):
    """(q, p) -> (q_tilde, p_tilde); symplectic via p_tilde = A^{-T} p."""
    A = jacobi_matrix(system.masses)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    qt = A @ q
    pt = np.linalg.solve(A.T, p)
    return qt, pt


def jacobi_inverse(system, qt, pt):
    A = jacobi_matrix(system.masses)
    q = np.linalg.solve(A, np.asarray(qt, dtype=float))
    p = A.T @ np.asarray(pt, dtype=float)
    return q, p


# ---------------------------------------------------------------------------
# Cartesian Hamiltonian and first integrals
# ---------------------------------------------------------------------------


def potential(system, q, min_distance=1e-12):
    q = np.asarray(q, dtype=float)
    U = 0.0
    k = q.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            d = np.linalg.norm(q[i] - q[j])
            if d <= min_distance:
                raise Collision(f"bodies {i} and {j} at distance {d:.3e}")
            U += system.masses[i] * system.masses[j] / d
    return U


def hamiltonian(system, q, p):
    """Total energy T(p) - U(q)."""
    p = np.asarray(p, dtype=float)
    T = 0.5 * np.sum(np.sum(p**2, axis=1) / system.masses)
    return T - potential(system, q)


def first_integrals(system, q, p):
    """(total linear momentum, total angular momentum)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    lin = p.sum(axis=0)
    ang = float(np.sum(q[:, 0] * p[:, 1] - q[:, 1] * p[:, 0]))
    return lin, ang


def cartesian_rhs(system, state):
    """First-order Newtonian equations in (q, p), state flattened."""
    k = system.masses.size
    q = state[: 2 * k].reshape(k, 2)
    p = state[2 * k:].reshape(k, 2)
    dq = p / system.masses[:, None]
    dp = np.zeros_like(q)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            diff = q[j] - q[i]
            d3 = np.linalg.norm(diff) ** 3
            dp[i] += system.masses[i] * system.masses[j] * diff / d3
    return np.concatenate([dq.ravel(), dp.ravel()])


# ---------------------------------------------------------------------------
# symplectic polar variables on each Jacobi pair
# ---------------------------------------------------------------------------


def polar_from_jacobi(qt_j, pt_j):
    """(r, theta, y, G) from one Jacobi position/momentum pair."""
    r = float(np.linalg.norm(qt_j))
    theta = float(np.arctan2(qt_j[1], qt_j[0]))
    unit = qt_j / r
    y = float(pt_j @ unit)
    G = float(qt_j[0] * pt_j[1] - qt_j[1] * pt_j[0])
    return r, theta, y, G


def jacobi_from_polar(r, theta, y, G):
    unit = np.array([np.cos(theta), np.sin(theta)])
    perp = np.array([-unit[1], unit[0]])
    qt = r * unit
    pt = y * unit + (G / r) * perp
    return qt, pt


# ---------------------------------------------------------------------------
# angular-momentum-reduced Hamiltonian
# ---------------------------------------------------------------------------


class ReducedHamiltonian:
    """Reduced Hamiltonian after fixing the total angular momentum Theta.

    Variables: inner polar pairs (r_i, y_i, theta_i - theta_{n+1}, G_i) for
    i = 1..n-1, the two escape pairs (r_n, y_n), (r_{n+1}, y_{n+1}), the
    relative angle theta_n (of pair n against pair n+1) and G_n; G_{n+1} is
    eliminated through Theta.  The cyclic angle theta_{n+1} is a gauge choice
    (the evaluator is exactly independent of it).
    """

    def __init__(self, system):
        self.system = system
        self.n = system.n

    def evaluate(self, r, y, theta_rel, G, theta_np1=0.0):
        """Energy at polar state; arrays indexed 1..n+1 (position 0 unused).

        ``theta_rel[i]`` is theta_i - theta_{n+1} for i = 1..n;
        ``G[n+1]`` is ignored and replaced by Theta - sum(G[1..n]).
        """
        sysm = self.system
        k = self.n + 2
        T = 0.0
        Gfull = np.array(G, dtype=float)
        Gfull[self.n + 1] = sysm.Theta - np.sum(Gfull[1: self.n + 1])
        qts = [np.zeros(2)]  # q_tilde_0 (center of mass chart, unused)
        pts = [np.zeros(2)]
        for j in range(1, k):
            theta_j = theta_rel[j] + theta_np1 if j <= self.n else theta_np1
            qt, pt = jacobi_from_polar(r[j], theta_j, y[j], Gfull[j])
            qts.append(qt)
            pts.append(pt)
            T += 0.5 / sysm.mu(j) * (y[j] ** 2 + Gfull[j] ** 2 / r[j] ** 2)
        q, _ = jacobi_inverse(sysm, np.asarray(qts), np.asarray(pts))
        return T - potential(sysm, q)

    def rhs_fd(self, r, y, theta_rel, G, step=1e-7):
        """Hamiltonian vector field by finite-difference partials.

        Independent of any hand-derived gradient; pairs (r_j, y_j) and
        (theta_j, G_j) are canonically conjugate.
        """
        n = self.n

        def H(rv, yv, tv, Gv):
            return self.evaluate(rv, yv, tv, Gv)

        def d(fun, arr, idx):
            a1 = np.array(arr, dtype=float)
            a2 = np.array(arr, dtype=float)
            h = step * max(1.0, abs(arr[idx]))
            a1[idx] += h
            a2[idx] -= h
            return (fun(a1) - fun(a2)) / (2 * h)

        dr = np.zeros_like(np.asarray(r, dtype=float))
        dy = np.zeros_like(dr)
        dth = np.zeros_like(dr)
        dG = np.zeros_like(dr)
        for j in range(1, n + 2):
            dr[j] = d(lambda a: H(r, a, theta_rel, G), np.asarray(y, float), j)
            dy[j] = -d(lambda a: H(a, y, theta_rel, G), np.asarray(r, float), j)
            if j <= n:
                dth[j] = d(lambda a: H(r, y, theta_rel, a), np.asarray(G, float), j)
                dG[j] = -d(lambda a: H(r, y, a, G), np.asarray(theta_rel, float), j)
        return dr, dy, dth, dG


def reduce(system):
    """Reduced Hamiltonian evaluator (theta_{n+1} eliminated through Theta)."""
    return ReducedHamiltonian(system)
