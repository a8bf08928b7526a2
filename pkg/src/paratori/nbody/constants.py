"""Central-configuration constants of the double McGehee regularization.

The scaling constants alpha/beta fix the two Kepler terms to unit strength;
the pair (A, B) solves

    A^3 B = A,
    (1 + V0/M_{n+1} + ra A^2 dV0/M_{n+1}) A^4 = (1 - c2 dV0 A^4) B,

with V0, dV0 = dV0/dalpha evaluated at (ra A^2, theta0), ra = alpha_n /
alpha_{n+1}, c2 = m_{n+1}/(4 alpha_{n+1}^2 beta_n); the branch chooses
theta0 = pi (collinear) or the near-pi/3 critical angle (equilateral).
Newton from (1, 1) with step damping; the zero-mass limit is A = B = 1
exactly with V0 identically zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NewtonDiverged
from .potential import V0_partials, theta_hat0


@dataclass
class CentralConfigConstants:
    branch: str
    A: float
    B: float
    theta0: float
    alpha_n: float
    beta_n: float
    alpha_np1: float
    beta_np1: float
    Gn0: float
    Theta00: float
    nu: float
    Gamma_n: float
    gamma1: float
    gamma2: float
    v_partials: dict = field(default_factory=dict)
    newton_residual: float = np.nan
    newton_iterations: int = 0
    mass_warning: bool = False

    def to_json_dict(self):
        out = {k: (float(v) if np.isscalar(v) or isinstance(v, float) else v)
               for k, v in self.__dict__.items() if k != "v_partials"}
        out["v_partials"] = {f"{i}{j}": float(v)
                             for (i, j), v in self.v_partials.items()}
        return out


def scaling_constants(system):
    """alpha_n, beta_n, alpha_{n+1}, beta_{n+1} from the implicit conditions."""
    n = system.n
    Mn1 = system.M(n + 1)
    Mn2 = system.M(n + 2)
    Mn = system.M(n)
    mn = system.masses[n]
    mp = system.masses[n + 1]
    alpha_n = 2.0 ** (-4.0 / 3.0) * Mn1 ** (1.0 / 3.0)
    beta_n = 2.0 ** (2.0 / 3.0) * Mn * mn / Mn1 ** (2.0 / 3.0)
    alpha_np1 = 2.0 ** (-4.0 / 3.0) * Mn2 ** (1.0 / 3.0)
    beta_np1 = 2.0 ** (2.0 / 3.0) * Mn1 * mp / Mn2 ** (2.0 / 3.0)
    return alpha_n, beta_n, alpha_np1, beta_np1


def central_config_constants(system, Theta_tilde00=None, mass_threshold=0.1,
                             tol=1e-13, max_iter=80):
    """All constants of the regularized escape for the system's branch.

    ``Theta_tilde00`` defaults to the total angular momentum at n = 1 (the
    inner torus is a single body); for n >= 2 it must be supplied from the
    inner-torus data.
    """
    n = system.n
    Mn = system.M(n)
    mn = float(system.masses[n])
    mp = float(system.masses[n + 1])
    alpha_n, beta_n, alpha_np1, beta_np1 = scaling_constants(system)
    ra = alpha_n / alpha_np1
    mu_n = system.mu(n)
    mu_p = system.mu(n + 1)
    if Theta_tilde00 is None:
        if n != 1:
            raise ValueError("Theta_tilde00 required for n >= 2")
        Theta00 = float(system.Theta)
    else:
        Theta00 = float(Theta_tilde00)
    branch = system.config
    mass_warning = max(mn, mp) > mass_threshold

    if mn == 0.0 or mp == 0.0:
        # V0 vanishes identically when m_n = 0; both equations force A=B=1
        theta0 = np.pi if branch == "collinear" else np.pi / 3.0
        vp = {k: 0.0 for k in [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}
        return CentralConfigConstants(
            branch, 1.0, 1.0, theta0, alpha_n, beta_n, alpha_np1, beta_np1,
            Gn0=np.nan, Theta00=Theta00, nu=1.0, Gamma_n=np.inf,
            gamma1=0.0, gamma2=0.0, v_partials=vp,
            newton_residual=0.0, newton_iterations=0,
            mass_warning=mass_warning,
        )

    c1 = 1.0 / system.M(n + 1)          # m_{n+1} / (4 alpha_{n+1}^2 beta_{n+1})
    c2 = mp / (4.0 * alpha_np1**2 * beta_n)

    def theta_of(A):
        if branch == "collinear":
            return np.pi
        return theta_hat0(ra * A**2, Mn, mn)

    def residual(AB):
        A, B = AB
        th = theta_of(A)
        vp = V0_partials(ra * A**2, th, Mn, mn)
        F1 = A**3 * B - A
        lhs = (1.0 + c1 * vp[(0, 0)] + c1 * ra * vp[(1, 0)] * A**2) * A**4
        rhs = (1.0 - c2 * vp[(1, 0)] * A**4) * B
        return np.array([F1, lhs - rhs])

    AB = np.array([1.0, 1.0])
    res = residual(AB)
    it = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(res)) < tol:
            break
        J = np.zeros((2, 2))
        h = 1e-8
        for c in range(2):
            pert = AB.copy()
            pert[c] += h
            J[:, c] = (residual(pert) - res) / h
        try:
            step = np.linalg.solve(J, res)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged(str(exc)) from exc
        lam = 1.0
        for _ in range(40):
            cand = AB - lam * step
            cand_res = residual(cand)
            if np.max(np.abs(cand_res)) < np.max(np.abs(res)):
                AB, res = cand, cand_res
                break
            lam *= 0.5
        else:
            raise NewtonDiverged("damped Newton for (A, B) stalled")
    else:
        raise NewtonDiverged(
            f"(A, B) Newton did not reach {tol:.1e} in {max_iter} iterations"
        )
    A, B = AB
    theta0 = theta_of(A)
    vp = V0_partials(ra * A**2, theta0, Mn, mn)
    nu = float(np.sqrt(1.0 - c2 * A**4 * vp[(1, 0)]))
    inv_n = 1.0 / (alpha_n**2 * mu_n)
    inv_p = A**4 / (alpha_np1**2 * mu_p)
    Gamma_n = 0.5 * (inv_n + inv_p)
    Gn0 = Theta00 * inv_p / (inv_n + inv_p)
    gamma1 = (alpha_n / alpha_np1**2) * mp * A**3 * vp[(1, 1)] * Gamma_n
    gamma2 = mp * A**2 * vp[(0, 2)] * Gamma_n / (2.0 * alpha_np1)
    return CentralConfigConstants(
        branch, float(A), float(B), float(theta0),
        alpha_n, beta_n, alpha_np1, beta_np1,
        Gn0=float(Gn0), Theta00=Theta00, nu=nu, Gamma_n=float(Gamma_n),
        gamma1=float(gamma1), gamma2=float(gamma2),
        v_partials=vp, newton_residual=float(np.max(np.abs(res))),
        newton_iterations=it, mass_warning=mass_warning,
    )
