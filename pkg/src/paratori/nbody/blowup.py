"""Double McGehee regularization and the blown-up escape field (n = 1 exact).

At n = 1 the reduced Hamiltonian in double McGehee variables

    r_n = 2 alpha_n / x_n^2,  y_n -> beta_n y_n,   (same for n+1)

is exactly

    H = kc1 y_n^2 + kc2 y_p^2 + kq1 (G0+g)^2 x_n^4 + kq2 (Th-G0-g)^2 x_p^4
        - pc1 x_n^2 - pc2 x_p^2 - vc x_p^2 V0(ra x_p^2/x_n^2, theta),

with the 2-form -(4 a_k b_k / x_k^3) dx_k ^ dy_k + dtheta ^ dG: no averaging
remainder exists (the inner cluster is one body).  The blow-up chain

    x_p = x_n (A + x_n xi~),  y_p = y_n (B + x_n eta~),  y_n = x_n (nu + zeta),
    theta = theta0 + x_n theta~,  g = g~ / Gamma_n,      Z~ = V^{-1} Z

turns the field into  dx_n/dt = -nu x_n^4 + O5,  dZ~/dt = x_n^3 D Z~ + O5
with D diagonal; V is built by 2x2 eigenbases plus the Sylvester-type
coupling elimination, which must contract for small masses.
"""

from __future__ import annotations

import numpy as np

from ..errors import MassTooLarge, NoValidEll
from ..fourier import FourierMap, Frequency
from ..homogeneous import HomogeneousSum, HomogeneousTerm, Tail
from ..parametrization.models import FlowModel
from .potential import V0_partials


class McGeheeSystem:
    """Exact regularized Hamiltonian and vector field at n = 1."""

    state_names = ("x_n", "y_n", "x_p", "y_p", "theta", "g")

    def __init__(self, system, constants):
        self.system = system
        self.c = constants
        n = system.n
        if n != 1:
            raise ValueError("the fully numeric McGehee path runs at n = 1")
        c = constants
        self.mu_n = system.mu(1)
        self.mu_p = system.mu(2)
        self.Mn = system.M(1)
        self.mn = float(system.masses[1])
        self.mp = float(system.masses[2])
        self.kc1 = c.beta_n**2 / (2.0 * self.mu_n)
        self.kc2 = c.beta_np1**2 / (2.0 * self.mu_p)
        # angular kinetic term G^2/(2 mu r^2) with r = 2 alpha/x^2:
        # the coefficient is 1/(8 alpha^2 mu)
        self.kq1 = 1.0 / (8.0 * c.alpha_n**2 * self.mu_n)
        self.kq2 = 1.0 / (8.0 * c.alpha_np1**2 * self.mu_p)
        self.pc1 = self.mn * self.Mn / (2.0 * c.alpha_n)
        self.pc2 = self.mp * system.M(2) / (2.0 * c.alpha_np1)
        self.vc = self.mp / (2.0 * c.alpha_np1)
        self.ra = c.alpha_n / c.alpha_np1
        self.cf_n = 1.0 / (4.0 * c.alpha_n * c.beta_n)
        self.cf_p = 1.0 / (4.0 * c.alpha_np1 * c.beta_np1)
        self.Theta = float(system.Theta)
        self.G0 = c.Gn0

    def _v0(self, state, orders=2):
        xn, _, xp, _, th, _ = state
        alpha = self.ra * xp**2 / xn**2
        return V0_partials(alpha, th, self.Mn, self.mn)

    def hamiltonian(self, state):
        xn, yn, xp, yp, th, g = state
        vp = self._v0(state)
        return (self.kc1 * yn**2 + self.kc2 * yp**2
                + self.kq1 * (self.G0 + g) ** 2 * xn**4
                + self.kq2 * (self.Theta - self.G0 - g) ** 2 * xp**4
                - self.pc1 * xn**2 - self.pc2 * xp**2
                - self.vc * xp**2 * vp[(0, 0)])

    def rhs(self, state):
        """Equations of motion from the McGehee 2-form (complex-capable)."""
        xn, yn, xp, yp, th, g = state
        vp = self._v0(state)
        v00, v10, v01 = vp[(0, 0)], vp[(1, 0)], vp[(0, 1)]
        alpha = self.ra * xp**2 / xn**2
        # dH/dx_n includes the V0 chain term d alpha/d x_n = -2 alpha / x_n
        dH_xn = (4.0 * self.kq1 * (self.G0 + g) ** 2 * xn**3
                 - 2.0 * self.pc1 * xn
                 + 2.0 * self.vc * xp**2 * v10 * alpha / xn)
        dH_xp = (4.0 * self.kq2 * (self.Theta - self.G0 - g) ** 2 * xp**3
                 - 2.0 * self.pc2 * xp
                 - 2.0 * self.vc * xp * v00
                 - 2.0 * self.vc * xp * v10 * alpha)
        dH_yn = 2.0 * self.kc1 * yn
        dH_yp = 2.0 * self.kc2 * yp
        dH_th = -self.vc * xp**2 * v01
        dH_g = (2.0 * self.kq1 * (self.G0 + g) * xn**4
                - 2.0 * self.kq2 * (self.Theta - self.G0 - g) * xp**4)
        return np.array([
            -self.cf_n * xn**3 * dH_yn,
            self.cf_n * xn**3 * dH_xn,
            -self.cf_p * xp**3 * dH_yp,
            self.cf_p * xp**3 * dH_xp,
            dH_g,
            -dH_th,
        ])

    # -- coordinate bridges --------------------------------------------------

    def to_polar(self, state):
        """(r_n, y_n, r_p, y_p, theta_n, G_n) from a McGehee state."""
        xn, yn, xp, yp, th, g = state
        c = self.c
        return np.array([
            2.0 * c.alpha_n / xn**2, c.beta_n * yn,
            2.0 * c.alpha_np1 / xp**2, c.beta_np1 * yp,
            th, self.G0 + g,
        ])

    def from_polar(self, polar):
        rn, yn, rp, yp, th, Gn = polar
        c = self.c
        return np.array([
            np.sqrt(2.0 * c.alpha_n / rn), yn / c.beta_n,
            np.sqrt(2.0 * c.alpha_np1 / rp), yp / c.beta_np1,
            th, Gn - self.G0,
        ])


# ---------------------------------------------------------------------------
# linear normalization of the Z-block
# ---------------------------------------------------------------------------


def _eig2(block, prefer_desc=True):
    """Real eigen-decomposition of a 2x2 block, columns scaled to lead with 1."""
    w, V = np.linalg.eig(block)
    if np.iscomplexobj(w) and np.max(np.abs(w.imag)) > 1e-10:
        raise MassTooLarge("complex eigenvalues in the 2x2 diagonalization")
    w = w.real
    V = V.real
    order = np.argsort(-w) if prefer_desc else np.argsort(w)
    w = w[order]
    V = V[:, order]
    for c in range(2):
        lead = V[np.argmax(np.abs(V[:, c])), c]
        V[:, c] = V[:, c] / lead
    return w, V


def _sylvester_solve(A, B, C):
    """X with A X - X B = C (via the Kronecker system)."""
    k, l = C.shape
    M = np.kron(np.eye(l), A) - np.kron(B.T, np.eye(k))
    return np.linalg.solve(M, C.ravel(order="F")).reshape((k, l), order="F")


def block_diagonalize(M4, tol=1e-10, max_iter=100):
    """Paper-style normalization of the 4x4 (xi~, eta~, theta~, g~) matrix.

    2x2 eigenbases of the diagonal blocks, then the quadratic fixed point
    for the upper coupling block, then a lower-block Sylvester solve.
    Raises MassTooLarge when the coupling fixed point fails to contract.
    """
    w1, B1 = _eig2(M4[:2, :2])
    w2, B2 = _eig2(M4[2:, 2:])
    B = np.block([[B1, np.zeros((2, 2))], [np.zeros((2, 2)), B2]])
    Mh = np.linalg.solve(B, M4 @ B)
    M11, M12 = Mh[:2, :2], Mh[:2, 2:]
    M21, M22 = Mh[2:, :2], Mh[2:, 2:]
    X = np.zeros((2, 2))
    norm_prev = np.inf
    for _ in range(max_iter):
        rhs = -M12 + X @ M21 @ X
        X_new = _sylvester_solve(M11, M22, rhs)
        delta = np.max(np.abs(X_new - X))
        X = X_new
        if np.max(np.abs(X)) > 1.0 or (delta > norm_prev * 1.5 and delta > tol):
            raise MassTooLarge("coupling fixed point is not contracting")
        norm_prev = delta
        if delta < tol:
            break
    else:
        raise MassTooLarge("coupling fixed point did not converge")
    Atil = np.block([[np.eye(2), X], [np.zeros((2, 2)), np.eye(2)]])
    Mp = np.linalg.solve(Atil, Mh @ Atil)
    # re-diagonalize the (slightly perturbed) diagonal blocks
    w1b, C1 = _eig2(Mp[:2, :2])
    w2b, C2 = _eig2(Mp[2:, 2:])
    Btil = np.block([[C1, np.zeros((2, 2))], [np.zeros((2, 2)), C2]])
    Mpp = np.linalg.solve(Btil, Mp @ Btil)
    A21 = _sylvester_solve(Mpp[2:, 2:], Mpp[:2, :2], -Mpp[2:, :2])
    Ahat = np.block([[np.eye(2), np.zeros((2, 2))], [A21, np.eye(2)]])
    V4 = B @ Atil @ Btil @ Ahat
    D = np.linalg.solve(V4, M4 @ V4)
    off = D - np.diag(np.diag(D))
    if np.max(np.abs(off)) > 1e-6 * max(1.0, np.max(np.abs(np.diag(D)))):
        raise MassTooLarge(
            f"residual coupling {np.max(np.abs(off)):.2e} after normalization"
        )
    return np.diag(D).copy(), V4


class BlowupChart:
    """Blow-up coordinates (x_n, Z~) over the exact McGehee system."""

    znames = ("zeta^", "xi^", "eta^", "chi^", "ups^")

    def __init__(self, mcgehee, V5, eigvals):
        self.mc = mcgehee
        self.c = mcgehee.c
        self.V5 = V5
        self.V5_inv = np.linalg.inv(V5)
        self.eigvals = np.asarray(eigvals)   # diag of the Z~-block matrix

    def to_mcgehee(self, xn, Zt):
        c = self.c
        Z = self.V5 @ np.asarray(Zt)
        zeta, xit, etat, tht, gt = Z
        yn = xn * (c.nu + zeta)
        xp = xn * (c.A + xn * xit)
        yp = yn * (c.B + xn * etat)
        th = c.theta0 + xn * tht
        g = gt / c.Gamma_n
        return np.array([xn, yn, xp, yp, th, g])

    def from_mcgehee(self, state):
        c = self.c
        xn, yn, xp, yp, th, g = state
        zeta = yn / xn - c.nu
        xit = (xp / xn - c.A) / xn
        etat = (yp / yn - c.B) / xn
        tht = (th - c.theta0) / xn
        gt = g * c.Gamma_n
        Z = np.array([zeta, xit, etat, tht, gt])
        return xn, self.V5_inv @ Z

    def rhs(self, xn, Zt):
        """Pushforward of the exact McGehee field through the chart."""
        c = self.c
        state = self.to_mcgehee(xn, Zt)
        _, yn, xp, yp, th, g = state
        dxn, dyn, dxp, dyp, dth, dg = self.mc.rhs(state)
        dzeta = dyn / xn - yn * dxn / xn**2
        xi = xp / xn - c.A
        dxi = dxp / xn - xp * dxn / xn**2
        dxit = dxi / xn - xi * dxn / xn**2
        eta = yp / yn - c.B
        deta = dyp / yn - yp * dyn / yn**2
        detat = deta / xn - eta * dxn / xn**2
        dtht = dth / xn - (th - c.theta0) * dxn / xn**2
        dgt = c.Gamma_n * dg
        dZ = np.array([dzeta, dxit, detat, dtht, dgt])
        return dxn, self.V5_inv @ dZ

    def rhs_flat(self, s):
        dxn, dZt = self.rhs(s[0], s[1:])
        return np.concatenate([[dxn], dZt])


def extract_linear_block(chart_rhs_Z, x_values=(0.02, 0.01, 0.005), fd_step=1e-6):
    """Leading matrix of dZ/dt = x^3 M Z + O5 by Richardson in x.

    ``chart_rhs_Z(x, Z)`` returns dZ/dt (length 5); the Jacobian at Z = 0 is
    x^3 (M + x M1 + x^2 M2 + ...), fitted over three x-values.
    """
    mats = []
    for x in x_values:
        J = np.zeros((5, 5))
        for c in range(5):
            e = np.zeros(5)
            e[c] = fd_step
            J[:, c] = (chart_rhs_Z(x, e) - chart_rhs_Z(x, -e)) / (2 * fd_step)
        mats.append(J / x**3)
    xs = np.asarray(x_values)
    # quadratic Richardson: solve for the x -> 0 limit entrywise
    Vander = np.vander(xs, 3, increasing=True)
    coef = np.linalg.solve(Vander, np.stack([m.ravel() for m in mats]))
    return coef[0].reshape(5, 5)


def blowup_field(system, constants, ell=None, q_declared=12,
                 tail_order_check=True):
    """FlowModel of the blown-up escape field plus the chart.

    Collinear branch: N = M = P = 4 on variables x = (x_n, eta^),
    y = (zeta^, xi^, chi^, ups^).  Equilateral branch: x_n = xhat^ell chart
    with N = M = P = 3 ell + 1 and x = (xhat, eta^, ups^), y the rest;
    ``ell`` defaults to the smallest value with nu/ell < gamma2.
    """
    mc = McGeheeSystem(system, constants)

    # pre-diagonalization Z-dynamics
    def raw_rhs_Z(x, Z):
        zeta, xit, etat, tht, gt = Z
        c = constants
        yn = x * (c.nu + zeta)
        xp = x * (c.A + x * xit)
        yp = yn * (c.B + x * etat)
        th = c.theta0 + x * tht
        g = gt / c.Gamma_n
        state = np.array([x, yn, xp, yp, th, g])
        dxn, dyn, dxp, dyp, dth, dg = mc.rhs(state)
        dzeta = dyn / x - yn * dxn / x**2
        xi = xp / x - c.A
        dxi = dxp / x - xp * dxn / x**2
        dxit = dxi / x - xi * dxn / x**2
        eta = yp / yn - c.B
        deta = dyp / yn - yp * dyn / yn**2
        detat = deta / x - eta * dxn / x**2
        dtht = dth / x - (th - c.theta0) * dxn / x**2
        dgt = c.Gamma_n * dg
        return np.array([dzeta, dxit, detat, dtht, dgt])

    Mbar = extract_linear_block(raw_rhs_Z)
    # zeta decouples at this order; verify and normalize the 4x4 block
    zeta_coupling = max(np.max(np.abs(Mbar[0, 1:])), np.max(np.abs(Mbar[1:, 0])))
    scale = np.max(np.abs(Mbar))
    if zeta_coupling > 1e-5 * scale:
        raise MassTooLarge(f"unexpected zeta coupling {zeta_coupling:.2e}")
    eig4, V4 = block_diagonalize(Mbar[1:, 1:])
    V5 = np.eye(5)
    V5[1:, 1:] = V4
    eigvals = np.concatenate([[Mbar[0, 0]], eig4])
    chart = BlowupChart(mc, V5, eigvals)

    # stable directions: x_n (rate nu) and the negative eigenvalues
    idx_sorted = np.argsort(-eigvals)  # descending
    neg = [i for i in range(5) if eigvals[i] < 0]
    pos = [i for i in range(5) if eigvals[i] >= 0]
    if system.config == "collinear":
        if len(neg) != 1:
            raise MassTooLarge(
                f"collinear branch expects one negative Z-eigenvalue, got {neg}"
            )
        x_idx = [neg[0]]
        y_idx = sorted(pos, key=lambda i: -eigvals[i])
        N = 4
        perm = x_idx + y_idx           # Z~-indices: model x2, then y-block
        lam_x = [constants.nu, -eigvals[neg[0]]]
        lam_y = [eigvals[i] for i in y_idx]

        def to_model(xn, Zt):
            return np.concatenate([[xn], np.asarray(Zt)[perm]])

        def from_model(u):
            Zt = np.zeros(5, dtype=np.asarray(u).dtype)
            for slot, zi in enumerate(perm):
                Zt[zi] = u[1 + slot]
            return u[0], Zt

        def model_rhs(u):
            xn, Zt = from_model(u)
            dxn, dZt = chart.rhs(xn, Zt)
            return np.concatenate([[dxn], np.asarray(dZt)[perm]])

        nvars, mvars = 2, 4
    else:
        if constants.gamma2 <= 0:
            raise NoValidEll("equilateral chart needs gamma2 > 0")
        if ell is None:
            ell = int(np.ceil(constants.nu / constants.gamma2)) + 1
        if constants.nu / ell >= constants.gamma2:
            raise NoValidEll(
                f"nu/ell = {constants.nu / ell:.3e} not below gamma2 = "
                f"{constants.gamma2:.3e}"
            )
        # slow stable direction ups^ joins the x-block
        neg_sorted = sorted(neg, key=lambda i: eigvals[i])
        if len(neg) != 2:
            raise MassTooLarge(
                f"equilateral branch expects two negative Z-eigenvalues, got {neg}"
            )
        x_idx = neg_sorted  # eta^ (about -2), ups^ (about -gamma2)
        y_idx = sorted(pos, key=lambda i: -eigvals[i])
        N = 3 * ell + 1
        perm = x_idx + y_idx
        lam_x = [constants.nu / ell, -eigvals[x_idx[0]], -eigvals[x_idx[1]]]
        lam_y = [eigvals[i] for i in y_idx]

        def to_model(xn, Zt):
            return np.concatenate([[xn ** (1.0 / ell)], np.asarray(Zt)[perm]])

        def from_model(u):
            Zt = np.zeros(5, dtype=np.asarray(u).dtype)
            for slot, zi in enumerate(perm):
                Zt[zi] = u[1 + slot]
            return u[0] ** ell, Zt

        def model_rhs(u):
            xn, Zt = from_model(u)
            dxn, dZt = chart.rhs(xn, Zt)
            dxhat = dxn / (ell * u[0] ** (ell - 1))
            return np.concatenate([[dxhat], np.asarray(dZt)[perm]])

        nvars, mvars = 3, 3

    nm = nvars + mvars
    lead_deg = N

    def mono(i_var, coeff):
        exps = [0] * nm
        exps[0] = lead_deg - 1
        exps[i_var] += 1
        return HomogeneousTerm.poly(lead_deg, nm, {tuple(exps): coeff})

    f_sums = []
    for i in range(nvars):
        term = mono(i, -lam_x[i])
        fm = FourierMap(0, 0, {(): term})
        tail = _leading_tail(model_rhs, i, term, nm)
        f_sums.append(HomogeneousSum(nm, 0, 0, [(lead_deg, fm)],
                                     Tail(lead_deg + 1, tail)))
    g_sums = []
    for b in range(mvars):
        term = mono(nvars + b, lam_y[b])
        fm = FourierMap(0, 0, {(): term})
        tail = _leading_tail(model_rhs, nvars + b, term, nm)
        g_sums.append(HomogeneousSum(nm, 0, 0, [(lead_deg, fm)],
                                     Tail(lead_deg + 1, tail)))

    model = FlowModel(nvars, mvars, 0, N, N, N, q_declared,
                      Frequency(np.zeros(0)), f_sums, g_sums, [],
                      truncation=0, name=f"blownup-{system.config}")
    model.chart = chart
    model.to_model = to_model
    model.from_model = from_model
    model.model_rhs = model_rhs
    model.eigvals = eigvals
    model.perm = perm
    model.ell = ell if system.config == "equilateral" else None
    model.lam_x = lam_x
    model.lam_y = lam_y

    if tail_order_check:
        model.tail_check = check_tail_orders(model)
    return model


def _leading_tail(model_rhs, comp, lead_term, nm):
    def tail(u, theta=None, _c=comp, _t=lead_term):
        u = np.asarray(u)
        return model_rhs(u)[_c] - _t.evaluate(u)

    return tail


def check_tail_orders(model, radii=None, direction=None, min_slope=None):
    """Runtime check that every tail is O(|u|^{N+1}) along a cone ray."""
    nm = model.n + model.m
    if direction is None:
        direction = np.zeros(nm)
        direction[0] = 1.0
        direction[1:] = 0.05
        direction /= np.linalg.norm(direction)
    radii = radii if radii is not None else np.geomspace(3e-3, 3e-2, 6)
    min_slope = (model.N + 1 - 0.25) if min_slope is None else min_slope
    slopes = []
    for comps in (model.f, model.g):
        for s in comps:
            vals = [abs(np.asarray(s.tail(r * direction, None))) + 1e-300
                    for r in radii]
            sl = np.polyfit(np.log(radii), np.log(vals), 1)[0]
            slopes.append(float(sl))
    return {"slopes": slopes, "min_required": float(min_slope),
            "ok": bool(all(s >= min_slope for s in slopes))}
