"""Order-by-order construction of the parametrization (K, R) / (K, Y).

At step j the cohomological equations are solved in the triangular order
y -> theta -> x.  Rather than assembling the coupling functional explicitly,
the residual is recomputed after every term addition, so each sub-step always
consumes the *current* residual part at its degree; the completion sweeps
that push every component to the single exponent O(|u|^{j+N}) then reuse the
same sub-steps.

Two engines share the loop:

* exact (n = 1, poly data, any number of angles): residuals are computed in
  closed form with the truncated Fourier-polynomial algebra;
* sampled (flows with no angle dependence, n <= 2): residual degree parts are
  extracted along section rays by a complex-radius Cauchy/FFT rule, and the
  averaged equations are solved by the homogeneous-coefficient PDE
  quadrature.
"""

from __future__ import annotations

import numpy as np

from ..cohomology import PDEProblem, solve_pde
from ..cones import derived_indices, estimate_constants
from ..errors import DivergenceRisk, HypothesisFail, SingularGbar
from ..fourier import FourierMap, solve_small_divisors_flow, solve_small_divisors_map
from ..homogeneous import (
    ArcSection,
    HomogeneousSum,
    HomogeneousTerm,
    hs_mul,
    truncated_compose,
)
from .models import (
    Parametrization,
    empty_sums,
    identity_sum,
    stack_terms,
    unstack_term,
)

TWO_PI_I = 2.0j * np.pi


class _Builder:
    def __init__(self, model, j_target, cone, constants=None, section=None,
                 free_terms=None, circle_radius=0.08, n_circle=None,
                 divisor_floor=1e-8, zero_tol=1e-12):
        self.model = model
        self.kind = model.kind
        self.j_target = int(j_target)
        if self.j_target > model.q - model.N:
            raise ValueError("j_target must be at most q - N")
        self.cone = cone
        self.n, self.m, self.d = model.n, model.m, model.d
        self.adim = model.freq_dim
        self.trunc = model.truncation
        self.free_terms = dict(free_terms or {})
        self.circle_radius = circle_radius
        self.n_circle = n_circle
        self.divisor_floor = divisor_floor
        self.zero_tol = zero_tol
        self.free_choices = {}
        self.notes = []

        self.exact = model.is_poly() and self.n == 1
        if not self.exact:
            if self.kind == "map":
                raise HypothesisFail(
                    "map construction beyond n=1 poly data is not supported; "
                    "use the flow engine or the time-1 reduction"
                )
            if self.adim != 0:
                raise HypothesisFail(
                    "sampled flow engine requires no angle dependence (d = d' = 0)"
                )
            if section is None:
                if self.n == 1:
                    from ..homogeneous import PointSection

                    section = PointSection()
                elif self.n == 2:
                    phi = np.arctan(cone.aperture)
                    section = ArcSection(-phi, phi, n_nodes=17)
                else:
                    raise HypothesisFail("sampled engine implemented for n <= 2")
            self.section = section

        # hypothesis gate
        self.constants = constants
        if self.constants is None:
            self.constants = estimate_constants(model, cone)
        if self.constants.a_f <= 0:
            raise HypothesisFail(f"weak contraction fails: a_f={self.constants.a_f:.3e}")
        derived_indices(self.constants, model.N, model.M, model.P)
        self.j_star = self.constants.j_star_u
        self.fallback = False
        if self.constants.A_f <= self.constants.b_f:
            if model.M == model.N:
                raise HypothesisFail(
                    "A_f <= b_f with M = N: no analytic construction available"
                )
            self.fallback = True
            self.notes.append(
                "A_f <= b_f: using the non-minimal solution (R carries the averages)"
            )
        if model.M == model.N and model.m > 0:
            if 2.0 + self.constants.B_g / self.constants.a_f <= 0:
                raise HypothesisFail("2 + B_g/a_f <= 0")
        if model.M < model.N and model.m > 0:
            for x in cone.sample_points():
                dg = np.atleast_2d(model.dy_gbar_lead(x))
                if np.linalg.cond(dg) > 1e12:
                    raise SingularGbar(f"d_y gbar^M singular near {x}")

        # state
        self.Kx = empty_sums(self.n, self.n, self.adim, self.trunc)
        self.Ky = empty_sums(self.m, self.n, self.adim, self.trunc)
        self.Kth = empty_sums(self.d, self.n, self.adim, self.trunc)
        self.Iu = empty_sums(self.n, self.n, self.adim, self.trunc)  # R_u or Y_u
        self.Ith = empty_sums(self.d, self.n, self.adim, self.trunc)
        self._resid_cache = None

        # PDE data shared across steps (sampled engine)
        if not self.exact:
            self._p_term = model.fbar_term()
            self._q_y = model.dy_gbar_term() if self.m else None
            self._q_x = model.dx_fbar_term()
            self._pde_consts = {}

    # -- residuals -----------------------------------------------------------

    def _invalidate(self):
        self._resid_cache = None

    def _qmax(self):
        return min(self.model.q, self.j_target + self.model.N)

    def _exact_residual(self):
        if self._resid_cache is not None:
            return self._resid_cache
        q = self._qmax()
        model = self.model
        Kx_full = [identity_sum(self.n, i, self.adim, self.trunc).add(self.Kx[i])
                   for i in range(self.n)]
        inner = Kx_full + self.Ky
        ang = self.Kth if (self.d and any(s.terms for s in self.Kth)) else None
        if ang is not None and self.adim > self.d:
            # quasiperiodic flow: the tau axes substitute trivially
            ang = list(self.Kth) + [HomogeneousSum(self.n, self.adim, self.trunc)
                                    for _ in range(self.adim - self.d)]

        def comp(outer):
            return truncated_compose(outer, inner, q, angle_inner=ang,
                                     new_var_dim=self.n).drop_tail()

        FX = [comp(s) for s in model.f]
        GY = [comp(s) for s in model.g]
        HTH = [comp(s) for s in model.h]
        if self.kind == "map":
            Ru_full = [identity_sum(self.n, i, self.adim, self.trunc).add(self.Iu[i])
                       for i in range(self.n)]
            ang_R = self.Ith if (self.d and any(s.terms for s in self.Ith)) else None
            if self.d:
                shift = np.concatenate([model.freq.omega,
                                        np.zeros(self.adim - self.d)])
                if ang_R is not None and self.adim > self.d:
                    ang_R = list(self.Ith) + [
                        HomogeneousSum(self.n, self.adim, self.trunc)
                        for _ in range(self.adim - self.d)
                    ]
            else:
                shift = None

            def comp_R(outer):
                return truncated_compose(outer, Ru_full, q, angle_inner=ang_R,
                                         angle_shift=shift,
                                         new_var_dim=self.n).drop_tail()

            Ex = [Kx_full[i].add(FX[i]).add(comp_R(Kx_full[i]).scale(-1.0))
                  for i in range(self.n)]
            Ey = [self.Ky[b].add(GY[b]).add(comp_R(self.Ky[b]).scale(-1.0))
                  for b in range(self.m)]
            Eth = [self.Kth[a].add(HTH[a]).add(self.Ith[a].scale(-1.0))
                   .add(comp_R(self.Kth[a]).scale(-1.0)) for a in range(self.d)]
        else:
            omega = model.freq.omega
            nu = model.freq.time_freq

            def transport(s):
                # d_u s . Y_u + d_Theta s . (omega + Y_theta) + d_t s
                out = HomogeneousSum(self.n, self.adim, self.trunc)
                for i in range(self.n):
                    out = out.add(hs_mul(s.u_derivative(i), self.Iu[i], q))
                for a_ax in range(self.d):
                    ds = s.theta_derivative(a_ax)
                    out = out.add(ds.scale(omega[a_ax]))
                    out = out.add(hs_mul(ds, self.Ith[a_ax], q))
                if nu is not None:
                    for b_ax in range(nu.size):
                        out = out.add(s.theta_derivative(self.d + b_ax).scale(nu[b_ax]))
                return out

            Ex = [FX[i].add(self.Iu[i].scale(-1.0)).add(transport(self.Kx[i]).scale(-1.0))
                  for i in range(self.n)]
            Ey = [GY[b].add(transport(self.Ky[b]).scale(-1.0)) for b in range(self.m)]
            Eth = [HTH[a].add(self.Ith[a].scale(-1.0))
                   .add(transport(self.Kth[a]).scale(-1.0)) for a in range(self.d)]
        self._resid_cache = (Ex, Ey, Eth)
        return self._resid_cache

    def residual_ray(self, z, uhat):
        """Residual components along a ray (complex-capable), sampled engine."""
        model = self.model
        x = np.array([z * uhat[i] + self.Kx[i].evaluate_ray(z, uhat)
                      for i in range(self.n)])
        y = np.array([self.Ky[b].evaluate_ray(z, uhat) for b in range(self.m)])
        zfull = np.concatenate([x, y])
        X = np.array([s.evaluate_sum(zfull, np.zeros(0)) for s in model.f + model.g])
        Yu = np.array([self.Iu[i].evaluate_ray(z, uhat) for i in range(self.n)])
        jac = np.zeros((self.n + self.m, self.n), dtype=complex)
        for i in range(self.n):
            for a in range(self.n):
                jac[i, a] = self.Kx[i].u_derivative(a).evaluate_ray(z, uhat)
            jac[i, i] += 1.0
        for b in range(self.m):
            for a in range(self.n):
                jac[self.n + b, a] = self.Ky[b].u_derivative(a).evaluate_ray(z, uhat)
        return X - jac @ Yu

    def _sampled_parts(self, degree):
        """Degree part at the section nodes, via circle FFT in the radius."""
        P = self.n_circle if self.n_circle is not None else max(32, 2 * (degree + 6))
        r0 = self.circle_radius
        zs = r0 * np.exp(TWO_PI_I * np.arange(P) / P)
        values = []
        for uhat in self.section.nodes:
            samples = np.stack([self.residual_ray(z, uhat) for z in zs])
            coeff = np.fft.fft(samples, axis=0)[degree % P] / P / r0**degree
            values.append(coeff.real)
        return np.stack(values)  # (nodes, n+m)

    def e_parts(self, group, degree):
        """Current residual parts at one degree: one FourierMap per component."""
        if self.exact:
            Ex, Ey, Eth = self._exact_residual()
            comps = {"x": Ex, "y": Ey, "theta": Eth}[group]
            out = []
            for s in comps:
                fm = s.part(degree)
                out.append(fm if fm is not None else FourierMap(self.adim, self.trunc, {}))
            return out
        vals = self._sampled_parts(degree)  # (nodes, n+m)
        lo, hi = (0, self.n) if group == "x" else (self.n, self.n + self.m)
        out = []
        for c in range(lo, hi):
            if self.n == 1:
                coeff = vals[0, c]
                term = HomogeneousTerm.poly(degree, 1, {(degree,): coeff})
            else:
                term = HomogeneousTerm.ray(degree, self.section, vals[:, c])
            out.append(FourierMap(0, self.trunc, {(): term}, symmetrize=False))
        return out

    # -- solves ----------------------------------------------------------------

    def _avg_vector_term(self, parts, degree):
        """Stack average blocks of the parts into one vector-target term."""
        blocks = []
        total = 0.0
        for fm in parts:
            b = fm.average()
            if b is None:
                b = HomogeneousTerm.zero(degree, self.n)
            blocks.append(b)
            total += b.norm()
        if total <= self.zero_tol:
            return None
        return stack_terms(blocks)

    def _dsolve(self, fm):
        if self.kind == "map":
            return solve_small_divisors_map(fm, self.model.freq,
                                            divisor_floor=self.divisor_floor)
        return solve_small_divisors_flow(fm, self.model.freq,
                                         divisor_floor=self.divisor_floor)

    def _monomial_coeffs(self, term):
        """n=1 helper: coefficient array of a monomial (vector) term."""
        key = (term.degree,)
        return np.atleast_1d(np.asarray(term.coeffs.get(key, 0.0)))

    def _p1(self):
        # n = 1 leading coefficient of fbar^N (negative on the contracting ray)
        blocks = self.model._avg_lead_terms(self.model.f, self.model.N)
        b = blocks[0]
        if b is None:
            raise HypothesisFail("fbar^N vanishes")
        from .models import restrict_term_to_x

        t = restrict_term_to_x(b, 1)
        return float(np.real(complex(t.coeffs.get((self.model.N,), 0.0))))

    def _q1_matrix(self, which):
        """n=1: matrix coefficient of d_y gbar^M (or d_x fbar^N) at degree M-1/N-1."""
        if which == "y":
            t = self.model.dy_gbar_term()
            key = (self.model.M - 1,)
        else:
            t = self.model.dx_fbar_term()
            key = (self.model.N - 1,)
        return np.atleast_2d(np.asarray(t.coeffs.get(key, np.zeros(t.target_shape))))

    def _solve_pde_avg(self, w_term, which):
        """H_{p,Q}[w]: monomial closed form at n=1, quadrature otherwise."""
        if self.exact:
            p1 = self._p1()
            mm = w_term.degree - self.model.N
            wc = self._monomial_coeffs(w_term)
            k = wc.size
            if which == "theta":
                A = (mm + 1) * p1 * np.eye(k)
            else:
                A = (mm + 1) * p1 * np.eye(k) - self._q1_matrix(which)
            if abs(np.linalg.det(A)) < 1e-14 * max(1.0, np.max(np.abs(A))) ** k:
                raise DivergenceRisk(
                    f"degenerate cohomological solve at degree {w_term.degree}"
                )
            beta = np.linalg.solve(A, wc)
            coeff = beta if k > 1 else beta[0]
            return HomogeneousTerm.poly(mm + 1, 1, {(mm + 1,): coeff},
                                        (k,) if k > 1 else ())
        Q = {"y": self._q_y, "x": self._q_x, "theta": None}[which]
        prob = PDEProblem(self._p_term, Q, w_term, self.cone)
        if which in self._pde_consts:
            prob.constants.update(self._pde_consts[which])
        else:
            prob.compute_constants()
            self._pde_consts[which] = dict(prob.constants)
        return solve_pde(prob, section=self.section)

    def step_y(self, l):
        if self.m == 0:
            return
        model = self.model
        deg = l + model.M - 1
        parts = self.e_parts("y", deg)
        w = self._avg_vector_term(parts, deg)
        if w is not None:
            if model.M < model.N:
                K_y = self._invert_gbar(w)
            else:
                K_y = self._solve_pde_avg(w, "y")
            for b in range(self.m):
                term = unstack_term(K_y, b) if K_y.target_shape else K_y
                self.Ky[b] = self.Ky[b].with_term(term)
            self._invalidate()
        if self.adim:
            parts = self.e_parts("y", deg)
            for b in range(self.m):
                osc = parts[b].oscillatory()
                if osc.norm() > self.zero_tol:
                    self.Ky[b] = self.Ky[b].with_fourier_term(deg, self._dsolve(osc))
                    self._invalidate()

    def _invert_gbar(self, w_term):
        """K_y = -(d_y gbar^M(u,0))^{-1} w, case M < N."""
        model = self.model
        deg_out = w_term.degree - (model.M - 1)
        if self.exact:
            Q1 = self._q1_matrix("y")
            wc = self._monomial_coeffs(w_term)
            try:
                beta = -np.linalg.solve(Q1, wc)
            except np.linalg.LinAlgError as exc:
                raise SingularGbar(str(exc)) from exc
            coeff = beta if beta.size > 1 else beta[0]
            return HomogeneousTerm.poly(deg_out, 1, {(deg_out,): coeff},
                                        (beta.size,) if beta.size > 1 else ())
        vals = []
        for i, node in enumerate(self.section.nodes):
            Q = np.atleast_2d(model.dy_gbar_lead(node))
            wv = np.atleast_1d(w_term.evaluate(node))
            vals.append(-np.linalg.solve(Q, wv))
        return HomogeneousTerm.ray(deg_out, self.section, np.stack(vals),
                                   (self.m,) if self.m > 1 else ())

    def step_theta(self, l):
        if self.d == 0:
            return
        model = self.model
        deg = l + model.P - 2
        if deg < 1:
            return
        parts = self.e_parts("theta", deg)
        w = self._avg_vector_term(parts, deg)
        if w is not None:
            if model.P < model.N or self.fallback:
                for a in range(self.d):
                    term = unstack_term(w, a) if w.target_shape else w
                    self.Ith[a] = self.Ith[a].with_term(term)
                self.free_choices[("K_theta", l - 1)] = "zero"
            else:
                K_th = self._solve_pde_avg(w, "theta")
                for a in range(self.d):
                    term = unstack_term(K_th, a) if K_th.target_shape else K_th
                    self.Kth[a] = self.Kth[a].with_term(term)
            self._invalidate()
        if self.adim:
            parts = self.e_parts("theta", deg)
            for a in range(self.d):
                osc = parts[a].oscillatory()
                if osc.norm() > self.zero_tol:
                    self.Kth[a] = self.Kth[a].with_fourier_term(deg, self._dsolve(osc))
                    self._invalidate()

    def step_x(self, j):
        model = self.model
        deg = j + model.N - 1
        injected = self.free_terms.get(("K_x", j))
        if injected is not None:
            self.Kx[0] = self.Kx[0].with_term(injected)
            self.free_choices[("K_x", j)] = "supplied"
            self._invalidate()
        parts = self.e_parts("x", deg)
        w = self._avg_vector_term(parts, deg)
        if w is not None:
            use_free = self.fallback or (j <= self.j_star)
            if use_free:
                for i in range(self.n):
                    term = unstack_term(w, i) if w.target_shape else w
                    self.Iu[i] = self.Iu[i].with_term(term)
                if injected is None:
                    self.free_choices.setdefault(("K_x", j), "zero")
                self.free_choices[("inner_u", deg)] = "from-residual"
            else:
                K_x = self._solve_pde_avg(w, "x")
                for i in range(self.n):
                    term = unstack_term(K_x, i) if K_x.target_shape else K_x
                    self.Kx[i] = self.Kx[i].with_term(term)
            self._invalidate()
        if self.adim:
            parts = self.e_parts("x", deg)
            for i in range(self.n):
                osc = parts[i].oscillatory()
                if osc.norm() > self.zero_tol:
                    self.Kx[i] = self.Kx[i].with_fourier_term(deg, self._dsolve(osc))
                    self._invalidate()

    # -- main loop -------------------------------------------------------------

    def run(self):
        model = self.model
        for j in range(1, self.j_target + 1):
            self.step_y(j)
            self.step_theta(j)
            self.step_x(j)
        # completion sweeps: single-exponent residual in all components
        for l in range(self.j_target + 1, self.j_target + model.N - model.M + 1):
            self.step_y(l)
        if self.d:
            for l in range(self.j_target + 1, self.j_target + model.N - model.P + 2):
                self.step_theta(l)
        par = Parametrization(
            self.kind, self.n, self.m, self.d, model.freq,
            self.Kx, self.Ky, self.Kth, self.Iu, self.Ith,
            order=self.j_target, free_choices=self.free_choices, notes=self.notes,
        )
        return par


def approximate_map(model, j_target, cone, constants=None, free_terms=None, **kw):
    """K^(j), R^(j) for a map model, with completion sweeps included.

    Free terms default to zero; a candidate degree-j x-average can be injected
    through ``free_terms={("K_x", j): term}`` for the choice-independence
    diagnostic.
    """
    builder = _Builder(model, j_target, cone, constants=constants,
                       free_terms=free_terms, **kw)
    return builder.run()


def approximate_flow(model, j_target, cone, constants=None, section=None,
                     free_terms=None, **kw):
    """K^(j), Y^(j) for a flow model (exact at n=1, sampled for d=0, n<=2)."""
    builder = _Builder(model, j_target, cone, constants=constants,
                       section=section, free_terms=free_terms, **kw)
    return builder.run()
