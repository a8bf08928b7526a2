"""Model containers for maps/flows in the parabolic normal form, and the
parametrization object produced by the order-by-order construction.

A map model is F(x, y, theta) = (x + f, y + g, theta + omega + h) with f, g, h
sums of homogeneous parts of degrees >= N, M, P in (x, y); a flow model is the
vector field X = (f, g, omega + h), quasiperiodic in t with time frequency nu
(angle blocks then live on T^{d+d'}).
"""

from __future__ import annotations

import numpy as np

from ..fourier import FourierMap, Frequency
from ..homogeneous import HomogeneousSum, HomogeneousTerm


def restrict_term_to_x(term, n):
    """Poly term in (x, y) restricted to (x, 0), reindexed to x-variables."""
    if term.backend != "poly":
        raise ValueError("restriction implemented for poly terms")
    coeffs = {}
    for exps, c in term.coeffs.items():
        if any(e != 0 for e in exps[n:]):
            continue
        coeffs[exps[:n]] = c
    return HomogeneousTerm.poly(term.degree, n, coeffs, term.target_shape)


def stack_terms(terms):
    """Scalar terms of equal degree/var_dim stacked into one vector target."""
    k = len(terms)
    deg, var_dim = terms[0].degree, terms[0].var_dim
    if all(t.backend == "poly" for t in terms):
        coeffs = {}
        for i, t in enumerate(terms):
            for e, c in t.coeffs.items():
                slot = coeffs.setdefault(e, np.zeros(k, dtype=complex))
                slot[i] += complex(c)
        return HomogeneousTerm.poly(deg, var_dim, coeffs, (k,))
    section = next(t.section for t in terms if t.backend == "ray")
    cols = []
    for t in terms:
        if t.backend == "ray":
            cols.append(t.values.reshape(section.n_nodes))
        else:
            cols.append(np.array([t.evaluate(node) for node in section.nodes],
                                 dtype=complex))
    return HomogeneousTerm.ray(deg, section, np.stack(cols, axis=1), (k,))


def unstack_term(term, i):
    """Component i of a vector-target term as a scalar term."""
    if term.backend == "poly":
        return HomogeneousTerm.poly(
            term.degree, term.var_dim,
            {e: np.asarray(c)[i] for e, c in term.coeffs.items()}, ()
        )
    return HomogeneousTerm.ray(term.degree, term.section, term.values[:, i], ())


class _ModelBase:
    def __init__(self, n, m, d, N, M, P, q, freq, f, g, h, truncation=None,
                 name=""):
        self.n, self.m, self.d = int(n), int(m), int(d)
        self.N, self.M, self.P, self.q = int(N), int(M), int(P), int(q)
        if not (2 <= self.M <= self.N):
            raise ValueError("orders must satisfy 2 <= M <= N")
        if not (1 <= self.P <= self.N):
            raise ValueError("orders must satisfy 1 <= P <= N (take h^P = 0 if needed)")
        self.freq = freq
        self.f = list(f)
        self.g = list(g)
        self.h = list(h)
        if len(self.f) != self.n or len(self.g) != self.m or len(self.h) != self.d:
            raise ValueError("component counts do not match dims")
        self.name = name
        self.truncation = (
            truncation
            if truncation is not None
            else max([fm.truncation for s in self.f + self.g + self.h
                      for _, fm in s.terms] or [0])
        )
        self._lead_cache = {}

    # -- angle bookkeeping ---------------------------------------------------

    @property
    def freq_dim(self):
        """Total angle axes carried by the Fourier blocks."""
        return self.d + (0 if self.freq.time_freq is None else self.freq.time_freq.size)

    def angle_vector(self, theta, t=0.0):
        theta = np.atleast_1d(np.asarray(theta, dtype=float)) if self.d else np.zeros(0)
        if self.freq.time_freq is None:
            return theta
        return np.concatenate([theta, self.freq.time_freq * t])

    # -- leading averaged parts (cones protocol) -----------------------------

    def _avg_lead_terms(self, comps, degree):
        key = (id(comps), degree)
        if key not in self._lead_cache:
            terms = []
            for s in comps:
                fm = s.part(degree)
                blk = fm.average() if fm is not None else None
                terms.append(blk)
            self._lead_cache[key] = terms
        return self._lead_cache[key]

    def _eval_xy0(self, blocks, x):
        z = np.concatenate([np.asarray(x, dtype=float), np.zeros(self.m)])
        return np.array(
            [0.0 if b is None else float(np.real(b.evaluate(z))) for b in blocks]
        )

    def fbar_lead(self, x):
        return self._eval_xy0(self._avg_lead_terms(self.f, self.N), x)

    def dx_fbar_lead(self, x):
        blocks = self._avg_lead_terms(self.f, self.N)
        z = np.concatenate([np.asarray(x, dtype=float), np.zeros(self.m)])
        rows = []
        for b in blocks:
            if b is None:
                rows.append(np.zeros(self.n))
            else:
                rows.append(np.real(b.gradient_at(z))[: self.n])
        return np.stack(rows)

    def dy_fbar_lead(self, x):
        blocks = self._avg_lead_terms(self.f, self.N)
        z = np.concatenate([np.asarray(x, dtype=float), np.zeros(self.m)])
        rows = []
        for b in blocks:
            if b is None:
                rows.append(np.zeros(self.m))
            else:
                rows.append(np.real(b.gradient_at(z))[self.n:])
        return np.stack(rows)

    def dy_gbar_lead(self, x):
        blocks = self._avg_lead_terms(self.g, self.M)
        z = np.concatenate([np.asarray(x, dtype=float), np.zeros(self.m)])
        rows = []
        for b in blocks:
            if b is None:
                rows.append(np.zeros(self.m))
            else:
                rows.append(np.real(b.gradient_at(z))[self.n:])
        return np.stack(rows)

    def g_lead(self, x, y, theta):
        z = np.concatenate([np.asarray(x, float), np.asarray(y, float)])
        vals = []
        for s in self.g:
            fm = s.part(self.M)
            vals.append(0.0 if fm is None else fm.evaluate(theta, z))
        return np.asarray(vals)

    # leading averaged parts as poly terms in the x-variables -----------------

    def fbar_term(self):
        blocks = self._avg_lead_terms(self.f, self.N)
        terms = [
            restrict_term_to_x(b, self.n) if b is not None
            else HomogeneousTerm.zero(self.N, self.n)
            for b in blocks
        ]
        return stack_terms(terms)

    def dx_fbar_term(self):
        blocks = self._avg_lead_terms(self.f, self.N)
        rows = []
        for b in blocks:
            row = []
            for j in range(self.n):
                if b is None:
                    row.append(HomogeneousTerm.zero(self.N - 1, self.n))
                else:
                    row.append(restrict_term_to_x(b.derivative(j), self.n))
            rows.append(row)
        return _stack_matrix(rows, self.N - 1, self.n)

    def dy_gbar_term(self):
        blocks = self._avg_lead_terms(self.g, self.M)
        rows = []
        for b in blocks:
            row = []
            for j in range(self.m):
                if b is None:
                    row.append(HomogeneousTerm.zero(self.M - 1, self.n))
                else:
                    row.append(restrict_term_to_x(b.derivative(self.n + j), self.n))
            rows.append(row)
        return _stack_matrix(rows, self.M - 1, self.n)

    def is_poly(self):
        return all(s.is_poly() for s in self.f + self.g + self.h)

    def has_tails(self):
        return any(s.tail is not None for s in self.f + self.g + self.h)

    def component_values(self, comps, z, angles):
        return np.array([s.evaluate_sum(z, angles) for s in comps])


def _stack_matrix(rows, degree, var_dim):
    k, l = len(rows), len(rows[0])
    if all(t.backend == "poly" for row in rows for t in row):
        coeffs = {}
        for i, row in enumerate(rows):
            for j, t in enumerate(row):
                for e, c in t.coeffs.items():
                    slot = coeffs.setdefault(e, np.zeros((k, l), dtype=complex))
                    slot[i, j] += complex(c)
        return HomogeneousTerm.poly(degree, var_dim, coeffs, (k, l))
    section = next(t.section for row in rows for t in row if t.backend == "ray")
    vals = np.zeros((section.n_nodes, k, l), dtype=complex)
    for i, row in enumerate(rows):
        for j, t in enumerate(row):
            if t.backend == "ray":
                vals[:, i, j] = t.values.reshape(section.n_nodes)
            else:
                vals[:, i, j] = [t.evaluate(node) for node in section.nodes]
    return HomogeneousTerm.ray(degree, section, vals, (k, l))


class MapModel(_ModelBase):
    kind = "map"

    def __init__(self, n, m, d, N, M, P, q, freq, f, g, h, **kw):
        if isinstance(freq, (list, tuple, np.ndarray)):
            freq = Frequency(freq)
        super().__init__(n, m, d, N, M, P, q, freq, f, g, h, **kw)
        if self.freq.omega.size != self.d:
            raise ValueError("omega length must equal d")

    def apply(self, x, y, theta):
        """One application of the map; angles are kept unwrapped.

        Accepts complex states (analytic continuation) as well.
        """
        x = np.atleast_1d(np.asarray(x))
        y = np.atleast_1d(np.asarray(y)) if self.m else np.zeros(0)
        theta = np.atleast_1d(np.asarray(theta)) if self.d else np.zeros(0)
        z = np.concatenate([x, y])
        fx = self.component_values(self.f, z, theta)
        gy = self.component_values(self.g, z, theta) if self.m else np.zeros(0)
        hth = self.component_values(self.h, z, theta) if self.d else np.zeros(0)
        return x + fx, y + gy, theta + self.freq.omega + hth


class FlowModel(_ModelBase):
    kind = "flow"

    def __init__(self, n, m, d, N, M, P, q, freq, f, g, h, **kw):
        if isinstance(freq, (list, tuple, np.ndarray)):
            freq = Frequency(freq)
        super().__init__(n, m, d, N, M, P, q, freq, f, g, h, **kw)

    def rhs(self, x, y, theta=None, t=0.0):
        """(dx, dy, dtheta) of the vector field at time t."""
        x = np.atleast_1d(np.asarray(x))
        y = np.atleast_1d(np.asarray(y)) if self.m else np.zeros(0)
        z = np.concatenate([x, y])
        ang = self.angle_vector(theta if theta is not None else np.zeros(self.d), t)
        fx = self.component_values(self.f, z, ang)
        gy = self.component_values(self.g, z, ang) if self.m else np.zeros(0)
        hth = self.component_values(self.h, z, ang) if self.d else np.zeros(0)
        return fx, gy, (self.freq.omega + hth if self.d else np.zeros(0))


class Parametrization:
    """K = (u + Kx, Ky, Theta + Ktheta) with inner dynamics R (maps) or Y (flows).

    Component sums hold only the corrections; identities are added during
    evaluation.  ``Ru`` includes the leading fbar^N term; ``Yu`` is the full
    inner field.
    """

    def __init__(self, kind, n, m, d, freq, Kx, Ky, Kth, Ru_or_Yu, Rth_or_Yth,
                 order=0, free_choices=None, notes=None):
        self.kind = kind
        self.n, self.m, self.d = n, m, d
        self.freq = freq
        self.Kx = Kx
        self.Ky = Ky
        self.Kth = Kth
        if kind == "map":
            self.Ru = Ru_or_Yu
            self.Rth = Rth_or_Yth
        else:
            self.Yu = Ru_or_Yu
            self.Yth = Rth_or_Yth
        self.order = order
        self.free_choices = dict(free_choices or {})
        self.notes = list(notes or [])
        self.residual = None

    @property
    def inner_u(self):
        return self.Ru if self.kind == "map" else self.Yu

    @property
    def inner_th(self):
        return self.Rth if self.kind == "map" else self.Yth

    # -- evaluation ----------------------------------------------------------

    def K_eval(self, u, angles=None):
        u = np.atleast_1d(np.asarray(u))
        ang = np.zeros(_angle_dim(self)) if angles is None else np.atleast_1d(angles)
        x = u + np.array([s.evaluate_sum(u, ang) for s in self.Kx])
        y = np.array([s.evaluate_sum(u, ang) for s in self.Ky]) if self.m else np.zeros(0)
        th = (np.asarray(ang[: self.d]) + np.array(
            [s.evaluate_sum(u, ang) for s in self.Kth]) if self.d else np.zeros(0))
        return x, y, th

    def R_eval(self, u, angles=None):
        if self.kind != "map":
            raise ValueError("R_eval is for map parametrizations")
        u = np.atleast_1d(np.asarray(u))
        ang = np.zeros(self.d) if angles is None else np.atleast_1d(angles)
        u2 = u + np.array([s.evaluate_sum(u, ang) for s in self.Ru])
        th2 = (ang + self.freq.omega + np.array(
            [s.evaluate_sum(u, ang) for s in self.Rth]) if self.d else np.zeros(0))
        return u2, th2

    def Y_eval(self, u, angles=None):
        if self.kind != "flow":
            raise ValueError("Y_eval is for flow parametrizations")
        u = np.atleast_1d(np.asarray(u))
        ang = np.zeros(_angle_dim(self)) if angles is None else np.atleast_1d(angles)
        du = np.array([s.evaluate_sum(u, ang) for s in self.Yu])
        dth = (self.freq.omega + np.array(
            [s.evaluate_sum(u, ang) for s in self.Yth]) if self.d else np.zeros(0))
        return du, dth

    def K_jac_u(self, u, angles=None):
        """(n+m+d) x n Jacobian of K with respect to u."""
        u = np.atleast_1d(np.asarray(u))
        ang = np.zeros(_angle_dim(self)) if angles is None else np.atleast_1d(angles)
        rows = []
        for i, s in enumerate(self.Kx):
            row = np.array([s.u_derivative(a).evaluate_sum(u, ang) for a in range(self.n)])
            row[i] += 1.0
            rows.append(row)
        for s in self.Ky:
            rows.append(np.array(
                [s.u_derivative(a).evaluate_sum(u, ang) for a in range(self.n)]))
        for s in self.Kth:
            rows.append(np.array(
                [s.u_derivative(a).evaluate_sum(u, ang) for a in range(self.n)]))
        return np.stack(rows) if rows else np.zeros((0, self.n))

    def K_dangle(self, u, angles, axis):
        """Derivative of (Kx, Ky, Ktheta-correction) in one angle axis."""
        u = np.atleast_1d(np.asarray(u))
        out = []
        for s in self.Kx + self.Ky + self.Kth:
            out.append(s.theta_derivative(axis).evaluate_sum(u, angles))
        return np.asarray(out)

    def to_json_dict(self):
        def dump(comps):
            return [s.to_json_dict() for s in comps]

        data = {
            "kind": self.kind,
            "dims": {"n": self.n, "m": self.m, "d": self.d},
            "omega": self.freq.omega.tolist(),
            "nu": None if self.freq.time_freq is None else self.freq.time_freq.tolist(),
            "order": self.order,
            "K_x": dump(self.Kx),
            "K_y": dump(self.Ky),
            "K_theta": dump(self.Kth),
            "free_choices": {str(k): v for k, v in self.free_choices.items()},
            "notes": self.notes,
        }
        if self.kind == "map":
            data["R_u"] = dump(self.Ru)
            data["R_theta"] = dump(self.Rth)
        else:
            data["Y_u"] = dump(self.Yu)
            data["Y_theta"] = dump(self.Yth)
        return data


def _angle_dim(par):
    return par.freq.extended().size if par.kind == "flow" else par.d


def empty_sums(count, var_dim, angle_dim, truncation):
    return [HomogeneousSum(var_dim, angle_dim, truncation) for _ in range(count)]


def identity_sum(var_dim, axis, angle_dim, truncation):
    term = HomogeneousTerm.monomial(var_dim, tuple(1 if i == axis else 0
                                                   for i in range(var_dim)))
    return HomogeneousSum.from_term(term, angle_dim, truncation)


def zero_fourier(angle_dim, truncation):
    return FourierMap(angle_dim, truncation, {})
