"""Algebra of finite sums of homogeneous terms with angle-dependent coefficients.

A :class:`HomogeneousTerm` is a single homogeneous function of degree ``j``
in the cone variable ``u``.  Two backends:

* ``poly`` -- dense multivariate homogeneous polynomial (exact algebra);
* ``ray``  -- values on a sampled cross-section of the cone, extended by
  ``h(u) = |u|^j h(u/|u|)`` with spectral (Chebyshev) interpolation on the
  section.  Used for solver outputs that are generally non-polynomial.

A :class:`HomogeneousSum` stacks ``(degree, FourierMap-of-terms)`` pairs with
an optional opaque tail evaluator of declared order.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import BackendUnsupported, OrderUnderflow, OrderViolation, OutsideCone
from .fourier import FourierMap

TWO_PI_I = 2.0j * np.pi


# ---------------------------------------------------------------------------
# cross-section charts for the ray backend
# ---------------------------------------------------------------------------


class PointSection:
    """Trivial section for n = 1: the single direction +1 on V = (0, inf)."""

    var_dim = 1

    def __init__(self):
        self.nodes = np.array([[1.0]])

    @property
    def n_nodes(self):
        return 1

    def interpolate(self, values, direction):
        return values[0]

    def tangent_derivative(self, values):
        return np.zeros_like(values)

    def to_json_dict(self):
        return {"type": "point"}


class ArcSection:
    """Chebyshev-Lobatto nodes on an angular arc of the unit circle (n = 2)."""

    var_dim = 2

    def __init__(self, lo, hi, n_nodes=17):
        if n_nodes < 2:
            raise ValueError("need at least two nodes")
        self.lo = float(lo)
        self.hi = float(hi)
        k = np.arange(n_nodes)
        x = np.cos(np.pi * k / (n_nodes - 1))  # [-1, 1], decreasing
        self.angles = 0.5 * (self.lo + self.hi) + 0.5 * (self.hi - self.lo) * x
        self.nodes = np.stack([np.cos(self.angles), np.sin(self.angles)], axis=1)
        w = np.ones(n_nodes)
        w[0] = 0.5
        w[-1] = 0.5
        w *= (-1.0) ** k
        self._bary_w = w

    @property
    def n_nodes(self):
        return self.angles.size

    def angle_of(self, direction):
        return math.atan2(float(direction[1]), float(direction[0]))

    def interpolate(self, values, direction):
        """Barycentric interpolation of node values at a unit direction."""
        phi = self.angle_of(direction)
        diffs = phi - self.angles
        hit = np.argmin(np.abs(diffs))
        if abs(diffs[hit]) < 1e-14:
            return values[hit]
        w = self._bary_w / diffs
        return np.tensordot(w, values, axes=(0, 0)) / np.sum(w)

    def tangent_derivative(self, values):
        """d values / d phi at the nodes (spectral differentiation)."""
        n = self.n_nodes
        a = self.angles
        D = np.zeros((n, n))
        w = self._bary_w
        for i in range(n):
            for j in range(n):
                if i != j:
                    D[i, j] = (w[j] / w[i]) / (a[i] - a[j])
        D[np.arange(n), np.arange(n)] = -D.sum(axis=1)
        return np.tensordot(D, values, axes=(1, 0))

    def to_json_dict(self):
        return {"type": "arc", "lo": self.lo, "hi": self.hi, "n_nodes": int(self.n_nodes)}


def section_from_json(data):
    if data["type"] == "point":
        return PointSection()
    if data["type"] == "arc":
        return ArcSection(data["lo"], data["hi"], data["n_nodes"])
    raise ValueError(f"unknown section type {data['type']}")


# ---------------------------------------------------------------------------
# homogeneous terms
# ---------------------------------------------------------------------------


class HomogeneousTerm:
    """One homogeneous function of degree ``degree`` in ``var_dim`` variables."""

    def __init__(self, backend, degree, var_dim, target_shape=(), coeffs=None,
                 section=None, values=None):
        self.backend = backend
        self.degree = int(degree)
        self.var_dim = int(var_dim)
        self.target_shape = tuple(target_shape)
        if backend == "poly":
            self.coeffs = {}
            for exps, c in (coeffs or {}).items():
                exps = tuple(int(e) for e in exps)
                if len(exps) != self.var_dim or any(e < 0 for e in exps):
                    raise ValueError(f"bad exponent tuple {exps}")
                if sum(exps) != self.degree:
                    raise ValueError(
                        f"monomial {exps} does not have degree {self.degree}"
                    )
                arr = np.asarray(c, dtype=complex)
                if arr.shape != self.target_shape:
                    arr = arr.reshape(self.target_shape)
                self.coeffs[exps] = arr
        elif backend == "ray":
            if section is None or values is None:
                raise ValueError("ray backend needs a section and node values")
            self.section = section
            vals = np.asarray(values, dtype=complex)
            expected = (section.n_nodes,) + self.target_shape
            if vals.shape != expected:
                vals = vals.reshape(expected)
            self.values = vals
        else:
            raise ValueError(f"unknown backend {backend!r}")

    # -- constructors ------------------------------------------------------

    @classmethod
    def poly(cls, degree, var_dim, coeffs, target_shape=()):
        return cls("poly", degree, var_dim, target_shape, coeffs=coeffs)

    @classmethod
    def monomial(cls, var_dim, exponents, coeff=1.0):
        exponents = tuple(exponents)
        arr = np.asarray(coeff, dtype=complex)
        return cls("poly", sum(exponents), var_dim, arr.shape, coeffs={exponents: arr})

    @classmethod
    def ray(cls, degree, section, values, target_shape=None):
        vals = np.asarray(values, dtype=complex)
        if target_shape is None:
            target_shape = vals.shape[1:]
        return cls("ray", degree, section.var_dim, target_shape,
                   section=section, values=vals)

    @classmethod
    def zero(cls, degree, var_dim, target_shape=()):
        return cls("poly", degree, var_dim, target_shape, coeffs={})

    # -- basic ops ---------------------------------------------------------

    def is_zero(self, tol=0.0):
        return self.norm() <= tol

    def norm(self):
        if self.backend == "poly":
            if not self.coeffs:
                return 0.0
            return float(sum(np.max(np.abs(c)) for c in self.coeffs.values()))
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def scale(self, c):
        if self.backend == "poly":
            return HomogeneousTerm.poly(
                self.degree, self.var_dim,
                {e: v * c for e, v in self.coeffs.items()}, self.target_shape,
            )
        return HomogeneousTerm.ray(self.degree, self.section, self.values * c,
                                   self.target_shape)

    def add(self, other):
        if other.degree != self.degree:
            raise ValueError("cannot add terms of different degree")
        if self.backend == "poly" and other.backend == "poly":
            coeffs = dict(self.coeffs)
            for e, v in other.coeffs.items():
                coeffs[e] = coeffs[e] + v if e in coeffs else v
            return HomogeneousTerm.poly(self.degree, self.var_dim, coeffs,
                                        self.target_shape)
        if self.backend == "ray" and other.backend == "ray":
            return HomogeneousTerm.ray(self.degree, self.section,
                                       self.values + other.values, self.target_shape)
        # mixed: sample the poly one onto the ray section
        rayt = self if self.backend == "ray" else other
        polyt = other if self.backend == "ray" else self
        sampled = np.stack([polyt.evaluate(node) for node in rayt.section.nodes])
        return HomogeneousTerm.ray(self.degree, rayt.section,
                                   rayt.values + sampled, self.target_shape)

    def conj(self):
        if self.backend == "poly":
            return HomogeneousTerm.poly(
                self.degree, self.var_dim,
                {e: np.conj(v) for e, v in self.coeffs.items()}, self.target_shape,
            )
        return HomogeneousTerm.ray(self.degree, self.section, np.conj(self.values),
                                   self.target_shape)

    # -- evaluation --------------------------------------------------------

    def evaluate(self, u):
        u = np.atleast_1d(np.asarray(u))
        if self.backend == "poly":
            total = np.zeros(self.target_shape, dtype=complex)
            for exps, c in self.coeffs.items():
                mono = 1.0
                for ui, e in zip(u, exps):
                    if e:
                        mono = mono * ui**e
                total = total + c * mono
            return self._finalize(total, u)
        r = float(np.linalg.norm(u.real)) if not np.iscomplexobj(u) else None
        if r is None:
            raise BackendUnsupported(
                "ray terms support complex input only via evaluate_ray"
            )
        if r == 0.0:
            return np.zeros(self.target_shape) if self.degree > 0 else self._node_value(u)
        val = self.section.interpolate(self.values, u / r) * r**self.degree
        return self._finalize(val, u)

    def _node_value(self, u):
        return self.section.interpolate(self.values, u)

    def evaluate_ray(self, z, uhat):
        """Analytic continuation ``z^degree h(uhat)`` along a fixed real ray."""
        uhat = np.asarray(uhat, dtype=float)
        if self.backend == "poly":
            return np.asarray(self.evaluate(uhat), dtype=complex) * z**self.degree
        r = float(np.linalg.norm(uhat))
        base = self.section.interpolate(self.values, uhat / r)
        return base * (z * r) ** self.degree

    @staticmethod
    def _finalize(val, u):
        # individual blocks may be genuinely complex (one Fourier mode);
        # strip imaginary parts only when they are round-off *relative to the
        # value itself* (an absolute eps threshold would destroy genuine
        # imaginary parts of small high-degree blocks)
        if np.iscomplexobj(u):
            return val
        val = np.asarray(val)
        if np.iscomplexobj(val):
            scale = float(np.max(np.abs(val))) if val.size else 0.0
            if scale == 0.0 or float(np.max(np.abs(val.imag))) <= 1e-12 * scale:
                return val.real
        return val

    # -- calculus ----------------------------------------------------------

    def derivative(self, axis, fd_fallback=False, fd_step=1e-6):
        """d/du_axis; degree drops by one.  Poly is exact."""
        if self.backend == "poly":
            coeffs = {}
            for exps, c in self.coeffs.items():
                e = exps[axis]
                if e == 0:
                    continue
                new = list(exps)
                new[axis] = e - 1
                key = tuple(new)
                add = c * e
                coeffs[key] = coeffs[key] + add if key in coeffs else add
            return HomogeneousTerm.poly(self.degree - 1, self.var_dim, coeffs,
                                        self.target_shape)
        if self.var_dim == 2:
            # exact from the homogeneity: h = r^j g(phi)
            j = self.degree
            gp = self.section.tangent_derivative(self.values)
            nodes = self.section.nodes
            cosv = nodes[:, 0].reshape((-1,) + (1,) * len(self.target_shape))
            sinv = nodes[:, 1].reshape((-1,) + (1,) * len(self.target_shape))
            if axis == 0:
                vals = j * self.values * cosv - gp * sinv
            else:
                vals = j * self.values * sinv + gp * cosv
            return HomogeneousTerm.ray(self.degree - 1, self.section, vals,
                                       self.target_shape)
        if not fd_fallback:
            raise BackendUnsupported(
                "ray u-derivative beyond n=2 needs fd_fallback=True"
            )
        return _fd_derivative_term(self, axis, fd_step)

    def gradient_at(self, u, fd_step=1e-6):
        """Gradient stacked on a trailing axis, evaluated at ``u``."""
        if self.backend == "poly" or self.var_dim == 2:
            parts = [self.derivative(i).evaluate(u) for i in range(self.var_dim)]
            return np.stack([np.asarray(p) for p in parts], axis=-1)
        u = np.asarray(u, dtype=float)
        cols = []
        for i in range(self.var_dim):
            e = np.zeros_like(u)
            e[i] = fd_step * max(1.0, abs(u[i]))
            cols.append((self.evaluate(u + e) - self.evaluate(u - e)) / (2 * e[i]))
        return np.stack([np.asarray(c) for c in cols], axis=-1)

    # -- serialization -----------------------------------------------------

    def to_json_dict(self):
        base = {
            "backend": self.backend,
            "degree": self.degree,
            "var_dim": self.var_dim,
            "shape": list(self.target_shape),
        }
        if self.backend == "poly":
            base["monomials"] = [
                {
                    "e": list(e),
                    "re": np.asarray(c).real.ravel().tolist(),
                    "im": np.asarray(c).imag.ravel().tolist(),
                }
                for e, c in sorted(self.coeffs.items())
            ]
        else:
            base["section"] = self.section.to_json_dict()
            base["re"] = self.values.real.ravel().tolist()
            base["im"] = self.values.imag.ravel().tolist()
        return base

    @classmethod
    def from_json_dict(cls, data):
        shape = tuple(data["shape"])
        if data["backend"] == "poly":
            coeffs = {}
            for mono in data["monomials"]:
                arr = np.asarray(mono["re"], dtype=float) + 1j * np.asarray(
                    mono["im"], dtype=float
                )
                coeffs[tuple(mono["e"])] = arr.reshape(shape) if shape else arr.reshape(())
            return cls.poly(data["degree"], data["var_dim"], coeffs, shape)
        section = section_from_json(data["section"])
        vals = np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float)
        vals = vals.reshape((section.n_nodes,) + shape)
        return cls.ray(data["degree"], section, vals, shape)


def _fd_derivative_term(term, axis, step):
    section = term.section
    vals = []
    for node in section.nodes:
        e = np.zeros(term.var_dim)
        e[axis] = step
        vals.append((term.evaluate(node + e) - term.evaluate(node - e)) / (2 * step))
    return HomogeneousTerm.ray(term.degree - 1, section, np.stack(vals), term.target_shape)


# ---------------------------------------------------------------------------
# homogeneous sums
# ---------------------------------------------------------------------------


class Tail:
    """Opaque evaluator known to be O(|u|^order)."""

    def __init__(self, order, fn):
        self.order = int(order)
        self.fn = fn

    def __call__(self, u, theta=None):
        return self.fn(u, theta)


class HomogeneousSum:
    """Ordered sum of (degree, FourierMap-of-HomogeneousTerm) plus a tail."""

    def __init__(self, var_dim, angle_dim, truncation, terms=None, tail=None):
        self.var_dim = int(var_dim)
        self.angle_dim = int(angle_dim)
        self.truncation = int(truncation)
        self.terms = []
        for deg, fm in sorted(terms or [], key=lambda p: p[0]):
            if self.terms and deg <= self.terms[-1][0]:
                raise ValueError("degrees must be strictly increasing")
            self.terms.append((int(deg), fm))
        if tail is not None and self.terms and tail.order <= self.terms[-1][0]:
            raise ValueError("tail order must exceed the largest explicit degree")
        self.tail = tail

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls, var_dim, angle_dim=0, truncation=0):
        return cls(var_dim, angle_dim, truncation, [])

    @classmethod
    def from_term(cls, term, angle_dim=0, truncation=0, mode=None):
        mode = (0,) * angle_dim if mode is None else tuple(mode)
        fm = FourierMap(angle_dim, truncation, {mode: term})
        return cls(term.var_dim, angle_dim, truncation, [(term.degree, fm)])

    # -- structure ---------------------------------------------------------

    def min_degree(self):
        if self.terms:
            return self.terms[0][0]
        return self.tail.order if self.tail else None

    def max_degree(self):
        return self.terms[-1][0] if self.terms else None

    def degree_map(self):
        return {deg: fm for deg, fm in self.terms}

    def part(self, degree):
        """FourierMap of the given degree, or None."""
        for deg, fm in self.terms:
            if deg == degree:
                return fm
        return None

    def drop_tail(self):
        return HomogeneousSum(self.var_dim, self.angle_dim, self.truncation,
                              list(self.terms))

    def add(self, other):
        if other.var_dim != self.var_dim or other.angle_dim != self.angle_dim:
            raise ValueError("dimension mismatch")
        by_deg = dict(self.terms)
        for deg, fm in other.terms:
            by_deg[deg] = by_deg[deg].add(fm) if deg in by_deg else fm
        tails = [t for t in (self.tail, other.tail) if t is not None]
        tail = None
        if len(tails) == 1:
            tail = tails[0]
        elif len(tails) == 2:
            order = min(t.order for t in tails)
            t1, t2 = tails
            tail = Tail(order, lambda u, th=None: np.asarray(t1(u, th)) + np.asarray(t2(u, th)))
        trunc = max(self.truncation, other.truncation)
        return HomogeneousSum(self.var_dim, self.angle_dim, trunc,
                              list(by_deg.items()), tail)

    def scale(self, c):
        terms = [(deg, fm.scale(c)) for deg, fm in self.terms]
        tail = None
        if self.tail is not None:
            t = self.tail
            tail = Tail(t.order, lambda u, th=None: np.asarray(t(u, th)) * c)
        return HomogeneousSum(self.var_dim, self.angle_dim, self.truncation, terms, tail)

    def with_term(self, term, mode=None):
        """Sum plus one extra homogeneous term at the given Fourier mode."""
        extra = HomogeneousSum.from_term(term, self.angle_dim, self.truncation, mode)
        return self.add(extra)

    def with_fourier_term(self, degree, fm):
        return self.add(HomogeneousSum(self.var_dim, self.angle_dim,
                                       max(self.truncation, fm.truncation),
                                       [(degree, fm)]))

    # -- evaluation and calculus -------------------------------------------

    def evaluate_sum(self, u, theta=None, include_tail=True):
        total = None
        for _, fm in self.terms:
            val = fm.evaluate(theta if theta is not None else np.zeros(self.angle_dim), u)
            total = val if total is None else total + val
        if include_tail and self.tail is not None:
            tv = np.asarray(self.tail(u, theta))
            total = tv if total is None else total + tv
        if total is None:
            return 0.0
        return total

    def evaluate_ray(self, z, uhat, theta=None, include_tail=True):
        """Analytic continuation along the real ray ``uhat`` at complex radius z.

        Equals ``evaluate_sum(z * uhat, theta)`` for poly terms and extends
        ray-backed terms by ``z^degree``.
        """
        uhat = np.asarray(uhat, dtype=float)
        th = np.zeros(self.angle_dim) if theta is None else np.atleast_1d(theta)
        total = 0.0 + 0.0j
        for _, fm in self.terms:
            for k, block in fm.coeffs.items():
                val = block.evaluate_ray(z, uhat)
                phase = np.exp(TWO_PI_I * np.dot(np.asarray(k, float), th)) if k else 1.0
                total = total + val * phase
        if include_tail and self.tail is not None:
            total = total + np.asarray(self.tail(z * uhat, theta))
        return total

    def theta_derivative(self, axis):
        terms = [(deg, fm.theta_derivative(axis)) for deg, fm in self.terms]
        return HomogeneousSum(self.var_dim, self.angle_dim, self.truncation, terms)

    def u_derivative(self, axis, fd_fallback=False):
        terms = []
        for deg, fm in self.terms:
            if deg == 0:
                continue
            dfm = fm.map_blocks(lambda k, t: t.derivative(axis, fd_fallback=fd_fallback))
            terms.append((deg - 1, dfm))
        return HomogeneousSum(self.var_dim, self.angle_dim, self.truncation, terms)

    def norm(self):
        return sum(fm.norm() for _, fm in self.terms)

    def is_poly(self):
        return all(
            t.backend == "poly"
            for _, fm in self.terms
            for t in fm.coeffs.values()
        )

    def to_json_dict(self):
        return {
            "var_dim": self.var_dim,
            "angle_dim": self.angle_dim,
            "truncation": self.truncation,
            "terms": [{"degree": d, "fourier": fm.to_json_dict()} for d, fm in self.terms],
            "tail_order": None if self.tail is None else self.tail.order,
        }

    @classmethod
    def from_json_dict(cls, data, tail=None):
        terms = [
            (t["degree"],
             FourierMap.from_json_dict(t["fourier"], term_loader=HomogeneousTerm.from_json_dict))
            for t in data["terms"]
        ]
        return cls(data["var_dim"], data["angle_dim"], data["truncation"], terms, tail)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def evaluate(s, u, theta=None, cone=None, outside="warn"):
    """Evaluate a HomogeneousSum at (u, theta); optional cone-domain check.

    ``outside``: 'ignore', 'warn' (default) or 'raise' when u is outside the
    supplied cone.
    """
    if cone is not None and outside != "ignore" and not np.iscomplexobj(np.asarray(u)):
        if not cone.contains(np.asarray(u, dtype=float)):
            if outside == "raise":
                raise OutsideCone(f"u={u} outside cone")
            import warnings

            warnings.warn(f"u={u} outside cone", stacklevel=2)
    return s.evaluate_sum(u, theta)


def lowest_part(g, ell, tol=1e-10):
    """Degree-``ell`` part of a sum that is O(|u|^ell).

    The part may be zero; a *lower*-degree term with norm above ``tol``
    raises :class:`OrderViolation`.
    """
    for deg, fm in g.terms:
        if deg < ell and fm.norm() > tol:
            raise OrderViolation(f"term of degree {deg} below declared order {ell}")
    part = g.part(ell)
    if part is None:
        return FourierMap(g.angle_dim, g.truncation, {})
    return part


def differentiate(s, wrt, axis=0, fd_fallback=False):
    """Differentiate a sum with respect to 'u' (degree drops) or 'theta'."""
    if wrt == "u":
        return s.u_derivative(axis, fd_fallback=fd_fallback)
    if wrt == "theta":
        return s.theta_derivative(axis)
    raise ValueError("wrt must be 'u' or 'theta'")


# -- raw dict algebra used by truncated_compose ------------------------------
#
# Internal representation: {(degree, kmode): {exponents: complex coeff}} for
# scalar-valued series.  Assembled back into HomogeneousSum at the end.


def _raw_add(dst, src, factor=1.0):
    for key, poly in src.items():
        slot = dst.setdefault(key, {})
        for e, c in poly.items():
            slot[e] = slot.get(e, 0.0) + factor * c


def _raw_mul(a, b, q, kcap):
    out = {}
    for (da, ka), pa in a.items():
        for (db, kb), pb in b.items():
            deg = da + db
            if deg >= q:
                continue
            k = tuple(x + y for x, y in zip(ka, kb))
            if any(abs(x) > kcap for x in k):
                continue
            slot = out.setdefault((deg, k), {})
            for ea, ca in pa.items():
                for eb, cb in pb.items():
                    e = tuple(x + y for x, y in zip(ea, eb))
                    slot[e] = slot.get(e, 0.0) + ca * cb
    return out


def _raw_from_sum(s, q):
    out = {}
    for deg, fm in s.terms:
        if deg >= q:
            continue
        for k, term in fm.coeffs.items():
            if term.backend != "poly":
                raise BackendUnsupported("raw algebra needs poly blocks")
            slot = out.setdefault((deg, k), {})
            for e, c in term.coeffs.items():
                slot[e] = slot.get(e, 0.0) + complex(c)
    return out


def _raw_to_sum(raw, var_dim, angle_dim, truncation, tol=0.0):
    by_deg = {}
    for (deg, k), poly in raw.items():
        coeffs = {e: c for e, c in poly.items() if abs(c) > tol}
        if not coeffs:
            continue
        term = HomogeneousTerm.poly(deg, var_dim, coeffs)
        by_deg.setdefault(deg, {})[k] = term
    terms = []
    for deg, modes in sorted(by_deg.items()):
        terms.append((deg, FourierMap(angle_dim, truncation, modes, symmetrize=True)))
    return HomogeneousSum(var_dim, angle_dim, truncation, terms)


def _raw_pow_table(raw_base, max_pow, q, kcap, var_dim, angle_dim):
    one = {(0, (0,) * angle_dim): {(0,) * var_dim: 1.0}}
    table = [one]
    for _ in range(max_pow):
        table.append(_raw_mul(table[-1], raw_base, q, kcap))
    return table


def hs_mul(a, b, q, truncation=None):
    """Truncated product of two scalar poly-backed sums (degrees < q)."""
    kcap = truncation if truncation is not None else max(a.truncation, b.truncation)
    raw = _raw_mul(_raw_from_sum(a, q), _raw_from_sum(b, q), q, kcap)
    return _raw_to_sum(raw, a.var_dim, a.angle_dim, kcap)


def truncated_compose(outer, inner, q, angle_inner=None, angle_shift=None,
                      truncation=None, new_var_dim=None, tol=1e-15):
    """Homogeneous parts up to degree q-1 of ``outer(inner_1, ..., inner_p)``.

    Parameters
    ----------
    outer : HomogeneousSum
        Scalar-valued sum in ``p = outer.var_dim`` variables with angle
        dependence through its Fourier blocks.
    inner : sequence of HomogeneousSum
        One scalar sum per outer variable, all in the new variable ``u``
        (leading orders >= 1).
    q : int
        Requested order: the result carries all degrees < q plus an exact
        closure tail of order q.
    angle_inner : sequence of HomogeneousSum or None
        Angle substitution theta_a = Theta_a + shift_a + s_a(u, Theta).
        ``None`` leaves the angles untouched.
    angle_shift : array or None
        Constant shift (e.g. omega when composing with an inner rotation).

    Poly blocks compose symbolically; any ray block raises
    ``BackendUnsupported`` (sample-based composition lives in
    ``radial_parts``).
    """
    inner = list(inner)
    if len(inner) != outer.var_dim:
        raise ValueError("one inner sum per outer variable required")
    for s in inner:
        lead = s.min_degree()
        if lead is not None and lead < 1:
            raise OrderUnderflow("inner substitutions must have leading order >= 1")
    var_dim = new_var_dim if new_var_dim is not None else inner[0].var_dim
    angle_dim = outer.angle_dim
    kcap = truncation if truncation is not None else max(
        [outer.truncation] + [s.truncation for s in inner]
        + ([s.truncation for s in angle_inner] if angle_inner else [])
    )

    raw_inner = [_raw_from_sum(s, q) for s in inner]
    max_pows = [0] * outer.var_dim
    for _, fm in outer.terms:
        for term in fm.coeffs.values():
            for e in term.coeffs:
                for i, p in enumerate(e):
                    max_pows[i] = max(max_pows[i], p)
    pow_tables = [
        _raw_pow_table(raw_inner[i], max_pows[i], q, kcap, var_dim, angle_dim)
        for i in range(outer.var_dim)
    ]

    raw_s = None
    if angle_inner is not None:
        raw_s = [_raw_from_sum(s, q) for s in angle_inner]
        s_lead = min(
            (s.min_degree() for s in angle_inner if s.min_degree() is not None),
            default=q,
        )
        if s_lead < 1:
            raise OrderUnderflow("angle substitution must be Theta + O(|u|)")
    shift = None if angle_shift is None else np.asarray(angle_shift, dtype=float)

    result = {}
    for deg, fm in outer.terms:
        if deg >= q:
            continue
        for k, term in fm.coeffs.items():
            if term.backend != "poly":
                raise BackendUnsupported("truncated_compose needs poly outer blocks")
            # polynomial part: sum of monomials composed with the inner sums
            mono_total = {}
            for e, c in term.coeffs.items():
                prod = {(0, (0,) * angle_dim): {(0,) * var_dim: 1.0}}
                for i, p in enumerate(e):
                    if p:
                        prod = _raw_mul(prod, pow_tables[i][p], q, kcap)
                _raw_add(mono_total, prod, complex(c))
            # angle factor e^{2 pi i k.(Theta + shift + s)}
            phase = 1.0
            if shift is not None and any(k):
                phase = np.exp(TWO_PI_I * float(np.dot(shift, k)))
            if raw_s is not None and any(k):
                ks = {}
                for a, s_raw in enumerate(raw_s):
                    if k[a]:
                        _raw_add(ks, s_raw, TWO_PI_I * k[a])
                if ks:
                    exp_series = {(0, (0,) * angle_dim): {(0,) * var_dim: 1.0}}
                    power = exp_series
                    m_max = max(1, (q - 1) // max(1, s_lead))
                    fact = 1.0
                    for m in range(1, m_max + 1):
                        power = _raw_mul(power, ks, q, kcap)
                        if not power:
                            break
                        fact *= m
                        _raw_add(exp_series, power, 1.0 / fact)
                    mono_total = _raw_mul(mono_total, exp_series, q, kcap)
            # mode shift by k
            shifted = {}
            for (d2, k2), poly in mono_total.items():
                knew = tuple(x + y for x, y in zip(k2, k))
                if any(abs(x) > kcap for x in knew):
                    continue
                slot = shifted.setdefault((d2, knew), {})
                for e2, c2 in poly.items():
                    slot[e2] = slot.get(e2, 0.0) + c2 * phase
            _raw_add(result, shifted)

    explicit = _raw_to_sum(result, var_dim, angle_dim, kcap, tol=tol)

    def tail_fn(u, theta=None, _outer=outer, _inner=inner, _ang=angle_inner,
                _shift=shift, _explicit=explicit):
        th = np.zeros(angle_dim) if theta is None else np.atleast_1d(theta)
        z = np.array([np.asarray(s.evaluate_sum(u, th)) for s in _inner])
        if _ang is not None:
            th_out = th + np.array([np.asarray(s.evaluate_sum(u, th)) for s in _ang])
        else:
            th_out = th.astype(complex) if np.iscomplexobj(z) else th.copy()
        if _shift is not None:
            th_out = th_out + _shift
        full = _outer.evaluate_sum(z, th_out)
        return np.asarray(full) - np.asarray(_explicit.evaluate_sum(u, th))

    return HomogeneousSum(var_dim, angle_dim, kcap, list(explicit.terms),
                          Tail(q, tail_fn))


def radial_parts(fn, uhat, degrees, radius=0.05, n_circle=None):
    """Taylor parts of an analytic map along a fixed ray, by circle FFT.

    ``fn(z * uhat)`` must be analytic in the complex scalar ``z`` near 0;
    returns {degree: coefficient} with coefficients of the expansion
    ``fn(z uhat) = sum_l c_l z^l`` scaled back to homogeneous values
    ``c_l = (homogeneous part of degree l)(uhat)``.
    """
    degrees = sorted(degrees)
    top = degrees[-1]
    P = n_circle if n_circle is not None else max(32, 2 * (top + 4))
    zs = radius * np.exp(TWO_PI_I * np.arange(P) / P)
    samples = np.stack([np.asarray(fn(z * np.asarray(uhat)), dtype=complex) for z in zs])
    coeffs = np.fft.fft(samples, axis=0) / P
    out = {}
    for ell in degrees:
        out[ell] = coeffs[ell % P] / radius**ell
    return out
