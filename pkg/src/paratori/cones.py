"""Cone domains V_{rho,beta} and the constants/hypothesis verdicts of the setup.

Constants follow the sup/inf definitions over the truncated cone:

* ``a_f``  weak contraction of ``x -> x + fbar^N(x,0)``;
* ``b_f``  size of ``fbar^N`` (radius independent);
* ``A_f``, ``D_f`` contraction/expansion of ``Id +- D_x fbar^N``;
* ``B_g``  expansion of ``Id - D_y gbar^M``;
* ``a_V``  quantitative invariance of the cone under ``x + fbar^N``.

Sups/infs are approximated on a deterministic sample of section directions
times log-spaced radii; error bars come from a refined sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCone, NonFiniteQuotient, WeakContractionFail
from .fourier import diophantine_report


class ConeSpec:
    """Cone-like domain: ``halfline`` (n=1) or ``circular`` (axis e_1, n>=2).

    ``circular`` is {x : x_1 > 0, |x_perp| <= aperture * x_1}, truncated at
    radius ``rho``.
    """

    def __init__(self, n, rho, kind=None, aperture=None, sample_density=9):
        self.n = int(n)
        self.rho = float(rho)
        if kind is None:
            kind = "halfline" if self.n == 1 else "circular"
        self.kind = kind
        if kind == "halfline" and self.n != 1:
            raise ValueError("halfline cone requires n=1")
        if kind == "circular":
            if aperture is None:
                raise ValueError("circular cone needs an aperture")
            self.aperture = float(aperture)
        else:
            self.aperture = None
        self.sample_density = int(sample_density)

    # -- geometry ----------------------------------------------------------

    def contains(self, x, rho=None):
        x = np.asarray(x, dtype=float)
        rho = self.rho if rho is None else rho
        if self.kind == "halfline":
            return bool(x[0] > 0.0 and x[0] <= rho)
        perp = np.linalg.norm(x[1:])
        return bool(x[0] > 0.0 and perp <= self.aperture * x[0]
                    and np.linalg.norm(x) <= rho)

    def distance_to_complement(self, x, rho=None):
        """Euclidean distance from x to the complement of V_rho."""
        x = np.asarray(x, dtype=float)
        rho = self.rho if rho is None else rho
        if self.kind == "halfline":
            if not (0.0 < x[0] <= rho):
                return 0.0
            return min(x[0], rho - x[0])
        perp = np.linalg.norm(x[1:])
        lateral = (self.aperture * x[0] - perp) / math.sqrt(1.0 + self.aperture**2)
        radial = rho - x[0]
        return max(0.0, min(lateral, radial))

    def section_directions(self, density=None):
        """Deterministic unit directions spanning the cone section."""
        density = self.sample_density if density is None else int(density)
        if self.kind == "halfline":
            return np.array([[1.0]])
        kappa = self.aperture
        if self.n == 2:
            phimax = math.atan(kappa)
            phis = np.linspace(-phimax, phimax, density)
            return np.stack([np.cos(phis), np.sin(phis)], axis=1)
        if self.n == 3:
            dirs = [np.array([1.0, 0.0, 0.0])]
            n_t = max(2, density // 2)
            n_psi = max(4, density)
            for t in np.linspace(kappa / n_t, kappa, n_t):
                for psi in np.linspace(0.0, 2 * np.pi, n_psi, endpoint=False):
                    v = np.array([1.0, t * math.cos(psi), t * math.sin(psi)])
                    dirs.append(v / np.linalg.norm(v))
            return np.stack(dirs)
        raise ValueError("section sampling implemented for n <= 3")

    def sample_points(self, density=None, n_radii=None, radius_floor=0.05):
        # radius_floor keeps the defining quotients away from the
        # cancellation regime eps * r^(1-N) of the norm differences
        dirs = self.section_directions(density)
        n_radii = (self.sample_density if n_radii is None else int(n_radii))
        radii = np.geomspace(radius_floor * self.rho, self.rho, max(2, n_radii))
        pts = [r * d for d in dirs for r in radii]
        if not pts:
            raise EmptyCone("no sample points")
        return np.stack(pts)

    def to_json_dict(self):
        out = {"n": self.n, "rho": self.rho, "kind": self.kind,
               "sample_density": self.sample_density}
        if self.aperture is not None:
            out["aperture"] = self.aperture
        return out


@dataclass
class ConeConstants:
    a_f: float
    b_f: float
    A_f: float
    D_f: float
    B_g: float
    a_V: float
    error_bars: dict = field(default_factory=dict)
    E_star: float | None = None
    q_star: int | None = None
    j_star_u: int | None = None
    verdicts: dict = field(default_factory=dict)
    norm: str = "max"

    def to_json_dict(self):
        return {
            "a_f": self.a_f, "b_f": self.b_f, "A_f": self.A_f, "D_f": self.D_f,
            "B_g": self.B_g, "a_V": self.a_V,
            "error_bars": dict(self.error_bars),
            "E_star": self.E_star, "q_star": self.q_star, "j_star_u": self.j_star_u,
            "verdicts": self.verdicts, "norm": self.norm,
        }


def _vec_norm(x, norm):
    if norm == "max":
        return float(np.max(np.abs(x)))
    return float(np.linalg.norm(x))


def _mat_norm(a, norm):
    a = np.atleast_2d(a)
    if norm == "max":
        return float(np.max(np.sum(np.abs(a), axis=1)))
    return float(np.linalg.norm(a, 2))


def _constants_on_sample(model, cone, pts, norm):
    n = model.n
    sup_a = -np.inf
    sup_b = -np.inf
    sup_A = -np.inf
    sup_D = -np.inf
    sup_B = -np.inf
    inf_aV = np.inf
    eye_n = np.eye(n)
    eye_m = np.eye(model.m) if model.m else None
    for x in pts:
        nx = _vec_norm(x, norm)
        f = np.atleast_1d(model.fbar_lead(x))
        if not np.all(np.isfinite(f)):
            raise NonFiniteQuotient(f"fbar^N not finite at {x}")
        sup_a = max(sup_a, (_vec_norm(x + f, norm) - nx) / nx**model.N)
        sup_b = max(sup_b, _vec_norm(f, norm) / nx**model.N)
        df = np.atleast_2d(model.dx_fbar_lead(x))
        sup_A = max(sup_A, (_mat_norm(eye_n + df, norm) - 1.0) / nx ** (model.N - 1))
        sup_D = max(sup_D, (_mat_norm(eye_n - df, norm) - 1.0) / nx ** (model.N - 1))
        if eye_m is not None:
            dg = np.atleast_2d(model.dy_gbar_lead(x))
            sup_B = max(sup_B, (_mat_norm(eye_m - dg, norm) - 1.0) / nx ** (model.M - 1))
        inf_aV = min(inf_aV, cone.distance_to_complement(x + f) / nx**model.N)
    B_g = -sup_B if eye_m is not None else 0.0
    return dict(a_f=-sup_a, b_f=sup_b, A_f=-sup_A, D_f=-sup_D, B_g=B_g, a_V=inf_aV)


def estimate_constants(model, cone, norm="max", density=None, n_radii=None):
    """Sample-based estimates of a_f, b_f, A_f, D_f, B_g, a_V with error bars.

    ``b_f`` uses sup over the sample (the inf over the parameter grid is the
    caller's responsibility when mapping over a family).  Error bars are the
    change under one sample refinement.
    """
    density = cone.sample_density if density is None else density
    coarse = _constants_on_sample(model, cone, cone.sample_points(density, n_radii), norm)
    fine_pts = cone.sample_points(2 * density - 1, None if n_radii is None else 2 * n_radii)
    fine = _constants_on_sample(model, cone, fine_pts, norm)
    bars = {k: abs(fine[k] - coarse[k]) for k in fine}
    return ConeConstants(error_bars=bars, norm=norm, **fine)


def derived_indices(constants, N, M, P, margin=0.05):
    """E*, q* and j_u* from the estimated constants.

    ``E*`` is (1+margin) times its strict lower bound; ``q*`` uses the
    integer part of the max expression; ``j_u*`` is 1 when D_f >= 0 and
    the integer part of -D_f/a_f otherwise.
    """
    a_f, D_f, B_g = constants.a_f, constants.D_f, constants.B_g
    if a_f <= 0:
        raise WeakContractionFail(f"a_f = {a_f:.3e} <= 0")
    if M == N:
        lower = max(-B_g, -D_f, 0.0)
    else:
        lower = max(-B_g, 0.0)
    E_star = (1.0 + margin) * lower
    expr = max(2 * N - P, 2 * N - M + 1,
               N - 1 + (N - 1) / (N - 5.0 / 3.0) * E_star / a_f)
    q_star = int(math.floor(expr + 1e-12))
    if D_f >= 0:
        j_star = 1
    else:
        j_star = int(math.floor(-D_f / a_f + 1e-12))
    constants.E_star = E_star
    constants.q_star = q_star
    constants.j_star_u = j_star
    return E_star, q_star, j_star


def _verdict(value, threshold, bar=0.0, strict_greater=True):
    ok = value > threshold if strict_greater else value >= threshold
    marginal = abs(value - threshold) <= bar
    return {
        "status": "marginal" if (ok and marginal) else ("pass" if ok else "fail"),
        "value": float(value),
        "threshold": float(threshold),
    }


def check_hypotheses(model, cone, constants, margin=0.05, k_max=30, density=None):
    """Named verdicts for the existence/approximation theorem hypotheses."""
    N, M, P = model.N, model.M, model.P
    if constants.E_star is None:
        try:
            derived_indices(constants, N, M, P, margin=margin)
        except WeakContractionFail:
            pass
    bars = constants.error_bars
    verdicts = {}
    verdicts["weak_contraction"] = _verdict(constants.a_f, 0.0, bars.get("a_f", 0.0))
    verdicts["cone_invariance"] = _verdict(constants.a_V, 0.0, bars.get("a_V", 0.0))
    if constants.q_star is not None:
        verdicts["q_at_least_q_star"] = _verdict(model.q, constants.q_star,
                                                 strict_greater=False)
    verdicts["Af_gt_bf_maxNP"] = _verdict(
        constants.A_f, constants.b_f * max(1, N - P),
        bars.get("A_f", 0.0) + bars.get("b_f", 0.0),
    )
    kind = "flow" if getattr(model, "kind", "map") == "flow" else "map"
    freq = model.freq
    dim = freq.extended().size if kind == "flow" else freq.omega.size
    if dim > 0:
        tau0 = dim if kind == "map" else dim + 1
        rep = diophantine_report(freq, k_max, [tau0, tau0 + 1.0], kind=kind)
        verdicts["diophantine"] = {
            "status": "fail" if rep["resonant"] else "pass",
            "value": rep["c"][float(tau0)],
            "threshold": 0.0,
            "report": rep,
        }
    else:
        verdicts["diophantine"] = {"status": "pass", "value": math.inf,
                                   "threshold": 0.0,
                                   "report": {"note": "no angles (d=0)"}}

    pts = cone.sample_points(density)
    if model.m > 0:
        if M < N:
            sigma_min = np.inf
            for x in pts:
                dg = np.atleast_2d(model.dy_gbar_lead(x))
                s = np.linalg.svd(dg, compute_uv=False)[-1]
                sigma_min = min(sigma_min, s / _vec_norm(x, constants.norm) ** (M - 1))
            verdicts["gbar_invertible"] = _verdict(sigma_min, 0.0)
        else:
            verdicts["two_plus_Bg_over_af"] = _verdict(
                2.0 + constants.B_g / constants.a_f, 0.0,
                bars.get("B_g", 0.0) / max(constants.a_f, 1e-300),
            )
        worst = 0.0
        thetas = ([np.zeros(model.freq_dim)] if model.freq_dim == 0
                  else [np.full(model.freq_dim, t) for t in np.linspace(0, 1, 8, endpoint=False)])
        for x in pts[:: max(1, len(pts) // 16)]:
            for th in thetas:
                g = np.atleast_1d(model.g_lead(x, np.zeros(model.m), th))
                worst = max(worst, float(np.max(np.abs(g))))
        scale = float(np.max(np.linalg.norm(pts, axis=1)) ** M)
        verdicts["g_M_vanishes_on_x_axis"] = {
            "status": "pass" if worst <= 1e-9 * max(1.0, scale) else "fail",
            "value": worst,
            "threshold": 1e-9 * max(1.0, scale),
        }
        verdicts["Bg_positive"] = _verdict(constants.B_g, 0.0, bars.get("B_g", 0.0))
    constants.verdicts = verdicts
    return verdicts


def required_pass(verdicts, model):
    """Names of verdicts that gate the existence theorem for this model."""
    names = ["weak_contraction", "cone_invariance", "Af_gt_bf_maxNP", "diophantine"]
    if "q_at_least_q_star" in verdicts:
        names.append("q_at_least_q_star")
    if model.m > 0:
        names.append("g_M_vanishes_on_x_axis")
        names.append("gbar_invertible" if model.M < model.N else "two_plus_Bg_over_af")
    return names
