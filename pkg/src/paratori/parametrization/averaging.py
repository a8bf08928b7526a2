"""Angle-removal averaging for map models.

A sequence of near-identity changes of variables, one per degree, removes the
oscillatory (zero-mean) part of every homogeneous part below a target order.
Each sweep conjugates by

    (x, y, theta) = C(xi, eta, phi) = (xi, eta, phi) + C^j(xi, eta, phi),

with ``C^j`` the zero-average solution of the small-divisors equation for the
oscillatory part at degree j; the averaged parts (in particular fbar^N at
y = 0) are untouched.  Works on polynomial model data; the transformed model
carries an exact closure tail built from the original map and the accumulated
change.
"""

from __future__ import annotations

import numpy as np

from ..errors import HypothesisFail
from ..fourier import solve_small_divisors_map
from ..homogeneous import HomogeneousSum, truncated_compose
from .models import MapModel, identity_sum


def _osc_degrees(comps, lead, cap, tol=1e-14):
    """Degrees < cap carrying oscillatory mass in any listed component."""
    out = set()
    for s in comps:
        for deg, fm in s.terms:
            if deg >= cap or deg < lead:
                continue
            if fm.oscillatory().norm() > tol:
                out.add(deg)
    return out


def _compose_corrections(outer_corr, inner_corr, nm, adim, trunc, q):
    """Corrections of C_outer o C_inner for near-identity changes."""
    inner_full = [identity_sum(nm, i, adim, trunc).add(inner_corr[i])
                  for i in range(nm)]
    ang = inner_corr[nm:] if len(inner_corr) > nm else None
    out = []
    for i, s in enumerate(outer_corr):
        comp = truncated_compose(s, inner_full, q, angle_inner=ang,
                                 new_var_dim=nm).drop_tail()
        base = inner_corr[i] if i < nm else inner_corr[i]
        out.append(base.add(comp))
    return out


class ChangeOfVariables:
    """Near-identity change C = Id + corrections, with pointwise inverse."""

    def __init__(self, n, m, d, corrections, truncation):
        self.n, self.m, self.d = n, m, d
        self.corr = corrections  # n+m+d scalar sums in (n+m) vars
        self.truncation = truncation

    def forward(self, z, theta):
        z = np.asarray(z)
        dz = np.array([s.evaluate_sum(z, theta) for s in self.corr[: self.n + self.m]])
        dth = np.array([s.evaluate_sum(z, theta) for s in self.corr[self.n + self.m:]])
        return z + dz, (np.asarray(theta) + dth if self.d else np.asarray(theta))

    def inverse(self, z, theta, tol=1e-15, max_iter=60):
        """Solve C(zeta, phi) = (z, theta) by fixed-point iteration."""
        want_complex = np.iscomplexobj(z) or np.iscomplexobj(theta)
        dtype = complex if want_complex else float
        zeta = np.asarray(z, dtype=dtype).copy()
        phi = np.asarray(theta, dtype=dtype).copy()
        for _ in range(max_iter):
            dz = np.array([s.evaluate_sum(zeta, phi)
                           for s in self.corr[: self.n + self.m]])
            dth = (np.array([s.evaluate_sum(zeta, phi)
                             for s in self.corr[self.n + self.m:]])
                   if self.d else 0.0)
            new_zeta = np.asarray(z) - dz
            new_phi = np.asarray(theta) - dth if self.d else phi
            gap = np.max(np.abs(new_zeta - zeta))
            if self.d:
                gap = max(gap, np.max(np.abs(new_phi - phi)))
            zeta, phi = new_zeta, new_phi
            if gap < tol:
                break
        return zeta, phi


def reduce_angle_dependence(model, target_order=None, divisor_floor=1e-8):
    """Transform a map model so all parts below ``target_order`` are angle free.

    Returns (transformed MapModel, change record).  The averaged leading part
    fbar^N(x, 0) is preserved exactly.  Polynomial model data only.
    """
    if model.kind != "map":
        raise HypothesisFail("angle reduction is implemented for map models")
    if not model.is_poly():
        raise HypothesisFail("angle reduction needs polynomial model data")
    target = model.q if target_order is None else min(int(target_order), model.q)
    n, m, d = model.n, model.m, model.d
    nm = n + m
    adim = model.d
    trunc = model.truncation
    q = model.q

    # working copies of the explicit parts (tails handled at the end)
    F = [s.drop_tail() for s in model.f] + [s.drop_tail() for s in model.g] \
        + [s.drop_tail() for s in model.h]
    leads = [model.N] * n + [model.M] * m + [model.P] * d
    total_corr = [HomogeneousSum(nm, adim, trunc) for _ in range(nm + d)]
    sweeps = []

    while True:
        degs = set()
        for lead, s in zip(leads, F):
            degs |= _osc_degrees([s], lead, target)
        if not degs:
            break
        jdeg = min(degs)
        # change corrections at this degree: C^j = D[oscillatory part]
        corr = []
        for ci, s in enumerate(F):
            fm = s.part(jdeg)
            osc = fm.oscillatory() if fm is not None else None
            if osc is not None and osc.norm() > 1e-14:
                sol = solve_small_divisors_map(osc, model.freq,
                                               divisor_floor=divisor_floor)
                corr.append(HomogeneousSum(nm, adim, trunc, [(jdeg, sol)]))
            else:
                corr.append(HomogeneousSum(nm, adim, trunc))
        sweeps.append((jdeg, [c.norm() for c in corr]))

        # conjugate: F <- C^{-1} o F o C, truncated below q
        C_full = [identity_sum(nm, i, adim, trunc).add(corr[i]) for i in range(nm)]
        C_ang = corr[nm:] if d else None

        FC = []
        for ci, s in enumerate(F):
            comp = truncated_compose(s, C_full, q, angle_inner=C_ang,
                                     new_var_dim=nm).drop_tail()
            FC.append(corr[ci].add(comp))  # corrections of F o C beyond identity+omega

        # inverse correction series W with (Id + W) o C = Id
        W = [HomogeneousSum(nm, adim, trunc) for _ in range(nm + d)]
        for _ in range(q):
            W_new = []
            for ci in range(nm + d):
                comp = truncated_compose(corr[ci],
                                         [identity_sum(nm, i, adim, trunc).add(W[i])
                                          for i in range(nm)],
                                         q, angle_inner=(W[nm:] if d else None),
                                         new_var_dim=nm).drop_tail()
                W_new.append(comp.scale(-1.0))
            if all((a.add(b.scale(-1.0))).norm() < 1e-15 for a, b in zip(W, W_new)):
                W = W_new
                break
            W = W_new

        # F_hat corrections = FC + W o (F o C)
        FC_inner = [identity_sum(nm, i, adim, trunc).add(FC[i]) for i in range(nm)]
        ang_FC = FC[nm:] if d else None
        omega_shift = model.freq.omega if d else None
        F_new = []
        for ci in range(nm + d):
            if W[ci].norm() > 0:
                comp = truncated_compose(W[ci], FC_inner, q, angle_inner=ang_FC,
                                         angle_shift=omega_shift,
                                         new_var_dim=nm).drop_tail()
                F_new.append(FC[ci].add(comp))
            else:
                F_new.append(FC[ci])
        F = F_new
        total_corr = _compose_corrections(total_corr, corr, nm, adim, trunc, q)

    change = ChangeOfVariables(n, m, d, total_corr, trunc)

    # closure tails from the original model through the accumulated change
    def make_tail(index):
        def tail(z, theta=None, _idx=index):
            th = np.zeros(d) if theta is None else np.atleast_1d(theta)
            zc, thc = change.forward(np.asarray(z), th)
            x, y = zc[:n], zc[n:]
            fx = np.array([s.evaluate_sum(zc, thc) for s in model.f])
            gy = np.array([s.evaluate_sum(zc, thc) for s in model.g])
            hh = np.array([s.evaluate_sum(zc, thc) for s in model.h])
            Fx = x + fx
            Fy = y + gy
            Fth = thc + (model.freq.omega if d else 0.0) + hh
            zi, thi = change.inverse(np.concatenate([Fx, Fy]), Fth)
            full = np.concatenate([
                zi - np.asarray(z)[: n + m],
                (thi - th - model.freq.omega) if d else np.zeros(0),
            ])
            explicit = F[_idx].evaluate_sum(np.asarray(z), th)
            return full[_idx] - explicit

        return tail

    from ..homogeneous import Tail

    f_new = [HomogeneousSum(nm, adim, trunc, list(F[i].terms), Tail(q, make_tail(i)))
             for i in range(n)]
    g_new = [HomogeneousSum(nm, adim, trunc, list(F[n + b].terms),
                            Tail(q, make_tail(n + b))) for b in range(m)]
    h_new = [HomogeneousSum(nm, adim, trunc, list(F[nm + a].terms),
                            Tail(q, make_tail(nm + a))) for a in range(d)]
    new_model = MapModel(n, m, d, model.N, model.M, model.P, model.q, model.freq,
                         f_new, g_new, h_new, truncation=trunc,
                         name=model.name + "+averaged")
    record = {"sweeps": sweeps, "change": change}
    return new_model, record
