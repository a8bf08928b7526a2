"""Closed-form cone-constant bounds for the blown-up escape field.

The diagonal leading parts f = x1^{N-1} S x, g = x1^{N-1} U y give explicit
bounds on the truncated cone {0 < x1 < delta, |x_perp| <= kappa x1} in the
Euclidean norm:

    a_V >= min((sum of other stable rates - lead rate)/sqrt(1+k^2), lead)
           / sqrt(1+k^2),
    a_f >= (lam_1 + kappa^2 sum lam_rest) / (1+kappa^2)^{(N+1)/2-ish},
    b_f <= sqrt(lam_1^2 + kappa^2 max-rest^2),
    A_f >= min(2 N lam_1, 2 lam_rest)/2 - 1.5 kappa max-rest,
    B_g >= min over the expanding rates,

up to O(delta^{N-1}) corrections.  These are cross-checked numerically
against the sampled estimates on the actual field.
"""

from __future__ import annotations

import numpy as np

from ..cones import ConeConstants, ConeSpec
from ..errors import NoValidEll


def cone_constants_closed_form(model, kappa, delta):
    """Evaluate the propositions' bounds for a blown-up FlowModel."""
    lam_x = np.asarray(model.lam_x, dtype=float)  # stable rates (positive)
    lam_y = np.asarray(model.lam_y, dtype=float)  # expanding rates (positive)
    N = model.N
    lam1 = lam_x[0]
    rest = lam_x[1:]
    onek = np.sqrt(1.0 + kappa**2)
    # lateral slack of the image point is kappa (sum rest - lam1) x1^N
    a_V = min(kappa * (np.sum(rest) - lam1) / onek, lam1) / onek**N
    a_f = (lam1 + kappa**2 * np.sum(rest)) / onek ** (N + 0.0)
    b_f = float(np.sqrt(lam1**2 + kappa**2 * np.max(rest) ** 2
                        * (len(rest))))
    A_f = (min(2.0 * N * lam1, *(2.0 * rest)) / 2.0
           - 1.5 * float(np.max(rest)) * kappa) / onek ** 3
    B_g = float(np.min(lam_y))
    return ConeConstants(
        a_f=float(a_f), b_f=b_f, A_f=float(A_f),
        D_f=-float(max(2.0 * N * lam1, *(2.0 * rest)) / 2.0 + 1.5
                   * float(np.max(rest)) * kappa),
        B_g=B_g, a_V=float(a_V), norm="euclid",
    )


def crosscheck_constants(model, kappa, delta, density=9):
    """Closed-form bounds vs sampled estimates on the actual field."""
    from ..cones import estimate_constants

    cone = ConeSpec(model.n, delta, kind="circular", aperture=kappa,
                    sample_density=density)
    sampled = estimate_constants(model, cone, norm="euclid")
    closed = cone_constants_closed_form(model, kappa, delta)
    report = {"sampled": sampled.to_json_dict(), "closed_form": closed.to_json_dict()}
    checks = {
        # the propositions state bounds: sample values must respect them
        "a_f": sampled.a_f >= closed.a_f - sampled.error_bars.get("a_f", 0)
               - 0.05 * abs(closed.a_f),
        "b_f": sampled.b_f <= closed.b_f + sampled.error_bars.get("b_f", 0)
               + 0.05 * abs(closed.b_f),
        "A_f": sampled.A_f >= closed.A_f - sampled.error_bars.get("A_f", 0)
               - 0.05 * abs(closed.A_f) - 1e-9,
        "B_g": sampled.B_g >= closed.B_g - sampled.error_bars.get("B_g", 0)
               - 0.05 * abs(closed.B_g) - 1e-9,
        "a_V": sampled.a_V >= closed.a_V - sampled.error_bars.get("a_V", 0)
               - 0.05 * abs(closed.a_V) - 1e-9,
    }
    report["checks"] = {k: bool(v) for k, v in checks.items()}
    report["ok"] = bool(all(checks.values()))
    return report


def pick_ell(constants, ell_max=10**6):
    """Smallest chart exponent with nu/ell < gamma2 (equilateral branch)."""
    if constants.gamma2 <= 0:
        raise NoValidEll("gamma2 <= 0: no valid chart exponent")
    ell = int(np.ceil(constants.nu / constants.gamma2)) + 1
    if ell > ell_max:
        raise NoValidEll(f"required ell = {ell} exceeds the cap {ell_max}")
    return ell
