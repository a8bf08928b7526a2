import numpy as np
import pytest

from paratori.cones import ConeSpec, check_hypotheses, derived_indices, estimate_constants
from paratori.errors import WeakContractionFail
from paratori.fourier import Frequency

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class StubModel:
    """Minimal model protocol: leading averaged parts given as callables."""

    def __init__(self, n, m, N, M, P, q, fbar, dx_fbar, dy_gbar=None, g_lead=None,
                 omega=(GOLDEN,), kind="map", d=1):
        self.n, self.m, self.d = n, m, d
        self.N, self.M, self.P, self.q = N, M, P, q
        self._fbar, self._dx = fbar, dx_fbar
        self._dy = dy_gbar
        self._g = g_lead
        self.freq = Frequency(list(omega))
        self.kind = kind
        self.freq_dim = d

    def fbar_lead(self, x):
        return np.atleast_1d(self._fbar(np.asarray(x, float)))

    def dx_fbar_lead(self, x):
        return np.atleast_2d(self._dx(np.asarray(x, float)))

    def dy_gbar_lead(self, x):
        return np.atleast_2d(self._dy(np.asarray(x, float)))

    def g_lead(self, x, y, theta):
        if self._g is None:
            return np.zeros(self.m)
        return np.atleast_1d(self._g(x, y, theta))


def cubic_model(M=3, P=3, N=3, gbar_coeff=1.0, q=7):
    # n = m = 1, fbar^N = -x^N, gbar^M = gbar_coeff * x^(M-1) y
    return StubModel(
        1, 1, N, M, P, q,
        fbar=lambda x: -x[0] ** N,
        dx_fbar=lambda x: -N * x[0] ** (N - 1),
        dy_gbar=lambda x: gbar_coeff * x[0] ** (M - 1),
        g_lead=lambda x, y, th: gbar_coeff * x[0] ** (M - 1) * y[0],
    )


def test_paper_one_dimensional_values():
    cone = ConeSpec(1, 0.1)
    consts = estimate_constants(cubic_model(), cone)
    assert consts.a_f == pytest.approx(1.0, abs=1e-9)
    assert consts.b_f == pytest.approx(1.0, abs=1e-9)
    assert consts.A_f == pytest.approx(3.0, rel=1e-3)
    assert consts.D_f == pytest.approx(-3.0, rel=1e-3)
    assert consts.a_V > 0


def test_Bg_expanding_linear_y():
    # dy gbar^M(x,0) = x^(M-1): |1 - x^(M-1)| - 1 = -x^(M-1), sup quotient -1
    cone = ConeSpec(1, 0.1)
    consts = estimate_constants(cubic_model(M=3, gbar_coeff=1.0), cone)
    assert consts.B_g == pytest.approx(1.0, rel=1e-6)


def test_zero_field_weak_contraction_fails():
    model = StubModel(1, 0, 3, 3, 3, 7, fbar=lambda x: 0.0, dx_fbar=lambda x: 0.0)
    cone = ConeSpec(1, 0.1)
    consts = estimate_constants(model, cone)
    assert consts.a_f == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(WeakContractionFail):
        derived_indices(consts, 3, 3, 3)
    verdicts = check_hypotheses(model, cone, consts)
    assert verdicts["weak_contraction"]["status"] == "fail"


def test_derived_indices_examples():
    cone = ConeSpec(1, 0.05)
    # Bg > 0 and Df > 0 synthetic: fbar = -x^4 has Df = -4, so fake constants
    from paratori.cones import ConeConstants

    c = ConeConstants(a_f=1.0, b_f=1.0, A_f=4.0, D_f=0.5, B_g=0.5, a_V=1.0)
    E, qs, ju = derived_indices(c, 4, 4, 4)
    assert E == 0.0
    assert qs == 5  # [max{4, 5, 3 + 0}]
    assert ju == 1  # D_f >= 0

    consts = estimate_constants(cubic_model(N=3), cone)
    _, _, ju = derived_indices(consts, 3, 3, 3)
    assert ju == 3  # n=1: D_f = -N a_f


def test_hypothesis_checks_pass_and_fail():
    cone = ConeSpec(1, 0.05)
    model = cubic_model()
    consts = estimate_constants(model, cone)
    derived_indices(consts, model.N, model.M, model.P)
    verdicts = check_hypotheses(model, cone, consts)
    assert verdicts["Af_gt_bf_maxNP"]["status"] == "pass"  # 3 > 1
    assert verdicts["g_M_vanishes_on_x_axis"]["status"] == "pass"
    assert verdicts["two_plus_Bg_over_af"]["status"] == "pass"

    # P = 1, N = 4: requires A_f > 3 b_f, i.e. 4 > 3
    model4 = StubModel(
        1, 1, 4, 4, 1, 9,
        fbar=lambda x: -x[0] ** 4,
        dx_fbar=lambda x: -4 * x[0] ** 3,
        dy_gbar=lambda x: x[0] ** 3,
        g_lead=lambda x, y, th: x[0] ** 3 * y[0],
    )
    consts4 = estimate_constants(model4, cone)
    derived_indices(consts4, 4, 4, 1)
    v4 = check_hypotheses(model4, cone, consts4)
    assert v4["Af_gt_bf_maxNP"]["status"] == "pass"
    assert consts4.A_f == pytest.approx(4.0, rel=1e-3)

    # hypothesis (iv) failure: g^M(x,0) = x^M != 0
    bad = StubModel(
        1, 1, 3, 3, 3, 7,
        fbar=lambda x: -x[0] ** 3,
        dx_fbar=lambda x: -3 * x[0] ** 2,
        dy_gbar=lambda x: x[0] ** 2,
        g_lead=lambda x, y, th: x[0] ** 3,
    )
    consts_bad = estimate_constants(bad, cone)
    v_bad = check_hypotheses(bad, cone, consts_bad)
    assert v_bad["g_M_vanishes_on_x_axis"]["status"] == "fail"


def test_rho_monotonicity_and_af_le_bf():
    # 2-d field with genuine radial dependence of the quotients
    def fbar(x):
        return np.array([-x[0] ** 3 - 0.2 * x[0] * x[1] ** 2, -2.0 * x[0] ** 2 * x[1]])

    def dx_fbar(x):
        return np.array(
            [
                [-3 * x[0] ** 2 - 0.2 * x[1] ** 2, -0.4 * x[0] * x[1]],
                [-4.0 * x[0] * x[1], -2.0 * x[0] ** 2],
            ]
        )

    model = StubModel(2, 0, 3, 3, 3, 7, fbar=fbar, dx_fbar=dx_fbar)
    values = {}
    for rho in (0.02, 0.08):
        cone = ConeSpec(2, rho, aperture=0.4)
        values[rho] = estimate_constants(model, cone, density=13)
    small, large = values[0.02], values[0.08]
    tol = 1e-8
    assert small.a_f >= large.a_f - tol
    assert small.A_f >= large.A_f - tol
    assert small.D_f >= large.D_f - tol
    assert abs(small.b_f - large.b_f) <= 1e-9  # b_f radius independent
    for c in values.values():
        assert c.a_f <= c.b_f + 1e-12


def test_two_densities_agree_within_bars():
    cone = ConeSpec(1, 0.05)
    consts = estimate_constants(cubic_model(), cone)
    # exact values for the cubic model; bars should cover the refinement step
    for key, bar in consts.error_bars.items():
        assert bar < 1e-2
