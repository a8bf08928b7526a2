import numpy as np
import pytest

from paratori.cones import estimate_constants
from paratori.homogeneous import HomogeneousTerm
from paratori.modelio import (
    cone_from_dict,
    invariant_toy_spec,
    model_from_dict,
    planar_flow_spec,
    synthetic_flow_spec,
    synthetic_map_spec,
)
from paratori.parametrization import (
    approximate_flow,
    approximate_map,
    choice_independence,
    iterate_bound_check,
    nearest_branch,
    reduce_angle_dependence,
    residual_point,
    residual_report,
    roots_of_unity_branches,
    shadow_validate,
)
from paratori.cones import ConeSpec


def build(spec):
    model = model_from_dict(spec)
    cone = cone_from_dict(spec, model.n)
    return model, cone


def test_invariant_toy_exact_zero_residual():
    model, cone = build(invariant_toy_spec())
    par = approximate_map(model, 3, cone)
    # K = (u, 0, Theta), R = (u - u^3, Theta + omega) exactly
    assert all(not s.terms for s in par.Ky)
    assert all(not s.terms for s in par.Kth)
    assert all(not s.terms for s in par.Rth)  # P = N: R_Theta = Theta + omega
    ru = par.Ru[0]
    assert [d for d, _ in ru.terms] == [3]
    rng = np.random.default_rng(0)
    for _ in range(12):
        u = rng.uniform(1e-3, 5e-2)
        th = rng.uniform(0, 1)
        E = residual_point(model, par, [u], [th])
        assert np.max(np.abs(E)) < 1e-14


def test_map_residual_orders_and_exact_RTheta():
    model, cone = build(synthetic_map_spec())
    for j in (1, 2, 3):
        par = approximate_map(model, j, cone)
        assert all(not s.terms for s in par.Rth)  # P = N
        rep = residual_report(model, par, radii=np.geomspace(1e-3, 1e-1, 9))
        for name, slope in rep["slopes"].items():
            assert slope >= j + model.N - 0.2, (j, name, slope)


def test_map_K_layout_matches_construction():
    model, cone = build(synthetic_map_spec())
    j = 3
    par = approximate_map(model, j, cone)
    # oscillatory x-blocks live at degrees l+N-1 and have zero average
    for deg, fm in par.Kx[0].terms:
        avg = fm.average()
        osc = fm.oscillatory()
        if avg is not None and avg.norm() > 1e-13:
            assert 2 <= deg <= j  # averaged K_x^l, l <= j
        if osc.norm() > 1e-13:
            assert deg >= model.N  # oscillatory at l+N-1
    # inner dynamics beyond j_u* vanishes: n=1 gives j_u* = N = 3
    for deg, fm in par.Ru[0].terms:
        assert deg <= model.N + par.order - 1
    assert par.free_choices


def test_inner_map_average_is_angle_free():
    model, cone = build(synthetic_map_spec())
    par = approximate_map(model, 2, cone)
    for s in par.Ru + par.Rth:
        for _, fm in s.terms:
            assert fm.oscillatory().norm() < 1e-12


def test_flow_quasiperiodic_single_mode():
    spec = synthetic_flow_spec()
    model, cone = build(spec)
    par = approximate_flow(model, 1, cone)
    # base-step oscillatory solve: coefficient eps/2 / (2 pi i nu) at mode 1
    blk = None
    for deg, fm in par.Kx[0].terms:
        if deg == model.N and (1,) in fm.coeffs:
            blk = fm.coeffs[(1,)]
    assert blk is not None
    nu = model.freq.time_freq[0]
    expected = (0.35 / 2.0) / (2j * np.pi * nu)
    got = complex(blk.coeffs[(3,)])
    assert abs(got - expected) < 1e-12


def test_flow_residual_orders_exact_engine():
    model, cone = build(synthetic_flow_spec())
    for j in (1, 2, 3):
        par = approximate_flow(model, j, cone)
        rep = residual_report(model, par, radii=np.geomspace(1e-3, 1e-1, 9))
        for name, slope in rep["slopes"].items():
            assert slope >= j + model.N - 0.2, (j, name, slope)


def test_flow_sampled_engine_n2():
    model, cone = build(planar_flow_spec())
    for j in (1, 2):
        par = approximate_flow(model, j, cone)
        rep = residual_report(model, par, radii=np.geomspace(3e-3, 1e-1, 8),
                              cone=cone)
        for name, slope in rep["slopes"].items():
            assert slope >= j + model.N - 0.2, (j, name, slope)
    # the quadrature-backed averaged y-solve produced a genuine K_y
    assert any(any(fm.norm() > 1e-4 for _, fm in s.terms) for s in par.Ky)


def test_reduce_angle_dependence():
    model, cone = build(synthetic_map_spec())
    reduced, record = reduce_angle_dependence(model)
    assert record["sweeps"]
    for comps in (reduced.f, reduced.g, reduced.h):
        for s in comps:
            for deg, fm in s.terms:
                if deg < model.q:
                    assert fm.oscillatory().norm() < 1e-11, deg
    # fbar^N(x, 0) preserved exactly
    for x in (0.03, 0.07):
        before = model.fbar_lead([x])
        after = reduced.fbar_lead([x])
        assert np.max(np.abs(before - after)) < 1e-12
    # conjugation identity: C^{-1} o F o C == reduced model (incl. tails)
    ch = record["change"]
    rng = np.random.default_rng(1)
    for _ in range(6):
        z = np.array([rng.uniform(1e-3, 3e-2), rng.uniform(-1e-3, 1e-3)])
        th = np.array([rng.uniform(0, 1)])
        zc, thc = ch.forward(z, th)
        Fx, Fy, Fth = model.apply(zc[:1], zc[1:], thc)
        zi, thi = ch.inverse(np.concatenate([Fx, Fy]), Fth)
        Gx, Gy, Gth = reduced.apply(z[:1], z[1:], th)
        assert np.max(np.abs(np.concatenate([Gx, Gy]) - zi)) < 1e-13
        assert np.max(np.abs(Gth - thi)) < 1e-13


def test_reduce_already_independent_is_identity():
    model, cone = build(invariant_toy_spec())
    reduced, record = reduce_angle_dependence(model)
    assert record["sweeps"] == []


def test_shadow_validate_toy_and_slope():
    model, cone = build(invariant_toy_spec())
    par = approximate_map(model, 3, cone)
    rep = shadow_validate(model, par, [1e-2], [0.2], steps=100, cone=cone)
    assert rep["sup_error"] < 1e-13

    model2, cone2 = build(synthetic_map_spec())
    j = 3
    par2 = approximate_map(model2, j, cone2)
    u0s = np.geomspace(3e-3, 3e-2, 6)
    errs = []
    for u0 in u0s:
        rep = shadow_validate(model2, par2, [u0], [0.1], steps=400, cone=cone2)
        errs.append(rep["sup_error"] + 1e-300)
    slope = np.polyfit(np.log(u0s), np.log(errs), 1)[0]
    assert slope >= j + 1 - 0.25  # error ~ u0^(j+N-(N-1))


def test_off_manifold_y_distance_grows():
    model, cone = build(synthetic_map_spec())  # B_g = 1 > 0
    par = approximate_map(model, 3, cone)
    u0, th0 = np.array([2e-2]), np.array([0.3])
    x, y, th = par.K_eval(u0, th0)
    delta = 1e-6
    xo, yo, tho = x.copy(), y + delta, th.copy()
    on_y, off_gap = [], []
    for _ in range(200):
        x, y, th = model.apply(x, y, th)
        xo, yo, tho = model.apply(xo, yo, tho)
        off_gap.append(abs(yo[0] - y[0]))
    assert off_gap[-1] >= delta * 0.99  # |F_eta| >= |eta| along the run
    assert off_gap[-1] > off_gap[0]


def test_iterate_bound_check_cubic():
    cone = ConeSpec(1, 0.1)
    rep = iterate_bound_check(lambda v: v - v**3, cone, a_star=1.9, b_star=2.1,
                              k_max=10_000, N=3, count=100, radius=0.1)
    assert rep["violations"] == 0
    assert rep["worst_lower_margin"] >= 0.0
    assert rep["worst_upper_margin"] >= 0.0
    # k = 0 edge: bounds collapse to |v| = |v| by construction
    v = 0.05
    assert abs(v / (1 + 0 * 2.1 * v**2) ** 0.5 - v) == 0.0


def test_roots_of_unity_scalar_and_rotation():
    def G(p):
        x = p[0]
        return (-x * (1 - x**2),)

    K_points = [(u,) for u in np.geomspace(1e-3, 0.3, 60)]
    rep = roots_of_unity_branches(G, A=[[-1.0]], B=None, K_points=K_points)
    assert rep["ell"] == 2
    x = 0.21
    branch_expect = 0
    for k in range(1000):
        idx, _ = nearest_branch((x,), rep["branches"])
        assert idx == branch_expect
        x = -x * (1 - x**2)
        branch_expect = 1 - branch_expect

    rot = [[np.cos(2 * np.pi / 3), -np.sin(2 * np.pi / 3)],
           [np.sin(2 * np.pi / 3), np.cos(2 * np.pi / 3)]]
    rep3 = roots_of_unity_branches(lambda p: p, A=rot, B=None,
                                   K_points=[(1.0, 0.0)])
    assert rep3["ell"] == 3


def test_choice_independence_diagnostic():
    model, cone = build(synthetic_map_spec())
    par_a = approximate_map(model, 2, cone)
    cand = HomogeneousTerm.poly(2, 1, {(2,): 0.05})
    par_b = approximate_map(model, 2, cone, free_terms={("K_x", 2): cand})
    assert par_b.free_choices[("K_x", 2)] == "supplied"
    rep_b = residual_report(model, par_b, radii=np.geomspace(1e-3, 1e-1, 9))
    for name, slope in rep_b["slopes"].items():
        assert slope >= 2 + model.N - 0.2
    diag = choice_independence(model, par_a, par_b)
    assert diag["supported"]
    assert np.isfinite(diag["worst_scaled_gap"])


def test_truncation_degradation_increases_residual():
    spec = synthetic_map_spec()
    model, cone = build(spec)
    par = approximate_map(model, 2, cone)
    rep = residual_report(model, par, radii=np.geomspace(1e-2, 1e-1, 6))

    # degrade: drop all oscillatory blocks from K (truncation -> 0)
    import copy

    par2 = copy.copy(par)
    par2.Kx = [_avg_only(s) for s in par.Kx]
    par2.Ky = [_avg_only(s) for s in par.Ky]
    par2.Kth = [_avg_only(s) for s in par.Kth]
    rep2 = residual_report(model, par2, radii=np.geomspace(1e-2, 1e-1, 6))
    assert rep2["max_residual"]["x0"] > rep["max_residual"]["x0"]


def _avg_only(s):
    from paratori.homogeneous import HomogeneousSum
    from paratori.fourier import FourierMap

    terms = []
    for deg, fm in s.terms:
        avg = fm.average()
        if avg is not None:
            terms.append((deg, FourierMap(fm.angle_dim, fm.truncation,
                                          {fm.zero_key: avg}, symmetrize=False)))
    return HomogeneousSum(s.var_dim, s.angle_dim, s.truncation, terms)
