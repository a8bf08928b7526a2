import numpy as np
import pytest

from paratori.cones import estimate_constants, derived_indices
from paratori.modelio import cone_from_dict, model_from_dict, synthetic_map_spec
from paratori.parametrization import (
    approximate_map,
    reduce_angle_dependence,
    refine_fixed_point,
    residual_point,
)


@pytest.fixture(scope="module")
def refined_setup():
    spec = synthetic_map_spec(q=6)
    model = model_from_dict(spec)
    cone = cone_from_dict(spec, 1)
    consts = estimate_constants(model, cone)
    E, q_star, ju = derived_indices(consts, model.N, model.M, model.P)
    assert q_star == 6  # [max{3, 4, 2 + 1.5 * 3.15}] for these constants
    reduced, record = reduce_angle_dependence(model)
    par = approximate_map(reduced, model.q - model.N, cone)
    return model, reduced, cone, par


def test_refine_zero_residual_input_keeps_zero():
    from paratori.modelio import invariant_toy_spec

    model = model_from_dict(invariant_toy_spec(q=6))
    cone = cone_from_dict(invariant_toy_spec(q=6), 1)
    par = approximate_map(model, 3, cone)
    refined, report = refine_fixed_point(model, par, iterations=1, rho=1e-2,
                                         J=1500)
    # Delta = 0 is the fixed point: the sweep must stay at round-off level
    assert report["residual_before"] < 1e-14
    assert report["residual_after"] < 1e-13


def test_refine_one_sweep_contracts(refined_setup):
    model, reduced, cone, par = refined_setup
    refined, report = refine_fixed_point(reduced, par, iterations=1, rho=1e-2,
                                         J=4000)
    assert report["residual_before"] > 0
    sweep = report["sweeps"][0]
    assert sweep["reduction"] >= 10.0
    assert sweep["lipschitz"] < 1.0
    assert report["contracting"]


def test_refined_K_evaluates(refined_setup):
    model, reduced, cone, par = refined_setup
    refined, report = refine_fixed_point(reduced, par, iterations=1, rho=1e-2,
                                         J=2000)
    x, y, th = refined.K_eval(np.array([5e-3]), np.array([0.2]))
    x0, y0, th0 = par.K_eval(np.array([5e-3]), np.array([0.2]))
    assert np.isfinite(x).all() and np.isfinite(y).all()
    # the correction is small but generally nonzero
    assert abs(x[0] - x0[0]) < 1e-6
