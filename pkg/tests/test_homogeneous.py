import numpy as np
import pytest

from paratori.errors import OrderViolation
from paratori.fourier import FourierMap
from paratori.homogeneous import (
    ArcSection,
    HomogeneousSum,
    HomogeneousTerm,
    differentiate,
    evaluate,
    lowest_part,
    radial_parts,
    truncated_compose,
)


def monomial_sum(var_dim, entries, angle_dim=0, truncation=0, tail=None):
    """entries: list of (exponents, coeff) or (exponents, coeff, kmode)."""
    by_deg = {}
    for entry in entries:
        exps, c = entry[0], entry[1]
        k = entry[2] if len(entry) > 2 else (0,) * angle_dim
        deg = sum(exps)
        by_deg.setdefault(deg, {}).setdefault(k, HomogeneousTerm.zero(deg, var_dim))
        by_deg[deg][k] = by_deg[deg][k].add(HomogeneousTerm.monomial(var_dim, exps, c))
    terms = [
        (deg, FourierMap(angle_dim, truncation, modes))
        for deg, modes in sorted(by_deg.items())
    ]
    return HomogeneousSum(var_dim, angle_dim, truncation, terms, tail)


def test_single_poly_term_square():
    s = monomial_sum(1, [((2,), 1.0)])
    assert evaluate(s, [3.0]) == pytest.approx(9.0)


def test_empty_sum_is_zero():
    s = HomogeneousSum.zero(2)
    assert evaluate(s, [0.3, -0.1]) == 0.0


def test_random_poly_against_monomial_oracle():
    rng = np.random.default_rng(2)
    entries = []
    for _ in range(12):
        e = tuple(rng.integers(0, 4, size=3))
        entries.append((e, rng.standard_normal()))
    s = monomial_sum(3, entries)
    for _ in range(10):
        u = rng.standard_normal(3)
        oracle = sum(c * np.prod(np.asarray(u, dtype=float) ** np.asarray(e)) for e, c in entries)
        val = evaluate(s, u)
        assert abs(val - oracle) <= 1e-12 * max(1.0, abs(oracle))


def test_poly_homogeneity_scaling():
    rng = np.random.default_rng(8)
    term = HomogeneousTerm.poly(
        3, 2, {(3, 0): 1.2, (2, 1): -0.7, (1, 2): 0.4, (0, 3): 2.0}
    )
    for _ in range(100):
        u = rng.standard_normal(2)
        base = term.evaluate(u)
        for s in (0.5, 2.0, 10.0):
            assert abs(term.evaluate(s * u) - s**3 * base) <= 1e-10 * max(
                1.0, s**3 * abs(base)
            )


def test_euler_identity_poly():
    rng = np.random.default_rng(4)
    term = HomogeneousTerm.poly(4, 2, {(4, 0): 0.3, (2, 2): -1.1, (1, 3): 0.8})
    for _ in range(20):
        u = rng.standard_normal(2)
        grad = term.gradient_at(u)
        assert abs(float(grad @ u) - term.degree * term.evaluate(u)) < 1e-12 * max(
            1.0, abs(term.evaluate(u))
        )


def test_compose_hand_expansion():
    # outer = x^2, inner x = u + u^2  ->  u^2 + 2u^3 + (tail of order 4)
    outer = monomial_sum(1, [((2,), 1.0)])
    inner = monomial_sum(1, [((1,), 1.0), ((2,), 1.0)])
    comp = truncated_compose(outer, [inner], q=4)
    d2 = comp.part(2).coeffs[()]
    d3 = comp.part(3).coeffs[()]
    assert abs(complex(d2.coeffs[(2,)]) - 1.0) < 1e-14
    assert abs(complex(d3.coeffs[(3,)]) - 2.0) < 1e-14
    # closure tail carries exactly the u^4 remainder
    assert abs(comp.tail([0.1]) - 0.1**4) < 1e-15


def test_compose_identity_returns_inner():
    outer = monomial_sum(2, [((1, 0), 1.0)])
    inner0 = monomial_sum(2, [((1, 0), 1.0), ((0, 2), 0.5)])
    inner1 = monomial_sum(2, [((0, 1), 1.0)])
    comp = truncated_compose(outer, [inner0, inner1], q=5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = 0.1 * rng.standard_normal(2)
        assert abs(comp.evaluate_sum(u) - inner0.evaluate_sum(u)) < 1e-14


def test_compose_angle_phase_shift():
    # outer coefficient e^{2 pi i theta}; theta slot Theta + omega shifts the phase
    omega = 0.3173
    outer = monomial_sum(1, [((1,), 1.0, (1,))], angle_dim=1, truncation=2)
    inner = monomial_sum(1, [((1,), 1.0)], angle_dim=1, truncation=2)
    zero_angle = HomogeneousSum.zero(1, 1, 2)
    comp = truncated_compose(outer, [inner], q=3, angle_inner=[zero_angle],
                             angle_shift=[omega])
    blk = comp.part(1).coeffs[(1,)]
    expected = 0.5 * np.exp(2j * np.pi * omega)  # symmetrized half-weight
    assert abs(complex(blk.coeffs[(1,)]) - expected) < 1e-14
    # degrees unchanged
    assert [d for d, _ in comp.terms] == [1]


def test_compose_consistency_slope():
    rng = np.random.default_rng(6)
    outer = monomial_sum(1, [((2,), 1.0), ((3,), -0.4)])
    inner = monomial_sum(1, [((1,), 0.9), ((2,), 0.3), ((3,), -0.2)])
    q = 5
    comp = truncated_compose(outer, [inner], q=q)
    radii = np.geomspace(1e-3, 1e-1, 12)
    errs = []
    for r in radii:
        direct = outer.evaluate_sum([inner.evaluate_sum([r])])
        viaterms = comp.drop_tail().evaluate_sum([r])
        errs.append(abs(direct - viaterms) + 1e-300)
    slope = np.polyfit(np.log(radii), np.log(errs), 1)[0]
    assert slope >= q - 0.2


def test_lowest_part_examples():
    g = monomial_sum(1, [((3,), 1.0), ((5,), 1.0)])
    part = lowest_part(g, 3)
    assert abs(complex(part.coeffs[()].coeffs[(3,)]) - 1.0) < 1e-15
    g2 = monomial_sum(1, [((5,), 1.0)])
    assert lowest_part(g2, 3).norm() == 0.0
    with pytest.raises(OrderViolation):
        lowest_part(g2, 6)


def test_lowest_part_slope_oracle():
    rng = np.random.default_rng(9)
    g = monomial_sum(2, [((2, 1), 0.7), ((1, 3), -0.2), ((0, 5), 0.1)])
    ell = 3
    direction = np.array([0.6, 0.8])
    radii = np.geomspace(1e-3, 1e-1, 10)
    vals = [abs(g.evaluate_sum(r * direction)) for r in radii]
    slope = np.polyfit(np.log(radii), np.log(vals), 1)[0]
    assert abs(slope - ell) < 0.05


def test_differentiate_poly_and_theta():
    s = monomial_sum(1, [((3,), 1.0)])
    ds = differentiate(s, "u")
    assert abs(ds.evaluate_sum([2.0]) - 12.0) < 1e-14  # 3 u^2 at u=2
    const = monomial_sum(1, [((1,), 1.0)], angle_dim=1, truncation=1)
    assert differentiate(const, "theta").norm() == 0.0


def test_differentiate_fd_oracle():
    rng = np.random.default_rng(3)
    s = monomial_sum(2, [((3, 0), 1.1), ((1, 2), -0.8), ((2, 1), 0.5)])
    ds = differentiate(s, "u", axis=0)
    step = 1e-5
    for _ in range(5):
        u = rng.uniform(0.2, 1.0, size=2)
        fd = (s.evaluate_sum(u + [step, 0]) - s.evaluate_sum(u - [step, 0])) / (2 * step)
        val = ds.evaluate_sum(u)
        assert abs(val - fd) <= 1e-6 * max(1.0, abs(fd))


def test_ray_term_homogeneity_and_selfconsistency():
    section = ArcSection(-0.5, 0.5, n_nodes=13)
    g = np.cos(2.0 * section.angles) + 0.3 * np.sin(section.angles)
    term = HomogeneousTerm.ray(3, section, g.astype(complex))
    for i, node in enumerate(section.nodes):
        # resampling at node points reproduces stored values
        assert abs(term.evaluate(node) - g[i].real) < 1e-12
        for s in (0.5, 2.0):
            assert abs(term.evaluate(s * node) - s**3 * g[i].real) < 1e-10 * max(
                1.0, abs(g[i])
            )


def test_ray_derivative_matches_fd():
    section = ArcSection(-0.6, 0.6, n_nodes=17)
    g = np.exp(np.sin(section.angles))
    term = HomogeneousTerm.ray(4, section, g.astype(complex))
    d0 = term.derivative(0)
    rng = np.random.default_rng(1)
    step = 1e-6
    for _ in range(5):
        phi = rng.uniform(-0.45, 0.45)
        r = rng.uniform(0.5, 1.5)
        u = r * np.array([np.cos(phi), np.sin(phi)])
        fd = (term.evaluate(u + [step, 0]) - term.evaluate(u - [step, 0])) / (2 * step)
        assert abs(d0.evaluate(u) - fd) < 1e-6 * max(1.0, abs(fd))


def test_radial_parts_recover_taylor_coeffs():
    def fn(z):
        # analytic in the scalar z multiplying the direction
        x = z[0]
        return x**2 + 3.0 * x**3 - 0.25 * x**5

    parts = radial_parts(lambda u: fn(u), np.array([1.0]), [2, 3, 4, 5])
    assert abs(parts[2] - 1.0) < 1e-12
    assert abs(parts[3] - 3.0) < 1e-12
    assert abs(parts[4]) < 1e-12
    assert abs(parts[5] + 0.25) < 1e-12


def test_term_json_round_trip():
    term = HomogeneousTerm.poly(2, 2, {(2, 0): 1.5, (1, 1): -0.5j})
    again = HomogeneousTerm.from_json_dict(term.to_json_dict())
    rng = np.random.default_rng(0)
    for _ in range(4):
        u = rng.standard_normal(2)
        assert abs(term.evaluate(u + 0j) - again.evaluate(u + 0j)) < 1e-15
    section = ArcSection(-0.4, 0.4, 9)
    ray = HomogeneousTerm.ray(2, section, np.linspace(0, 1, 9).astype(complex))
    again = HomogeneousTerm.from_json_dict(ray.to_json_dict())
    u = np.array([1.0, 0.1])
    assert abs(ray.evaluate(u) - again.evaluate(u)) < 1e-14
