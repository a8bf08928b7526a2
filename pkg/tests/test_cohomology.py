import numpy as np
import pytest

from paratori.cohomology import PDEProblem, flow_p, fundamental_matrix, pde_residual, solve_pde
from paratori.cones import ConeSpec
from paratori.errors import DivergenceRisk
from paratori.homogeneous import ArcSection, HomogeneousTerm


def scalar_problem(a=1.0, c=0.0, N=3, m=2, w_coeff=1.0, rho=0.5):
    p = HomogeneousTerm.poly(N, 1, {(N,): -a})
    Q = None if c == 0.0 else HomogeneousTerm.poly(N - 1, 1, {(N - 1,): c})
    w = HomogeneousTerm.poly(m + N, 1, {(m + N,): w_coeff})
    return PDEProblem(p, Q, w, ConeSpec(1, rho))


def test_flow_closed_form_riccati():
    # du/dt = -u^3 from u0=1: u(t) = (1+2t)^(-1/2)
    p = HomogeneousTerm.poly(3, 1, {(3,): -1.0})
    sol = flow_p(p, [1.0], cutoff=0.2, t_end=3.0)
    assert abs(sol.sol(1.5)[0] - 0.5) < 1e-9


def test_flow_zero_field_constant():
    p = HomogeneousTerm.zero(3, 1)
    sol = flow_p(p, [0.7], t_end=2.0)
    assert np.allclose(sol.y[0], 0.7)


def test_flow_scaling_equivariance():
    # phi(t; s u) = s phi(s^(N-1) t; u) for homogeneous p of degree N
    p = HomogeneousTerm.poly(
        3, 2, {(3, 0): np.array([-1.0, 0.0]), (2, 1): np.array([0.0, -1.5])},
        target_shape=(2,),
    )
    u0 = np.array([1.0, 0.2])
    s = 0.6
    t = 0.8
    sol1 = flow_p(p, s * u0, t_end=t, cutoff=1e-4)
    sol2 = flow_p(p, u0, t_end=s ** 2 * t, cutoff=1e-4)
    lhs = sol1.sol(t)
    rhs = s * sol2.sol(s ** 2 * t)
    assert np.max(np.abs(lhs - rhs)) < 1e-8 * max(1.0, np.max(np.abs(lhs)))


def test_fundamental_matrix_zero_Q_identity():
    prob = scalar_problem(a=1.0, c=0.0)
    psi, det = fundamental_matrix(prob, [0.8], 2.0)
    assert abs(psi[0, 0] - 1.0) < 1e-12
    assert abs(det - 1.0) < 1e-12


def test_fundamental_matrix_scalar_closed_form():
    # p = -a u^N, Q = c u^(N-1): Psi(t;u) = (1 + a(N-1) t u^(N-1))^(c/(a(N-1)))
    a, c, N = 1.0, 0.5, 3
    u0, t = 0.9, 1.7
    prob = scalar_problem(a=a, c=c, N=N, m=1)
    psi, _ = fundamental_matrix(prob, [u0], t)
    expected = (1.0 + a * (N - 1) * t * u0 ** (N - 1)) ** (c / (a * (N - 1)))
    assert abs(psi[0, 0] - expected) < 1e-9 * expected


def test_fundamental_matrix_commuting_diagonal():
    a, N = 1.0, 3
    p = HomogeneousTerm.poly(N, 1, {(N,): -a})
    Q = HomogeneousTerm.poly(
        N - 1, 1, {(N - 1,): np.diag([0.5, -0.25])}, target_shape=(2, 2)
    )
    w = HomogeneousTerm.poly(N + 1, 1, {(N + 1,): np.array([1.0, 1.0])},
                             target_shape=(2,))
    prob = PDEProblem(p, Q, w, ConeSpec(1, 0.5))
    u0, t = 0.8, 1.2
    psi, _ = fundamental_matrix(prob, [u0], t)
    base = 1.0 + a * (N - 1) * t * u0 ** (N - 1)
    assert abs(psi[0, 0] - base ** (0.5 / 2.0)) < 1e-9
    assert abs(psi[1, 1] - base ** (-0.25 / 2.0)) < 1e-9
    assert abs(psi[0, 1]) < 1e-12 and abs(psi[1, 0]) < 1e-12


def test_solve_pde_monomial_family():
    # oracle: h(u) = -u^(m+1) / (a(m+1) + c)
    for a in (1.0, 2.0):
        for c in (0.0, 0.5, -0.5):
            for N in (2, 3, 4):
                for m in (1, 2, 3):
                    if c < 0 and m + 1 + c / a <= 0:
                        continue
                    prob = scalar_problem(a=a, c=c, N=N, m=m)
                    h = solve_pde(prob)
                    expected = -1.0 / (a * (m + 1) + c)
                    got = complex(h.coeffs[(m + 1,)]).real
                    assert abs(got - expected) < 1e-6 * abs(expected)


def test_solve_pde_zero_w_unique_zero():
    prob = scalar_problem(a=1.0, c=0.3, N=3, m=2, w_coeff=0.0)
    h = solve_pde(prob)
    assert h.norm() < 1e-12


def test_solve_pde_specific_value():
    # a=1, N=3, c=0, m=2, w=u^5 -> h = -u^3/3
    prob = scalar_problem(a=1.0, c=0.0, N=3, m=2)
    h = solve_pde(prob)
    assert abs(complex(h.coeffs[(3,)]).real + 1.0 / 3.0) < 1e-8 / 3.0


def test_solve_pde_divergence_risk():
    with pytest.raises(DivergenceRisk):
        prob = scalar_problem(a=1.0, c=-3.0, N=3, m=1)
        solve_pde(prob)


def two_dim_problem(m=1):
    # p = -x1^2 * x (degree 3), radially contracting on the kappa-cone
    p = HomogeneousTerm.poly(
        3, 2, {(3, 0): np.array([-1.0, 0.0]), (2, 1): np.array([0.0, -1.0])},
        target_shape=(2,),
    )
    Q = HomogeneousTerm.poly(
        2, 2,
        {(2, 0): np.array([[1.0, 0.3], [0.0, 2.0]])},
        target_shape=(2, 2),
    )
    w = HomogeneousTerm.poly(
        m + 3, 2,
        {(m + 3, 0): np.array([1.0, 0.0]), (m + 2, 1): np.array([0.5, 1.0])},
        target_shape=(2,),
    )
    cone = ConeSpec(2, 0.5, aperture=0.5)
    return PDEProblem(p, Q, w, cone)


def test_solve_pde_two_dim_residual_and_homogeneity():
    prob = two_dim_problem(m=1)
    section = ArcSection(-np.arctan(0.5), np.arctan(0.5), n_nodes=17)
    h = solve_pde(prob, section=section)
    assert h.degree == 2
    rng = np.random.default_rng(0)
    pts = []
    while len(pts) < 50:
        x1 = rng.uniform(0.2, 1.0)
        x2 = rng.uniform(-0.4, 0.4) * x1
        pts.append(np.array([x1, x2]))
    res = pde_residual(prob, h, pts)
    assert res <= 1e-6
    # homogeneity of the returned term
    for s in (0.5, 2.0):
        for u in pts[:10]:
            lhs = np.asarray(h.evaluate(s * u))
            rhs = s ** h.degree * np.asarray(h.evaluate(u))
            assert np.max(np.abs(lhs - rhs)) <= 1e-8 * max(1.0, np.max(np.abs(rhs)))


def test_solve_pde_linear_in_w():
    prob1 = scalar_problem(a=1.0, c=0.5, N=3, m=2, w_coeff=1.0)
    prob2 = scalar_problem(a=1.0, c=0.5, N=3, m=2, w_coeff=-2.5)
    h1 = solve_pde(prob1)
    h2 = solve_pde(prob2)
    assert abs(complex(h2.coeffs[(3,)]) + 2.5 * complex(h1.coeffs[(3,)])) < 1e-9
