import numpy as np
import pytest
from scipy.integrate import solve_ivp

from paratori.cones import ConeSpec, estimate_constants
from paratori.errors import NoValidEll
from paratori.nbody import (
    NBodySystem,
    McGeheeSystem,
    V0,
    V0_partials,
    blowup_field,
    blowup_to_cartesian,
    cartesian_rhs,
    central_config_constants,
    cone_constants_closed_form,
    crosscheck_constants,
    first_integrals,
    hamiltonian,
    jacobi,
    jacobi_inverse,
    jacobi_matrix,
    pick_ell,
    reduce,
    scaling_constants,
    theta_hat0,
)


def system_3body(mn=1e-3, mp=1e-3, Theta=0.15, config="collinear"):
    return NBodySystem(np.array([1.0, mn, mp]), Theta=Theta, config=config)


# ---------------------------------------------------------------------------
# Jacobi coordinates and Cartesian mechanics
# ---------------------------------------------------------------------------


def test_jacobi_two_bodies():
    sysm = NBodySystem(np.array([1.0, 1.0]), Theta=0.0)
    q = np.array([[0.0, 0.0], [1.0, 0.0]])
    p = np.zeros((2, 2))
    qt, _ = jacobi(sysm, q, p)
    assert np.allclose(qt[1], [1.0, 0.0])


def test_jacobi_three_equal_masses():
    sysm = NBodySystem(np.array([1.0, 1.0, 1.0]), Theta=0.0)
    rng = np.random.default_rng(0)
    q = rng.standard_normal((3, 2))
    qt, _ = jacobi(sysm, q, np.zeros((3, 2)))
    assert np.allclose(qt[2], q[2] - 0.5 * (q[0] + q[1]))


def test_jacobi_round_trip_and_symplectic():
    sysm = system_3body()
    rng = np.random.default_rng(1)
    q = rng.standard_normal((3, 2))
    p = rng.standard_normal((3, 2))
    qt, pt = jacobi(sysm, q, p)
    q2, p2 = jacobi_inverse(sysm, qt, pt)
    assert np.max(np.abs(q2 - q)) < 1e-12
    assert np.max(np.abs(p2 - p)) < 1e-12
    # exact symplecticity of the linear change: J^T Omega J = Omega
    A = jacobi_matrix(sysm.masses)
    k = 3
    J = np.zeros((4 * k, 4 * k))
    J[: 2 * k, : 2 * k] = np.kron(A, np.eye(2))
    J[2 * k:, 2 * k:] = np.kron(np.linalg.inv(A).T, np.eye(2))
    Om = np.block([[np.zeros((2 * k, 2 * k)), np.eye(2 * k)],
                   [-np.eye(2 * k), np.zeros((2 * k, 2 * k))]])
    assert np.max(np.abs(J.T @ Om @ J - Om)) < 1e-12


def test_kepler_energy_and_trivial_integrals():
    sysm = NBodySystem(np.array([1.0, 1.0]), Theta=0.0)
    # circular orbit, bodies at +-1 (separation 2): E = -m0 m1 / (2 * 2)
    q = np.array([[-1.0, 0.0], [1.0, 0.0]])
    vrel = np.sqrt((1.0 + 1.0) / 2.0)  # circular: |v_rel|^2 = (m0+m1)/d
    p = np.array([[0.0, -0.5 * vrel], [0.0, 0.5 * vrel]])
    E = hamiltonian(sysm, q, p)
    mu = 0.5
    assert E == pytest.approx(-mu * 1.0 * 1.0 / 2.0, rel=1e-12)
    # zero momenta: H = -U < 0
    E0 = hamiltonian(sysm, q, np.zeros((2, 2)))
    assert E0 == pytest.approx(-0.5)
    # mirror-symmetric configuration has zero angular momentum
    q_sym = np.array([[-1.0, 0.0], [1.0, 0.0]])
    p_sym = np.array([[-0.3, 0.2], [0.3, 0.2]])
    _, ang_sym = first_integrals(sysm, q_sym, p_sym)
    assert abs(ang_sym) < 1e-15


def test_cartesian_conservation_bounded_arc():
    sysm = system_3body()
    # hierarchical bounded-ish arc: small bodies on wide circular-ish orbits
    q = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 30.0]])
    v1 = np.sqrt(sysm.M(2) / 2.0)
    v2 = np.sqrt(sysm.M(3) / 30.0)
    p = np.array([[0.0, 0.0], [0.0, sysm.masses[1] * v1],
                  [-sysm.masses[2] * v2, 0.0]])
    p[0] = -(p[1] + p[2])
    y0 = np.concatenate([q.ravel(), p.ravel()])
    H0 = hamiltonian(sysm, q, p)
    _, L0 = first_integrals(sysm, q, p)
    sol = solve_ivp(lambda t, y: cartesian_rhs(sysm, y), (0.0, 50.0), y0,
                    method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    for t in np.linspace(0, 50.0, 11):
        y = sol.sol(t)
        qv = y[:6].reshape(3, 2)
        pv = y[6:].reshape(3, 2)
        H = hamiltonian(sysm, qv, pv)
        _, L = first_integrals(sysm, qv, pv)
        assert abs(H - H0) / abs(H0) < 1e-8
        assert abs(L - L0) / max(1.0, abs(L0)) < 1e-8


# ---------------------------------------------------------------------------
# reduced Hamiltonian
# ---------------------------------------------------------------------------


def test_reduction_gauge_independence_and_energy():
    sysm = system_3body()
    red = reduce(sysm)
    rng = np.random.default_rng(3)
    r = np.array([0.0, 2.5, 40.0])
    y = np.array([0.0, 0.05, 0.02])
    th = np.array([0.0, 1.2, 0.0])
    Gn = 0.1
    G = np.array([0.0, Gn, 0.0])
    vals = [red.evaluate(r, y, th, G, theta_np1=g) for g in (0.0, 0.7, 2.0)]
    # exact rotational symmetry: derivative in the cyclic angle vanishes
    assert abs(vals[1] - vals[0]) < 1e-12
    assert abs(vals[2] - vals[0]) < 1e-12
    h = 1e-6
    fd = (red.evaluate(r, y, th, G, theta_np1=h)
          - red.evaluate(r, y, th, G, theta_np1=-h)) / (2 * h)
    assert abs(fd) < 1e-10

    # energy consistency through the full chain vs Cartesian
    from paratori.nbody import jacobi_from_polar

    Gp = sysm.Theta - Gn
    qt1, pt1 = jacobi_from_polar(r[1], th[1], y[1], Gn)
    qt2, pt2 = jacobi_from_polar(r[2], 0.0, y[2], Gp)
    q, p = jacobi_inverse(sysm, np.stack([np.zeros(2), qt1, qt2]),
                          np.stack([np.zeros(2), pt1, pt2]))
    H_cart = hamiltonian(sysm, q, p)
    H_red = red.evaluate(r, y, th, G)
    assert abs(H_cart - H_red) < 1e-10 * max(1.0, abs(H_cart))


# ---------------------------------------------------------------------------
# coupling potential V0
# ---------------------------------------------------------------------------


def test_V0_zero_mass_identically_zero():
    for alpha in (0.5, 1.0, 1.7):
        for th in (0.3, np.pi, 2.0):
            assert V0(alpha, th, 1.0, 0.0) == pytest.approx(0.0, abs=1e-15)


def test_V0_collinear_value():
    Mn, mn = 1.0, 0.01
    val = V0(1.0, np.pi, Mn, mn)
    assert val == pytest.approx(mn * (Mn + mn) / (Mn + Mn + mn), rel=1e-10)
    assert val == pytest.approx(0.0050248756, abs=1e-9)


def test_V0_leading_theta_coefficients():
    Mn, mn = 1.0, 1e-3
    d2 = V0_partials(1.0, np.pi, Mn, mn)[(0, 2)]
    assert abs(d2 - (-7.0 / 8.0) * mn) <= 0.1 * (7.0 / 8.0) * mn
    th0 = theta_hat0(1.0, Mn, mn)
    assert abs(th0 - np.pi / 3) < 0.05
    d2e = V0_partials(1.0, th0, Mn, mn)[(0, 2)]
    assert abs(d2e - (9.0 / 4.0) * mn) <= 0.1 * (9.0 / 4.0) * mn


def test_V0_partials_match_finite_differences():
    Mn, mn = 1.0, 0.02
    a0, t0 = 0.93, 2.7
    parts = V0_partials(a0, t0, Mn, mn)
    h1 = 1e-6
    h2 = 5e-4  # second differences: optimal step ~ eps^(1/4)

    def v(a, t):
        return V0(a, t, Mn, mn)

    fd = {
        (1, 0): ((v(a0 + h1, t0) - v(a0 - h1, t0)) / (2 * h1), 2e-5),
        (0, 1): ((v(a0, t0 + h1) - v(a0, t0 - h1)) / (2 * h1), 2e-5),
        (2, 0): ((v(a0 + h2, t0) - 2 * v(a0, t0) + v(a0 - h2, t0)) / h2**2, 1e-4),
        (0, 2): ((v(a0, t0 + h2) - 2 * v(a0, t0) + v(a0, t0 - h2)) / h2**2, 1e-4),
        (1, 1): ((v(a0 + h2, t0 + h2) - v(a0 + h2, t0 - h2) - v(a0 - h2, t0 + h2)
                  + v(a0 - h2, t0 - h2)) / (4 * h2**2), 1e-4),
    }
    for key, (val, rel) in fd.items():
        assert parts[key] == pytest.approx(val, rel=rel, abs=1e-8)


# ---------------------------------------------------------------------------
# central-configuration constants
# ---------------------------------------------------------------------------


def test_constants_zero_mass_exact():
    sysm = NBodySystem(np.array([1.0, 1e-30, 1e-30]))
    # exact zero masses are rejected (positivity), so emulate via the branch
    from paratori.nbody.constants import central_config_constants as ccc

    class Fake:
        masses = np.array([1.0, 0.0, 0.0])
        Theta = 0.0
        config = "collinear"
        n = 1

        def M(self, j):
            return float(np.sum(self.masses[:j]))

        def mu(self, j):
            Mj, mj = self.M(j), self.masses[j]
            return Mj * mj / (Mj + mj) if mj > 0 else 0.0

    c = ccc(Fake())
    assert c.A == 1.0 and c.B == 1.0
    assert c.newton_residual == 0.0


def test_alpha_n_explicit_value():
    # M_{n+1} = m0 + m1 = 1 gives alpha_n = 2^(-4/3)
    sysm = NBodySystem(np.array([0.999, 0.001, 0.001]))
    a_n, b_n, a_p, b_p = scaling_constants(sysm)
    assert a_n == pytest.approx(2.0 ** (-4.0 / 3.0), rel=1e-12)
    assert a_n == pytest.approx(0.396850, abs=5e-7)


def test_constants_newton_and_gamma2_magnitudes():
    for config, sign, coef in (("collinear", -1.0, 3.5), ("equilateral", 1.0, 9.0)):
        sysm = system_3body(config=config)
        c = central_config_constants(sysm)
        assert abs(c.A - 1.0) < 0.05
        assert abs(c.A**3 * c.B - c.A) < 1e-12
        assert sign * c.gamma2 > 0
        mn, mp = sysm.masses[1], sysm.masses[2]
        predicted = sign * coef * (mn + mp) / sysm.M(1)
        assert abs(c.gamma2 - predicted) <= 0.2 * abs(predicted)


def test_gamma2_sign_dichotomy_mass_grid():
    for mn in (1e-4, 1e-3, 1e-2):
        for mp in (1e-4, 1e-3, 1e-2):
            c_col = central_config_constants(system_3body(mn, mp, config="collinear"))
            c_eq = central_config_constants(system_3body(mn, mp, config="equilateral"))
            assert c_col.gamma2 < 0
            assert c_eq.gamma2 > 0


# ---------------------------------------------------------------------------
# McGehee regularization and blow-up
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def collinear_setup():
    sysm = system_3body()
    consts = central_config_constants(sysm)
    model = blowup_field(sysm, consts)
    return sysm, consts, model


def test_mcgehee_energy_matches_reduced(collinear_setup):
    sysm, consts, model = collinear_setup
    mc = model.chart.mc
    red = reduce(sysm)
    state = np.array([0.15, 0.2, 0.14, 0.1, np.pi - 0.2, 0.01])
    polar = mc.to_polar(state)
    rn, yn, rp, yp, th, Gn = polar
    H_red = red.evaluate(np.array([0.0, rn, rp]), np.array([0.0, yn, yp]),
                         np.array([0.0, th, 0.0]), np.array([0.0, Gn, 0.0]))
    assert mc.hamiltonian(state) == pytest.approx(H_red, rel=1e-12)
    # round trip
    back = mc.from_polar(polar)
    assert np.max(np.abs(back - state)) < 1e-12


def test_mcgehee_two_form_factor(collinear_setup):
    sysm, consts, model = collinear_setup
    # dr/dx * dy_polar/dy_mcgehee = -4 alpha beta / x^3
    x = 0.23
    h = 1e-6
    drdx = (2 * consts.alpha_n / (x + h) ** 2 - 2 * consts.alpha_n / (x - h) ** 2) / (2 * h)
    factor = drdx * consts.beta_n
    assert factor == pytest.approx(-4 * consts.alpha_n * consts.beta_n / x**3,
                                   rel=1e-6)


def test_mcgehee_rhs_vs_reduced_fd_flow(collinear_setup):
    sysm, consts, model = collinear_setup
    mc = model.chart.mc
    red = reduce(sysm)
    state = np.array([0.2, 0.15, 0.19, 0.08, np.pi - 0.1, 0.02])
    rhs_here = mc.rhs(state)
    # independent oracle: reduced-polar Hamiltonian flow (FD partials),
    # pushed through the McGehee change pointwise
    polar = mc.to_polar(state)
    r = np.array([0.0, polar[0], polar[2]])
    y = np.array([0.0, polar[1], polar[3]])
    th = np.array([0.0, polar[4], 0.0])
    G = np.array([0.0, polar[5], 0.0])
    dr, dy, dth, dG = red.rhs_fd(r, y, th, G)
    x_n, x_p = state[0], state[2]
    expected = np.array([
        -x_n**3 / (4 * consts.alpha_n) * dr[1],
        dy[1] / consts.beta_n,
        -x_p**3 / (4 * consts.alpha_np1) * dr[2],
        dy[2] / consts.beta_np1,
        dth[1],
        dG[1],
    ])
    scale = np.abs(expected) + 1e-3 * np.max(np.abs(expected))
    assert np.max(np.abs(rhs_here - expected) / scale) < 1e-6


def test_blowup_leading_x_equation(collinear_setup):
    sysm, consts, model = collinear_setup
    blk = model.f[0].part(4).average()
    coeff = complex(blk.coeffs[(4, 0, 0, 0, 0, 0)])
    assert coeff.real == pytest.approx(-consts.nu, rel=1e-9)


def test_blowup_eigenvalue_pattern_small_masses():
    sysm = system_3body(1e-4, 1e-4)
    consts = central_config_constants(sysm)
    model = blowup_field(sysm, consts)
    eig = np.sort(model.eigvals)
    # pattern (2, 3, -2, 1, -gamma2) up to O(m) with gamma2 < 0 small
    targets = np.sort([2.0, 3.0, -2.0, 1.0, -consts.gamma2])
    assert np.max(np.abs(eig - targets)) < 0.01


def test_blowup_pushforward_consistency(collinear_setup):
    sysm, consts, model = collinear_setup
    rng = np.random.default_rng(2)
    for _ in range(3):
        u = np.zeros(6)
        u[0] = rng.uniform(0.05, 0.12)
        u[1:] = rng.uniform(-1, 1, 5) * 0.02 * u[0]
        rhs_val = model.model_rhs(u)
        # FD of the chart chain along the exact McGehee flow
        xn, Zt = model.from_model(u)
        state0 = model.chart.to_mcgehee(xn, Zt)
        h = 3e-3

        def flow_state(tau):
            sol = solve_ivp(lambda t, s: model.chart.mc.rhs(s), (0, tau), state0,
                            method="DOP853", rtol=1e-13, atol=1e-15)
            return sol.y[:, -1]

        def chain(tau):
            return model.to_model(*model.chart.from_mcgehee(flow_state(tau)))

        fd = (8.0 * (chain(h) - chain(-h)) - (chain(2 * h) - chain(-2 * h))) / (12 * h)
        scale = np.abs(rhs_val) + 1e-3 * np.max(np.abs(rhs_val))
        assert np.max(np.abs(fd - rhs_val) / scale) < 1e-6


def test_blowup_tail_orders(collinear_setup):
    sysm, consts, model = collinear_setup
    assert model.tail_check["ok"], model.tail_check


def test_closed_form_cone_constants(collinear_setup):
    sysm, consts, model = collinear_setup
    kappa, delta = 0.08, 0.08
    closed = cone_constants_closed_form(model, kappa, delta)
    # the slow expansion rate is -gamma2/2: gamma2 carries the normal-form
    # normalization in which the angle row has coefficient 1/2 (see ledger)
    assert closed.B_g == pytest.approx(-consts.gamma2 / 2.0, rel=0.2)
    # kappa -> 0 limit: a_f -> nu
    tiny = cone_constants_closed_form(model, 1e-6, delta)
    assert tiny.a_f == pytest.approx(consts.nu, rel=1e-5)
    rep = crosscheck_constants(model, kappa, delta)
    assert rep["ok"], rep["checks"]


def test_equilateral_chart_and_closed_form():
    sysm = system_3body(config="equilateral")
    consts = central_config_constants(sysm)
    ell = pick_ell(consts)
    assert consts.nu / ell < consts.gamma2
    model = blowup_field(sysm, consts, ell=ell)
    assert model.N == 3 * ell + 1
    closed = cone_constants_closed_form(model, 0.05, 0.5)
    assert closed.B_g == pytest.approx(1.0, rel=0.15)
    # NoValidEll on the collinear branch (gamma2 < 0)
    c_col = central_config_constants(system_3body(config="collinear"))
    with pytest.raises(NoValidEll):
        pick_ell(c_col)


def test_mcgehee_time_reversal_symmetry():
    sysm = system_3body(Theta=0.0)
    consts = central_config_constants(sysm)
    mc = McGeheeSystem(sysm, consts)

    def flip(s):
        out = s.copy()
        out[1] = -out[1]
        out[3] = -out[3]
        out[5] = -out[5]
        return out

    s0 = np.array([0.2, 0.1, 0.19, 0.05, np.pi - 0.05, 0.003])
    h = 0.05
    sol1 = solve_ivp(lambda t, s: mc.rhs(s), (0, h), s0, method="DOP853",
                     rtol=1e-12, atol=1e-14)
    s1 = sol1.y[:, -1]
    sol2 = solve_ivp(lambda t, s: mc.rhs(s), (0, h), flip(s1), method="DOP853",
                     rtol=1e-12, atol=1e-14)
    s2 = sol2.y[:, -1]
    assert np.max(np.abs(s2 - flip(s0))) < 1e-10


def test_zero_transverse_closed_form_decay(collinear_setup):
    sysm, consts, model = collinear_setup
    # leading field only: dx/dt = -nu x^4 from x0 with Z = 0
    x0, nu = 0.08, consts.nu

    def rhs(t, u):
        vals = [s.evaluate_sum(u, np.zeros(0), include_tail=False)
                for s in model.f + model.g]
        return np.array(vals)

    sol = solve_ivp(rhs, (0.0, 2000.0), np.array([x0, 0, 0, 0, 0, 0]),
                    method="DOP853", rtol=1e-12, atol=1e-15, dense_output=True)
    for t in (10.0, 300.0, 2000.0):
        expected = x0 * (1.0 + 3.0 * nu * x0**3 * t) ** (-1.0 / 3.0)
        assert abs(sol.sol(t)[0] - expected) < 1e-6 * expected


@pytest.fixture(scope="module")
def collinear_setup_theta_small():
    sysm = NBodySystem(np.array([1.0, 1e-3, 1e-3]), Theta=5e-4, config="collinear")
    consts = central_config_constants(sysm)
    model = blowup_field(sysm, consts)
    cone = ConeSpec(2, 0.15, aperture=0.08, sample_density=9)
    from paratori.parametrization import approximate_flow

    par = approximate_flow(model, 2, cone)
    return sysm, consts, model, cone, par


def test_escape_run_manifold_data(collinear_setup_theta_small):
    sysm, consts, model, cone, par = collinear_setup_theta_small
    from paratori.nbody import integrate_escape, cartesian_crosscheck

    u0_in = np.array([0.02, 8e-4])
    x, y, _ = par.K_eval(u0_in)
    u0 = np.concatenate([x, y])
    rows, report = integrate_escape(sysm, model, u0, x_floor=1e-3)
    assert report["ratio_error"] < 1e-3
    assert report["theta_error"] < 1e-2
    assert abs(report["decay_product_final"] - 1.0) < 0.05
    assert report["energy_drift"] < 1e-8
    assert abs(report["G_n_final"] - report["G_n_limit"]) < 1e-5
    ts = np.array([r["t"] for r in rows])
    ratios_reg = np.array([r["ratio"] for r in rows])
    sel = np.linspace(0, len(ts) - 1, 20).astype(int)
    ratios_cart = cartesian_crosscheck(sysm, model, u0, ts[sel])
    assert np.max(np.abs(ratios_cart - ratios_reg[sel])) < 1e-3


def test_escape_time_reversal_past_branch():
    # Theta = 0: the McGehee flip (y, g) -> (-y, -g) conjugates the field with
    # its reverse, so backward integration from the flipped manifold state
    # escapes in the past exactly like the forward run (the unstable branch)
    sysm = NBodySystem(np.array([1.0, 1e-3, 1e-3]), Theta=0.0, config="collinear")
    consts = central_config_constants(sysm)
    model = blowup_field(sysm, consts)
    cone = ConeSpec(2, 0.15, aperture=0.08, sample_density=9)
    from paratori.parametrization import approximate_flow

    par = approximate_flow(model, 1, cone)
    u0_in = np.array([0.02, 0.0])
    x, y, _ = par.K_eval(u0_in)
    u0 = np.concatenate([x, y])
    xn0, Zt0 = model.from_model(u0)
    s0 = model.chart.to_mcgehee(xn0, Zt0)

    def flip(s):
        out = np.array(s, dtype=float)
        out[1] = -out[1]
        out[3] = -out[3]
        out[5] = -out[5]
        return out

    T = 1e6
    fwd = solve_ivp(lambda t, s: model.chart.mc.rhs(s), (0.0, T), s0,
                    method="DOP853", rtol=1e-11, atol=1e-14)
    back = solve_ivp(lambda t, s: model.chart.mc.rhs(s), (0.0, -T), flip(s0),
                     method="DOP853", rtol=1e-11, atol=1e-14)
    assert back.y[0, -1] < s0[0]  # x_n decays toward the past: past escape
    assert np.max(np.abs(back.y[:, -1] - flip(fwd.y[:, -1]))) < 1e-8
