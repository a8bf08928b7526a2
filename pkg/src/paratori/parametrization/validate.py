"""Residual reports and a-posteriori style numeric validation.

The invariance-equation residual is evaluated pointwise and fitted on
log-spaced radii; the slope is the numeric counterpart of the residual-order
statement E^(j) = O(|u|^{j+N}).
"""

from __future__ import annotations

import numpy as np

from ..errors import ConeExit, NotRootOfUnity


def residual_point(model, par, u, theta=None, t=0.0, with_scale=False):
    """Invariance residual at one point: F(K)-K(R) for maps, X(K)-DK.Y for flows.

    Complex ``u`` is accepted (analytic continuation along a ray) as long as
    every parametrization block supports it.  With ``with_scale=True`` also
    returns the componentwise magnitude of the subtracted quantities, which
    sets the round-off floor of the residual.
    """
    u = np.atleast_1d(np.asarray(u))
    if model.kind == "map":
        theta = (np.atleast_1d(theta) if theta is not None else np.zeros(model.d))
        x, y, th = par.K_eval(u, theta)
        Fx, Fy, Fth = model.apply(x, y, th)
        u2, th2 = par.R_eval(u, theta)
        x2, y2, th3 = par.K_eval(u2, th2)
        E = np.concatenate([Fx - x2, Fy - y2, Fth - th3])
        if not with_scale:
            return E
        scale = np.concatenate([np.abs(Fx) + np.abs(x2), np.abs(Fy) + np.abs(y2),
                                np.abs(Fth) + np.abs(th3)])
        return E, scale
    # flow
    d, dd = model.d, model.freq_dim - model.d
    theta = (np.atleast_1d(theta) if theta is not None and d else np.zeros(d))
    ang = model.angle_vector(theta, t)
    x, y, th_out = par.K_eval(u, ang)
    fx, gy, hth = model.rhs(x, y, th_out if d else None, t)
    jac = par.K_jac_u(u, ang)
    Yu, Yth_full = par.Y_eval(u, ang)
    X = np.concatenate([fx, gy, (hth) if d else np.zeros(0)])
    E = np.concatenate([fx, gy, (hth - Yth_full) if d else np.zeros(0)])
    transport = jac @ Yu
    E -= transport
    scale = np.abs(X)
    scale[: transport.size] += np.abs(transport)
    if d or dd:
        for a in range(d):
            dK = par.K_dangle(u, ang, a)
            E -= dK * Yth_full[a]
            scale += np.abs(dK * Yth_full[a])
        if dd:
            nu = model.freq.time_freq
            for b in range(dd):
                dK = par.K_dangle(u, ang, d + b)
                E -= dK * nu[b]
                scale += np.abs(dK * nu[b])
    if not with_scale:
        return E
    return E, scale


def fit_slope(radii, values):
    """Robust log-log slope plus least-squares intercept.

    The slope is the median of the local slopes between consecutive radii;
    unlike a plain least-squares fit it is not dragged down when the next
    Taylor coefficient partially cancels the leading one at the largest
    sampled radius.
    """
    radii = np.asarray(radii, dtype=float)
    values = np.maximum(np.asarray(values, dtype=float), 1e-300)
    logs = np.log(values)
    logr = np.log(radii)
    local = np.diff(logs) / np.diff(logr)
    if local.size >= 5:
        # the order statement is asymptotic at r -> 0: weight the small radii
        local = local[: (local.size + 1) // 2 + 1]
    slope = float(np.median(local))
    intercept = float(np.median(logs - slope * logr))
    return slope, intercept


def residual_report(model, par, rays=None, radii=None, n_theta=8,
                    radius_range=(1e-3, 1e-1), noise_floor=0.0, cone=None,
                    floor_fn=None):
    """Per-component max residual over angles at log-spaced radii + slope fits.

    Rays default to section directions of the supplied cone (ray-backed terms
    must not be extrapolated outside it).  Residual values below the
    componentwise round-off floor of the evaluation are excluded from the
    slope fit; models whose evaluation chain amplifies round-off (e.g. the
    blown-up escape field with its 1/mass-scaled chart) can supply a custom
    ``floor_fn(r)``.  Components entirely at round-off get slope = inf.
    """
    if rays is None:
        if cone is not None:
            rays = list(cone.section_directions(7))
        elif model.n == 1:
            rays = [np.array([1.0])]
        else:
            rays = [v for v in _default_rays(model.n)]
    if radii is None:
        radii = np.geomspace(radius_range[0], radius_range[1], 9)
    d = model.d
    thetas = ([np.zeros(0)] if model.freq_dim == 0 else
              [np.full(d, s) for s in np.linspace(0.0, 1.0, n_theta, endpoint=False)])
    ts = [0.0] if model.kind == "map" or model.freq.time_freq is None else [0.0, 0.37]
    ncomp = model.n + model.m + model.d
    table = np.zeros((len(radii), ncomp))
    floors = np.zeros((len(radii), ncomp))
    for ir, r in enumerate(radii):
        worst = np.zeros(ncomp)
        fl = np.zeros(ncomp)
        for ray in rays:
            for th in thetas:
                for t in ts:
                    E, scale = residual_point(model, par, r * ray,
                                              th if d else None, t,
                                              with_scale=True)
                    worst = np.maximum(worst, np.abs(E))
                    fl = np.maximum(fl, scale)
        table[ir] = worst
        floors[ir] = fl * 20.0 * np.finfo(float).eps
        if floor_fn is not None:
            floors[ir] = np.maximum(floors[ir], floor_fn(r))
    comps = (["x%d" % i for i in range(model.n)]
             + ["y%d" % b for b in range(model.m)]
             + ["theta%d" % a for a in range(model.d)])
    slopes, intercepts, maxima = {}, {}, {}
    for c, name in enumerate(comps):
        vals = table[:, c]
        maxima[name] = float(vals.max())
        usable = vals > np.maximum(floors[:, c], noise_floor)
        if np.count_nonzero(usable) < 3:
            slopes[name] = float("inf")
            intercepts[name] = -float("inf")
        else:
            s, b = fit_slope(np.asarray(radii)[usable], vals[usable])
            slopes[name] = s
            intercepts[name] = b
    return {
        "radii": list(map(float, radii)),
        "components": comps,
        "max_by_radius": table.tolist(),
        "slopes": slopes,
        "intercepts": intercepts,
        "max_residual": maxima,
        "order": par.order,
    }


def _default_rays(n, count=7):
    if n == 2:
        phis = np.linspace(-0.3, 0.3, count)
        return [np.array([np.cos(p), np.sin(p)]) for p in phis]
    rng = np.random.default_rng(0)
    rays = []
    for _ in range(count):
        v = rng.standard_normal(n)
        v[0] = abs(v[0]) + 1.0
        rays.append(v / np.linalg.norm(v))
    return rays


def shadow_validate(model, par, u0, theta0=None, steps=200, t_end=None, cone=None):
    """Compare the true orbit of K(u0, theta0) with its parametrized shadow.

    Maps: sup_k |F^k(K(u0)) - K(R^k(u0))| over the run; flows: the analogue
    with the integrated flow against K composed with the inner flow.
    Also reports the decay of the (x, y)-distance to the torus.
    """
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    if model.kind == "map":
        theta0 = np.atleast_1d(theta0) if theta0 is not None else np.zeros(model.d)
        x, y, th = par.K_eval(u0, theta0)
        u, thin = u0.copy(), theta0.copy()
        sup_err = 0.0
        decay = []
        exits = 0
        for k in range(steps):
            x, y, th = model.apply(x, y, th)
            u, thin = par.R_eval(u, thin)
            xs, ys, ths = par.K_eval(u, thin)
            err = max(np.max(np.abs(x - xs)), np.max(np.abs(y - ys)) if model.m else 0.0,
                      np.max(np.abs(th - ths)) if model.d else 0.0)
            sup_err = max(sup_err, err)
            decay.append(float(np.max(np.abs(np.concatenate([x, y])))))
            if cone is not None and not cone.contains(x, rho=np.inf):
                exits += 1
        return {"sup_error": sup_err, "xy_decay": decay, "cone_exits": exits,
                "steps": steps}
    # flow variant
    from scipy.integrate import solve_ivp

    d = model.d
    theta0 = np.atleast_1d(theta0) if theta0 is not None and d else np.zeros(d)
    nm = model.n + model.m

    def full_rhs(t, state):
        x, y = state[: model.n], state[model.n: nm]
        th = state[nm:] if d else None
        fx, gy, hth = model.rhs(x, y, th, t)
        return np.concatenate([fx, gy, hth])

    def inner_rhs(t, state):
        u, th = state[: model.n], state[model.n:]
        ang = model.angle_vector(th if d else np.zeros(0), t)
        du, dth = par.Y_eval(u, ang)
        return np.concatenate([du, dth])

    x0, y0, th_out0 = par.K_eval(u0, model.angle_vector(theta0, 0.0))
    t_end = t_end if t_end is not None else 10.0
    ts = np.linspace(0.0, t_end, 60)
    sol_full = solve_ivp(full_rhs, (0.0, t_end),
                         np.concatenate([x0, y0, th_out0]),
                         t_eval=ts, rtol=1e-10, atol=1e-12, method="DOP853")
    sol_inner = solve_ivp(inner_rhs, (0.0, t_end), np.concatenate([u0, theta0]),
                          t_eval=ts, rtol=1e-10, atol=1e-12, method="DOP853")
    sup_err = 0.0
    decay = []
    for i, t in enumerate(ts):
        u = sol_inner.y[: model.n, i]
        th = sol_inner.y[model.n:, i]
        xs, ys, ths = par.K_eval(u, model.angle_vector(th if d else np.zeros(0), t))
        ref = np.concatenate([xs, ys, ths])
        err = float(np.max(np.abs(sol_full.y[:, i] - ref)))
        sup_err = max(sup_err, err)
        decay.append(float(np.max(np.abs(sol_full.y[:nm, i]))))
    return {"sup_error": sup_err, "xy_decay": decay, "cone_exits": 0,
            "t_end": t_end}


def iterate_bound_check(R_inner, cone, a_star, b_star, k_max, N, samples=None,
                        rng_seed=0, count=100, radius=0.1):
    """Sandwich bounds |v|/(1+k b* |v|^(N-1))^(1/(N-1)) <= |R^k v| <= ... .

    ``R_inner``: callable v -> next v.  Returns worst margins (negative margin
    = violation).
    """
    rng = np.random.default_rng(rng_seed)
    if samples is None:
        samples = []
        while len(samples) < count:
            v = rng.uniform(-radius, radius, size=cone.n)
            v[0] = abs(v[0]) if v[0] != 0 else radius / 2
            if cone.n == 1:
                v = np.array([rng.uniform(radius * 1e-3, radius)])
            if cone.contains(v, rho=radius):
                samples.append(v)
    worst_lower = np.inf
    worst_upper = np.inf
    violations = 0
    for v0 in samples:
        v = np.asarray(v0, dtype=float)
        r0 = np.linalg.norm(v)
        for k in range(1, k_max + 1):
            v = np.atleast_1d(R_inner(v))
            r = np.linalg.norm(v)
            lo = r0 / (1.0 + k * b_star * r0 ** (N - 1)) ** (1.0 / (N - 1))
            hi = r0 / (1.0 + k * a_star * r0 ** (N - 1)) ** (1.0 / (N - 1))
            worst_lower = min(worst_lower, r - lo)
            worst_upper = min(worst_upper, hi - r)
            if r < lo or r > hi:
                violations += 1
    return {"worst_lower_margin": float(worst_lower),
            "worst_upper_margin": float(worst_upper),
            "violations": violations,
            "k_max": k_max, "count": len(samples)}


def roots_of_unity_branches(G, A, B, K_points, ell_max=24, tol=1e-9):
    """Branches G^j(K) for a map G with root-of-unity linearization.

    ``G``: callable on (x, y, theta)-tuples; ``A``, ``B``: the linear blocks
    at the origin; ``K_points``: sampled points of the stable manifold of
    G^ell.  Returns ell and the branch point clouds.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float)) if B is not None else None
    ell = None
    PA = np.eye(A.shape[0])
    PB = np.eye(B.shape[0]) if B is not None else None
    for k in range(1, ell_max + 1):
        PA = PA @ A
        if B is not None:
            PB = PB @ B
        okA = np.allclose(PA, np.eye(A.shape[0]), atol=tol)
        okB = B is None or np.allclose(PB, np.eye(B.shape[0]), atol=tol)
        if okA and okB:
            ell = k
            break
    if ell is None:
        raise NotRootOfUnity("no power of the linearization equals the identity")
    branches = [list(K_points)]
    for j in range(1, ell):
        branches.append([G(p) for p in branches[-1]])
    return {"ell": ell, "branches": branches}


def nearest_branch(point, branches):
    """Index of the branch whose sampled cloud is closest to the point."""
    flat = np.asarray(point, dtype=float).ravel()
    best, best_d = None, np.inf
    for j, cloud in enumerate(branches):
        for p in cloud:
            d = np.linalg.norm(np.asarray(p, dtype=float).ravel() - flat)
            if d < best_d:
                best, best_d = j, d
    return best, best_d


def choice_independence(model, par_a, par_b, radii=None, n_theta=4):
    """Diagnostic: do two free-term choices parametrize the same manifold?

    For sample points of par_a's image, measure the distance to par_b's image
    after re-matching the parameter by the x-component (n = 1 only).  Returned,
    not asserted: the construction fixes no canonical choice.
    """
    if model.n != 1:
        return {"supported": False}
    radii = radii if radii is not None else np.geomspace(1e-3, 5e-2, 6)
    thetas = (np.linspace(0, 1, n_theta, endpoint=False)
              if model.freq_dim else [0.0])
    worst = 0.0
    from scipy.optimize import brentq

    for r in radii:
        for th in np.atleast_1d(thetas):
            ang = np.full(model.freq_dim, th) if model.freq_dim else np.zeros(0)
            xa, ya, tha = par_a.K_eval(np.array([r]), ang)

            def xb_of_u(uu):
                xb, _, _ = par_b.K_eval(np.array([uu]), ang)
                return float(xb[0] - xa[0])

            try:
                u_match = brentq(xb_of_u, r * 0.5, r * 1.5, xtol=1e-15)
            except ValueError:
                worst = np.inf
                continue
            xb, yb, thb = par_b.K_eval(np.array([u_match]), ang)
            gap = max(np.max(np.abs(yb - ya)) if model.m else 0.0,
                      np.max(np.abs(thb - tha)) if model.d else 0.0)
            worst = max(worst, float(gap) / max(r ** 2, 1e-300))
    return {"supported": True, "worst_scaled_gap": worst}
