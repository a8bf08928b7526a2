"""Command-line front end: constants, approximation and n-body pipelines.

Exit codes: 0 success, 1 domain failure (hypothesis/convergence), 2 input
error.  Outputs are deterministic: identical inputs produce byte-identical
JSON/CSV artifacts (sorted keys, repr-float formatting, no timestamps).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import errors
from .cones import ConeSpec, check_hypotheses, derived_indices, estimate_constants, required_pass
from .modelio import cone_from_dict, load_model
from .parametrization import (
    approximate_flow,
    approximate_map,
    reduce_angle_dependence,
    refine_fixed_point,
    residual_point,
    residual_report,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_INPUT = 2


def _threads():
    try:
        return max(1, int(os.environ.get("PARABOLIC_THREADS", "1")))
    except ValueError:
        return 1


def _dump_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _table(rows):
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def cmd_constants(args):
    model, cone, spec = load_model(args.model)
    if args.truncation is not None:
        model.truncation = args.truncation
    consts = estimate_constants(model, cone)
    try:
        derived_indices(consts, model.N, model.M, model.P)
    except errors.WeakContractionFail:
        pass
    verdicts = check_hypotheses(model, cone, consts)
    report = consts.to_json_dict()
    report["model"] = spec.get("name", "")
    out_dir = Path(args.out)
    _dump_json(out_dir / "constants.json", report)
    rows = [(k, f"{v:.12g}") for k, v in report.items()
            if isinstance(v, (int, float)) and v is not None]
    rows += [(f"verdict:{name}", v["status"]) for name, v in verdicts.items()]
    print(_table(rows))
    required = required_pass(verdicts, model)
    failed = [name for name in required if verdicts[name]["status"] == "fail"]
    if failed:
        print(f"failed hypotheses: {', '.join(failed)}", file=sys.stderr)
        if args.strict:
            return EXIT_DOMAIN
    return EXIT_OK


# ---------------------------------------------------------------------------
# approximate
# ---------------------------------------------------------------------------


def _residual_csv(path, model, par, cone, radii, n_theta=8):
    rays = (list(cone.section_directions(7)) if model.n > 1
            else [np.array([1.0])])
    thetas = ([np.zeros(0)] if model.freq_dim == 0 else
              [np.full(model.d, s) for s in np.linspace(0, 1, n_theta,
                                                        endpoint=False)])
    jobs = [(r, ray, th) for r in radii for ray in rays for th in thetas]

    def work(job):
        r, ray, th = job
        E = residual_point(model, par, r * ray, th if model.d else None)
        return r, ray, float(np.max(np.abs(E)))

    threads = _threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    by_radius = {}
    for r, ray, val in results:
        by_radius.setdefault(r, 0.0)
        by_radius[r] = max(by_radius[r], val)
    rep = residual_report(model, par, radii=radii, cone=cone if model.n > 1 else None)
    lines = ["radius,max_residual," + ",".join(
        f"slope_{c}" for c in rep["components"])]
    slopes = [rep["slopes"][c] for c in rep["components"]]
    for r in radii:
        lines.append(",".join([repr(float(r)), repr(by_radius[r])]
                              + [repr(s) for s in slopes]))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")
    return rep


def cmd_approximate(args):
    model, cone, spec = load_model(args.model)
    if args.truncation is not None:
        model.truncation = args.truncation
    j = args.order
    out_dir = Path(args.out)
    try:
        if model.kind == "map":
            par = approximate_map(model, j, cone)
        else:
            par = approximate_flow(model, j, cone)
    except (errors.HypothesisFail, errors.SingularGbar, errors.DivergenceRisk,
            errors.NearResonance, errors.WeakContractionFail) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    _dump_json(out_dir / "parametrization.json", par.to_json_dict())
    radii = np.geomspace(args.radius_min, args.radius_max, 9)
    rep = _residual_csv(out_dir / "residual.csv", model, par, cone, radii)
    _dump_json(out_dir / "residual.json", rep)
    print(_table([("order", str(par.order))]
                 + [(f"slope:{k}", f"{v:.3f}") for k, v in rep["slopes"].items()]))
    if args.refine_sweeps > 0:
        if model.kind != "map":
            print("refinement runs on map models only", file=sys.stderr)
            return EXIT_DOMAIN
        try:
            reduced, _ = reduce_angle_dependence(model)
            par_r = (approximate_map(reduced, j, cone))
            refined, report = refine_fixed_point(
                reduced, par_r, iterations=args.refine_sweeps, rho=args.tol
                if args.tol else 1e-2)
        except errors.NonContraction as exc:
            print(f"refinement not contracting: {exc}", file=sys.stderr)
            return EXIT_DOMAIN
        _dump_json(out_dir / "refinement.json", report)
        print(_table([("refine:residual_before", repr(report["residual_before"])),
                      ("refine:residual_after", repr(report["residual_after"])),
                      ("refine:lipschitz",
                       repr(report["sweeps"][0].get("lipschitz")))]))
    return EXIT_OK


# ---------------------------------------------------------------------------
# nbody
# ---------------------------------------------------------------------------


def load_system(path):
    from .nbody import NBodySystem

    try:
        with open(path) as fh:
            spec = json.load(fh)
        masses = np.asarray(spec["masses"], dtype=float)
        system = NBodySystem(masses, Theta=float(spec.get("Theta", 0.0)),
                             config=spec.get("config", "collinear"))
    except (OSError, json.JSONDecodeError, KeyError, TypeError,
            ValueError) as exc:
        raise errors.ParseError(f"bad system spec {path}: {exc}") from exc
    return system, spec


def cmd_nbody(args):
    from .nbody import (
        blowup_field,
        cartesian_crosscheck,
        central_config_constants,
        cone_constants_closed_form,
        integrate_escape,
        pick_ell,
    )
    from .parametrization import approximate_flow

    system, spec = load_system(args.system)
    if args.branch:
        system.config = args.branch
    out_dir = Path(args.out)
    try:
        consts = central_config_constants(system)
    except errors.NewtonDiverged as exc:
        print(f"Newton failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    _dump_json(out_dir / "central_constants.json", consts.to_json_dict())
    rows = [(k, f"{v:.12g}") for k, v in consts.to_json_dict().items()
            if isinstance(v, (int, float))]
    print(_table(rows))
    if system.n != 1 or not args.escape:
        return EXIT_OK

    try:
        ell = pick_ell(consts) if system.config == "equilateral" else None
        model = blowup_field(system, consts, ell=ell)
    except (errors.MassTooLarge, errors.NoValidEll) as exc:
        print(f"blow-up failed: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    kappa = args.aperture
    cone = ConeSpec(model.n, args.radius, aperture=kappa, sample_density=9)
    _dump_json(out_dir / "cone_constants_closed_form.json",
               cone_constants_closed_form(model, kappa, args.radius).to_json_dict())
    par = approximate_flow(model, args.order, cone)
    u0_in = np.zeros(model.n)
    u0_in[0] = args.x0
    x, y, _ = par.K_eval(u0_in)
    u0 = np.concatenate([x, y])
    rows_t, report = integrate_escape(system, model, u0, x_floor=args.x_floor)
    ts = np.array([r["t"] for r in rows_t])
    sel = np.linspace(0, len(ts) - 1, 20).astype(int)
    ratios_cart = cartesian_crosscheck(system, model, u0, ts[sel])
    ratios_reg = np.array([rows_t[i]["ratio"] for i in sel])
    report["cartesian_ratio_deviation"] = float(np.max(np.abs(
        ratios_cart - ratios_reg)))
    _dump_json(out_dir / "asymptotics.json", report)

    lines = ["t,x_n,ratio,theta_n,G_n,H,r_n,r_np1"]
    for r in rows_t:
        polar = r["polar"]
        lines.append(",".join(repr(float(v)) for v in
                              (r["t"], r["x_n"], r["ratio"], r["theta_n"],
                               r["G_n"], r["H"], polar[0], polar[2])))
    (out_dir / "trajectory.csv").write_text("\n".join(lines) + "\n")
    print(_table([(k, f"{v:.6g}") for k, v in report.items()
                  if isinstance(v, float)]))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="paratori",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="cone constants and hypothesis verdicts")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="out")
    p.add_argument("--truncation", type=int, default=None)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(fn=cmd_constants)

    p = sub.add_parser("approximate", help="order-by-order parametrization")
    p.add_argument("--model", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--out", default="out")
    p.add_argument("--truncation", type=int, default=None)
    p.add_argument("--radius-min", type=float, default=1e-3)
    p.add_argument("--radius-max", type=float, default=1e-1)
    p.add_argument("--refine-sweeps", type=int, default=0)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(fn=cmd_approximate)

    p = sub.add_parser("nbody", help="(n+2)-body escape pipeline")
    p.add_argument("--system", required=True)
    p.add_argument("--branch", choices=["collinear", "equilateral"], default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--escape", action="store_true",
                   help="build the manifold and integrate the escape (n = 1)")
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--x0", type=float, default=0.02)
    p.add_argument("--x-floor", type=float, default=1e-3)
    p.add_argument("--radius", type=float, default=0.15)
    p.add_argument("--aperture", type=float, default=0.08)
    p.set_defaults(fn=cmd_nbody)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except errors.ParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except errors.ParatoriError as exc:
        print(f"domain failure: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
