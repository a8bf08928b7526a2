"""Model-spec files (JSON) and canned example models.

A spec document looks like::

    {
      "kind": "map",                      # or "flow"
      "dims": {"n": 1, "m": 1, "d": 1},
      "orders": {"N": 3, "M": 3, "P": 3, "q": 7},
      "omega": [0.6180339887498949],
      "nu": null,                         # time frequency (flows)
      "truncation": 4,
      "cone": {"rho": 0.1, "aperture": null, "density": 9},
      "terms": {"f": [[...terms of component 0...], ...], "g": ..., "h": ...},
      "tails": {"f": [null], "g": [null], "h": [null]}   # registry names
    }

Each term entry is ``{"degree": j, "modes": [{"k": [...], "monomials":
[{"e": [...], "re": c, "im": c}]}]}``.  Tail callables are referenced by name
from ``TAIL_REGISTRY`` (plain JSON cannot carry code).
"""

from __future__ import annotations

import json

import numpy as np

from .cones import ConeSpec
from .errors import ParseError
from .fourier import FourierMap, Frequency
from .homogeneous import HomogeneousSum, HomogeneousTerm, Tail
from .parametrization.models import FlowModel, MapModel

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

TAIL_REGISTRY = {}


def register_tail(name, factory):
    """Register a tail factory: factory(spec_dict) -> (order, callable)."""
    TAIL_REGISTRY[name] = factory


def _sum_from_entries(entries, var_dim, angle_dim, truncation, tail=None):
    terms = []
    for entry in entries:
        deg = int(entry["degree"])
        modes = {}
        for mode in entry["modes"]:
            k = tuple(int(x) for x in mode["k"])
            coeffs = {}
            for mono in mode["monomials"]:
                e = tuple(int(x) for x in mono["e"])
                coeffs[e] = complex(mono.get("re", 0.0), mono.get("im", 0.0))
            modes[k] = HomogeneousTerm.poly(deg, var_dim, coeffs)
        terms.append((deg, FourierMap(angle_dim, truncation, modes)))
    return HomogeneousSum(var_dim, angle_dim, truncation, terms, tail)


def model_from_dict(spec):
    try:
        kind = spec["kind"]
        dims = spec["dims"]
        orders = spec["orders"]
        n, m, d = int(dims["n"]), int(dims["m"]), int(dims["d"])
        N, M, P, q = (int(orders["N"]), int(orders["M"]), int(orders["P"]),
                      int(orders["q"]))
        omega = [float(x) for x in spec.get("omega", [])]
        nu = spec.get("nu")
        freq = Frequency(omega if omega else np.zeros(0),
                         None if nu in (None, []) else [float(x) for x in nu])
        trunc = int(spec.get("truncation", 4))
        adim = d + (0 if freq.time_freq is None else freq.time_freq.size)
        nm = n + m

        def build(group, count):
            entries = spec.get("terms", {}).get(group, [[] for _ in range(count)])
            tails = spec.get("tails", {}).get(group, [None] * count)
            out = []
            for c in range(count):
                tail = None
                if tails[c]:
                    if tails[c] not in TAIL_REGISTRY:
                        raise ParseError(f"unknown tail {tails[c]!r}")
                    order, fn = TAIL_REGISTRY[tails[c]](spec)
                    tail = Tail(order, fn)
                out.append(_sum_from_entries(entries[c], nm, adim, trunc, tail))
            return out

        f = build("f", n)
        g = build("g", m)
        h = build("h", d)
        cls = MapModel if kind == "map" else FlowModel
        model = cls(n, m, d, N, M, P, q, freq, f, g, h, truncation=trunc,
                    name=spec.get("name", ""))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed model spec: {exc}") from exc
    return model


def cone_from_dict(spec, n):
    cfg = spec.get("cone", {})
    rho = float(cfg.get("rho", 0.1))
    aperture = cfg.get("aperture")
    density = int(cfg.get("density", 9))
    return ConeSpec(n, rho, aperture=aperture, sample_density=density)


def load_model(path):
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read model spec {path}: {exc}") from exc
    return model_from_dict(spec), cone_from_dict(spec, int(spec["dims"]["n"])), spec


# ---------------------------------------------------------------------------
# canned example specs
# ---------------------------------------------------------------------------


def _mono(e, re, im=0.0):
    return {"e": list(e), "re": re, "im": im}


def _mode(k, *monos):
    return {"k": list(k), "monomials": list(monos)}


def _term(degree, *modes):
    return {"degree": degree, "modes": list(modes)}


def synthetic_map_spec(eps_f=0.4, eps_g=0.5, eps_h=0.3, q=7, omega=GOLDEN,
                       higher=True):
    """The 2-d synthetic map model (n = m = d = 1, N = M = P = 3).

    fbar^3(x, 0) = -x^3, d_y gbar^3(x, 0) = +x^2 (expanding in y), with
    oscillatory parts at the leading orders, a y-free g^4 part (so the
    manifold genuinely leaves {y = 0}) and polynomial higher-order parts up
    to degree q-1.
    """
    f = [[_term(3,
                _mode([0], _mono([3, 0], -1.0), _mono([2, 1], 0.25)),
                _mode([1], _mono([3, 0], eps_f / 2.0), _mono([2, 1], -0.05)),
                _mode([-1], _mono([3, 0], eps_f / 2.0), _mono([2, 1], -0.05)))]]
    g = [[_term(3,
                _mode([0], _mono([2, 1], 1.0)),
                _mode([1], _mono([2, 1], 0.0, -eps_g / 2.0)),
                _mode([-1], _mono([2, 1], 0.0, eps_g / 2.0)))]]
    h = [[_term(3,
                _mode([0], _mono([1, 2], 0.2)),
                _mode([1], _mono([3, 0], eps_h / 2.0)),
                _mode([-1], _mono([3, 0], eps_h / 2.0)))]]
    if higher:
        f[0].append(_term(4, _mode([0], _mono([4, 0], 0.3)),
                          _mode([1], _mono([3, 1], -0.1)),
                          _mode([-1], _mono([3, 1], -0.1))))
        f[0].append(_term(5, _mode([0], _mono([5, 0], -0.15), _mono([3, 2], 0.1))))
        g[0].append(_term(4, _mode([0], _mono([4, 0], 0.15), _mono([3, 1], -0.2)),
                          _mode([1], _mono([2, 2], 0.05)),
                          _mode([-1], _mono([2, 2], 0.05))))
        g[0].append(_term(5, _mode([0], _mono([2, 3], 0.1))))
        h[0].append(_term(4, _mode([0], _mono([4, 0], 0.12))))
        if q > 6:
            f[0].append(_term(6, _mode([0], _mono([6, 0], 0.05))))
            g[0].append(_term(6, _mode([0], _mono([5, 1], -0.04))))
            h[0].append(_term(6, _mode([0], _mono([4, 2], 0.03))))
    return {
        "kind": "map",
        "name": "synthetic-cubic",
        "dims": {"n": 1, "m": 1, "d": 1},
        "orders": {"N": 3, "M": 3, "P": 3, "q": q},
        "omega": [float(omega)],
        "nu": None,
        "truncation": 6,
        "cone": {"rho": 0.1, "aperture": None, "density": 9},
        "terms": {"f": f, "g": g, "h": h},
        "tails": {"f": [None], "g": [None], "h": [None]},
    }


def invariant_toy_spec(q=7, omega=GOLDEN):
    """Invariant-subspace toy: fbar = -u^3, gbar = -u^2 y, no oscillation."""
    f = [[_term(3, _mode([0], _mono([3, 0], -1.0)))]]
    g = [[_term(3, _mode([0], _mono([2, 1], -1.0)))]]
    h = [[]]
    return {
        "kind": "map",
        "name": "invariant-toy",
        "dims": {"n": 1, "m": 1, "d": 1},
        "orders": {"N": 3, "M": 3, "P": 3, "q": q},
        "omega": [float(omega)],
        "nu": None,
        "truncation": 2,
        "cone": {"rho": 0.1, "aperture": None, "density": 9},
        "terms": {"f": f, "g": g, "h": h},
        "tails": {"f": [None], "g": [None], "h": [None]},
    }


def synthetic_flow_spec(eps=0.35, nu=np.sqrt(2.0), q=7):
    """Quasiperiodically forced scalar flow (n = m = 1, d = 0, d' = 1)."""
    f = [[_term(3,
                _mode([0], _mono([3, 0], -1.0)),
                _mode([1], _mono([3, 0], eps / 2.0)),
                _mode([-1], _mono([3, 0], eps / 2.0))),
          _term(4, _mode([0], _mono([4, 0], 0.2)))]]
    g = [[_term(3, _mode([0], _mono([2, 1], 1.0)),
                _mode([1], _mono([2, 1], 0.1)),
                _mode([-1], _mono([2, 1], 0.1))),
          _term(5, _mode([0], _mono([3, 2], -0.1)))]]
    return {
        "kind": "flow",
        "name": "synthetic-flow",
        "dims": {"n": 1, "m": 1, "d": 0},
        "orders": {"N": 3, "M": 3, "P": 3, "q": q},
        "omega": [],
        "nu": [float(nu)],
        "truncation": 4,
        "cone": {"rho": 0.1, "aperture": None, "density": 9},
        "terms": {"f": f, "g": g, "h": []},
        "tails": {"f": [None], "g": [None], "h": []},
    }


def planar_flow_spec(q=8):
    """Polynomial 2+2 dimensional flow shaped like the blown-up 3-body field.

    n = m = 2, d = 0, N = M = P = 4 with diagonal leading parts
    f = x1^3 S x, g = x1^3 U y (S contracting, U expanding) plus a few
    higher-order couplings.  Variables ordered (x1, x2, y1, y2).
    """
    S = [-1.0, -2.0]
    U = [2.0, 1.0]
    f = [
        [_term(4, _mode([], _mono([4, 0, 0, 0], S[0]))),
         _term(5, _mode([], _mono([5, 0, 0, 0], 0.2), _mono([3, 0, 1, 1], 0.1)))],
        [_term(4, _mode([], _mono([3, 1, 0, 0], S[1]))),
         _term(5, _mode([], _mono([3, 2, 0, 0], -0.15))),
         _term(6, _mode([], _mono([4, 0, 2, 0], 0.12)))],
    ]
    g = [
        [_term(4, _mode([], _mono([3, 0, 1, 0], U[0]))),
         _term(5, _mode([], _mono([3, 1, 1, 0], 0.25), _mono([5, 0, 0, 0], 0.1))),
         _term(6, _mode([], _mono([4, 0, 1, 1], 0.1)))],
        [_term(4, _mode([], _mono([3, 0, 0, 1], U[1]))),
         _term(5, _mode([], _mono([2, 2, 0, 1], -0.2), _mono([4, 1, 0, 0], 0.06))),
         _term(7, _mode([], _mono([5, 0, 2, 0], -0.08)))],
    ]
    return {
        "kind": "flow",
        "name": "planar-parabolic",
        "dims": {"n": 2, "m": 2, "d": 0},
        "orders": {"N": 4, "M": 4, "P": 4, "q": q},
        "omega": [],
        "nu": None,
        "truncation": 0,
        "cone": {"rho": 0.3, "aperture": 0.1, "density": 9},
        "terms": {"f": f, "g": g, "h": []},
        "tails": {"f": [None, None], "g": [None, None], "h": []},
    }
