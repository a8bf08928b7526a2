"""Truncated Fourier series on T^d and the two small-divisors solvers.

Coefficient blocks are either plain complex ndarrays or degree-tagged
homogeneous terms (anything with ``conj``/``scale`` and an optional
``degree`` attribute).  Conjugate symmetry ``coeff(-k) == conj(coeff(k))``
is enforced on construction so the represented series is real valued.
"""

from __future__ import annotations

import itertools
import json

import numpy as np

from .errors import NearResonance, NonzeroAverage

TWO_PI_I = 2.0j * np.pi


def _is_term(block):
    return hasattr(block, "degree") and hasattr(block, "scale")


def _block_conj(block):
    if _is_term(block):
        return block.conj()
    return np.conj(np.asarray(block, dtype=complex))


def _block_scale(block, c):
    if _is_term(block):
        return block.scale(c)
    return np.asarray(block, dtype=complex) * c


def _block_add(a, b):
    if _is_term(a):
        return a.add(b)
    return np.asarray(a, dtype=complex) + np.asarray(b, dtype=complex)


def _block_norm(block):
    if _is_term(block):
        return block.norm()
    return float(np.max(np.abs(block))) if np.size(block) else 0.0


class FourierMap:
    """Sparse truncated Fourier series ``sum_k c_k e^{2 pi i k.theta}``.

    Parameters
    ----------
    angle_dim : int
        Number of angles d (0 is allowed and means a single constant block).
    truncation : int
        Per-axis mode bound; modes with any ``|k_i| > truncation`` are dropped.
    coeffs : dict
        Map from integer tuples ``k`` to coefficient blocks.
    symmetrize : bool
        Enforce conjugate symmetry (default).  With ``symmetrize=False`` the
        caller asserts the input already satisfies it.
    """

    def __init__(self, angle_dim, truncation, coeffs, symmetrize=True):
        self.angle_dim = int(angle_dim)
        self.truncation = int(truncation)
        cleaned = {}
        for k, block in coeffs.items():
            k = tuple(int(x) for x in k)
            if len(k) != self.angle_dim:
                raise ValueError(f"mode {k} has wrong length for d={self.angle_dim}")
            if any(abs(x) > self.truncation for x in k):
                continue
            cleaned[k] = block
        if symmetrize and self.angle_dim > 0:
            cleaned = self._symmetrized(cleaned)
        self.coeffs = cleaned

    @staticmethod
    def _symmetrized(coeffs):
        out = {}
        seen = set()
        for k in coeffs:
            if k in seen:
                continue
            mk = tuple(-x for x in k)
            seen.add(k)
            seen.add(mk)
            ck = coeffs.get(k)
            cmk = coeffs.get(mk)
            if cmk is None:
                sym = _block_scale(ck, 0.5)
            else:
                sym = _block_scale(_block_add(ck, _block_conj(cmk)), 0.5)
            out[k] = sym
            if mk != k:
                out[mk] = _block_conj(sym)
            else:
                # k = -k: the block must be real; keep the real part.
                out[k] = _block_scale(_block_add(sym, _block_conj(sym)), 0.5)
        return out

    # -- accessors ---------------------------------------------------------

    @property
    def zero_key(self):
        return (0,) * self.angle_dim

    def average(self):
        """The k = 0 coefficient block (None if absent)."""
        return self.coeffs.get(self.zero_key)

    def oscillatory(self):
        """Copy with the average removed (zero mean)."""
        coeffs = {k: v for k, v in self.coeffs.items() if k != self.zero_key}
        return FourierMap(self.angle_dim, self.truncation, coeffs, symmetrize=False)

    def modes(self):
        return sorted(self.coeffs.keys())

    def map_blocks(self, fn):
        return FourierMap(
            self.angle_dim,
            self.truncation,
            {k: fn(k, v) for k, v in self.coeffs.items()},
            symmetrize=False,
        )

    def scale(self, c):
        out = self.map_blocks(lambda k, v: _block_scale(v, c))
        if np.iscomplexobj(np.asarray(c)) and self.angle_dim > 0:
            return FourierMap(self.angle_dim, self.truncation, out.coeffs)
        return out

    def add(self, other):
        if other.angle_dim != self.angle_dim:
            raise ValueError("angle dimension mismatch")
        coeffs = dict(self.coeffs)
        for k, v in other.coeffs.items():
            coeffs[k] = _block_add(coeffs[k], v) if k in coeffs else v
        trunc = max(self.truncation, other.truncation)
        return FourierMap(self.angle_dim, trunc, coeffs, symmetrize=False)

    # -- evaluation --------------------------------------------------------

    def evaluate(self, theta, u=None):
        """Evaluate the series at angle ``theta`` (blocks at ``u`` if terms).

        Returns the real value of the symmetric series; complex ``u`` or
        ``theta`` (analytic continuation) returns the complex sum.
        """
        theta = np.atleast_1d(np.asarray(theta))
        total = None
        for k, block in self.coeffs.items():
            val = block.evaluate(u) if _is_term(block) else np.asarray(block)
            phase = np.exp(TWO_PI_I * np.dot(np.asarray(k, dtype=float), theta))
            contrib = val * phase
            total = contrib if total is None else total + contrib
        if total is None:
            return 0.0
        if not (np.iscomplexobj(theta) or (u is not None and np.iscomplexobj(np.asarray(u)))):
            # the symmetrized series is real at real arguments; the imaginary
            # residue is round-off relative to the mode magnitudes
            total = np.asarray(total)
            if np.iscomplexobj(total):
                total = total.real
        return total

    def theta_derivative(self, axis):
        """Derivative with respect to angle component ``axis``."""
        return self.map_blocks(lambda k, v: _block_scale(v, TWO_PI_I * k[axis]))

    def shift(self, delta):
        """Replace theta by theta + delta (constant shift)."""
        delta = np.asarray(delta, dtype=float)
        return FourierMap(
            self.angle_dim,
            self.truncation,
            {
                k: _block_scale(v, np.exp(TWO_PI_I * np.dot(np.asarray(k, float), delta)))
                for k, v in self.coeffs.items()
            },
            symmetrize=False,
        )

    def norm(self):
        return sum(_block_norm(v) for v in self.coeffs.values())

    # -- serialization -----------------------------------------------------

    def to_json_dict(self):
        modes = []
        for k in self.modes():
            block = self.coeffs[k]
            if _is_term(block):
                modes.append({"k": list(k), "term": block.to_json_dict()})
            else:
                arr = np.asarray(block, dtype=complex)
                modes.append(
                    {
                        "k": list(k),
                        "shape": list(arr.shape),
                        "re": arr.real.ravel().tolist(),
                        "im": arr.imag.ravel().tolist(),
                    }
                )
        return {"d": self.angle_dim, "K": self.truncation, "modes": modes}

    @classmethod
    def from_json_dict(cls, data, term_loader=None):
        coeffs = {}
        for entry in data["modes"]:
            k = tuple(entry["k"])
            if "term" in entry:
                if term_loader is None:
                    raise ValueError("term blocks present but no loader supplied")
                coeffs[k] = term_loader(entry["term"])
            else:
                shape = tuple(entry["shape"])
                arr = np.asarray(entry["re"], dtype=float) + 1j * np.asarray(
                    entry["im"], dtype=float
                )
                coeffs[k] = arr.reshape(shape) if shape else arr.reshape(())
        return cls(data["d"], data["K"], coeffs, symmetrize=False)

    def to_json(self):
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text, term_loader=None):
        return cls.from_json_dict(json.loads(text), term_loader=term_loader)


class Frequency:
    """Rotation vector omega, optionally extended by a time frequency nu."""

    def __init__(self, omega, time_freq=None):
        self.omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if not np.all(np.isfinite(self.omega)):
            raise ValueError("frequency components must be finite")
        self.time_freq = (
            None if time_freq is None else np.atleast_1d(np.asarray(time_freq, dtype=float))
        )
        if self.time_freq is not None and not np.all(np.isfinite(self.time_freq)):
            raise ValueError("time frequency components must be finite")

    @property
    def dim(self):
        return self.omega.size

    def extended(self):
        """The combined vector (omega, nu) used for quasiperiodic flows."""
        if self.time_freq is None:
            return self.omega
        return np.concatenate([self.omega, self.time_freq])

    def resonance_margin(self, k_max=20, kind="map"):
        """Smallest divisor magnitude over 0 < |k|_1 <= k_max."""
        vec = self.extended()
        margin = np.inf
        for k in _iter_modes(vec.size, k_max):
            dot = float(np.dot(vec, k))
            mag = abs(np.exp(TWO_PI_I * dot) - 1.0) if kind == "map" else abs(2.0 * np.pi * dot)
            margin = min(margin, mag)
        return margin


def _iter_modes(d, k_max):
    """Nonzero integer vectors with l1 norm at most k_max."""
    for k in itertools.product(range(-k_max, k_max + 1), repeat=d):
        if all(x == 0 for x in k):
            continue
        if sum(abs(x) for x in k) <= k_max:
            yield np.asarray(k, dtype=int)


def _require_zero_average(h, tol):
    avg = h.average()
    if avg is not None and _block_norm(avg) > tol:
        raise NonzeroAverage(f"average norm {_block_norm(avg):.3e} exceeds {tol:.1e}")


def solve_small_divisors_map(h, freq, divisor_floor=1e-8, average_tol=1e-13):
    """Zero-average solution of phi(u, theta+omega) - phi(u, theta) = h.

    Divides each retained mode by ``e^{2 pi i k.omega} - 1``; degree tags of
    coefficient blocks are untouched, so homogeneity is preserved.
    """
    _require_zero_average(h, average_tol)
    omega = freq.omega
    if omega.size != h.angle_dim:
        raise ValueError("frequency dimension does not match the series")
    coeffs = {}
    for k, block in h.coeffs.items():
        if all(x == 0 for x in k):
            continue
        divisor = np.exp(TWO_PI_I * float(np.dot(omega, k))) - 1.0
        if abs(divisor) <= divisor_floor:
            raise NearResonance(k, abs(divisor))
        coeffs[k] = _block_scale(block, 1.0 / divisor)
    return FourierMap(h.angle_dim, h.truncation, coeffs, symmetrize=False)


def solve_small_divisors_flow(h, freq, divisor_floor=1e-8, average_tol=1e-13):
    """Zero-average solution of d_theta psi . omega = h (extended frequency).

    When ``freq`` has a time frequency, ``h``'s angle axes must span
    (theta, tau) and the divisor is ``2 pi i k.(omega, nu)``.
    """
    _require_zero_average(h, average_tol)
    vec = freq.extended()
    if vec.size != h.angle_dim:
        vec = freq.omega
    if vec.size != h.angle_dim:
        raise ValueError("frequency dimension does not match the series")
    coeffs = {}
    for k, block in h.coeffs.items():
        if all(x == 0 for x in k):
            continue
        divisor = TWO_PI_I * float(np.dot(vec, k))
        if abs(divisor) <= divisor_floor:
            raise NearResonance(k, abs(divisor))
        coeffs[k] = _block_scale(block, 1.0 / divisor)
    return FourierMap(h.angle_dim, h.truncation, coeffs, symmetrize=False)


def split_average(h):
    """Decompose h into (average block, zero-mean oscillatory part)."""
    return h.average(), h.oscillatory()


def diophantine_report(freq, k_max, tau_grid, kind="map"):
    """Exhaustive Diophantine-quality scan up to |k|_1 <= k_max.

    For each tau in the grid reports the largest constant c with
    ``|omega.k - l| >= c |k|^-tau`` (map case, l integer) or
    ``|omega.k| >= c |k|^-tau`` (flow case) over all scanned modes.
    A zero constant flags an exact resonance at the witness mode.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    vec = freq.extended() if kind == "flow" else freq.omega
    taus = [float(t) for t in tau_grid]
    best = {t: np.inf for t in taus}
    witness = {t: None for t in taus}
    min_distance = np.inf
    min_mode = None
    min_mode_k1 = None
    for k in _iter_modes(vec.size, k_max):
        dot = float(np.dot(vec, k))
        dist = abs(dot - round(dot)) if kind == "map" else abs(dot)
        k1 = int(np.sum(np.abs(k)))
        # ties broken toward the lowest-order resonance
        if dist < min_distance - 1e-18 or (
            abs(dist - min_distance) <= 1e-18
            and (min_mode_k1 is None or k1 < min_mode_k1
                 or (k1 == min_mode_k1 and k[0] > min_mode[0]))
        ):
            min_distance = dist
            min_mode = tuple(int(x) for x in k)
            min_mode_k1 = k1
        for t in taus:
            c = dist * k1**t
            if c < best[t]:
                best[t] = c
                witness[t] = tuple(int(x) for x in k)
    return {
        "kind": kind,
        "k_max": int(k_max),
        "c": {t: (0.0 if best[t] < 1e-15 else best[t]) for t in taus},
        "witness": witness,
        "min_divisor_distance": min_distance,
        "min_divisor_mode": min_mode,
        "resonant": bool(min_distance < 1e-15),
    }
