"""Weighted iterated function systems on the line.

A :class:`Wifs` is a finite family of similarities ``x -> ratio*x + t`` with
exact rational probability weights.  Dimensions are reported in bits
(logarithms to base 2).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Sequence

from .scalars import (
    Scalar,
    as_scalar,
    golden,
    is_exact,
    parse_scalar,
    scalar_from_json,
    scalar_to_json,
    sign,
    to_float,
)

__all__ = [
    "Wifs",
    "ValidationResult",
    "DimensionReport",
    "InvalidWifsError",
    "UnsupportedError",
    "validate",
    "require_valid",
    "similarity_dimensions",
    "bisect_T",
    "normalize_to_unit",
    "square_if_negative",
    "attractor_hull",
    "preset",
    "parse_preset",
    "SHIPPED_PRESETS",
    "shipped",
    "wifs_to_json",
    "wifs_from_json",
    "wifs_hash",
]

NORMALIZE_MARGIN = Fraction(1, 256)
T_BRACKET = (0.0, 40.0)


class InvalidWifsError(ValueError):
    pass


class UnsupportedError(ValueError):
    """Operation not available for this kind of WIFS (e.g. non-homogeneous)."""


@dataclass(frozen=True)
class Wifs:
    ratios: tuple
    translations: tuple
    weights: tuple
    name: str | None = field(default=None, compare=False)

    def __init__(self, ratios: Sequence, translations: Sequence, weights: Sequence | None = None,
                 name: str | None = None):
        ratios = tuple(as_scalar(r) for r in ratios)
        translations = tuple(as_scalar(t) for t in translations)
        if len(ratios) == 1 and len(translations) > 1:
            ratios = ratios * len(translations)
        if weights is None:
            weights = [Fraction(1, len(translations))] * len(translations)
        weights = tuple(p if isinstance(p, float) else Fraction(p) for p in weights)
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "translations", translations)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "name", name)

    @property
    def maps(self) -> list[tuple[Scalar, Scalar]]:
        return list(zip(self.ratios, self.translations))

    def __len__(self) -> int:
        return len(self.translations)

    @property
    def homogeneous(self) -> bool:
        return all(r == self.ratios[0] for r in self.ratios)

    @property
    def ratio(self) -> Scalar:
        if not self.homogeneous:
            raise UnsupportedError("WIFS is not homogeneous")
        return self.ratios[0]

    @property
    def exact(self) -> bool:
        return all(is_exact(x) for x in self.ratios + self.translations)

    def delta_atoms(self) -> dict:
        """Atoms of the measure sum_i p_i delta_{t_i}, collapsed."""
        out: dict = {}
        for t, p in zip(self.translations, self.weights):
            out[t] = out.get(t, 0) + p
        return out


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate(w: Wifs) -> ValidationResult:
    if len(w.ratios) != len(w.translations) or len(w.weights) != len(w.translations):
        return ValidationResult(False, "ratios, translations and weights differ in length")
    if len(w.translations) < 2:
        return ValidationResult(False, "at least 2 maps are required")
    for i, r in enumerate(w.ratios):
        if isinstance(r, float):
            if not (0 < abs(r) < 1):
                return ValidationResult(False, f"map {i}: |ratio| must lie in (0, 1), got {r}")
        else:
            if r == 0 or sign(abs(r) - 1) >= 0:
                return ValidationResult(False, f"map {i}: |ratio| must lie in (0, 1), got {r}")
    for i, p in enumerate(w.weights):
        if not isinstance(p, Fraction):
            return ValidationResult(False, f"weight {i} is not an exact rational")
        if p <= 0:
            return ValidationResult(False, f"weight {i} must be positive, got {p}")
    total = sum(w.weights, Fraction(0))
    if total != 1:
        return ValidationResult(False, f"weights sum to {total}, not 1")
    return ValidationResult(True)


def require_valid(w: Wifs) -> Wifs:
    res = validate(w)
    if not res:
        raise InvalidWifsError(res.reason)
    return w


# --- dimensions ------------------------------------------------------------


@dataclass(frozen=True)
class DimensionReport:
    q: float
    sdim: float
    sdim_q: float
    T: float
    entropy: float
    lyapunov: float
    sdim_clipped: bool
    sdim_q_clipped: bool
    residual: float

    @property
    def predicted_sdim(self) -> float:
        return min(self.sdim, 1.0)

    @property
    def predicted_D(self) -> float:
        """min(sdim(mu, q), 1): the L^q dimension predicted under exponential separation."""
        return min(self.sdim_q, 1.0)

    def as_dict(self) -> dict:
        return {
            "q": self.q, "sdim": self.sdim, "sdim_q": self.sdim_q, "T": self.T,
            "entropy_bits": self.entropy, "lyapunov_bits": self.lyapunov,
            "predicted_sdim": self.predicted_sdim, "predicted_D": self.predicted_D,
            "sdim_clipped": self.sdim_clipped, "sdim_q_clipped": self.sdim_q_clipped,
            "T_residual": self.residual,
        }


def _abs_float(r) -> float:
    return abs(to_float(r)[0])


def _solve_T(ps: list[float], lams: list[float], q: float) -> float:
    """Bisection for sum_i p_i^q |lam_i|^{-T} = 1 on the fixed bracket."""
    logs = [math.log2(lam) for lam in lams]
    lp = [q * math.log2(p) for p in ps]

    def g(T: float) -> float:
        return math.fsum(2.0 ** (a - T * b) for a, b in zip(lp, logs)) - 1.0

    lo, hi = T_BRACKET
    if not (g(lo) < 0 < g(hi)):
        raise ValueError("bracket [0, 40] does not straddle the root of the T(q) equation")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(g(lo)) <= abs(g(hi)) else hi


def bisect_T(w: Wifs, q: float) -> float:
    """T(q) by bisection, valid for homogeneous and non-homogeneous systems alike."""
    require_valid(w)
    return _solve_T([float(p) for p in w.weights], [_abs_float(r) for r in w.ratios], q)


def similarity_dimensions(w: Wifs, q: float) -> DimensionReport:
    require_valid(w)
    if not q > 1:
        raise ValueError(f"q must be > 1, got {q}")
    ps = [float(p) for p in w.weights]
    lams = [_abs_float(r) for r in w.ratios]
    entropy = math.fsum(p * math.log2(1 / p) for p in ps)
    lyap = math.fsum(p * math.log2(1 / lam) for p, lam in zip(ps, lams))
    sdim = entropy / lyap
    if w.homogeneous:
        T = math.log2(math.fsum(p ** q for p in ps)) / math.log2(lams[0])
    else:
        T = _solve_T(ps, lams, q)
    residual = abs(math.fsum(p ** q * lam ** (-T) for p, lam in zip(ps, lams)) - 1.0)
    sdim_q = T / (q - 1)
    return DimensionReport(q, sdim, sdim_q, T, entropy, lyap, sdim > 1, sdim_q > 1, residual)


# --- transformations ---------------------------------------------------------


def square_if_negative(w: Wifs) -> Wifs:
    """Replace a negative common ratio by its square via the composed system f_i f_j."""
    require_valid(w)
    if not w.homogeneous:
        raise UnsupportedError("square_if_negative needs a homogeneous WIFS")
    lam = w.ratio
    if sign(lam) > 0:
        return w
    n = len(w)
    trans, weights = [], []
    for i, j in product(range(n), repeat=2):
        trans.append(w.translations[i] + lam * w.translations[j])
        weights.append(w.weights[i] * w.weights[j])
    return Wifs([lam * lam] * (n * n), trans, weights, name=w.name)


def attractor_hull(w: Wifs) -> tuple[Scalar, Scalar]:
    """Convex hull [a, b] of the attractor of a homogeneous WIFS."""
    w = square_if_negative(w)
    lam = w.ratio
    one_minus = 1 - lam
    lo, hi = min(w.translations), max(w.translations)
    return lo / one_minus, hi / one_minus


@dataclass(frozen=True)
class AffineMap:
    """x -> scale * x + shift."""
    scale: Scalar
    shift: Scalar

    def __call__(self, x):
        return self.scale * x + self.shift

    @property
    def is_identity(self) -> bool:
        return self.scale == 1 and self.shift == 0

    def as_dict(self) -> dict:
        return {"scale": scalar_to_json(self.scale), "shift": scalar_to_json(self.shift)}


def normalize_to_unit(w: Wifs) -> tuple[Wifs, AffineMap]:
    """Conjugate a homogeneous WIFS so its attractor sits inside [0, 1).

    Systems whose attractor already lies in [0, 1] are returned unchanged.
    Otherwise the attractor is translated to start at 0 and scaled by the
    largest power of two 2^-k making its length at most 1 - 2^-8, which keeps
    the dyadic grid structure intact.  Ratios and weights are untouched, so
    L^q dimensions do not change.
    """
    require_valid(w)
    if not w.homogeneous:
        raise UnsupportedError("normalization needs a homogeneous WIFS")
    a, b = attractor_hull(w)
    if a >= 0 and b <= 1:
        return w, AffineMap(Fraction(1), Fraction(0))
    length = b - a
    limit = 1 - NORMALIZE_MARGIN
    c = Fraction(1)
    while c * length > limit:
        c /= 2
    phi = AffineMap(c, -c * a)
    lam = w.ratio
    # conjugate f_i by phi: t_i' = phi(f_i(phi^{-1}(0))) = c * (t_i + lam*a - a)
    trans = [c * (t + lam * a - a) for t in w.translations]
    return Wifs(w.ratios, trans, w.weights, name=w.name), phi


# --- presets ------------------------------------------------------------------


def _bernoulli(lam) -> Wifs:
    lam = as_scalar(lam)
    fl = to_float(lam)[0]
    if not 0 < fl < 1:
        raise InvalidWifsError("bernoulli requires lambda in (0, 1)")
    return Wifs([lam, lam], [Fraction(0), Fraction(1)], [Fraction(1, 2)] * 2, name=f"bernoulli({lam})")


def _digits(p: int, D) -> list[int]:
    D = sorted(set(int(d) for d in D))
    if p < 2:
        raise InvalidWifsError("p must be >= 2")
    if not D or any(d < 0 or d >= p for d in D):
        raise InvalidWifsError(f"digits must lie in 0..{p - 1}")
    if len(D) == p:
        raise InvalidWifsError("digit set must be a proper subset of {0, ..., p-1}")
    if len(D) < 2:
        raise InvalidWifsError("at least 2 digits are required")
    return D


def _p_cantor(p: int, D) -> Wifs:
    D = _digits(p, D)
    lam = Fraction(1, p)
    return Wifs([lam] * len(D), [Fraction(d, p) for d in D], None,
                name=f"p_cantor({p},{{{','.join(map(str, D))}}})")


def _projected_product(p: int, D, t) -> Wifs:
    D = _digits(p, D)
    t = as_scalar(t)
    lam = Fraction(1, p)
    trans = [(i + t * j) * lam for i, j in product(D, D)]
    return Wifs([lam] * len(trans), trans, None,
                name=f"projected_product({p},{{{','.join(map(str, D))}}},t={t})")


def preset(name: str, **params) -> Wifs:
    """Build a named WIFS: ``bernoulli``, ``p_cantor`` or ``projected_product``."""
    if name == "bernoulli":
        return _bernoulli(params["lam"] if "lam" in params else params["lambda"])
    if name == "p_cantor":
        return _p_cantor(params["p"], params["D"])
    if name == "projected_product":
        return _projected_product(params["p"], params["D"], params["t"])
    if name in SHIPPED_PRESETS:
        return shipped(name)
    raise KeyError(f"unknown preset {name!r}")


def parse_preset(spec: str, lam: str | None = None) -> Wifs:
    """Parse shorthand such as ``p_cantor:3:0,2``, ``bernoulli:2/3`` or ``golden``."""
    parts = spec.split(":")
    name = parts[0]
    if name == "bernoulli":
        value = parts[1] if len(parts) > 1 else lam
        if value is None:
            raise ValueError("bernoulli preset needs a lambda")
        return _bernoulli(parse_scalar(value))
    if name == "p_cantor":
        return _p_cantor(int(parts[1]), [int(d) for d in parts[2].split(",")])
    if name == "projected_product":
        return _projected_product(int(parts[1]), [int(d) for d in parts[2].split(",")], parse_scalar(parts[3]))
    if name in SHIPPED_PRESETS:
        return shipped(name)
    raise KeyError(f"unknown preset {spec!r}")


SHIPPED_PRESETS = ("cantor", "bernoulli_half", "bernoulli_2_3", "bernoulli_3_4", "golden")


def shipped(name: str) -> Wifs:
    if name == "cantor":
        return _p_cantor(3, [0, 2])
    if name == "bernoulli_half":
        return _bernoulli(Fraction(1, 2))
    if name == "bernoulli_2_3":
        return _bernoulli(Fraction(2, 3))
    if name == "bernoulli_3_4":
        return _bernoulli(Fraction(3, 4))
    if name == "golden":
        return _bernoulli(golden())
    raise KeyError(name)


# --- serialization ---------------------------------------------------------------


def wifs_to_json(w: Wifs) -> dict:
    return {
        "maps": [{"lambda": scalar_to_json(r), "t": scalar_to_json(t)} for r, t in w.maps],
        "weights": [scalar_to_json(p) for p in w.weights],
    }


def wifs_from_json(obj) -> Wifs:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if "preset" in obj:
        name = obj["preset"]
        if name == "bernoulli":
            return _bernoulli(scalar_from_json(obj["lambda"]))
        if name == "p_cantor":
            return _p_cantor(int(obj["p"]), obj["D"])
        if name == "projected_product":
            return _projected_product(int(obj["p"]), obj["D"], scalar_from_json(obj["t"]))
        return shipped(name)
    ratios = [scalar_from_json(m["lambda"]) for m in obj["maps"]]
    trans = [scalar_from_json(m["t"]) for m in obj["maps"]]
    weights = obj.get("weights")
    if weights is not None:
        weights = [scalar_from_json(p) for p in weights]
        if any(not isinstance(p, Fraction) for p in weights):
            raise InvalidWifsError("weights must be exact rationals")
    return Wifs(ratios, trans, weights)


def wifs_hash(w: Wifs) -> str:
    blob = json.dumps(wifs_to_json(w), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:32]
