"""Products, projections and fiber counts for p-Cantor sets.

For A = A_{p,D} and Pi_t(x, y) = x + t y, a Frostman exponent of the
projected product measure bounds the number of eps-separated points of
A_n that lie within eps of tA_n + u.  These are desk-scale versions of
that argument: enumeration at level n with eps = p^-n.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .measures import DEFAULT_ATOM_CAP, DiscreteMeasure, _check_cap, level_n_measure
from .scalars import Quadratic, as_scalar, scalar_to_json, to_float
from .separation import detect_exact_overlap, separation_number
from .wifs import preset

__all__ = [
    "FiberReport",
    "product_project",
    "cantor_level_set",
    "fiber_count",
    "ball_mass_exponent",
    "intersection_bound",
    "fiber_report",
]

FIBER_CONSTANT = 8


def product_project(mu: DiscreteMeasure, nu: DiscreteMeasure, t, cap: int = DEFAULT_ATOM_CAP) -> DiscreteMeasure:
    """Push-forward of mu x nu under (x, y) -> x + t y, collapsing equal points."""
    _check_cap(len(mu) * len(nu), cap)
    t = as_scalar(t)
    out: dict = {}
    get = out.get
    nitems = [(t * y, r) for y, r in nu.atoms.items()]
    for x, p in mu.atoms.items():
        for ty, r in nitems:
            z = x + ty
            if isinstance(z, Quadratic) and z.b == 0:
                z = z.a
            out[z] = get(z, 0) + p * r
    return DiscreteMeasure._raw(out)


def _digits(p: int, D: Iterable[int]) -> list[int]:
    D = sorted(set(int(d) for d in D))
    if p < 2:
        raise ValueError("p must be >= 2")
    if not D or D[0] < 0 or D[-1] >= p:
        raise ValueError(f"digits must lie in 0..{p - 1}")
    if len(D) == p:
        raise ValueError("D must be a proper subset of the digit set")
    return D


def cantor_level_set(p: int, D: Iterable[int], n: int) -> list[Fraction]:
    """A_n: the sorted points sum_{k=1}^n d_k p^-k with digits in D."""
    D = _digits(p, D)
    _check_cap(len(D) ** n, DEFAULT_ATOM_CAP)
    ints = [0]
    for _ in range(n):
        ints = [p * a + d for a in ints for d in D]
    den = p ** n
    return sorted(Fraction(a, den) for a in ints)


def _near(x, ys: Sequence, eps) -> bool:
    """dist(x, ys) <= eps for a sorted sequence ys."""
    k = bisect.bisect_left(ys, x)
    for j in (k - 1, k):
        if 0 <= j < len(ys) and abs(ys[j] - x) <= eps:
            return True
    return False


def fiber_count(p: int, D: Iterable[int], n: int, t, u, eps) -> int:
    """Greedy eps-separated count of {x in A_n : dist(x, t A_n + u) <= eps}.

    On a line, scanning sorted points and keeping every point at distance
    >= eps from the last kept one yields a maximal eps-separated subset of
    maximum cardinality.  Exact scalars are compared exactly.
    """
    A = cantor_level_set(p, D, n)
    t, u, eps = as_scalar(t), as_scalar(u), as_scalar(eps)
    exact = all(isinstance(v, Fraction) for v in (t, u, eps))
    if not exact:
        t, u, eps = to_float(t)[0], to_float(u)[0], to_float(eps)[0]
        xs = [float(a) for a in A]
    else:
        xs = A
    if eps < Fraction(1, p ** n) - (0 if exact else 1e-15):
        raise ValueError("eps must be at least p^-n")
    ys = sorted(t * a + u for a in xs)
    count = 0
    last = None
    for x in xs:
        if not _near(x, ys, eps):
            continue
        if last is None or x - last >= eps:
            count += 1
            last = x
    return count


def ball_mass_exponent(nu: DiscreteMeasure, eps: float) -> tuple[float, float]:
    """(max mass of a closed eps-ball, log(that mass) / log(eps)).

    Any interval of length 2 eps can be slid right until its left end hits
    an atom without losing mass, so windows anchored at atoms suffice.
    """
    xs, ms = nu.float_atoms()
    cum = np.concatenate([[0.0], np.cumsum(ms)])
    right = np.searchsorted(xs, xs + 2 * eps * (1 + 1e-12), side="right")
    best = float(np.max(cum[right] - cum[np.arange(len(xs))]))
    best = min(best, 1.0)
    return best, math.log(best) / math.log(eps)


def intersection_bound(p: int, D: Iterable[int], t=None, k_max: int = 4) -> dict:
    """s = log|D| / log p and the box-dimension bound max(2s - 1, 0) for irrational t.

    With ``t`` the report adds separation evidence for the projected IFS
    (maps (x + i + t j)/p): exact overlap detection for exact t, float
    separation numbers otherwise.
    """
    D = _digits(p, D)
    s = math.log(len(D)) / math.log(p)
    out = {"p": p, "D": D, "s": s, "bound": max(2 * s - 1, 0.0)}
    if t is None:
        return out
    t = as_scalar(t)
    proj = preset("projected_product", p=p, D=D, t=t)
    ev: dict = {"t": scalar_to_json(t)}
    if isinstance(t, Fraction):
        ev["regime"] = "rational-t"
        hit = detect_exact_overlap(proj, k_max)
        ev["overlap"] = None if hit is None else {"k": hit[0], "witness": [list(w) for w in hit[1]]}
        ev["bound_applies"] = False
        ev["note"] = "the bound is claimed for irrational t only"
    else:
        if isinstance(t, Quadratic):
            ev["regime"] = "irrational (exact quadratic)"
            hit = detect_exact_overlap(proj, k_max)
            ev["overlap"] = None if hit is None else {"k": hit[0], "witness": [list(w) for w in hit[1]]}
        else:
            ev["regime"] = "assumed irrational (float t cannot certify irrationality)"
        gammas = []
        for k in range(1, k_max + 1):
            if len(proj) ** k > 10**6:
                break
            g, _ = separation_number(proj, k)
            gammas.append({"k": k, "gamma": to_float(g)[0]})
        ev["gamma"] = gammas
        ev["bound_applies"] = True
    out["evidence"] = ev
    return out


@dataclass
class FiberReport:
    p: int
    D: list[int]
    t: object
    u: object
    n: int
    eps: float
    count: int
    s: float
    s_hat: float
    alpha_hat: float
    max_ball_mass: float
    C_measured: float
    lemma_bound: float
    lemma_holds: bool
    bound: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "p": self.p, "D": self.D,
            "t": scalar_to_json(self.t), "u": scalar_to_json(self.u),
            "n": self.n, "eps": self.eps, "N_eps": self.count,
            "s": self.s, "s_hat": self.s_hat, "alpha_hat": self.alpha_hat,
            "max_ball_mass": self.max_ball_mass,
            "C_measured": self.C_measured,
            "lemma_bound": self.lemma_bound, "lemma_constant": FIBER_CONSTANT,
            "lemma_holds": self.lemma_holds,
            "intersection_bound": self.bound,
        }


def fiber_report(p: int, D: Iterable[int], n: int, t, u=Fraction(0), eps=None, k_max: int = 3) -> FiberReport:
    """Fiber count at eps = p^-n checked against 8 eps^-(2 s_hat - alpha_hat).

    alpha_hat is the eps-ball Frostman estimate of Pi_t(mu_n x mu_n) and
    s_hat is the largest exponent with every product atom of mass >= eps^(2 s_hat).
    """
    D = _digits(p, D)
    t, u = as_scalar(t), as_scalar(u)
    eps_exact = Fraction(1, p ** n) if eps is None else as_scalar(eps)
    eps_f = to_float(eps_exact)[0]
    count = fiber_count(p, D, n, t, u, eps_exact)
    mu = level_n_measure(preset("p_cantor", p=p, D=D), n)
    proj = product_project(mu, mu, t)
    ball, alpha = ball_mass_exponent(proj, eps_f)
    min_atom = float(min(mu.masses())) ** 2
    s_hat = math.log(min_atom) / (2 * math.log(eps_f))
    expo = 2 * s_hat - alpha
    lemma = FIBER_CONSTANT * eps_f ** (-expo)
    C = count * eps_f ** expo
    s = math.log(len(D)) / math.log(p)
    bound = intersection_bound(p, D, t, k_max)
    return FiberReport(p, D, t, u, n, eps_f, count, s, s_hat, alpha, ball, C, lemma,
                       count <= lemma, bound)
