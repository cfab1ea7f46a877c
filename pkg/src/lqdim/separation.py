"""Separation numbers Gamma_k, exact-overlap detection and rational certificates.

Gamma_k is the minimal distance between the translation parts of distinct
length-k compositions with equal contraction ratio.  Exponential separation
is a statement about infinitely many k, so the reports here only carry finite
evidence (``delta_hat = min_k Gamma_k^(1/k)`` over the computed range) plus,
for rational parameters, a denominator certificate valid for every k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .measures import ResourceError, _ExactOrder
from .scalars import Quadratic, is_exact, scalar_to_json, to_float
from .wifs import Wifs, require_valid

__all__ = [
    "GammaRecord",
    "SeparationReport",
    "Certificate",
    "CertificateRefused",
    "DEFAULT_WORD_CAP",
    "level_translations",
    "separation_number",
    "detect_exact_overlap",
    "certified_gamma_lower_bound",
    "separation_report",
]

DEFAULT_WORD_CAP = 10**7
FINITE_EVIDENCE_NOTE = (
    "exponential separation concerns infinitely many k; delta_hat is finite evidence only"
)
DEGREE_NOTE = "certificates cover rational parameters only; quadratic-field (degree 2) parameters are not certified"


class CertificateRefused(ValueError):
    pass


def level_translations(w: Wifs, k: int, cap: int = DEFAULT_WORD_CAP):
    """Enumerate length-k words, grouped by ratio product.

    Returns ``(groups, collisions)`` where ``groups`` maps each ratio product to
    a dict translation -> lexicographically first word, and ``collisions``
    lists word pairs (first, other) realising identical maps.
    The translation of word (i_1..i_k) is f_{i_1} o ... o f_{i_k}(0).
    """
    require_valid(w)
    if k < 1:
        raise ValueError("k must be >= 1")
    n = len(w)
    if n ** k > cap:
        raise ResourceError(f"{n}^{k} words exceed the enumeration cap {cap}; use certificate mode")
    # build from the innermost map outwards: word (i,)+u has translation t_i + r_i * trans(u)
    entries = [((), Fraction(1), Fraction(0))]
    for _ in range(k):
        nxt = []
        for i in range(n):
            r, t = w.ratios[i], w.translations[i]
            for word, ratio, trans in entries:
                nxt.append(((i,) + word, r * ratio, t + r * trans))
        entries = nxt
    entries.sort(key=lambda e: e[0])
    groups: dict = {}
    collisions = []
    for word, ratio, trans in entries:
        g = groups.setdefault(ratio, {})
        if trans in g:
            collisions.append((g[trans], word))
        else:
            g[trans] = word
    return groups, collisions


def separation_number(w: Wifs, k: int, cap: int = DEFAULT_WORD_CAP):
    """Gamma_k and a witness word pair realising it.

    Returns ``(gamma, witness)``; gamma is exact for exact systems.  If no two
    words share a ratio (possible only for non-homogeneous systems), gamma is
    1 per the distance convention and the witness is None.
    """
    groups, collisions = level_translations(w, k, cap)
    if collisions:
        return Fraction(0), min(collisions)
    best = None
    best_witness = None
    for g in groups.values():
        if len(g) < 2:
            continue
        items = sorted(g.items(), key=lambda kv: _ExactOrder(kv[0]))
        for (x0, w0), (x1, w1) in zip(items, items[1:]):
            gap = x1 - x0
            witness = tuple(sorted((w0, w1)))
            if best is None or _less(gap, best) or (gap == best and witness < best_witness):
                best, best_witness = gap, witness
    if best is None:
        return Fraction(1), None
    if isinstance(best, Quadratic) and best.b == 0:
        best = best.a
    return best, best_witness


def _less(a, b) -> bool:
    return _ExactOrder(a) < _ExactOrder(b)


def detect_exact_overlap(w: Wifs, k_max: int, cap: int = DEFAULT_WORD_CAP):
    """Smallest k <= k_max with two distinct words giving the same map, else None.

    Returns ``(k, witness)`` or ``None``.
    """
    require_valid(w)
    if not w.exact:
        raise ValueError("exact overlap detection refuses float scalars (exact zero is undecidable)")
    for k in range(1, k_max + 1):
        _, collisions = level_translations(w, k, cap)
        if collisions:
            return k, min(collisions)
    return None


@dataclass
class Certificate:
    k: int
    bound: Fraction
    ratio_denominator: int
    translation_denominator: int
    witness_numerator: int | None = None
    note: str = DEGREE_NOTE

    @property
    def delta(self) -> Fraction:
        """Exponential separation constant 1/(den(lambda) * den(t))."""
        return Fraction(1, self.ratio_denominator * self.translation_denominator)

    def as_dict(self) -> dict:
        return {
            "k": self.k,
            "bound": scalar_to_json(self.bound),
            "bound_float": float(self.bound),
            "ratio_denominator": self.ratio_denominator,
            "translation_denominator": self.translation_denominator,
            "witness_numerator": self.witness_numerator,
            "delta": scalar_to_json(self.delta),
            "note": self.note,
        }


def certified_gamma_lower_bound(w: Wifs, k: int, cap: int = DEFAULT_WORD_CAP) -> Certificate:
    """Certify Gamma_k >= 1/(den(lambda)^(k-1) * den(t)) for rational homogeneous systems.

    Every level-k translation is an integer over den(t) * den(lambda)^(k-1),
    so any nonzero difference is at least that reciprocal.  The level is
    checked for exact overlaps first; when enumeration is within ``cap`` the
    integer numerator of the minimal gap is attached as proof data.
    """
    require_valid(w)
    scalars = (*w.ratios, *w.translations)
    if not all(isinstance(x, Fraction) for x in scalars):
        raise CertificateRefused(
            "certificates need rational ratio and translations; " + DEGREE_NOTE
        )
    if not w.homogeneous:
        raise CertificateRefused("certificates are implemented for homogeneous systems")
    lam_den = w.ratio.denominator
    t_den = 1
    for t in w.translations:
        t_den = t_den * t.denominator // math.gcd(t_den, t.denominator)
    bound = Fraction(1, t_den * lam_den ** (k - 1))
    witness_num = None
    if len(w) ** k <= cap:
        gamma, _ = separation_number(w, k, cap)
        if gamma == 0:
            raise CertificateRefused(f"exact overlap at level {k}: Gamma_{k} = 0")
        scaled = gamma / bound
        assert scaled.denominator == 1 and scaled >= 1
        witness_num = int(scaled)
    else:
        raise ResourceError(f"cannot rule out exact overlaps at level {k} within the word cap")
    return Certificate(k, bound, lam_den, t_den, witness_num)


@dataclass
class GammaRecord:
    k: int
    value: object
    overlap: bool
    witness: tuple | None

    def as_dict(self) -> dict:
        exact = is_exact(self.value)
        return {
            "k": self.k,
            "value": to_float(self.value)[0],
            "exact": scalar_to_json(self.value) if exact else None,
            "overlap": self.overlap,
            "witness": [list(wd) for wd in self.witness] if self.witness else None,
        }


@dataclass
class SeparationReport:
    records: list[GammaRecord]
    delta_hat: float
    overlap_level: int | None
    certificate: dict | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "gamma": [r.as_dict() for r in self.records],
            "delta_hat": self.delta_hat,
            "overlap_level": self.overlap_level,
            "certificate": self.certificate,
            "notes": self.notes,
        }


def separation_report(w: Wifs, k_max: int, cap: int = DEFAULT_WORD_CAP) -> SeparationReport:
    records = []
    overlap_level = None
    for k in range(1, k_max + 1):
        if len(w) ** k > cap:
            break
        gamma, witness = separation_number(w, k, cap)
        overlap = gamma == 0
        if overlap and overlap_level is None:
            overlap_level = k
        records.append(GammaRecord(k, gamma, overlap, witness))
    if overlap_level is not None:
        delta_hat = 0.0
    else:
        delta_hat = min(to_float(r.value)[0] ** (1.0 / r.k) for r in records)
    notes = [FINITE_EVIDENCE_NOTE]
    cert = None
    try:
        if overlap_level is None and records:
            kc = records[-1].k
            c = certified_gamma_lower_bound(w, kc, cap)
            cert = c.as_dict()
            cert["per_k"] = [
                {"k": r.k, "bound": scalar_to_json(Fraction(1, c.translation_denominator * c.ratio_denominator ** (r.k - 1))),
                 "gamma_times_inverse_bound": str(r.value * c.translation_denominator * c.ratio_denominator ** (r.k - 1))}
                for r in records
            ]
            cert["all_k"] = (
                "Gamma_k >= 1/(den(t) * den(lambda)^(k-1)) at every level k free of exact overlaps; "
                f"overlaps were ruled out for k <= {kc}"
            )
    except CertificateRefused as exc:
        notes.append(str(exc))
    if cert is None and not all(isinstance(x, Fraction) for x in (*w.ratios, *w.translations)):
        if not any(DEGREE_NOTE in n for n in notes):
            notes.append(DEGREE_NOTE)
    if not w.homogeneous:
        notes.append("only equal-ratio word pairs are compared for non-homogeneous systems")
    return SeparationReport(records, delta_hat, overlap_level, cert, notes)
