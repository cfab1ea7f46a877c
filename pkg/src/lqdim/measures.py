"""Finite atomic measures, dyadic histograms and the discrete approximants mu_n."""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
import pickle
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

import numpy as np

from .scalars import Quadratic, floor_scalar, is_exact, sign, to_float
from .wifs import (
    UnsupportedError,
    Wifs,
    normalize_to_unit,
    require_valid,
    square_if_negative,
    wifs_hash,
)

__all__ = [
    "ResourceError",
    "EmptyRestrictionError",
    "ConvergenceError",
    "DiscreteMeasure",
    "DyadicHistogram",
    "DEFAULT_ATOM_CAP",
    "convolve",
    "scale",
    "translate",
    "delta_measure",
    "level_n_measure",
    "level_measures",
    "level_masses",
    "level_histograms",
    "LevelMasses",
    "convolution_level_n",
    "power_sum",
    "q_norm",
    "entropy",
    "log2",
    "dyadic_bin",
    "invariant_histogram",
    "restrict_normalize",
]

# dict-of-big-int atoms cost a few hundred bytes each; 2^22 stays well inside a few GB
DEFAULT_ATOM_CAP = 1 << 22
MAX_HISTOGRAM_LEVEL = 26
FLOAT_MASS_TOL = 1e-12


class ResourceError(RuntimeError):
    """The requested computation exceeds a configured size cap."""


class EmptyRestrictionError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def log2(x) -> float:
    """log2 that stays accurate for huge-denominator Fractions."""
    if isinstance(x, Fraction):
        if x <= 0:
            raise ValueError("log2 of non-positive value")
        return math.log2(x.numerator) - math.log2(x.denominator)
    return math.log2(x)


class DiscreteMeasure:
    """A finitely supported measure: position -> mass, with equal positions merged.

    Positions are scalars (Fraction, Quadratic or float); dictionary hashing
    makes collapsing exact for exact scalars and bitwise for floats.
    """

    __slots__ = ("atoms",)

    def __init__(self, atoms: Mapping | Iterable, *, check: bool = True):
        if isinstance(atoms, Mapping):
            items = atoms.items()
        else:
            items = atoms
        out: dict = {}
        for x, m in items:
            if isinstance(x, int):
                x = Fraction(x)
            elif isinstance(x, Quadratic) and x.b == 0:
                x = x.a
            out[x] = out.get(x, 0) + m
        self.atoms = out
        if check:
            for m in out.values():
                if not m > 0:
                    raise ValueError(f"non-positive mass {m}")

    @classmethod
    def _raw(cls, atoms: dict) -> "DiscreteMeasure":
        obj = cls.__new__(cls)
        obj.atoms = atoms
        return obj

    def __len__(self) -> int:
        return len(self.atoms)

    def __repr__(self) -> str:
        return f"DiscreteMeasure({len(self)} atoms, total={self.total})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return self.atoms == other.atoms

    @property
    def total(self):
        if self.exact_masses:
            return sum(self.atoms.values(), Fraction(0))
        return math.fsum(float(m) for m in self.atoms.values())

    @property
    def exact_masses(self) -> bool:
        return all(isinstance(m, (Fraction, int)) for m in self.atoms.values())

    @property
    def exact(self) -> bool:
        return self.exact_masses and all(is_exact(x) for x in self.atoms)

    def is_probability(self) -> bool:
        if self.exact_masses:
            return self.total == 1
        return abs(self.total - 1.0) <= FLOAT_MASS_TOL

    def masses(self) -> list:
        return list(self.atoms.values())

    def sorted_atoms(self) -> list[tuple]:
        return sorted(self.atoms.items(), key=lambda kv: _sort_key(kv[0]))

    def float_atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Positions and masses as float arrays, sorted by position."""
        xs = np.array([to_float(x)[0] for x in self.atoms], dtype=float)
        ms = np.array([float(m) for m in self.atoms.values()], dtype=float)
        order = np.argsort(xs, kind="stable")
        return xs[order], ms[order]


class _ExactOrder:
    """Sort key wrapper giving exact ordering for mixed exact scalars."""

    __slots__ = ("x", "f")

    def __init__(self, x):
        self.x = x
        self.f = to_float(x)

    def __lt__(self, other: "_ExactOrder") -> bool:
        (fa, ea), (fb, eb) = self.f, other.f
        if fa + ea < fb - eb:
            return True
        if fa - ea > fb + eb:
            return False
        if isinstance(self.x, float) or isinstance(other.x, float):
            return fa < fb
        return sign(self.x - other.x) < 0


def _sort_key(x):
    return _ExactOrder(x)


def delta_measure(x=Fraction(0)) -> DiscreteMeasure:
    return DiscreteMeasure({x: Fraction(1)})


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise ResourceError(
            f"convolution would produce up to {n} atoms (cap {cap}); "
            "use the histogram pipeline (method=histogram) instead"
        )


def convolve(a: DiscreteMeasure, b: DiscreteMeasure, cap: int = DEFAULT_ATOM_CAP) -> DiscreteMeasure:
    """Push-forward of a x b under addition, collapsing coincident sums exactly."""
    _check_cap(len(a) * len(b), cap)
    out: dict = {}
    get = out.get
    bitems = list(b.atoms.items())
    for x, p in a.atoms.items():
        for y, r in bitems:
            z = x + y
            out[z] = get(z, 0) + p * r
    return DiscreteMeasure._raw(_demote_keys(out))


def _demote_keys(d: dict) -> dict:
    # Quadratic values with b == 0 already hash like Fractions; normalise the key type
    if any(isinstance(k, Quadratic) and k.b == 0 for k in d):
        out: dict = {}
        for k, v in d.items():
            if isinstance(k, Quadratic) and k.b == 0:
                k = k.a
            out[k] = out.get(k, 0) + v
        return out
    return d


def scale(a: DiscreteMeasure, c) -> DiscreteMeasure:
    if c == 0:
        raise ValueError("degenerate scale: c = 0")
    return DiscreteMeasure._raw(_demote_keys({c * x: m for x, m in a.atoms.items()}))


def translate(a: DiscreteMeasure, c) -> DiscreteMeasure:
    return DiscreteMeasure._raw(_demote_keys({x + c: m for x, m in a.atoms.items()}))


# --- mu_n --------------------------------------------------------------------------


def _require_homogeneous(w: Wifs) -> Wifs:
    require_valid(w)
    if not w.homogeneous:
        raise UnsupportedError(
            "measure approximation is implemented for homogeneous WIFS only; "
            "symbolic dimensions remain available for general systems"
        )
    return w


@dataclass(frozen=True)
class LevelMasses:
    """Masses of mu_n as integers over a common denominator (exact, cheap)."""

    n: int
    numerators: tuple
    denominator: int

    def __len__(self) -> int:
        return len(self.numerators)

    def fractions(self) -> list[Fraction]:
        return [Fraction(k, self.denominator) for k in self.numerators]


def _integer_coords(x, d: int | None):
    """(A, B, C) with x = (A + B*sqrt(d)) / C."""
    if isinstance(x, Quadratic):
        C = x.a.denominator * x.b.denominator // math.gcd(x.a.denominator, x.b.denominator)
        return x.a.numerator * (C // x.a.denominator), x.b.numerator * (C // x.b.denominator), C
    x = Fraction(x)
    return x.numerator, 0, x.denominator


def _exact_levels(w: Wifs, n_max: int, cap: int):
    """Integer-coordinate engine behind level_measures for exact systems.

    Uses mu_{n+1} = Delta * S_lambda mu_n, i.e. atoms x -> t_i + lambda x,
    with every level-n position written as (A + B sqrt(d)) / (tv * lg^(n-1)).
    Yields (n, {(A, B): mass numerator}, position denominator, mass denominator).
    """
    lam = w.ratio
    fields = {x.d for x in (lam, *w.translations) if isinstance(x, Quadratic) and x.b != 0}
    if len(fields) > 1:
        raise ValueError("scalars from different quadratic fields")
    d = fields.pop() if fields else 0
    la, lb, lg = _integer_coords(lam, d)
    coords = [_integer_coords(t, d) for t in w.translations]
    tv = 1
    for _, _, c in coords:
        tv = tv * c // math.gcd(tv, c)
    tas = [(a * (tv // c), b * (tv // c)) for a, b, c in coords]
    W = 1
    for p in w.weights:
        W = W * p.denominator // math.gcd(W, p.denominator)
    ws = [p.numerator * (W // p.denominator) for p in w.weights]
    maps = list(zip(tas, ws))

    level: dict = {}
    for (ta, tb), wi in maps:
        level[(ta, tb)] = level.get((ta, tb), 0) + wi
    den, mden = tv, W
    yield 1, level, den, mden, d
    lg_pow = lg
    for n in range(2, n_max + 1):
        _check_cap(len(level) * len(maps), cap)
        new: dict = {}
        get = new.get
        for (A, B), M in level.items():
            A2 = la * A + lb * B * d
            B2 = la * B + lb * A
            for (ta, tb), wi in maps:
                key = (ta * lg_pow + A2, tb * lg_pow + B2)
                new[key] = get(key, 0) + wi * M
        level = new
        den *= lg
        mden *= W
        lg_pow *= lg
        yield n, level, den, mden, d


def _materialize(level: dict, den: int, mden: int, d: int) -> DiscreteMeasure:
    atoms = {}
    for (A, B), M in level.items():
        if B == 0:
            x = Fraction(A, den)
        else:
            x = Quadratic(Fraction(A, den), Fraction(B, den), d)
        atoms[x] = Fraction(M, mden)
    return DiscreteMeasure._raw(atoms)


def level_masses(w: Wifs, n_max: int, cap: int = DEFAULT_ATOM_CAP) -> Iterator[LevelMasses]:
    """Yield only the (exact) mass vectors of mu_1..mu_{n_max}."""
    _require_homogeneous(w)
    if w.exact:
        for n, level, _, mden, _ in _exact_levels(w, n_max, cap):
            yield LevelMasses(n, tuple(level.values()), mden)
        return
    for n, mu in enumerate(level_measures(w, n_max, cap), 1):
        yield LevelMasses(n, tuple(mu.masses()), 1)


def level_measures(w: Wifs, n_max: int, cap: int = DEFAULT_ATOM_CAP) -> Iterator[DiscreteMeasure]:
    """Yield mu_1, ..., mu_{n_max}, where mu_n = *_{j<n} S_{lambda^j} Delta.

    Atoms are collapsed after every stage so coincidences (e.g. Pisot
    ratios) keep the atom count small.
    """
    _require_homogeneous(w)
    if w.exact:
        for _, level, den, mden, d in _exact_levels(w, n_max, cap):
            yield _materialize(level, den, mden, d)
        return
    lam = w.ratio
    delta = DiscreteMeasure(w.delta_atoms())
    current = delta
    power = lam
    for n in range(1, n_max + 1):
        if n > 1:
            current = convolve(current, scale(delta, power), cap)
            power = power * lam
        yield current


def convolution_level_n(w: Wifs, n: int, cap: int = DEFAULT_ATOM_CAP) -> DiscreteMeasure:
    """mu_n by literal iterated convolve/scale on scalar atoms (reference path)."""
    _require_homogeneous(w)
    lam = w.ratio
    delta = DiscreteMeasure(w.delta_atoms())
    current, power = delta, lam
    for _ in range(n - 1):
        current = convolve(current, scale(delta, power), cap)
        power = power * lam
    return current


def _floor_sqrt_term(B: int, d: int, shift: int) -> int:
    """floor(B * 2^shift * sqrt(d)) exactly, for square-free d > 1 (or B == 0)."""
    if B == 0:
        return 0
    sq = B * B * d << (2 * shift)
    r = math.isqrt(sq)
    # B sqrt(d) is irrational, so r < |y| < r + 1
    return r if B > 0 else -r - 1


def level_histograms(
    w: Wifs, requests: Mapping[int, Iterable[int]], cap: int = DEFAULT_ATOM_CAP,
    exact: bool = False, cache_dir: str | None = None,
) -> dict[tuple[int, int], DyadicHistogram]:
    """Exact dyadic histograms of mu_n at several levels, in one pass of the engine.

    ``requests`` maps n to the dyadic levels m wanted for mu_n; the result is
    keyed by (n, m).  Bin indices are exact floors computed from the integer
    coordinates, so no scalar atoms are materialised.  Masses are floats
    unless ``exact`` is set.  With ``cache_dir`` the binned masses are stored
    under a content hash of (w, n, m) and reused.
    """
    _require_homogeneous(w)
    if not w.exact:
        return {(n, m): dyadic_bin(level_n_measure(w, n, cap, cache_dir), m)
                for n, ms in requests.items() for m in ms}
    wanted = {n: sorted(set(ms)) for n, ms in requests.items()}
    out = {}
    path = None
    if cache_dir:
        tag = "x" if exact else "f"
        key = ",".join(f"{n}:{'/'.join(map(str, ms))}" for n, ms in sorted(wanted.items()))
        digest = hashlib.sha256(f"{wifs_hash(w)}|{key}|{tag}".encode()).hexdigest()[:32]
        path = os.path.join(cache_dir, f"hist_{digest}.pkl")
        if os.path.exists(path):
            with open(path, "rb") as fh:
                stored = pickle.load(fh)
            return {k: DyadicHistogram.from_bins(k[1], bins) for k, bins in stored.items()}
    for n, level, den, mden, d in _exact_levels(w, max(wanted), cap):
        if n not in wanted:
            continue
        ms = wanted[n]
        top = ms[-1]
        fine: dict = {}
        for (A, B), M in level.items():
            j = ((A << top) + _floor_sqrt_term(B, d, top)) // den
            fine[j] = fine.get(j, 0) + M
        for m in ms:
            coarse: dict = {}
            for j, M in fine.items():
                k = j >> (top - m)
                coarse[k] = coarse.get(k, 0) + M
            if exact:
                bins = {k: Fraction(M, mden) for k, M in coarse.items()}
            else:
                bins = {k: M / mden for k, M in coarse.items()}
            out[(n, m)] = DyadicHistogram.from_bins(m, bins)
    if path:
        _atomic_pickle(path, {k: h.bins() for k, h in out.items()})
    return out


def _atomic_pickle(path: str, obj) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        pickle.dump(obj, fh)
    os.replace(tmp, path)


def level_n_measure(w: Wifs, n: int, cap: int = DEFAULT_ATOM_CAP, cache_dir: str | None = None) -> DiscreteMeasure:
    if n < 1:
        raise ValueError("n must be >= 1")
    _require_homogeneous(w)
    path = None
    if cache_dir:
        path = os.path.join(cache_dir, f"mu_{wifs_hash(w)}_{n}.pkl")
        if os.path.exists(path):
            with open(path, "rb") as fh:
                return DiscreteMeasure._raw(pickle.load(fh))
    result = None
    if w.exact:
        for _, level, den, mden, d in _exact_levels(w, n, cap):
            pass
        result = _materialize(level, den, mden, d)
    else:
        result = convolution_level_n(w, n, cap)
    if path:
        _atomic_pickle(path, result.atoms)
    return result


# --- norms and entropy -----------------------------------------------------------


def _masses_of(a) -> tuple[list, bool]:
    if isinstance(a, LevelMasses):
        if a.denominator == 1 and not all(isinstance(m, (int, Fraction)) for m in a.numerators):
            return list(a.numerators), False
        return a.fractions(), True
    if isinstance(a, DyadicHistogram):
        if a.exact_masses is not None:
            return list(a.exact_masses.values()), True
        return a.masses[a.masses > 0].tolist(), False
    if isinstance(a, DiscreteMeasure):
        return a.masses(), a.exact_masses
    ms = list(a)
    return ms, all(isinstance(m, (Fraction, int)) for m in ms)


def _check_q(q: float) -> None:
    if not q > 1:
        raise ValueError(f"q must be > 1 (q = 1 is excluded), got {q}")


def power_sum(a, q: float):
    """sum of mass**q.  Exact Fraction for exact masses and integer q, else float."""
    _check_q(q)
    if isinstance(a, LevelMasses) and a.denominator > 1 and not math.isinf(q):
        if float(q).is_integer():
            k = int(q)
            return Fraction(sum(M ** k for M in a.numerators), a.denominator ** k)
        den = float(a.denominator)
        return math.fsum((M / den) ** q for M in a.numerators)
    masses, exact = _masses_of(a)
    if math.isinf(q):
        return max(masses)
    if exact and float(q).is_integer():
        k = int(q)
        return sum((Fraction(m) ** k for m in masses), Fraction(0))
    # fsum is exactly rounded, so the small-mass tail is not lost
    return math.fsum(float(m) ** q for m in masses)


def q_norm(a, q: float) -> float:
    s = power_sum(a, q)
    if math.isinf(q):
        return float(s)
    return 2.0 ** (log2(s) / q)


def entropy(a) -> float:
    """Shannon entropy in bits."""
    masses, _ = _masses_of(a)
    return math.fsum(-float(m) * log2(m) for m in masses if m > 0)


# --- dyadic histograms -----------------------------------------------------------------


@dataclass
class DyadicHistogram:
    """Masses of the half-open bins [j 2^-m, (j+1) 2^-m), j = offset + index."""

    level: int
    offset: int
    masses: np.ndarray
    exact_masses: dict | None = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=float)

    @classmethod
    def from_bins(cls, level: int, bins: Mapping[int, object], **flags) -> "DyadicHistogram":
        if not bins:
            raise ValueError("empty histogram")
        lo, hi = min(bins), max(bins)
        arr = np.zeros(hi - lo + 1)
        exact = all(isinstance(v, (Fraction, int)) for v in bins.values())
        for j, v in bins.items():
            arr[j - lo] = float(v)
        return cls(level, lo, arr, dict(bins) if exact else None, dict(flags))

    @classmethod
    def uniform(cls, level: int) -> "DyadicHistogram":
        n = 1 << level
        return cls(level, 0, np.full(n, 1.0 / n))

    @classmethod
    def point(cls, level: int, j: int = 0) -> "DyadicHistogram":
        return cls(level, j, np.ones(1), {j: Fraction(1)})

    def bins(self) -> dict:
        if self.exact_masses is not None:
            return dict(self.exact_masses)
        nz = np.nonzero(self.masses)[0]
        return {int(self.offset + k): float(self.masses[k]) for k in nz}

    def nonzero(self) -> np.ndarray:
        return self.masses[self.masses > 0]

    def __len__(self) -> int:
        return int(np.count_nonzero(self.masses))

    @property
    def total(self):
        if self.exact_masses is not None:
            return sum(self.exact_masses.values(), Fraction(0))
        return math.fsum(self.masses.tolist())

    def coarsen(self, level: int) -> "DyadicHistogram":
        """Aggregate to a coarser level (bins of 2^(self.level - level) children)."""
        if level > self.level:
            raise ValueError("can only coarsen to a lower level")
        shift = self.level - level
        if shift == 0:
            return self
        if self.exact_masses is not None:
            out: dict = {}
            for j, v in self.exact_masses.items():
                out[j >> shift] = out.get(j >> shift, 0) + v
            return DyadicHistogram.from_bins(level, out, **self.flags)
        lo = self.offset >> shift
        start = self.offset - (lo << shift)
        n = len(self.masses) + start
        n_out = -(-n // (1 << shift))
        padded = np.zeros(n_out << shift)
        padded[start:start + len(self.masses)] = self.masses
        coarse = padded.reshape(n_out, 1 << shift).sum(axis=1)
        return DyadicHistogram(level, lo, coarse, None, dict(self.flags))

    def to_csv(self, fh=None) -> str | None:
        """Write rows (j, bin_left, mass) for nonzero bins."""
        own = fh is None
        fh = fh or io.StringIO()
        writer = csv.writer(fh)
        writer.writerow(["j", "bin_left", "mass"])
        h = 2.0 ** -self.level
        for j, v in sorted(self.bins().items()):
            writer.writerow([j, repr(j * h), repr(float(v))])
        return fh.getvalue() if own else None


def dyadic_bin(a: DiscreteMeasure, m: int) -> DyadicHistogram:
    """Bin atoms into D_m; exact floor for exact atoms, boundary atoms go right."""
    if m < 0:
        raise ValueError("m must be >= 0")
    scale_m = 1 << m
    bins: dict = {}
    ambiguous = 0
    for x, mass in a.atoms.items():
        if isinstance(x, Fraction):
            j = (x.numerator << m) // x.denominator
        elif isinstance(x, Quadratic):
            j = floor_scalar(x * scale_m)
        else:
            y = math.ldexp(x, m)
            j = math.floor(y)
            slack = 4 * math.ulp(x) * scale_m
            if y - j <= slack or (j + 1) - y <= slack:
                ambiguous += 1
        bins[j] = bins.get(j, 0) + mass
    flags = {}
    if ambiguous:
        flags["boundary_ambiguous"] = ambiguous
    if not a.exact:
        flags["approximate"] = True
    return DyadicHistogram.from_bins(m, bins, **flags)


def restrict_normalize(a: DiscreteMeasure, x0, x1) -> DiscreteMeasure:
    """Normalized restriction of ``a`` to the half-open interval [x0, x1)."""
    kept = {x: m for x, m in a.atoms.items() if _ge(x, x0) and _lt(x, x1)}
    if not kept:
        raise EmptyRestrictionError(f"no mass in [{x0}, {x1})")
    total = sum(kept.values(), Fraction(0)) if all(isinstance(m, Fraction) for m in kept.values()) \
        else math.fsum(float(m) for m in kept.values())
    return DiscreteMeasure._raw({x: m / total for x, m in kept.items()})


def _lt(x, y) -> bool:
    if isinstance(x, float) or isinstance(y, float):
        return to_float(x)[0] < to_float(y)[0]
    return sign(x - y) < 0


def _ge(x, y) -> bool:
    return not _lt(x, y)


# --- invariant histogram ---------------------------------------------------------------


def invariant_histogram(
    w: Wifs,
    m: int,
    guard: int = 4,
    tol: float = 1e-10,
    max_iter: int | None = None,
    strict: bool = False,
) -> DyadicHistogram:
    """Approximate mu^(m) by iterating nu -> bin(sum_i p_i f_i nu) on a fine grid.

    The iteration runs at level ``m + guard`` starting from the uniform
    histogram on the attractor hull; each bin's mass is pushed forward and
    split proportionally between the (at most two) bins its image meets.
    The result is downsampled to level ``m``.  Systems not already inside
    [0, 1] are conjugated with :func:`normalize_to_unit` first.
    """
    _require_homogeneous(w)
    if m < 0 or m > MAX_HISTOGRAM_LEVEL:
        raise ResourceError(f"histogram level must lie in 0..{MAX_HISTOGRAM_LEVEL}")
    w = square_if_negative(w)
    w, phi = normalize_to_unit(w)
    guard = max(0, min(guard, MAX_HISTOGRAM_LEVEL - m))
    M = m + guard
    N = 1 << M
    lam = to_float(w.ratio)[0]
    ts = [to_float(t)[0] for t in w.translations]
    ps = [float(p) for p in w.weights]
    a = min(ts) / (1 - lam)
    b = max(ts) / (1 - lam)
    lo_bin = max(0, math.floor(a * N))
    hi_bin = min(N - 1, math.floor(b * N))
    size = hi_bin - lo_bin + 1
    j = np.arange(lo_bin, hi_bin + 1, dtype=np.float64)

    # image of bin j under f_i is [lam*j/N + t_i, lam*(j+1)/N + t_i): length lam/N < 1/N
    targets = []
    for t, p in zip(ts, ps):
        left = lam * j + t * N
        k = np.floor(left)
        frac_left = np.clip((k + 1 - left) / lam, 0.0, 1.0)
        k = k.astype(np.int64) - lo_bin
        k1 = k + 1
        # images stay within the hull up to rounding; clip defensively
        np.clip(k, 0, size - 1, out=k)
        np.clip(k1, 0, size - 1, out=k1)
        targets.append((k, k1, p * frac_left, p * (1.0 - frac_left)))

    nu = np.full(size, 1.0 / size)
    if max_iter is None:
        # twice the depth at which lam^n drops below the fine grid step, plus slack
        max_iter = math.ceil(2 * (M + 16) / math.log2(1 / lam)) + 10
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        new = np.zeros(size)
        for k, k1, wl, wr in targets:
            new += np.bincount(k, weights=nu * wl, minlength=size)
            new += np.bincount(k1, weights=nu * wr, minlength=size)
        new /= new.sum()
        residual = 0.5 * float(np.abs(new - nu).sum())
        nu = new
        if residual <= tol:
            break
    converged = residual <= tol
    if strict and not converged:
        raise ConvergenceError(f"no convergence after {it} iterations", residual)
    full = DyadicHistogram(M, lo_bin, nu)
    hist = full.coarsen(m)
    hist.flags.update({
        "iterations": it, "residual": residual, "converged": converged,
        "guard_bits": guard, "approximate": True,
        "normalization": {"scale": str(phi.scale), "shift": str(phi.shift)},
    })
    return hist
