"""2^-m measures, regular trees and convolution-flattening experiments.

Grid measures live on 2^-m Z and are stored sparsely (sorted indices plus
masses).  Convolutions are taken on the line, so the support of rho * mu can
reach into [0, 2); since sums of grid points are grid points no re-binning
is needed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .measures import DyadicHistogram, ResourceError

__all__ = [
    "GridMeasure",
    "BranchingProfile",
    "RegularityFailure",
    "FlatteningResult",
    "TreeConvolutionReport",
    "TREE_LEVEL_CAP",
    "build_tree_measure",
    "regularity_check",
    "grid_convolve",
    "flattening_ratio",
    "obstruction_measure",
    "tree_self_convolution_check",
    "flattening_sweep",
]

# tree supports are stored as index arrays; D * ell is bounded by int64 and
# the support size 2^(D |S|) by the atom cap
TREE_LEVEL_CAP = 62
TREE_ATOM_CAP = 1 << 26
DENSE_LIMIT = 1 << 24
DIRECT_PAIRS = 1 << 22


@dataclass
class GridMeasure:
    """A probability measure on 2^-m Z, as sorted bin indices and masses."""

    m: int
    idx: np.ndarray
    mass: np.ndarray
    exact_mass: Fraction | None = None   # common atom mass for uniform measures

    def __post_init__(self):
        self.idx = np.asarray(self.idx, dtype=np.int64)
        self.mass = np.asarray(self.mass, dtype=float)
        order = np.argsort(self.idx, kind="stable")
        self.idx, self.mass = self.idx[order], self.mass[order]
        if len(self.idx) == 0:
            raise ValueError("empty grid measure")
        if np.any(np.diff(self.idx) == 0):
            raise ValueError("duplicate grid indices")
        if np.any(self.mass <= 0):
            raise ValueError("masses must be positive")

    @classmethod
    def from_bins(cls, m: int, bins: Mapping[int, float]) -> "GridMeasure":
        idx = np.fromiter(bins.keys(), dtype=np.int64, count=len(bins))
        mass = np.fromiter((float(v) for v in bins.values()), dtype=float, count=len(bins))
        return cls(m, idx, mass)

    @classmethod
    def from_histogram(cls, h: DyadicHistogram) -> "GridMeasure":
        nz = np.nonzero(h.masses)[0]
        return cls(h.level, nz + h.offset, h.masses[nz])

    @classmethod
    def uniform_on(cls, m: int, idx: Iterable[int]) -> "GridMeasure":
        idx = np.unique(np.asarray(list(idx) if not isinstance(idx, np.ndarray) else idx, dtype=np.int64))
        k = len(idx)
        return cls(m, idx, np.full(k, 1.0 / k), Fraction(1, k))

    @classmethod
    def uniform(cls, m: int) -> "GridMeasure":
        n = 1 << m
        return cls(m, np.arange(n, dtype=np.int64), np.full(n, 1.0 / n), Fraction(1, n))

    @classmethod
    def delta(cls, m: int, j: int = 0) -> "GridMeasure":
        return cls(m, np.array([j]), np.array([1.0]), Fraction(1))

    def __len__(self) -> int:
        return len(self.idx)

    @property
    def total(self) -> float:
        return math.fsum(self.mass.tolist())

    def points(self) -> list[Fraction]:
        return [Fraction(int(j), 1 << self.m) for j in self.idx]

    def power_sum(self, q: float) -> float:
        if not q > 1:
            raise ValueError("q must be > 1")
        if self.exact_mass is not None:
            # |A| atoms of mass 1/|A|: the sum is |A|^(1-q)
            return float(len(self)) ** (1 - q)
        return math.fsum((self.mass ** q).tolist())

    def log2_power_sum(self, q: float) -> float:
        if self.exact_mass is not None:
            return (1 - q) * math.log2(len(self))
        return math.log2(self.power_sum(q))

    def in_unit_grid(self) -> bool:
        return bool(self.idx[0] >= 0 and self.idx[-1] < (1 << self.m))


# --- trees ----------------------------------------------------------------------------


def _check_tree_args(D: int, ell: int, S: Iterable[int]) -> list[int]:
    if D < 1 or ell < 0:
        raise ValueError("need D >= 1 and ell >= 0")
    S = sorted(set(int(s) for s in S))
    if any(s < 0 or s >= ell for s in S):
        raise ValueError(f"branching levels must lie in 0..{ell - 1}")
    if D * ell > TREE_LEVEL_CAP:
        raise ResourceError(f"D*ell = {D * ell} exceeds the grid cap {TREE_LEVEL_CAP}")
    return S


def build_tree_measure(D: int, ell: int, S: Iterable[int]) -> GridMeasure:
    """Uniform measure on the regular set with full branching on S, none elsewhere.

    Level s (0 = coarsest) holds the D-bit digit block at weight
    2^(D (ell - 1 - s)) of the grid index; off S the leftmost child is used.
    """
    S = _check_tree_args(D, ell, S)
    if D * len(S) > 26:
        raise ResourceError(f"support size 2^{D * len(S)} exceeds the atom cap 2^26")
    idx = np.zeros(1, dtype=np.int64)
    digits = np.arange(1 << D, dtype=np.int64)
    for s in S:
        idx = (idx[:, None] + (digits << (D * (ell - 1 - s)))[None, :]).ravel()
    return GridMeasure.uniform_on(D * ell, np.sort(idx))


@dataclass
class BranchingProfile:
    D: int
    ell: int
    R: list[int]
    regular: bool = True
    threshold: int = 2

    @property
    def branching_set(self) -> list[int]:
        return [s for s, r in enumerate(self.R) if r >= self.threshold]

    def as_dict(self) -> dict:
        return {"D": self.D, "ell": self.ell, "R": self.R, "regular": self.regular,
                "branching_set": self.branching_set}


@dataclass
class RegularityFailure:
    D: int
    ell: int
    level: int
    parents: tuple[int, int]     # indices of two level-s intervals in D_{sD}
    counts: tuple[int, int]
    regular: bool = False

    def as_dict(self) -> dict:
        return {"D": self.D, "ell": self.ell, "regular": False, "level": self.level,
                "parents": list(self.parents), "child_counts": list(self.counts)}


def regularity_check(support, D: int, m: int | None = None) -> BranchingProfile | RegularityFailure:
    """Per-level child counts of the 2^D-ary tree of a finite subset of [0, 1).

    ``support`` is a GridMeasure or an iterable of points in [0, 1) (any
    exact or float values with a dyadic grid level ``m``).
    """
    if isinstance(support, GridMeasure):
        m = support.m
        idx = support.idx
    else:
        pts = list(support)
        if m is None:
            m = _grid_level(pts)
        idx = np.array(sorted({int(Fraction(x) * (1 << m)) for x in pts}), dtype=np.int64)
    if m % D:
        raise ValueError(f"grid level m={m} is not divisible by D={D}")
    if np.any(idx < 0) or np.any(idx >= (1 << m)):
        raise ValueError("support must lie in [0, 1)")
    ell = m // D
    idx = np.unique(idx)
    R = []
    for s in range(ell):
        # idx is sorted, so shifted copies are sorted too and runs give the counts
        children = idx >> (D * (ell - s - 1))
        children = children[np.r_[True, np.diff(children) != 0]]
        parents = children >> D
        starts = np.flatnonzero(np.r_[True, np.diff(parents) != 0])
        p_ids = parents[starts]
        counts = np.diff(np.r_[starts, len(parents)])
        if np.any(counts != counts[0]):
            k = int(np.argmax(counts != counts[0]))
            return RegularityFailure(D, ell, s, (int(p_ids[0]), int(p_ids[k])),
                                     (int(counts[0]), int(counts[k])))
        R.append(int(counts[0]))
    return BranchingProfile(D, ell, R)


def _grid_level(pts: Sequence) -> int:
    m = 0
    for x in pts:
        den = Fraction(x).denominator
        if den & (den - 1):
            raise ValueError(f"{x} is not a dyadic rational")
        m = max(m, den.bit_length() - 1)
    return m


# --- grid convolution and flattening ------------------------------------------------


def grid_convolve(a: GridMeasure, b: GridMeasure) -> GridMeasure:
    """rho * mu on the line; indices add, so the result stays on the same grid."""
    if a.m != b.m:
        raise ValueError(f"mismatched grid levels {a.m} and {b.m}")
    if len(a) == 1:
        return GridMeasure(b.m, b.idx + a.idx[0], b.mass * a.mass[0])
    if len(b) == 1:
        return GridMeasure(a.m, a.idx + b.idx[0], a.mass * b.mass[0])
    lo = int(a.idx[0] + b.idx[0])
    span = int(a.idx[-1] + b.idx[-1]) - lo + 1
    if len(a) * len(b) <= DIRECT_PAIRS:
        sums = (a.idx[:, None] + b.idx[None, :]).ravel() - lo
        dense = np.bincount(sums, weights=np.outer(a.mass, b.mass).ravel(), minlength=span)
    else:
        if span > DENSE_LIMIT:
            raise ResourceError(f"dense convolution span {span} exceeds {DENSE_LIMIT}")
        da = np.zeros(int(a.idx[-1] - a.idx[0]) + 1)
        da[a.idx - a.idx[0]] = a.mass
        db = np.zeros(int(b.idx[-1] - b.idx[0]) + 1)
        db[b.idx - b.idx[0]] = b.mass
        nfft = 1 << (span - 1).bit_length()
        dense = np.fft.irfft(np.fft.rfft(da, nfft) * np.fft.rfft(db, nfft), nfft)[:span]
        # round-off floor of the transform; true masses here are >= min products
        floor = 1e-13 * float(dense.max())
        dense[dense < floor] = 0.0
    nz = np.nonzero(dense)[0]
    return GridMeasure(a.m, nz + lo, dense[nz])


@dataclass
class FlatteningResult:
    m: int
    q: float
    log2_ratio: float          # log2(||rho*mu||_q^q / ||mu||_q^q)
    eps_hat: float             # -log2_ratio / m
    rho_norm_dual: float       # ||rho||_q^{q'}, q' = q/(q-1)
    sigma_hat: float           # -log2(||rho||_q^{q'}) / m
    method: str

    @property
    def eps_hat_norm(self) -> float:
        """Flattening exponent of the norms themselves, eps_hat / q."""
        return self.eps_hat / self.q

    def as_dict(self) -> dict:
        return {"m": self.m, "q": self.q, "log2_ratio": self.log2_ratio,
                "eps_hat": self.eps_hat, "eps_hat_norm": self.eps_hat_norm,
                "rho_norm_dual": self.rho_norm_dual, "sigma_hat": self.sigma_hat,
                "convolution": self.method}


def flattening_ratio(rho: GridMeasure, mu: GridMeasure, q: float) -> FlatteningResult:
    """Measure how much convolving with rho flattens mu in L^q.

    eps_hat = -log2(||rho*mu||_q^q / ||mu||_q^q) / m; a point mass gives 0
    exactly, and Young's inequality makes eps_hat >= 0.
    """
    if rho.m != mu.m:
        raise ValueError(f"mismatched grid levels {rho.m} and {mu.m}")
    if not q > 1:
        raise ValueError("q must be > 1")
    m = mu.m
    log_rho = rho.log2_power_sum(q)
    dual = 2.0 ** (log_rho / (q - 1))
    sigma = -log_rho / ((q - 1) * m) if m else 0.0
    if len(rho) == 1:
        # a translate: the masses are a permutation of mu's
        return FlatteningResult(m, q, 0.0, 0.0, dual, sigma, "translate")
    method = "direct" if len(rho) * len(mu) <= DIRECT_PAIRS else "fft"
    conv = grid_convolve(rho, mu)
    ratio = conv.log2_power_sum(q) - mu.log2_power_sum(q)
    eps = -ratio / m if m else 0.0
    return FlatteningResult(m, q, ratio, eps, dual, sigma, method)


def obstruction_measure(m: int, eta: float | None = None, j: int = 0) -> GridMeasure:
    """eta delta_j + (1 - eta) uniform, with eta = 2^-ceil(0.1 m) by default."""
    if eta is None:
        eta = 2.0 ** -math.ceil(0.1 * m)
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    n = 1 << m
    mass = np.full(n, (1 - eta) / n)
    mass[j] += eta
    return GridMeasure(m, np.arange(n, dtype=np.int64), mass)


def flattening_sweep(mu_by_m: Mapping[int, GridMeasure], q: float, rho_factory) -> list[dict]:
    """Rows (m, sigma_hat, eps_hat) for rho = rho_factory(m) against mu at each m."""
    rows = []
    for m in sorted(mu_by_m):
        r = flattening_ratio(rho_factory(m), mu_by_m[m], q)
        rows.append({"m": m, "sigma_hat": r.sigma_hat, "eps_hat": r.eps_hat})
    return rows


def sweep_csv(rows: Sequence[Mapping]) -> str:
    fh = io.StringIO()
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["m", "sigma_hat", "eps_hat"])
    for r in rows:
        writer.writerow([r["m"], repr(r["sigma_hat"]), repr(r["eps_hat"])])
    return fh.getvalue()


# --- tree self-convolution ----------------------------------------------------------


def _blocks(S: Sequence[int]) -> list[tuple[int, int]]:
    """Maximal runs [a, b] of consecutive levels in S."""
    runs: list[tuple[int, int]] = []
    for s in S:
        if runs and s == runs[-1][1] + 1:
            runs[-1] = (runs[-1][0], s)
        else:
            runs.append((s, s))
    return runs


def _faulhaber(n: int, k: int) -> int:
    """sum_{i=1}^{n} i^k, exactly (k a non-negative integer)."""
    if n <= 0:
        return 0
    # Bernoulli numbers with B_1 = +1/2
    B = [Fraction(1)]
    for j in range(1, k + 1):
        B.append(1 - sum(Fraction(math.comb(j, i), j - i + 1) * B[i] for i in range(j)))
    total = sum(math.comb(k + 1, j) * B[j] * Fraction(n) ** (k + 1 - j) for j in range(k + 1))
    out = total / (k + 1)
    assert out.denominator == 1
    return int(out)


def _triangle_log2_ratio(N: int, q: float) -> float:
    """log2(||U*U||_q^q / ||U||_q^q) for U uniform on N consecutive grid points.

    U*U gives mass c_k / N^2 to 2N-1 points with c_k = 1..N..1.
    """
    if float(q).is_integer():
        k = int(q)
        counts = _faulhaber(N, k) + _faulhaber(N - 1, k)
        num = math.log2(counts)
    elif N <= DENSE_LIMIT:
        c = np.arange(1, N + 1, dtype=float)
        num = math.log2(2 * math.fsum((c ** q).tolist()) - float(N) ** q)
    else:
        raise ResourceError("non-integer q needs an explicit block sum; block too large")
    # ||U*U||_q^q = counts / N^(2q); ||U||_q^q = N^(1-q)
    return num - 2 * q * math.log2(N) - (1 - q) * math.log2(N)


def _interval_branching(K: int, b: int, L: int) -> list[tuple[int, int]]:
    """(min, max) child counts per depth of the base-b tree of {0..K} with L+1 digits.

    Depth 0 is the carry digit; the remaining L depths are ordinary digits.
    """
    out = []
    for i in range(L + 1):
        hi = K // b ** (L - i)                  # largest prefix of length i+1
        if i == 0:
            out.append((hi + 1, hi + 1))
            continue
        last_parent = K // b ** (L + 1 - i)
        last_children = hi - last_parent * b + 1
        full = b if last_parent > 0 else last_children
        out.append((min(full, last_children), max(full, last_children)))
    return out


@dataclass
class TreeConvolutionReport:
    D: int
    ell: int
    S: list[int]
    q: float
    gap: float
    log2_norm_mu: float
    log2_norm_conv: float
    blocks: list[tuple[int, int]]
    branching: list[dict] = field(default_factory=list)
    method: str = "blocks"

    def as_dict(self) -> dict:
        return {"D": self.D, "ell": self.ell, "S": self.S, "q": self.q, "gap": self.gap,
                "log2_norm_mu": self.log2_norm_mu, "log2_norm_conv": self.log2_norm_conv,
                "blocks": [list(b) for b in self.blocks], "branching": self.branching,
                "method": self.method}


def tree_self_convolution_check(D: int, ell: int, S: Iterable[int], q: float) -> TreeConvolutionReport:
    """g = |log2 ||mu*mu||_q^q - log2 ||mu||_q^q| / (D ell) for the tree measure.

    mu is the product of independent uniform digit blocks, one per run of
    consecutive levels in S.  Self-convolving a run of r levels gives a
    triangular distribution on 2 N - 1 points (N = 2^(D r)) whose carry lands
    on the level just above the run; that level carries no digit of mu, so
    distinct runs never interact and the norm factorises exactly.
    """
    S = _check_tree_args(D, ell, S)
    if not q > 1:
        raise ValueError("q must be > 1")
    blocks = _blocks(S)
    log_mu = (1 - q) * D * len(S)
    ratio = 0.0
    for a, b in blocks:
        ratio += _triangle_log2_ratio(1 << (D * (b - a + 1)), q)
    log_conv = log_mu + ratio
    g = abs(ratio) / (D * ell) if ell else 0.0

    # per-level branching of supp(mu*mu); level -1 is the integer carry
    levels: dict[int, tuple[int, int]] = {s: (1, 1) for s in range(ell)}
    for a, b in blocks:
        r = b - a + 1
        prof = _interval_branching(2 * ((1 << (D * r)) - 1), 1 << D, r)
        levels[a - 1] = prof[0]
        for i, s in enumerate(range(a, b + 1), 1):
            levels[s] = prof[i]
    branching = [{"level": s, "min": lo, "max": hi} for s, (lo, hi) in sorted(levels.items())]
    return TreeConvolutionReport(D, ell, S, q, g, log_mu, log_conv, blocks, branching)
