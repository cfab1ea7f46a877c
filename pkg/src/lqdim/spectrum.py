"""L^q spectrum estimation and the quantities built on it.

Moment sums S_m, regression estimates of tau(q) and D(q), certified Fekete
upper bounds from the exact approximants mu_n, the Legendre transform,
multifractal band counts, Frostman exponents, Garsia-type entropies and
truncated Fourier products.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .measures import (
    DEFAULT_ATOM_CAP,
    DyadicHistogram,
    _require_homogeneous,
    dyadic_bin,
    entropy,
    invariant_histogram,
    level_histograms,
    level_masses,
    level_n_measure,
    log2,
    power_sum,
)
from .scalars import to_float
from .wifs import Wifs, normalize_to_unit, similarity_dimensions, square_if_negative

__all__ = [
    "SpectrumEstimate",
    "FeketeBound",
    "GarsiaReport",
    "MultifractalCounts",
    "LegendreResult",
    "moment_sums",
    "estimate_tau",
    "n_for_scale",
    "fekete_bounds",
    "legendre_transform",
    "concave_majorant",
    "multifractal_counts",
    "frostman_from_Lq",
    "garsia",
    "fourier_modulus",
    "scale_gap",
    "shape_violations",
]

SUBADDITIVE_TOL = 1e-9
AUTO_ATOM_LIMIT = 1 << 22


def _check_q(q: float) -> None:
    if not q > 1:
        raise ValueError(f"q must be > 1, got {q}")


def moment_sums(h: DyadicHistogram, q: float) -> float:
    """S_m(mu, q) = sum over nonempty bins of mass**q."""
    _check_q(q)
    return float(power_sum(h, q))


def n_for_scale(lam: float, m: int) -> int:
    """Smallest n with |lambda|^n <= 2^-m."""
    return max(1, math.ceil(m / math.log2(1 / abs(lam)) - 1e-12))


# --- tau estimation ----------------------------------------------------------------


@dataclass
class SpectrumEstimate:
    q_grid: list[float]
    m_grid: list[int]
    method: str
    S: np.ndarray            # shape (len(q), len(m))
    tau_hat: np.ndarray
    D_hat: np.ndarray
    alpha_hat: np.ndarray    # nan at the grid ends
    fit_residual: np.ndarray
    fit_range: tuple[int, int]
    predicted_D: list[float]
    diagnostics: dict = field(default_factory=dict)

    def per_scale(self) -> np.ndarray:
        """-log2 S_m / m for every (q, m)."""
        return -np.log2(self.S) / np.asarray(self.m_grid, dtype=float)

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "q": list(self.q_grid),
            "m": list(self.m_grid),
            "fit_range": list(self.fit_range),
            "tau_hat": self.tau_hat.tolist(),
            "D_hat": self.D_hat.tolist(),
            "predicted_D": self.predicted_D,
            "alpha_hat": [None if math.isnan(a) else a for a in self.alpha_hat],
            "fit_residual": self.fit_residual.tolist(),
            "S_m": self.S.tolist(),
            "note": "tau_hat estimates a liminf from finitely many scales; per-scale values are listed",
            "diagnostics": self.diagnostics,
        }

    def csv_rows(self) -> list[tuple]:
        rows = []
        for i, q in enumerate(self.q_grid):
            for j, m in enumerate(self.m_grid):
                rows.append((q, m, float(self.S[i, j]), float(self.tau_hat[i]), float(self.D_hat[i])))
        return rows


def _histograms(w: Wifs, m_grid: Sequence[int], method: str, cap: int,
                cache_dir: str | None = None) -> tuple[dict, dict]:
    w = square_if_negative(w)
    wn, phi = normalize_to_unit(w)
    diag: dict = {"normalization": {"scale": str(phi.scale), "shift": str(phi.shift)}}
    hists = {}
    if method == "auto":
        lam = to_float(wn.ratio)[0]
        words = len(wn) ** n_for_scale(lam, max(m_grid))
        method = "atoms" if words <= AUTO_ATOM_LIMIT else "histogram"
    diag["method"] = method
    if method == "atoms":
        lam = to_float(wn.ratio)[0]
        ns = {m: n_for_scale(lam, m) for m in m_grid}
        diag["n_of_m"] = ns
        by_n: dict = {}
        for m in m_grid:
            by_n.setdefault(ns[m], []).append(m)
        # ResourceError from the engine already suggests the histogram method
        binned = level_histograms(wn, by_n, cap=cap, cache_dir=cache_dir)
        for m in m_grid:
            hists[m] = binned[(ns[m], m)]
    elif method == "histogram":
        top = invariant_histogram(wn, max(m_grid))
        diag["histogram"] = {k: v for k, v in top.flags.items() if k != "normalization"}
        for m in m_grid:
            hists[m] = top.coarsen(m)
    else:
        raise ValueError(f"unknown method {method!r}")
    return hists, diag


def _fit(ms: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    A = np.vstack([ms, np.ones_like(ms)]).T
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    resid = ys - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def _alpha_hat(q_grid: Sequence[float], tau: np.ndarray) -> np.ndarray:
    alpha = np.full(len(q_grid), np.nan)
    for i in range(1, len(q_grid) - 1):
        alpha[i] = (tau[i + 1] - tau[i - 1]) / (q_grid[i + 1] - q_grid[i - 1])
    return alpha


def estimate_tau(
    w: Wifs,
    q_grid: Sequence[float],
    m_grid: Sequence[int],
    method: str = "atoms",
    cap: int = DEFAULT_ATOM_CAP,
    cache_dir: str | None = None,
) -> SpectrumEstimate:
    """Estimate tau(q) by regressing -log2 S_m on m over the top half of ``m_grid``.

    ``method`` is "atoms" (exact mu_n with n = n(m), then binned),
    "histogram" (fixed-point iteration) or "auto" (atoms when the number of
    level-n words stays below ``AUTO_ATOM_LIMIT``).
    """
    _require_homogeneous(w)
    q_grid = [float(q) for q in q_grid]
    for q in q_grid:
        _check_q(q)
    m_grid = sorted(int(m) for m in m_grid)
    if len(m_grid) < 2:
        raise ValueError("need at least two scales")
    hists, diag = _histograms(w, m_grid, method, cap, cache_dir)
    method = diag["method"]
    S = np.array([[moment_sums(hists[m], q) for m in m_grid] for q in q_grid])
    half = len(m_grid) // 2
    top = m_grid[half:] if len(m_grid) - half >= 2 else m_grid[-2:]
    ms = np.asarray(top, dtype=float)
    idx = [m_grid.index(m) for m in top]
    tau = np.empty(len(q_grid))
    res = np.empty(len(q_grid))
    for i in range(len(q_grid)):
        tau[i], res[i] = _fit(ms, -np.log2(S[i, idx]))
    D = tau / (np.asarray(q_grid) - 1)
    predicted = [similarity_dimensions(w, q).predicted_D for q in q_grid]
    return SpectrumEstimate(q_grid, m_grid, method, S, tau, D, _alpha_hat(q_grid, tau), res,
                            (top[0], top[-1]), predicted, diag)


def scale_gap(w: Wifs, q: float, n: int, R: int = 2) -> dict:
    """Exponents of ||mu_n^(m)||_q^q and ||mu_n^(Rm)||_q^q normalised by n log2|lambda|.

    Here m = m(n) is the smallest integer with 2^-m <= |lambda|^n.  The two
    exponents approach tau(q) as n grows; no rate is asserted, only the gap.
    """
    _check_q(q)
    w = square_if_negative(w)
    wn, _ = normalize_to_unit(w)
    lam = to_float(wn.ratio)[0]
    m = math.ceil(n * math.log2(1 / lam) - 1e-12)
    mu = level_n_measure(wn, n)
    denom = n * math.log2(lam)
    coarse = log2(power_sum(dyadic_bin(mu, m), q)) / denom
    fine = log2(power_sum(dyadic_bin(mu, R * m), q)) / denom
    full = log2(power_sum(mu, q)) / denom
    return {"n": n, "m": m, "R": R, "exponent_m": coarse, "exponent_Rm": fine,
            "exponent_atoms": full, "gap": coarse - fine}


# --- Fekete bounds -------------------------------------------------------------------


@dataclass
class FeketeBound:
    q: float
    L: list[float]               # L_n = -log2 ||mu_n||_q^q, n = 1..n_max
    exact_norms: list            # ||mu_n||_q^q as Fraction when q is an integer
    log_inv_lambda: float
    tau_bound: float
    D_bound: float
    subadditive: bool
    worst_violation: float

    def bound_at(self, n: int) -> float:
        """Upper bound on tau(q) using the first n levels."""
        best = min(self.L[k - 1] / (k * self.log_inv_lambda) for k in range(1, n + 1))
        return min(best, self.q - 1)

    def as_dict(self) -> dict:
        return {
            "q": self.q,
            "L": self.L,
            "L_over_n": [v / (i + 1) for i, v in enumerate(self.L)],
            "norms_exact": [str(x) if isinstance(x, Fraction) else None for x in self.exact_norms],
            "tau_upper_bound": self.tau_bound,
            "D_upper_bound": self.D_bound,
            "subadditive": self.subadditive,
            "worst_subadditivity_violation": self.worst_violation,
        }


def fekete_bounds(w: Wifs, q: float, n_max: int, cap: int = DEFAULT_ATOM_CAP) -> FeketeBound:
    """Certified upper bound on tau(q) from exact q-norms of mu_1..mu_{n_max}.

    Merging atoms only increases q-norms, so L_n = -log2 ||mu_n||_q^q is
    subadditive and tau(q) <= min_n L_n / (n log2(1/|lambda|)) at every finite n.
    """
    _check_q(q)
    _require_homogeneous(w)
    if not w.exact:
        raise ValueError("Fekete bounds need exact parameters")
    lam = abs(to_float(w.ratio)[0])
    lil = math.log2(1 / lam)
    L, norms = [], []
    for lm in level_masses(w, n_max, cap):
        s = power_sum(lm, q)
        norms.append(s if isinstance(s, Fraction) else None)
        L.append(-log2(s))
    worst = -math.inf
    for a in range(1, n_max + 1):
        for b in range(1, n_max + 1 - a):
            worst = max(worst, L[a + b - 1] - L[a - 1] - L[b - 1])
    subadd = worst <= SUBADDITIVE_TOL
    tau_bound = min(min(v / ((i + 1) * lil) for i, v in enumerate(L)), q - 1)
    return FeketeBound(q, L, norms, lil, tau_bound, tau_bound / (q - 1), subadd,
                       worst if worst > -math.inf else 0.0)


# --- Legendre transform ------------------------------------------------------------------


def concave_majorant(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    """Least concave majorant of the samples (upper hull), evaluated on x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    hull: list[int] = []
    for i in range(len(x)):
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            # drop i1 if it lies on or below the chord i0 -> i
            if (y[i1] - y[i0]) * (x[i] - x[i0]) <= (y[i] - y[i0]) * (x[i1] - x[i0]):
                hull.pop()
            else:
                break
        hull.append(i)
    return np.interp(x, x[hull], y[hull])


@dataclass
class LegendreResult:
    alpha: np.ndarray
    tau_star: np.ndarray
    tau_used: np.ndarray
    lemma_checks: list[dict]

    def as_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "tau_star": self.tau_star.tolist(),
                "lemma_checks": self.lemma_checks}


def legendre_transform(
    q_grid: Sequence[float],
    tau: Sequence[float],
    alpha_grid: Sequence[float] | None = None,
    smooth: bool = True,
) -> LegendreResult:
    """tau*(alpha) = min over grid q of alpha*q - tau(q).

    With ``smooth`` the samples are first replaced by their concave majorant.
    Without an explicit alpha grid, the central-difference slopes of tau are
    used.  The lemma check records tau*(alpha) <= alpha < 1 at alpha = tau'(q)
    for grid points where tau(q) < q - 1.
    """
    q = np.asarray(q_grid, dtype=float)
    if len(q) < 3:
        raise ValueError("Legendre transform needs at least 3 grid points")
    t = concave_majorant(q, tau) if smooth else np.asarray(tau, dtype=float)
    slopes = _alpha_hat(list(q), t)
    if alpha_grid is None:
        alpha = slopes[1:-1]
    else:
        alpha = np.asarray(alpha_grid, dtype=float)
    ts = np.min(alpha[:, None] * q[None, :] - t[None, :], axis=1)
    checks = []
    for i in range(1, len(q) - 1):
        if t[i] < q[i] - 1:
            a = slopes[i]
            val = float(np.min(a * q - t))
            checks.append({"q": float(q[i]), "alpha": float(a), "tau_star": val,
                           "holds": bool(val <= a + 1e-12 and a < 1)})
    return LegendreResult(alpha, ts, t, checks)


# --- multifractal counts ---------------------------------------------------------------


@dataclass
class MultifractalCounts:
    m: int
    q: float
    delta: float
    alpha_left: list[float]
    counts: list[int]
    contributions: list[float]
    S_m: float
    dominant_alpha: float
    dominant_log_count: float

    def as_dict(self) -> dict:
        return {
            "m": self.m, "q": self.q, "delta": self.delta,
            "bands": [{"alpha": a, "N": n, "contribution": c}
                      for a, n, c in zip(self.alpha_left, self.counts, self.contributions)],
            "S_m": self.S_m,
            "dominant": {"alpha": self.dominant_alpha, "log2N_over_m": self.dominant_log_count},
        }


def multifractal_counts(h: DyadicHistogram, q: float, delta: float = 0.05) -> MultifractalCounts:
    """Group bins into bands 2^{-m a_j} >= mass > 2^{-m a_{j+1}} with a_j = j*delta.

    Band j collects bins whose local exponent -log2(mass)/m lies in
    [j*delta, (j+1)*delta).  The dominant band is the one contributing most
    to S_m(mu, q); its (alpha, log2 N / m) pair approximates
    (tau'(q), tau*(tau'(q))).
    """
    _check_q(q)
    if not delta > 0:
        raise ValueError("band width must be positive")
    m = h.level
    masses = h.nonzero()
    if m == 0:
        alphas = np.zeros(len(masses))
    else:
        alphas = -np.log2(masses) / m
    band = np.floor(alphas / delta + 1e-9).astype(np.int64)
    powers = masses ** q
    keys = sorted(set(band.tolist()))
    counts, contribs = [], []
    for k in keys:
        sel = band == k
        counts.append(int(sel.sum()))
        contribs.append(math.fsum(powers[sel].tolist()))
    S = math.fsum(contribs)
    dom = int(np.argmax(contribs))
    dom_sel = band == keys[dom]
    dom_alpha = float(np.average(alphas[dom_sel], weights=powers[dom_sel]))
    dom_log = math.log2(counts[dom]) / m if m else 0.0
    return MultifractalCounts(m, q, delta, [k * delta for k in keys], counts, contribs, S,
                              dom_alpha, dom_log)


# --- Frostman exponents ------------------------------------------------------------------


def frostman_from_Lq(q: float, s: float, h: DyadicHistogram | None = None) -> dict:
    """Frostman exponent (1 - 1/q) s implied by D(q) > s, with an empirical constant.

    With a histogram, ``C = max_J mu(J) * 2^{m (1-1/q) s}`` measures how
    well the bound mu(J) <= C |J|^exponent holds at that scale.
    """
    if math.isinf(q):
        exponent = s
    else:
        _check_q(q)
        exponent = (1 - 1 / q) * s
    out = {"q": q, "s": s, "exponent": exponent}
    if h is not None:
        out["m"] = h.level
        out["C"] = float(np.max(h.masses)) * 2.0 ** (h.level * exponent)
    return out


# --- Garsia entropies ------------------------------------------------------------------


@dataclass
class GarsiaReport:
    lam: object
    n_max: int
    q_list: list[float]
    atom_counts: list[int]
    H: list[float]                   # H(mu_n) in bits
    T: dict                          # q -> list of -log2 ||mu_n||_q^q
    exact_norms: dict                # q -> list of str Fractions (integer q)
    h_estimate: float
    T_estimate: dict
    hdim_estimate: float
    D_estimate: dict
    predicted_D: dict
    overlap_level: int | None = None

    def as_dict(self) -> dict:
        return {
            "lambda": str(self.lam),
            "n_max": self.n_max,
            "atoms": self.atom_counts,
            "H": self.H,
            "H_over_n": [v / (i + 1) for i, v in enumerate(self.H)],
            "h_estimate": self.h_estimate,
            "h_note": "H(mu_n)/n at n_max; no certified limit is claimed",
            "L": {str(q): v for q, v in self.T.items()},
            "norms_exact": {str(q): v for q, v in self.exact_norms.items()},
            "T_estimate": {str(q): v for q, v in self.T_estimate.items()},
            "T_note": "min over n of L_n/n, an upper bound certified by subadditivity",
            "hdim_estimate": self.hdim_estimate,
            "D_estimate": {str(q): v for q, v in self.D_estimate.items()},
            "predicted_D": {str(q): v for q, v in self.predicted_D.items()},
            "overlap_level": self.overlap_level,
        }


def garsia(w: Wifs, q_list: Sequence[float], n_max: int, cap: int = DEFAULT_ATOM_CAP) -> GarsiaReport:
    """Garsia entropy and its L^q analogues from exact mu_n, n = 1..n_max."""
    _require_homogeneous(w)
    if not w.exact:
        raise ValueError("garsia needs exact parameters")
    q_list = [float(q) for q in q_list]
    for q in q_list:
        _check_q(q)
    lam = w.ratio
    lil = math.log2(1 / abs(to_float(lam)[0]))
    counts, H = [], []
    T: dict = {q: [] for q in q_list}
    exact: dict = {q: [] for q in q_list}
    overlap_level = None
    n_words = 1
    for lm in level_masses(w, n_max, cap):
        n_words *= len(w)
        counts.append(len(lm))
        if overlap_level is None and len(lm) < n_words:
            overlap_level = lm.n
        fr = lm.fractions()
        H.append(entropy(fr))
        for q in q_list:
            s = power_sum(lm, q)
            T[q].append(-log2(s))
            exact[q].append(str(s) if isinstance(s, Fraction) else None)
    h_est = H[-1] / n_max
    T_est = {q: min(v / (i + 1) for i, v in enumerate(T[q])) for q in q_list}
    D_est = {q: min(T_est[q] / ((q - 1) * lil), 1.0) for q in q_list}
    predicted = {q: similarity_dimensions(w, q).predicted_D for q in q_list}
    return GarsiaReport(lam, n_max, q_list, counts, H, T, exact, h_est, T_est,
                        min(h_est / lil, 1.0), D_est, predicted, overlap_level)


# --- Fourier transform --------------------------------------------------------------------


def fourier_modulus(w: Wifs, xi: Sequence[float], n_trunc: int) -> dict:
    """|mu^(xi)| via the truncated product of |Delta^(lambda^j xi)|, j < n_trunc.

    The returned error bound is exp(2 pi |xi| spread |lambda|^n / (1 - |lambda|)) - 1,
    where spread is the largest distance of a translation from the barycentre
    of Delta.
    """
    _require_homogeneous(w)
    lam = to_float(w.ratio)[0]
    ts = [to_float(t)[0] for t in w.translations]
    ps = [float(p) for p in w.weights]
    bary = math.fsum(p * t for p, t in zip(ps, ts))
    spread = max(abs(t - bary) for t in ts)
    values, bounds = [], []
    for x in xi:
        prod = 1.0
        scale_j = 1.0
        for _ in range(n_trunc):
            eta = scale_j * x
            z = sum(p * cmath.exp(2j * math.pi * t * eta) for p, t in zip(ps, ts))
            prod *= abs(z)
            scale_j *= lam
        values.append(1.0 if x == 0 else prod)
        tail = 2 * math.pi * abs(x) * spread * abs(lam) ** n_trunc / (1 - abs(lam))
        bounds.append(math.expm1(tail))
    return {"xi": list(xi), "modulus": values, "error_bound": bounds, "n_trunc": n_trunc}


# --- invariant checks ---------------------------------------------------------------

CONCAVITY_TOL = 0.02
MONOTONE_TOL = 0.01
RANGE_TOL = 0.02


def shape_violations(est: SpectrumEstimate) -> list[str]:
    """Violations of the concavity / monotonicity / range invariants of an estimate.

    Also checks 2^((1-q) m) <= S_m <= 1 for every (q, m) sample.
    """
    out = []
    tau, D = est.tau_hat, est.D_hat
    for i, d in enumerate(D):
        if not -RANGE_TOL <= d <= 1 + RANGE_TOL:
            out.append(f"D_hat({est.q_grid[i]}) = {d:.4f} outside [0, 1]")
    if len(tau) >= 3:
        q = np.asarray(est.q_grid)
        # second divided differences scaled to a unit grid step
        for i in range(1, len(tau) - 1):
            h = (q[i + 1] - q[i - 1]) / 2
            second = tau[i + 1] - 2 * tau[i] + tau[i - 1]
            if second > CONCAVITY_TOL * (h / 0.2) ** 2:
                out.append(f"tau_hat not concave near q={q[i]}: second difference {second:.4f}")
    for i in range(len(D) - 1):
        if D[i + 1] > D[i] + MONOTONE_TOL:
            out.append(f"D_hat increases between q={est.q_grid[i]} and q={est.q_grid[i + 1]}")
    for i, q in enumerate(est.q_grid):
        for j, m in enumerate(est.m_grid):
            s = est.S[i, j]
            if not (2.0 ** ((1 - q) * m) * (1 - 1e-12) <= s <= 1 + 1e-12):
                out.append(f"S_m out of bounds at q={q}, m={m}: {s}")
    return out
