"""Command-line front end: ``lqdim <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 resource limit exceeded,
4 invariant violation.  Reports are JSON (``"schema": "1"``) or CSV and are
written once, at the end of the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction
from typing import Sequence

from . import flatten as fl
from . import intersect as ix
from .measures import DEFAULT_ATOM_CAP, ResourceError, invariant_histogram
from .scalars import parse_scalar, scalar_to_json, to_float
from .separation import separation_report
from .spectrum import (
    estimate_tau,
    fekete_bounds,
    garsia,
    legendre_transform,
    shape_violations,
)
from .wifs import (
    InvalidWifsError,
    UnsupportedError,
    Wifs,
    parse_preset,
    similarity_dimensions,
    validate,
    wifs_from_json,
    wifs_to_json,
)

SCHEMA = "1"
EXIT_CONFIG, EXIT_RESOURCE, EXIT_INVARIANT = 2, 3, 4
NON_HOMOGENEOUS_NOTE = (
    "non-homogeneous WIFS: only symbolic dimensions are computed; "
    "measure approximations are implemented for homogeneous systems"
)


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    def __init__(self, report: dict, violations: list[str]):
        super().__init__("; ".join(violations))
        self.report = report
        self.violations = violations


# --- argument helpers ------------------------------------------------------------------


def _floats(text: str) -> list[float]:
    """'2' | '1.5,2,3' | '1.2:6:0.2' (inclusive range)."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ConfigError("range step must be positive")
        n = int(math.floor((hi - lo) / step + 1e-9))
        return [round(lo + k * step, 12) for k in range(n + 1)]
    return [float(x) for x in text.split(",") if x]


def _ints(text: str) -> list[int]:
    if ":" in text:
        lo, hi = (int(x) for x in text.split(":")[:2])
        return list(range(lo, hi + 1))
    return [int(x) for x in text.split(",") if x]


def _load_wifs(args) -> Wifs:
    if getattr(args, "wifs", None):
        src = args.wifs
        if os.path.exists(src):
            with open(src) as fh:
                obj = json.load(fh)
        else:
            obj = json.loads(src)
        w = wifs_from_json(obj)
    elif getattr(args, "preset", None):
        w = parse_preset(args.preset, args.lam)
    elif getattr(args, "lam", None):
        w = parse_preset("bernoulli", args.lam)
    else:
        raise ConfigError("give a WIFS with --preset, --lambda or --wifs")
    res = validate(w)
    if not res.ok:
        raise ConfigError(f"invalid WIFS: {res.reason}")
    return w


def _check_q(qs: Sequence[float]) -> None:
    for q in qs:
        if not q > 1:
            raise ConfigError(f"q must be > 1 (got {q})")


def _dims(w: Wifs, qs: Sequence[float]) -> dict:
    out = {}
    for q in qs:
        out[str(q)] = similarity_dimensions(w, q).as_dict()
    return out


def _cache_dir(args) -> str | None:
    return args.cache_dir or os.environ.get("LQDIM_CACHE_DIR") or None


# --- subcommands ---------------------------------------------------------------------


def cmd_analyze(args) -> tuple[dict, list | None]:
    w = _load_wifs(args)
    qs = args.q or [2.0]
    _check_q(qs)
    report: dict = {"wifs": wifs_to_json(w), "similarity": _dims(w, qs)}
    if not w.homogeneous:
        report["note"] = NON_HOMOGENEOUS_NOTE
        return report, None
    m_grid = args.m_grid or list(range(2, args.m_max + 1))
    est = estimate_tau(w, qs, m_grid, method=args.method, cap=args.atom_cap,
                       cache_dir=_cache_dir(args))
    report["spectrum"] = est.as_dict()
    report["D_hat_vs_prediction"] = [
        {"q": q, "D_hat": float(d), "predicted": p}
        for q, d, p in zip(qs, est.D_hat, est.predicted_D)
    ]
    if w.exact:
        n_max = min(args.n_max, 12)
        report["fekete"] = [fekete_bounds(w, q, n_max, args.atom_cap).as_dict() for q in qs]
        report["separation"] = separation_report(w, min(args.k_max, 10), args.atom_cap).as_dict()
    violations = shape_violations(est) if len(qs) >= 2 else []
    for f in report.get("fekete", []):
        if not f["subadditive"]:
            violations.append(f"subadditivity violated at q={f['q']}")
    if violations:
        raise InvariantViolation(report, violations)
    rows = [("q", "m", "S_m", "tau_hat", "D_hat"), *est.csv_rows()]
    return report, rows


def cmd_spectrum(args) -> tuple[dict, list | None]:
    w = _load_wifs(args)
    if not w.homogeneous:
        return {"wifs": wifs_to_json(w), "note": NON_HOMOGENEOUS_NOTE,
                "similarity": _dims(w, args.q_grid)}, None
    qs = args.q_grid
    _check_q(qs)
    m_grid = args.m_grid or list(range(2, args.m_max + 1))
    est = estimate_tau(w, qs, m_grid, method=args.method, cap=args.atom_cap,
                       cache_dir=_cache_dir(args))
    report = {"wifs": wifs_to_json(w), "spectrum": est.as_dict()}
    if len(qs) >= 3:
        report["legendre"] = legendre_transform(qs, est.tau_hat).as_dict()
    violations = shape_violations(est)
    if violations:
        raise InvariantViolation(report, violations)
    rows = [("q", "m", "S_m", "tau_hat", "D_hat"), *est.csv_rows()]
    return report, rows


def cmd_garsia(args) -> tuple[dict, list | None]:
    w = _load_wifs(args)
    qs = args.q or [2.0]
    _check_q(qs)
    rep = garsia(w, qs, args.n_max, args.atom_cap)
    report = {"wifs": wifs_to_json(w), "garsia": rep.as_dict()}
    violations = []
    for q in qs:
        fb = fekete_bounds(w, q, args.n_max, args.atom_cap)
        report.setdefault("subadditivity", []).append(
            {"q": q, "holds": fb.subadditive, "worst": fb.worst_violation})
        if not fb.subadditive:
            violations.append(f"subadditivity violated at q={q}")
    if violations:
        raise InvariantViolation(report, violations)
    header = ["n", "atoms", "H"] + [f"L_q{q}" for q in qs]
    rows = [tuple(header)]
    for i in range(args.n_max):
        rows.append((i + 1, rep.atom_counts[i], rep.H[i], *[rep.T[q][i] for q in qs]))
    return report, rows


def cmd_separation(args) -> tuple[dict, list | None]:
    w = _load_wifs(args)
    rep = separation_report(w, args.k_max, args.atom_cap)
    report = {"wifs": wifs_to_json(w), "separation": rep.as_dict()}
    rows = [("k", "gamma", "overlap")]
    rows += [(r.k, to_float(r.value)[0], int(r.overlap)) for r in rep.records]
    return report, rows


def cmd_flatten(args) -> tuple[dict, list | None]:
    q = args.q[0] if args.q else 2.0
    _check_q([q])
    if args.D is not None:
        if args.ell is None:
            raise ConfigError("tree mode needs --ell")
        S = args.S if args.S is not None else []
        tree = fl.tree_self_convolution_check(args.D, args.ell, S, q)
        report: dict = {"tree": tree.as_dict()}
        if args.D * len(set(S)) <= 26:
            prof = fl.regularity_check(fl.build_tree_measure(args.D, args.ell, S), args.D)
            report["regularity"] = prof.as_dict()
        return report, [("D", "ell", "q", "gap"), (args.D, args.ell, q, tree.gap)]
    w = _load_wifs(args)
    if not w.homogeneous:
        raise UnsupportedError(NON_HOMOGENEOUS_NOTE)
    m_grid = args.m_grid or [args.m_max]
    mus = {}
    top = invariant_histogram(w, max(m_grid))
    for m in m_grid:
        mus[m] = fl.GridMeasure.from_histogram(top.coarsen(m))
    factories = {
        "uniform": fl.GridMeasure.uniform,
        "delta": fl.GridMeasure.delta,
        "obstruction": lambda m: fl.obstruction_measure(m),
    }
    rho = factories[args.rho]
    results = [fl.flattening_ratio(rho(m), mus[m], q).as_dict() for m in sorted(mus)]
    report = {"wifs": wifs_to_json(w), "rho": args.rho, "q": q, "mu_source": "invariant_histogram",
              "flattening": results,
              "note": "eps_hat values are exploratory measurements; no theoretical target exists"}
    rows = [("m", "sigma_hat", "eps_hat")]
    rows += [(r["m"], r["sigma_hat"], r["eps_hat"]) for r in results]
    return report, rows


def cmd_intersect(args) -> tuple[dict, list | None]:
    if args.t is None:
        raise ConfigError("intersect needs --t")
    t = parse_scalar(args.t)
    u = parse_scalar(args.u)
    digits = args.digits
    eps = parse_scalar(args.eps) if args.eps else None
    rep = ix.fiber_report(args.p, digits, args.n, t, u, eps, k_max=min(args.k_max, 4))
    report = {"fiber": rep.as_dict()}
    rows = [("p", "n", "eps", "N_eps", "alpha_hat", "lemma_bound"),
            (args.p, args.n, rep.eps, rep.count, rep.alpha_hat, rep.lemma_bound)]
    if not rep.lemma_holds:
        raise InvariantViolation(report, ["fiber count exceeds 8 eps^-(2s - alpha)"])
    return report, rows


COMMANDS = {
    "analyze": cmd_analyze,
    "spectrum": cmd_spectrum,
    "garsia": cmd_garsia,
    "separation": cmd_separation,
    "flatten": cmd_flatten,
    "intersect": cmd_intersect,
}


# --- parser -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _typed(fn):
    def inner(text):
        try:
            return fn(text)
        except (ValueError, ConfigError) as exc:
            raise argparse.ArgumentTypeError(str(exc))
    inner.__name__ = fn.__name__.strip("_")
    return inner


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--preset", help="p_cantor:3:0,2 | bernoulli[:lambda] | projected_product:p:D:t | shipped name")
    common.add_argument("--lambda", dest="lam", help="contraction ratio, e.g. 2/3, golden, sqrt2, 0.7")
    common.add_argument("--wifs", help="inline WIFS JSON or path to a JSON file")
    common.add_argument("--format", choices=["json", "csv"], default="json")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--cache-dir", help="cache for mu_n data (env LQDIM_CACHE_DIR)")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallelism degree (accepted; evaluation is serial and deterministic)")
    common.add_argument("--q", type=_typed(_floats), help="q value(s), comma separated")
    common.add_argument("--q-grid", type=_typed(_floats), default=_floats("1.2:6:0.2"),
                        help="q grid as list or lo:hi:step")
    common.add_argument("--m-max", type=int, default=16)
    common.add_argument("--m-grid", type=_typed(_ints), help="dyadic levels as list or lo:hi")
    common.add_argument("--method", choices=["atoms", "histogram", "auto"], default="auto")
    common.add_argument("--n-max", type=int, default=12)
    common.add_argument("--k-max", type=int, default=8)
    common.add_argument("--atom-cap", type=int, default=DEFAULT_ATOM_CAP,
                        help="largest atom or word count to enumerate (default 2^22)")

    p = _Parser(prog="lqdim", description="L^q dimensions of homogeneous self-similar measures")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("analyze", "spectrum", "garsia", "separation"):
        sub.add_parser(name, parents=[common])
    f = sub.add_parser("flatten", parents=[common])
    f.add_argument("--D", type=int, help="tree mode: digits per level")
    f.add_argument("--ell", type=int, help="tree mode: number of levels")
    f.add_argument("--S", type=_typed(_ints), help="tree mode: branching levels")
    f.add_argument("--rho", choices=["uniform", "delta", "obstruction"], default="uniform")
    i = sub.add_parser("intersect", parents=[common])
    i.add_argument("--p", type=int, default=3)
    i.add_argument("--D", dest="digits", type=_typed(_ints), default=[0, 2], help="digit set, e.g. 0,2")
    i.add_argument("--n", type=int, default=9)
    i.add_argument("--t", help="projection parameter: rational, quadratic (sqrt2) or float")
    i.add_argument("--u", default="0")
    i.add_argument("--eps", help="scale (default p^-n)")
    return p


def _validate_ranges(args) -> None:
    for name in ("m_max", "n_max", "k_max", "jobs", "atom_cap"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise ConfigError(f"--{name.replace('_', '-')} must be >= 1")
    if args.m_max > 26:
        raise ConfigError("--m-max must be <= 26")


# --- output --------------------------------------------------------------------------


def _json_default(o):
    if isinstance(o, Fraction):
        return scalar_to_json(o)
    if hasattr(o, "tolist"):
        return o.tolist()
    if hasattr(o, "item"):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _render(report: dict, rows, fmt: str) -> str:
    if fmt == "csv":
        if rows is None:
            raise ConfigError("this report has no CSV form; use --format json")
        fh = io.StringIO()
        writer = csv.writer(fh, lineterminator="\n")
        for r in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in r])
        return fh.getvalue()
    return json.dumps(report, indent=2, default=_json_default, allow_nan=False) + "\n"


def _emit(text: str, out: str | None) -> None:
    if not out:
        sys.stdout.write(text)
        return
    tmp = out + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, out)


def _clean(obj):
    """Replace non-finite floats (JSON has no NaN) by None."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate_ranges(args)
        report, rows = COMMANDS[args.command](args)
        status = 0
    except InvariantViolation as exc:
        report, rows, status = exc.report, None, EXIT_INVARIANT
        report["violations"] = exc.violations
        print(f"invariant violation: {exc}", file=sys.stderr)
    except ResourceError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        print("hint: lower --n-max/--m-max/--k-max, raise --atom-cap, or use --method histogram", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, InvalidWifsError, UnsupportedError, KeyError, ValueError,
            json.JSONDecodeError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    full = {"schema": SCHEMA, "command": args.command, **report}
    try:
        text = _render(_clean(full), rows, args.format if status == 0 else "json")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _emit(text, args.out)
    return status


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
