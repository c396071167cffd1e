"""Batch harness: run a homeomorphism through every diagnostic and classify it.

``wpdiag run`` writes, into ``--out``:

* ``beta.csv``      one row per dyadic interval and base point
* ``epsilon.csv``   one row per dyadic interval (first base point)
* ``sums.csv``      per-depth sums for each diagnostic
* ``halfnorm.csv``  H^{1/2} partial sums of log phi'
* ``checks.csv``    inequality checks and the fitted beta/epsilon constant
* ``summary.json``  verdicts and the one-line classification

(``--format json`` writes the tables as JSON lists instead of CSV.)
``wpdiag figures`` writes JSON sample data for acausal circles, boundary
diamonds and the limiting domain.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

DEPTH_GUARD = 16

BETA_COLUMNS = ["base", "depth", "k", "lo", "hi", "beta", "gamma", "qs", "beta_lam", "gamma_lam"]
EPS_COLUMNS = ["base", "depth", "k", "lo", "hi", "eps_lo", "eps_hi", "x", "kind"]
SUM_COLUMNS = ["diagnostic", "base", "depth", "per_depth", "cumulative"]
HALF_COLUMNS = ["K", "partial_sum"]
CHECK_COLUMNS = ["check", "base", "depth", "tested", "violations", "value"]


@dataclass
class RunConfig:
    homeo: str
    bases: List[float]
    mult: float = 3.0
    depth: int = 10
    eta: float = 0.5
    theta: float = 0.7
    eps_depth: Optional[int] = None
    eps_bases: int = 1
    half_K0: int = 16
    half_doublings: int = 6
    out: str = "wpdiag-out"
    format: str = "csv"
    jobs: int = 1
    base_texts: List[str] = field(default_factory=list)

    def validate(self):
        if self.depth > DEPTH_GUARD:
            raise ValueError(f"depth {self.depth} exceeds the guard {DEPTH_GUARD}")
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if self.mult < 1:
            raise ValueError("multiplier must be >= 1")
        if not self.bases:
            raise ValueError("at least one base point is required")
        if self.format not in ("csv", "json"):
            raise ValueError("format must be csv or json")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        return self


# ---------------------------------------------------------------------------
# work units (module level so they can be shipped to worker processes)
# ---------------------------------------------------------------------------

def _beta_task(spec: str, base: float, m: int, mult: float):
    from .beta import beta_sq_sum, check_level, level_stats, pair_checks
    from .homeo import make_homeo

    phi = make_homeo(spec)
    st = level_stats(phi, base, m, mult)
    rows = [[base, m, k, st.lo[k], st.hi[k], st.beta[k], st.gamma[k], st.qs[k],
             st.beta_lam[k], st.gamma_lam[k]] for k in range(len(st.lo))]
    checks = [["level", base, m, len(st.lo), len(check_level(st)), ""]]
    if m > 0:
        parent = level_stats(phi, base, m - 1, mult)
        for name, (n, bad) in pair_checks(parent, st).items():
            checks.append([name, base, m, n, len(bad), ""])
    return rows, beta_sq_sum(st), checks


def _eps_task(spec: str, base: float, m: int):
    from .beta import level_stats
    from .epsilon import eps_sq_sum, epsilon_level, inequality_quotients
    from .homeo import make_homeo

    phi = make_homeo(spec)
    lv = epsilon_level(phi, base, m)
    ends = base + math.pi * np.arange(2 ** m + 1) / 2 ** m
    rows = [[base, m, k, ends[k], ends[k + 1], lv.lo[k], lv.hi[k], lv.x[k], int(lv.kind[k])]
            for k in range(len(lv.hi))]
    st = level_stats(phi, base, m, lam=1.0)
    q, zero = inequality_quotients(st, lv.hi)
    j = int(np.argmax(q))
    return rows, eps_sq_sum(lv.hi), (float(q[j]), j, int((~zero).sum()))


def _half_task(spec: str, K0: int, doublings: int):
    from .homeo import h_half_seminorm, jump_log_growth, make_homeo

    phi = make_homeo(spec)
    rep = h_half_seminorm(phi, K0, doublings)
    pred = jump_log_growth(phi.log_pieces) if phi.log_pieces is not None else None
    return rep, pred


def _run_tasks(jobs, calls):
    """Evaluate [(fn, args), ...] in order, serially or in a process pool."""
    if jobs <= 1:
        return [fn(*a) for fn, a in calls]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futs = [ex.submit(fn, *a) for fn, a in calls]
        return [f.result() for f in futs]


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def classify(verdicts: dict):
    """Three-way agreement of {'beta', 'epsilon', 'h_half'} -> (label, dissenter).

    Each verdict is 'converging' or 'diverging'.  Agreement gives
    WP-consistent / non-WP-consistent; otherwise the result is inconclusive
    and the minority diagnostic is named.
    """
    vals = list(verdicts.values())
    if all(v == "converging" for v in vals):
        return "WP-consistent", None
    if all(v == "diverging" for v in vals):
        return "non-WP-consistent", None
    n_conv = sum(v == "converging" for v in vals)
    minority = "converging" if n_conv < len(vals) - n_conv else "diverging"
    dissent = [k for k, v in verdicts.items() if v == minority]
    return "inconclusive", ",".join(dissent)


def _combine_verdicts(reports):
    vs = [r["verdict"] for r in reports]
    return "converging" if all(v == "converging" for v in vs) else "diverging"


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_table(path_base: str, fmt: str, columns, rows):
    if fmt == "csv":
        path = path_base + ".csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
    else:
        path = path_base + ".json"
        data = [{c: (_jsonable(v)) for c, v in zip(columns, r)} for r in rows]
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)
            fh.write("\n")
    return path


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        v = float(v)
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def run_diagnostics(cfg: RunConfig, log=None) -> dict:
    """Run all diagnostics for one homeomorphism and write the report files."""
    from .beta import tail_verdict
    from .homeo import make_homeo, validate

    cfg.validate()
    validate(make_homeo(cfg.homeo))
    os.makedirs(cfg.out, exist_ok=True)
    eps_depth = cfg.depth if cfg.eps_depth is None else min(cfg.eps_depth, cfg.depth)
    eps_bases = cfg.bases[:max(1, cfg.eps_bases)]
    t0 = time.time()

    calls = [(_beta_task, (cfg.homeo, b, m, cfg.mult)) for b in cfg.bases for m in range(cfg.depth + 1)]
    calls += [(_eps_task, (cfg.homeo, b, m)) for b in eps_bases for m in range(eps_depth + 1)]
    calls.append((_half_task, (cfg.homeo, cfg.half_K0, cfg.half_doublings)))
    results = _run_tasks(cfg.jobs, calls)
    nb = len(cfg.bases) * (cfg.depth + 1)
    ne = len(eps_bases) * (eps_depth + 1)
    beta_res, eps_res, (half, half_pred) = results[:nb], results[nb:nb + ne], results[-1]

    beta_rows, check_rows, sum_rows = [], [], []
    beta_reports = []
    for i, b in enumerate(cfg.bases):
        chunk = beta_res[i * (cfg.depth + 1):(i + 1) * (cfg.depth + 1)]
        per = []
        for rows, s, checks in chunk:
            beta_rows.extend(rows)
            check_rows.extend(checks)
            per.append(s)
        verdict, ratios = tail_verdict(per, cfg.theta)
        cum = np.cumsum(per)
        sum_rows.extend(["beta", b, m, per[m], cum[m]] for m in range(len(per)))
        beta_reports.append({"base": b, "per_depth": per, "verdict": verdict, "ratios": ratios})

    eps_rows, eps_reports = [], []
    fit = {"K": 0.0, "argmax": None, "n_used": 0}
    for i, b in enumerate(eps_bases):
        chunk = eps_res[i * (eps_depth + 1):(i + 1) * (eps_depth + 1)]
        per = []
        for m, (rows, s, (q, j, used)) in enumerate(chunk):
            eps_rows.extend(rows)
            per.append(s)
            if m >= 4:
                fit["n_used"] += used
                if q > fit["K"]:
                    fit["K"], fit["argmax"] = q, [b, m, j]
        verdict, ratios = tail_verdict(per, cfg.theta)
        cum = np.cumsum(per)
        sum_rows.extend(["epsilon", b, m, per[m], cum[m]] for m in range(len(per)))
        eps_reports.append({"base": b, "per_depth": per, "verdict": verdict, "ratios": ratios})
    check_rows.append(["beta_epsilon_K", eps_bases[0], eps_depth, fit["n_used"], 0, fit["K"]])

    half_rows = [[K, S] for K, S in zip(half.Ks, half.sums)]
    half_verdict = "converging" if half.verdict == "converged" else "diverging"

    verdicts = {"beta": _combine_verdicts(beta_reports), "epsilon": _combine_verdicts(eps_reports),
                "h_half": half_verdict}
    label, dissent = classify(verdicts)

    files = [
        _write_table(os.path.join(cfg.out, "beta"), cfg.format, BETA_COLUMNS, beta_rows),
        _write_table(os.path.join(cfg.out, "epsilon"), cfg.format, EPS_COLUMNS, eps_rows),
        _write_table(os.path.join(cfg.out, "sums"), cfg.format, SUM_COLUMNS, sum_rows),
        _write_table(os.path.join(cfg.out, "halfnorm"), cfg.format, HALF_COLUMNS, half_rows),
        _write_table(os.path.join(cfg.out, "checks"), cfg.format, CHECK_COLUMNS, check_rows),
    ]
    n_viol = sum(r[4] for r in check_rows)
    summary = {
        "homeo": cfg.homeo,
        "bases": cfg.base_texts or [repr(b) for b in cfg.bases],
        "mult": cfg.mult,
        "depth": cfg.depth,
        "epsilon_depth": eps_depth,
        "eta": cfg.eta,
        "beta": beta_reports,
        "epsilon": eps_reports,
        "h_half": {"verdict": half.verdict, "value": half.value, "Ks": half.Ks, "sums": half.sums,
                   "growth_per_doubling": half.growth_per_doubling,
                   "predicted_growth": half_pred},
        "beta_epsilon_fit": fit,
        "check_violations": n_viol,
        "verdicts": verdicts,
        "classification": label,
        "dissenter": dissent,
    }
    path = os.path.join(cfg.out, "summary.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=1, default=_jsonable)
        fh.write("\n")
    files.append(path)
    summary["files"] = files
    if log is not None:
        line = f"{cfg.homeo}: {label}"
        if dissent:
            line += f" (dissenting: {dissent})"
        log(line + f"  [{time.time() - t0:.1f}s]")
    return summary


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------

def figure_data(homeo: Optional[str] = None, mobius=(), hyperbolas=(), depth: int = 3,
                base: float = 0.0, n: int = 256) -> dict:
    """JSON-ready samples for acausal circles, diamonds and the limiting domain.

    Schema:
      circles:  [{"matrix": [a,b,c,d], "kind": "line"|"hyperbola", "params": [...],
                  "center": [Q, -R] (hyperbola only), "penrose": [[t, f(t)], ...],
                  "angles": [[x, f^(x)], ...]}]
      diamonds: [{"k": k, "h": [lo, hi], "v": [lo, hi]}] for the boundary
                rectangles 3I x phi(3I) at the given depth (if a homeo is given)
      limiting_domain: {"r": r, "boundary": [[y1, y2], ...],
                        "caps": [[centre angle, cos half-width], ...]}
    """
    from .adsgeom import boundary_diamond, limiting_domain
    from .charts import acausal_circle_of, sample_acausal_circle
    from .homeo import dyadic_level, make_homeo
    from .mobius import MobiusMap

    maps = [MobiusMap(*m) for m in mobius] + [MobiusMap.from_hyperbola(*h) for h in hyperbolas]
    if not maps:
        maps = [MobiusMap.identity()]
    circles = []
    for f in maps:
        desc = acausal_circle_of(f)
        pts = sample_acausal_circle(f, n)
        keep = np.abs(np.cos(pts[:, 0])) > 1e-3
        keep &= np.abs(np.cos(pts[:, 1])) > 1e-3
        pen = np.column_stack([np.tan(pts[keep, 0]), np.tan(pts[keep, 1])])
        entry = {"matrix": [f.a, f.b, f.c, f.d], "kind": desc[0], "params": list(desc[1:]),
                 "penrose": pen.tolist(), "angles": pts.tolist()}
        if desc[0] == "hyperbola":
            entry["center"] = [desc[2], -desc[3]]
        circles.append(entry)
    out = {"circles": circles}
    if homeo is not None:
        phi = make_homeo(homeo)
        out["diamonds"] = []
        for I in dyadic_level(base, depth):
            D = boundary_diamond(phi, I)
            out["diamonds"].append({"k": I.k, "h": [D.h_lo, D.h_hi], "v": [D.v_lo, D.v_hi]})
    ld = limiting_domain()
    step = max(1, len(ld.theta) // 512)
    out["limiting_domain"] = {"r": ld.r, "boundary": ld.boundary[::step].tolist(),
                              "caps": [list(c) for c in ld.caps]}
    return out


def emit_figures(config) -> dict:
    """figure_data from a mapping (or namespace) of its keyword arguments."""
    if not isinstance(config, dict):
        config = vars(config)
    keys = ("homeo", "mobius", "hyperbolas", "depth", "base", "n")
    return figure_data(**{k: config[k] for k in keys if config.get(k) is not None})


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _parse_bases(text: str):
    from .homeo import parse_real

    parts = [p for p in text.split(",") if p.strip()]
    return [parse_real(p) for p in parts], [p.strip() for p in parts]


def _parse_tuple(n):
    def parse(text):
        from .homeo import parse_real

        vals = [parse_real(v) for v in text.split(",")]
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers")
        return vals
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wpdiag", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run all diagnostics on one homeomorphism")
    r.add_argument("--homeo", required=True, action="append",
                   help="homeomorphism spec, e.g. trig:0.3 (repeatable)")
    r.add_argument("--bases", default="0,pi/3,-pi/3", help="comma-separated base points (default 0,pi/3,-pi/3)")
    r.add_argument("--mult", type=float, default=3.0, help="interval multiplier lambda")
    r.add_argument("--depth", type=int, default=10)
    r.add_argument("--eps-depth", type=int, default=None,
                   help="max depth for epsilon numbers (default: --depth)")
    r.add_argument("--eps-bases", type=int, default=1,
                   help="number of leading base points used for epsilon numbers")
    r.add_argument("--eta", type=float, default=0.5)
    r.add_argument("--theta", type=float, default=0.7, help="tail-ratio threshold")
    r.add_argument("--out", default="wpdiag-out")
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    r.add_argument("--jobs", type=int, default=1)

    f = sub.add_parser("figures", help="emit JSON figure data")
    f.add_argument("--homeo", default=None, help="homeomorphism for boundary diamonds")
    f.add_argument("--mobius", type=_parse_tuple(4), action="append", default=[],
                   help="a,b,c,d (repeatable)")
    f.add_argument("--hyperbola", type=_parse_tuple(3), action="append", default=[],
                   help="P,Q,R for t -> P/(Q - t) - R (repeatable)")
    f.add_argument("--depth", type=int, default=3)
    f.add_argument("--base", default="0")
    f.add_argument("--samples", type=int, default=256)
    f.add_argument("--out", default="-", help="output file ('-' for stdout)")
    return p


def _slug(spec: str) -> str:
    keep = [c if c.isalnum() or c in "._-" else "_" for c in spec]
    return "".join(keep)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        try:
            bases, texts = _parse_bases(args.bases)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        status = 0
        for spec in args.homeo:
            out = args.out if len(args.homeo) == 1 else os.path.join(args.out, _slug(spec))
            cfg = RunConfig(spec, bases, args.mult, args.depth, args.eta, args.theta,
                            args.eps_depth, args.eps_bases, out=out, format=args.format,
                            jobs=args.jobs, base_texts=texts)
            try:
                run_diagnostics(cfg, log=print)
            except ValueError as exc:
                print(f"error: {spec}: {exc}", file=sys.stderr)
                status = 2
        return status
    from .homeo import parse_real

    data = figure_data(args.homeo, args.mobius, args.hyperbola, args.depth,
                       parse_real(args.base), args.samples)
    text = json.dumps(data, indent=1)
    if args.out == "-":
        print(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
