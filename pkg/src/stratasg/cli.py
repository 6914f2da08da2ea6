"""Command line entry point.

Exit status: 0 on success, 2 when a statistical comparison is flagged or
inconclusive (or a property check fails), 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time

import numpy as np

from . import ancestral, easg, moran, ode, pruning, sasg, wtt
from .params import ModelParams, ParameterError, load_config
from .rng import STREAM_PRUNE, generator, thread_count

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# output


def fmt_num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def to_json(obj) -> str:
    """JSON text with every float written to 17 significant digits."""
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {to_json(v)}"
                               for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(to_json(v) for v in obj) + "]"
    return fmt_num(obj)


class Writer:
    def __init__(self, out, fmt: str, config: dict):
        self.out = out
        self.fmt = fmt
        self.config = config
        self.header = None

    def record(self, rec: dict):
        if self.fmt == "jsonl":
            full = dict(rec)
            full["config"] = self.config
            self.out.write(to_json(full) + "\n")
            return
        if self.header is None:
            self.out.write("# config: " + to_json(self.config) + "\n")
            self.header = list(rec)
            self.out.write(",".join(self.header) + "\n")
        cells = []
        for k in self.header:
            v = rec.get(k, "")
            cells.append(v if isinstance(v, str) else fmt_num(v))
        self.out.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# argument handling


def _add_params(ap, defaults=None):
    d = defaults or {}
    ap.add_argument("--s", type=float, default=None, help="selection rate")
    ap.add_argument("--gamma", type=float, default=None, help="interaction rate")
    ap.add_argument("--u", type=float, default=None, help="mutation rate")
    ap.add_argument("--nu0", type=float, default=None, help="fraction of mutations to the fit type")
    ap.add_argument("--config", help="file of key=value lines (s, gamma, u, nu0)")
    ap.set_defaults(_param_defaults=d)


def _params(args, need_u=True) -> ModelParams:
    vals = dict(args._param_defaults)
    if args.config:
        vals.update(load_config(args.config))
    for k in ("s", "gamma", "u", "nu0"):
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = v
    vals.setdefault("nu0", 0.0)
    if not need_u:
        vals.setdefault("u", 0.0)
    missing = [k for k in ("s", "gamma", "u") if k not in vals]
    if missing:
        raise UsageError("missing parameter(s): " + ", ".join("--" + m for m in missing))
    return ModelParams(vals["s"], vals["gamma"], vals["u"], vals["nu0"])


def _config(args, p: ModelParams | None, **knobs) -> dict:
    cfg = {"command": args.command}
    if p is not None:
        cfg.update(p.as_dict())
    cfg.update(knobs)
    cfg["threads"] = thread_count()
    return cfg


def _parse_sweep(text: str) -> np.ndarray:
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"--u-sweep expects start:stop:step, got {text!r}") from None
    if step <= 0 or b < a:
        raise UsageError("--u-sweep needs step > 0 and stop >= start")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return a + step * np.arange(n)


def _parse_start(text: str):
    if text == "pitchstar":
        return wtt.PITCHSTAR
    if text.startswith("root:"):
        try:
            n = int(text[5:])
        except ValueError:
            raise UsageError(f"bad start {text!r}") from None
        return wtt.root(n)
    if text.startswith("file:"):
        with open(text[5:]) as fh:
            return wtt.parse_wtt(fh.read())
    try:
        return wtt.parse_wtt(text)
    except ValueError as e:
        raise UsageError(f"bad start {text!r}: {e}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_equilibria(args, out) -> int:
    p0 = _params(args, need_u=args.u_sweep is None)
    us = _parse_sweep(args.u_sweep) if args.u_sweep else np.array([p0.u])
    w = Writer(out, args.format, _config(args, p0, u_sweep=args.u_sweep))
    for u in us:
        if u <= 0:
            continue  # equilibria are analysed for u > 0 only
        p = p0.with_(u=float(u))
        rep = ode.equilibria(p)
        for r in rep.roots:
            w.record({"u": p.u, "root": r.value, "stability": r.stability,
                      "regime": f"{rep.regime[0]};{rep.regime[1]}",
                      "multiplicity": r.multiplicity,
                      "in_unit": r.in_unit_interval})
    return EXIT_OK


def cmd_integrate(args, out) -> int:
    p = _params(args)
    traj = ode.integrate(p, args.y0, args.t, tol=args.tol,
                         max_step=max(args.t / max(args.points, 1), 1e-12))
    w = Writer(out, args.format, _config(args, p, y0=args.y0, t=args.t, tol=args.tol))
    for t in np.linspace(0.0, args.t, args.points + 1):
        w.record({"t": float(t), "y": float(traj(t))})
    return EXIT_OK


def cmd_moran(args, out) -> int:
    p = _params(args)
    if args.N < 1:
        raise UsageError("--N must be at least 1")
    w = Writer(out, "jsonl", _config(args, p, N=args.N, y0=args.y0, t=args.t,
                                     replicates=args.replicates, seed=args.seed))
    gaps, finals = moran.lln_experiment(p, args.N, args.y0, args.t,
                                        args.replicates, args.seed)
    for i, (g, k) in enumerate(zip(gaps, finals)):
        w.record({"record": "replicate", "seed": args.seed, "replicate": i,
                  "sup_gap": g, "final_k": k})
    w.record({"record": "summary", "seed": args.seed, "median_gap": float(np.median(gaps)),
              "max_gap": float(gaps.max()),
              "frac_below_eps": float(np.mean(gaps < args.eps)), "eps": args.eps})
    return EXIT_OK


def _summary(res, target, seed, **more):
    z = res.z(target)
    ok = abs(z) < 3 and not res.flagged
    rec = {"record": "summary", "seed": seed, "estimate": res.estimate, "se": res.se,
           "n": res.n, "target": target, "z": z, "pass": ok,
           "n_flagged": res.n_flagged, "flagged": res.flagged}
    rec.update(more)
    return rec, ok


def cmd_easg_duality(args, out) -> int:
    p = _params(args)
    res = easg.mc_duality_easg(p, args.y0, args.t, args.replicates, args.seed,
                               budget=args.budget)
    target = ode.y_at(p, args.y0, args.t, tol=1e-12)
    w = Writer(out, "jsonl", _config(args, p, y0=args.y0, t=args.t, replicates=args.replicates,
                                     seed=args.seed, budget=args.budget))
    rec, ok = _summary(res, target, args.seed, mean_size=res.extra["mean_size"])
    w.record(rec)
    return EXIT_OK if ok else EXIT_FLAGGED


def cmd_sasg(args, out) -> int:
    p = _params(args)
    start = _parse_start(args.start)
    cfg = _config(args, p, start=wtt.format_wtt(start), mode=args.mode, t=args.t,
                  y0=args.y0, replicates=args.replicates, mmax=args.mmax,
                  rmax=args.rmax, seed=args.seed, terms=args.terms)
    w = Writer(out, "jsonl", cfg)
    if args.mode == "catalan":
        sums = sasg.catalan_series(p, args.terms)
        target = 1.0 - min(ode.equilibria(p).named["ybar2"], 1.0)
        err = abs(sums[-1] - target)
        w.record({"record": "summary", "partial_sum": sums[-1], "target": target,
                  "abs_error": err, "terms": args.terms, "pass": err < 1e-6})
        return EXIT_OK if err < 1e-6 else EXIT_FLAGGED
    if args.mode == "duality":
        res = sasg.mc_duality_sasg(p, start, args.y0, args.t, args.replicates,
                                   args.seed, m_max=args.mmax)
        if not args.summary_only:
            for i, h in enumerate(res.extra["hs"]):
                w.record({"record": "replicate", "seed": args.seed, "replicate": i, "hs": h})
        target = wtt.hs_exact(start, ode.y_at(p, args.y0, args.t, tol=1e-12))
        rec, ok = _summary(res, target, args.seed, flag_fraction=res.flag_fraction)
        w.record(rec)
        return EXIT_OK if ok else EXIT_FLAGGED
    # absorption
    if start != 1:
        raise UsageError("--mode absorb starts from root:1")
    outc, times, mass, _ = sasg.run_absorption(p, start, args.replicates, args.seed,
                                               args.mmax, args.rmax)
    names = {0: sasg.TIMED_OUT, 1: sasg.ABSORBED_ROOT0, 2: sasg.ABSORBED_DELTA,
             3: sasg.ESCAPED}
    if not args.summary_only:
        for i in range(len(outc)):
            w.record({"record": "replicate", "seed": args.seed, "replicate": i,
                      "outcome": names[int(outc[i])], "time": times[i], "mass": mass[i]})
    n = len(outc)
    w1 = float(np.mean(outc == 1))
    d1 = float(np.mean(outc != 2))
    tmo = float(np.mean(outc == 0))
    rec = {"record": "summary", "seed": args.seed, "w1": w1,
           "w1_se": math.sqrt(w1 * (1 - w1) / n), "d1": d1,
           "d1_se": math.sqrt(d1 * (1 - d1) / n),
           "escape_fraction": float(np.mean(outc == 3)), "timeout_fraction": tmo,
           "inconclusive": tmo > 0.05}
    if p.u > 0:
        rep = ode.equilibria(p)
        rec.update(y_hat_inf=rep.y_hat_inf, y_check_inf=rep.y_check_inf)
    w.record(rec)
    return EXIT_FLAGGED if tmo > 0.05 else EXIT_OK


def cmd_ancestral(args, out) -> int:
    p = _params(args)
    if p.nu0 != 0:
        raise UsageError("ancestral requires nu0 = 0 (the forest representation "
                         "holds only without beneficial mutations)")
    w = Writer(out, args.format, _config(args, p, y0=args.y0, r=args.r,
                                         replicates=args.replicates, seed=args.seed,
                                         closed_only=args.closed_only, mmax=args.mmax))
    status = EXIT_OK
    for r in _floats(args.r):
        for y0 in _floats(args.y0):
            gc = ancestral.g_closed(p, y0, r)
            rec = {"r": r, "y0": y0, "g_closed": gc}
            if args.closed_only:
                rec.update(g_mc="", se="")
            else:
                res = ancestral.mc_ancestral(p, y0, r, args.replicates, args.seed,
                                             m_max=args.mmax)
                rec.update(g_mc=res.estimate, se=res.se)
                if abs(res.z(gc)) >= 3 or res.flagged:
                    status = EXIT_FLAGGED
            if args.format == "jsonl":
                rec = {k: (None if v == "" else v) for k, v in rec.items()}
            w.record(rec)
    return status


def run_prune_suite(n_trees: int, max_leaves: int, orders: int, seed: int,
                    grid: int = 21) -> dict:
    """Property checks on random trees; returns failure counts."""
    rng = generator(seed, STREAM_PRUNE, 0)
    ys = np.linspace(0.0, 1.0, grid)
    fail = {"root_type": 0, "order": 0, "h_vs_hs": 0, "policy": 0}
    worst = 0.0
    leaves_seen = 0
    for _ in range(n_trees):
        a = pruning.random_xi_star(rng, max_leaves=max_leaves)
        pi = pruning.total_pruning(a)
        L = a.unmarked_leaves()
        leaves_seen += len(L)
        full = easg.root_type_all(a, L)
        keep = pi.unmarked_leaves()
        pos = {v: i for i, v in enumerate(L)}
        j = np.arange(1 << len(L), dtype=np.int64)
        sub = np.zeros_like(j)
        for b, v in enumerate(keep):
            sub |= ((j >> pos[v]) & 1) << b
        if not np.array_equal(full, easg.root_type_all(pi, keep)[sub]):
            fail["root_type"] += 1
        ref = pi.to_nested()
        if any(pruning.total_pruning(a, rng).to_nested() != ref for _ in range(orders)):
            fail["order"] += 1
        S = pruning.stratify(a)
        S_last = pruning.stratify(a, "last")
        d = max(abs(easg.h_exact(a, y) - wtt.hs_exact(S, y)) for y in ys)
        worst = max(worst, d)
        if d >= 1e-12:
            fail["h_vs_hs"] += 1
        if max(abs(wtt.hs_exact(S_last, y) - wtt.hs_exact(S, y)) for y in ys) >= 1e-12:
            fail["policy"] += 1
    return {"trees": n_trees, "failures": fail, "max_h_diff": worst,
            "mean_leaves": leaves_seen / max(n_trees, 1)}


def cmd_prune_check(args, out) -> int:
    t0 = time.perf_counter()
    res = run_prune_suite(args.trees, args.max_leaves, args.orders, args.seed)
    res["seconds"] = time.perf_counter() - t0
    ok = not any(res["failures"].values())
    res["pass"] = ok
    w = Writer(out, "jsonl", _config(args, None, trees=args.trees,
                                     max_leaves=args.max_leaves, orders=args.orders,
                                     seed=args.seed))
    w.record({"record": "summary", "seed": args.seed, **res})
    return EXIT_OK if ok else EXIT_FLAGGED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="stratasg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    e = sub.add_parser("equilibria", help="equilibria and regime, optionally over a u sweep")
    _add_params(e)
    e.add_argument("--u-sweep", help="start:stop:step")
    e.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    e.set_defaults(func=cmd_equilibria)

    i = sub.add_parser("integrate", help="ODE solution on a grid")
    _add_params(i)
    i.add_argument("--y0", type=float, required=True)
    i.add_argument("--t", type=float, required=True)
    i.add_argument("--points", type=int, default=100)
    i.add_argument("--tol", type=float, default=1e-10)
    i.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    i.set_defaults(func=cmd_integrate)

    m = sub.add_parser("moran", help="Moran paths against the ODE")
    _add_params(m)
    m.add_argument("--N", type=int, required=True)
    m.add_argument("--y0", type=float, required=True)
    m.add_argument("--t", type=float, required=True)
    m.add_argument("--replicates", type=int, default=100)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--eps", type=float, default=0.05)
    m.set_defaults(func=cmd_moran)

    for name in ("easg-duality", "duality"):
        d = sub.add_parser(name, help="Monte Carlo check of the eASG duality")
        _add_params(d)
        d.add_argument("--y0", type=float, required=True)
        d.add_argument("--t", type=float, required=True)
        d.add_argument("--replicates", type=int, default=100_000)
        d.add_argument("--seed", type=int, default=0)
        d.add_argument("--budget", type=int, default=easg.DEFAULT_BUDGET)
        d.set_defaults(func=cmd_easg_duality)

    s = sub.add_parser("sasg", help="stratified ASG: duality, absorption, series")
    _add_params(s)
    s.add_argument("--start", default="root:1", help="root:N, pitchstar, file:PATH or '(L M R)'")
    s.add_argument("--mode", choices=("duality", "absorb", "catalan"), default="duality")
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--y0", type=float, default=0.5)
    s.add_argument("--replicates", type=int, default=10_000)
    s.add_argument("--mmax", type=int, default=sasg.DEFAULT_M_MAX)
    s.add_argument("--rmax", type=float, default=None)
    s.add_argument("--terms", type=int, default=200)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--summary-only", action="store_true")
    s.set_defaults(func=cmd_sasg)

    a = sub.add_parser("ancestral", help="ancestral type distribution (nu0 = 0)")
    _add_params(a)
    a.add_argument("--y0", required=True, help="value or comma list")
    a.add_argument("--r", required=True, help="value or comma list")
    a.add_argument("--replicates", type=int, default=100_000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--mmax", type=int, default=sasg.DEFAULT_M_MAX)
    a.add_argument("--closed-only", action="store_true")
    a.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    a.set_defaults(func=cmd_ancestral)

    pc = sub.add_parser("prune-check", help="pruning and stratification property suite")
    pc.add_argument("--trees", type=int, default=500)
    pc.add_argument("--max-leaves", type=int, default=12)
    pc.add_argument("--orders", type=int, default=50)
    pc.add_argument("--seed", type=int, default=0)
    pc.set_defaults(func=cmd_prune_check)
    return ap


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args, out)
    except (UsageError, ParameterError) as e:
        ap.print_usage(sys.stderr)
        print(f"stratasg {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, RuntimeError) as e:
        print(f"stratasg {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
