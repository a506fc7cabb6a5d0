"""Command-line entry point: one subcommand per experiment.

Every run writes its results into the output directory (``--output``, else
``$IPMIX_OUTPUT``, else ``./ipmix-out``) as ``<command>.json`` and, where a
table or figure makes sense, ``<command>.csv`` and ``<command>.svg``.  Each
file carries the tool version, the seed and a hash of the resolved config.
A JSON file given with ``--config`` supplies defaults for any flag; flags
on the command line win.

Exit codes: 0 success, 2 invalid arguments, 3 invariant violated during
compute, 1 any other failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__

COMMANDS = ("graph", "simulate", "lumped", "moments", "bounds", "couple", "profile",
            "exclusion", "bbb", "compare")
FORMATS = ("csv", "json", "svg", "png")
OUTPUT_ENV = "IPMIX_OUTPUT"
DEFAULT_OUTPUT = "ipmix-out"


class ValidationError(ValueError):
    pass


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


# -- argument parsing ----------------------------------------------------------------

def _floats(s: str) -> list[float]:
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s: str) -> list[int]:
    return [int(float(x)) for x in str(s).split(",") if x.strip()]


def _pairs(s: str) -> list[tuple[float, float]]:
    out = []
    for tok in str(s).split(","):
        if tok.strip():
            a, b = tok.split(":")
            out.append((float(a), float(b)))
    return out


def _seed(s) -> int:
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=_seed, default=0, help="64-bit base seed")
    p.add_argument("--output", default=None, help=f"output directory (env {OUTPUT_ENV})")
    p.add_argument("--format", default="csv,json,svg", help="comma list from csv,json,svg,png")
    p.add_argument("--workers", type=int, default=0, help="threads for Monte Carlo (0 = all)")
    p.add_argument("--config", default=None, help="JSON file with defaults for any flag")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipmix", description="Interchange-process mixing experiments.")
    parser.add_argument("--version", action="version", version=f"ipmix {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    c = _common()

    p = sub.add_parser("graph", parents=[c], help="describe a weighted graph")
    p.add_argument("--kind", default="dumbbell",
                   choices=["dumbbell", "symmetrized", "half_symmetrized", "complete"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, default=0)

    p = sub.add_parser("simulate", parents=[c], help="Monte Carlo TV of a statistic")
    p.add_argument("--kind", default="symmetrized",
                   choices=["dumbbell", "symmetrized", "half_symmetrized"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--statistic", default="L", choices=["L", "fixed_points"])
    p.add_argument("--t", type=_ints, default=None, help="comma list of times")
    p.add_argument("--replicas", type=int, default=4000)
    p.add_argument("--trajectory", type=int, default=0,
                   help="also record one trajectory of this many steps")
    p.add_argument("--stride", type=int, default=0, help="snapshot stride for --trajectory")

    p = sub.add_parser("lumped", parents=[c], help="exact mixing of a lumped chain")
    p.add_argument("--chain", default="bl", choices=["bl", "single", "pair", "gprime"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--eps", type=_floats, default=[0.25])

    p = sub.add_parser("moments", parents=[c], help="moment formulas against Monte Carlo")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--t", type=_ints, required=True)
    p.add_argument("--replicas", type=int, default=10000)

    p = sub.add_parser("bounds", parents=[c], help="lower bounds and regime predictions")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--lam", type=float, default=50.0)
    p.add_argument("--t", type=float, default=None, help="time for the certificate")
    p.add_argument("--exact", action="store_true", help="also compute the exact TV at t")

    p = sub.add_parser("couple", parents=[c], help="coupled count chains and copycat tail")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--x0", type=int, default=None)
    p.add_argument("--y0", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--replicas", type=int, default=2000)

    p = sub.add_parser("profile", parents=[c], help="exact TV profile and cutoff ratios")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--eps", type=_floats, default=[0.25])
    p.add_argument("--cutoff", type=_pairs, default=[(0.1, 0.9)], help="pairs like 0.1:0.9")

    p = sub.add_parser("exclusion", parents=[c], help="labelled exclusion on the complete graph")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--replicas", type=int, default=10000)
    p.add_argument("--factor", type=float, default=None, help="purple check at factor * n log k")
    p.add_argument("--negcorr-replicas", type=int, default=0)

    p = sub.add_parser("bbb", parents=[c], help="bounded bad bottleneck search")
    p.add_argument("--kind", default="dumbbell",
                   choices=["dumbbell", "symmetrized", "half_symmetrized"])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--tmix", type=float, default=None, help="mixing-time estimate (default: predicted)")

    p = sub.add_parser("compare", parents=[c], help="L on the dumbbell against a symmetrized variant")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--against", default="symmetrized", choices=["symmetrized", "half_symmetrized"])
    p.add_argument("--t", type=_ints, default=None)
    p.add_argument("--replicas", type=int, default=4000)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Load ``--config`` and turn its entries into subparser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return argv
    rest, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--config":
            skip = True
        elif not a.startswith("--config="):
            rest.append(a)
    argv = rest
    try:
        cfg = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {known.config}: {exc}") from None
    _require(isinstance(cfg, dict), "config must be a JSON object")
    cfg = dict(cfg)
    params = cfg.pop("params", {}) or {}
    _require(isinstance(params, dict), "config 'params' must be an object")
    cfg.update(params)
    command = cfg.pop("command", None)
    if not any(a in COMMANDS for a in argv):
        _require(command is not None, "no subcommand given on the command line or in the config")
        argv = [command] + list(argv)
    name = next(a for a in argv if a in COMMANDS)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[name]
    dests = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        _require(dest in dests and dest not in ("help", "config"), f"unknown config key {key!r}")
        act = dests[dest]
        if isinstance(val, list) and act.type in (_floats, _ints, _pairs):
            val = ",".join(str(v) for v in val)
        if act.type is not None and isinstance(val, (str, int, float)) and not isinstance(val, bool):
            val = act.type(val)
        defaults[dest] = val
        act.required = False
    sp.set_defaults(**defaults)
    return argv


# -- helpers -------------------------------------------------------------------------

def _output_dir(args) -> Path:
    return Path(args.output or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _formats(args) -> set[str]:
    f = {x.strip().lower() for x in str(args.format).split(",") if x.strip()}
    bad = f - set(FORMATS)
    _require(not bad, f"unknown format(s) {sorted(bad)}")
    return f


def _config_dict(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items())}


def _set_workers(n: int) -> None:
    import numba
    if n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


class Report:
    """Collects what a command writes and renders its one-line summary."""

    def __init__(self, args):
        from .outputs import provenance
        self.args = args
        self.dir = _output_dir(args)
        self.formats = _formats(args)
        self.prov = provenance(args.command, _config_dict(args), args.seed)
        self.written: list[Path] = []

    def json(self, payload: dict):
        if "json" in self.formats:
            from .outputs import write_json
            self.written.append(write_json(self.dir / f"{self.args.command}.json", payload, self.prov))

    def csv(self, schema: str, columns, rows, suffix: str = ""):
        if "csv" in self.formats:
            from .outputs import write_csv
            name = f"{self.args.command}{suffix}.csv"
            self.written.append(write_csv(self.dir / name, schema, columns, rows, self.prov))

    def figure(self, draw, suffix: str = ""):
        for fmt in ("svg", "png"):
            if fmt in self.formats:
                self.written.append(draw(self.dir / f"{self.args.command}{suffix}.{fmt}"))

    def summary(self, text: str) -> str:
        names = ",".join(p.name for p in self.written) or "nothing written"
        return f"{self.args.command}: {text} [{self.prov['config_hash']}] -> {self.dir}/{{{names}}}"


def _check_nm(n, m, m_min=1):
    _require(n >= 1, "n must be >= 1")
    _require(m_min <= m <= n, f"need {m_min} <= m <= n")


def _check_eps(eps):
    _require(len(eps) > 0, "need at least one eps")
    for e in eps:
        _require(0 < e < 1, "eps must lie in (0, 1)")


def _check_replicas(r, lo=1):
    _require(r >= lo, f"replicas must be >= {lo}")


# -- commands ------------------------------------------------------------------------

def cmd_graph(args, rep: Report) -> str:
    from .graphs import COMPLETE, make_graph
    _require(args.n >= 2, "n must be >= 2")
    if args.kind != COMPLETE:
        _check_nm(args.n, args.m)
    g = make_graph(args.kind, args.n, args.m)
    classes = g.vertex_classes()
    reps = [c[0] for c in classes]
    payload = dict(kind=g.kind, n=g.n, m=g.m, N=g.N, edge_mass_total=g.edge_mass_total,
                   edge_count=g.edge_count, n_bridges=g.n_bridges, bridge_weight=g.bridge_weight,
                   vertex_classes=[dict(representative=v, size=len(c), weighted_degree=g.weighted_degree(v))
                                   for v, c in zip(reps, classes)])
    rep.json(payload)
    if g.edge_count <= 200_000:
        rep.csv("ipmix-edges/1", ["u", "v", "weight"],
                ((u, v, str(w)) for u, v, w in g.edges()))
    from . import plotting
    rep.figure(lambda p: plotting.bars([f"{v} (x{len(c)})" for v, c in zip(reps, classes)],
                                       [float(g.weighted_degree(v)) for v in reps], p,
                                       title=f"{g.kind}({g.n}, {g.m})", ylabel="weighted degree"))
    return f"{g.kind} n={g.n} m={g.m} N={g.N} edge_mass={g.edge_mass_total}"


def _default_times(n, m):
    """Geometric grid around the exact mixing time of the count chain."""
    from . import analytics as an
    from .lumped import bernoulli_laplace_chain, tmix_worst
    from .mixing import geometric_grid
    tm = tmix_worst(bernoulli_laplace_chain(n, m, an.edge_mass(n, m)), 0.25)[0]
    return [0] + list(geometric_grid(max(tm, 1), 0.05, 4.0, 1.4))


def cmd_simulate(args, rep: Report) -> str:
    from .mixing import ProcessSpec, _stationary, plugin_tv, simulate_statistic
    _check_nm(args.n, args.m)
    _check_replicas(args.replicas, 2)
    times = args.t if args.t else _default_times(args.n, args.m)
    _require(all(t >= 0 for t in times), "times must be non-negative")
    _require(args.trajectory >= 0 and args.stride >= 0, "trajectory and stride must be >= 0")
    spec = ProcessSpec(args.kind, args.n, args.m)
    times = np.asarray(sorted(set(int(t) for t in times)), dtype=np.int64)
    X = simulate_statistic(spec, args.statistic, times, args.replicas, args.seed)
    support, pmf = _stationary(spec, args.statistic)
    rng = np.random.default_rng(args.seed)
    rows, d, se = [], [], []
    for j, t in enumerate(times):
        est, s, raw = plugin_tv(X[:, j], support, pmf, rng)
        d.append(est)
        se.append(s)
        rows.append((int(t), float(X[:, j].mean()), float(X[:, j].std(ddof=1)), est, s, raw))
    rep.csv("ipmix-simulate/2", ["t", "mean", "sd", "tv", "tv_se", "tv_plugin"], rows)
    payload = dict(kind=args.kind, n=args.n, m=args.m, statistic=args.statistic,
                   replicas=args.replicas, times=times, tv=d, tv_se=se)
    if args.trajectory:
        from .dynamics import identity_configuration, run_trajectory
        g = spec.graph
        _, stats = run_trajectory(identity_configuration(g.N), g, args.trajectory,
                                  rng=args.seed, stride=args.stride)
        payload["trajectory"] = dict(t=stats.t, L=stats.L, bridge_count=stats.bridge_count,
                                     fixed_points=stats.fixed_points)
        if "csv" in rep.formats and args.stride:
            from .outputs import atomic_write_text
            rep.written.append(atomic_write_text(rep.dir / "simulate-trajectory.csv", stats.to_csv()))
    rep.json(payload)
    from . import plotting
    pos = times > 0
    rep.figure(lambda p: plotting.tv_curve(times[pos], np.array(d)[pos], p, eps=(0.25,),
                                           se=np.array(se)[pos],
                                           title=f"{args.statistic} on {args.kind}({args.n}, {args.m})"))
    return f"{args.statistic} on {args.kind}({args.n},{args.m}) tv[last]={d[-1]:.4f}"


def cmd_lumped(args, rep: Report) -> str:
    from . import analytics as an
    from .lumped import (bernoulli_laplace_chain, closed_form_eigenvalues, eigenvalues,
                         g_prime_single_particle_chain, pair_chain, single_particle_chain,
                         spectral_gap, tmix_worst, tv_curve)
    from .mixing import geometric_grid
    _check_nm(args.n, args.m, 2 if args.chain == "pair" else 1)
    _check_eps(args.eps)
    E = an.edge_mass(args.n, args.m)
    build = dict(bl=bernoulli_laplace_chain, single=single_particle_chain, pair=pair_chain,
                 gprime=g_prime_single_particle_chain)[args.chain]
    chain = build(args.n, args.m, E)
    gap = spectral_gap(chain)
    tm, starts = {}, {}
    for e in args.eps:
        tm[e], starts[e] = tmix_worst(chain, e)
    payload = dict(chain=args.chain, n=args.n, m=args.m, E_mass=E, states=chain.size,
                   tmix={str(e): tm[e] for e in args.eps}, start={str(e): starts[e] for e in args.eps},
                   gap=gap.gap, eigenvalues=eigenvalues(chain))
    cf = closed_form_eigenvalues(chain)
    if cf is not None:
        payload["closed_form_eigenvalues"] = [float(x) for x in cf]
    text = f"{args.chain}({args.n},{args.m}) " + " ".join(f"tmix({e})={tm[e]}" for e in args.eps)
    if args.chain == "bl":
        pred = an.regime_prediction(args.n, args.m, min(args.eps))
        ratio = {str(e): tm[e] / pred.predicted_tmix for e in args.eps}
        payload.update(regime=pred.regime, predicted=pred.predicted_tmix,
                       scale_only=pred.scale_only, ratio=ratio,
                       product_condition={str(e): an.product_condition(gap.gap, tm[e]) for e in args.eps})
        text += f" regime={pred.regime} ratio={ratio[str(min(args.eps))]:.4f}"
    rep.json(payload)
    e0 = min(args.eps)
    times = geometric_grid(max(tm[e0], 1), 0.1, 3.0, 1.15)
    d = tv_curve(chain, starts[e0], times)
    rep.csv("ipmix-tv/1", ["t", "tv"], zip(times.tolist(), d.tolist()))
    from . import plotting
    rep.figure(lambda p: plotting.tv_curve(times, d, p, eps=args.eps,
                                           title=f"{args.chain} chain ({args.n}, {args.m})"))
    chain.clear_cache()
    return text


def cmd_moments(args, rep: Report) -> str:
    from . import analytics as an
    from .mixing import moment_check
    _check_nm(args.n, args.m, 2)
    _check_replicas(args.replicas, 2)
    _require(all(t >= 0 for t in args.t), "times must be non-negative")
    rows = moment_check(args.n, args.m, args.t, args.replicas, args.seed)
    rep.csv("ipmix-moments/1", ["t", "quantity", "mc", "se", "formula", "z"],
            ((r.t, r.quantity, r.mc, r.se, r.formula, r.z) for r in rows))
    zmax = max((abs(r.z) for r in rows), default=0.0)
    rep.json(dict(n=args.n, m=args.m, replicas=args.replicas, max_abs_z=zmax,
                  rows=[dict(t=r.t, quantity=r.quantity, mc=r.mc, se=r.se, formula=r.formula, z=r.z)
                        for r in rows]))
    Lrows = [r for r in rows if r.quantity == "L_mean" and r.t > 0]
    if Lrows:
        E = an.edge_mass(args.n, args.m)
        from . import plotting
        rep.figure(lambda p: plotting.moments([r.t for r in Lrows], [r.mc for r in Lrows],
                                              [r.se for r in Lrows],
                                              lambda t: an.Lt_moments(args.n, args.m, E, t)[0], p,
                                              title=f"symmetrized ({args.n}, {args.m})"))
    return f"({args.n},{args.m}) {len(rows)} moments, max |z| = {zmax:.2f}"


def cmd_bounds(args, rep: Report) -> str:
    from . import analytics as an
    from .graphs import make_graph
    from .mixing import exact_tv_at, lower_bound_certificate
    _check_nm(args.n, args.m)
    _require(args.lam > 0, "lam must be positive")
    E = an.edge_mass(args.n, args.m)
    t = an.t_n_lambda(args.n, args.m, E, args.lam) if args.t is None else args.t
    _require(t >= 0, "t must be non-negative")
    pred = an.regime_prediction(args.n, args.m)
    w = an.wilson_bound(args.n, args.m, E)
    g = make_graph("dumbbell", args.n, args.m)
    cert = lower_bound_certificate(args.n, args.m, t, args.lam)
    s = cert.separation
    payload = dict(n=args.n, m=args.m, E_mass=E, regime=pred.regime, predicted_tmix=pred.predicted_tmix,
                   wilson=dict(value=w.value, raw=w.raw, vacuous=w.vacuous, asymptotic=w.asymptotic,
                               closed_form=an.wilson_closed_form(args.n, args.m, E)),
                   single_gap=an.single_gap(args.n, args.m, E),
                   relaxation_lower_bound=an.bottleneck_relaxation_bound(g, args.n + 1),
                   t=t, lam=args.lam, t_n_lambda=an.t_n_lambda(args.n, args.m, E, args.lam),
                   certificate=cert.value, p_chain=s.p_chain, p_stationary=s.p_stationary,
                   threshold=s.threshold)
    text = f"({args.n},{args.m}) certificate={cert.value:.4f} at t={t:.6g}"
    if args.exact:
        tv = exact_tv_at(args.n, args.m, int(round(t)))
        payload["exact_tv"] = tv
        text += f" exact_tv={tv:.4f}"
    rep.json(payload)
    ts = np.geomspace(max(t, 1) / 4, max(t, 1) * 2, 60)
    cv = [lower_bound_certificate(args.n, args.m, x, args.lam).value for x in ts]
    rep.csv("ipmix-certificate/1", ["t", "certificate"], zip(ts.tolist(), cv))
    from . import plotting
    rep.figure(lambda p: plotting.tv_curve(ts, cv, p, title=f"certificate, lambda={args.lam:g}"))
    return text


def cmd_couple(args, rep: Report) -> str:
    from . import analytics as an
    from .couplings import (check_thinning, coalescence_tail, drift, empirical_drift,
                            fit_tail_exponent)
    from .lumped import InvariantViolation
    n, m = args.n, args.m
    _check_nm(n, m)
    _check_replicas(args.replicas, 2)
    try:
        check_thinning(n, m)
    except InvariantViolation as exc:
        raise ValidationError(str(exc)) from None
    x0 = n if args.x0 is None else args.x0
    y0 = max(0, n - m) if args.y0 is None else args.y0
    _require(max(0, n - m) <= y0 <= x0 <= n, f"need {max(0, n - m)} <= y0 <= x0 <= {n}")
    E = an.edge_mass(n, m)
    M = E * n / m
    horizon = args.horizon or int(max(3 * E * n * m / (n + m) * math.log(max(m, 2)), 1000 * M))
    _require(horizon >= 1, "horizon must be >= 1")
    r = coalescence_tail(n, m, E, x0, y0, horizon, args.replicas, args.seed)
    slope = None
    if horizon >= 100 * M:
        # the copycat tail is fitted over u in [10, 1000] multiples of M = E n / m
        try:
            slope = fit_tail_exponent(r.tauL, M, 10.0, min(1e3, horizon / M))[0]
        except ValueError:
            pass
    mu, se = empirical_drift(n, m, E, [(x0, y0)], 20000, args.seed)
    payload = dict(n=n, m=m, x0=x0, y0=y0, horizon=horizon, replicas=args.replicas,
                   bound_violations=r.bound_violations, ordering_violations=r.ordering_violations,
                   replay_violations=r.replay_violations,
                   hitting_order_violations=r.order_violations_of_hitting_times(),
                   tail_exponent=slope, drift_formula=drift(n, m, E, x0, y0),
                   drift_mc=float(mu[0]), drift_se=float(se[0]),
                   coalesced_fraction=float(np.mean(r.tauD >= 0)))
    rep.json(payload)
    rep.csv("ipmix-couple/1", ["t", "mean_D", "se_D", "bound", "p_tauD_gt", "p_tauL_gt"],
            zip(r.times.tolist(), r.mean_D.tolist(), r.se_D.tolist(), r.bound.tolist(),
                r.p_tauD_gt.tolist(), r.p_tauL_gt.tolist()))
    from . import plotting
    rep.figure(lambda p: plotting.tail(r.times, {"E[D_t]": r.mean_D, "P(tau_D > t)": r.p_tauD_gt,
                                                 "P(tau_L > t)": r.p_tauL_gt}, p,
                                       title=f"coupling ({n}, {m})", bound=r.bound))
    viol = r.bound_violations + r.ordering_violations + r.replay_violations
    exp = "n/a" if slope is None else f"{slope:.3f}"
    return f"({n},{m}) violations={viol} tail_exponent={exp}"


def cmd_profile(args, rep: Report) -> str:
    from .mixing import exact_profile
    _check_nm(args.n, args.m)
    _check_eps(args.eps)
    for a, b in args.cutoff:
        _check_eps([a, b])
    prof = exact_profile(args.n, args.m, tuple(args.eps), cutoff_pairs=tuple(args.cutoff))
    ratios = {f"{a}:{b}": v for (a, b), v in prof.cutoff_ratio.items()}
    payload = dict(n=args.n, m=args.m, tmix={str(k): v for k, v in prof.tmix.items()},
                   cutoff_ratio=ratios, start=prof.start, regime=prof.prediction.regime,
                   predicted=prof.prediction.predicted_tmix,
                   ratio_to_prediction={str(e): prof.ratio_to_prediction(e) for e in args.eps})
    rep.json(payload)
    rep.csv("ipmix-profile/1", ["t", "tv"], ((t, d) for t, d, _ in prof.to_rows()))
    from . import plotting
    rep.figure(lambda p: plotting.tv_curve(prof.times, prof.d_exact, p,
                                           eps=sorted(set(args.eps) | {e for pr in args.cutoff for e in pr}),
                                           title=f"exact profile ({args.n}, {args.m})"))
    e0 = min(args.eps)
    return (f"({args.n},{args.m}) tmix({e0})={prof.tmix[e0]} "
            + " ".join(f"ratio[{k}]={v:.3f}" for k, v in ratios.items()))


def cmd_exclusion(args, rep: Report) -> str:
    from . import analytics as an
    from .dynamics import exclusion_replicas
    from .mixing import exclusion_mixing_experiment
    _require(args.n >= 2 and 2 <= args.k <= args.n, "need 2 <= k <= n")
    _check_eps([args.eps])
    _check_replicas(args.replicas, 2)
    _require(args.negcorr_replicas >= 0, "negcorr replicas must be >= 0")
    r = exclusion_mixing_experiment(args.n, args.k, args.eps, args.replicas, args.seed, args.factor)
    payload = dict(n=r.n, k=r.k, eps=r.eps, count_tmix=r.count_tmix, half_n_log_n=r.half_n_log_n,
                   count_ratio=r.count_ratio, T=r.T, purple_mc=r.purple_mc, purple_se=r.purple_se,
                   purple_formula=r.purple_formula, purple_z=r.purple_z, note=r.note)
    text = f"({args.n},{args.k}) count_ratio={r.count_ratio if r.count_ratio is None else round(r.count_ratio, 4)} purple_z={r.purple_z:.2f}"
    if args.negcorr_replicas:
        nc = an.negcorr_check(args.n, args.k, r.T, args.negcorr_replicas, args.seed)
        payload["negcorr"] = dict(joint=nc.joint, product=nc.product, se=nc.se, z=nc.z,
                                  holds=nc.holds, exact_joint=nc.exact_joint,
                                  exact_product=nc.exact_product)
        text += f" negcorr_z={nc.z:.2f}"
    rep.json(payload)
    Ts = np.unique(np.linspace(0, 2 * r.T, 21).astype(np.int64))
    pur = exclusion_replicas(args.n, args.k, Ts, min(args.replicas, 4000), args.seed).purple
    rows = [(int(T), float(pur[:, j].mean()), float(pur[:, j].std(ddof=1) / math.sqrt(len(pur))),
             an.purple_mean(args.n, args.k, int(T))) for j, T in enumerate(Ts)]
    rep.csv("ipmix-purple/1", ["T", "purple_mc", "se", "purple_formula"], rows)
    from . import plotting

    def draw(p):
        fig, ax = plotting.new_axes()
        ax.errorbar(Ts, [x[1] for x in rows], yerr=[2 * x[2] for x in rows], fmt="o", ms=3,
                    color="C1", label="Monte Carlo")
        ax.plot(Ts, [x[3] for x in rows], color="C0", label="formula")
        ax.set_xlabel("T")
        ax.set_ylabel("purple count")
        ax.legend(frameon=False)
        return plotting.save(fig, p)
    rep.figure(draw)
    return text


def cmd_bbb(args, rep: Report) -> str:
    from . import analytics as an
    from .graphs import make_graph
    _check_nm(args.n, args.m)
    K = min(args.m, 6) if args.K is None else args.K
    _require(1 <= K <= 6, "K must lie in 1..6")
    tm = an.regime_prediction(args.n, args.m).predicted_tmix if args.tmix is None else args.tmix
    _require(tm > 0, "tmix must be positive")
    g = make_graph(args.kind, args.n, args.m)
    r = an.bbb_search(g, tm, K)
    payload = dict(kind=args.kind, n=args.n, m=args.m, K=K, tmix_estimate=tm, found=r is not None)
    if r is not None:
        payload.update(W=list(r.W), boundary=r.boundary_size, threshold=r.threshold,
                       relaxation_lower_bound=r.relaxation_lower_bound)
    rep.json(payload)
    # the same search at every smaller size cap, to show where a bottleneck appears
    rows = []
    for k in range(1, K + 1):
        rk = r if k == K else an.bbb_search(g, tm, k)
        thr = k * float(g.edge_mass_total) / tm
        rows.append((k, thr, rk is not None, float(rk.boundary_size) if rk else float("nan"),
                     " ".join(map(str, rk.W)) if rk else ""))
    rep.csv("ipmix-bbb/1", ["K", "threshold", "found", "boundary", "W"], rows)
    from . import plotting
    rep.figure(lambda p: plotting.bars([f"K={x[0]}" for x in rows], [x[1] for x in rows], p,
                                       title=f"bottleneck threshold, {args.kind}({args.n}, {args.m})",
                                       ylabel="allowed boundary"))
    if r is None:
        return f"{args.kind}({args.n},{args.m}) K={K}: no bottleneck"
    return f"{args.kind}({args.n},{args.m}) K={K}: W={list(r.W)} boundary={r.boundary_size}"


def _tv_between(x, y) -> float:
    lo = int(min(x.min(), y.min()))
    hi = int(max(x.max(), y.max()))
    a = np.bincount(x - lo, minlength=hi - lo + 1) / len(x)
    b = np.bincount(y - lo, minlength=hi - lo + 1) / len(y)
    return 0.5 * float(np.abs(a - b).sum())


def _ks(x, y) -> float:
    lo = int(min(x.min(), y.min()))
    hi = int(max(x.max(), y.max()))
    a = np.cumsum(np.bincount(x - lo, minlength=hi - lo + 1)) / len(x)
    b = np.cumsum(np.bincount(y - lo, minlength=hi - lo + 1)) / len(y)
    return float(np.abs(a - b).max())


def cmd_compare(args, rep: Report) -> str:
    from . import analytics as an
    from .mixing import ProcessSpec, simulate_statistic
    _check_nm(args.n, args.m)
    _check_replicas(args.replicas, 2)
    times = args.t if args.t else _default_times(args.n, args.m)[1::3]
    _require(all(t >= 0 for t in times), "times must be non-negative")
    times = np.asarray(sorted(set(int(t) for t in times)), dtype=np.int64)
    X = simulate_statistic(ProcessSpec("dumbbell", args.n, args.m), "L", times, args.replicas, args.seed)
    Y = simulate_statistic(ProcessSpec(args.against, args.n, args.m), "L", times, args.replicas,
                           args.seed + 1)
    st = an.stationary_L(args.n, args.m)
    sup, pmf = st.support, st.pmf()
    stat = np.repeat(sup, np.maximum(0, np.round(pmf * 10 ** 6)).astype(np.int64))
    rows = []
    for j, t in enumerate(times):
        x, y = X[:, j], Y[:, j]
        rows.append((int(t), float(x.mean()), float(y.mean()), _tv_between(x, y), _ks(x, y),
                     _tv_between(x, stat), _tv_between(y, stat)))
    cols = ["t", "mean_dumbbell", f"mean_{args.against}", "tv_between", "ks_between",
            "tv_dumbbell_stationary", f"tv_{args.against}_stationary"]
    rep.csv("ipmix-compare/1", cols, rows)
    rep.json(dict(n=args.n, m=args.m, against=args.against, replicas=args.replicas,
                  rows=[dict(zip(cols, r)) for r in rows]))
    from . import plotting
    j = len(times) // 2
    rep.figure(lambda p: plotting.histograms({"dumbbell": X[:, j], args.against: Y[:, j]}, sup, pmf, p,
                                             title=f"L at t={int(times[j])}"))
    worst = max(r[3] for r in rows)
    return f"dumbbell vs {args.against} ({args.n},{args.m}) max tv_between={worst:.4f}"


HANDLERS = dict(graph=cmd_graph, simulate=cmd_simulate, lumped=cmd_lumped, moments=cmd_moments,
                bounds=cmd_bounds, couple=cmd_couple, profile=cmd_profile, exclusion=cmd_exclusion,
                bbb=cmd_bbb, compare=cmd_compare)


def main(argv=None) -> int:
    from .lumped import InvariantViolation
    # numba falls back to another threading layer; the notice is noise on stderr
    warnings.filterwarnings("ignore", message="The TBB threading layer")
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except ValidationError as exc:
        print(f"ipmix: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        _require(args.workers >= 0, "workers must be >= 0")
        rep = Report(args)
        _set_workers(args.workers)
        line = HANDLERS[args.command](args, rep)
    except (ValidationError, ValueError) as exc:
        print(f"ipmix {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"ipmix {args.command}: invariant violated: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001
        print(f"ipmix {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(rep.summary(line))
    return 0


if __name__ == "__main__":
    sys.exit(main())
