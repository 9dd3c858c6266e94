"""Command-line front end.

Every subcommand reads one configuration (``--config`` JSON, then flag
overrides), writes a CSV headed by a manifest comment line to ``--out`` and a
short summary to stdout. Exit codes: 0 ok, 1 validation failure (JSON error on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass

from formcount import __version__
from formcount._parallel import resolve_workers
from formcount.discrepancy import (EuclideanBall, FormRegion, exceedance_from_samples,
                                   second_moment_experiment)
from formcount.experiments import (ExperimentConfig, SeriesPoint, UniformPoint, fit_exponent,
                                   fixed_target_run, n_of_t, rows_csv, supmin_run,
                                   uniform_target_run)
from formcount.forms import Interval
from formcount.geometry import compute_cf, mc_volume, predicted_volume
from formcount.lattice import count_in_interval, histogram

COMMANDS = ("cf", "volume", "count", "histogram", "rogers", "fixed-target", "uniform-target",
            "supmin", "verify")


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    version: str
    workers: int
    wall_time: float = 0.0

    def line(self) -> str:
        # wall time is left out so reruns are byte-identical
        return (f"# formcount command={self.command} version={self.version} "
                f"config_hash={self.config_hash} seed={self.seed} workers={self.workers}")


def _r(x) -> str:
    return repr(float(x))


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _config_flags(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    g = p.add_argument_group("configuration (mirrors config JSON keys)")
    g.add_argument("--p", type=int, default=S)
    g.add_argument("--q", type=int, default=S)
    g.add_argument("--d", type=int, default=S)
    g.add_argument("--identity", action="store_true", default=S, help="use g = identity")
    g.add_argument("--g", type=_floats, default=S, help="row-major matrix, comma separated")
    g.add_argument("--g-seed", type=int, default=S, help="random g = exp(epsilon X)")
    g.add_argument("--epsilon", type=float, default=S)
    g.add_argument("--kappa", type=float, default=S)
    g.add_argument("--c", type=float, default=S)
    g.add_argument("--xi", type=float, default=S)
    g.add_argument("--eta", type=float, default=S)
    g.add_argument("--n-cap", type=float, default=S, help="N(t) = min(n_cap, t^eta)")
    g.add_argument("--kappa-prime", type=float, default=S)
    g.add_argument("--t-grid", type=_floats, default=S)
    g.add_argument("--nu-claimed", type=float, default=S)
    g.add_argument("--volume-samples", "--samples", dest="volume_samples", type=int, default=S)
    g.add_argument("--prime", type=int, default=S)
    g.add_argument("--k-lattices", type=int, default=S)
    g.add_argument("--seed", "--rng-seed", dest="rng_seed", type=int, default=S)
    g.add_argument("--spot-checks", type=int, default=S)
    g.add_argument("--lo", type=float, default=S)
    g.add_argument("--hi", type=float, default=S)
    g.add_argument("--t", type=float, default=S)
    g.add_argument("--width", type=float, default=S)
    g.add_argument("--dim", type=int, default=S)
    g.add_argument("--volumes", type=_floats, default=S)
    g.add_argument("--region", choices=("ball", "form"), default=S)
    g.add_argument("--exceed-t", type=float, default=S)
    r = p.add_argument_group("run")
    r.add_argument("--config", help="JSON config file; flags override its keys")
    r.add_argument("--workers", type=int, default=None,
                   help="worker threads (default: $FORMCOUNT_WORKERS or all cores)")
    r.add_argument("--out", help="CSV output path ('-' for stdout)")
    r.add_argument("--summary", help="JSON summary output path")
    r.add_argument("--quiet", action="store_true", help="no stdout summary")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="formcount",
                                     description="Counting values of indefinite forms at integer points.")
    parser.add_argument("--version", action="version", version=f"formcount {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    helps = {
        "cf": "Monte Carlo estimate of the leading volume constant c_F",
        "volume": "Monte Carlo volume of F^-1(I) in B_T against c_F |I| T^(n-d)",
        "count": "count integer points with F(v) in [lo, hi) and ||v|| <= t",
        "histogram": "bucket F-values over the ball of radius t",
        "rogers": "random-lattice mean count, second moment and exceedance fraction",
        "fixed-target": "counts in shrinking intervals I_t along t_grid",
        "uniform-target": "worst window over all intervals of length t^-kappa in [-N, N)",
        "supmin": "sup over |xi| <= N of the distance to the nearest value",
        "verify": "run the acceptance suite",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name], description=helps[name])
        _config_flags(sp)
        if name == "verify":
            sp.add_argument("--only", type=_ints, help="comma-separated criterion numbers")
    return parser


def load_config(args) -> ExperimentConfig:
    obj = {}
    if args.config:
        with open(args.config) as fh:
            obj = json.load(fh)
        if not isinstance(obj, dict):
            raise ValueError("config file must hold a JSON object")
    keys = set(ExperimentConfig.__dataclass_fields__)
    for k, v in vars(args).items():
        if k in keys:
            obj[k] = v
    return ExperimentConfig.from_json(obj)


class Failure(Exception):
    """Validation failure detected after a successful computation."""


# --- subcommands ------------------------------------------------------------
# each returns (csv text without manifest, summary lines, summary JSON)

def _interval(cfg) -> Interval:
    return Interval(cfg.lo, cfg.hi)


def _radii(cfg) -> list:
    return [cfg.t] if cfg.t is not None else list(cfg.t_grid)


def cmd_cf(cfg, workers):
    F = cfg.form()
    est = compute_cf(F, cfg.volume_samples, cfg.rng_seed, workers)
    csv = ("p,q,d,form_hash,samples,seed,value,stderr\n"
           f"{cfg.p},{cfg.q},{cfg.d},{F.form_hash()},{est.samples},{cfg.rng_seed},"
           f"{_r(est.value)},{_r(est.stderr)}\n")
    return csv, [f"{est.value:.6f} ± {est.stderr:.6f}"], est.to_json()


def cmd_volume(cfg, workers):
    F = cfg.form()
    I = _interval(cfg)
    compute_cf(F, cfg.volume_samples, cfg.rng_seed, workers)
    rows, lines = ["T,lo,hi,mc_volume,mc_stderr,predicted,rel_dev"], []
    for T in _radii(cfg):
        est, err = mc_volume(F, I, T, cfg.volume_samples, cfg.rng_seed, workers)
        pred = predicted_volume(F, I, T)
        rel = abs(est - pred) / pred if pred > 0 else math.nan
        rows.append(f"{_r(T)},{_r(I.lo)},{_r(I.hi)},{_r(est)},{_r(err)},{_r(pred)},{_r(rel)}")
        lines.append(f"T={T:g} mc={est:.4f} ± {err:.4f} predicted={pred:.4f} rel_dev={rel:.4f}")
    return "\n".join(rows) + "\n", lines, {"cf": F.cf_cache.to_json()}


def cmd_count(cfg, workers):
    if cfg.t is None:
        raise ValueError("count needs --t")
    F = cfg.form()
    rep = count_in_interval(F, _interval(cfg), cfg.t, workers)
    csv = ("t,lo,hi,count,points_enumerated,boundary_cases,exact\n"
           f"{_r(rep.t)},{_r(cfg.lo)},{_r(cfg.hi)},{rep.count},{rep.points_enumerated},"
           f"{rep.boundary_cases},{int(rep.exact)}\n")
    summary = {"count": rep.count, "points_enumerated": rep.points_enumerated,
               "boundary_cases": rep.boundary_cases, "exact": rep.exact}
    return csv, [str(rep.count)], summary


def cmd_histogram(cfg, workers):
    if cfg.t is None:
        raise ValueError("histogram needs --t")
    F = cfg.form()
    h = histogram(F, cfg.t, _interval(cfg), cfg.width, workers)
    lines = [f"{len(h.buckets)} buckets, {h.in_range()} in range, overflow "
             f"{h.overflow_lo}/{h.overflow_hi}, boundary flags {h.boundary_flags}"]
    return h.to_csv(seed=cfg.rng_seed), lines, {"buckets": h.buckets.tolist()}


def cmd_rogers(cfg, workers):
    if cfg.region == "form":
        regions = [FormRegion(cfg.sig, _interval(cfg), cfg.t if cfg.t is not None else cfg.t_grid[-1],
                              cfg.volume_samples, cfg.rng_seed)]
    else:
        regions = [EuclideanBall(cfg.dim, float(V)) for V in cfg.volumes]
    rows, lines, summary = ["seed,count,volume,disc"], [], []
    for region in regions:
        rep = second_moment_experiment(region, cfg.k_lattices, cfg.prime, cfg.rng_seed, workers)
        T = cfg.exceed_t if cfg.exceed_t is not None else 10 * math.sqrt(rep.vol)
        frac, err = exceedance_from_samples(rep.samples, T)
        rows += [f"{s.lattice_seed},{s.count},{_r(s.volume)},{_r(s.disc)}" for s in rep.samples]
        info = rep.to_json() | {"exceed_t": T, "exceedance": frac, "exceedance_stderr": err,
                                "chebyshev_bound": rep.mean_sq_disc / T**2}
        summary.append(info)
        lines.append(f"V={rep.vol:g} mean_count={rep.mean_count:.3f} ± {rep.count_stderr:.3f} "
                     f"ratio={rep.ratio:.3f} exceedance(T={T:g})={frac:.4f}")
    return "\n".join(rows) + "\n", lines, summary


def cmd_fixed_target(cfg, workers):
    pts = fixed_target_run(cfg, workers=workers)
    lines = [f"t={p.t:g} count={p.count} prediction={p.prediction:.3f} "
             f"normalized_error={p.normalized_error:.5f}" for p in pts]
    good = [(p.t, p.normalized_error) for p in pts if p.normalized_error > 0]
    summary = {"points": [asdict(p) for p in pts]}
    if len(good) >= 3:
        slope, r2 = fit_exponent(good)
        lines.append(f"normalized error slope {slope:.3f} (r^2 {r2:.3f})")
        summary |= {"slope": slope, "r_squared": r2}
    return rows_csv(pts, SeriesPoint.COLUMNS), lines, summary


def cmd_uniform_target(cfg, workers):
    rep = uniform_target_run(cfg, workers=workers)
    lines = [f"t={p.t:g} N={p.N:g} windows={p.windows} worst=[{p.worst_lo:.5f},{p.worst_hi:.5f}) "
             f"rel_error={p.worst_rel_error:.5f}" for p in rep.points]
    agree = sum(c.agrees for c in rep.spot_checks)
    lines.append(f"spot checks: {agree}/{len(rep.spot_checks)} windows equal direct counts")
    summary = {"cf": rep.cf, "points": [asdict(p) for p in rep.points],
               "spot_checks": [asdict(c) for c in rep.spot_checks]}
    if agree != len(rep.spot_checks):
        raise Failure(json.dumps({"error": "window_mismatch", "spot_checks": summary["spot_checks"]}))
    return rows_csv(rep.points, UniformPoint.COLUMNS), lines, summary


def cmd_supmin(cfg, workers):
    F = cfg.form()
    rows, lines, summary = ["t,N,supmin,argmax_xi,finite,margin,values"], [], []
    for t in _radii(cfg):
        N = n_of_t(cfg, t)
        r = supmin_run(F, t, N, workers)
        rows.append(f"{_r(t)},{_r(N)},{_r(r.supmin)},{_r(r.argmax_xi)},{int(r.finite)},{_r(r.margin)},{r.values}")
        lines.append(f"t={t:g} N={N:g} supmin={r.supmin:.6g} at xi={r.argmax_xi:.6g}")
        summary.append(asdict(r) | {"t": t, "N": N})
    return "\n".join(rows) + "\n", lines, summary


def cmd_verify(cfg, workers, only=None):
    from formcount.acceptance import run_all

    results = run_all(only, workers, echo=lambda s: print(s, flush=True))
    rows = ["criterion,name,passed"] + [f"{r.number},{r.name},{int(r.passed)}" for r in results]
    failed = [r.number for r in results if not r.passed]
    summary = {"results": [asdict(r) for r in results], "failed": failed}
    return "\n".join(rows) + "\n", [f"{len(results) - len(failed)}/{len(results)} criteria pass"], summary


HANDLERS = {"cf": cmd_cf, "volume": cmd_volume, "count": cmd_count, "histogram": cmd_histogram,
            "rogers": cmd_rogers, "fixed-target": cmd_fixed_target,
            "uniform-target": cmd_uniform_target, "supmin": cmd_supmin}


def _write(path, text):
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _fail(exc) -> int:
    msg = str(exc)
    try:
        payload = json.loads(msg)
    except ValueError:
        payload = {"error": type(exc).__name__, "message": msg}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        cfg = load_config(args)
        workers = resolve_workers(args.workers)
        manifest = RunManifest(args.command, cfg.config_hash(), cfg.rng_seed, __version__, workers)
        if args.command == "verify":
            csv, lines, summary = cmd_verify(cfg, workers, args.only)
            ok = not summary["failed"]
        else:
            csv, lines, summary = HANDLERS[args.command](cfg, workers)
            ok = True
    except Failure as exc:
        return _fail(exc)
    except (ValueError, TypeError, FloatingPointError, OverflowError, OSError) as exc:
        return _fail(exc)
    manifest.wall_time = time.perf_counter() - t0
    if args.out:
        _write(args.out, manifest.line() + "\n" + csv)
    if args.summary:
        _write(args.summary, json.dumps({"manifest": asdict(manifest), "config": cfg.to_json(),
                                         "result": summary}, indent=2, default=str) + "\n")
    if not args.quiet:
        for line in lines:
            print(line)
        print(f"# wall_time={manifest.wall_time:.3f}s", file=sys.stderr)
    return 0 if ok else 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
