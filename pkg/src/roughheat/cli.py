"""Experiment front door: six subcommands driven by JSON configs.

Every writer here is deterministic for a fixed config and seed list:
floats go out through an explicit ``%.17e`` format, JSON reports sort
their keys, and no file carries a timestamp, so reruns are byte-identical.

Exit codes: 0 success, 1 config/validation failure, 2 divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .analysis import continuity_study, convergence_study, ito_compare
from .config import ConfigError, driver_descriptor, build_path, build_problem, load_raw, parse_config
from .driver import chen_defect, enhance_geometric, enhance_ito, sample_fbm
from .partition import run_removal, verify_bounds, weighted_sum
from .scheme import DivergenceError, solve

CHEN_TOL = 1e-10


# ---------------------------------------------------------------------------
# shared plumbing

def _apply_overrides(raw: dict, args) -> dict:
    """Fold --seed-list/--levels/--quad-offset/--out into the raw config."""
    if args.seed_list is not None:
        try:
            raw["seeds"] = [int(tok) for tok in args.seed_list.split(",") if tok]
        except ValueError:
            raise ConfigError("seeds", f"bad --seed-list {args.seed_list!r}")
    if args.levels is not None:
        lo, sep, hi = args.levels.partition("..")
        if not sep:
            raise ConfigError("levels", f"expected a..b, got {args.levels!r}")
        try:
            raw["n_min"], raw["n_max"] = int(lo), int(hi)
        except ValueError:
            raise ConfigError("levels", f"expected a..b, got {args.levels!r}")
    if args.quad_offset is not None:
        raw["q_off"] = args.quad_offset
    if args.out is not None:
        raw["out"] = args.out
    return raw


def _load_cfg(args):
    return parse_config(_apply_overrides(load_raw(args.config), args))


def _outdir(cfg) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _write_report(path: str, payload) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_definite(payload), indent=2, sort_keys=True))
        fh.write("\n")


def _definite(obj):
    """Round-trippable JSON: NaN/inf become null, numpy scalars plain."""
    if isinstance(obj, dict):
        return {k: _definite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_definite(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _write_csv(path: str, header: str, rows, preamble: str | None = None) -> None:
    with open(path, "w") as fh:
        if preamble:
            fh.write(preamble + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17e}"


# ---------------------------------------------------------------------------
# subcommands

def _cmd_solve(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg)
    for seed in cfg.seeds:
        prob = build_problem(cfg, build_path(cfg, seed))
        traj = solve(prob, cfg.n_max)
        base = os.path.join(out, f"trajectory_seed{seed}")
        times = traj.times
        _write_csv(
            base + ".csv",
            "t," + ",".join(f"c{k}" for k in range(1, cfg.K + 1)),
            ([times[i]] + list(traj.coeffs[i]) for i in range(len(times))),
            preamble=f"# K={cfg.K} G={cfg.G} representation=spectral",
        )
        _write_report(base + ".meta.json", {
            "n": cfg.n_max, "K": cfg.K, "G": cfg.G,
            "gamma": cfg.gamma, "gamma_prime": cfg.gamma_prime,
            "driver": driver_descriptor(cfg), "seed": seed,
        })
        print(f"seed {seed}: wrote {base}.csv ({len(times)} rows)")
    return 0


def _cmd_convergence(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg)
    rep = convergence_study(cfg)
    _write_csv(os.path.join(out, "rates.csv"), "level,error",
               zip(rep.levels, rep.errors))
    _write_report(os.path.join(out, "report.json"), {
        "levels": list(rep.levels), "errors": list(rep.errors),
        "beta_hat": rep.beta_hat, "residual": rep.residual,
        "beta_max": rep.beta_max, "exact": rep.exact,
        "per_seed": rep.per_seed,
    })
    for lv, err in zip(rep.levels, rep.errors):
        print(f"level {lv}: error {err:.6e}")
    print(f"beta_hat={rep.beta_hat:.4f} beta_max={rep.beta_max:.4f} "
          f"residual={rep.residual:.4f} exact={rep.exact}")
    return 0


def _cmd_continuity(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg)
    try:
        eps = [float(tok) for tok in args.eps.split(",") if tok]
    except ValueError:
        raise ConfigError("eps", f"bad --eps {args.eps!r}")
    rep = continuity_study(cfg, eps)
    _write_report(os.path.join(out, "report.json"), rep)
    _write_csv(os.path.join(out, "ratios.csv"), "eps,mean_ratio",
               ((e, r) for e, r in zip(rep["eps"], rep["mean_ratios"])
                if r is not None))
    for e, r in zip(rep["eps"], rep["mean_ratios"]):
        shown = "undefined (zero denominator)" if r is None else f"{r:.6f}"
        print(f"eps {e:g}: mean ratio {shown}")
    return 0


def _cmd_ito_compare(args) -> int:
    cfg = _load_cfg(args)
    out = _outdir(cfg)
    rep = ito_compare(cfg)
    _write_csv(os.path.join(out, "gaps.csv"), "level,ms_gap",
               zip(rep["levels"], rep["ms_gaps"]))
    _write_report(os.path.join(out, "report.json"), rep)
    for lv, g in zip(rep["levels"], rep["ms_gaps"]):
        print(f"level {lv}: ms gap {g:.6e}")
    return 0


def _cmd_partition(args) -> int:
    if args.N is None and args.sweep is None:
        raise ConfigError("N", "need --N or --sweep")
    if args.N is not None:
        trace = run_removal(args.N)
        counts = list(trace.counts[1:])
        print(f"M={trace.M}")
        print("A=" + ",".join(str(a) for a in counts[:-1]))
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            rep = verify_bounds(args.N)
            _write_csv(os.path.join(args.out, "trace.csv"), "N,r,A_r,slack",
                       ((args.N, r, a, s) for r, (a, s) in
                        enumerate(zip(rep.counts, rep.count_slack), start=1)))
    if args.sweep is not None:
        if args.out is None:
            raise ConfigError("out", "--sweep needs --out")
        os.makedirs(args.out, exist_ok=True)
        ns, n = [], 16
        while n <= args.sweep:
            ns.append(n)
            n *= 2
        rows = [(n, weighted_sum(n, args.kappa, args.mu, args.gamma_prime))
                for n in ns]
        _write_csv(os.path.join(args.out, "sweep.csv"), "N,weighted_sum", rows)
        for n, w in rows:
            print(f"N {n}: weighted sum {w:.6f}")
    return 0


def _cmd_validate_driver(args) -> int:
    if args.seeds < 1:
        raise ConfigError("seeds", "need at least one seed")
    rng = np.random.default_rng(0)
    J = 1 << args.n_f
    worst = 0.0
    for seed in range(args.seeds):
        path = sample_fbm(args.H, args.m, args.n_f, seed)
        enhanced = [("geometric", enhance_geometric(path))]
        if args.H == 0.5:
            enhanced.append(("ito", enhance_ito(path)))
        scale = 1.0 + np.abs(path.samples).max() ** 2
        for name, e in enhanced:
            top = 0.0
            for _ in range(args.triples):
                j = np.sort(rng.integers(0, J + 1, size=3))
                d = chen_defect(e, j[0] / J, j[1] / J, j[2] / J)
                top = max(top, float(np.abs(d).max()) / scale)
            print(f"seed {seed} {name}: max relative Chen defect {top:.3e}")
            worst = max(worst, top)
    print(f"worst {worst:.3e} (tolerance {CHEN_TOL:.1e})")
    return 0 if worst <= CHEN_TOL else 1


# ---------------------------------------------------------------------------
# parser and entry point

def _add_config_flags(sub) -> None:
    sub.add_argument("--config", required=True, help="JSON experiment config")
    sub.add_argument("--seed-list", default=None, help="comma-separated seeds, overrides config")
    sub.add_argument("--levels", default=None, help="a..b level range, overrides config")
    sub.add_argument("--quad-offset", type=int, default=None, help="quadrature offset, overrides config")
    sub.add_argument("--out", default=None, help="output directory, overrides config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roughheat",
        description="Experiment harness for the rough parabolic solver.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("solve", help="integrate one trajectory per seed")
    _add_config_flags(sub)
    sub.set_defaults(func=_cmd_solve)

    sub = subs.add_parser("convergence", help="dyadic self-convergence rate fit")
    _add_config_flags(sub)
    sub.set_defaults(func=_cmd_convergence)

    sub = subs.add_parser("continuity", help="perturbation ratios for data continuity")
    _add_config_flags(sub)
    sub.add_argument("--eps", default="1e-2,1e-3", help="comma-separated perturbation sizes")
    sub.set_defaults(func=_cmd_continuity)

    sub = subs.add_parser("ito-compare", help="Brownian scheme vs exponential-Euler reference")
    _add_config_flags(sub)
    sub.set_defaults(func=_cmd_ito_compare)

    sub = subs.add_parser("partition", help="point-removal schedule tables")
    sub.add_argument("--N", type=int, default=None, help="print M and the count sequence for one N")
    sub.add_argument("--sweep", type=int, default=None, help="weighted-sum sweep over N = 16, 32, ... up to this bound")
    sub.add_argument("--kappa", type=float, default=0.2)
    sub.add_argument("--mu", type=float, default=1.1)
    sub.add_argument("--gamma-prime", type=float, default=0.75)
    sub.add_argument("--out", default=None, help="output directory for trace/sweep CSVs")
    sub.set_defaults(func=_cmd_partition)

    sub = subs.add_parser("validate-driver", help="Chen-relation check on sampled drivers")
    sub.add_argument("--H", type=float, required=True, help="Hurst index")
    sub.add_argument("--seeds", type=int, default=4, help="number of seeds, 0..seeds-1")
    sub.add_argument("--n-f", type=int, default=10, help="fine dyadic level")
    sub.add_argument("--m", type=int, default=1, help="driver channels")
    sub.add_argument("--triples", type=int, default=100, help="random triples per driver")
    sub.set_defaults(func=_cmd_validate_driver)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; that code is reserved for divergence
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
