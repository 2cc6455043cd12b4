"""Seminorm estimators, reference integrators, and the four experiments.

Self-convergence errors are measured against a two-levels-finer run of the
same scheme; the classical and Ito references are exponential integrators
sharing the driver's increments.  Everything here is deterministic given
the config and seed list.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, build_path, build_problem
from .driver import DriverPath, driver_distance, enhance_geometric
from .operator_path import ConvRoughPath
from .scheme import DivergenceError, Problem, Trajectory, solve
from .spectral import Field, sobolev_norm, to_spectral


def _pool_size() -> int:
    env = os.environ.get("ROUGHHEAT_THREADS", "").strip()
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("ROUGHHEAT_THREADS must be a positive integer")
        return n
    return min(8, os.cpu_count() or 1)


def _map_over(fn, items):
    items = list(items)
    if len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(_pool_size(), len(items))) as pool:
        return list(pool.map(fn, items))


def _bnorm_rows(basis, rows, alpha):
    w = basis.lam**alpha
    return np.sqrt(((np.atleast_2d(rows) * w) ** 2).sum(axis=-1))


# ---------------------------------------------------------------------------
# discrete Holder seminorms

def discrete_holder(traj: Trajectory, lam: float, alpha: float) -> float:
    """sup over grid pairs of ||(delta_hat y)_ts||_{B_{alpha,2}} / (t-s)^lam.

    Pairs are subsampled to dyadic spans (every offset, gaps 2^j), which
    bounds the full sup within a constant.  lam = 0 returns the plain
    sup-in-time norm instead.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    b = traj.basis
    c = traj.coeffs
    if c.shape[0] == 0:
        raise ValueError("empty grid")
    if lam == 0:
        return float(_bnorm_rows(b, c, alpha).max())
    w = b.lam**alpha
    best = 0.0
    for j in range(traj.n + 1):
        g = 1 << j
        dt = g * 2.0**-traj.n
        d = c[g:] - np.exp(-b.lam * dt) * c[:-g]
        best = max(best, np.sqrt(((d * w) ** 2).sum(axis=1)).max() / dt**lam)
    return float(best)


# ---------------------------------------------------------------------------
# rate fitting

@dataclass
class RateReport:
    levels: tuple
    errors: tuple
    beta_hat: float
    residual: float
    beta_max: float
    per_seed: tuple
    exact: bool


def beta_bound(gamma: float, gamma_prime: float) -> float:
    return min(3 * gamma - 1, gamma + gamma_prime - 1, gamma - (gamma_prime - 0.5))


def _fit_rate(levels, errors):
    y = np.log2(errors)
    A = np.vstack([levels, np.ones(len(levels))]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(res[0] / len(levels))) if res.size else 0.0
    return -float(coef[0]), resid


def convergence_study(cfg: ExperimentConfig) -> RateReport:
    if cfg.n_max < cfg.n_min + 3:
        raise ValueError("rate fit needs n_max >= n_min + 3")
    n_ref = cfg.n_max + 2
    if n_ref > cfg.n_f:
        raise ValueError(f"reference level {n_ref} exceeds driver level {cfg.n_f}")
    levels = tuple(range(cfg.n_min, cfg.n_max + 1))

    def one(seed):
        prob = build_problem(cfg, build_path(cfg, seed))
        ref = solve(prob, n_ref)
        errs = []
        for n in levels:
            tr = solve(prob, n)
            d = ref.coeffs[:: 1 << (n_ref - n)] - tr.coeffs
            errs.append(float(_bnorm_rows(prob.basis, d, cfg.gamma_prime).max()))
        return errs

    seeds = sorted(cfg.seeds)
    rows = _map_over(one, seeds)
    pooled = np.mean(rows, axis=0)
    # composed exponentials leave float dust even when the flows agree,
    # so exactness is flagged at rounding resolution
    exact = bool(pooled.max() <= 1e-12)
    per_seed = []
    for seed, errs in zip(seeds, rows):
        if max(errs) <= 1e-12:
            b_hat, resid = float("nan"), float("nan")
        else:
            b_hat, resid = _fit_rate(levels, errs)
        per_seed.append({"seed": seed, "errors": tuple(errs), "beta_hat": b_hat})
    if exact:
        beta_hat, residual = float("nan"), float("nan")
    else:
        beta_hat, residual = _fit_rate(levels, pooled)
    return RateReport(levels, tuple(float(e) for e in pooled), beta_hat, residual,
                      beta_bound(cfg.gamma, cfg.gamma_prime), tuple(per_seed), exact)


# ---------------------------------------------------------------------------
# continuity under perturbation of (psi, x)

def _bump_values(times):
    return 16.0 * times**2 * (1.0 - times) ** 2


def continuity_study(cfg: ExperimentConfig, eps_list, perturb_psi=True,
                     perturb_driver=True) -> dict:
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise ValueError("need at least two perturbation sizes")
    if not (perturb_psi or perturb_driver):
        raise ValueError("nothing to perturb")
    n = cfg.n_max
    dist_level = min(n, 8)

    def one(seed):
        path = build_path(cfg, seed)
        prob = build_problem(cfg, path)
        base = solve(prob, n)
        nums, dens, ratios = [], [], []
        for eps in eps_list:
            samples = path.samples.copy()
            if perturb_driver:
                samples[0] += eps * _bump_values(path.times)
            ppath = DriverPath(samples, path.n_f, "perturbed", {})
            pe = enhance_geometric(ppath)
            pcrp = ConvRoughPath(prob.basis, pe, q_off=cfg.q_off)
            pcoef = prob.psi.coeff.copy()
            if perturb_psi:
                pcoef[0] += eps
            ppsi = Field(prob.basis, coeff=pcoef)
            pprob = Problem(prob.basis, pe, pcrp, prob.f, ppsi, cfg.gamma, cfg.gamma_prime)
            pert = solve(pprob, n)
            diff = Trajectory(prob.basis, n, base.coeffs - pert.coeffs)
            num = (discrete_holder(diff, cfg.gamma, 0.0)
                   + discrete_holder(diff, 0.0, cfg.gamma_prime))
            den = 0.0
            if perturb_psi:
                den += sobolev_norm(prob.basis, cfg.gamma_prime, 2,
                                    prob.psi - ppsi)
            if perturb_driver:
                den += driver_distance(prob.driver, pe, cfg.gamma, dist_level)
            nums.append(float(num))
            dens.append(float(den))
            ratios.append(float(num / den) if den > 0 else None)
        return {"seed": seed, "numerators": nums, "denominators": dens, "ratios": ratios}

    per_seed = _map_over(one, sorted(cfg.seeds))
    mean_ratios = []
    for i in range(len(eps_list)):
        vals = [row["ratios"][i] for row in per_seed if row["ratios"][i] is not None]
        mean_ratios.append(float(np.mean(vals)) if vals else None)
    return {"eps": eps_list, "level": n, "per_seed": per_seed, "mean_ratios": mean_ratios}


# ---------------------------------------------------------------------------
# reference integrators

def exp_euler_ito(basis, path: DriverPath, vf, psi: Field) -> Field:
    """One pass of y <- S_delta (y + sum_i f_i(y) dx^i) over the fine grid."""
    dx = np.diff(path.samples, axis=1)
    decay = np.exp(-basis.lam * 2.0**-path.n_f)
    y = psi.coeff.copy()
    for l in range(dx.shape[1]):
        g = Field(basis, coeff=y).grid
        for i, comp in enumerate(vf.components):
            y = y + to_spectral(basis, comp.value(g)).coeff * dx[i, l]
        y = decay * y
        if not np.all(np.isfinite(y)):
            raise DivergenceError(l, float("inf"))
    return Field(basis, coeff=y)


def exp_midpoint(basis, path: DriverPath, vf, psi: Field, level: int,
                 record_level=None):
    """Second-order exponential integrator for smooth drivers.

    Returns the coefficients on the level-`record_level` grid (defaults
    to the integration level).
    """
    if level > path.n_f:
        raise ValueError("integration level exceeds the driver grid")
    record = level if record_level is None else min(record_level, level)
    x = path.samples[:, :: 1 << (path.n_f - level)]
    dx = np.diff(x, axis=1)
    delta = 2.0**-level
    full = np.exp(-basis.lam * delta)
    half = np.exp(-basis.lam * delta / 2)
    keep = 1 << (level - record)
    out = np.empty(((1 << record) + 1, basis.K))
    y = psi.coeff.copy()
    out[0] = y
    for l in range(1 << level):
        g = Field(basis, coeff=y).grid
        fdx = np.zeros_like(y)
        for i, comp in enumerate(vf.components):
            fdx = fdx + to_spectral(basis, comp.value(g)).coeff * dx[i, l]
        g_mid = Field(basis, coeff=half * (y + 0.5 * fdx)).grid
        fdx_mid = np.zeros_like(y)
        for i, comp in enumerate(vf.components):
            fdx_mid = fdx_mid + to_spectral(basis, comp.value(g_mid)).coeff * dx[i, l]
        y = full * y + half * fdx_mid
        if (l + 1) % keep == 0:
            out[(l + 1) // keep] = y
    if not np.all(np.isfinite(out)):
        raise DivergenceError(1 << level, float("inf"))
    return out


# ---------------------------------------------------------------------------
# identification experiments

def regular_identification(cfg: ExperimentConfig, tol: float = 1e-8) -> dict:
    if "deterministic" not in cfg.driver:
        raise ValueError("identification needs a deterministic smooth driver")
    path = build_path(cfg, 0)
    prob = build_problem(cfg, path)
    record = cfg.n_max
    level = min(max(cfg.n_max + 2, 12), cfg.n_f)
    ref = exp_midpoint(prob.basis, path, prob.f, prob.psi, level, record)
    self_diff = float("inf")
    while True:
        if level == cfg.n_f:
            break
        level += 1
        finer = exp_midpoint(prob.basis, path, prob.f, prob.psi, level, record)
        self_diff = float(_bnorm_rows(prob.basis, finer - ref, cfg.gamma_prime).max())
        ref = finer
        if self_diff <= tol:
            break
    if self_diff > tol:
        raise ValueError(f"classical reference did not converge: self-difference "
                         f"{self_diff:.3e} > {tol:.0e} at driver level {cfg.n_f}")
    levels = tuple(range(cfg.n_min, cfg.n_max + 1))
    gaps = []
    for n in levels:
        tr = solve(prob, n)
        d = ref[:: 1 << (record - n)] - tr.coeffs
        gaps.append(float(_bnorm_rows(prob.basis, d, cfg.gamma_prime).max()))
    return {"levels": list(levels), "gaps": gaps, "ref_level": level,
            "ref_self_diff": self_diff, "tol": tol}


def ito_compare(cfg: ExperimentConfig) -> dict:
    d = cfg.driver
    if "H" not in d or d["H"] != 0.5:
        raise ValueError("ito comparison needs an fBm driver with H = 1/2")
    levels = tuple(range(cfg.n_min, cfg.n_max + 1))

    def one(seed):
        path = build_path(cfg, seed)
        prob = build_problem(cfg, path, enhancement="ito")
        ref = exp_euler_ito(prob.basis, path, prob.f, prob.psi)
        return [float(((solve(prob, n).coeffs[-1] - ref.coeff) ** 2).sum())
                for n in levels]

    seeds = sorted(cfg.seeds)
    rows = _map_over(one, seeds)
    ms_gaps = [float(v) for v in np.mean(rows, axis=0)]

    # Ito vs geometric enhancement of the same samples: the diagonal
    # (t-s)/2 correction accumulates roughly linearly in time
    path = build_path(cfg, seeds[0])
    prob_i = build_problem(cfg, path, enhancement="ito")
    prob_g = build_problem(cfg, path, enhancement="geometric")
    n_swap = cfg.n_max
    tr_i, tr_g = solve(prob_i, n_swap), solve(prob_g, n_swap)
    times = [0.25, 0.5, 0.75, 1.0]
    swap = [float(np.linalg.norm(tr_i.coeffs[tr_i.grid_index(t)]
                                 - tr_g.coeffs[tr_g.grid_index(t)])) for t in times]
    return {"levels": list(levels), "ms_gaps": ms_gaps, "seeds": seeds,
            "per_seed": [{"seed": s, "gaps": r} for s, r in zip(seeds, rows)],
            "enhancement_times": times, "enhancement_gaps": swap}
