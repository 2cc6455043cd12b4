"""Time-stepping scheme and its residual processes.

One step advances the spectral coefficients by

    y_{k+1} = S_dt y_k + sum_i X^x_i f_i(y_k) + sum_{ij} X^xx_{ij} F_{ij}(y_k),

with F_{ij}(v) = f_i'(v) f_j(v) and all nonlinearities evaluated by
collocation on the oversampled grid (G >= 2K keeps the products alias-free
up to the retained modes).  The residuals J and K measure how far a given
two-time increment is from the local expansion; J vanishes on consecutive
grid pairs by construction.
"""

import time

import numpy as np

from .driver import EnhancedDriver
from .operator_path import ConvRoughPath, build_Xx, build_Xxx
from .spectral import Field, SpectralBasis, semigroup_apply, to_spectral

BLOWUP_NORM = 1e15


class DivergenceError(RuntimeError):
    """Raised when a trajectory leaves the representable range."""

    def __init__(self, step: int, norm: float):
        super().__init__(f"trajectory diverged at step {step} (norm {norm:.3e})")
        self.step = step


# ---------------------------------------------------------------------------
# vector fields

class ScalarComponent:
    """One scalar nonlinearity with closed-form derivatives up to order 3.

    bounds[r] is a declared sup bound for |f^(r)|.
    """

    __slots__ = ("name", "bounds", "_funcs")

    def __init__(self, name, bounds, funcs):
        self.name = name
        self.bounds = tuple(float(b) for b in bounds)
        self._funcs = funcs

    def value(self, v):
        return self._funcs[0](np.asarray(v, dtype=np.float64))

    def d1(self, v):
        return self._funcs[1](np.asarray(v, dtype=np.float64))

    def d2(self, v):
        return self._funcs[2](np.asarray(v, dtype=np.float64))

    def d3(self, v):
        return self._funcs[3](np.asarray(v, dtype=np.float64))

    def derivative(self, r: int):
        if r not in (0, 1, 2, 3):
            raise ValueError("derivative order must be 0..3")
        return self._funcs[r]


def _make_zero():
    z = lambda v: np.zeros_like(v)
    return ScalarComponent("zero", (0, 0, 0, 0), (z, z, z, z))


def _make_sin(beta=1.0):
    beta = float(beta)
    return ScalarComponent(
        "sin",
        (1.0, abs(beta), beta**2, abs(beta) ** 3),
        (
            lambda v: np.sin(beta * v),
            lambda v: beta * np.cos(beta * v),
            lambda v: -(beta**2) * np.sin(beta * v),
            lambda v: -(beta**3) * np.cos(beta * v),
        ),
    )


def _tanh_d(v, r, scale=1.0):
    t = np.tanh(v)
    sech2 = 1.0 - t * t
    if r == 0:
        out = t
    elif r == 1:
        out = sech2
    elif r == 2:
        out = -2.0 * t * sech2
    else:
        out = sech2 * (6.0 * t * t - 2.0)
    return scale * out


def _make_tanh():
    return ScalarComponent(
        "tanh",
        (1.0, 1.0, 0.7699, 2.0),
        tuple((lambda v, r=r: _tanh_d(v, r)) for r in range(4)),
    )


def _make_affine_tanh(shift=0.5, scale=0.5):
    shift, scale = float(shift), float(scale)
    a = abs(scale)
    return ScalarComponent(
        "affine_tanh",
        (abs(shift) + a, a, 0.7699 * a, 2.0 * a),
        (
            lambda v: shift + scale * np.tanh(v),
            lambda v: _tanh_d(v, 1, scale),
            lambda v: _tanh_d(v, 2, scale),
            lambda v: _tanh_d(v, 3, scale),
        ),
    )


def _make_bump():
    # f(v) = 1/(1+v^2)
    return ScalarComponent(
        "bump",
        (1.0, 0.6496, 2.0, 4.7),
        (
            lambda v: 1.0 / (1.0 + v * v),
            lambda v: -2.0 * v / (1.0 + v * v) ** 2,
            lambda v: (6.0 * v * v - 2.0) / (1.0 + v * v) ** 3,
            lambda v: 24.0 * v * (1.0 - v * v) / (1.0 + v * v) ** 4,
        ),
    )


def _smoothstep(u):
    return u**3 * (6.0 * u * u - 15.0 * u + 10.0)


def _lp_value(v):
    # odd, C^3: identity on [-1,1], quintic-smoothstep saturation of the
    # slope on [1,2], constant 3/2 beyond
    av = np.abs(v)
    u = np.clip(av - 1.0, 0.0, 1.0)
    ramp = u - (u**6 - 3.0 * u**5 + 2.5 * u**4)
    return np.sign(v) * (np.minimum(av, 1.0) + ramp)


def _lp_d1(v):
    u = np.clip(np.abs(v) - 1.0, 0.0, 1.0)
    return 1.0 - _smoothstep(u)


def _lp_d2(v):
    u = np.clip(np.abs(v) - 1.0, 0.0, 1.0)
    return -np.sign(v) * 30.0 * u * u * (u - 1.0) ** 2


def _lp_d3(v):
    u = np.clip(np.abs(v) - 1.0, 0.0, 1.0)
    return -(120.0 * u**3 - 180.0 * u * u + 60.0 * u)


def _make_linear_patch():
    # identity where trajectories actually live; saturates so the
    # third-derivative bound stays finite
    return ScalarComponent(
        "linear_patch",
        (1.5, 1.0, 1.875, 5.7735),
        (_lp_value, _lp_d1, _lp_d2, _lp_d3),
    )


REGISTRY = {
    "zero": _make_zero,
    "sin": _make_sin,
    "tanh": _make_tanh,
    "affine_tanh": _make_affine_tanh,
    "bump": _make_bump,
    "linear_patch": _make_linear_patch,
}


class VectorField:
    __slots__ = ("components",)

    def __init__(self, components):
        if not components:
            raise ValueError("vector field needs at least one component")
        self.components = tuple(components)

    @property
    def m(self):
        return len(self.components)


def make_vector_field(specs) -> VectorField:
    """Build a VectorField from registry names.

    Each entry is either a name or a dict {"name": ..., <params>}.
    """
    comps = []
    for spec in specs:
        if isinstance(spec, str):
            name, params = spec, {}
        else:
            params = dict(spec)
            name = params.pop("name")
        if name not in REGISTRY:
            raise ValueError(f"unknown vector field component {name!r}; "
                             f"choices: {sorted(REGISTRY)}")
        comps.append(REGISTRY[name](**params))
    return VectorField(comps)


# ---------------------------------------------------------------------------
# problem and trajectory containers

class Problem:
    __slots__ = ("basis", "driver", "conv", "f", "psi", "gamma", "gamma_prime")

    def __init__(self, basis: SpectralBasis, driver: EnhancedDriver,
                 conv: ConvRoughPath, f: VectorField, psi: Field,
                 gamma: float = 0.45, gamma_prime: float = 0.75):
        if conv.basis is not basis:
            raise ValueError("operator path built on a different basis")
        if conv.enhanced is not driver:
            raise ValueError("operator path built on a different driver")
        if psi.basis is not basis:
            raise ValueError("initial condition lives on a different basis")
        if f.m != driver.path.m:
            raise ValueError(f"vector field has {f.m} components, "
                             f"driver has {driver.path.m}")
        if not 1 / 3 < gamma < 1 / 2:
            raise ValueError("gamma must lie in (1/3, 1/2)")
        if not 1 - gamma < gamma_prime < gamma + 1 / 2:
            raise ValueError("gamma_prime must lie in (1-gamma, gamma+1/2)")
        self.basis = basis
        self.driver = driver
        self.conv = conv
        self.f = f
        self.psi = psi
        self.gamma = float(gamma)
        self.gamma_prime = float(gamma_prime)
        self._check_psi_tail()

    def _check_psi_tail(self):
        # the weighted partial sums must have essentially converged at K,
        # otherwise the declared smoothness norm of psi is meaningless
        b = self.basis
        if b.K < 8:
            return  # too few modes to see a tail
        w = b.lam ** (2 * self.gamma_prime) * self.psi.coeff**2
        total = w.sum()
        if total == 0.0:
            return
        tail = w[b.K // 2:].sum()
        if tail > 0.01 * total:
            raise ValueError("initial condition has a slowly decaying "
                             "spectral tail; raise K or smooth the data")


class Trajectory:
    """Discrete solution on the level-n dyadic grid, linearly interpolated
    in between."""

    __slots__ = ("basis", "n", "coeffs", "build_seconds")

    def __init__(self, basis: SpectralBasis, n: int, coeffs, build_seconds=None):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != ((1 << n) + 1, basis.K):
            raise ValueError("coefficient array has the wrong shape")
        self.basis = basis
        self.n = int(n)
        self.coeffs = coeffs
        self.build_seconds = build_seconds

    @property
    def times(self):
        return np.arange((1 << self.n) + 1) * 2.0**-self.n

    def field(self, k: int) -> Field:
        return Field(self.basis, coeff=self.coeffs[k])

    def grid_index(self, t) -> int:
        v = float(t) * (1 << self.n)
        k = round(v)
        if abs(v - k) > 1e-9 or not 0 <= k <= (1 << self.n):
            raise ValueError(f"t={t} is not a level-{self.n} grid point")
        return int(k)

    def at(self, t) -> Field:
        if not 0.0 <= t <= 1.0:
            raise ValueError("t outside [0,1]")
        v = float(t) * (1 << self.n)
        k = min(int(v), (1 << self.n) - 1)
        w = v - k
        return Field(self.basis, coeff=(1 - w) * self.coeffs[k] + w * self.coeffs[k + 1])


# ---------------------------------------------------------------------------
# nonlinearity evaluation

def nemytskii(comp: ScalarComponent, phi: Field) -> Field:
    return to_spectral(phi.basis, comp.value(phi.grid))


def F_pair(f: VectorField, i: int, j: int, phi: Field) -> Field:
    g = phi.grid
    return to_spectral(phi.basis, f.components[i].d1(g) * f.components[j].value(g))


# ---------------------------------------------------------------------------
# the scheme

def _build_ops(prob: Problem, s: float, t: float):
    m = prob.f.m
    xs = [build_Xx(prob.conv, i, s, t) for i in range(m)]
    xxs = [[build_Xxx(prob.conv, i, j, s, t) for j in range(m)] for i in range(m)]
    return xs, xxs


def _advance(prob: Problem, y: Field, dt: float, xs, xxs) -> Field:
    b = prob.basis
    g = y.grid
    fv = [c.value(g) for c in prob.f.components]
    dv = [c.d1(g) for c in prob.f.components]
    new = semigroup_apply(b, dt, y).coeff.copy()
    for i in range(prob.f.m):
        new += xs[i].multipliers * to_spectral(b, fv[i]).coeff
        for j in range(prob.f.m):
            new += xxs[i][j].multipliers * to_spectral(b, dv[i] * fv[j]).coeff
    return Field(b, coeff=new)


def step(prob: Problem, y: Field, k: int, n: int) -> Field:
    dt = 2.0**-n
    xs, xxs = _build_ops(prob, k * dt, (k + 1) * dt)
    out = _advance(prob, y, dt, xs, xxs)
    norm = out.l2_norm()
    if not np.isfinite(norm) or norm > BLOWUP_NORM:
        raise DivergenceError(k, norm)
    return out


def solve(prob: Problem, n: int) -> Trajectory:
    """Run the scheme on the level-n dyadic grid from y_0 = psi."""
    if not 0 <= n <= prob.driver.path.n_f:
        raise ValueError(f"level n={n} outside [0, {prob.driver.path.n_f}]")
    steps = 1 << n
    dt = 2.0**-n
    coeffs = np.empty((steps + 1, prob.basis.K))
    coeffs[0] = prob.psi.coeff
    build_seconds = np.empty(steps)
    y = Field(prob.basis, coeff=coeffs[0])
    for k in range(steps):
        tic = time.perf_counter()
        xs, xxs = _build_ops(prob, k * dt, (k + 1) * dt)
        build_seconds[k] = time.perf_counter() - tic
        y = _advance(prob, y, dt, xs, xxs)
        norm = y.l2_norm()
        if not np.isfinite(norm) or norm > BLOWUP_NORM:
            raise DivergenceError(k, norm)
        coeffs[k + 1] = y.coeff
    return Trajectory(prob.basis, n, coeffs, build_seconds)


# ---------------------------------------------------------------------------
# increments and residuals

def _basis_of(obj) -> SpectralBasis:
    return obj.basis if hasattr(obj, "basis") else obj


def delta_hat(prob, y_s: Field, y_t: Field, s: float, t: float) -> Field:
    """y_t - S_{t-s} y_s."""
    if s > t:
        raise ValueError("need s <= t")
    return y_t - semigroup_apply(_basis_of(prob), t - s, y_s)


def _residual(prob: Problem, traj: Trajectory, s: float, t: float, with_xx: bool) -> Field:
    ks, kt = traj.grid_index(s), traj.grid_index(t)
    if ks > kt:
        raise ValueError("need s <= t")
    y_s, y_t = traj.field(ks), traj.field(kt)
    out = delta_hat(prob, y_s, y_t, s, t)
    if ks == kt:
        return out
    g = y_s.grid
    fv = [c.value(g) for c in prob.f.components]
    b = prob.basis
    for i in range(prob.f.m):
        op = build_Xx(prob.conv, i, s, t)
        out = out - Field(b, coeff=op.multipliers * to_spectral(b, fv[i]).coeff)
    if with_xx:
        dv = [c.d1(g) for c in prob.f.components]
        for i in range(prob.f.m):
            for j in range(prob.f.m):
                op = build_Xxx(prob.conv, i, j, s, t)
                out = out - Field(b, coeff=op.multipliers * to_spectral(b, dv[i] * fv[j]).coeff)
    return out


def residual_J(prob: Problem, traj: Trajectory, s: float, t: float) -> Field:
    return _residual(prob, traj, s, t, with_xx=True)


def residual_K(prob: Problem, traj: Trajectory, s: float, t: float) -> Field:
    return _residual(prob, traj, s, t, with_xx=False)


def delta_hat_J(prob: Problem, traj: Trajectory, s: float, u: float, t: float) -> Field:
    """J_{ts} - J_{tu} - S_{tu} J_{us}."""
    if not s <= u <= t:
        raise ValueError("need s <= u <= t")
    j_ts = residual_J(prob, traj, s, t)
    j_tu = residual_J(prob, traj, u, t)
    j_us = residual_J(prob, traj, s, u)
    return j_ts - j_tu - semigroup_apply(prob.basis, t - u, j_us)


def compensated_J(prob: Problem, traj: Trajectory, coarse, s: float, t: float) -> Field:
    """Residual against a coarse sub-partition of the trajectory grid.

    coarse is any collection of trajectory grid times; only the points
    strictly inside (s, t) matter.  Three cases: no inner point gives 0,
    one inner point gives the second-order increment of J, and in general
    J_{ts} minus the semigroup-weighted telescoping of J over the inner
    points.
    """
    b = prob.basis
    pts = sorted({float(u) for u in np.atleast_1d(np.asarray(coarse, dtype=np.float64))})
    for u in pts:
        traj.grid_index(u)  # raises if not nested in the trajectory grid
    inner = [u for u in pts if s < u < t]
    traj.grid_index(s), traj.grid_index(t)
    if not inner:
        return Field(b, coeff=np.zeros(b.K))
    if len(inner) == 1:
        return delta_hat_J(prob, traj, s, inner[0], t)
    out = residual_J(prob, traj, s, t) - residual_J(prob, traj, inner[-1], t)
    prev = inner[0]
    out = out - semigroup_apply(b, t - prev, residual_J(prob, traj, s, prev))
    for nxt in inner[1:]:
        out = out - semigroup_apply(b, t - nxt, residual_J(prob, traj, prev, nxt))
        prev = nxt
    return out
