"""Driving paths and their level-2 enhancement (x, 𝕏).

A DriverPath holds m channels sampled on the fine dyadic grid t_j = j·2^{-n_f}.
Enhancement lifts it to a 2-rough path: the Lévy area of the piecewise-linear
interpolant, which satisfies the Chen relation exactly and is evaluated in
O(1) per time pair from per-channel-pair prefix integrals

    P^{ij}(t) = ∫_0^t x^j dx^i,   𝕏^{ij}_{ts} = P^{ij}(t) - P^{ij}(s) - x^j_s δx^i_{ts}

(the differential always rides on the first index).  fBm channels come from
circulant embedding of the increment covariance, with a dense factorization
fallback if the embedding ever fails to be nonnegative.
"""

import numpy as np

__all__ = [
    "DriverPath",
    "EnhancedDriver",
    "sample_fbm",
    "make_deterministic",
    "enhance_geometric",
    "enhance_ito",
    "chen_defect",
    "holder_norms",
    "driver_distance",
    "save_path",
    "load_path",
]

MAX_FINE_LEVEL = 22


class DriverPath:
    """m sampled channels on the level-n_f dyadic grid of [0,1]."""

    __slots__ = ("samples", "n_f", "kind", "params")

    def __init__(self, samples, n_f: int, kind: str, params: dict):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ValueError("samples must be (channels, nodes)")
        J = 1 << n_f
        if samples.shape[1] != J + 1:
            raise ValueError(
                f"level {n_f} needs {J + 1} samples per channel, got {samples.shape[1]}"
            )
        if samples.shape[0] < 1:
            raise ValueError("need at least one channel")
        if np.any(samples[:, 0] != 0.0):
            raise ValueError("paths must start at 0")
        self.samples = samples
        self.n_f = int(n_f)
        self.kind = kind
        self.params = params

    @property
    def m(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        J = 1 << self.n_f
        return np.arange(J + 1) / J


def _fgn_covariance(J: int, H: float, delta: float) -> np.ndarray:
    """Stationary covariance γ(k), k = 0..J, of level increments."""
    k = np.arange(J + 1, dtype=np.float64)
    return 0.5 * delta ** (2 * H) * (
        (k + 1) ** (2 * H) + np.abs(k - 1) ** (2 * H) - 2 * k ** (2 * H)
    )


def _sample_fgn_circulant(J, H, delta, rng):
    """Davies-Harte: embed γ in a length-2J circulant and spectrally sample."""
    gamma = _fgn_covariance(J, H, delta)
    row = np.concatenate([gamma, gamma[J - 1:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-8 * lam.max():
        return None
    lam = np.clip(lam, 0.0, None)
    n2 = 2 * J
    A = rng.standard_normal(J + 1)
    B = rng.standard_normal(J - 1)
    W = np.empty(n2, dtype=np.complex128)
    W[0] = np.sqrt(lam[0] / n2) * A[0]
    W[J] = np.sqrt(lam[J] / n2) * A[J]
    W[1:J] = np.sqrt(lam[1:J] / (2 * n2)) * (A[1:J] + 1j * B)
    W[J + 1:] = np.conj(W[J - 1:0:-1])
    return np.fft.fft(W).real[:J]


def _sample_fgn_dense(J, H, delta, rng):
    """Fallback: factor the Toeplitz covariance directly.  O(J³), small J only."""
    gamma = _fgn_covariance(J, H, delta)
    idx = np.arange(J)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    w, V = np.linalg.eigh(cov)
    w = np.clip(w, 0.0, None)
    root = V * np.sqrt(w)
    return root @ rng.standard_normal(J)


def sample_fbm(H: float, m: int, n_f: int, seed: int) -> DriverPath:
    """m independent fractional Brownian channels, Hurst H ∈ (1/3, 1]."""
    if not 1 / 3 < H <= 1.0:
        raise ValueError(f"Hurst index must lie in (1/3, 1], got {H}")
    if m < 1:
        raise ValueError(f"need at least one channel, got {m}")
    if not 0 <= n_f <= MAX_FINE_LEVEL:
        raise ValueError(f"fine level must be in [0, {MAX_FINE_LEVEL}], got {n_f}")

    J = 1 << n_f
    rng = np.random.Generator(np.random.PCG64(seed))
    samples = np.zeros((m, J + 1))
    params = {"H": H, "seed": seed}

    if H == 1.0:
        # fully correlated increments: x(t) = t Z, one normal per channel
        t = np.arange(J + 1) / J
        samples[:] = rng.standard_normal(m)[:, None] * t
        params["method"] = "degenerate"
        return DriverPath(samples, n_f, "fbm", params)

    method = "circulant"
    for i in range(m):
        fgn = _sample_fgn_circulant(J, H, 1.0 / J, rng)
        if fgn is None:
            fgn = _sample_fgn_dense(J, H, 1.0 / J, rng)
            method = "dense"
        samples[i, 1:] = np.cumsum(fgn)
    params["method"] = method
    return DriverPath(samples, n_f, "fbm", params)


def make_deterministic(kind: str, params: dict, m: int, n_f: int) -> DriverPath:
    """Closed-form test drivers: linear ramps or sinusoid channels."""
    if m < 1:
        raise ValueError(f"need at least one channel, got {m}")
    if not 0 <= n_f <= MAX_FINE_LEVEL:
        raise ValueError(f"fine level must be in [0, {MAX_FINE_LEVEL}], got {n_f}")
    J = 1 << n_f
    t = np.arange(J + 1) / J
    if kind == "linear":
        slope = np.broadcast_to(np.asarray(params["slope"], dtype=np.float64), (m,))
        samples = slope[:, None] * t
    elif kind == "sinusoid":
        amp = np.broadcast_to(np.asarray(params["amplitudes"], dtype=np.float64), (m,))
        freq = np.broadcast_to(np.asarray(params["frequencies"], dtype=np.float64), (m,))
        samples = amp[:, None] * np.sin(2 * np.pi * freq[:, None] * t)
    else:
        raise ValueError(f"unknown deterministic driver kind {kind!r}")
    return DriverPath(samples, n_f, kind, dict(params))


class EnhancedDriver:
    """DriverPath plus its Lévy-area evaluator.

    chronology is "geometric" (area of the interpolant) or "ito"
    (geometric minus (t-s)/2 on the diagonal, Brownian channels only).
    """

    __slots__ = ("path", "chronology", "_prefix")

    def __init__(self, path: DriverPath, chronology: str, prefix: np.ndarray):
        self.path = path
        self.chronology = chronology
        self._prefix = prefix

    def _node(self, t: float) -> int:
        J = 1 << self.path.n_f
        v = t * J
        j = int(round(v))
        if abs(v - j) > 1e-9 or not 0 <= j <= J:
            raise ValueError(f"time {t} is not a level-{self.path.n_f} grid point")
        return j

    def increment(self, s: float, t: float) -> np.ndarray:
        js, jt = self._node(s), self._node(t)
        if jt < js:
            raise ValueError("need s <= t")
        return self.path.samples[:, jt] - self.path.samples[:, js]

    def area(self, s: float, t: float) -> np.ndarray:
        js, jt = self._node(s), self._node(t)
        if jt < js:
            raise ValueError("need s <= t")
        x = self.path.samples
        dx = x[:, jt] - x[:, js]
        out = self._prefix[:, :, jt] - self._prefix[:, :, js] - np.outer(dx, x[:, js])
        if self.chronology == "ito":
            out[np.diag_indices_from(out)] -= 0.5 * (jt - js) / (1 << self.path.n_f)
        return out


def _prefix_integrals(path: DriverPath) -> np.ndarray:
    # exact cell integrals of the interpolant: ∫ x^j dx^i over [u_l, u_{l+1}]
    # equals δx^i_l (x^j_l + δx^j_l / 2)
    x = path.samples
    dx = np.diff(x, axis=1)
    mid = x[:, :-1] + 0.5 * dx
    cells = dx[:, None, :] * mid[None, :, :]
    prefix = np.zeros((path.m, path.m, x.shape[1]))
    np.cumsum(cells, axis=2, out=prefix[:, :, 1:])
    return prefix


def enhance_geometric(path: DriverPath) -> EnhancedDriver:
    """Canonical geometric lift: exact Lévy area of the interpolant."""
    return EnhancedDriver(path, "geometric", _prefix_integrals(path))


def enhance_ito(path: DriverPath) -> EnhancedDriver:
    """Itô enhancement of Brownian channels (H = 1/2 only)."""
    if path.kind != "fbm" or path.params.get("H") != 0.5:
        raise ValueError("ito enhancement needs fbm channels with H = 1/2")
    return EnhancedDriver(path, "ito", _prefix_integrals(path))


def chen_defect(e: EnhancedDriver, s: float, u: float, t: float) -> np.ndarray:
    """𝕏_{ts} - 𝕏_{tu} - 𝕏_{us} - δx_{tu} ⊗ δx_{us}; should vanish."""
    if not s <= u <= t:
        raise ValueError("need s <= u <= t")
    defect = e.area(s, t) - e.area(u, t) - e.area(s, u)
    return defect - np.outer(e.increment(u, t), e.increment(s, u))


def _coarse_data(e: EnhancedDriver, level: int):
    stride = 1 << (e.path.n_f - level)
    idx = np.arange((1 << level) + 1) * stride
    return e.path.samples[:, idx], e._prefix[:, :, idx]


def _pair_suprema(e1, e2, gamma, level):
    """sup |δx|/(t-s)^γ and sup |𝕏|/(t-s)^{2γ} over level pairs.

    With e2 given, the suprema are of the differences (same grids).
    Matrix/vector size is measured entrywise (max abs).
    """
    n = 1 << level
    x1, P1 = _coarse_data(e1, level)
    if e2 is not None:
        x2, P2 = _coarse_data(e2, level)
    m = x1.shape[0]
    ito1 = e1.chronology == "ito"
    ito2 = e2 is not None and e2.chronology == "ito"
    sup_x = 0.0
    sup_xx = 0.0
    diag = np.diag_indices(m)
    for g in range(1, n + 1):
        dt = g / n
        dx1 = x1[:, g:] - x1[:, :-g]
        area1 = P1[:, :, g:] - P1[:, :, :-g] - dx1[:, None, :] * x1[None, :, :-g]
        if ito1:
            area1[diag] -= 0.5 * dt
        if e2 is None:
            dx, area = dx1, area1
        else:
            dx2 = x2[:, g:] - x2[:, :-g]
            area2 = P2[:, :, g:] - P2[:, :, :-g] - dx2[:, None, :] * x2[None, :, :-g]
            if ito2:
                area2[diag] -= 0.5 * dt
            dx, area = dx1 - dx2, area1 - area2
        sup_x = max(sup_x, np.abs(dx).max() / dt**gamma)
        sup_xx = max(sup_xx, np.abs(area).max() / dt ** (2 * gamma))
    return sup_x, sup_xx


def _check_gamma_level(e, gamma, level):
    if not 1 / 3 < gamma < 1 / 2:
        raise ValueError(f"Hölder exponent must lie in (1/3, 1/2), got {gamma}")
    if not 0 <= level <= e.path.n_f:
        raise ValueError(f"coarse level must be in [0, {e.path.n_f}], got {level}")


def holder_norms(e: EnhancedDriver, gamma: float, coarse_level: int) -> dict:
    """Dyadic-pair estimates of ‖x‖_γ, ‖𝕏‖_{2γ} and their sum."""
    _check_gamma_level(e, gamma, coarse_level)
    sup_x, sup_xx = _pair_suprema(e, None, gamma, coarse_level)
    return {"x": float(sup_x), "xx": float(sup_xx), "sum": float(sup_x + sup_xx)}


def driver_distance(e1: EnhancedDriver, e2: EnhancedDriver, gamma: float,
                    coarse_level: int) -> float:
    """‖x - x̃‖_γ + ‖𝕏 - 𝕏̃‖_{2γ} over the same dyadic pairs."""
    _check_gamma_level(e1, gamma, coarse_level)
    if e1.path.m != e2.path.m or e1.path.n_f != e2.path.n_f:
        raise ValueError("drivers must share channel count and fine level")
    sup_x, sup_xx = _pair_suprema(e1, e2, gamma, coarse_level)
    return float(sup_x + sup_xx)


# ---------------------------------------------------------------------------
# off-grid evaluation of the interpolant, used by the operator quadrature:
# values, prefix integrals and areas stay exact for piecewise-linear x even
# when u falls strictly inside a fine cell.


def _cell_and_fraction(path: DriverPath, u: np.ndarray):
    J = 1 << path.n_f
    v = np.asarray(u, dtype=np.float64) * J
    c = np.minimum(v.astype(np.int64), J - 1)
    return c, v - c


def _values_at(path: DriverPath, u: np.ndarray) -> np.ndarray:
    """Interpolant values x(u), shape (m, len(u))."""
    c, theta = _cell_and_fraction(path, u)
    x = path.samples
    return x[:, c] + theta[None, :] * (x[:, c + 1] - x[:, c])


def _areas_to(e: EnhancedDriver, t: float, u: np.ndarray) -> np.ndarray:
    """𝕏^{ij}_{t,u_l} for a batch of u ≤ t, shape (m, m, len(u)).

    The partial-cell piece of P(u) is θ δx^i_c (x^j_c + θ δx^j_c / 2),
    the exact integral of the interpolant over the cell fragment.
    """
    path = e.path
    c, theta = _cell_and_fraction(path, u)
    x = path.samples
    dxc = x[:, c + 1] - x[:, c]
    part_i = theta[None, :] * dxc                    # θ δx^i_c
    avg_j = x[:, c] + 0.5 * theta[None, :] * dxc     # x^j_c + θ δx^j_c / 2
    P_u = e._prefix[:, :, c] + part_i[:, None, :] * avg_j[None, :, :]
    jt = e._node(t)
    P_t = e._prefix[:, :, jt]
    x_u = x[:, c] + theta[None, :] * dxc
    dx_tu = x[:, jt][:, None] - x_u
    out = P_t[:, :, None] - P_u - dx_tu[:, None, :] * x_u[None, :, :]
    if e.chronology == "ito":
        idx = np.arange(path.m)
        out[idx, idx, :] -= 0.5 * (t - np.asarray(u))
    return out


def save_path(filename, path: DriverPath) -> None:
    """CSV columns t, x1..xm on the fine grid."""
    cols = np.column_stack([path.times, path.samples.T])
    header = "t," + ",".join(f"x{i + 1}" for i in range(path.m))
    np.savetxt(filename, cols, delimiter=",", header=header, comments="", fmt="%.17e")


def load_path(filename, n_f: int) -> DriverPath:
    """Read a CSV written by :func:`save_path` (or externally) at a declared level."""
    data = np.loadtxt(filename, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    J = 1 << n_f
    if data.shape[0] != J + 1:
        raise ValueError(f"level {n_f} needs {J + 1} rows, file has {data.shape[0]}")
    t = data[:, 0]
    if np.abs(t - np.arange(J + 1) / J).max() > 1e-9:
        raise ValueError("time column does not match the declared dyadic grid")
    return DriverPath(data[:, 1:].T, n_f, "imported", {})
