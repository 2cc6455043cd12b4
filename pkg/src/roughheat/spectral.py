"""Sine-spectral calculus for A = -a d²/dξ² + c on (0,1), Dirichlet ends.

Everything downstream (semigroup, fractional powers, the operator rough
path) is diagonal in the eigenbasis e_k(ξ) = √2 sin(kπξ), λ_k = aπ²k² + c,
so a Field carries its spectral coefficients as the canonical data and
materializes collocation-grid values on demand through a type-I DST.  The
grid is oversampled (G ≥ 2K) so pointwise nonlinearities evaluated on it
stay alias-free when projected back to the first K modes.
"""

import numpy as np
from scipy.fft import dst

__all__ = [
    "SpectralBasis",
    "Field",
    "make_basis",
    "to_spectral",
    "to_grid",
    "semigroup_apply",
    "a_increment_apply",
    "fractional_apply",
    "sobolev_norm",
    "save_field",
    "load_field",
]


class SpectralBasis:
    """Immutable eigen-data of the Dirichlet operator on (0,1).

    ``lam[k-1] = a π² k² + c`` for k = 1..K; ``xi`` holds the interior
    collocation points j/(G+1), j = 1..G.
    """

    __slots__ = ("K", "a", "c", "G", "lam", "xi")

    def __init__(self, K, a, c, G, lam):
        self.K = int(K)
        self.a = float(a)
        self.c = float(c)
        self.G = int(G)
        self.lam = np.asarray(lam, dtype=np.float64)
        self.xi = np.arange(1, self.G + 1) / (self.G + 1)

    def __repr__(self):
        return f"SpectralBasis(K={self.K}, a={self.a}, c={self.c}, G={self.G})"


def make_basis(K: int, a: float, c: float, G: int) -> SpectralBasis:
    """Build the basis, checking the parameter ranges."""
    if K < 1:
        raise ValueError(f"mode count must be >= 1, got {K}")
    if a <= 0:
        raise ValueError(f"diffusion coefficient must be positive, got {a}")
    if c < 0:
        raise ValueError(f"reaction coefficient must be >= 0, got {c}")
    if G < 2 * K:
        raise ValueError(f"grid size {G} below the de-aliasing floor 2K = {2 * K}")
    k = np.arange(1, K + 1, dtype=np.float64)
    lam = a * np.pi**2 * k**2 + c
    return SpectralBasis(K, a, c, G, lam)


class Field:
    """A function on (0,1), held in spectral and/or grid form.

    Exactly one representation may be supplied; the other is derived
    lazily and cached.  Instances are treated as immutable: arithmetic
    returns new Fields.
    """

    __slots__ = ("basis", "_coeff", "_grid")

    def __init__(self, basis: SpectralBasis, coeff=None, grid=None):
        if coeff is None and grid is None:
            raise ValueError("need coefficients or grid values")
        self.basis = basis
        if coeff is not None:
            coeff = np.asarray(coeff, dtype=np.float64)
            if coeff.shape != (basis.K,):
                raise ValueError(f"expected {basis.K} coefficients, got shape {coeff.shape}")
        if grid is not None:
            grid = np.asarray(grid, dtype=np.float64)
            if grid.shape != (basis.G,):
                raise ValueError(f"expected {basis.G} grid values, got shape {grid.shape}")
        self._coeff = coeff
        self._grid = grid

    @property
    def has_coeff(self):
        return self._coeff is not None

    @property
    def has_grid(self):
        return self._grid is not None

    @property
    def coeff(self) -> np.ndarray:
        if self._coeff is None:
            self._coeff = _grid_to_coeff(self.basis, self._grid)
        return self._coeff

    @property
    def grid(self) -> np.ndarray:
        if self._grid is None:
            self._grid = _coeff_to_grid(self.basis, self._coeff)
        return self._grid

    def __add__(self, other):
        self._check_match(other)
        return Field(self.basis, coeff=self.coeff + other.coeff)

    def __sub__(self, other):
        self._check_match(other)
        return Field(self.basis, coeff=self.coeff - other.coeff)

    def __mul__(self, scalar):
        return Field(self.basis, coeff=self.coeff * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.basis, coeff=-self.coeff)

    def _check_match(self, other):
        if not isinstance(other, Field) or other.basis is not self.basis:
            raise ValueError("fields live on different bases")

    def l2_norm(self) -> float:
        return float(np.linalg.norm(self.coeff))

    def copy(self):
        return Field(self.basis, coeff=self.coeff.copy())


# DST-I conventions: scipy's dst(v, type=1) returns
#   y_k = 2 Σ_{j=1}^{G} v_j sin(π k j/(G+1)),  k = 1..G,
# and Σ_j sin(kπξ_j) sin(lπξ_j) = (G+1)/2 δ_{kl} on ξ_j = j/(G+1).  With the
# orthonormal basis √2 sin(kπξ) that gives the scalings below.


def _grid_to_coeff(b: SpectralBasis, grid: np.ndarray) -> np.ndarray:
    full = dst(grid, type=1)
    return full[: b.K] / (np.sqrt(2.0) * (b.G + 1))


def _coeff_to_grid(b: SpectralBasis, coeff: np.ndarray) -> np.ndarray:
    padded = np.zeros(b.G)
    padded[: b.K] = coeff
    return dst(padded, type=1) / np.sqrt(2.0)


def to_spectral(b: SpectralBasis, grid_values) -> Field:
    """Project grid samples onto the first K modes."""
    grid_values = np.asarray(grid_values, dtype=np.float64)
    if grid_values.shape != (b.G,):
        raise ValueError(f"expected {b.G} grid values, got shape {grid_values.shape}")
    return Field(b, coeff=_grid_to_coeff(b, grid_values))


def to_grid(b: SpectralBasis, phi: Field) -> np.ndarray:
    return phi.grid


def semigroup_apply(b: SpectralBasis, tau: float, phi: Field) -> Field:
    """S_τ φ, mode-wise e^{-λ_k τ}."""
    if tau < 0:
        raise ValueError(f"semigroup time must be >= 0, got {tau}")
    return Field(b, coeff=np.exp(-b.lam * tau) * phi.coeff)


def a_increment_apply(b: SpectralBasis, tau: float, phi: Field) -> Field:
    """(S_τ - Id) φ.  Uses expm1 so small λτ keeps full precision."""
    if tau < 0:
        raise ValueError(f"semigroup time must be >= 0, got {tau}")
    return Field(b, coeff=np.expm1(-b.lam * tau) * phi.coeff)


def fractional_apply(b: SpectralBasis, alpha: float, phi: Field) -> Field:
    """A^α φ, mode-wise λ_k^α."""
    if alpha < 0:
        raise ValueError(f"fractional power must be >= 0, got {alpha}")
    return Field(b, coeff=b.lam**alpha * phi.coeff)


def sobolev_norm(b: SpectralBasis, alpha: float, p: float, phi: Field) -> float:
    """Graph norm ‖A^α φ‖_{L^p}.

    p = 2 is exact in coefficients (Parseval); other p > 1 fall back to
    trapezoid quadrature of |A^α φ|^p on the collocation grid (the
    boundary values vanish, so interior nodes carry full weight h).
    """
    if alpha < 0:
        raise ValueError(f"fractional power must be >= 0, got {alpha}")
    if p == 2:
        return float(np.sqrt(np.sum(b.lam ** (2 * alpha) * phi.coeff**2)))
    if p <= 1:
        raise ValueError(f"need p > 1, got {p}")
    g = fractional_apply(b, alpha, phi).grid
    h = 1.0 / (b.G + 1)
    return float((h * np.sum(np.abs(g) ** p)) ** (1.0 / p))


def save_field(path, phi: Field, representation: str = "coeff") -> None:
    """Write a Field as a flat array under a one-line header."""
    if representation == "coeff":
        data = phi.coeff
    elif representation == "grid":
        data = phi.grid
    else:
        raise ValueError(f"unknown representation {representation!r}")
    header = f"K={phi.basis.K} G={phi.basis.G} representation={representation}"
    np.savetxt(path, data, header=header, fmt="%.17e")


def load_field(path, b: SpectralBasis) -> Field:
    """Read a Field written by :func:`save_field` onto a matching basis."""
    with open(path) as fh:
        header = fh.readline().lstrip("#").strip()
    meta = dict(item.split("=") for item in header.split())
    K, G = int(meta["K"]), int(meta["G"])
    if (K, G) != (b.K, b.G):
        raise ValueError(f"file has K={K}, G={G}; basis has K={b.K}, G={b.G}")
    data = np.loadtxt(path)
    if meta["representation"] == "coeff":
        return Field(b, coeff=data)
    return Field(b, grid=data)
