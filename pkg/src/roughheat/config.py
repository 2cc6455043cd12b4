"""JSON experiment configs and the wiring from config to Problem."""

import json
from dataclasses import dataclass

import numpy as np

from .driver import MAX_FINE_LEVEL, enhance_geometric, enhance_ito, make_deterministic, sample_fbm
from .operator_path import ConvRoughPath
from .scheme import REGISTRY, Problem, make_vector_field
from .spectral import Field, make_basis

KINDS = ("solve", "convergence", "continuity", "partition", "validate-driver", "ito-compare")

_REQUIRED = ("kind", "K", "G", "a", "c", "driver", "f", "psi",
             "gamma", "gamma_prime", "n_min", "n_max", "seeds", "q_off")
_OPTIONAL = {"out": "results"}


class ConfigError(ValueError):
    def __init__(self, field, msg):
        super().__init__(f"config field {field!r}: {msg}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    K: int
    G: int
    a: float
    c: float
    driver: dict
    f: tuple
    psi: dict
    gamma: float
    gamma_prime: float
    n_min: int
    n_max: int
    seeds: tuple
    q_off: int
    out: str

    @property
    def n_f(self):
        return self.driver["n_f"]

    @property
    def m(self):
        d = self.driver
        if "H" in d:
            return d.get("m", 1)
        if d["deterministic"] == "sinusoid":
            amps = d["amplitudes"]
            return len(amps) if isinstance(amps, (list, tuple)) else 1
        return d.get("m", 1)


def _need(raw, field, types):
    if field not in raw:
        raise ConfigError(field, "missing")
    val = raw[field]
    if types is not None and not isinstance(val, types):
        raise ConfigError(field, f"expected {types}, got {type(val).__name__}")
    return val


def _check_driver(d):
    if not isinstance(d, dict):
        raise ConfigError("driver", "must be an object")
    if "n_f" not in d:
        raise ConfigError("driver.n_f", "missing")
    n_f = d["n_f"]
    if not isinstance(n_f, int) or not 0 <= n_f <= MAX_FINE_LEVEL:
        raise ConfigError("driver.n_f", f"must be an integer in [0, {MAX_FINE_LEVEL}]")
    if "H" in d:
        H = d["H"]
        if not isinstance(H, (int, float)) or not 1 / 3 < H <= 1:
            raise ConfigError("driver.H", "must lie in (1/3, 1]")
        extra = set(d) - {"H", "m", "n_f"}
    elif "deterministic" in d:
        kind = d["deterministic"]
        if kind == "linear":
            if "slope" not in d:
                raise ConfigError("driver.slope", "missing")
            extra = set(d) - {"deterministic", "slope", "m", "n_f"}
        elif kind == "sinusoid":
            for key in ("amplitudes", "frequencies"):
                if key not in d:
                    raise ConfigError(f"driver.{key}", "missing")
            amps, freqs = d["amplitudes"], d["frequencies"]
            if (isinstance(amps, list) and isinstance(freqs, list)
                    and len(amps) != len(freqs)):
                raise ConfigError("driver.frequencies",
                                  "length must match amplitudes")
            extra = set(d) - {"deterministic", "amplitudes", "frequencies", "m", "n_f"}
        else:
            raise ConfigError("driver.deterministic", f"unknown kind {kind!r}")
    else:
        raise ConfigError("driver", "needs either 'H' or 'deterministic'")
    if extra:
        raise ConfigError(f"driver.{sorted(extra)[0]}", "unknown field")


def _check_psi(p):
    if not isinstance(p, dict) or "kind" not in p:
        raise ConfigError("psi", "must be an object with a 'kind'")
    kind = p["kind"]
    if kind == "zero":
        extra = set(p) - {"kind"}
    elif kind == "mode":
        extra = set(p) - {"kind", "k", "amplitude"}
        if "k" not in p or not isinstance(p["k"], int) or p["k"] < 1:
            raise ConfigError("psi.k", "must be a positive integer")
    elif kind == "decay":
        extra = set(p) - {"kind", "amplitude", "rate"}
        if p.get("rate", 1.0) <= 0:
            raise ConfigError("psi.rate", "must be positive")
    else:
        raise ConfigError("psi.kind", f"unknown kind {kind!r}")
    if extra:
        raise ConfigError(f"psi.{sorted(extra)[0]}", "unknown field")


def parse_config(raw: dict) -> ExperimentConfig:
    unknown = set(raw) - set(_REQUIRED) - set(_OPTIONAL)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")

    kind = _need(raw, "kind", str)
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {KINDS}")
    K = _need(raw, "K", int)
    G = _need(raw, "G", int)
    if K < 1:
        raise ConfigError("K", "must be >= 1")
    if G < 2 * K:
        raise ConfigError("G", "must be >= 2K for alias-free products")
    a = _need(raw, "a", (int, float))
    c = _need(raw, "c", (int, float))
    if a <= 0:
        raise ConfigError("a", "must be positive")
    if c < 0:
        raise ConfigError("c", "must be nonnegative")

    _check_driver(_need(raw, "driver", dict))

    f = _need(raw, "f", list)
    for entry in f:
        name = entry if isinstance(entry, str) else entry.get("name") if isinstance(entry, dict) else None
        if name not in REGISTRY:
            raise ConfigError("f", f"unknown component {name!r}; choices: {sorted(REGISTRY)}")

    _check_psi(_need(raw, "psi", dict))

    gamma = _need(raw, "gamma", (int, float))
    gamma_prime = _need(raw, "gamma_prime", (int, float))
    if not 1 / 3 < gamma < 1 / 2:
        raise ConfigError("gamma", "must lie in (1/3, 1/2)")
    if not 1 - gamma < gamma_prime < gamma + 1 / 2:
        raise ConfigError("gamma_prime", f"must lie in ({1 - gamma}, {gamma + 0.5})")

    n_min = _need(raw, "n_min", int)
    n_max = _need(raw, "n_max", int)
    q_off = _need(raw, "q_off", int)
    if n_min < 0 or n_max < n_min:
        raise ConfigError("n_min", "need 0 <= n_min <= n_max")
    if q_off < 0:
        raise ConfigError("q_off", "must be nonnegative")
    n_f = raw["driver"]["n_f"]
    if n_max + q_off > n_f:
        raise ConfigError("n_max", f"n_max + q_off must not exceed driver.n_f = {n_f}")

    seeds = _need(raw, "seeds", list)
    if not seeds or not all(isinstance(s, int) and s >= 0 for s in seeds):
        raise ConfigError("seeds", "must be a nonempty list of nonnegative integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", "must not repeat")

    out = raw.get("out", _OPTIONAL["out"])
    if not isinstance(out, str):
        raise ConfigError("out", "must be a string path")

    # normalize f entries to hashable tuples
    f_norm = tuple(entry if isinstance(entry, str) else tuple(sorted(entry.items())) for entry in f)
    return ExperimentConfig(kind, K, G, float(a), float(c), dict(raw["driver"]),
                            f_norm, dict(raw["psi"]), float(gamma), float(gamma_prime),
                            n_min, n_max, tuple(seeds), q_off, out)


def load_raw(path) -> dict:
    """Read a config file into a plain dict without validating it."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError("<json>", str(err)) from err
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return raw


def load_config(path) -> ExperimentConfig:
    return parse_config(load_raw(path))


# ---------------------------------------------------------------------------
# config -> objects

def _f_specs(cfg: ExperimentConfig):
    return [entry if isinstance(entry, str) else dict(entry) for entry in cfg.f]


def build_path(cfg: ExperimentConfig, seed: int):
    d = cfg.driver
    if "H" in d:
        return sample_fbm(d["H"], d.get("m", 1), d["n_f"], seed)
    kind = d["deterministic"]
    params = {k: v for k, v in d.items() if k not in ("deterministic", "m", "n_f")}
    return make_deterministic(kind, params, cfg.m, d["n_f"])


def make_psi(basis, spec: dict) -> Field:
    coeff = np.zeros(basis.K)
    if spec["kind"] == "mode":
        k = spec["k"]
        if k > basis.K:
            raise ConfigError("psi.k", f"mode {k} exceeds K={basis.K}")
        coeff[k - 1] = spec.get("amplitude", 1.0)
    elif spec["kind"] == "decay":
        amp = spec.get("amplitude", 1.0)
        rate = spec.get("rate", 1.0)
        coeff = amp * np.exp(-rate * np.arange(1, basis.K + 1))
    return Field(basis, coeff=coeff)


def build_problem(cfg: ExperimentConfig, path, enhancement: str = "geometric"):
    basis = make_basis(cfg.K, cfg.a, cfg.c, cfg.G)
    if enhancement == "geometric":
        e = enhance_geometric(path)
    elif enhancement == "ito":
        e = enhance_ito(path)
    else:
        raise ValueError(f"unknown enhancement {enhancement!r}")
    crp = ConvRoughPath(basis, e, q_off=cfg.q_off)
    f = make_vector_field(_f_specs(cfg))
    psi = make_psi(basis, cfg.psi)
    return Problem(basis, e, crp, f, psi, cfg.gamma, cfg.gamma_prime)


def driver_descriptor(cfg: ExperimentConfig) -> str:
    d = cfg.driver
    if "H" in d:
        return f"fbm(H={d['H']},m={d.get('m', 1)},n_f={d['n_f']})"
    parts = ",".join(f"{k}={d[k]}" for k in sorted(d) if k not in ("deterministic", "n_f"))
    return f"{d['deterministic']}({parts},n_f={d['n_f']})"
