"""Node geometry, large-scale fading and normalized powers.

One call to :func:`draw_scenario` is one outer Monte-Carlo draw: node
positions, shadowing and every large-scale coefficient of the monitoring
network.  Small-scale fading lives in :mod:`cfmonitor.channel`.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BOLTZMANN = 1.381e-23
T0_KELVIN = 290.0

PRECODERS = ("ZF", "MRT")
CSI_CASES = ("case1", "case2")


class ConfigError(ValueError):
    """Invalid system parameters or config file content."""


@dataclass(frozen=True)
class SystemParams:
    """System parameters; defaults are the reference simulation setup.

    Distances: ``D`` in km, ``d0``/``d1`` and antenna heights in metres.
    Powers in watts, ``carrier_freq`` in GHz.
    """

    M: int = 8
    N: int = 30
    Nt: int = 4
    Nr: int = 4
    D: float = 1.0
    tau: int = 300
    tau_r: int = 40
    tau_t: int = 40
    P_r: float = 0.1
    P_t: float = 0.1
    P_J: float = 0.2
    bandwidth: float = 20e6
    noise_figure: float = 9.0
    carrier_freq: float = 1.9
    h_MN: float = 15.0
    h_u: float = 1.65
    sigma_sh: float = 8.0
    d0: float = 10.0
    d1: float = 50.0
    precoder_kind: str = "ZF"
    csi_case: str = "case1"
    rng_seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("M", "N", "Nt", "Nr", "tau", "tau_r", "tau_t"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("D", "P_r", "P_t", "P_J", "bandwidth", "carrier_freq",
                     "h_MN", "h_u", "d0", "d1"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        if self.sigma_sh < 0:
            raise ConfigError("sigma_sh must be nonnegative")
        if self.d0 >= self.d1:
            raise ConfigError("path-loss breakpoints need d0 < d1")
        if self.tau_r < self.Nr or self.tau_t < self.Nr:
            raise ConfigError("pilot lengths must satisfy tau_r, tau_t >= Nr")
        if self.tau <= self.tau_r + self.tau_t:
            raise ConfigError("coherence interval must exceed tau_r + tau_t")
        if self.precoder_kind not in PRECODERS:
            raise ConfigError(f"precoder_kind must be one of {PRECODERS}")
        if self.csi_case not in CSI_CASES:
            raise ConfigError(f"csi_case must be one of {CSI_CASES}")
        if self.precoder_kind == "ZF" and self.Nt < self.Nr:
            raise ConfigError("ZF precoding needs Nt >= Nr")

    @property
    def prelog(self) -> float:
        return 1.0 - (self.tau_t + self.tau_r) / self.tau

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_params(path, base: SystemParams | None = None) -> SystemParams:
    """Read ``key = value`` lines into :class:`SystemParams`.

    Keys are field names; ``#`` starts a comment.  An optional ``[system]``
    header is accepted.  Unknown keys are an error.
    """
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[system]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    base = base or SystemParams()
    types = {f.name: f.type for f in dataclasses.fields(SystemParams)}
    changes = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError(f"unknown parameter {key!r}")
            current = getattr(base, key)
            try:
                if isinstance(current, bool):
                    value = raw.strip().lower() in ("1", "true", "yes")
                elif isinstance(current, int):
                    value = int(raw)
                elif isinstance(current, float):
                    value = float(raw)
                else:
                    value = raw.strip()
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
            changes[key] = value
    return base.replace(**changes)


def noise_power(params: SystemParams) -> float:
    """Thermal noise power in watts, ``B k_B T0 NF``."""
    return params.bandwidth * BOLTZMANN * T0_KELVIN * 10 ** (params.noise_figure / 10)


def hata_offset_db(params: SystemParams) -> float:
    """COST-231 Hata constant ``L`` (dB) with the carrier in MHz."""
    f = params.carrier_freq * 1e3
    lf = np.log10(f)
    return (46.3 + 33.9 * lf - 13.82 * np.log10(params.h_MN)
            - (1.1 * lf - 0.7) * params.h_u + (1.56 * lf - 0.8))


def path_loss_db(distance, params: SystemParams):
    """Three-slope path-loss gain in dB (a negative number).

    ``distance`` is in metres.  The log-distance terms take kilometres, the
    unit paired with the MHz form of ``L``; ``d0`` and ``d1`` are compared
    in metres.
    """
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be nonnegative")
    L = hata_offset_db(params)
    d0_km, d1_km = params.d0 / 1e3, params.d1 / 1e3
    d_km = np.maximum(d / 1e3, d0_km)
    far = -L - 35 * np.log10(d_km)
    mid = -L - 15 * np.log10(d1_km) - 20 * np.log10(d_km)
    near = -L - 15 * np.log10(d1_km) - 20 * np.log10(d0_km)
    out = np.where(d > params.d1, far, np.where(d > params.d0, mid, near))
    return out if out.ndim else float(out)


def wrapped_distance(a, b, side):
    """Torus distance between points ``a`` and ``b`` in a ``side`` square."""
    delta = np.abs(np.asarray(a, float) - np.asarray(b, float))
    delta = np.minimum(delta, side - delta)
    return np.sqrt(np.sum(delta ** 2, axis=-1))


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class ScenarioRealization:
    """Large-scale state for one geometry draw.

    ``beta_mm`` is symmetric with a zero diagonal.  ``si_coupling[m, m']``
    maps the transmit power of node ``m'`` to extra per-antenna noise at
    node ``m``; it is zero for distributed nodes and only used by the
    co-located baseline.
    """

    params: SystemParams
    beta_tr: float
    beta_mr: np.ndarray
    beta_tm: np.ndarray
    beta_mm: np.ndarray
    rho_r: float
    rho_t: float
    rho_J: float
    pos_mn: np.ndarray = field(default=None)
    pos_ut: np.ndarray = field(default=None)
    pos_ur: np.ndarray = field(default=None)
    si_coupling: np.ndarray = field(default=None)

    def __post_init__(self):
        M = len(self.beta_mr)
        beta_mm = np.array(self.beta_mm, dtype=float)
        si = (np.zeros((M, M)) if self.si_coupling is None
              else np.array(self.si_coupling, dtype=float))
        object.__setattr__(self, "beta_mr", np.array(self.beta_mr, dtype=float))
        object.__setattr__(self, "beta_tm", np.array(self.beta_tm, dtype=float))
        object.__setattr__(self, "beta_mm", beta_mm)
        object.__setattr__(self, "si_coupling", si)
        if beta_mm.shape != (M, M) or len(self.beta_tm) != M:
            raise ValueError("inconsistent number of monitor nodes")
        if np.any(np.diag(beta_mm) != 0):
            raise ValueError("beta_mm must have a zero diagonal")
        _readonly(self.beta_mr, self.beta_tm, self.beta_mm, self.si_coupling)

    @property
    def M(self) -> int:
        return len(self.beta_mr)

    @classmethod
    def from_betas(cls, params, beta_tr, beta_mr, beta_tm, beta_mm=None,
                   rho_r=None, rho_t=None, rho_J=None, **extra):
        """Build a realization from given coefficients (no geometry)."""
        M = len(beta_mr)
        if beta_mm is None:
            beta_mm = np.zeros((M, M))
        sigma2 = noise_power(params)
        return cls(
            params=params, beta_tr=float(beta_tr), beta_mr=beta_mr,
            beta_tm=beta_tm, beta_mm=beta_mm,
            rho_r=params.P_r / sigma2 if rho_r is None else rho_r,
            rho_t=params.P_t / sigma2 if rho_t is None else rho_t,
            rho_J=params.P_J / sigma2 if rho_J is None else rho_J,
            **extra,
        )


def draw_scenario(params: SystemParams, rng: np.random.Generator) -> ScenarioRealization:
    """Uniform node drop in the wrapped ``D x D`` square with log-normal shadowing."""
    M = params.M
    side = params.D * 1e3
    pos_mn = rng.uniform(0, side, size=(M, 2))
    pos_ut = rng.uniform(0, side, size=2)
    pos_ur = rng.uniform(0, side, size=2)

    def gain(dist, z):
        return 10 ** ((path_loss_db(dist, params) + params.sigma_sh * z) / 10)

    z = rng.standard_normal(1 + 2 * M)
    beta_tr = gain(wrapped_distance(pos_ut, pos_ur, side), z[0])
    beta_mr = gain(wrapped_distance(pos_mn, pos_ur, side), z[1:1 + M])
    beta_tm = gain(wrapped_distance(pos_mn, pos_ut, side), z[1 + M:])

    iu = np.triu_indices(M, k=1)
    z_mm = rng.standard_normal(len(iu[0]))
    d_mm = wrapped_distance(pos_mn[iu[0]], pos_mn[iu[1]], side)
    beta_mm = np.zeros((M, M))
    beta_mm[iu] = gain(d_mm, z_mm)
    beta_mm = beta_mm + beta_mm.T

    sigma2 = noise_power(params)
    for p in (pos_mn, pos_ut, pos_ur):
        p.setflags(write=False)
    return ScenarioRealization(
        params=params, beta_tr=float(beta_tr), beta_mr=beta_mr, beta_tm=beta_tm,
        beta_mm=beta_mm, rho_r=params.P_r / sigma2, rho_t=params.P_t / sigma2,
        rho_J=params.P_J / sigma2, pos_mn=pos_mn, pos_ut=pos_ut, pos_ur=pos_ur,
    )
