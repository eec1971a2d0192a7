"""Spectral efficiency at the UR and at the CPU, and the MSP estimator.

The work per geometry is split in two.  :func:`build_bank` draws the
small-scale realizations once (channels, both training phases, precoder,
combiners) and keeps only the reductions the SE formulas need.  The
config-dependent part (which nodes observe, how much jamming power) is
then cheap to evaluate, which is what the optimizer relies on.

Conditional expectations that only involve zero-mean Gaussian channels
are evaluated in closed form:

* inter-MN jamming at observer ``m``: ``E{F_m F_l^H} = delta_ml J_m I_N``
  with ``J_m = sum_m' (1 - alpha_m') beta_mm' N sum_n pi[m', n] gamma_m'r``;
* estimation error: ``E{B~_m Lam B~_m^H} = tr(Lam C_e,m) I_N``;
* noise: ``E{V_m^H w_m w_l^H V_l} = delta_ml V_m^H V_m``.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .channel import (
    beamforming_training,
    crandn,
    draw_channels,
    effective_channels,
    effective_moments,
    mmse_gain,
    uplink_training,
)
from .precoding import DegenerateChannelError, build_data_precoder, hermitian, load_powers, mmse_combine
from .scenario import ScenarioRealization, SystemParams, draw_scenario
from .transmission import MonitoringConfig

# stream tags for task-indexed RNGs
GEOMETRY, FADING, MODES, SEARCH = 0, 1, 2, 3


def task_rng(seed, *keys):
    """Generator indexed by ``(seed, *keys)``; independent of execution order."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])


@dataclass(frozen=True)
class ExpectationPlan:
    """Monte-Carlo depths.

    ``n_outer`` small-scale draws per geometry carry the expectations inside
    the SE formulas; ``n_inner`` is the depth of the sampled conditional
    expectations used for cross-checks; ``n_mc`` feeds the moment cache.
    """

    n_inner: int = 200
    n_outer: int = 200
    n_geom: int = 500
    n_mc: int = 5000

    def __post_init__(self):
        if self.n_inner < 100 or self.n_outer < 100:
            raise ValueError("plan too shallow (n_inner, n_outer >= 100)")
        if self.n_geom < 1:
            raise ValueError("n_geom must be positive")

    def scaled(self, factor):
        """Shrink every depth by ``factor`` (respecting the minimums)."""
        return ExpectationPlan(
            n_inner=max(100, self.n_inner // factor),
            n_outer=max(100, self.n_outer // factor),
            n_geom=max(1, self.n_geom // factor),
            n_mc=max(1000, self.n_mc // factor),
        )


def log2det_hpd(X):
    """``log2 det`` of Hermitian positive-definite matrices via Cholesky."""
    X = (X + hermitian(X)) / 2
    L = np.linalg.cholesky(X)
    return 2 * np.sum(np.log2(np.abs(np.diagonal(L, axis1=-2, axis2=-1))), axis=-1)


@dataclass
class GeometryBank:
    """Small-scale draws for one geometry, reduced for SE evaluation.

    Shapes use ``n`` draws, ``M`` nodes and ``Nr`` streams:

    ``a_sq (n, Nr, Nr)``
        ``|a_{n,n'}|^2`` of the true effective channel.
    ``Xhat, X (n, M, Nr, Nr)``
        ``V_m^H Bhat_m Lam^{1/2}`` and ``V_m^H B_m Lam^{1/2}``.
    ``Q (n, M, Nr, Nr)``
        ``V_m^H V_m``.
    ``err (M,)``
        ``tr(Lam C_e,m)``, the per-antenna estimation-error power.
    """

    real: ScenarioRealization
    kind: str
    lam: np.ndarray
    gamma_mr: np.ndarray
    a_sq: np.ndarray
    Xhat: np.ndarray
    X: np.ndarray
    Q: np.ndarray
    err: np.ndarray
    Xbar: np.ndarray = field(init=False)
    XX: np.ndarray = field(init=False)
    Qbar: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.X.shape[0]
        self.Xbar = self.X.mean(axis=0)
        self.XX = np.einsum("kmij,klhj->mlih", self.X, self.X.conj()) / n
        self.Qbar = self.Q.mean(axis=0)

    @property
    def params(self) -> SystemParams:
        return self.real.params

    @property
    def n(self):
        return self.a_sq.shape[0]

    @property
    def prelog(self):
        return self.params.prelog


def _precoders_with_redraw(channels, uplink, real, kind, rng):
    """Build ``W`` for every draw; degenerate ZF draws get a fresh UT-UR channel."""
    p = real.params
    G_tr, Ghat_tr = channels.G_tr.copy(), uplink.Ghat_tr.copy()
    for _ in range(100):
        try:
            return G_tr, build_data_precoder(Ghat_tr, kind)
        except DegenerateChannelError as exc:
            bad = np.flatnonzero(exc.bad)
            fresh = np.sqrt(real.beta_tr) * crandn(rng, (len(bad), p.Nt, p.Nr))
            y = np.sqrt(p.tau_r * real.rho_r) * fresh + crandn(rng, fresh.shape)
            G_tr[bad] = fresh
            Ghat_tr[bad] = mmse_gain(p.tau_r, real.rho_r, real.beta_tr) * y
    raise DegenerateChannelError("could not draw a regular UT-UR channel")


def build_bank(real: ScenarioRealization, plan: ExpectationPlan, rng, kind=None,
               monitor_csi="estimated", moments=None) -> GeometryBank:
    """Draw ``plan.n_outer`` small-scale realizations of one geometry.

    ``monitor_csi="perfect"`` replaces the MNs' estimates by the true
    effective channels (the genie reference).
    """
    p = real.params
    kind = p.precoder_kind if kind is None else kind
    if moments is None:
        moments = effective_moments(kind, real, plan.n_mc, rng)
    channels = draw_channels(real, rng, n=plan.n_outer, inter_mn=False)
    uplink = uplink_training(channels, real, rng)
    G_tr, W = _precoders_with_redraw(channels, uplink, real, kind, rng)
    channels = type(channels)(G_tr, channels.G_mr, channels.G_tm, None)
    est = beamforming_training(channels, W, real, rng, moments, kind=kind)
    A, B = effective_channels(channels, W)
    lam = load_powers(p.Nr)
    sq_lam = np.sqrt(lam)

    if monitor_csi == "perfect":
        Bhat, err = B, np.zeros(real.M)
    elif monitor_csi == "estimated":
        Bhat = est.Bhat
        err = np.real(np.einsum("i,mii->m", lam, est.err_cov_b))
    else:
        raise ValueError("monitor_csi must be 'estimated' or 'perfect'")

    V = mmse_combine(Bhat, real.rho_t)
    VH = hermitian(V)
    return GeometryBank(
        real=real, kind=kind, lam=lam, gamma_mr=uplink.gamma_mr,
        a_sq=np.abs(A) ** 2,
        Xhat=(VH @ Bhat) * sq_lam, X=(VH @ B) * sq_lam, Q=VH @ V, err=err,
    )


def jamming_at_ur(bank_or_real, config: MonitoringConfig, gamma_mr):
    """Per-UR-antenna jamming power over ``rho_J`` (the ``I`` term).

    ``N sum_n' sum_m (1-a_m) pi[m,n'] beta_mr gamma_mr
    + N^2 (sum_m (1-a_m) sqrt(pi[m,n]) gamma_mr)^2``.
    """
    real = getattr(bank_or_real, "real", bank_or_real)
    N = real.params.N
    jam = (1 - config.alpha)[:, None]
    g = np.asarray(gamma_mr, float)[:, None]
    spread = N * np.sum(jam * config.pi * real.beta_mr[:, None] * g)
    coherent = N ** 2 * np.sum(jam * np.sqrt(config.pi) * g, axis=0) ** 2
    return spread + coherent


def jamming_at_mn(real: ScenarioRealization, config: MonitoringConfig, gamma_mr):
    """Per-antenna jamming plus self-interference power at each node, over ``rho_J``."""
    N = real.params.N
    tx = (1 - config.alpha) * N * np.sum(config.pi * np.asarray(gamma_mr)[:, None], axis=1)
    return real.beta_mm @ tx + real.si_coupling @ tx


def sinr_ur(bank: GeometryBank, config: MonitoringConfig):
    """Per-antenna SINR at the UR for every draw, shape ``(n, Nr)``."""
    real = bank.real
    a_sq, lam = bank.a_sq, bank.lam
    desired = real.rho_t * lam * np.diagonal(a_sq, axis1=-2, axis2=-1)
    inter = real.rho_t * (a_sq @ lam) - desired
    jam = real.rho_J * jamming_at_ur(bank, config, bank.gamma_mr)
    return desired / (1 + inter + jam)


def se_ur_samples(bank, config):
    return bank.prelog * np.log2(1 + sinr_ur(bank, config).sum(axis=-1))


def se_ur(bank: GeometryBank, config: MonitoringConfig) -> float:
    """Ergodic SE of the untrusted link with perfect effective CSI at the UR."""
    return float(np.mean(se_ur_samples(bank, config)))


def _noise_weights(bank, config):
    real = bank.real
    return 1 + real.rho_J * jamming_at_mn(real, config, bank.gamma_mr)


def se_cpu_case1_samples(bank: GeometryBank, config: MonitoringConfig):
    obs = config.observers
    if len(obs) == 0:
        return np.zeros(bank.n)
    rho_t = bank.real.rho_t
    s = _noise_weights(bank, config)[obs] + rho_t * bank.err[obs]
    D = bank.Xhat[:, obs].sum(axis=1)
    Psi = np.einsum("m,kmij->kij", s, bank.Q[:, obs])
    if len(obs) * bank.params.N < D.shape[-1]:
        # fewer observing antennas than streams: Psi is rank deficient, but D
        # lies in its range, so the pseudo-inverse gives the same quadratic form
        ups = rho_t * hermitian(D) @ np.linalg.pinv(Psi, rcond=1e-10, hermitian=True) @ D
    else:
        ups = rho_t * hermitian(D) @ np.linalg.solve(Psi, D)
    eye = np.eye(D.shape[-1])
    return bank.prelog * log2det_hpd(eye + ups)


def se_cpu_case1(bank: GeometryBank, config: MonitoringConfig) -> float:
    """CPU SE when the MNs forward their effective-channel estimates."""
    return float(np.mean(se_cpu_case1_samples(bank, config)))


def se_cpu_case2(bank: GeometryBank, config: MonitoringConfig) -> float:
    """CPU SE from statistics only (use-and-forget form, no outer expectation)."""
    obs = config.observers
    if len(obs) == 0:
        return 0.0
    rho_t = bank.real.rho_t
    s = _noise_weights(bank, config)[obs]
    mean_D = bank.Xbar[obs].sum(axis=0)
    DD = bank.XX[np.ix_(obs, obs)].sum(axis=(0, 1))
    Psi = (np.einsum("m,mij->ij", s, bank.Qbar[obs])
           + rho_t * (DD - mean_D @ hermitian(mean_D)))
    ups = rho_t * hermitian(mean_D) @ np.linalg.solve(Psi, mean_D)
    return float(bank.prelog * log2det_hpd(np.eye(len(ups)) + ups))


@dataclass(frozen=True)
class SEReport:
    """SE values and MSP indicators for one geometry and config.

    ``p1``/``p2`` are the per-draw success frequencies inside the geometry.
    """

    se_r: float
    se_c1: float
    se_c2: float
    prelog: float
    p1: float
    p2: float

    @property
    def msp1(self) -> int:
        return int(self.se_c1 >= self.se_r)

    @property
    def msp2(self) -> int:
        return int(self.se_c2 >= self.se_r)

    def msp(self, case) -> int:
        return self.msp1 if case in ("case1", 1) else self.msp2


def evaluate(bank: GeometryBank, config: MonitoringConfig) -> SEReport:
    r = se_ur_samples(bank, config)
    c1 = se_cpu_case1_samples(bank, config)
    c2 = se_cpu_case2(bank, config)
    return SEReport(se_r=float(r.mean()), se_c1=float(c1.mean()), se_c2=c2,
                    prelog=bank.prelog, p1=float(np.mean(c1 >= r)),
                    p2=float(np.mean(c2 >= r)))


def local_msp(bank: GeometryBank, config: MonitoringConfig, case="case1") -> float:
    """Fraction of the bank's draws in which the CPU matches the UR rate."""
    r = se_ur_samples(bank, config)
    if case in ("case1", 1):
        c = se_cpu_case1_samples(bank, config)
    else:
        c = se_cpu_case2(bank, config)
    return float(np.mean(c >= r))


@dataclass(frozen=True)
class SharePolicy:
    """Geometry-free config: mode flags plus per-node budget shares."""

    alpha: np.ndarray
    shares: np.ndarray

    def __call__(self, bank, g=None, seed=None):
        return MonitoringConfig.from_shares(np.asarray(self.alpha, int), self.shares,
                                            bank.gamma_mr, bank.params.N)


@dataclass
class MSPResult:
    msp: float
    stderr: float
    reports: list
    configs: list

    @property
    def n(self):
        return len(self.reports)


def binomial_stderr(p, n):
    return math.sqrt(max(p * (1 - p), 0.0) / n) if n else float("nan")


def geometry_bank(params, plan, seed, g, kind=None, monitor_csi="estimated",
                  transform=None):
    """Bank of geometry ``g``; identical for every scheme given ``(seed, g)``.

    ``transform`` maps the drawn realization to a variant (e.g. a
    co-located array) before the small-scale draws.
    """
    real = draw_scenario(params, task_rng(seed, g, GEOMETRY))
    if transform is not None:
        real = transform(real)
    return build_bank(real, plan, task_rng(seed, g, FADING), kind=kind,
                      monitor_csi=monitor_csi)


def msp_estimate(params: SystemParams, config, plan: ExpectationPlan, n_geom=None,
                 seed=None, case=None, kind=None, map_fn=map, monitor_csi="estimated",
                 transform=None) -> MSPResult:
    """Frequency over geometries of ``se_c >= se_r``, with binomial stderr.

    ``config`` is a :class:`MonitoringConfig` (used as is in every
    geometry) or a callable ``(bank, g, seed) -> MonitoringConfig``.
    ``map_fn`` may be an executor's ``map``; results keep geometry order.
    """
    n_geom = plan.n_geom if n_geom is None else n_geom
    if n_geom < 1:
        raise ValueError("n_geom must be positive")
    seed = params.rng_seed if seed is None else seed
    case = params.csi_case if case is None else case
    tasks = [(params, plan, seed, g, kind, config, monitor_csi, transform)
             for g in range(n_geom)]
    results = list(map_fn(_msp_task, tasks))
    reports = [r for r, _ in results]
    hits = [rep.msp(case) for rep in reports]
    p = float(np.mean(hits))
    return MSPResult(msp=p, stderr=binomial_stderr(p, n_geom), reports=reports,
                     configs=[c for _, c in results])


def _msp_task(task):
    params, plan, seed, g, kind, config, monitor_csi, transform = task
    bank = geometry_bank(params, plan, seed, g, kind=kind, monitor_csi=monitor_csi,
                         transform=transform)
    cfg = config(bank, g, seed) if callable(config) else config
    return evaluate(bank, cfg), cfg


def config_hash(config: MonitoringConfig) -> str:
    h = hashlib.sha1(config.alpha.tobytes() + np.ascontiguousarray(config.pi).tobytes())
    return h.hexdigest()[:12]


REPORT_HEADER = ("geometry_id", "config_hash", "se_r", "se_c1", "se_c2", "msp1", "msp2")


def append_reports(path, reports, configs, start_id=0, extra=None):
    """Append SE rows to ``path``; the header is written for a new file.

    ``extra`` is an optional mapping of constant columns (e.g. a baseline tag).
    """
    path = Path(path)
    extra = dict(extra or {})
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(REPORT_HEADER + tuple(extra))
        for i, (rep, cfg) in enumerate(zip(reports, configs)):
            w.writerow([start_id + i, config_hash(cfg), f"{rep.se_r:.10g}",
                        f"{rep.se_c1:.10g}", f"{rep.se_c2:.10g}", rep.msp1, rep.msp2,
                        *extra.values()])


def signaling_load(params: SystemParams, M_o: int, case="case1"):
    """Complex scalars per coherence block and statistical parameters at the CPU."""
    if M_o < 0:
        raise ValueError("M_o must be nonnegative")
    scalars = (params.tau - (params.tau_t + params.tau_r)) * params.Nr
    stats = params.Nr ** 2 * M_o if case in ("case1", 1) else 0
    return scalars, stats
