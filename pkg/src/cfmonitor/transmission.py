"""Data and jamming transmission, reception and CPU aggregation.

Jamming powers are held in physical units ``pi[m, n]``.  The per-node
budget reads ``(1 - alpha_m) * N * sum_n gamma_mr[m] * pi[m, n] <= 1``:
``N gamma_mr`` is the mean-square norm of one column of ``Ghat_mr``, which
makes the budget equivalent to ``E{||s_m^J||^2} <= rho_J``.  A budget
*share* ``u[m, n] = N gamma_mr[m] pi[m, n]`` is the geometry-free
representation used by the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelSet, crandn
from .precoding import (  # noqa: F401  re-exported
    DegenerateChannelError,
    build_data_precoder,
    hermitian,
    load_powers,
    mmse_combine,
)

FEASIBILITY_TOL = 1e-9


class InfeasibleConfigError(ValueError):
    """A jamming allocation breaks the per-node power budget."""


@dataclass(frozen=True)
class MonitoringConfig:
    """Mode flags ``alpha`` (1 = observe, 0 = jam) and jamming powers ``pi``."""

    alpha: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha)
        pi = np.asarray(self.pi, dtype=float)
        if alpha.ndim != 1 or pi.ndim != 2 or pi.shape[0] != alpha.shape[0]:
            raise ValueError("alpha must be (M,) and pi must be (M, Nr)")
        if not np.all(np.isin(alpha, (0, 1))):
            raise ValueError("alpha entries must be 0 or 1")
        object.__setattr__(self, "alpha", alpha.astype(int))
        object.__setattr__(self, "pi", pi)

    @property
    def M(self):
        return len(self.alpha)

    @property
    def observers(self):
        return np.flatnonzero(self.alpha == 1)

    @property
    def jammers(self):
        return np.flatnonzero(self.alpha == 0)

    @classmethod
    def from_shares(cls, alpha, shares, gamma_mr, N):
        shares = np.asarray(shares, dtype=float)
        gamma_mr = np.asarray(gamma_mr, dtype=float)
        scale = N * gamma_mr[:, None]
        pi = np.divide(shares, scale, out=np.zeros_like(shares), where=scale > 0)
        return cls(alpha=alpha, pi=pi)

    def shares(self, gamma_mr, N):
        return N * np.asarray(gamma_mr, float)[:, None] * self.pi

    def budget_usage(self, gamma_mr, N):
        """Left-hand side of the per-node power constraint."""
        return (1 - self.alpha) * self.shares(gamma_mr, N).sum(axis=1)

    def is_feasible(self, gamma_mr, N, tol=FEASIBILITY_TOL):
        return bool(np.all(self.pi >= 0)
                    and np.all(self.budget_usage(gamma_mr, N) <= 1 + tol))


def equal_power_config(alpha, gamma_mr, N, Nr):
    """Every jamming node spends its full budget, split evenly over streams."""
    alpha = np.asarray(alpha, dtype=int)
    shares = np.where(alpha[:, None] == 0, 1.0 / Nr, 0.0) * np.ones((1, Nr))
    return MonitoringConfig.from_shares(alpha, shares, gamma_mr, N)


@dataclass(frozen=True)
class JammingPlan:
    """MR jamming precoders ``WJ[m] = Ghat_mr[m]`` with validated powers."""

    WJ: np.ndarray
    pi: np.ndarray
    alpha: np.ndarray

    def signals(self, rho_J, xJ):
        """Transmitted jamming vectors ``s_m^J`` (shape ``(..., M, N)``)."""
        amp = ((1 - self.alpha) * np.sqrt(rho_J))[:, None]
        weighted = np.sqrt(self.pi) * xJ[..., None, :]
        return amp * (self.WJ @ weighted[..., None])[..., 0]


def build_jamming(config: MonitoringConfig, Ghat_mr, gamma_mr, N=None) -> JammingPlan:
    N = np.shape(Ghat_mr)[-2] if N is None else N
    if not config.is_feasible(gamma_mr, N):
        usage = config.budget_usage(gamma_mr, N)
        raise InfeasibleConfigError(
            f"jamming budget exceeded: max usage {usage.max():.6g} > 1")
    return JammingPlan(WJ=np.asarray(Ghat_mr), pi=config.pi, alpha=config.alpha)


@dataclass(frozen=True)
class ReceivedSignals:
    """Per-slot received signals with their additive parts.

    ``y_r = data_r + jam_r + noise_r`` and, for every node,
    ``y_m = data_m + jam_m + noise_m`` (all zero for jamming nodes).
    """

    y_r: np.ndarray
    data_r: np.ndarray
    jam_r: np.ndarray
    noise_r: np.ndarray
    y_m: np.ndarray
    data_m: np.ndarray
    jam_m: np.ndarray
    noise_m: np.ndarray
    x: np.ndarray
    xJ: np.ndarray


def transmit_data(W, Lam, rho_t, x):
    """``s_t = sqrt(rho_t) W Lam^{1/2} x``."""
    return np.sqrt(rho_t) * (W @ (np.sqrt(Lam) * x)[..., None])[..., 0]


def receive(channels: ChannelSet, W, Lam, jamming: JammingPlan, config: MonitoringConfig,
            real, rng, x=None, xJ=None, noise_scale=1.0) -> ReceivedSignals:
    """Synthesize one symbol slot at the UR and at every MN."""
    p = real.params
    lead = channels.G_tr.shape[:-2]
    x = crandn(rng, lead + (p.Nr,)) if x is None else x
    xJ = crandn(rng, lead + (p.Nr,)) if xJ is None else xJ
    if channels.G_mm is None:
        raise ValueError("receive() needs the inter-MN channels")
    alpha = config.alpha[:, None]

    s_t = transmit_data(W, Lam, real.rho_t, x)
    s_J = jamming.signals(real.rho_J, xJ)  # (..., M, N)

    data_r = (hermitian(channels.G_tr) @ s_t[..., None])[..., 0]
    jam_r = np.einsum("...mnk,...mn->...k", channels.G_mr.conj(), s_J)
    noise_r = noise_scale * crandn(rng, data_r.shape)

    data_m = alpha * (hermitian(channels.G_tm) @ s_t[..., None, :, None])[..., 0]
    # G_mm[m, m'] carries node m' -> node m; received part is G_mm^H s_m'
    jam_m = alpha * np.einsum("...abkn,...bk->...an", channels.G_mm.conj(), s_J)
    noise_m = alpha * noise_scale * crandn(rng, data_m.shape)
    return ReceivedSignals(
        y_r=data_r + jam_r + noise_r, data_r=data_r, jam_r=jam_r, noise_r=noise_r,
        y_m=data_m + jam_m + noise_m, data_m=data_m, jam_m=jam_m, noise_m=noise_m,
        x=x, xJ=xJ,
    )


@dataclass(frozen=True)
class CombinedSignal:
    """CPU output ``z_c`` and its desired / noise / interference parts."""

    z_c: np.ndarray
    d_c: np.ndarray
    n_c: np.ndarray
    i_c: np.ndarray
    V: np.ndarray


def aggregate_cpu(config: MonitoringConfig, V, rx: ReceivedSignals) -> CombinedSignal:
    """``z_c = sum_m alpha_m V_m^H y_m`` with the per-part split."""
    a = config.alpha[:, None]

    def combine(sig):
        return np.sum(a * (hermitian(V) @ sig[..., None])[..., 0], axis=-2)

    return CombinedSignal(z_c=combine(rx.y_m), d_c=combine(rx.data_m),
                          n_c=combine(rx.noise_m), i_c=combine(rx.jam_m), V=V)

