"""Numerical checks of the large-array behavior of the monitoring network.

Both sweeps assume perfect CSI everywhere, MR processing (MRT at the UT and
the jammers, MR combining at the observers) and homogeneous unit
large-scale gains, so that only the number of nodes changes.

* Growing the observer count ``M_o`` with ``M_J`` fixed: the noise and
  inter-node jamming terms of ``z_c / M_o`` vanish like ``M_o^{-1/2}``.
* Growing the jammer count ``M_J`` with ``rho_J = E_J / M_J^2``: the jamming
  seen by the observers vanishes while the mean jamming seen by the UR
  stays fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import crandn
from .precoding import build_data_precoder, hermitian

DEFAULT_SWEEP = (8, 16, 32, 64, 128)


def fitted_slope(x, y):
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.any(y <= 0):
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass(frozen=True)
class ObserverSweep:
    M_o: np.ndarray
    noise: np.ndarray
    interference: np.ndarray
    deviation: np.ndarray

    @property
    def noise_slope(self):
        return fitted_slope(self.M_o, self.noise)

    @property
    def interference_slope(self):
        return fitted_slope(self.M_o, self.interference)

    @property
    def deviation_slope(self):
        return fitted_slope(self.M_o, self.deviation)


def _mr_precoder(rng, Nt, Nr, n):
    G_tr = crandn(rng, (n, Nt, Nr))
    return build_data_precoder(G_tr, "MRT")


def verify_observer_limit(params, M_o_sweep=DEFAULT_SWEEP, M_J=4, n_trials=100, rng=None,
                 rho_t=1.0, rho_J=1.0) -> ObserverSweep:
    """RMS norms of the parts of ``z_c / M_o`` around the desired mean.

    ``deviation`` is ``||z_c / M_o - N sqrt(rho_t) W^H W Lam^{1/2} x||``, the
    distance to the limit given the UT precoder (``E{B^H B | W} = N W^H W``).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    N, Nt, Nr = params.N, params.Nt, params.Nr
    lam = np.full(Nr, 1.0 / Nr)
    noise, inter, dev = [], [], []
    for M_o in M_o_sweep:
        n_acc = i_acc = d_acc = 0.0
        for _ in range(n_trials):
            W = _mr_precoder(rng, Nt, Nr, 1)[0]
            B = hermitian(crandn(rng, (M_o, Nt, N))) @ W  # (M_o, N, Nr)
            V = B
            x = crandn(rng, Nr)
            xJ = crandn(rng, Nr)
            d_c = np.sqrt(rho_t) * np.einsum("mni,mnj,j->i", V.conj(), B, np.sqrt(lam) * x)
            n_c = np.einsum("mni,mn->i", V.conj(), crandn(rng, (M_o, N)))
            if M_J > 0:
                # jammers use MR on their (perfectly known) UR channels at full budget
                G_jr = crandn(rng, (M_J, N, Nr))
                pi = 1.0 / (N * Nr)
                s_J = np.sqrt(rho_J * pi) * (G_jr @ xJ)  # (M_J, N)
                G_mm = crandn(rng, (M_o, M_J, N, N))
                rx = np.einsum("abkn,bk->an", G_mm.conj(), s_J)
                i_c = np.einsum("mni,mn->i", V.conj(), rx)
            else:
                i_c = np.zeros(Nr, dtype=complex)
            limit = np.sqrt(rho_t) * N * (hermitian(W) @ W) @ (np.sqrt(lam) * x)
            n_acc += np.sum(np.abs(n_c / M_o) ** 2)
            i_acc += np.sum(np.abs(i_c / M_o) ** 2)
            d_acc += np.sum(np.abs((d_c + n_c + i_c) / M_o - limit) ** 2)
        noise.append(np.sqrt(n_acc / n_trials))
        inter.append(np.sqrt(i_acc / n_trials))
        dev.append(np.sqrt(d_acc / n_trials))
    return ObserverSweep(np.asarray(M_o_sweep), np.asarray(noise), np.asarray(inter),
                         np.asarray(dev))


@dataclass(frozen=True)
class JammerSweep:
    M_J: np.ndarray
    cpu_jamming: np.ndarray
    ur_mean: np.ndarray
    ur_fluctuation: np.ndarray

    @property
    def cpu_ratio(self):
        """CPU-side jamming at the largest ``M_J`` over the smallest."""
        return float(self.cpu_jamming[-1] / self.cpu_jamming[0])

    @property
    def ur_spread(self):
        """Largest relative departure of the UR mean level from its sweep mean."""
        m = self.ur_mean
        return float(np.max(np.abs(m / m.mean() - 1)))


def verify_jammer_limit(params, M_J_sweep=(16, 32, 64, 128), M_o=8, E_J=1.0, n_trials=100,
                 rng=None) -> JammerSweep:
    """Jamming with per-node power ``rho_J = E_J / M_J^2``.

    ``cpu_jamming`` is the RMS jamming power after MR combining at the
    observers; ``ur_mean`` is the Frobenius norm of the sample mean of the
    UR jamming matrix ``F = sum_m sqrt(rho_J) G_mr^H G_mr Pi^{1/2}``, and
    ``ur_fluctuation`` is the RMS of ``F`` around that mean.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    N, Nt, Nr = params.N, params.Nt, params.Nr
    pi = 1.0 / (N * Nr)
    cpu, ur_mean, ur_fluct = [], [], []
    for M_J in M_J_sweep:
        rho_J = E_J / M_J ** 2
        F_sum = np.zeros((Nr, Nr), dtype=complex)
        F_sq = 0.0
        c_acc = 0.0
        for _ in range(n_trials):
            G_jr = crandn(rng, (M_J, N, Nr))
            F = np.sqrt(rho_J * pi) * np.sum(hermitian(G_jr) @ G_jr, axis=0)
            F_sum += F
            F_sq += np.sum(np.abs(F) ** 2)
            W = _mr_precoder(rng, Nt, Nr, 1)[0]
            V = hermitian(crandn(rng, (M_o, Nt, N))) @ W
            xJ = crandn(rng, Nr)
            s_J = np.sqrt(rho_J * pi) * (G_jr @ xJ)
            G_mm = crandn(rng, (M_o, M_J, N, N))
            rx = np.einsum("abkn,bk->an", G_mm.conj(), s_J)
            c_acc += np.sum(np.abs(np.einsum("mni,mn->i", V.conj(), rx)) ** 2)
        mean = F_sum / n_trials
        cpu.append(np.sqrt(c_acc / n_trials))
        ur_mean.append(np.linalg.norm(mean))
        ur_fluct.append(np.sqrt(max(F_sq / n_trials - np.sum(np.abs(mean) ** 2), 0.0)))
    return JammerSweep(np.asarray(M_J_sweep), np.asarray(cpu), np.asarray(ur_mean),
                       np.asarray(ur_fluct))
