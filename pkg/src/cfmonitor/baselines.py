"""Comparison schemes: random mode assignment and the co-located array.

Every scheme is a picklable policy ``(bank, g, seed) -> MonitoringConfig``
run through :func:`cfmonitor.spectral.msp_estimate`, so all schemes see the
same geometry and fading streams for a given ``(seed, g)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optimizer import Budget, optimize_monitoring
from .scenario import ScenarioRealization
from .spectral import MODES, SEARCH, ExpectationPlan, msp_estimate, task_rng
from .transmission import equal_power_config

BASELINES = ("OPT", "RMA_OPA", "RMA_EPA", "COLOCATED")
SI_RANGE_DB = (30.0, 100.0)


def random_modes(M, rng):
    """Uniformly random half split: ``M // 2`` observers, the rest jam."""
    alpha = np.zeros(M, dtype=int)
    alpha[rng.permutation(M)[: M // 2]] = 1
    return alpha


@dataclass(frozen=True)
class OptimizedPolicy:
    """Joint (``alpha``, ``pi``) search per geometry."""

    case: str = "case1"
    budget: Budget = Budget()

    def __call__(self, bank, g, seed):
        cfg, _ = optimize_monitoring(bank, self.case, self.budget, task_rng(seed, g, SEARCH))
        return cfg


@dataclass(frozen=True)
class RandomModesPolicy:
    """Random half split; powers optimized (``optimize=True``) or equal."""

    case: str = "case1"
    optimize: bool = True
    budget: Budget = Budget()

    def __call__(self, bank, g, seed):
        alpha = random_modes(bank.real.M, task_rng(seed, g, MODES))
        if not self.optimize:
            return equal_power_config(alpha, bank.gamma_mr, bank.params.N, bank.params.Nr)
        cfg, _ = optimize_monitoring(bank, self.case, self.budget, task_rng(seed, g, SEARCH),
                                     alpha=alpha)
        return cfg


@dataclass(frozen=True)
class FixedModesPolicy:
    """Given modes, powers optimized; used for the co-located array."""

    alpha: tuple
    case: str = "case1"
    budget: Budget = Budget()

    def __call__(self, bank, g, seed):
        cfg, _ = optimize_monitoring(bank, self.case, self.budget, task_rng(seed, g, SEARCH),
                                     alpha=np.asarray(self.alpha, dtype=int))
        return cfg


@dataclass(frozen=True)
class Colocated:
    """Full-duplex array at one site: half the antennas observe, half jam.

    The site takes the position (and shadowing) of node 0.  The jamming half
    gets the power ``M / 2`` distributed jammers would spend (``rho_J M / 2``),
    and ``si_db`` of isolation turns its transmit power into extra noise on
    the observing half.
    """

    si_db: float = 30.0

    def __post_init__(self):
        lo, hi = SI_RANGE_DB
        if not lo <= self.si_db <= hi:
            raise ValueError(f"self-interference must lie in [{lo}, {hi}] dB")

    def __call__(self, real: ScenarioRealization) -> ScenarioRealization:
        p = real.params
        total = p.M * p.N
        if total % 2:
            raise ValueError("co-located split needs an even antenna count")
        params = p.replace(M=2, N=total // 2)
        c = 10 ** (-self.si_db / 10)
        return ScenarioRealization(
            params=params, beta_tr=real.beta_tr,
            beta_mr=np.full(2, real.beta_mr[0]), beta_tm=np.full(2, real.beta_tm[0]),
            beta_mm=np.zeros((2, 2)), rho_r=real.rho_r, rho_t=real.rho_t,
            rho_J=real.rho_J * p.M / 2,
            pos_mn=None if real.pos_mn is None else np.repeat(real.pos_mn[:1], 2, axis=0),
            pos_ut=real.pos_ut, pos_ur=real.pos_ur,
            si_coupling=np.array([[0.0, c], [c, 0.0]]),
        )


def make_policy(kind, case="case1", budget: Budget | None = None):
    budget = Budget() if budget is None else budget
    if kind == "OPT":
        return OptimizedPolicy(case, budget)
    if kind == "RMA_OPA":
        return RandomModesPolicy(case, True, budget)
    if kind == "RMA_EPA":
        return RandomModesPolicy(case, False, budget)
    if kind == "COLOCATED":
        return FixedModesPolicy((1, 0), case, budget)
    raise ValueError(f"unknown baseline {kind!r}; expected one of {BASELINES}")


def run_baseline(kind, params, plan: ExpectationPlan, seed=None, case=None, n_geom=None,
                 budget: Budget | None = None, si_db=30.0, map_fn=map,
                 monitor_csi="estimated"):
    """MSP of one scheme over ``n_geom`` geometries (see :func:`msp_estimate`)."""
    case = params.csi_case if case is None else case
    policy = make_policy(kind, case, budget)
    transform = Colocated(si_db) if kind == "COLOCATED" else None
    return msp_estimate(params, policy, plan, n_geom=n_geom, seed=seed, case=case,
                        map_fn=map_fn, transform=transform, monitor_csi=monitor_csi)
