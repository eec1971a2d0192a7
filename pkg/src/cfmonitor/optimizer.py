"""Joint mode assignment and jamming power search (GP-Hedge Bayesian optimization).

The continuous block is searched in a log-share encoding.  A node's budget
share ``u = N gamma_mr pi`` maps to ``x = 1 + log10(u) / K`` on ``[0, 1]``,
with ``x = 0`` meaning "silent".  Jamming powers that matter span several
decades (the UR sees coherent MR gain), so a linear encoding would leave
almost every candidate in the saturated region.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .gp import GPState, Hedge, MaternKernel, acquire, default_portfolio
from .transmission import FEASIBILITY_TOL, MonitoringConfig

SHARE_DECADES = 6.0


@dataclass(frozen=True)
class Budget:
    n_initial: int = 10
    n_opt: int = 20
    pool: int = 512
    local: int = 32
    fit_every: int = 5

    def __post_init__(self):
        if not (self.n_opt > self.n_initial >= 1):
            raise ValueError("need n_opt > n_initial >= 1")


def project_feasible(alpha, pi, gamma_mr, N):
    """Round ``alpha``, clip ``pi`` at zero and scale each node down to its budget.

    Nodes already within budget are left untouched; no entry ever grows.
    """
    alpha = (np.asarray(alpha, dtype=float) >= 0.5).astype(int)
    pi = np.clip(np.asarray(pi, dtype=float), 0.0, None)
    usage = (1 - alpha) * N * np.asarray(gamma_mr, float) * pi.sum(axis=1)
    scale = np.where(usage > 1.0, 1.0 / np.where(usage > 0, usage, 1.0), 1.0)
    return alpha, pi * scale[:, None]


def shares_to_x(u, decades=SHARE_DECADES):
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore"):
        x = 1 + np.log10(u) / decades
    return np.where(u > 0, np.clip(x, 0.0, 1.0), 0.0)


def x_to_shares(x, decades=SHARE_DECADES):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, 10 ** (decades * (np.clip(x, 0, 1) - 1)), 0.0)


@dataclass(frozen=True)
class SearchSpace:
    """Encoding of ``(alpha, shares)`` as ``s = [alpha | x]`` in ``[0, 1]^(M + M Nr)``.

    ``fixed_alpha`` pins the mode vector (power-only search).
    """

    M: int
    Nr: int
    fixed_alpha: np.ndarray | None = None
    decades: float = SHARE_DECADES
    p_silent: float = 0.25

    @property
    def dim(self):
        return self.M * (1 + self.Nr)

    def encode(self, alpha, shares):
        return np.concatenate([np.asarray(alpha, float),
                               shares_to_x(shares, self.decades).ravel()])

    def decode(self, s):
        """Canonical ``(alpha, shares)``: observers carry zero shares and every
        jamming node is within budget."""
        s = np.asarray(s, dtype=float)
        alpha = (s[: self.M] >= 0.5).astype(int)
        if self.fixed_alpha is not None:
            alpha = np.asarray(self.fixed_alpha, dtype=int)
        u = x_to_shares(s[self.M:], self.decades).reshape(self.M, self.Nr)
        u = np.where(alpha[:, None] == 1, 0.0, u)
        total = u.sum(axis=1)
        u = u / np.maximum(total, 1.0)[:, None]
        return alpha, u

    def project(self, s):
        alpha, u = self.decode(s)
        return self.encode(alpha, u)

    def sample(self, rng, n):
        """Uniform draws, with whole nodes silenced at rate ``p_silent``."""
        alpha = rng.integers(0, 2, size=(n, self.M)).astype(float)
        x = rng.uniform(size=(n, self.M, self.Nr))
        x[rng.uniform(size=(n, self.M)) < self.p_silent] = 0.0
        raw = np.concatenate([alpha, x.reshape(n, -1)], axis=1)
        return np.array([self.project(r) for r in raw])

    def perturb(self, s, rng, n, flip=0.15, sigma=0.1):
        """Local moves around ``s``: mode flips and jitter of the encoded shares."""
        s = np.asarray(s, dtype=float)
        out = np.repeat(s[None, :], n, axis=0)
        flips = rng.uniform(size=(n, self.M)) < flip
        out[:, : self.M] = np.where(flips, 1 - out[:, : self.M], out[:, : self.M])
        x = out[:, self.M:] + sigma * rng.standard_normal((n, self.M * self.Nr))
        out[:, self.M:] = np.clip(x, 0.0, 1.0)
        # a silent stream needs a jump to come back on
        revive = (s[self.M:] == 0) & (rng.uniform(size=(n, self.M * self.Nr)) < 0.2)
        out[:, self.M:] = np.where(revive, rng.uniform(size=revive.shape), out[:, self.M:])
        return np.array([self.project(r) for r in out])


@dataclass
class OptimizationResult:
    s: np.ndarray
    value: float
    history: list = field(default_factory=list)
    incumbent: list = field(default_factory=list)
    gp: GPState | None = None


TRACE_HEADER = ("iteration", "s", "msp", "acquisition", "gains")


def write_trace(path, result: OptimizationResult, names=("EI", "PI", "UCB")):
    path = Path(path)
    new = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(TRACE_HEADER)
        for row in result.history:
            gains = ";".join(f"{g:.6g}" for g in row["gains"])
            s = ";".join(f"{v:.6g}" for v in row["s"])
            w.writerow([row["iteration"], s, f"{row['value']:.6g}", row["acquisition"], gains])


def optimize(objective: Callable, space: SearchSpace, budget: Budget, rng,
             portfolio=None, eta=1.0, mu0=0.5, nu=2.5) -> OptimizationResult:
    """Sequential GP-Hedge search.

    ``objective(s)`` returns ``(value, noise_variance)`` for a projected point.
    The first ``n_initial`` points are random; each later point is the
    hedge-selected nominee of the portfolio over a pool of fresh samples and
    incumbent perturbations.  The incumbent is the best observed value.
    """
    portfolio = default_portfolio() if portfolio is None else portfolio
    gp = GPState(MaternKernel(split=space.M, nu=nu), mu0=mu0)
    hedge = Hedge([a.name for a in portfolio], eta=eta)
    result = OptimizationResult(s=None, value=-np.inf, gp=gp)

    def record(it, s, value, acq):
        if value > result.value:
            result.s, result.value = s.copy(), value
        result.incumbent.append(result.value)
        result.history.append({"iteration": it, "s": s.copy(), "value": value,
                               "acquisition": acq, "gains": hedge.gains.copy()})

    for it, s in enumerate(space.sample(rng, budget.n_initial)):
        value, noise = objective(s)
        gp.add(s, value, noise)
        record(it, s, value, "init")

    for it in range(budget.n_initial, budget.n_opt):
        if (it - budget.n_initial) % budget.fit_every == 0:
            gp.fit()
        pool = np.vstack([space.sample(rng, budget.pool),
                          space.perturb(result.s, rng, budget.local)])
        choice, proposals = acquire(gp, pool, portfolio, hedge, rng)
        s = proposals[choice]
        value, noise = objective(s)
        gp.add(s, value, noise)
        hedge.update(gp.posterior(proposals)[0])
        record(it, s, value, portfolio[choice].name)
    return result


def msp_noise(p, n):
    """Binomial variance of a frequency estimate, floored for conditioning."""
    return max(p * (1 - p) / n, 1e-6)


def optimize_monitoring(bank, case="case1", budget: Budget | None = None, rng=None,
                        alpha=None, objective_fn=None):
    """Optimize ``(alpha, pi)`` for one geometry bank.

    The objective is the within-geometry success frequency over the bank's
    small-scale draws.  Pass ``alpha`` to optimize the powers only.
    Returns ``(MonitoringConfig, OptimizationResult)``.
    """
    from .spectral import local_msp

    budget = Budget() if budget is None else budget
    rng = np.random.default_rng() if rng is None else rng
    p = bank.params
    space = SearchSpace(bank.real.M, p.Nr, fixed_alpha=alpha)
    score = objective_fn or (lambda cfg: local_msp(bank, cfg, case))

    def to_config(s):
        a, u = space.decode(s)
        return MonitoringConfig.from_shares(a, u, bank.gamma_mr, p.N)

    def objective(s):
        value = score(to_config(s))
        return value, msp_noise(value, bank.n)

    result = optimize(objective, space, budget, rng)
    cfg = to_config(result.s)
    if not cfg.is_feasible(bank.gamma_mr, p.N, tol=FEASIBILITY_TOL):
        raise RuntimeError("optimizer returned an infeasible config")
    return cfg, result
