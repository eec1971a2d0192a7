"""Gaussian-process surrogate with a Matérn kernel and a GP-Hedge portfolio.

Search points are flat vectors ``s = [alpha (M), x (M * Nr)]``.  The kernel
acts on the concatenated distance with one lengthscale per block,

    r = sqrt(||d_alpha||^2 / l_alpha^2 + ||d_x||^2 / l_x^2),

so the binary block is handled as a relaxed continuous variable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import kv
from scipy.stats import norm

JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


class GPNumericalError(np.linalg.LinAlgError):
    """Gram matrix stays indefinite after jitter escalation."""


def matern(r, nu=2.5):
    """Unit-scale Matérn correlation at scaled distance ``r``."""
    r = np.abs(np.asarray(r, dtype=float))
    if nu <= 0:
        raise ValueError("nu must be positive")
    if nu == 0.5:
        return np.exp(-r)
    if nu == 1.5:
        s = np.sqrt(3.0) * r
        return (1 + s) * np.exp(-s)
    if nu == 2.5:
        s = np.sqrt(5.0) * r
        return (1 + s + s ** 2 / 3) * np.exp(-s)
    s = np.sqrt(2 * nu) * r
    with np.errstate(invalid="ignore"):
        out = 2 ** (1 - nu) / gamma_fn(nu) * s ** nu * kv(nu, s)
    return np.where(r == 0, 1.0, np.nan_to_num(out, nan=0.0))


@dataclass(frozen=True)
class MaternKernel:
    """Matérn kernel on ``[alpha | x]`` vectors; ``split`` is the alpha length."""

    split: int
    nu: float = 2.5
    ls_alpha: float = 1.0
    ls_x: float = 1.0
    scale: float = 0.25

    def __post_init__(self):
        if self.ls_alpha <= 0 or self.ls_x <= 0:
            raise ValueError("lengthscales must be positive")
        if self.scale <= 0:
            raise ValueError("signal scale must be positive")

    def distance(self, X, Y):
        X, Y = np.atleast_2d(X), np.atleast_2d(Y)
        k = self.split

        def sq(A, B):
            return np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)

        d2 = sq(X[:, :k], Y[:, :k]) / self.ls_alpha ** 2 + sq(X[:, k:], Y[:, k:]) / self.ls_x ** 2
        return np.sqrt(d2)

    def __call__(self, X, Y):
        return self.scale * matern(self.distance(X, Y), self.nu)

    def with_params(self, **kw):
        return MaternKernel(**{**self.__dict__, **kw})


def jittered_cholesky(K):
    """Cholesky factor of ``K``, adding diagonal jitter only when needed."""
    base = max(float(np.mean(np.diag(K))), 1e-300)
    for j in JITTERS:
        try:
            return np.linalg.cholesky(K + j * base * np.eye(len(K)))
        except np.linalg.LinAlgError:
            continue
    raise GPNumericalError("kernel matrix not positive definite after jitter")


@dataclass
class GPState:
    """Observations, kernel and the factorization used by the posterior."""

    kernel: MaternKernel
    mu0: float = 0.5
    X: np.ndarray = None
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    noise: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.X is None:
            self.X = np.zeros((0, 0))
        self._chol = None

    @property
    def n(self):
        return len(self.y)

    def add(self, s, f, noise=0.0):
        s = np.asarray(s, dtype=float)[None, :]
        self.X = s if self.n == 0 else np.vstack([self.X, s])
        self.y = np.append(self.y, float(f))
        self.noise = np.append(self.noise, float(noise))
        self._chol = None

    def set_kernel(self, kernel):
        self.kernel = kernel
        self._chol = None

    def _factor(self):
        if self._chol is None:
            K = self.kernel(self.X, self.X) + np.diag(self.noise)
            L = jittered_cholesky(K)
            resid = self.y - self.mu0
            w = np.linalg.solve(L, resid)
            self._chol = (L, np.linalg.solve(L.T, w))
        return self._chol

    def posterior(self, S):
        """Posterior mean and variance at the rows of ``S``."""
        if self.n == 0:
            raise ValueError("posterior needs at least one observation")
        S = np.atleast_2d(np.asarray(S, dtype=float))
        L, coef = self._factor()
        Ks = self.kernel(self.X, S)
        mean = self.mu0 + Ks.T @ coef
        v = np.linalg.solve(L, Ks)
        var = self.kernel.scale - np.sum(v ** 2, axis=0)
        return mean, np.maximum(var, 0.0)

    def log_marginal_likelihood(self, kernel=None):
        kernel = self.kernel if kernel is None else kernel
        K = kernel(self.X, self.X) + np.diag(self.noise)
        L = jittered_cholesky(K)
        w = np.linalg.solve(L, self.y - self.mu0)
        return float(-0.5 * w @ w - np.sum(np.log(np.diag(L))) - 0.5 * self.n * np.log(2 * np.pi))

    def fit(self, ls_alpha_grid=(0.5, 1.0, 2.0, 4.0), ls_x_grid=(0.5, 1.0, 2.0, 4.0, 8.0),
            scale_grid=(0.01, 0.05, 0.25)):
        """Grid search of block lengthscales and signal scale by marginal likelihood."""
        best, best_k = -np.inf, self.kernel
        for la, lx, sc in itertools.product(ls_alpha_grid, ls_x_grid, scale_grid):
            k = self.kernel.with_params(ls_alpha=la, ls_x=lx, scale=sc)
            try:
                lml = self.log_marginal_likelihood(k)
            except GPNumericalError:
                continue
            if lml > best:
                best, best_k = lml, k
        self.set_kernel(best_k)
        return best_k


def expected_improvement(mean, var, best, xi=0.01):
    sd = np.sqrt(var)
    imp = mean - best - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, imp / sd, 0.0)
    return np.where(sd > 0, imp * norm.cdf(z) + sd * norm.pdf(z), np.maximum(imp, 0.0))


def probability_of_improvement(mean, var, best, xi=0.01):
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, (mean - best - xi) / sd, np.where(mean > best + xi, np.inf, -np.inf))
    return norm.cdf(z)


def upper_confidence_bound(mean, var, best=None, kappa=1.96):
    return mean + kappa * np.sqrt(var)


@dataclass(frozen=True)
class Acquisition:
    name: str
    fn: object
    param: float

    def __call__(self, mean, var, best):
        return self.fn(mean, var, best, self.param)


def default_portfolio(xi=0.01, kappa=1.96):
    return (Acquisition("EI", expected_improvement, xi),
            Acquisition("PI", probability_of_improvement, xi),
            Acquisition("UCB", upper_confidence_bound, kappa))


class Hedge:
    """Exponential-weights selection among acquisition proposals."""

    def __init__(self, names, eta=1.0):
        self.names = tuple(names)
        self.eta = float(eta)
        self.gains = np.zeros(len(self.names))

    def probabilities(self):
        z = self.eta * (self.gains - self.gains.max())
        p = np.exp(z)
        return p / p.sum()

    def choose(self, rng):
        return int(rng.choice(len(self.names), p=self.probabilities()))

    def update(self, rewards):
        self.gains = self.gains + np.asarray(rewards, dtype=float)


def acquire(gp: GPState, candidates, portfolio, hedge: Hedge, rng):
    """Let every acquisition nominate its best candidate, then pick one by hedge.

    Returns ``(chosen index into portfolio, proposals)`` where ``proposals``
    has one row per acquisition.
    """
    candidates = np.atleast_2d(candidates)
    if len(candidates) == 0:
        raise ValueError("empty candidate pool")
    mean, var = gp.posterior(candidates)
    best = float(np.max(gp.y))
    picks = [int(np.argmax(acq(mean, var, best))) for acq in portfolio]
    return hedge.choose(rng), candidates[picks]
