"""Small-scale fading and the two training phases of the untrusted link.

Uplink training gives the UT and every monitor node an MMSE estimate of
its channel to the UR.  Beamforming training gives the UR an estimate of
the effective channel ``A_r = G_tr^H W`` and every monitor node an
estimate of ``B_m = G_tm^H W``.  The effective-channel estimators need the
first and second moments of ``a_{n,n'}`` and ``b_p``; these are sampled by
:func:`effective_moments` and carried in a :class:`MomentCache`.

Every function takes an optional batch size ``n`` and then returns arrays
with a leading axis of that length.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .precoding import DegenerateChannelError, build_data_precoder, hermitian
from .scenario import ScenarioRealization


class MomentCacheError(LookupError):
    """No moment cache matching the requested precoder / geometry."""


def crandn(rng, shape):
    """i.i.d. CN(0, 1) samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def pilot_matrix(tau, K):
    """``tau x K`` matrix with orthonormal columns (identity, zero padded)."""
    if tau < K:
        raise ValueError("pilot length shorter than number of sequences")
    return np.eye(tau, K, dtype=complex)


def _lead(n):
    return () if n is None else (n,)


@dataclass(frozen=True)
class ChannelSet:
    """True channels: ``G_tr (Nt,Nr)``, ``G_mr (M,N,Nr)``, ``G_tm (M,Nt,N)``,
    ``G_mm (M,M,N,N)`` with zero diagonal blocks (``None`` when not drawn)."""

    G_tr: np.ndarray
    G_mr: np.ndarray
    G_tm: np.ndarray
    G_mm: np.ndarray | None = None


def draw_channels(real: ScenarioRealization, rng, n=None, inter_mn=True) -> ChannelSet:
    p = real.params
    M, N = real.M, p.N
    lead = _lead(n)
    G_tr = np.sqrt(real.beta_tr) * crandn(rng, lead + (p.Nt, p.Nr))
    G_mr = np.sqrt(real.beta_mr)[:, None, None] * crandn(rng, lead + (M, N, p.Nr))
    G_tm = np.sqrt(real.beta_tm)[:, None, None] * crandn(rng, lead + (M, p.Nt, N))
    G_mm = None
    if inter_mn:
        G_mm = np.sqrt(real.beta_mm)[:, :, None, None] * crandn(rng, lead + (M, M, N, N))
    return ChannelSet(G_tr, G_mr, G_tm, G_mm)


def _ratio(num, den):
    num, den = np.broadcast_arrays(np.asarray(num, float), np.asarray(den, float))
    return np.divide(num, den, out=np.zeros(num.shape), where=den > 0)


def mmse_gain(tau, rho, beta, noise_var=1.0):
    """Scalar MMSE gain ``sqrt(tau rho) beta / (tau rho beta + noise_var)``."""
    beta = np.asarray(beta, dtype=float)
    return _ratio(np.sqrt(tau * rho) * beta, tau * rho * beta + noise_var)


def estimate_power(tau, rho, beta, noise_var=1.0):
    """Per-entry mean square of the MMSE estimate, ``tau rho beta^2 / (tau rho beta + 1)``."""
    beta = np.asarray(beta, dtype=float)
    return _ratio(tau * rho * beta ** 2, tau * rho * beta + noise_var)


@dataclass(frozen=True)
class UplinkEstimates:
    Ghat_tr: np.ndarray
    Ghat_mr: np.ndarray
    gamma_tr: float
    gamma_mr: np.ndarray


def uplink_training(channels: ChannelSet, real: ScenarioRealization, rng,
                    noise_scale=1.0) -> UplinkEstimates:
    """Simulate UR pilots received at the UT and at every MN, then estimate.

    ``noise_scale`` is the receiver noise standard deviation (1 in normalized
    units); the estimators use the matching variance, so ``noise_scale = 0``
    returns the true channels.
    """
    p = real.params
    nv = noise_scale ** 2
    tau, rho = p.tau_r, real.rho_r
    phi = pilot_matrix(tau, p.Nr)
    amp = np.sqrt(tau * rho)

    def received(G):
        Y = amp * G @ hermitian(phi)
        Y = Y + noise_scale * crandn(rng, Y.shape)
        return Y @ phi

    y_tr = received(channels.G_tr)
    y_mr = received(channels.G_mr)
    Ghat_tr = mmse_gain(tau, rho, real.beta_tr, nv) * y_tr
    Ghat_mr = mmse_gain(tau, rho, real.beta_mr, nv)[:, None, None] * y_mr
    return UplinkEstimates(
        Ghat_tr=Ghat_tr, Ghat_mr=Ghat_mr,
        gamma_tr=float(estimate_power(tau, rho, real.beta_tr, nv)),
        gamma_mr=estimate_power(tau, rho, real.beta_mr, nv),
    )


@dataclass(frozen=True)
class MomentCache:
    """Sampled moments of the effective-channel entries.

    ``mean_a``/``var_a`` are ``(Nr, Nr)``; ``mean_b`` is ``(M, Nr)`` and
    ``cov_b`` is ``(M, Nr, Nr)``.
    """

    kind: str
    perfect_csi: bool
    n_mc: int
    mean_a: np.ndarray
    var_a: np.ndarray
    mean_b: np.ndarray
    cov_b: np.ndarray
    key: tuple

    @property
    def stderr_mean_a(self):
        return np.sqrt(self.var_a / self.n_mc)

    def matches(self, kind, real) -> bool:
        return self.kind == kind and self.key == moment_key(kind, real, self.perfect_csi)

    def to_json(self, path):
        def cplx(a):
            a = np.asarray(a)
            return {"re": a.real.tolist(), "im": a.imag.tolist()}

        doc = {
            "kind": self.kind, "perfect_csi": self.perfect_csi, "n_mc": self.n_mc,
            "mean_a": cplx(self.mean_a), "var_a": self.var_a.tolist(),
            "mean_b": cplx(self.mean_b), "cov_b": cplx(self.cov_b),
            "key": [list(k) if isinstance(k, tuple) else k for k in self.key],
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def from_json(cls, path):
        doc = json.loads(Path(path).read_text())

        def cplx(d):
            return np.asarray(d["re"]) + 1j * np.asarray(d["im"])

        key = tuple(tuple(k) if isinstance(k, list) else k for k in doc["key"])
        return cls(
            kind=doc["kind"], perfect_csi=doc["perfect_csi"], n_mc=doc["n_mc"],
            mean_a=cplx(doc["mean_a"]), var_a=np.asarray(doc["var_a"]),
            mean_b=cplx(doc["mean_b"]), cov_b=cplx(doc["cov_b"]), key=key,
        )


def moment_key(kind, real, perfect_csi=False):
    p = real.params
    return (kind, bool(perfect_csi), p.Nt, p.Nr, p.tau_r, float(real.rho_r),
            float(real.beta_tr), tuple(float(b) for b in real.beta_tm))


def draw_precoders(real, kind, rng, n, perfect_csi=False):
    """Draw ``n`` UT-side precoders, redrawing degenerate ZF instances.

    Returns ``(G_tr, W)``; ``G_tr`` is the true UT-UR channel of each draw.
    """
    p = real.params
    G = np.empty((n, p.Nt, p.Nr), dtype=complex)
    W = np.empty_like(G)
    todo = np.arange(n)
    for _ in range(100):
        k = len(todo)
        G_k = np.sqrt(real.beta_tr) * crandn(rng, (k, p.Nt, p.Nr))
        if perfect_csi:
            Ghat = G_k
        else:
            y = np.sqrt(p.tau_r * real.rho_r) * G_k + crandn(rng, G_k.shape)
            Ghat = mmse_gain(p.tau_r, real.rho_r, real.beta_tr) * y
        try:
            W_k = build_data_precoder(Ghat, kind)
            bad = np.zeros(k, dtype=bool)
        except DegenerateChannelError as exc:
            bad = np.asarray(exc.bad, dtype=bool)
            W_k = np.zeros_like(Ghat)
            ok = ~bad
            if np.any(ok):
                W_k[ok] = build_data_precoder(Ghat[ok], kind)
        good = ~bad
        G[todo[good]] = G_k[good]
        W[todo[good]] = W_k[good]
        todo = todo[bad]
        if len(todo) == 0:
            return G, W
    raise DegenerateChannelError("could not draw a regular channel")


def effective_moments(kind, real: ScenarioRealization, n_mc=5000, rng=None,
                      perfect_csi=False) -> MomentCache:
    """Sample ``E{a}``, ``Var(a)``, ``E{b_p}`` and ``C_{b_p b_p}``.

    The ``b_p`` statistics are sampled for unit ``beta_tm`` and rescaled per
    node; ``b_p = W^H g_p`` is linear in ``g_p``, so the scaling is exact.
    """
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    rng = np.random.default_rng() if rng is None else rng
    p = real.params
    G, W = draw_precoders(real, kind, rng, n_mc, perfect_csi=perfect_csi)
    A = hermitian(G) @ W
    mean_a = A.mean(axis=0)
    var_a = np.mean(np.abs(A - mean_a) ** 2, axis=0)

    h = crandn(rng, (n_mc, p.Nt, 1))
    b = (hermitian(W) @ h)[..., 0]
    mean_b1 = b.mean(axis=0)
    dev = b - mean_b1
    cov_b1 = np.einsum("ki,kj->ij", dev, dev.conj()) / n_mc
    cov_b1 = (cov_b1 + cov_b1.conj().T) / 2

    sq = np.sqrt(real.beta_tm)
    return MomentCache(
        kind=kind, perfect_csi=bool(perfect_csi), n_mc=n_mc,
        mean_a=mean_a, var_a=var_a,
        mean_b=sq[:, None] * mean_b1[None, :],
        cov_b=real.beta_tm[:, None, None] * cov_b1[None, :, :],
        key=moment_key(kind, real, perfect_csi),
    )


@dataclass(frozen=True)
class EffectiveEstimates:
    """``Ahat (Nr, Nr)`` at the UR and ``Bhat (M, N, Nr)`` at the MNs.

    ``err_var_a`` and ``err_cov_b`` are the MMSE error (co)variances
    implied by the moment cache.
    """

    Ahat: np.ndarray
    Bhat: np.ndarray
    err_var_a: np.ndarray
    err_cov_b: np.ndarray


def effective_channels(channels: ChannelSet, W):
    """True ``A_r = G_tr^H W`` and ``B_m = G_tm^H W``."""
    A = hermitian(channels.G_tr) @ W
    B = hermitian(channels.G_tm) @ W[..., None, :, :]
    return A, B


def beamforming_training(channels: ChannelSet, W, real: ScenarioRealization, rng,
                         moments: MomentCache, kind=None, noise_scale=1.0,
                         ) -> EffectiveEstimates:
    """Simulate precoded UT pilots at the UR and the MNs and estimate the
    effective channels entry by entry (``a``) and row by row (``b_p``).

    As in :func:`uplink_training`, the estimators use ``noise_scale ** 2``
    as the noise variance.
    """
    p = real.params
    nv = noise_scale ** 2
    kind = p.precoder_kind if kind is None else kind
    if moments is None or moments.kind != kind:
        raise MomentCacheError(f"no moment cache for precoder {kind!r}")
    tau, rho = p.tau_t, real.rho_t
    phi = pilot_matrix(tau, p.Nr).T  # Nr x tau, orthonormal rows
    amp = np.sqrt(tau * rho)
    A, B = effective_channels(channels, W)

    def projected(X):
        Y = amp * X @ phi
        Y = Y + noise_scale * crandn(rng, Y.shape)
        return Y @ hermitian(phi)

    y_a = projected(A)
    gain_a = _ratio(amp * moments.var_a, tau * rho * moments.var_a + nv)
    Ahat = moments.mean_a + gain_a * (y_a - amp * moments.mean_a)

    y_b = projected(B)
    C = moments.cov_b
    eye = np.eye(p.Nr)
    # K = amp C (tau rho C + nv I)^{-1}; both factors are Hermitian and commute
    K = amp * np.linalg.solve(tau * rho * C + nv * eye, C)
    mean_row = moments.mean_b.conj()[:, None, :]
    Bhat = mean_row + (y_b - amp * mean_row) @ np.swapaxes(K, -1, -2).conj()[..., :, :]
    err_cov_b = C - tau * rho * C @ np.linalg.solve(tau * rho * C + nv * eye, C)
    V = moments.var_a
    err_var_a = V - _ratio(tau * rho * V ** 2, tau * rho * V + nv)
    return EffectiveEstimates(Ahat=Ahat, Bhat=Bhat, err_var_a=err_var_a,
                              err_cov_b=(err_cov_b + hermitian(err_cov_b)) / 2)
