"""Linear precoders, power loading and MMSE combiners.

All functions accept a leading batch shape, so a stack of channel draws
can be processed in one call.
"""

import numpy as np


class DegenerateChannelError(np.linalg.LinAlgError):
    """The channel Gram matrix is (numerically) singular.

    ``bad`` is a boolean mask over the batch dimensions marking the
    offending draws, so callers can redraw only those.
    """

    def __init__(self, message, bad=None):
        super().__init__(message)
        self.bad = bad


ZF_COND_LIMIT = 1e12


def hermitian(x):
    return np.swapaxes(x, -1, -2).conj()


def normalize_columns(W):
    norms = np.linalg.norm(W, axis=-2, keepdims=True)
    if np.any(norms == 0):
        bad = np.any(norms[..., 0, :] == 0, axis=-1)
        raise DegenerateChannelError("zero precoder column", bad=bad)
    return W / norms


def build_data_precoder(Ghat, kind):
    """Column-normalized ZF or MRT precoder from the UT-side estimate.

    ``Ghat`` has shape ``(..., Nt, Nr)``; the result has the same shape.
    """
    Ghat = np.asarray(Ghat)
    if kind == "MRT":
        return normalize_columns(Ghat)
    if kind != "ZF":
        raise ValueError(f"unknown precoder kind {kind!r}")
    gram = hermitian(Ghat) @ Ghat
    cond = np.linalg.cond(gram)
    bad = ~np.isfinite(cond) | (cond > ZF_COND_LIMIT)
    if np.any(bad):
        raise DegenerateChannelError("singular Gram matrix for ZF", bad=bad)
    # Gram is Hermitian, so G (G^H G)^{-1} = (solve(gram, G^H))^H
    W = hermitian(np.linalg.solve(gram, hermitian(Ghat)))
    return normalize_columns(W)


def load_powers(Nr):
    """Equal stream loading; the weights sum to one."""
    if Nr < 1:
        raise ValueError("Nr must be positive")
    return np.full(Nr, 1.0 / Nr)


def mmse_combine(Bhat, rho_t=None, reg=None):
    """Regularized combiner ``Bhat (Bhat^H Bhat + reg I)^{-1}``.

    ``reg`` defaults to the per-stream inverse SNR ``1 / rho_t``.
    """
    if reg is None:
        if rho_t is None or rho_t <= 0:
            raise ValueError("need rho_t > 0 or an explicit reg")
        reg = 1.0 / rho_t
    Bhat = np.asarray(Bhat)
    Nr = Bhat.shape[-1]
    gram = hermitian(Bhat) @ Bhat + reg * np.eye(Nr)
    return hermitian(np.linalg.solve(gram, hermitian(Bhat)))
