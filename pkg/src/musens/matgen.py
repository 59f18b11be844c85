"""Rayleigh channel draws and the small Hermitian linear algebra behind them.

Channels are plain ``complex128`` numpy arrays of shape ``(K, M)`` (one row
per user).  Batched functions accept a leading trial axis ``(T, K, M)``.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DimensionError, NumericError

LOG2E = np.log2(np.e)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class ChannelEnsemble:
    """Coordinates of one i.i.d. Rayleigh draw: ``(seed, trial)`` picks it."""

    num_users: int
    num_antennas: int
    master_seed: int
    trial_index: int = 0


def _check_dims(num_users, num_antennas):
    if num_users < 1 or num_antennas < 1:
        raise DimensionError(
            f"channel needs at least one user and one antenna, got {num_users}x{num_antennas}"
        )


def sample_channels(num_users, num_antennas, seed, trials, stream=rng.CHANNEL):
    """Draw ``len(trials)`` channels at once; ``trials`` may be an int count.

    Row ``t`` of the result is bit-identical to ``sample_channel`` at trial
    index ``trials[t]``.
    """
    _check_dims(num_users, num_antennas)
    if np.isscalar(trials):
        trials = np.arange(int(trials))
    trials = np.asarray(trials)
    z = rng.complex_normal(seed, stream, trials, num_users * num_antennas)
    return z.reshape(trials.size, num_users, num_antennas)


def sample_channel(ensemble: ChannelEnsemble) -> np.ndarray:
    return sample_channels(
        ensemble.num_users,
        ensemble.num_antennas,
        ensemble.master_seed,
        [ensemble.trial_index],
    )[0]


def _as_channel(H):
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim < 2 or H.shape[-1] == 0 or H.shape[-2] == 0:
        raise DimensionError(f"expected a nonempty matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise NumericError("channel has non-finite entries")
    return H


def log_det_capacity(H, scale):
    """``log2 det(I_M + scale * H^H H)`` for one channel or a stack of them.

    The Hermitian positive-definite matrix is Cholesky-factored and the log
    determinant is twice the sum of log-diagonals, so large arguments never
    overflow.
    """
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    H = _as_channel(H)
    M = H.shape[-1]
    gram = np.swapaxes(H.conj(), -1, -2) @ H
    A = np.eye(M) + scale * gram
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"Cholesky factorization failed: {exc}") from exc
    diag = np.abs(np.diagonal(L, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log2(diag), axis=-1)


def hermitian_eigenvalues(A, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigenvalues of a Hermitian matrix by cyclic Jacobi rotations, ascending.

    Sweeps stop once the off-diagonal Frobenius norm falls below
    ``tol * ||A||_F``.  Raises NumericError after ``max_sweeps``.
    """
    A = np.array(A, dtype=np.complex128)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n or n == 0:
        raise DimensionError(f"expected a nonempty square matrix, got shape {A.shape}")
    A = 0.5 * (A + A.conj().T)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n)

    off_mask = ~np.eye(n, dtype=bool)

    def off_norm():
        return np.linalg.norm(A[off_mask])

    for _ in range(max_sweeps):
        if off_norm() <= tol * scale:
            return np.sort(np.diag(A).real)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                g = abs(apq)
                if g <= 1e-300:
                    continue
                phase = apq / g
                theta = (A[q, q].real - A[p, p].real) / (2.0 * g)
                t = 1.0 / (abs(theta) + np.hypot(1.0, theta))
                if theta < 0:
                    t = -t
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                # unitary J acting on columns (p, q) with (J^H A J)[p, q] = 0
                J = np.array([[c, s * phase], [-s * np.conj(phase), c]])
                cols = [p, q]
                A[:, cols] = A[:, cols] @ J
                A[cols, :] = J.conj().T @ A[cols, :]
                A[p, q] = A[q, p] = 0.0
    if off_norm() <= tol * scale:
        return np.sort(np.diag(A).real)
    raise NumericError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")


def gram_eigenvalues(H):
    """Eigenvalues of ``H H^H`` (K x K), ascending and clipped at zero."""
    H = _as_channel(H)
    if H.ndim != 2:
        raise DimensionError("gram_eigenvalues takes a single matrix")
    lam = hermitian_eigenvalues(H @ H.conj().T)
    return np.maximum(lam, 0.0)
