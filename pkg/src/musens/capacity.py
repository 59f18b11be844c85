"""Monte Carlo sum-rates of the multi-user downlink.

``I_eq`` serves K random users with equal power 1/K each.  ``I_opt`` lets the
transmitter pick the diagonal power split per channel realization.  Rates are
in bits per channel use.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .matgen import LOG2E, log_det_capacity, sample_channels

DEFAULT_TRIALS = 10_000
PGA_TOL = 1e-7
PGA_MAX_ITER = 500


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    trials: int

    @classmethod
    def from_samples(cls, values):
        """Reduce through (count, sum, sum of squares) so order does not matter."""
        values = np.asarray(values, dtype=float).ravel()
        n = values.size
        if n < 1:
            raise ValueError("an estimate needs at least one trial")
        total = float(np.sum(values))
        total_sq = float(np.sum(values * values))
        mean = total / n
        if n == 1:
            return cls(mean, 0.0, 1)
        var = max(total_sq - n * mean * mean, 0.0) / (n - 1)
        return cls(mean, float(np.sqrt(var / n)), n)


@dataclass(frozen=True)
class PowerAllocation:
    """Per-user power fractions on the probability simplex."""

    weights: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool


def _check(M, K, trials):
    if M < 1 or K < 1:
        raise DimensionError(f"need M >= 1 and K >= 1, got M={M}, K={K}")
    if trials < 1:
        raise ValueError("trials must be >= 1")


def equal_power_rates(channels, rho):
    """Per-realization ``log2 det(I + rho/K H^H H)`` for a (T, K, M) stack."""
    K = channels.shape[-2]
    return log_det_capacity(channels, rho / K)


def estimate_I_eq(M, K, rho, trials=DEFAULT_TRIALS, seed=0):
    _check(M, K, trials)
    H = sample_channels(K, M, seed, trials)
    return Estimate.from_samples(equal_power_rates(H, rho))


def estimate_I_eq_curve(M, K, rhos, trials=DEFAULT_TRIALS, seed=0):
    """Equal-power estimates over a grid of SNRs, all on the same draws."""
    _check(M, K, trials)
    H = sample_channels(K, M, seed, trials)
    return [Estimate.from_samples(equal_power_rates(H, rho)) for rho in rhos]


def weighted_rate(H, weights, rho):
    """``log2 det(I_M + rho H^H diag(w) H)``."""
    H = np.asarray(H, dtype=np.complex128)
    A = np.eye(H.shape[1]) + rho * (H.conj().T * weights) @ H
    sign, logdet = np.linalg.slogdet(A)
    return float(logdet) * LOG2E


def rate_gradient(H, weights, rho):
    """d/dw_k of ``weighted_rate``: ``log2(e) rho h_k A^{-1} h_k^H``."""
    H = np.asarray(H, dtype=np.complex128)
    A = np.eye(H.shape[1]) + rho * (H.conj().T * weights) @ H
    X = np.linalg.solve(A, H.conj().T)
    return LOG2E * rho * np.einsum("km,mk->k", H, X).real


def _curvature(H, weights, rho):
    # B = H A^{-1} H^H; the gradient is log2(e) rho diag(B)
    A = np.eye(H.shape[1]) + rho * (H.conj().T * weights) @ H
    B = H @ np.linalg.solve(A, H.conj().T)
    return B, LOG2E * rho * np.diagonal(B).real


def _rate_increment(B, dw, rho):
    # f(w + dw) - f(w) = log2 det(I_K + rho diag(dw) B), exact and free of
    # the cancellation in subtracting two large log-determinants
    sign, logdet = np.linalg.slogdet(np.eye(B.shape[0]) + rho * dw[:, None] * B)
    return LOG2E * logdet if sign > 0 else -np.inf


def project_simplex(v):
    """Euclidean projection onto {w >= 0, sum w = 1}."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    r = idx[u - css / idx > 0][-1]
    return np.maximum(v - css[r - 1] / r, 0.0)


def _stationarity(w, g):
    return float(np.linalg.norm(project_simplex(w + g) - w))


def _gradient_step(B, g, w, rho, step):
    while step > 1e-20:
        w_new = project_simplex(w + step * g)
        if _rate_increment(B, w_new - w, rho) >= 1e-4 * g @ (w_new - w):
            return w_new
        step *= 0.5
    return None


def _face_newton_step(H, B, g, w, rho):
    """Newton step on the face {w_k > 0}, or None if it does not ascend."""
    free = np.flatnonzero(w > 0)
    n = free.size
    if n < 2:
        return None
    # Hessian of the rate: -log2(e) rho^2 |B_jk|^2
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = -LOG2E * rho**2 * np.abs(B[np.ix_(free, free)]) ** 2
    kkt[:n, n] = kkt[n, :n] = 1.0
    rhs = np.concatenate([-g[free], [0.0]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    d = np.zeros_like(w)
    d[free] = sol[:n]
    # sum(d) == 0, so centering g changes nothing but the rounding error
    slope = (g[free] - g[free].mean()) @ d[free]
    if not slope > 0:
        return None
    shrinking = d < 0
    step = min(1.0, float(np.min(-w[shrinking] / d[shrinking]))) if shrinking.any() else 1.0
    if step == 1.0 and slope < 1e-12:
        # predicted gain is below what log-determinants can resolve; judge
        # the step by the stationarity residual instead
        w_new = w + d
        if _stationarity(w_new, _curvature(H, w_new, rho)[1]) < _stationarity(w, g):
            return w_new
        return None
    while step > 1e-12:
        w_new = np.maximum(w + step * d, 0.0)
        w_new /= w_new.sum()
        if _rate_increment(B, w_new - w, rho) >= 1e-4 * step * slope:
            return w_new
        step *= 0.5
    return None


def optimize_power_allocation(H, rho, tol=PGA_TOL, max_iter=PGA_MAX_ITER):
    """Maximize the weighted rate over the simplex by projected gradient ascent.

    The objective is concave in the weights.  The iterate starts from the
    better of uniform power and the strongest single user.  Each iteration
    first tries a Newton step restricted to the current support (this is
    what makes the tail converge), and otherwise takes a projected gradient
    step with a halving backtracking search whose first trial step is 1.0
    and later ones Barzilai-Borwein.
    Stops when ``||P(w + g) - w|| < tol``; otherwise returns the best
    iterate with ``converged=False``.
    """
    H = np.asarray(H, dtype=np.complex128)
    K = H.shape[0]
    if H.ndim != 2 or K == 0 or H.shape[1] == 0:
        raise DimensionError(f"expected a nonempty K x M channel, got {H.shape}")
    if K == 1:
        w = np.ones(1)
        return PowerAllocation(w, weighted_rate(H, w, rho), 0.0, 0, True)

    w = np.full(K, 1.0 / K)
    vertex = np.zeros(K)
    vertex[np.argmax(np.sum(np.abs(H) ** 2, axis=1))] = 1.0
    if weighted_rate(H, vertex, rho) > weighted_rate(H, w, rho):
        w = vertex

    B, g = _curvature(H, w, rho)
    step0 = 1.0
    for it in range(max_iter):
        residual = _stationarity(w, g)
        if residual < tol:
            return PowerAllocation(w, weighted_rate(H, w, rho), residual, it, True)
        w_new = _face_newton_step(H, B, g, w, rho)
        if w_new is None:
            w_new = _gradient_step(B, g, w, rho, step0)
        if w_new is None:
            break
        B, g_new = _curvature(H, w_new, rho)
        # Barzilai-Borwein trial step for the next gradient step (concave: s.y <= 0)
        s_k, y_k = w_new - w, g_new - g
        sy = -(s_k @ y_k)
        step0 = float(np.clip(s_k @ s_k / sy, 1e-10, 1e10)) if sy > 0 else 1.0
        w, g = w_new, g_new
    residual = _stationarity(w, g)
    return PowerAllocation(w, weighted_rate(H, w, rho), residual, max_iter, residual < tol)


def optimized_rates(channels, rho, tol=PGA_TOL):
    return np.array([optimize_power_allocation(H, rho, tol).objective for H in channels])


def estimate_I_opt(M, K, rho, trials=DEFAULT_TRIALS, seed=0, tol=PGA_TOL):
    _check(M, K, trials)
    H = sample_channels(K, M, seed, trials)
    return Estimate.from_samples(optimized_rates(H, rho, tol))


def best_single_user_rate(H, rho):
    """Rate of serving only the user with the largest channel gain."""
    H = np.asarray(H, dtype=np.complex128)
    if H.size == 0:
        raise DimensionError("empty channel")
    gain = np.max(np.sum(np.abs(H) ** 2, axis=-1), axis=-1)
    return np.log2(1.0 + rho * gain)


def low_snr_linear_bound(M, rho):
    """``log2(e) * rho * M``: the first-order low-SNR rate with M antennas."""
    if M < 1 or rho < 0:
        raise ValueError("need M >= 1 and rho >= 0")
    return LOG2E * rho * M


def rate_gap_db(rho_db, reference, alternative, at_db):
    """Extra SNR (dB) the alternative curve needs to match the reference at ``at_db``.

    Both curves are rates sampled on the same increasing dB grid and are
    interpolated linearly in dB.  Returns NaN when the alternative never
    reaches the reference level on the grid.
    """
    rho_db = np.asarray(rho_db, dtype=float)
    level = np.interp(at_db, rho_db, np.asarray(reference, dtype=float))
    alt = np.maximum.accumulate(np.asarray(alternative, dtype=float))
    if level > alt[-1] or level < alt[0]:
        return float("nan")
    return float(np.interp(level, alt, rho_db) - at_db)
