"""Maximum of M i.i.d. Gamma(M, 1) variables (half a chi-square with 2M dof).

At low SNR the best single user's gain ``max_k ||h_k||^2`` of an M x M
Rayleigh channel is such a maximum.  These helpers measure how tightly it
concentrates around M.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import DomainError, NumericError

GAMMA_EPS = 1e-15
GAMMA_MAX_ITER = 10_000
_TINY = 1e-300


def _gamma_series(a, x):
    # P(a, x) = x^a e^-x / Gamma(a+1) * sum_n x^n / ((a+1)...(a+n))
    term = total = 1.0 / a
    ap = a
    for _ in range(GAMMA_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * GAMMA_EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise NumericError(f"incomplete gamma series did not converge for a={a}, x={x}")


def _gamma_continued_fraction(a, x):
    # Q(a, x) by the modified Lentz evaluation of the Legendre continued fraction
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, GAMMA_MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < GAMMA_EPS:
            return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h
    raise NumericError(f"incomplete gamma continued fraction did not converge for a={a}, x={x}")


def regularized_gamma(a, x):
    """Return ``(P, Q)``, the regularized lower and upper incomplete gamma.

    Series below ``x < a + 1``, continued fraction above, so the smaller of
    the two is always computed directly and never as ``1 - something``.
    """
    if not a > 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"x must be nonnegative, got {x}")
    if x == 0:
        return 0.0, 1.0
    if x < a + 1.0:
        p = _gamma_series(a, x)
        return p, 1.0 - p
    q = _gamma_continued_fraction(a, x)
    return 1.0 - q, q


def cdf_max_chisq(M, x):
    """``P(max of M Gamma(M,1) <= x) = P(M, x)^M``."""
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    if x <= 0:
        return 0.0
    p, q = regularized_gamma(M, x)
    if p == 0.0:
        return 0.0
    # M * log(P) via log1p(-Q) keeps precision deep in the upper tail
    log_p = math.log1p(-q) if q < 0.5 else math.log(p)
    return math.exp(M * log_p)


def tail_upper_bound(M, x):
    """Upper bound ``e^-x x^M / (Gamma(M) (x - M + 1))`` on the Gamma(M,1) tail.

    Valid for ``x > M - 1``; evaluated in log space.
    """
    if not x > M - 1:
        raise DomainError(f"the tail bound needs x > M - 1, got M={M}, x={x}")
    return math.exp(-x + M * math.log(x) - math.log(x - M + 1) - math.lgamma(M))


def stirling_log_gamma(M):
    """Stirling's ``ln Gamma(M) ~ (M-1) ln(M-1) - (M-1) + ln(2 pi (M-1)) / 2``."""
    if M < 2:
        raise DomainError(f"Stirling form needs M >= 2, got {M}")
    n = M - 1.0
    return n * math.log(n) - n + 0.5 * math.log(2.0 * math.pi * n)


def concentration_lhs(M, zeta):
    """``M (zeta - ln(1+zeta)) + ln(M)/2 + ln(2 pi)/2 + ln(zeta)``.

    Minus the log of the tail bound at ``x = M (1 + zeta)`` with Stirling's
    Gamma and ``ln(M zeta + 1)`` taken as ``ln(M zeta)``.  Growing faster
    than ``ln M`` means the maximum stays below ``M (1 + zeta)`` with
    probability tending to one.
    """
    if M < 1 or not zeta > 0:
        raise DomainError(f"need M >= 1 and zeta > 0, got M={M}, zeta={zeta}")
    return (
        M * (zeta - math.log1p(zeta))
        + 0.5 * math.log(M)
        + 0.5 * math.log(2.0 * math.pi)
        + math.log(zeta)
    )


def requirement_lhs(M, x):
    """Un-simplified form of ``concentration_lhs`` for a general threshold x."""
    return (
        M * math.log(M)
        - 0.5 * math.log(M)
        - M
        + 0.5 * math.log(2.0 * math.pi)
        + x
        - M * math.log(x)
        + math.log(x - M + 1)
    )


@dataclass(frozen=True)
class MaxChiStats:
    M: int
    trials: int
    mean: float
    std_error: float
    zetas: tuple
    probs: tuple

    def prob_stderr(self, i):
        p = self.probs[i]
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)


def sample_maxima(M, trials, seed, chunk=None):
    """Maxima of M Gamma(M, 1) draws per trial; trial t depends only on (seed, t)."""
    if M < 1 or trials < 1:
        raise DomainError(f"need M >= 1 and trials >= 1, got M={M}, trials={trials}")
    chunk = chunk or max(1, 2_000_000 // (M * M + 1))
    out = np.empty(trials)
    for start in range(0, trials, chunk):
        idx = np.arange(start, min(trials, start + chunk))
        out[idx] = rng.gamma(seed, rng.GAMMA, idx, M, float(M)).max(axis=1)
    return out


def empirical_max_stats(M, trials, seed, zetas=(0.1, 0.5, 1.0)):
    """Monte Carlo mean of the maximum and ``Pr{max / M <= 1 + zeta}`` per zeta."""
    maxima = sample_maxima(M, trials, seed)
    std = float(np.std(maxima, ddof=1)) if trials > 1 else 0.0
    probs = tuple(float(np.mean(maxima <= M * (1.0 + z))) for z in zetas)
    return MaxChiStats(
        M, trials, float(maxima.mean()), std / math.sqrt(trials), tuple(zetas), probs
    )
