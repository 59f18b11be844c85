"""Large-system analytics: Marchenko-Pastur rate and user-count sensitivity.

``beta = M / K`` is the number of transmit antennas per served user and
``rho`` the linear SNR (total transmit power over per-user noise power).
``capF(beta, rho)`` is the per-user rate in bits, so ``K * capF`` is the
large-system equal-power sum-rate.

The sensitivity is the fractional power increase needed per fractional
reduction of served users at constant sum-rate: ``(drho/rho) / (dbeta/beta)``.
"""

import math
import warnings
from dataclasses import dataclass

import mpmath
from scipy import integrate, optimize

from .errors import DomainError, NumericError, RangeError

LOG2E = 1.0 / math.log(2.0)

# below this SNR the closed forms cancel catastrophically in double precision
# (error grows like eps / rho**2), so they are evaluated with mpmath instead
EXTENDED_PRECISION_BELOW = 1e-3
_MP_DPS = 40

RHO_MIN = 1e-8
RHO_MAX = 1e8


class AsymptoteWarning(UserWarning):
    """The high-SNR asymptote was used where it is not yet positive."""


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


def linear_to_db(x):
    return 10.0 * math.log10(x)


@dataclass(frozen=True)
class MPParams:
    """Intermediates shared by the rate and its derivatives.

    ``one_minus_a`` is formed as ``(1 + rho (sqrt(beta)-1)^2) / (1 + rho
    (sqrt(beta)+1)^2)`` rather than ``1 - a``, which is exact and keeps full
    relative precision when ``a`` is close to one.
    """

    beta: float
    rho: float
    a: float
    gamma_mp: float
    d: float
    one_minus_a: float


class _Lib:
    def __init__(self, sqrt, log, conv):
        self.sqrt, self.log, self.conv = sqrt, log, conv
        self.ln2 = log(conv(2))
        self.log2e = 1 / self.ln2

    def log2(self, x):
        return self.log(x) / self.ln2


_FLOAT = _Lib(math.sqrt, math.log, float)
_MP = _Lib(mpmath.sqrt, mpmath.log, mpmath.mpf)


def _check(beta, rho):
    if not beta >= 1:
        raise DomainError(f"beta must be >= 1 (no more users than antennas), got {beta}")
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")


def _evaluate(beta, rho, fn):
    """Run ``fn(terms)`` in double or extended precision depending on rho."""
    _check(beta, rho)
    if rho >= EXTENDED_PRECISION_BELOW:
        return float(fn(_terms(beta, rho, _FLOAT)))
    with mpmath.workdps(_MP_DPS):
        return float(fn(_terms(beta, rho, _MP)))


class _terms:
    """All pieces of the closed forms for one (beta, rho), in a given precision."""

    def __init__(self, beta, rho, lib):
        self.lib = L = lib
        b = L.conv(beta)
        r = L.conv(rho)
        sb = L.sqrt(b)
        self.b, self.r, self.sb = b, r, sb
        self.P = 1 + r * (sb + 1) ** 2
        self.a = 4 * r * sb / self.P
        self.one_minus_a = (1 + r * (sb - 1) ** 2) / self.P
        self.s = L.sqrt(self.one_minus_a)
        self.g = (sb - 1) / (sb + 1)

    def F(self):
        L, b, s, g, sb = self.lib, self.b, self.s, self.g, self.sb
        value = L.log2(self.P) + (b + 1) * L.log2((1 + s) / 2)
        value -= L.log2e * sb * (1 - s) / (1 + s)
        if b != 1:
            # (beta - 1) log(...) is exactly zero at beta = 1
            value += (b - 1) * L.log2((1 + g) / (g + s))
        return value

    def d(self):
        b, s, g, sb, P = self.b, self.s, self.g, self.sb, self.P
        return (
            (b - 1) / (2 * s * P * (g + s))
            - (sb + 1) ** 2 / (2 * s * P * (1 + s) ** 2)
            - (b + 1) / (2 * P * (1 + s) ** 2)
        )

    def c1(self):
        L, sb = self.lib, self.sb
        return self.a * L.log2e * ((sb + 1) ** 2 / (4 * sb) + self.d())

    def c2(self):
        L, b, r, s, g, sb = self.lib, self.b, self.r, self.s, self.g, self.sb
        first = b * L.log2((1 + g) * (1 + s) / (2 * (g + s)))
        second = L.log2e * (sb - 1) * (1 - s) / (2 * (g + s))
        bracket = -(sb + 1) + 2 * self.d() * (r * b - r - 1) + 2 * sb / (1 + s) ** 2
        return first - second - self.a * L.log2e / 4 * bracket


def mp_params(beta, rho):
    _check(beta, rho)
    t = _terms(beta, rho, _FLOAT)
    return MPParams(beta, rho, t.a, t.g, t.d(), t.one_minus_a)


def capF(beta, rho):
    """Per-user equal-power rate in bits under the Marchenko-Pastur law."""
    return _evaluate(beta, rho, lambda t: t.F())


def capF_quadrature(beta, rho, tol=1e-8):
    """``E log2(1 + rho * lam)`` with ``lam`` Marchenko-Pastur of ratio beta.

    The density ``(1/pi) sqrt(beta/lam - (1 + (beta-1)/lam)^2 / 4)`` on
    ``[(sqrt(beta)-1)^2, (sqrt(beta)+1)^2]`` has square-root edges.  The
    substitution ``lam = lo + 2w sin^2(theta/2)`` turns it into a smooth
    integrand on ``[0, pi]``, which adaptive quadrature then handles to
    ``tol`` absolute.
    """
    _check(beta, rho)
    sb = math.sqrt(beta)
    lo = (sb - 1.0) ** 2
    w = 2.0 * sb  # half-width of the support

    def integrand(theta):
        half = math.sin(0.5 * theta)
        lam = lo + 2.0 * w * half * half
        sin_t = math.sin(theta)
        if lam == 0.0:
            return 0.0
        return math.log1p(rho * lam) * LOG2E * w * w * sin_t * sin_t / (2.0 * math.pi * lam)

    value, err, info = integrate.quad(
        integrand, 0.0, math.pi, epsabs=min(tol, 1e-12), epsrel=1e-12, limit=200, full_output=1
    )[:3]
    if err > tol:
        raise NumericError(f"quadrature did not reach {tol} (estimated error {err})")
    return value


def coeff_d(beta, rho):
    return _evaluate(beta, rho, lambda t: t.d())


def coeff_c1(beta, rho):
    """``rho * dF/drho``."""
    return _evaluate(beta, rho, lambda t: t.c1())


def coeff_c2(beta, rho):
    """``beta * dF/dbeta``."""
    return _evaluate(beta, rho, lambda t: t.c2())


@dataclass(frozen=True)
class SensitivityPoint:
    beta: float
    rho: float
    value: float

    @property
    def rho_db(self):
        return linear_to_db(self.rho)


def _sensitivity_value(beta, rho):
    def ratio(t):
        c1 = t.c1()
        if not c1 > 0:
            raise NumericError(f"c1 = {c1} is not positive at beta={beta}, rho={rho}")
        return (t.F() - t.c2()) / c1

    return _evaluate(beta, rho, ratio)


def sensitivity(beta, rho):
    """Power-penalty per user-reduction ratio for large M and K."""
    return SensitivityPoint(beta, rho, _sensitivity_value(beta, rho))


def sensitivity_beta1(rho):
    """Sensitivity at beta = 1 through ``b = (1 + sqrt(1 + 4 rho)) / 2``."""
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    lib = _FLOAT if rho >= EXTENDED_PRECISION_BELOW else _MP
    with mpmath.workdps(_MP_DPS):
        r = lib.conv(rho)
        b = (1 + lib.sqrt(1 + 4 * r)) / 2
        return float(lib.log(b) * (1 + b / r) - (1 + r / b) / b)


def sensitivity_asymptote(beta, rho, regime):
    """First-order low- or high-SNR form of the sensitivity.

    low: ``beta rho / 2``.  high: ``ln(rho)/2 - 1`` at beta = 1, otherwise
    ``ln(rho) + ln(beta - 1) - 1``.  A non-positive high-SNR value means rho
    is too small for the asymptote; it is returned with an AsymptoteWarning.
    """
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    if regime == "low":
        return beta * rho / 2.0
    if regime != "high":
        raise ValueError(f"regime must be 'low' or 'high', got {regime!r}")
    if beta == 1:
        value = math.log(rho) / 2.0 - 1.0
    else:
        if not beta > 1:
            raise DomainError(f"beta must be >= 1, got {beta}")
        value = math.log(rho) + math.log(beta - 1.0) - 1.0
    if value <= 0:
        warnings.warn(
            f"high-SNR asymptote is {value:.3g} at beta={beta}, rho={rho}; rho is too small",
            AsymptoteWarning,
            stacklevel=2,
        )
    return value


def db_penalty(delta):
    """Power increase in dB for a fractional penalty delta."""
    if not delta > -1:
        raise DomainError(f"delta must exceed -1, got {delta}")
    return 10.0 * math.log10(1.0 + delta)


def complexity_reduction(beta_from, beta_to):
    """Fractional change of beta, equal to the fractional drop in users."""
    if not beta_to >= beta_from >= 1:
        raise DomainError(f"need beta_to >= beta_from >= 1, got {beta_from} -> {beta_to}")
    return (beta_to - beta_from) / beta_from


def solve_operating_point(beta, target, rho_min=RHO_MIN, rho_max=RHO_MAX, scan_points=161):
    """SNR at which the sensitivity equals ``target``.

    The sensitivity is not known to be monotone in rho, so a log-spaced scan
    first looks for sign changes of ``sensitivity - target``.  Exactly one is
    required; it is then refined by bisection in log(rho).
    """
    if not target > 0:
        raise DomainError(f"target sensitivity must be positive, got {target}")
    _check(beta, rho_min)
    lo_log, hi_log = math.log(rho_min), math.log(rho_max)
    grid = [lo_log + (hi_log - lo_log) * i / (scan_points - 1) for i in range(scan_points)]
    resid = [_sensitivity_value(beta, math.exp(x)) - target for x in grid]
    brackets = [
        (grid[i], grid[i + 1])
        for i in range(scan_points - 1)
        if (resid[i] < 0) != (resid[i + 1] < 0)
    ]
    if not brackets:
        raise RangeError(
            f"sensitivity {target} at beta={beta} not reached for rho in [{rho_min}, {rho_max}]"
        )
    if len(brackets) > 1:
        raise RangeError(f"sensitivity {target} at beta={beta} is crossed {len(brackets)} times")
    a, b = brackets[0]
    fa = _sensitivity_value(beta, math.exp(a)) - target
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = _sensitivity_value(beta, math.exp(mid)) - target
        if fm == 0.0:
            return math.exp(mid)
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
        if b - a < 1e-15:
            break
    return math.exp(0.5 * (a + b))


def finite_diff_sensitivity(beta, rho, dbeta=None):
    """Sensitivity straight from its definition, as an oracle for the closed form.

    Holding M fixed, ``K ∝ 1/beta``, so a constant sum-rate means
    ``capF(beta', rho') / beta' == capF(beta, rho) / beta``.  Solve for rho'
    after nudging beta by ``dbeta`` and return ``((rho'-rho)/rho) / (dbeta/beta)``.
    """
    _check(beta, rho)
    if dbeta is None:
        dbeta = 1e-5 * beta
    beta2 = beta + dbeta
    level = capF(beta, rho) / beta

    def gap(x):
        return capF(beta2, x) / beta2 - level

    hi = rho * (1.0 + 1e-3)
    while gap(hi) < 0:
        hi = rho + 2.0 * (hi - rho)
        if hi > RHO_MAX:
            raise RangeError(f"no rho' up to {RHO_MAX} restores the rate at beta={beta2}")
    if gap(rho) > 0:
        raise RangeError("rate increased with beta; cannot bracket rho'")
    rho2 = optimize.brentq(gap, rho, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return ((rho2 - rho) / rho) / (dbeta / beta)
