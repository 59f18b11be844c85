"""Vector-perturbation precoding and an uncoded BER harness.

The transmitter sends ``x = G (u + tau l) / sqrt(gamma)`` with the
regularized inverse ``G = H^H (H H^H + (alpha/rho) I)^{-1}``, the Gaussian
integer vector ``l`` chosen to minimise ``gamma = ||G (u + tau l)||^2``.
Each receiver rescales by ``sqrt(gamma)``, folds both axes into
``[-tau/2, tau/2)`` and slices.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np

from . import rng
from .errors import DimensionError, NumericError
from .matgen import sample_channels

TAU_FACTOR = 2.5
NODE_CAP = 1_000_000
CHUNK_USES = 1024


@dataclass(frozen=True)
class Constellation:
    """Square QAM with unit average energy and per-axis Gray labels.

    ``labels[i]`` holds the bits of ``points[i]``: in-phase bits first, then
    quadrature bits.
    """

    name: str
    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    delta: float
    c_max: float
    bits_per_symbol: int
    levels: np.ndarray = field(repr=False)
    level_bits: np.ndarray = field(repr=False)


def _gray(n_bits):
    codes = [i ^ (i >> 1) for i in range(1 << n_bits)]
    return np.array([[(c >> (n_bits - 1 - b)) & 1 for b in range(n_bits)] for c in codes])


def _square_qam(name, side):
    axis_bits = int(math.log2(side))
    raw = np.arange(side) * 2.0 - (side - 1)
    scale = math.sqrt(2.0 * np.mean(raw**2))
    levels = raw / scale
    level_bits = _gray(axis_bits)
    points, labels = [], []
    for i in range(side):
        for q in range(side):
            points.append(levels[i] + 1j * levels[q])
            labels.append(np.concatenate([level_bits[i], level_bits[q]]))
    points = np.array(points)
    return Constellation(
        name=name,
        points=points,
        labels=np.array(labels, dtype=np.int8),
        delta=2.0 / scale,
        c_max=float(np.max(np.abs(points))),
        bits_per_symbol=2 * axis_bits,
        levels=levels,
        level_bits=level_bits.astype(np.int8),
    )


def qpsk():
    return _square_qam("QPSK", 2)


def qam16():
    return _square_qam("16QAM", 4)


def constellation(name):
    try:
        return {"QPSK": qpsk, "16QAM": qam16}[name.upper()]()
    except KeyError:
        raise ValueError(f"unknown constellation {name!r}; use QPSK or 16QAM") from None


def modulate(bits, const):
    """Map a (..., bits_per_symbol) 0/1 array to symbols."""
    bits = np.asarray(bits)
    half = const.bits_per_symbol // 2
    weights = 1 << np.arange(half - 1, -1, -1)
    # gray label -> level index through the inverse lookup table
    lookup = np.empty(len(const.levels), dtype=np.int64)
    lookup[const.level_bits @ weights] = np.arange(len(const.levels))
    i = lookup[bits[..., :half] @ weights]
    q = lookup[bits[..., half:] @ weights]
    return const.levels[i] + 1j * const.levels[q]


def _slice_axis(v, const):
    step = const.delta
    idx = np.rint((v - const.levels[0]) / step).astype(np.int64)
    return np.clip(idx, 0, len(const.levels) - 1)


def slice_symbols(z, const):
    """Nearest constellation point and its bits, for each entry of z."""
    i = _slice_axis(z.real, const)
    q = _slice_axis(z.imag, const)
    symbols = const.levels[i] + 1j * const.levels[q]
    bits = np.concatenate([const.level_bits[i], const.level_bits[q]], axis=-1)
    return symbols, bits


def tau(const, factor=TAU_FACTOR):
    """Perturbation lattice spacing ``factor * (|c|_max + delta / 2)``."""
    return factor * (const.c_max + const.delta / 2.0)


def mod_tau(z, tau_):
    """Fold real and imaginary parts into ``[-tau/2, tau/2)``."""
    z = np.asarray(z)

    def fold(v):
        return v - tau_ * np.floor(v / tau_ + 0.5)

    if np.iscomplexobj(z):
        return fold(z.real) + 1j * fold(z.imag)
    return fold(z)


def regularized_inverse(H, alpha, rho=math.inf):
    """``G = H^H (H H^H + (alpha/rho) I)^{-1}`` (M x K), batched over leading axes."""
    H = np.asarray(H, dtype=np.complex128)
    if H.ndim < 2 or H.shape[-2] > H.shape[-1]:
        raise DimensionError(f"need a K x M channel with K <= M, got {H.shape}")
    K = H.shape[-2]
    Hh = np.swapaxes(H.conj(), -1, -2)
    reg = 0.0 if alpha == 0 else alpha / rho
    A = H @ Hh + reg * np.eye(K)
    try:
        inv = np.linalg.solve(A, np.broadcast_to(np.eye(K), A.shape))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"H H^H + (alpha/rho) I is singular: {exc}") from exc
    if not np.all(np.isfinite(inv)):
        raise NumericError("regularized inverse is not finite")
    return Hh @ inv


# ---------------------------------------------------------------------------
# closest lattice point


@numba.njit(cache=True, nogil=True)
def _schnorr_euchner(R, c, best_d, node_cap):
    """Depth-first search for the integer x minimising ||R (x - c)||^2.

    R is real upper triangular.  Only points strictly closer than best_d
    (the x = 0 candidate's distance on entry) are accepted.
    """
    n = R.shape[0]
    best = np.zeros(n)
    x = np.zeros(n)
    cen = np.zeros(n)
    delta = np.zeros(n)
    dist = np.zeros(n + 1)
    k = n - 1
    cen[k] = c[k]
    x[k] = np.round(cen[k])
    delta[k] = 1.0 if cen[k] >= x[k] else -1.0
    nodes = 0
    while True:
        diff = x[k] - cen[k]
        dk = dist[k + 1] + (R[k, k] * diff) ** 2
        nodes += 1
        if nodes > node_cap:
            return best, best_d, nodes, False
        if dk < best_d and k > 0:
            dist[k] = dk
            k -= 1
            s = 0.0
            for j in range(k + 1, n):
                s += R[k, j] * (x[j] - c[j])
            cen[k] = c[k] - s / R[k, k]
            x[k] = np.round(cen[k])
            delta[k] = 1.0 if cen[k] >= x[k] else -1.0
            continue
        if dk < best_d:
            # leaf: later siblings are farther, so climb straight away
            best_d = dk
            for j in range(n):
                best[j] = x[j]
        k += 1
        if k == n:
            return best, best_d, nodes, True
        # next sibling in zig-zag order around the centre
        x[k] += delta[k]
        delta[k] = -delta[k] - (1.0 if delta[k] > 0 else -1.0)


def _real_upper(R):
    # complex upper-triangular R -> real 2K x 2K upper triangular, (re, im) interleaved
    K = R.shape[0]
    out = np.zeros((2 * K, 2 * K))
    out[0::2, 0::2] = R.real
    out[0::2, 1::2] = -R.imag
    out[1::2, 0::2] = R.imag
    out[1::2, 1::2] = R.real
    return out


class Perturbation(NamedTuple):
    l: np.ndarray
    objective: float
    optimal: bool
    nodes: int


def perturbation_objective(u, G, tau_, l):
    v = G @ (np.asarray(u) + tau_ * np.asarray(l))
    return float(np.real(np.vdot(v, v)))


def find_perturbation(u, G, tau_, node_cap=NODE_CAP, chol=None):
    """Gaussian-integer l minimising ``||G (u + tau l)||^2`` exactly.

    The quadratic form ``G^H G = R^H R`` is Cholesky-factored and the search
    runs on the equivalent 2K-dimensional real lattice.  If ``node_cap`` is
    hit, the best point so far is returned with ``optimal=False``.
    """
    u = np.asarray(u, dtype=np.complex128)
    G = np.asarray(G, dtype=np.complex128)
    if chol is None:
        try:
            chol = np.linalg.cholesky(G.conj().T @ G)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"G^H G is not positive definite: {exc}") from exc
    R = _real_upper(chol.conj().T)
    target = -u / tau_
    c = np.empty(2 * u.size)
    c[0::2] = target.real
    c[1::2] = target.imag
    d0 = float(np.sum((R @ c) ** 2))
    xr, _, nodes, complete = _schnorr_euchner(R, c, d0, node_cap)
    l = xr[0::2] + 1j * xr[1::2]
    return Perturbation(l, perturbation_objective(u, G, tau_, l), bool(complete), int(nodes))


# ---------------------------------------------------------------------------
# transmit / receive


@dataclass(frozen=True)
class PrecoderConfig:
    """One vector-perturbation link.

    ``alpha=None`` means ``alpha = K``.  ``pool`` is the number of users L the
    K served ones are drawn from (default K).  ``coherence`` is the number of
    consecutive channel uses sharing one channel draw (1 = fast fading).
    """

    M: int
    K: int
    constellation: Constellation
    alpha: float = None
    seed: int = 0
    pool: int = None
    tau_factor: float = TAU_FACTOR
    coherence: int = 1
    perturb: bool = True

    def __post_init__(self):
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(self.K))
        if self.pool is None:
            object.__setattr__(self, "pool", self.K)
        if not 1 <= self.K <= self.M:
            raise DimensionError(f"need 1 <= K <= M, got K={self.K}, M={self.M}")
        if self.pool < self.K:
            raise DimensionError(f"user pool {self.pool} smaller than K={self.K}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.coherence < 1:
            raise ValueError("coherence must be >= 1")

    @property
    def tau(self):
        return tau(self.constellation, self.tau_factor)


class Transmission(NamedTuple):
    x: np.ndarray
    gamma_norm: float
    l: np.ndarray


def transmit(u, H, cfg, rho=math.inf, perturb=None):
    """Precode one symbol vector; ``||x||^2 == 1``."""
    perturb = cfg.perturb if perturb is None else perturb
    G = regularized_inverse(H, cfg.alpha, rho)
    t = cfg.tau
    l = find_perturbation(u, G, t).l if perturb else np.zeros(len(u), dtype=complex)
    s = G @ (np.asarray(u) + t * l)
    gamma_norm = float(np.real(np.vdot(s, s)))
    if gamma_norm == 0.0:
        return Transmission(np.zeros_like(s), 1.0, l)
    return Transmission(s / math.sqrt(gamma_norm), gamma_norm, l)


def receive(y, tau_, gamma_norm, const):
    """Rescale, fold modulo tau and slice; returns (symbols, bits)."""
    if not gamma_norm > 0:
        raise ValueError("gamma_norm must be positive")
    z = mod_tau(np.sqrt(gamma_norm) * np.asarray(y), tau_)
    return slice_symbols(z, const)


# ---------------------------------------------------------------------------
# BER simulation


@dataclass(frozen=True)
class BerPoint:
    rho_db: float
    bit_errors: int
    bits_sent: int

    @property
    def ber(self):
        return self.bit_errors / self.bits_sent if self.bits_sent else 0.0


def _draw_block(cfg, uses):
    """Channels, data bits and unit-variance noise for the given use indices.

    Every draw is keyed by the use index (channels by its coherence block),
    so all SNR points see the same channels, data and normalised noise.
    """
    K, M, L = cfg.K, cfg.M, cfg.pool
    bps = cfg.constellation.bits_per_symbol
    blocks = uses // cfg.coherence
    H = sample_channels(L, M, cfg.seed, blocks)
    if L > K:
        order = np.argsort(rng.uniform(cfg.seed, rng.USERS, uses, L), axis=1)[:, :K]
        H = np.take_along_axis(H, order[:, :, None], axis=1)
    bits = (rng.uniform(cfg.seed, rng.DATA, uses, K * bps) < 0.5).astype(np.int8)
    bits = bits.reshape(uses.size, K, bps)
    noise = rng.complex_normal(cfg.seed, rng.NOISE, uses, K)
    return H, bits, noise


def _precode_block(H, u, cfg, rho):
    G = regularized_inverse(H, cfg.alpha, rho)
    t = cfg.tau
    l = np.zeros(u.shape, dtype=complex)
    optimal = True
    if cfg.perturb:
        chol = np.linalg.cholesky(np.swapaxes(G.conj(), -1, -2) @ G)
        for n in range(u.shape[0]):
            res = find_perturbation(u[n], G[n], t, chol=chol[n])
            l[n] = res.l
            optimal &= res.optimal
    s = np.einsum("nmk,nk->nm", G, u + t * l)
    gamma_norm = np.sum(np.abs(s) ** 2, axis=1)
    return s / np.sqrt(gamma_norm)[:, None], gamma_norm, optimal


def _chunk_errors(cfg, uses, rho_grid_db):
    const = cfg.constellation
    t = cfg.tau
    H, bits, noise = _draw_block(cfg, uses)
    u = modulate(bits, const)
    errors = np.zeros(len(rho_grid_db), dtype=np.int64)
    for i, rho_db in enumerate(rho_grid_db):
        rho = 10.0 ** (rho_db / 10.0)
        x, gamma_norm, _ = _precode_block(H, u, cfg, rho)
        y = np.einsum("nkm,nm->nk", H, x) + noise / math.sqrt(rho)
        z = mod_tau(np.sqrt(gamma_norm)[:, None] * y, t)
        _, got = slice_symbols(z, const)
        errors[i] = np.count_nonzero(got != bits)
    return errors


def simulate_ber(cfg, rho_grid_db, symbols_per_point, workers=1):
    """Uncoded BER of the full transmit/receive chain at each SNR in dB.

    ``symbols_per_point`` symbols per SNR, i.e. ``ceil(symbols / K)`` channel
    uses.  Total transmit power is 1 and the per-user noise variance is
    ``1 / rho``, which is the same ratio as power ``rho`` over unit noise.
    Chunks of channel uses are independent and may run on ``workers``
    threads; error counts are integer sums, so the result does not depend
    on the worker count.
    """
    if symbols_per_point < 1:
        raise ValueError("symbols_per_point must be >= 1")
    rho_grid_db = [float(r) for r in rho_grid_db]
    n_uses = -(-symbols_per_point // cfg.K)
    chunks = [
        np.arange(start, min(n_uses, start + CHUNK_USES)) for start in range(0, n_uses, CHUNK_USES)
    ]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda uses: _chunk_errors(cfg, uses, rho_grid_db), chunks))
    else:
        parts = [_chunk_errors(cfg, uses, rho_grid_db) for uses in chunks]
    errors = np.sum(parts, axis=0)
    bits_sent = n_uses * cfg.K * cfg.constellation.bits_per_symbol
    return [BerPoint(r, int(e), bits_sent) for r, e in zip(rho_grid_db, errors)]
