"""Counter-based random streams.

Every random number is a pure function of ``(seed, stream, trial, counter)``:
a SplitMix64-style hash turns that tuple into 64 uniform bits.  Trials can
therefore be generated in any order, in any batch size and on any number of
workers without changing a single draw.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_STREAM_MUL = np.uint64(0xD1B54A32D192ED03)
_U64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)

# stream tags, one per independent use of randomness
CHANNEL = 0
DATA = 1
NOISE = 2
USERS = 3
GAMMA = 4


def _mix(z):
    # SplitMix64 finalizer; uint64 arithmetic wraps mod 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _keys(seed, stream, trials):
    seed = np.uint64(int(seed) & _U64)
    trials = np.asarray(trials, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(seed + _GOLDEN) ^ (np.uint64(stream) * _STREAM_MUL)
        return _mix(base + _mix(trials + _GOLDEN))


def random_bits(seed, stream, trials, n):
    """Raw 64-bit words, shape ``(len(trials), n)``."""
    keys = _keys(seed, stream, np.atleast_1d(trials))[:, None]
    counters = np.arange(1, n + 1, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        return _mix(keys + _mix(counters * _GOLDEN))


def uniform(seed, stream, trials, n):
    """Uniform doubles in the open interval (0, 1), shape ``(len(trials), n)``."""
    bits = random_bits(seed, stream, trials, n)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def complex_normal(seed, stream, trials, n):
    """Circularly-symmetric complex Gaussians with E|z|^2 = 1.

    Box-Muller on pairs of uniforms: the modulus squared is Exp(1) and the
    phase is uniform, so real and imaginary parts each have variance 1/2.
    """
    u = uniform(seed, stream, trials, 2 * n)
    radius = np.sqrt(-np.log(u[:, 0::2]))
    phase = 2.0 * np.pi * u[:, 1::2]
    return radius * np.exp(1j * phase)


def standard_normal(seed, stream, trials, n):
    """Real standard normals, shape ``(len(trials), n)``."""
    z = complex_normal(seed, stream, trials, (n + 1) // 2)
    out = np.empty((z.shape[0], 2 * z.shape[1]))
    out[:, 0::2] = np.sqrt(2.0) * z.real
    out[:, 1::2] = np.sqrt(2.0) * z.imag
    return out[:, :n]


def gamma(seed, stream, trials, n, shape, max_attempts=64):
    """Gamma(shape, 1) variates, ``shape >= 1``, by Marsaglia-Tsang rejection.

    Attempt ``j`` for variable ``i`` of trial ``t`` consumes counter slots
    derived only from ``(t, i, j)``, so results do not depend on batching.
    """
    if shape < 1:
        raise ValueError("shape must be >= 1")
    trials = np.atleast_1d(np.asarray(trials, dtype=np.int64))
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.full((trials.size, n), np.nan)
    pending = np.ones(out.shape, dtype=bool)
    for attempt in range(max_attempts):
        rows, cols = np.nonzero(pending)
        if rows.size == 0:
            break
        # one sub-stream per attempt, only regenerated for trials still pending
        sub = stream * 1024 + attempt
        live, where = np.unique(rows, return_inverse=True)
        z = standard_normal(seed, sub, trials[live], n)[where, cols]
        u = uniform(seed, sub + 512, trials[live], n)[where, cols]
        v = (1.0 + c * z) ** 3
        with np.errstate(invalid="ignore", divide="ignore"):
            ok = (v > 0) & (np.log(u) < 0.5 * z * z + d - d * v + d * np.log(v))
        out[rows[ok], cols[ok]] = d * v[ok]
        pending[rows[ok], cols[ok]] = False
    if pending.any():
        raise RuntimeError("gamma sampler exhausted its attempt budget")
    return out
