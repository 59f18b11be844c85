import itertools
import math

import numpy as np
import pytest

from musens import matgen, precoder
from musens.errors import DimensionError


@pytest.mark.parametrize("make", [precoder.qpsk, precoder.qam16])
def test_constellation_unit_energy_and_gray(make):
    c = make()
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0)
    assert len(c.points) == 2**c.bits_per_symbol
    # Gray: nearest neighbours on an axis differ in one bit
    for a, b in zip(c.level_bits, c.level_bits[1:]):
        assert np.sum(a != b) == 1
    assert c.delta == pytest.approx(np.min(np.diff(c.levels)))


def test_constellation_lookup():
    assert precoder.constellation("qpsk").name == "QPSK"
    with pytest.raises(ValueError):
        precoder.constellation("8psk")


@pytest.mark.parametrize("name", ["QPSK", "16QAM"])
def test_modulate_slice_roundtrip(name):
    c = precoder.constellation(name)
    bits = c.labels
    sym = precoder.modulate(bits, c)
    assert np.allclose(sym, c.points)
    got_sym, got_bits = precoder.slice_symbols(sym + 0.1 * c.delta * (1 + 1j), c)
    assert np.array_equal(got_bits, bits) and np.allclose(got_sym, sym)


def test_mod_tau_range_and_periodicity():
    t = 3.0
    z = np.linspace(-10, 10, 101) + 1j * np.linspace(7, -7, 101)
    f = precoder.mod_tau(z, t)
    for part in (f.real, f.imag):
        assert np.all(part >= -t / 2) and np.all(part < t / 2)
    assert np.allclose(precoder.mod_tau(z + t * (2 - 3j), t), f)
    assert precoder.mod_tau(1.5, 3.0) == -1.5


def test_tau_value():
    c = precoder.qpsk()
    assert precoder.tau(c) == pytest.approx(2.5 * (c.c_max + c.delta / 2))


def test_regularized_inverse():
    H = matgen.sample_channels(3, 5, 1, 2)
    G = precoder.regularized_inverse(H, 0.0)
    assert np.allclose(H @ G, np.eye(3))
    Gr = precoder.regularized_inverse(H[0], 3.0, 10.0)
    ref = H[0].conj().T @ np.linalg.inv(H[0] @ H[0].conj().T + 0.3 * np.eye(3))
    assert np.allclose(Gr, ref)
    with pytest.raises(DimensionError):
        precoder.regularized_inverse(np.ones((4, 2)), 1.0)


def _brute_force(u, G, t, radius=2):
    best, best_l = math.inf, None
    K = len(u)
    rng = range(-radius, radius + 1)
    for parts in itertools.product(rng, repeat=2 * K):
        l = np.array(parts[0::2]) + 1j * np.array(parts[1::2])
        v = precoder.perturbation_objective(u, G, t, l)
        if v < best:
            best, best_l = v, l
    return best, best_l


@pytest.mark.parametrize("K", [1, 2])
def test_search_matches_brute_force(K):
    c = precoder.qam16()
    t = precoder.tau(c)
    for trial in range(30):
        H = matgen.sample_channels(K, K, 100 + K, [trial])[0]
        G = precoder.regularized_inverse(H, 0.0)
        u = c.points[(np.arange(K) * 5 + trial) % 16]
        res = precoder.find_perturbation(u, G, t)
        best, _ = _brute_force(u, G, t)
        assert res.optimal
        assert res.objective == pytest.approx(best, rel=1e-10)


def test_search_never_worse_than_zero():
    c = precoder.qpsk()
    H = matgen.sample_channels(6, 6, 4, 1)[0]
    G = precoder.regularized_inverse(H, 6.0, 10.0)
    u = c.points[np.arange(6) % 4]
    res = precoder.find_perturbation(u, G, precoder.tau(c))
    assert res.objective <= precoder.perturbation_objective(u, G, precoder.tau(c), np.zeros(6))


def test_node_cap_returns_best_so_far():
    c = precoder.qam16()
    H = matgen.sample_channels(8, 8, 4, 1)[0]
    G = precoder.regularized_inverse(H, 0.0)
    res = precoder.find_perturbation(c.points[:8], G, precoder.tau(c), node_cap=3)
    assert not res.optimal and res.nodes > 3


def test_config_defaults_and_validation():
    cfg = precoder.PrecoderConfig(8, 4, precoder.qpsk())
    assert cfg.alpha == 4.0 and cfg.pool == 4
    with pytest.raises(DimensionError):
        precoder.PrecoderConfig(4, 8, precoder.qpsk())
    with pytest.raises(DimensionError):
        precoder.PrecoderConfig(8, 4, precoder.qpsk(), pool=2)
    with pytest.raises(ValueError):
        precoder.PrecoderConfig(8, 4, precoder.qpsk(), alpha=-1.0)


def test_transmit_unit_power_and_loopback():
    c = precoder.qam16()
    cfg = precoder.PrecoderConfig(4, 4, c, alpha=0.0)
    H = matgen.sample_channels(4, 4, 9, 1)[0]
    u = c.points[[0, 5, 10, 15]]
    tx = precoder.transmit(u, H, cfg)
    assert np.vdot(tx.x, tx.x).real == pytest.approx(1.0)
    sym, bits = precoder.receive(H @ tx.x, cfg.tau, tx.gamma_norm, c)
    assert np.allclose(sym, u)
    with pytest.raises(ValueError):
        precoder.receive(H @ tx.x, cfg.tau, 0.0, c)


def test_ber_reproducible_and_worker_independent():
    cfg = precoder.PrecoderConfig(4, 2, precoder.qpsk(), seed=5, pool=4, coherence=3)
    a = precoder.simulate_ber(cfg, [0.0, 10.0], 3000)
    b = precoder.simulate_ber(cfg, [0.0, 10.0], 3000, workers=3)
    assert a == b
    assert a[0].bits_sent == 1500 * 2 * 2
    assert a[0].ber > a[1].ber


def test_ber_vanishes_at_very_high_snr():
    cfg = precoder.PrecoderConfig(8, 8, precoder.qpsk(), seed=1, pool=8)
    assert precoder.simulate_ber(cfg, [60.0], 2000)[0].bit_errors == 0
    with pytest.raises(ValueError):
        precoder.simulate_ber(cfg, [0.0], 0)
