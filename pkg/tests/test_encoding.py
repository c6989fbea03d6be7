import math
import random
from fractions import Fraction

import numpy as np
import pytest

from vfboost.encoding import (
    CipherSplitInfo,
    compress_capacity,
    compress_split_infos,
    compute_pack_state,
    decompress_package,
    fixpoint_decode,
    fixpoint_encode,
    mo_cipher_count,
    pack_gh,
    pack_gh_multiclass,
    recover_mo_splitinfo,
    unpack_gh,
)
from vfboost.errors import ConfigError, CorruptionError
from vfboost.paillier import decrypt, encrypt, he_add, keygen


@pytest.fixture(scope="module")
def kp():
    return keygen(256, rng_seed=42)


def exact_fixpoint(x: float, r: int) -> int:
    # Independent oracle: exact rational arithmetic.
    return int(Fraction(x) * (1 << r))


def test_fixpoint_simple_values():
    assert fixpoint_encode(0.5, 53) == 2**52
    assert fixpoint_encode(0.0, 17) == 0
    assert fixpoint_encode(0.3, 53) == exact_fixpoint(0.3, 53)


def test_fixpoint_matches_exact_oracle_randomized():
    rng = random.Random(9)
    for _ in range(2000):
        x = rng.random() * rng.choice([1, 3, 1000])
        r = rng.randrange(10, 61)
        assert fixpoint_encode(x, r) == exact_fixpoint(x, r)


def test_fixpoint_rejects_negative():
    with pytest.raises(ValueError):
        fixpoint_encode(-0.25, 53)


def test_fixpoint_decode_precision():
    for x in (0.0, 0.3, 0.9999, 123.456):
        v = fixpoint_encode(x, 53)
        assert abs(fixpoint_decode(v, 53) - x) <= 2.0**-53 * max(1.0, x) * 2


def test_pack_state_million_instances_matches_published_assignment():
    state = compute_pack_state(
        np.array([-1.0, 1.0] * 500000), np.array([1.0, 0.5] * 500000), r=53, iota=1023
    )
    assert state.g_off == 1.0
    assert state.g_max == 1.0
    assert state.h_max == 1.0
    assert state.b_g == 74
    assert state.b_h == 73
    assert state.b_gh == 147
    assert compress_capacity(1023, state.b_gh) == 6


def test_pack_state_degenerate_zero_vectors():
    state = compute_pack_state(np.array([0.0]), np.array([0.0]), r=53)
    assert state.g_off == 0.0
    assert state.b_g == 1 and state.b_h == 1


def test_pack_state_bit_lengths_match_bigint_oracle():
    n = 1000
    rng = np.random.default_rng(3)
    g = rng.uniform(-1, 1, n)
    h = rng.uniform(0, 1, n)
    r = 10
    state = compute_pack_state(g, h, r=r)
    g_imax = int(Fraction(n) * (Fraction(float(g.max())) + Fraction(-float(g.min()))) * (1 << r))
    h_imax = int(Fraction(n) * Fraction(float(h.max())) * (1 << r))
    assert state.b_g == g_imax.bit_length()
    assert state.b_h == h_imax.bit_length()


def test_pack_state_key_too_small_names_required_bits():
    with pytest.raises(ConfigError) as err:
        compute_pack_state(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=53, iota=100)
    assert "key_bits" in str(err.value)


def test_pack_unpack_roundtrip_coarse():
    state = compute_pack_state(np.array([-1.0, 0.25]), np.array([0.5, 0.5]), r=4)
    packed = pack_gh([0.25], [0.5], state)
    g, h = unpack_gh(packed[0], state, 1)
    assert abs(g - 0.25) <= 2.0**-3
    assert abs(h - 0.5) <= 2.0**-3


def test_pack_sum_unpack_three_instances():
    rng = np.random.default_rng(11)
    g = rng.uniform(-1, 1, 3)
    h = rng.uniform(0, 1, 3)
    state = compute_pack_state(g, h, r=53)
    packed = pack_gh(g, h, state)
    g_sum, h_sum = unpack_gh(sum(packed), state, 3)
    assert abs(g_sum - g.sum()) <= 3 * 2.0**-53 * 4
    assert abs(h_sum - h.sum()) <= 3 * 2.0**-53 * 4


def test_unpack_zero_count_zero_value():
    state = compute_pack_state(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=20)
    assert unpack_gh(0, state, 0) == (0.0, 0.0)


def test_unpack_rejects_oversized_value():
    state = compute_pack_state(np.array([0.5]), np.array([0.5]), r=10)
    with pytest.raises(CorruptionError):
        unpack_gh(1 << state.b_gh, state, 1)


def test_no_bitfield_bleed_exhaustive_adversarial():
    # Every instance at the maxima; the summed h field must not carry into g.
    for n in range(1, 9):
        for r in (4, 6):
            g = np.full(n, 1.0)
            h = np.full(n, 1.0)
            state = compute_pack_state(g, h, r=r)
            packed = pack_gh(g, h, state)
            total = sum(packed)
            g_sum, h_sum = unpack_gh(total, state, n)
            assert abs(g_sum - n * 1.0) <= n * 2.0**-r * 2
            assert abs(h_sum - n * 1.0) <= n * 2.0**-r * 2


def test_compress_capacity_values():
    assert compress_capacity(1023, 147) == 6
    assert compress_capacity(1023, 1023) == 1
    assert compress_capacity(2047, 147) == 13
    with pytest.raises(ConfigError):
        compress_capacity(100, 147)


def _random_infos(pk, state, rng, count):
    infos, plains = [], []
    for i in range(count):
        sc = rng.randrange(1, 5)
        value = rng.getrandbits(state.b_gh - 1)
        infos.append(CipherSplitInfo(split_id=1000 + i, sample_count=sc, cipher=encrypt(pk, value)))
        plains.append(value)
    return infos, plains


def test_compress_package_shapes():
    kp = keygen(256, rng_seed=5)
    state = compute_pack_state(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=12)
    rng = random.Random(0)
    infos, _ = _random_infos(kp.public_key, state, rng, 13)
    packages = compress_split_infos(infos, 6, state.b_gh)
    assert [len(p.split_ids) for p in packages] == [6, 6, 1]


def test_compress_single_info_identity(kp):
    state = compute_pack_state(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=12)
    value = 12345
    info = CipherSplitInfo(split_id=7, sample_count=2, cipher=encrypt(kp.public_key, value))
    (package,) = compress_split_infos([info], 6, state.b_gh)
    assert decrypt(kp.secret_key, package.cipher) == value


def test_compress_decompress_matches_plaintext_fold(kp):
    state = compute_pack_state(np.array([-1.0, 1.0] * 4), np.array([1.0, 1.0] * 4), r=12)
    rng = random.Random(77)
    infos, plains = _random_infos(kp.public_key, state, rng, 6)
    (package,) = compress_split_infos(infos, 6, state.b_gh)
    plain = decrypt(kp.secret_key, package.cipher)
    # Independent oracle: fold the plaintexts the same way.
    expect = 0
    for v in plains:
        expect = (expect << state.b_gh) + v
    assert plain == expect
    entries = decompress_package(plain, package, state)
    for (g_sum, h_sum, split_id, count), raw, info in zip(entries, plains, infos):
        assert split_id == info.split_id
        assert count == info.sample_count
        eg, eh = unpack_gh(raw, state, count)
        assert (g_sum, h_sum) == (eg, eh)


def test_decompress_rejects_extra_bits(kp):
    state = compute_pack_state(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=12)
    info = CipherSplitInfo(split_id=1, sample_count=1, cipher=encrypt(kp.public_key, 3))
    (package,) = compress_split_infos([info], 4, state.b_gh)
    bogus = (1 << (2 * state.b_gh)) + 3
    with pytest.raises(CorruptionError):
        decompress_package(bogus, package, state)


def test_mo_capacity_and_cipher_count():
    assert mo_cipher_count(11, 6) == 2
    assert mo_cipher_count(1, 6) == 1
    assert mo_cipher_count(6, 6) == 1
    assert 1023 // 147 == 6


def test_multiclass_pack_recover_roundtrip(kp):
    rng = np.random.default_rng(123)
    n, k = 5, 4
    G = rng.uniform(-1, 1, (n, k))
    H = rng.uniform(0, 0.25, (n, k))
    state = compute_pack_state(G.ravel(), H.ravel(), r=30, iota=kp.public_key.max_plaintext_bits)
    rows, eta_c, n_k = pack_gh_multiclass(G, H, state, kp.public_key)
    assert all(len(r) == n_k for r in rows)
    # Homomorphic sum over all instances, then recover per-class sums.
    agg = rows[0]
    for row in rows[1:]:
        agg = [he_add(a, b) for a, b in zip(agg, row)]
    plains = [decrypt(kp.secret_key, c) for c in agg]
    g_rec, h_rec = recover_mo_splitinfo(plains, k, eta_c, state, n)
    assert np.allclose(g_rec, G.sum(axis=0), atol=n * 2.0**-29)
    assert np.allclose(h_rec, H.sum(axis=0), atol=n * 2.0**-29)


def test_multiclass_single_class_equals_scalar_path(kp):
    g = np.array([-0.4, 0.7, 0.1])
    h = np.array([0.2, 0.25, 0.05])
    state = compute_pack_state(g, h, r=30, iota=kp.public_key.max_plaintext_bits)
    rows, eta_c, n_k = pack_gh_multiclass(g[:, None], h[:, None], state, kp.public_key)
    assert n_k == 1
    scalar_packed = pack_gh(g, h, state)
    for row, expect in zip(rows, scalar_packed):
        assert decrypt(kp.secret_key, row[0]) == expect


def test_multiclass_all_zero(kp):
    G = np.zeros((3, 2))
    H = np.zeros((3, 2))
    state = compute_pack_state(G.ravel(), H.ravel(), r=20)
    rows, eta_c, n_k = pack_gh_multiclass(G, H, state, kp.public_key)
    plains = [decrypt(kp.secret_key, c) for c in rows[0]]
    g_rec, h_rec = recover_mo_splitinfo(plains, 2, eta_c, state, 1)
    assert np.all(g_rec == 0.0) and np.all(h_rec == 0.0)


def test_recover_requires_enough_integers():
    state = compute_pack_state(np.array([-1.0, 1.0]), np.array([1.0, 1.0]), r=12)
    with pytest.raises(CorruptionError):
        recover_mo_splitinfo([0], n_classes=9, eta_c=2, state=state, sample_count=1)


def test_homomorphic_subset_sum_property():
    # For random subsets S: unpack(D(sum of E(pack(g_i, h_i)))) == subset sums.
    kp = keygen(256, rng_seed=31)
    rng = np.random.default_rng(8)
    n = 12
    g = rng.uniform(-2, 2, n)
    h = rng.uniform(0, 1, n)
    state = compute_pack_state(g, h, r=24, iota=kp.public_key.max_plaintext_bits)
    packed = pack_gh(g, h, state)
    ciphers = [encrypt(kp.public_key, v) for v in packed]
    py_rng = random.Random(4)
    for _ in range(20):
        size = py_rng.randrange(1, n + 1)
        subset = py_rng.sample(range(n), size)
        agg = ciphers[subset[0]]
        for i in subset[1:]:
            agg = he_add(agg, ciphers[i])
        g_sum, h_sum = unpack_gh(decrypt(kp.secret_key, agg), state, size)
        assert abs(g_sum - g[subset].sum()) <= size * 2.0**-23
        assert abs(h_sum - h[subset].sum()) <= size * 2.0**-23
