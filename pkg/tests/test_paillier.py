import random

import pytest

from vfboost.errors import ConfigError, CryptoError, KeyMismatchError, PlaintextOverflowError
from vfboost.paillier import (
    Ciphertext,
    decrypt,
    encrypt,
    he_add,
    he_negate,
    he_scalar_mul,
    he_sub,
    keygen,
    obfuscate,
)


@pytest.fixture(scope="module")
def kp():
    return keygen(512, rng_seed=20240907)


def test_keygen_deterministic_under_seed():
    a = keygen(512, rng_seed=7)
    b = keygen(512, rng_seed=7)
    assert a.public_key.n == b.public_key.n
    assert a.secret_key.lam == b.secret_key.lam


def test_keygen_1024_plaintext_bound():
    kp = keygen(1024, rng_seed=11)
    assert kp.public_key.n.bit_length() == 1024
    assert kp.public_key.max_plaintext_bits == 1023


def test_keygen_rejects_small_or_odd_bits():
    with pytest.raises(ConfigError):
        keygen(255)
    with pytest.raises(ConfigError):
        keygen(130)
    with pytest.raises(ConfigError):
        keygen(513)


def test_roundtrip_zero_and_large(kp):
    pk, sk = kp.public_key, kp.secret_key
    assert decrypt(sk, encrypt(pk, 0)) == 0
    assert decrypt(sk, encrypt(pk, 2**100)) == 2**100


def test_plaintext_bound_enforced(kp):
    pk = kp.public_key
    assert decrypt(kp.secret_key, encrypt(pk, 2**511 - 1)) == 2**511 - 1
    with pytest.raises(PlaintextOverflowError):
        encrypt(pk, 2**511)
    with pytest.raises(PlaintextOverflowError):
        encrypt(pk, -1)


def test_wrong_key_rejected(kp):
    other = keygen(512, rng_seed=99)
    c = encrypt(kp.public_key, 42)
    with pytest.raises(KeyMismatchError):
        decrypt(other.secret_key, c)
    with pytest.raises(KeyMismatchError):
        he_add(c, encrypt(other.public_key, 1))


def test_add_and_scalar_mul_basics(kp):
    pk, sk = kp.public_key, kp.secret_key
    assert decrypt(sk, he_add(encrypt(pk, 2), encrypt(pk, 3))) == 5
    assert decrypt(sk, he_scalar_mul(3, encrypt(pk, 4))) == 12
    with pytest.raises(CryptoError):
        he_scalar_mul(-1, encrypt(pk, 4))


def test_shift_and_add_matches_big_integer_arithmetic(kp):
    # k * E(x) + E(y) with k = 2^b must decrypt to x * 2^b + y.
    pk, sk = kp.public_key, kp.secret_key
    rng = random.Random(5)
    for _ in range(25):
        b = rng.randrange(8, 120)
        x = rng.getrandbits(100)
        y = rng.getrandbits(b)
        folded = he_add(he_scalar_mul(1 << b, encrypt(pk, x)), encrypt(pk, y))
        assert decrypt(sk, folded) == (x << b) + y


def test_additive_homomorphism_many_random_cases():
    kp = keygen(256, rng_seed=3)
    pk, sk = kp.public_key, kp.secret_key
    rng = random.Random(17)
    for _ in range(1000):
        m1 = rng.getrandbits(120)
        m2 = rng.getrandbits(120)
        assert decrypt(sk, he_add(encrypt(pk, m1), encrypt(pk, m2))) == m1 + m2


def test_scalar_property_many_random_cases():
    kp = keygen(256, rng_seed=4)
    pk, sk = kp.public_key, kp.secret_key
    rng = random.Random(23)
    for _ in range(300):
        k = rng.getrandbits(40)
        m = rng.getrandbits(100)
        assert decrypt(sk, he_scalar_mul(k, encrypt(pk, m))) == k * m


def test_encryption_is_probabilistic(kp):
    pk, sk = kp.public_key, kp.secret_key
    a, b = encrypt(pk, 77), encrypt(pk, 77)
    assert a.value != b.value
    assert decrypt(sk, a) == decrypt(sk, b) == 77


def test_obfuscate_rerandomizes_without_changing_plaintext(kp):
    pk, sk = kp.public_key, kp.secret_key
    c = encrypt(pk, 1234)
    c2 = obfuscate(c)
    assert c2.value != c.value
    assert decrypt(sk, c2) == 1234


def test_subtraction_via_additive_inverse(kp):
    pk, sk = kp.public_key, kp.secret_key
    assert decrypt(sk, he_sub(encrypt(pk, 1000), encrypt(pk, 1))) == 999
    neg = he_negate(encrypt(pk, 5))
    assert decrypt(sk, neg) == pk.n - 5


def test_serialization_roundtrip(kp):
    pk, sk = kp.public_key, kp.secret_key
    c = encrypt(pk, 31337)
    raw = c.to_bytes()
    back = Ciphertext.from_bytes(raw, pk)
    assert back == c
    assert decrypt(sk, back) == 31337
    other = keygen(512, rng_seed=1).public_key
    with pytest.raises(KeyMismatchError):
        Ciphertext.from_bytes(raw, other)


def test_counters_track_operations():
    kp = keygen(256, rng_seed=8)
    pk, sk = kp.public_key, kp.secret_key
    c1, c2 = encrypt(pk, 1), encrypt(pk, 2)
    he_add(c1, c2)
    he_scalar_mul(5, c1)
    decrypt(sk, c1)
    assert pk.counters.encryptions == 2
    assert pk.counters.additions == 1
    assert pk.counters.scalar_muls == 1
    assert pk.counters.decryptions == 1
