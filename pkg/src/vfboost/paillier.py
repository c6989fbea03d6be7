"""Additively homomorphic Paillier cryptosystem over Python big integers.

Provides the two homomorphic properties the rest of the framework relies on:

    decrypt(he_add(E(a), E(b)))      == a + b
    decrypt(he_scalar_mul(k, E(m)))  == k * m

Messages are non-negative integers strictly below ``2**max_plaintext_bits``,
where ``max_plaintext_bits = n.bit_length() - 1`` (e.g. 1023 for a 1024-bit
key).  Big-integer modular arithmetic is delegated to gmpy2 when available;
a pure-Python fallback keeps the module self-contained.

Correctness-oriented implementation: no CRT decryption shortcuts, no
side-channel hardening.
"""

from __future__ import annotations

import hashlib
import random
import secrets
from dataclasses import dataclass

from .counters import CipherCounters
from .errors import ConfigError, CryptoError, KeyMismatchError, PlaintextOverflowError

try:
    import gmpy2

    def _powmod(base: int, exp: int, mod: int) -> int:
        return int(gmpy2.powmod(base, exp, mod))

    def _invert(a: int, mod: int) -> int:
        return int(gmpy2.invert(a, mod))

    def _is_probable_prime(n: int) -> bool:
        return bool(gmpy2.is_prime(n, 40))

except ImportError:  # pragma: no cover - exercised only without gmpy2
    _powmod = pow

    def _invert(a: int, mod: int) -> int:
        return pow(a, -1, mod)

    def _is_probable_prime(n: int, rounds: int = 40) -> bool:
        if n < 2:
            return False
        for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
            if n % p == 0:
                return n == p
        d, s = n - 1, 0
        while d % 2 == 0:
            d //= 2
            s += 1
        for _ in range(rounds):
            a = secrets.randbelow(n - 3) + 2
            x = pow(a, d, n)
            if x in (1, n - 1):
                continue
            for _ in range(s - 1):
                x = pow(x, 2, n)
                if x == n - 1:
                    break
            else:
                return False
        return True


MIN_KEY_BITS = 256


def _generate_prime(bits: int, rng) -> int:
    # Top two bits forced so the product of two such primes has exactly 2*bits bits.
    while True:
        candidate = rng.getrandbits(bits) | (0b11 << (bits - 2)) | 1
        if _is_probable_prime(candidate):
            return candidate


def _fingerprint(n: int) -> str:
    raw = n.to_bytes((n.bit_length() + 7) // 8, "big")
    return hashlib.sha256(raw).hexdigest()[:16]


class PublicKey:
    """Paillier public key (n, g) with g = n + 1."""

    __slots__ = ("n", "g", "n_sq", "key_bits", "fingerprint", "counters")

    def __init__(self, n: int, key_bits: int):
        self.n = n
        self.g = n + 1
        self.n_sq = n * n
        self.key_bits = key_bits
        self.fingerprint = _fingerprint(n)
        self.counters = CipherCounters()

    @property
    def max_plaintext_bits(self) -> int:
        """Bit length of the largest encryptable integer (one below the modulus)."""
        return self.n.bit_length() - 1

    def __eq__(self, other) -> bool:
        return isinstance(other, PublicKey) and other.n == self.n

    def __repr__(self) -> str:
        return f"PublicKey(bits={self.key_bits}, fp={self.fingerprint})"


class SecretKey:
    """Paillier secret key (lambda, mu); keeps n for decryption."""

    __slots__ = ("n", "n_sq", "lam", "mu", "fingerprint", "counters")

    def __init__(self, n: int, lam: int, mu: int, counters: CipherCounters | None = None):
        self.n = n
        self.n_sq = n * n
        self.lam = lam
        self.mu = mu
        self.fingerprint = _fingerprint(n)
        self.counters = counters if counters is not None else CipherCounters()


@dataclass(frozen=True)
class KeyPair:
    public_key: PublicKey
    secret_key: SecretKey
    key_bits: int


class Ciphertext:
    """An encrypted value in [0, n^2), bound to its public key."""

    __slots__ = ("value", "public_key")

    def __init__(self, value: int, public_key: PublicKey):
        if not 0 <= value < public_key.n_sq:
            raise CryptoError("ciphertext value outside [0, n^2)")
        self.value = value
        self.public_key = public_key

    @property
    def fingerprint(self) -> str:
        return self.public_key.fingerprint

    def __add__(self, other: "Ciphertext") -> "Ciphertext":
        return he_add(self, other)

    def __rmul__(self, k: int) -> "Ciphertext":
        return he_scalar_mul(k, self)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Ciphertext)
            and other.value == self.value
            and other.fingerprint == self.fingerprint
        )

    def __repr__(self) -> str:
        return f"Ciphertext(fp={self.fingerprint}, bits={self.value.bit_length()})"

    def to_bytes(self) -> bytes:
        """Stable wire form: 8-byte fingerprint prefix + big-endian value."""
        fp = bytes.fromhex(self.fingerprint)
        width = (self.public_key.n_sq.bit_length() + 7) // 8
        return fp + self.value.to_bytes(width, "big")

    @classmethod
    def from_bytes(cls, raw: bytes, public_key: PublicKey) -> "Ciphertext":
        fp, payload = raw[:8].hex(), raw[8:]
        if fp != public_key.fingerprint:
            raise KeyMismatchError("serialized ciphertext does not match the public key")
        return cls(int.from_bytes(payload, "big"), public_key)


def keygen(key_bits: int, rng_seed: int | None = None) -> KeyPair:
    """Generate a Paillier key pair with an exactly ``key_bits``-bit modulus.

    A seed makes generation deterministic (tests); otherwise system entropy
    is used.
    """
    if key_bits < MIN_KEY_BITS:
        raise ConfigError(f"key_bits must be >= {MIN_KEY_BITS}, got {key_bits}")
    if key_bits % 2 != 0:
        raise ConfigError(f"key_bits must be even, got {key_bits}")
    rng = random.Random(rng_seed) if rng_seed is not None else secrets.SystemRandom()
    half = key_bits // 2
    p = _generate_prime(half, rng)
    q = _generate_prime(half, rng)
    while q == p:
        q = _generate_prime(half, rng)
    n = p * q
    lam = (p - 1) * (q - 1) // _gcd(p - 1, q - 1)  # lcm(p-1, q-1)
    n_sq = n * n
    # mu = (L(g^lambda mod n^2))^-1 mod n with g = n + 1, so g^lam = 1 + n*lam mod n^2.
    mu = _invert(lam % n, n)
    pk = PublicKey(n, key_bits)
    sk = SecretKey(n, lam, mu, counters=pk.counters)
    return KeyPair(public_key=pk, secret_key=sk, key_bits=key_bits)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _random_unit(n: int, rng=None) -> int:
    draw = rng.randrange if rng is not None else secrets.SystemRandom().randrange
    while True:
        r = draw(1, n)
        if _gcd(r, n) == 1:
            return r


def encrypt(pk: PublicKey, m: int, rng=None) -> Ciphertext:
    """Encrypt a non-negative integer below ``2**pk.max_plaintext_bits``.

    ``rng`` (a ``random.Random``) pins the blinding factor for deterministic
    tests; production callers leave it unset.
    """
    if m < 0:
        raise PlaintextOverflowError("plaintext must be non-negative")
    if m.bit_length() > pk.max_plaintext_bits:
        raise PlaintextOverflowError(
            f"plaintext of {m.bit_length()} bits exceeds the "
            f"{pk.max_plaintext_bits}-bit bound of this key"
        )
    r = _random_unit(pk.n, rng)
    # g^m = (1 + n)^m = 1 + n*m (mod n^2)
    value = ((1 + pk.n * m) % pk.n_sq) * _powmod(r, pk.n, pk.n_sq) % pk.n_sq
    pk.counters.encryptions += 1
    return Ciphertext(value, pk)


def decrypt(sk: SecretKey, c: Ciphertext) -> int:
    if c.fingerprint != sk.fingerprint:
        raise KeyMismatchError("ciphertext was produced under a different key")
    u = _powmod(c.value, sk.lam, sk.n_sq)
    m = ((u - 1) // sk.n) * sk.mu % sk.n
    sk.counters.decryptions += 1
    return m


def _require_same_key(a: Ciphertext, b: Ciphertext) -> None:
    if a.fingerprint != b.fingerprint:
        raise KeyMismatchError("ciphertexts belong to different keys")


def he_add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Homomorphic addition; plaintext bit budget is the caller's responsibility."""
    _require_same_key(a, b)
    pk = a.public_key
    pk.counters.additions += 1
    return Ciphertext(a.value * b.value % pk.n_sq, pk)


def he_scalar_mul(k: int, c: Ciphertext) -> Ciphertext:
    """Homomorphic multiplication by a non-negative plaintext scalar."""
    if k < 0:
        raise CryptoError("scalar must be non-negative; use he_negate for inverses")
    pk = c.public_key
    pk.counters.scalar_muls += 1
    return Ciphertext(_powmod(c.value, k, pk.n_sq), pk)


def he_negate(c: Ciphertext) -> Ciphertext:
    """Additive inverse: decrypts to ``n - m`` (i.e. ``-m`` mod n).

    Used to realize subtraction where the caller guarantees the plaintext
    difference stays non-negative field-wise.
    """
    pk = c.public_key
    pk.counters.negations += 1
    return Ciphertext(_invert(c.value, pk.n_sq), pk)


def he_sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """a - b via addition of the additive inverse."""
    return he_add(a, he_negate(b))


def obfuscate(c: Ciphertext, rng=None) -> Ciphertext:
    """Re-randomize a ciphertext so equal plaintexts are unlinkable across sends."""
    pk = c.public_key
    r = _random_unit(pk.n, rng)
    pk.counters.obfuscations += 1
    return Ciphertext(c.value * _powmod(r, pk.n, pk.n_sq) % pk.n_sq, pk)


def encrypt_zero(pk: PublicKey, rng=None) -> Ciphertext:
    return encrypt(pk, 0, rng)
