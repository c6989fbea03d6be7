"""Fixed-point encoding, gradient/hessian bit packing and cipher compression.

All host-side aggregation happens on big non-negative integers.  A gradient
(offset to be non-negative) and a hessian are fixed-point encoded and packed
into disjoint bit fields of a single integer; bin sums of those integers never
bleed across fields because each field is sized for ``n_instances`` worst-case
addends.  Several packed aggregates are later folded into one ciphertext
(shift-and-add) so one decryption recovers many split candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import ConfigError, CorruptionError
from .paillier import Ciphertext, PublicKey, encrypt, he_add, he_scalar_mul

DEFAULT_PRECISION = 53
MIN_PRECISION = 10
MAX_PRECISION = 60


def fixpoint_encode(x: float, r: int) -> int:
    """Map a non-negative float to ``floor(x * 2**r)`` exactly."""
    if x < 0:
        raise ValueError(f"fixpoint_encode requires non-negative input, got {x}")
    # Multiplying a float by a power of two only shifts its exponent, so the
    # product is exact and the floor is the true mathematical floor.
    return int(math.floor(x * (1 << r)))


def fixpoint_decode(v: int, r: int) -> float:
    return v / (1 << r)


@dataclass(frozen=True)
class PackState:
    """Bit-field assignment for one boosting epoch.

    ``g_max``/``h_max`` are maxima of the raw (pre-offset) vectors; ``g_off``
    is the shift that makes every gradient non-negative.  ``b_g``/``b_h`` are
    sized so the sum over all ``n_instances`` encoded values still fits.
    """

    r: int
    g_off: float
    g_max: float
    h_max: float
    b_g: int
    b_h: int
    b_gh: int
    n_instances: int

    @property
    def g_off_int(self) -> int:
        return fixpoint_encode(self.g_off, self.r)

    def decode_g_sum(self, g_int: int, sample_count: int) -> float:
        """Remove the accumulated offset of ``sample_count`` addends and decode."""
        return (g_int - sample_count * self.g_off_int) / (1 << self.r)

    def decode_h_sum(self, h_int: int) -> float:
        return h_int / (1 << self.r)


def _field_bits(n_instances: int, max_value: float, r: int) -> int:
    # floor(n * max * 2^r) computed exactly; Fraction(float) is lossless.
    if max_value <= 0:
        return 1
    imax = int(Fraction(n_instances) * Fraction(max_value) * (1 << r))
    return max(1, imax.bit_length())


def compute_pack_state(
    g: Sequence[float],
    h: Sequence[float],
    r: int = DEFAULT_PRECISION,
    iota: int | None = None,
    n_instances: int | None = None,
) -> PackState:
    """Derive offsets, maxima and bit-field widths for packing ``g``/``h``.

    ``iota`` is the plaintext bit budget of the encryption key; when given,
    ``b_g + b_h`` must fit or a :class:`ConfigError` is raised naming the
    smallest key that would work.  ``n_instances`` overrides the addend bound
    used for field sizing (multi-class callers pass flattened matrices whose
    per-class sums only ever cover the instance count).
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.size == 0 or g.shape != h.shape:
        raise ValueError("g and h must be non-empty vectors of equal length")
    # The user-facing config restricts r to [MIN_PRECISION, MAX_PRECISION];
    # the primitive itself accepts any positive width (tests use tiny r).
    if not (1 <= r <= MAX_PRECISION):
        raise ConfigError(f"precision r must be in [1, {MAX_PRECISION}]")
    if float(h.min()) < 0:
        raise ValueError("hessians must be non-negative")
    n = int(g.size) if n_instances is None else int(n_instances)
    g_min = float(g.min())
    g_off = -g_min if g_min < 0 else 0.0
    g_max = float(g.max())
    h_max = float(h.max())
    b_g = _field_bits(n, g_max + g_off, r)
    b_h = _field_bits(n, h_max, r)
    b_gh = b_g + b_h
    if iota is not None and b_gh > iota:
        fit = b_gh + 1 + ((b_gh + 1) % 2)
        raise ConfigError(
            f"instances too many for key length: packed fields need {b_gh} bits "
            f"but the key admits {iota}; use key_bits >= {fit}"
        )
    return PackState(r=r, g_off=g_off, g_max=g_max, h_max=h_max,
                     b_g=b_g, b_h=b_h, b_gh=b_gh, n_instances=n)


def pack_gh(g: Sequence[float], h: Sequence[float], state: PackState) -> list[int]:
    """Encode each (g_i, h_i) into one ``b_gh``-bit integer: offset g high, h low."""
    r, b_h, g_off = state.r, state.b_h, state.g_off
    out = []
    for gi, hi in zip(g, h):
        shifted = gi + g_off
        if shifted < 0:
            raise ValueError("gradient below the recorded offset")
        out.append((fixpoint_encode(shifted, r) << b_h) + fixpoint_encode(hi, r))
    return out


def unpack_gh(value: int, state: PackState, sample_count: int) -> tuple[float, float]:
    """Split a packed aggregate back into (g_sum, h_sum) floats.

    ``sample_count`` is the number of packed addends folded into ``value``;
    it scales the offset removal.
    """
    if value < 0 or value.bit_length() > state.b_gh:
        raise CorruptionError(
            f"packed value of {value.bit_length()} bits exceeds b_gh={state.b_gh}"
        )
    h_int = value & ((1 << state.b_h) - 1)
    g_int = value >> state.b_h
    return state.decode_g_sum(g_int, sample_count), state.decode_h_sum(h_int)


def compress_capacity(iota: int, b_gh: int) -> int:
    """Number of packed aggregates one ciphertext can carry."""
    if b_gh > iota:
        raise ConfigError(f"b_gh={b_gh} exceeds the plaintext budget iota={iota}")
    return iota // b_gh


@dataclass
class CipherSplitInfo:
    """One candidate split's encrypted left-side aggregate."""

    split_id: int
    sample_count: int
    cipher: Ciphertext


@dataclass
class SplitInfoPackage:
    """Up to ``capacity`` split infos folded into a single ciphertext.

    Entries are folded most-significant-first: ``split_ids[0]`` occupies the
    highest bit field.  This ordering is part of the wire contract.
    """

    cipher: Ciphertext
    split_ids: list[int]
    sample_counts: list[int]


def compress_split_infos(
    infos: Sequence[CipherSplitInfo], capacity: int, b_gh: int
) -> list[SplitInfoPackage]:
    """Fold split infos ``capacity``-at-a-time via shift-and-add on ciphertexts."""
    if capacity < 1:
        raise ConfigError("compress capacity must be >= 1")
    shift = 1 << b_gh
    packages = []
    for start in range(0, len(infos), capacity):
        chunk = infos[start : start + capacity]
        cipher = None
        ids, counts = [], []
        for info in chunk:
            if cipher is None:
                cipher = info.cipher
            else:
                cipher = he_add(he_scalar_mul(shift, cipher), info.cipher)
            ids.append(info.split_id)
            counts.append(info.sample_count)
        packages.append(SplitInfoPackage(cipher=cipher, split_ids=ids, sample_counts=counts))
    return packages


def decompress_package(
    plain: int, package: SplitInfoPackage, state: PackState
) -> list[tuple[float, float, int, int]]:
    """Recover (g_sum, h_sum, split_id, sample_count) tuples from a decrypted fold.

    Extraction runs least-significant-first and is reversed to match the fold
    order recorded in the package metadata.
    """
    n_entries = len(package.split_ids)
    if n_entries != len(package.sample_counts):
        raise CorruptionError("package id/count metadata lengths differ")
    mask = (1 << state.b_gh) - 1
    raw = []
    d = plain
    for _ in range(n_entries):
        raw.append(d & mask)
        d >>= state.b_gh
    if d != 0:
        raise CorruptionError("decrypted package carries more entries than its metadata")
    raw.reverse()
    out = []
    for value, split_id, count in zip(raw, package.split_ids, package.sample_counts):
        g_sum, h_sum = unpack_gh(value, state, count)
        out.append((g_sum, h_sum, split_id, count))
    return out


# ---------------------------------------------------------------------------
# Multi-class packing: the per-instance (g, h) vectors of k classes are packed
# eta_c classes per ciphertext, class 0 in the most significant field of the
# first ciphertext.
# ---------------------------------------------------------------------------


def mo_cipher_count(n_classes: int, eta_c: int) -> int:
    return -(-n_classes // eta_c)


def pack_gh_multiclass(
    G: np.ndarray,
    H: np.ndarray,
    state: PackState,
    pk: PublicKey,
    rng=None,
) -> tuple[list[list[Ciphertext]], int, int]:
    """Pack and encrypt per-class gradient/hessian rows.

    Returns (cipher rows, eta_c, n_k): one list of ``n_k`` ciphertexts per
    instance, each ciphertext carrying up to ``eta_c`` classes.
    """
    G = np.asarray(G, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64)
    if G.shape != H.shape or G.ndim != 2:
        raise ValueError("G and H must be matrices of identical shape")
    iota = pk.max_plaintext_bits
    eta_c = compress_capacity(iota, state.b_gh)
    n_classes = G.shape[1]
    n_k = mo_cipher_count(n_classes, eta_c)
    rows = []
    for gv, hv in zip(G, H):
        packed = pack_gh(gv, hv, state)
        ciphers = []
        for start in range(0, n_classes, eta_c):
            e = 0
            for value in packed[start : start + eta_c]:
                e = (e << state.b_gh) + value
            ciphers.append(encrypt(pk, e, rng))
        rows.append(ciphers)
    return rows, eta_c, n_k


def recover_mo_splitinfo(
    plains: Sequence[int],
    n_classes: int,
    eta_c: int,
    state: PackState,
    sample_count: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Recover per-class (g_sum, h_sum) vectors from decrypted cipher-vector sums."""
    needed = mo_cipher_count(n_classes, eta_c)
    if len(plains) < needed:
        raise CorruptionError(
            f"need {needed} integers to recover {n_classes} classes, got {len(plains)}"
        )
    mask = (1 << state.b_gh) - 1
    g_out = np.empty(n_classes, dtype=np.float64)
    h_out = np.empty(n_classes, dtype=np.float64)
    recovered = 0
    for idx in range(needed):
        take = min(eta_c, n_classes - recovered)
        d = plains[idx]
        chunk = []
        for _ in range(take):
            chunk.append(d & mask)
            d >>= state.b_gh
        if d != 0:
            raise CorruptionError("cipher-vector entry carries more classes than expected")
        chunk.reverse()
        for value in chunk:
            g_sum, h_sum = unpack_gh(value, state, sample_count)
            g_out[recovered] = g_sum
            h_out[recovered] = h_sum
            recovered += 1
    return g_out, h_out
