"""Deterministic cryptographic building blocks.

Hashing, Ed25519 signatures, Pedersen commitments over a prime-order
subgroup of Z_p*, and a deterministic block cipher. One hash function is
used everywhere a digest is needed. The commitment group is swappable:
DEFAULT_GROUP is a 256-bit safe-prime group for normal runs, TINY_GROUP a
101-order subgroup small enough for brute-force oracles.

Everything here is pure and immutable after construction; no operation
keeps state between calls.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .wire import enc_bytes, enc_scalar, enc_u64

DIGEST_SIZE = 32


def hash_bytes(data: bytes) -> bytes:
    """32-byte SHA-256 digest; the h(.) used for every hash in the system."""
    return hashlib.sha256(data).digest()


# ---------------------------------------------------------------------------
# Commitment group


@dataclass(frozen=True)
class GroupParams:
    """Prime-order subgroup of Z_p* with two independent generators.

    q is the (prime) subgroup order, p the field modulus, and g, h
    generators whose discrete-log relation is unknown (h is derived by
    hashing into the subgroup).
    """

    p: int
    q: int
    g: int
    h: int

    def __post_init__(self):
        if self.g == self.h:
            raise ValueError("generators must differ")
        if pow(self.g, self.q, self.p) != 1 or pow(self.h, self.q, self.p) != 1:
            raise ValueError("generator order is not q")

    def reduce(self, v: int) -> int:
        return v % self.q

    def rand_scalar(self, rng) -> int:
        return rng.randrange(self.q)

    def __deepcopy__(self, memo):
        return self


def derive_generator(seed: bytes, p: int, q: int, avoid=()) -> int:
    """Hash into the order-q subgroup; nobody learns a discrete log."""
    cofactor = (p - 1) // q
    ctr = 0
    while True:
        u = int.from_bytes(hash_bytes(seed + ctr.to_bytes(4, "big")), "big") % p
        cand = pow(u, cofactor, p)
        if cand != 1 and cand not in avoid:
            return cand
        ctr += 1


_P = 78177405508330598267849903035634465555221869467241016437008985922639218557339
_Q = (_P - 1) // 2

DEFAULT_GROUP = GroupParams(p=_P, q=_Q, g=4, h=derive_generator(b"generator-h", _P, _Q, avoid=(4,)))

# Small group for exhaustive desk-scale checks: order-101 subgroup of Z_607*.
TINY_GROUP = GroupParams(p=607, q=101, g=64, h=derive_generator(b"generator-h", 607, 101, avoid=(64,)))


def pedersen_commit(s: int, r: int, params: GroupParams) -> int:
    """E(s, r) = g^s * h^r in the group; homomorphic in both exponents."""
    return pow(params.g, s % params.q, params.p) * pow(params.h, r % params.q, params.p) % params.p


# ---------------------------------------------------------------------------
# Signatures

SIGNATURE_SIZE = 64


class KeyPair:
    """Ed25519 keypair derived deterministically from a 32-byte seed.

    The address is the hex of the public key, so any holder of an address
    can verify signatures without a key registry.
    """

    def __init__(self, seed: bytes):
        if len(seed) != 32:
            raise ValueError("seed must be 32 bytes")
        self.seed = seed
        self._sk = Ed25519PrivateKey.from_private_bytes(seed)
        self.public_bytes = self._sk.public_key().public_bytes_raw()
        self.address = self.public_bytes.hex()

    def sign(self, msg: bytes) -> bytes:
        return self._sk.sign(msg)

    def __deepcopy__(self, memo):
        # immutable; shared freely across world snapshots
        return self

    def __repr__(self):
        return "KeyPair(%s...)" % self.address[:8]


def keypair_from_label(label: str) -> KeyPair:
    return KeyPair(hash_bytes(b"keypair:" + label.encode("utf-8")))


def sign(kp: KeyPair, msg: bytes) -> bytes:
    return kp.sign(msg)


def verify(address: str, msg: bytes, sig: bytes) -> bool:
    """True iff sig is a valid signature by the key behind address.

    Malformed addresses or signature bytes return False, never raise.
    """
    try:
        pk = Ed25519PublicKey.from_public_bytes(bytes.fromhex(address))
        pk.verify(sig, msg)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


# ---------------------------------------------------------------------------
# Deterministic symmetric encryption


@dataclass(frozen=True)
class Ciphertext:
    """Encrypted data blocks; block count always equals the plaintext's."""

    blocks: tuple[bytes, ...]
    block_size: int

    def to_bytes(self) -> bytes:
        return enc_u64(self.block_size) + enc_u64(len(self.blocks)) + b"".join(
            enc_bytes(b) for b in self.blocks
        )


def key_to_bytes(key) -> bytes:
    """Accepts a 32-byte secret or a scalar; canonical 32-byte form."""
    if isinstance(key, int):
        return enc_scalar(key)
    if isinstance(key, bytes) and len(key) == 32:
        return key
    raise ValueError("key must be a scalar or 32 bytes")


def _keystream_block(key32: bytes, index: int, size: int) -> bytes:
    out = b""
    ctr = 0
    while len(out) < size:
        out += hash_bytes(key32 + enc_u64(index) + enc_u64(ctr))
        ctr += 1
    return out[:size]


def encrypt(key, blocks) -> Ciphertext:
    """Deterministic per-block XOR keystream cipher.

    No nonce by design: the fair-exchange relation re-derives the
    ciphertext from (key, plaintext) and checks byte equality, which
    randomized encryption would break.
    """
    key32 = key_to_bytes(key)
    blocks = tuple(blocks)
    if not blocks:
        raise ValueError("plaintext must have at least one block")
    size = len(blocks[0])
    enc = []
    for i, blk in enumerate(blocks):
        if len(blk) != size:
            raise ValueError("blocks must be equal size")
        ks = _keystream_block(key32, i, size)
        enc.append(bytes(a ^ b for a, b in zip(blk, ks)))
    return Ciphertext(blocks=tuple(enc), block_size=size)


def decrypt(key, ct: Ciphertext) -> tuple[bytes, ...]:
    """Inverse of encrypt; a wrong key yields garbage the caller detects
    by comparing the plaintext hash."""
    key32 = key_to_bytes(key)
    out = []
    for i, blk in enumerate(ct.blocks):
        ks = _keystream_block(key32, i, ct.block_size)
        out.append(bytes(a ^ b for a, b in zip(blk, ks)))
    return tuple(out)


def hash_blocks(blocks) -> bytes:
    """Digest of a block sequence in canonical serialized form."""
    blocks = tuple(blocks)
    return hash_bytes(enc_u64(len(blocks)) + b"".join(enc_bytes(b) for b in blocks))
