"""Pluggable proof system for the fair-exchange relation.

The relation ties together a ciphertext, the hash of its plaintext, the
hash of the encryption key, and a threshold sharing of that key: a
witness (plaintext, shares) satisfies public inputs (h_m, m_bar, h_k)
iff the shares recover a key hashing to h_k that encrypts the plaintext
to exactly m_bar, and the plaintext hashes to h_m.

Backends implement setup/prove/verify. The default transparent backend
models completeness and soundness: prove evaluates the relation and only
on success emits an authenticated digest of the public inputs, which
verify checks. Proofs are constant size and carry no witness data; a
pairing-based backend can be slotted in without touching callers.
"""

from __future__ import annotations

import hmac
from dataclasses import dataclass

from . import vss
from .crypto import Ciphertext, GroupParams, encrypt, hash_blocks, hash_bytes, key_to_bytes
from .wire import enc_bytes, enc_u64


class RelationUnsatisfied(Exception):
    """prove() refuses to prove public inputs with no satisfying witness."""


@dataclass(frozen=True)
class RelationPublicInputs:
    h_m: bytes
    m_bar: Ciphertext
    h_k: bytes
    t: int
    n: int

    def to_bytes(self) -> bytes:
        return (
            enc_bytes(self.h_m)
            + enc_bytes(self.m_bar.to_bytes())
            + enc_bytes(self.h_k)
            + enc_u64(self.t)
            + enc_u64(self.n)
        )


@dataclass(frozen=True)
class RelationWitness:
    m: tuple[bytes, ...]
    k_shares: tuple[vss.KeyShare, ...]


def eval_relation(w: RelationWitness, x: RelationPublicInputs, group: GroupParams) -> bool:
    """Direct evaluation of the relation; False on any mismatch."""
    try:
        key = vss.recover(w.k_shares, x.t, group)
    except ValueError:
        return False
    if hash_bytes(key_to_bytes(key)) != x.h_k:
        return False
    if hash_blocks(w.m) != x.h_m:
        return False
    try:
        return encrypt(key, w.m) == x.m_bar
    except ValueError:
        return False


@dataclass(frozen=True)
class ProvingKey:
    backend_tag: int
    binding_key: bytes


@dataclass(frozen=True)
class VerifyKey:
    backend_tag: int
    binding_key: bytes


@dataclass(frozen=True)
class Crs:
    pk: ProvingKey
    vk: VerifyKey
    lambda_bits: int


@dataclass(frozen=True)
class Proof:
    backend_tag: int
    binding: bytes

    def to_bytes(self) -> bytes:
        return bytes([self.backend_tag]) + self.binding

    @classmethod
    def from_bytes(cls, raw: bytes):
        if len(raw) < 2:
            raise ValueError("truncated proof")
        return cls(backend_tag=raw[0], binding=raw[1:])


class TransparentMacBackend:
    """Default backend: an HMAC over the public inputs, gated on the
    relation actually holding. Zero-knowledge holds vacuously (proofs
    carry nothing derived from the witness)."""

    tag = 1

    def __init__(self, group: GroupParams):
        self.group = group

    def setup(self, lambda_bits: int, seed: bytes) -> Crs:
        if lambda_bits < 128:
            raise ValueError("lambda below 128 bits")
        bk = hash_bytes(b"crs-binding" + enc_u64(lambda_bits) + enc_bytes(seed))
        return Crs(
            pk=ProvingKey(backend_tag=self.tag, binding_key=bk),
            vk=VerifyKey(backend_tag=self.tag, binding_key=bk),
            lambda_bits=lambda_bits,
        )

    def prove(self, pk: ProvingKey, w: RelationWitness, x: RelationPublicInputs) -> Proof:
        if pk.backend_tag != self.tag:
            raise ValueError("proving key from a different backend")
        if not eval_relation(w, x, self.group):
            raise RelationUnsatisfied("witness does not satisfy the public inputs")
        mac = hmac.new(pk.binding_key, x.to_bytes(), "sha256").digest()
        return Proof(backend_tag=self.tag, binding=mac)

    def verify(self, vk: VerifyKey, x: RelationPublicInputs, proof: Proof) -> bool:
        if proof.backend_tag != self.tag or vk.backend_tag != self.tag:
            return False
        if len(proof.binding) != 32:
            return False
        expect = hmac.new(vk.binding_key, x.to_bytes(), "sha256").digest()
        return hmac.compare_digest(expect, proof.binding)


def make_public_inputs(m_blocks, key, t: int, n: int) -> RelationPublicInputs:
    """Convenience: compute the public side from the secret side."""
    m_blocks = tuple(m_blocks)
    return RelationPublicInputs(
        h_m=hash_blocks(m_blocks),
        m_bar=encrypt(key, m_blocks),
        h_k=hash_bytes(key_to_bytes(key)),
        t=t,
        n=n,
    )
