"""Off-chain receipts, sub-channel receipts, and final states.

A receipt (Tr) is a signed transfer inside one channel. A sub-channel
receipt (Sr) is the paying side's authorization to redeploy one receipt's
amount as the funding of a new channel one level down; the receipt's
payee becomes the funder of that child channel. Channels are identified
by paths: the root channel is (), the child funded through the receipt
with sequence number s in channel P is P + (s,).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .crypto import KeyPair, sign, verify
from .wire import enc_balances, enc_bytes, enc_path, enc_str, enc_u64


@dataclass(frozen=True)
class Receipt:
    session_id: str
    channel_path: tuple[int, ...]
    seq: int
    snd: str
    rcv: str
    amount: int
    sig: bytes = b""

    def signing_bytes(self) -> bytes:
        return (
            enc_str(self.session_id)
            + enc_path(self.channel_path)
            + enc_u64(self.seq)
            + enc_str(self.snd)
            + enc_str(self.rcv)
            + enc_u64(self.amount)
        )

    def to_bytes(self) -> bytes:
        return self.signing_bytes() + enc_bytes(self.sig)

    def verify_sig(self) -> bool:
        return verify(self.snd, self.signing_bytes(), self.sig)


def make_receipt(kp: KeyPair, session_id, channel_path, seq, rcv, amount) -> Receipt:
    tr = Receipt(
        session_id=session_id,
        channel_path=tuple(channel_path),
        seq=seq,
        snd=kp.address,
        rcv=rcv,
        amount=amount,
    )
    return replace(tr, sig=sign(kp, tr.signing_bytes()))


@dataclass(frozen=True)
class SubChannelReceipt:
    counterparty: str
    receipt: Receipt
    sig: bytes = b""

    def signing_bytes(self) -> bytes:
        return enc_str(self.counterparty) + enc_bytes(self.receipt.to_bytes())

    def to_bytes(self) -> bytes:
        return self.signing_bytes() + enc_bytes(self.sig)

    @property
    def child_path(self) -> tuple[int, ...]:
        return self.receipt.channel_path + (self.receipt.seq,)

    @property
    def funder(self) -> str:
        # the receipt's payee funds the child channel with the amount
        return self.receipt.rcv

    def verify_sig(self) -> bool:
        # issued and signed by the payer of the underlying receipt
        return self.receipt.verify_sig() and verify(
            self.receipt.snd, self.signing_bytes(), self.sig
        )


def make_sub_receipt(payer_kp: KeyPair, counterparty: str, tr: Receipt) -> SubChannelReceipt:
    if payer_kp.address != tr.snd:
        raise ValueError("sub-channel receipt must be issued by the receipt's payer")
    sr = SubChannelReceipt(counterparty=counterparty, receipt=tr)
    return replace(sr, sig=sign(payer_kp, sr.signing_bytes()))


@dataclass(frozen=True)
class FinalState:
    session_id: str
    channel_path: tuple[int, ...]
    balances: dict
    submitter: str
    sig: bytes = b""

    def signing_bytes(self) -> bytes:
        return (
            enc_str(self.session_id)
            + enc_path(self.channel_path)
            + enc_balances(self.balances)
            + enc_str(self.submitter)
        )

    def verify_sig(self) -> bool:
        return verify(self.submitter, self.signing_bytes(), self.sig)


def make_final_state(kp: KeyPair, session_id, channel_path, balances) -> FinalState:
    f = FinalState(
        session_id=session_id,
        channel_path=tuple(channel_path),
        balances=dict(balances),
        submitter=kp.address,
    )
    return replace(f, sig=sign(kp, f.signing_bytes()))


def replay_receipts(initial: dict, receipts, delegated_seqs, funder=None):
    """Fold receipts in sequence order against starting balances.

    Returns (balances, included) where balances reflect all debits plus
    credits for non-delegated receipts; delegated receipts (their amount
    escrowed to a child channel) debit the sender but credit nothing
    here. Receipts that would overdraw the sender are skipped, as is
    anything not between channel members; in a sub-channel only the
    funder may pay. Callers verify signatures before handing receipts in.
    """
    balances = dict(initial)
    members = set(initial)
    included = []
    for tr in sorted(receipts, key=lambda t: t.seq):
        if tr.amount < 0 or tr.seq < 1:
            continue
        if tr.snd == tr.rcv or tr.snd not in members or tr.rcv not in members:
            continue
        if funder is not None and tr.snd != funder:
            continue
        if balances[tr.snd] < tr.amount:
            continue
        balances[tr.snd] -= tr.amount
        if tr.seq not in delegated_seqs:
            balances[tr.rcv] += tr.amount
        included.append(tr)
    return balances, included
