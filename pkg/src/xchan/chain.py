"""Deterministic in-memory blockchain.

Two instances (alpha and beta) share one global tick clock but keep
independent block intervals. A chain drains its mempool at every block
boundary in submission order, executes each transaction against the
channel contract, runs window-expiry processing, and emits events that
reach off-chain actors only through the network fabric. Reads expose
block-committed state only; nothing acts on the mempool.

All timer windows are tick counts anchored at the block in which the
triggering transaction committed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .contract import ChannelContract, InvariantViolation, OnChainTx
from .crypto import hash_bytes
from .wire import enc_bytes, enc_str, enc_u64


@dataclass(frozen=True)
class TimerConfig:
    appeal_window: int  # report window after share bindings publish
    close_window: int  # collection window after both parties request close
    unlock_window: int  # parties may reveal the preimage this long after lock
    assist_window: int | None = None  # miners may reveal after unlock until this


@dataclass
class Block:
    height: int
    tick: int
    prev_hash: bytes
    hash: bytes = b""
    entries: list = field(default_factory=list)


GENESIS_HASH = hash_bytes(b"genesis")


class Chain:
    def __init__(self, chain_id: str, block_interval: int, timers: TimerConfig,
                 assist_reward_percent: int = 1):
        if block_interval < 1:
            raise ValueError("block interval must be >= 1")
        self.chain_id = chain_id
        self.block_interval = block_interval
        self.timers = timers
        self.assist_reward_percent = assist_reward_percent
        self.now = 0
        self.accounts: dict[str, int] = {}
        self.miners: list[str] = []
        self.mempool: list[OnChainTx] = []
        self.blocks: list[Block] = []
        self.contract = ChannelContract(self)
        self.subscribers: list[str] = []  # actor names, event fan-out order
        self.minted = 0

    # -- account plumbing ---------------------------------------------------

    def create_account(self, address: str, balance: int = 0):
        if address in self.accounts:
            raise ValueError("account exists")
        self.accounts[address] = balance
        self.minted += balance

    def balance(self, address: str) -> int:
        return self.accounts.get(address, 0)

    def credit(self, address: str, amount: int):
        self.accounts[address] = self.accounts.get(address, 0) + amount

    def debit(self, address: str, amount: int):
        if self.accounts.get(address, 0) < amount:
            raise InvariantViolation("overdraft on %s" % address)
        self.accounts[address] -= amount

    def register_miner(self, address: str):
        if address not in self.accounts:
            self.create_account(address, 0)
        self.miners.append(address)

    def pick_miners(self, n: int, seed: bytes) -> list[str]:
        rng = random.Random(seed)
        return rng.sample(self.miners, n)

    def total_value(self) -> int:
        escrow = sum(s.escrow for s in self.contract.sessions.values())
        return sum(self.accounts.values()) + escrow

    # -- mempool ------------------------------------------------------------

    def submit_tx(self, tx: OnChainTx):
        """Signature and sender checks happen at admission; everything
        else is judged at execution inside a block."""
        if tx.chain_id != self.chain_id:
            return False, "wrong chain"
        if tx.sender not in self.accounts:
            return False, "unknown sender"
        from .contract import PAYLOAD_KINDS

        if tx.kind not in PAYLOAD_KINDS or not isinstance(tx.payload, PAYLOAD_KINDS[tx.kind]):
            return False, "unknown kind"
        if not tx.verify_sig():
            return False, "bad signature"
        self.mempool.append(tx)
        return True, "queued"

    def prev_block_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else GENESIS_HASH

    def is_boundary(self, tick: int) -> bool:
        return tick > 0 and tick % self.block_interval == 0

    # -- block production ---------------------------------------------------

    def produce_block(self, tick: int) -> list[dict]:
        """Drain the mempool, execute, expire timers; returns the block's
        event records (also appended to the chain log by the caller)."""
        self.now = tick
        block = Block(height=len(self.blocks) + 1, tick=tick, prev_hash=self.prev_block_hash())
        events = []
        before = self.total_value()
        txs, self.mempool = self.mempool, []
        body = b""
        for tx in txs:
            ok, result, detail = self.contract.execute(tx)
            result = result if ok else "failed:%s" % result
            block.entries.append((tx.kind, tx.session_id, result))
            body += enc_bytes(tx.signing_bytes() + enc_bytes(tx.sig))
            events.append(self._event(block, tx.kind, tx.session_id, result, detail))
        for kind, sid, result, detail in self.contract.process_timers():
            block.entries.append((kind, sid, result))
            events.append(self._event(block, kind, sid, result, detail))
        block.hash = hash_bytes(
            enc_str(self.chain_id)
            + enc_u64(block.height)
            + enc_u64(tick)
            + enc_bytes(block.prev_hash)
            + body
        )
        self.blocks.append(block)
        if self.total_value() != before:
            raise InvariantViolation(
                "conservation broken on %s at tick %d" % (self.chain_id, tick)
            )
        return events

    def _event(self, block: Block, tx_kind, session_id, result, detail) -> dict:
        ev = {
            "tick": block.tick,
            "chain_id": self.chain_id,
            "block": block.height,
            "tx_kind": tx_kind,
            "session_id": session_id,
            "result": result,
        }
        if detail:
            ev["detail"] = detail
        return ev

    # -- committed reads ------------------------------------------------------

    def read_session(self, session_id: str):
        """Committed view of a session; None before it exists."""
        return self.contract.sessions.get(session_id)

    def read_state(self, query: str):
        """String queries for the CLI and tests: 'balance:<addr>',
        'session:<id>', 'height'."""
        kind, _, arg = query.partition(":")
        if kind == "balance":
            if arg not in self.accounts:
                raise KeyError("unknown account %s" % arg)
            return self.accounts[arg]
        if kind == "session":
            s = self.contract.sessions.get(arg)
            if s is None:
                raise KeyError("unknown session %s" % arg)
            return s.state
        if kind == "height":
            return len(self.blocks)
        raise KeyError("unknown query %s" % query)
