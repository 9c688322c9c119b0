"""Per-session on-chain contract.

Each channel session is a state machine

    INIT -> Open_CE -> (Open) -> Close -> Lock -> (Success | Refunded)

with Terminated reachable from Open_CE/Open via a successful appeal.
The contract escrows deposits at open, books key-share bindings at
upload, arbitrates share appeals, settles the hierarchical channel tree
level by level when the close window expires, and finalizes with a
hash-time lock: parties may reveal the preimage within the unlock
window, miners within the assist window after it, and expiry refunds the
original deposits.

Handlers are validate-then-apply: a failed transaction is included in
its block but leaves session state untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import vss
from .crypto import hash_bytes, verify
from .receipts import FinalState, Receipt, SubChannelReceipt, replay_receipts
from .wire import enc_bytes, enc_seq, enc_str, enc_u64

# session states
INIT = "INIT"
OPEN_CE = "Open_CE"
OPEN = "Open"
CLOSE = "Close"
LOCK = "Lock"
SUCCESS = "Success"
TERMINATED = "Terminated"
REFUNDED = "Refunded"

TERMINAL_STATES = (SUCCESS, TERMINATED, REFUNDED)

# transaction kinds
OPEN_TX = "Open"
UPLOAD_TX = "Upload"
APPEAL_TX = "Appeal"
CLOSE_TX = "Close"
LOCK_TX = "Lock"
UPDATE_TX = "Update"
UPDATE_EIE_TX = "UpdateEIE"
RECOVER_TX = "Recover"

VALID_EDGES = {
    (INIT, OPEN_CE),
    (OPEN_CE, OPEN),
    (OPEN_CE, CLOSE),
    (OPEN, CLOSE),
    (CLOSE, LOCK),
    (LOCK, SUCCESS),
    (LOCK, REFUNDED),
    (OPEN_CE, TERMINATED),
    (OPEN, TERMINATED),
}


class InvariantViolation(AssertionError):
    pass


# ---------------------------------------------------------------------------
# Transaction payloads


def _share_bytes(ks: vss.KeyShare) -> bytes:
    return ks.body_bytes() + enc_bytes(ks.dealing_id)


@dataclass(frozen=True)
class OpenPayload:
    amount: int

    def to_bytes(self):
        return enc_u64(self.amount)


@dataclass(frozen=True)
class UploadPayload:
    h_k: bytes
    n: int
    t: int
    share_hashes: tuple[bytes, ...]

    def to_bytes(self):
        return enc_bytes(self.h_k) + enc_u64(self.n) + enc_u64(self.t) + enc_seq(self.share_hashes)


@dataclass(frozen=True)
class AppealPayload:
    owner_sig: bytes
    share: vss.KeyShare
    sn: bytes

    def to_bytes(self):
        return enc_bytes(self.owner_sig) + enc_bytes(_share_bytes(self.share)) + enc_bytes(self.sn)


@dataclass(frozen=True)
class ClosePayload:
    final: FinalState
    srs: tuple[SubChannelReceipt, ...]
    trs: tuple[Receipt, ...]

    def to_bytes(self):
        return (
            enc_bytes(self.final.signing_bytes() + enc_bytes(self.final.sig))
            + enc_seq(sr.to_bytes() for sr in self.srs)
            + enc_seq(tr.to_bytes() for tr in self.trs)
        )


@dataclass(frozen=True)
class LockPayload:
    h_pre: bytes

    def to_bytes(self):
        return enc_bytes(self.h_pre)


@dataclass(frozen=True)
class UpdatePayload:
    pre: bytes

    def to_bytes(self):
        return enc_bytes(self.pre)


@dataclass(frozen=True)
class UpdateEiePayload:
    pre: bytes
    h_k: bytes

    def to_bytes(self):
        return enc_bytes(self.pre) + enc_bytes(self.h_k)


@dataclass(frozen=True)
class RecoverPayload:
    share_s: vss.KeyShare | None = None
    share_r: vss.KeyShare | None = None

    def to_bytes(self):
        out = b""
        for s in (self.share_s, self.share_r):
            if s is None:
                out += b"\x00"
            else:
                out += b"\x01" + enc_bytes(_share_bytes(s))
        return out

    def slots(self):
        return [s for s in (self.share_s, self.share_r) if s is not None]


PAYLOAD_KINDS = {
    OPEN_TX: OpenPayload,
    UPLOAD_TX: UploadPayload,
    APPEAL_TX: AppealPayload,
    CLOSE_TX: ClosePayload,
    LOCK_TX: LockPayload,
    UPDATE_TX: UpdatePayload,
    UPDATE_EIE_TX: UpdateEiePayload,
    RECOVER_TX: RecoverPayload,
}


@dataclass(frozen=True)
class OnChainTx:
    chain_id: str
    session_id: str
    sender: str
    kind: str
    payload: object
    sig: bytes = b""

    def signing_bytes(self):
        return (
            enc_str(self.chain_id)
            + enc_str(self.session_id)
            + enc_str(self.sender)
            + enc_str(self.kind)
            + enc_bytes(self.payload.to_bytes())
        )

    def verify_sig(self):
        return verify(self.sender, self.signing_bytes(), self.sig)


def make_tx(kp, chain_id, session_id, kind, payload) -> OnChainTx:
    tx = OnChainTx(chain_id=chain_id, session_id=session_id, sender=kp.address, kind=kind, payload=payload)
    from dataclasses import replace

    return replace(tx, sig=kp.sign(tx.signing_bytes()))


# ---------------------------------------------------------------------------
# Hierarchical settlement


@dataclass
class SettleResult:
    ok: bool
    allocations: dict
    cutoff_level: int | None
    detail: str = ""


def settle_levels(session_id: str, deposits: dict, parties, submissions) -> SettleResult:
    """Recompute every channel's balances from the submitted receipts.

    submissions is a list of (sender, ClosePayload). Claimed final states
    are advisory only; balances come from replaying the receipts. Level
    verification walks the tree top-down: a level fails if some accepted
    sub-channel receipt has no covering submission or two sub-channel
    receipts spend the same receipt; the failing level and everything
    below it are discarded, and each discarded channel's funding amount
    reverts to the funding receipt's payee at the deepest surviving
    level.
    """
    trs_by_path: dict[tuple, dict[bytes, Receipt]] = {}
    srs_by_tr: dict[tuple, dict[bytes, dict[bytes, SubChannelReceipt]]] = {}
    covered = set()

    def pool_tr(tr: Receipt):
        if tr.session_id != session_id or not tr.verify_sig():
            return
        trs_by_path.setdefault(tr.channel_path, {})[tr.to_bytes()] = tr

    for sender, payload in submissions:
        f = payload.final
        if f.session_id == session_id and f.submitter == sender and f.verify_sig():
            covered.add(f.channel_path)
        for tr in payload.trs:
            pool_tr(tr)
        for sr in payload.srs:
            tr = sr.receipt
            if tr.session_id != session_id or not sr.verify_sig():
                continue
            if sr.counterparty == sr.funder:
                continue
            pool_tr(tr)  # the embedded receipt counts as submitted
            srs_by_tr.setdefault(tr.channel_path, {}).setdefault(tr.to_bytes(), {})[
                sr.to_bytes()
            ] = sr

    allocations: dict[str, int] = {}

    def credit(addr, amount):
        allocations[addr] = allocations.get(addr, 0) + amount

    # (path, members, initial, funder) per instantiated channel
    current = [((), set(parties), dict(deposits), None)]
    cutoff = None
    level = 0
    while current:
        spawn = []  # children proposed by this level
        failed = False
        for path, _members, initial, funder in current:
            pool = trs_by_path.get(path, {})
            # drop seq conflicts: distinct receipts sharing a sequence number
            by_seq: dict[int, list[Receipt]] = {}
            for tr in pool.values():
                by_seq.setdefault(tr.seq, []).append(tr)
            candidates = [v[0] for v in by_seq.values() if len(v) == 1]
            sr_groups = srs_by_tr.get(path, {})
            delegated = {tr.seq for tr in candidates if tr.to_bytes() in sr_groups}
            balances, included = replay_receipts(initial, candidates, delegated, funder=funder)
            for addr in sorted(balances):
                credit(addr, balances[addr])
            for tr in included:
                if tr.seq not in delegated:
                    continue
                group = sr_groups[tr.to_bytes()]
                if len(group) > 1:
                    failed = True  # double authorization of one receipt
                    spawn.append((tr, None))
                    continue
                (sr,) = group.values()
                child = path + (tr.seq,)
                if child not in covered:
                    failed = True
                    spawn.append((tr, None))
                else:
                    spawn.append((tr, sr))
        if failed:
            cutoff = level + 1
            # every proposed child is discarded; funding reverts to payee
            for tr, _sr in spawn:
                credit(tr.rcv, tr.amount)
            break
        current = [
            (
                tr.channel_path + (tr.seq,),
                {sr.funder, sr.counterparty},
                {sr.funder: tr.amount, sr.counterparty: 0},
                sr.funder,
            )
            for tr, sr in spawn
        ]
        level += 1

    total = sum(allocations.values())
    expected = sum(deposits.values())
    if total != expected:
        return SettleResult(
            ok=False,
            allocations=dict(deposits),
            cutoff_level=cutoff,
            detail="conservation violated: %d != %d" % (total, expected),
        )
    return SettleResult(ok=True, allocations=allocations, cutoff_level=cutoff)


# ---------------------------------------------------------------------------
# Sessions


@dataclass
class ContractSession:
    session_id: str
    kind: str = "cross_channel"  # or "plain_htlc"
    state: str = INIT
    parties: list = field(default_factory=list)
    deposits: dict = field(default_factory=dict)
    escrow: int = 0
    pending_open: dict = field(default_factory=dict)
    sn: bytes | None = None
    # owner address -> UploadPayload / list of (miner, index, share_hash)
    uploaded: dict = field(default_factory=dict)
    bindings: dict = field(default_factory=dict)
    appeal_deadline: int | None = None
    close_deadline: int | None = None
    collected_closes: dict = field(default_factory=dict)  # (sender, path) -> ClosePayload
    locked_allocations: dict | None = None
    settle_cutoff: int | None = None
    h_pre: bytes | None = None
    lock_deadline: int | None = None
    assist_deadline: int | None = None
    recovery_requested: list = field(default_factory=list)  # owner addresses
    collected_shares: dict = field(default_factory=dict)  # owner -> {index: share}
    published_shares: dict = field(default_factory=dict)  # owner -> [shares]
    assist_reward_paid: int = 0
    transitions: list = field(default_factory=list)  # (from, to, tick)

    def set_state(self, new_state: str, tick: int):
        edge = (self.state, new_state)
        if self.kind == "cross_channel" and edge not in VALID_EDGES:
            raise InvariantViolation("illegal transition %s -> %s" % edge)
        self.transitions.append((self.state, new_state, tick))
        self.state = new_state

    def is_terminal(self):
        return self.state in TERMINAL_STATES


class ChannelContract:
    """Executes transactions against sessions. The owning chain provides
    tick time, miners, block randomness, and account balances."""

    def __init__(self, chain):
        self.chain = chain
        self.sessions: dict[str, ContractSession] = {}

    # -- helpers ------------------------------------------------------------

    def session(self, session_id) -> ContractSession:
        return self.sessions[session_id]

    def _get_or_create(self, session_id) -> ContractSession:
        if session_id not in self.sessions:
            self.sessions[session_id] = ContractSession(session_id=session_id)
        return self.sessions[session_id]

    def _return_escrow(self, s: ContractSession):
        for addr in sorted(s.deposits):
            self.chain.credit(addr, s.deposits[addr])
        s.escrow = 0

    def _apply_allocations(self, s: ContractSession):
        for addr in sorted(s.locked_allocations):
            self.chain.credit(addr, s.locked_allocations[addr])
        s.escrow = 0

    # -- dispatch -----------------------------------------------------------

    def execute(self, tx: OnChainTx):
        """Returns (ok, result, detail) without raising on bad input."""
        handler = {
            OPEN_TX: self.handle_open,
            UPLOAD_TX: self.handle_upload,
            APPEAL_TX: self.handle_appeal,
            CLOSE_TX: self.handle_close,
            LOCK_TX: self.handle_lock,
            UPDATE_TX: self.handle_update,
            UPDATE_EIE_TX: self.handle_update_eie,
            RECOVER_TX: self.handle_recover,
        }.get(tx.kind)
        if handler is None:
            return False, "unknown kind", None
        return handler(tx)

    # -- handlers -----------------------------------------------------------

    def handle_open(self, tx):
        s = self._get_or_create(tx.session_id)
        if s.state != INIT:
            return False, "duplicate open", None
        if tx.sender in s.pending_open:
            return False, "duplicate open", None
        if len(s.pending_open) >= 2:
            return False, "session full", None
        amount = tx.payload.amount
        if amount < 0 or self.chain.balance(tx.sender) < amount:
            return False, "insufficient balance", None
        self.chain.debit(tx.sender, amount)
        s.escrow += amount
        s.pending_open[tx.sender] = amount
        if len(s.pending_open) == 2:
            s.parties = list(s.pending_open)
            s.deposits = dict(s.pending_open)
            s.set_state(OPEN_CE, self.chain.now)
            return True, "state:%s" % OPEN_CE, {"deposits": dict(s.deposits)}
        return True, "open pending", None

    def handle_upload(self, tx):
        s = self.sessions.get(tx.session_id)
        if s is None or s.state != OPEN_CE:
            return False, "not open", None
        if tx.sender not in s.parties:
            return False, "not a channel party", None
        if tx.sender in s.uploaded:
            return False, "already uploaded", None
        p = tx.payload
        if p.n > len(self.chain.miners):
            return False, "n exceeds miner count", None
        if p.t < 1 or p.t > p.n or len(p.share_hashes) != p.n:
            return False, "invalid threshold parameters", None
        rng_seed = hash_bytes(self.chain.prev_block_hash() + enc_str(tx.session_id) + enc_str(tx.sender))
        picks = self.chain.pick_miners(p.n, rng_seed)
        if s.sn is None:
            s.sn = hash_bytes(self.chain.prev_block_hash() + enc_str(tx.session_id) + b"sn")[:16]
        s.uploaded[tx.sender] = p
        s.bindings[tx.sender] = [(picks[i], i + 1, p.share_hashes[i]) for i in range(p.n)]
        deadline = self.chain.now + self.chain.timers.appeal_window
        s.appeal_deadline = max(s.appeal_deadline or 0, deadline)
        return True, "bindings published", {
            "owner": tx.sender,
            "sn": s.sn.hex(),
            "bindings": list(s.bindings[tx.sender]),
            "appeal_deadline": s.appeal_deadline,
            "t": p.t,
            "n": p.n,
            "h_k": p.h_k.hex(),
        }

    def handle_appeal(self, tx):
        s = self.sessions.get(tx.session_id)
        if s is None or s.state not in (OPEN_CE, OPEN):
            return False, "no session to appeal", None
        if s.appeal_deadline is None:
            return False, "no upload to appeal", None
        if self.chain.now > s.appeal_deadline:
            return False, "appeal window closed", None
        p = tx.payload
        if p.sn != s.sn:
            return False, "stale serial number", None
        saw_binding = False
        for owner in sorted(s.bindings):
            for miner, index, bound_hash in s.bindings[owner]:
                if miner != tx.sender or index != p.share.index:
                    continue
                saw_binding = True
                if not verify(owner, vss.share_message_bytes(p.share, p.sn), p.owner_sig):
                    continue
                if vss.share_hash(p.share) == bound_hash:
                    return False, "share matches binding", None
                # proven: owner signed a share differing from its commitment
                self._return_escrow(s)
                s.set_state(TERMINATED, self.chain.now)
                return True, "state:%s" % TERMINATED, {"owner": owner, "miner": miner}
        if saw_binding:
            return False, "owner signature invalid", None
        return False, "no matching binding", None

    def handle_close(self, tx):
        s = self.sessions.get(tx.session_id)
        if s is None or s.state not in (OPEN_CE, OPEN):
            return False, "not open", None
        if s.close_deadline is not None and self.chain.now > s.close_deadline:
            return False, "close window expired", None
        p = tx.payload
        f = p.final
        if f.submitter != tx.sender or not f.verify_sig():
            return False, "bad final-state signature", None
        if f.session_id != tx.session_id:
            return False, "wrong session", None
        s.collected_closes[(tx.sender, f.channel_path)] = p
        detail = None
        if s.close_deadline is None:
            level0 = {sender for (sender, path) in s.collected_closes if path == ()}
            if all(party in level0 for party in s.parties):
                s.close_deadline = self.chain.now + self.chain.timers.close_window
                detail = {"close_deadline": s.close_deadline}
                return True, "close window started", detail
        return True, "close recorded", detail

    def handle_lock(self, tx):
        s = self.sessions.get(tx.session_id)
        if s is None:
            return False, "not in close", None
        if s.state == LOCK or s.h_pre is not None:
            return False, "already locked", None
        if s.state != CLOSE:
            return False, "not in close", None
        if tx.sender not in s.parties:
            return False, "not a channel party", None
        s.h_pre = tx.payload.h_pre
        s.lock_deadline = self.chain.now + self.chain.timers.unlock_window
        if self.chain.timers.assist_window is not None:
            s.assist_deadline = self.chain.now + self.chain.timers.assist_window
        s.set_state(LOCK, self.chain.now)
        return True, "state:%s" % LOCK, {
            "h_pre": s.h_pre.hex(),
            "lock_deadline": s.lock_deadline,
            "assist_deadline": s.assist_deadline,
        }

    def _check_update_window(self, s, sender):
        if sender in s.parties:
            if self.chain.now > s.lock_deadline:
                return "party past unlock deadline"
            return None
        if sender in self.chain.miners:
            if s.assist_deadline is None:
                return "no assist window on this chain"
            if not (s.lock_deadline < self.chain.now <= s.assist_deadline):
                return "outside assist window"
            return None
        return "sender is neither party nor miner"

    def _finalize_update(self, s, sender):
        self._apply_allocations(s)
        detail = {"by": sender}
        if sender not in s.parties:
            # miner assist: reward comes out of the assisted party's allocation
            gains = {
                p: s.locked_allocations.get(p, 0) - s.deposits.get(p, 0) for p in s.parties
            }
            beneficiary = max(sorted(gains), key=lambda p: gains[p])
            reward = s.locked_allocations.get(beneficiary, 0) * self.chain.assist_reward_percent // 100
            if reward > 0:
                self.chain.debit(beneficiary, reward)
                self.chain.credit(sender, reward)
            s.assist_reward_paid = reward
            detail["assist_reward"] = reward
            detail["beneficiary"] = beneficiary
        s.set_state(SUCCESS, self.chain.now)
        return detail

    def handle_update(self, tx):
        s = self.sessions.get(tx.session_id)
        if s is None or s.state != LOCK:
            return False, "not locked", None
        why = self._check_update_window(s, tx.sender)
        if why:
            return False, why, None
        if hash_bytes(tx.payload.pre) != s.h_pre:
            return False, "wrong preimage", None
        detail = self._finalize_update(s, tx.sender)
        detail["pre"] = tx.payload.pre.hex()
        return True, "state:%s" % SUCCESS, detail

    def handle_update_eie(self, tx):
        s = self.sessions.get(tx.session_id)
        if s is None or s.state != LOCK:
            return False, "not locked", None
        why = self._check_update_window(s, tx.sender)
        if why:
            return False, why, None
        if hash_bytes(tx.payload.pre) != s.h_pre:
            return False, "wrong preimage", None
        owner = None
        for addr in sorted(s.uploaded):
            if s.uploaded[addr].h_k == tx.payload.h_k:
                owner = addr
                break
        if owner is None:
            return False, "unknown key hash", None
        detail = self._finalize_update(s, tx.sender)
        detail["pre"] = tx.payload.pre.hex()
        if owner not in s.recovery_requested:
            s.recovery_requested.append(owner)
        detail["recover_owner"] = owner
        detail["recover_miners"] = [m for (m, _i, _h) in s.bindings[owner]]
        return True, "state:%s" % SUCCESS, detail

    def handle_recover(self, tx):
        s = self.sessions.get(tx.session_id)
        if s is None or not s.recovery_requested:
            return False, "no recovery requested", None
        accepted = []
        events = None
        for ks in tx.payload.slots():
            for owner in s.recovery_requested:
                match = [
                    (m, i, h)
                    for (m, i, h) in s.bindings.get(owner, [])
                    if m == tx.sender and i == ks.index
                ]
                if not match:
                    continue
                _m, _i, bound_hash = match[0]
                if vss.share_hash(ks) != bound_hash:
                    continue
                store = s.collected_shares.setdefault(owner, {})
                if ks.index in store:
                    continue  # duplicate index ignored
                store[ks.index] = ks
                accepted.append((owner, ks.index))
                threshold = s.uploaded[owner].t
                if owner not in s.published_shares and len(store) >= threshold:
                    s.published_shares[owner] = [store[i] for i in sorted(store)]
                    events = {
                        "published_owner": owner,
                        "shares": s.published_shares[owner],
                    }
        if not accepted:
            return False, "no share accepted", None
        detail = {"accepted": accepted}
        if events:
            detail.update(events)
        return True, "shares recorded", detail

    # -- block-boundary timers ------------------------------------------------

    def process_timers(self):
        """Run at every block: expire windows, settle, refund. Returns
        events as (kind, session_id, result, detail)."""
        events = []
        for sid in sorted(self.sessions):
            s = self.sessions[sid]
            now = self.chain.now
            if s.state == OPEN_CE and s.appeal_deadline is not None and now > s.appeal_deadline:
                s.set_state(OPEN, now)
                events.append(("Timer", sid, "state:%s" % OPEN, None))
            if s.state in (OPEN_CE, OPEN) and s.close_deadline is not None and now > s.close_deadline:
                result = settle_levels(
                    sid,
                    s.deposits,
                    s.parties,
                    [(sender, p) for (sender, _path), p in sorted(s.collected_closes.items())],
                )
                if not result.ok:
                    self._return_escrow(s)
                    s.set_state(TERMINATED, now)
                    events.append(("Timer", sid, "state:%s" % TERMINATED, {"why": result.detail}))
                else:
                    s.locked_allocations = result.allocations
                    s.settle_cutoff = result.cutoff_level
                    s.set_state(CLOSE, now)
                    events.append(
                        (
                            "Timer",
                            sid,
                            "state:%s" % CLOSE,
                            {"allocations": dict(result.allocations), "cutoff": result.cutoff_level},
                        )
                    )
            if s.state == LOCK:
                deadline = s.assist_deadline if s.assist_deadline is not None else s.lock_deadline
                if now > deadline:
                    self._return_escrow(s)
                    s.set_state(REFUNDED, now)
                    events.append(("Timer", sid, "state:%s" % REFUNDED, None))
        return events

    # -- baseline sessions ------------------------------------------------------

    def create_htlc_session(self, session_id, payer, payee, amount):
        """A bare hash-time-locked exchange: the payer's amount is
        escrowed immediately and the session sits at Close waiting for
        Lock/Update/Refund. Used by the plain-HTLC baseline so that only
        the locking mechanics hit the chain."""
        if session_id in self.sessions:
            raise ValueError("session exists: %s" % session_id)
        s = ContractSession(session_id=session_id, kind="plain_htlc", state=CLOSE)
        s.parties = [payer, payee]
        s.deposits = {payer: amount, payee: 0}
        self.chain.debit(payer, amount)
        s.escrow = amount
        s.locked_allocations = {payee: amount, payer: 0}
        self.sessions[session_id] = s
        return s
