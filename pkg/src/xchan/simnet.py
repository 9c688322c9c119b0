"""Seeded discrete-event message fabric.

Parties, miners, and chains interact only through messages scheduled
here. Time is one global integer tick. At each tick, chains at a block
boundary produce blocks first, then due messages are delivered in
insertion order; a delivery may send further messages, including
zero-latency ones delivered within the same tick. Messages are delayed,
never dropped.

Two modes share the same actors and chains:

* run mode samples every delay from the seeded latency model and replays
  bit-identically for a given seed;
* enumerate mode assigns each message a delivery window and explores
  every feasible interleaving of deliveries and block boundaries,
  collecting the set of terminal outcomes.

Links are FIFO per (src, dst) pair: a later message never overtakes an
earlier one on the same link, so chain events reach a subscriber in
block order.
"""

from __future__ import annotations

import copy
import heapq
import random
from dataclasses import dataclass, field


class BoundExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Message:
    kind: str
    src: str
    dst: str
    data: dict


@dataclass(frozen=True)
class LatencyModel:
    """Fixed or uniform delay, with targeted per-pair overrides.

    Override keys are (src, dst) names; "*" matches anything on one side.
    A window is the inclusive range of delays a message may take; in run
    mode a delay is sampled from it, in enumerate mode every delivery
    tick inside it is explored.
    """

    kind: str = "fixed"  # "fixed" | "uniform"
    fixed: int = 1
    lo: int = 1
    hi: int = 1
    overrides: tuple = ()  # ((src, dst, LatencyModel), ...)

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform"):
            raise ValueError("unknown latency kind %r" % self.kind)
        if self.kind == "fixed" and self.fixed < 0:
            raise ValueError("negative delay")
        if self.kind == "uniform" and not (0 <= self.lo <= self.hi):
            raise ValueError("bad uniform bounds")

    def resolve(self, src: str, dst: str) -> "LatencyModel":
        for s, d, model in self.overrides:
            if (s == src or s == "*") and (d == dst or d == "*"):
                return model
        return self

    def sample(self, rng: random.Random, src: str, dst: str) -> int:
        m = self.resolve(src, dst)
        if m.kind == "fixed":
            return m.fixed
        return rng.randint(m.lo, m.hi)

    def window(self, src: str, dst: str) -> tuple[int, int]:
        m = self.resolve(src, dst)
        if m.kind == "fixed":
            return m.fixed, m.fixed
        return m.lo, m.hi

    @classmethod
    def from_config(cls, cfg: dict) -> "LatencyModel":
        overrides = tuple(
            (o["src"], o["dst"], cls.from_config({k: v for k, v in o.items() if k not in ("src", "dst")}))
            for o in cfg.get("overrides", ())
        )
        return cls(
            kind=cfg.get("kind", "fixed"),
            fixed=cfg.get("fixed", 1),
            lo=cfg.get("lo", 1),
            hi=cfg.get("hi", 1),
            overrides=overrides,
        )


@dataclass
class PendingMsg:
    seq: int
    msg: Message
    lo: int  # earliest deliverable tick, absolute
    hi: int  # latest


class ChainActor:
    """Routes tx messages into a chain's mempool."""

    def __init__(self, chain):
        self.chain = chain

    def on_message(self, net, msg: Message):
        if msg.kind != "tx":
            return
        tx = msg.data["tx"]
        ok, why = self.chain.submit_tx(tx)
        net.log(
            {
                "tick": net.now,
                "kind": "submit",
                "chain_id": self.chain.chain_id,
                "tx_kind": tx.kind,
                "from": msg.src,
                "accepted": ok,
                "why": why,
            }
        )


class Simnet:
    def __init__(self, seed: int = 0, latency: LatencyModel | None = None, mode: str = "run"):
        if mode not in ("run", "enumerate"):
            raise ValueError("mode must be run or enumerate")
        self.mode = mode
        self.latency = latency or LatencyModel()
        self.rng = random.Random(("simnet", seed).__repr__())
        self.now = 0
        self.actors: dict[str, object] = {}
        self.chains: list = []
        self.trace: list[dict] = []
        self._seq = 0
        self._heap: list = []  # (tick, seq, Message)
        self._fifo: dict = {}  # (src, dst) -> latest scheduled delivery tick
        self.pending: list[PendingMsg] = []  # enumerate mode

    # -- wiring ---------------------------------------------------------------

    def register(self, name: str, actor):
        if name in self.actors:
            raise ValueError("actor name taken: %s" % name)
        self.actors[name] = actor

    def add_chain(self, chain):
        self.chains.append(chain)
        self.register(chain.chain_id, ChainActor(chain))

    def subscribe(self, chain, actor_name: str, kinds=None):
        chain.subscribers.append((actor_name, frozenset(kinds) if kinds else None))

    # -- sending ----------------------------------------------------------------

    def log(self, entry: dict):
        self.trace.append(entry)

    def send(self, kind: str, src: str, dst: str, data: dict):
        msg = Message(kind=kind, src=src, dst=dst, data=data)
        self._seq += 1
        if self.mode == "run":
            delay = self.latency.sample(self.rng, src, dst)
            tick = max(self.now + delay, self._fifo.get((src, dst), 0))
            self._fifo[(src, dst)] = tick
            heapq.heappush(self._heap, (tick, self._seq, msg))
        else:
            lo, hi = self.latency.window(src, dst)
            self.pending.append(PendingMsg(seq=self._seq, msg=msg, lo=self.now + lo, hi=self.now + hi))

    def wakeup(self, dst: str, tick: int, data: dict | None = None):
        """Local timer: fires exactly at the requested tick."""
        msg = Message(kind="wakeup", src=dst, dst=dst, data=data or {})
        self._seq += 1
        if self.mode == "run":
            heapq.heappush(self._heap, (max(tick, self.now), self._seq, msg))
        else:
            t = max(tick, self.now)
            self.pending.append(PendingMsg(seq=self._seq, msg=msg, lo=t, hi=t))

    def submit_tx(self, src: str, chain_id: str, tx):
        self.send("tx", src, chain_id, {"tx": tx})

    # -- delivery -------------------------------------------------------------

    def _deliver(self, msg: Message):
        actor = self.actors.get(msg.dst)
        self.log({"tick": self.now, "kind": "deliver", "src": msg.src, "dst": msg.dst, "msg": msg.kind})
        if actor is not None:
            actor.on_message(self, msg)

    def _produce_blocks(self, tick: int):
        for chain in self.chains:
            if chain.is_boundary(tick):
                for ev in chain.produce_block(tick):
                    detail = ev.pop("detail", None)
                    self.log(ev)
                    self._broadcast(chain, ev, detail)

    def _broadcast(self, chain, ev: dict, detail):
        data = dict(ev)
        if detail:
            data["detail"] = detail
        for name, kinds in chain.subscribers:
            if kinds is None or ev["tx_kind"] in kinds:
                self.send("chain_event", chain.chain_id, name, data)

    def run_until(self, predicate=None, max_tick: int = 10_000):
        """Advance ticks, producing blocks and delivering messages, until
        the predicate holds or max_tick is reached. Returns the trace;
        anything still queued at the end is reported undelivered."""
        if self.mode != "run":
            raise RuntimeError("run_until requires run mode")
        done = False
        while self.now <= max_tick and not done:
            self._produce_blocks(self.now)
            while self._heap and self._heap[0][0] <= self.now:
                _t, _seq, msg = heapq.heappop(self._heap)
                self._deliver(msg)
            if predicate is not None and predicate():
                done = True
            else:
                self.now += 1
        if not done:
            for _t, _seq, msg in sorted(self._heap):
                self.log(
                    {"tick": self.now, "kind": "undelivered", "src": msg.src, "dst": msg.dst, "msg": msg.kind}
                )
        return self.trace


# ---------------------------------------------------------------------------
# Exhaustive schedule enumeration


@dataclass
class EnumResult:
    outcomes: set
    schedules: int
    nodes: int


def _next_boundary(net: Simnet):
    if not net.chains:
        return None
    return min((net.now // c.block_interval + 1) * c.block_interval for c in net.chains)


def _advance_to(net: Simnet, t: int):
    for tick in range(net.now + 1, t + 1):
        net.now = tick
        net._produce_blocks(tick)
    net.now = t


def enumerate_schedules(world_factory, outcome_of, *, bound: int = 12,
                        horizon: int = 400, max_schedules: int = 500_000) -> EnumResult:
    """Explore every delivery interleaving of a bounded scenario.

    world_factory() must return a Simnet in enumerate mode with its
    initial messages pending. outcome_of(net) returns a terminal outcome
    tuple, or None while the scenario is still live. At each step the
    scheduler may deliver any pending message inside its latency window
    or advance time to the next block boundary; it may never strand a
    message beyond its window (delay-only asynchrony: nothing is lost).
    """
    outcomes: set = set()
    stats = {"schedules": 0, "nodes": 0}

    def explore(net: Simnet):
        stats["nodes"] += 1
        if stats["schedules"] > max_schedules:
            raise BoundExceeded("schedule count exceeds %d" % max_schedules)
        if len(net.pending) > bound:
            raise BoundExceeded(
                "%d messages in flight exceeds bound %d" % (len(net.pending), bound)
            )
        out = outcome_of(net)
        if out is not None:
            outcomes.add(out)
            stats["schedules"] += 1
            return
        choices = []
        pend = sorted(net.pending, key=lambda m: m.seq)
        for m in pend:
            t = max(net.now, m.lo)
            if t > m.hi:
                continue
            if any(o.hi < t for o in pend if o.seq != m.seq):
                continue  # delivering m now would strand another message
            link = (m.msg.src, m.msg.dst)
            if any(o.seq < m.seq and (o.msg.src, o.msg.dst) == link for o in pend):
                continue  # FIFO per link
            choices.append(("deliver", m.seq, t))
        nb = _next_boundary(net)
        if nb is not None and nb <= horizon and all(m.hi >= nb for m in pend):
            choices.append(("advance", nb))
        if not choices:
            outcomes.add(outcome_of(net) or ("stalled",))
            stats["schedules"] += 1
            return
        for choice in choices:
            w = copy.deepcopy(net)
            if choice[0] == "deliver":
                _, seq, t = choice
                pm = next(p for p in w.pending if p.seq == seq)
                w.pending.remove(pm)
                _advance_to(w, max(w.now, t))
                w._deliver(pm.msg)
            else:
                _advance_to(w, choice[1])
            explore(w)

    explore(copy.deepcopy(world_factory()))
    return EnumResult(outcomes=outcomes, schedules=stats["schedules"], nodes=stats["nodes"])
