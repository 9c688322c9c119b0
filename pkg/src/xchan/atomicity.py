"""Exhaustive atomicity checking of the cross-chain close phase.

Builds a minimal two-chain world whose sessions are already settled and
waiting to lock, then enumerates every delivery interleaving of the
lock/update message flow under a chosen adversary profile. The profiles
constrain delivery windows (targeted delays) or drop the preimage
reveal entirely; everything else runs the real contract and actor code.

An outcome is the pair of terminal session states. Atomicity holds when
every reachable outcome is both-success or both-refunded.
"""

from __future__ import annotations

from .chain import Chain, TimerConfig
from .contract import CLOSE, ContractSession, REFUNDED, SUCCESS, TERMINAL_STATES
from .crypto import hash_bytes, keypair_from_label
from .engine import BehaviorProfile, Miner, MinerBehavior, Party, SessionRole
from .simnet import EnumResult, LatencyModel, Simnet, enumerate_schedules

PROFILES = ("honest", "withhold_pre", "delay_r", "delay_s", "withhold_delay")

# windows sized so every deadline is a small number of block boundaries
ALPHA_INTERVAL = 4
BETA_INTERVAL = 4
ALPHA_UNLOCK = 12
ALPHA_ASSIST = 24
BETA_UNLOCK = 8
HORIZON = 64


def _latency_for(profile: str) -> LatencyModel:
    base = LatencyModel(kind="uniform", lo=1, hi=2)
    overrides = []
    if profile in ("delay_r", "withhold_delay"):
        # R's unlock transaction toward alpha lands only after the party
        # window there is long gone
        overrides.append(("R", "alpha", LatencyModel(kind="uniform", lo=28, hi=34)))
    if profile == "delay_s":
        # S's reveal toward beta misses the beta unlock window
        overrides.append(("S", "beta", LatencyModel(kind="uniform", lo=14, hi=18)))
    return LatencyModel(kind="uniform", lo=base.lo, hi=base.hi, overrides=tuple(overrides))


def build_close_phase_world(profile: str, assist_enabled: bool, seed: int = 1,
                            mode: str = "enumerate") -> Simnet:
    """Both sessions settled (state Close) with swapped allocations
    pending; S's lock submission is already in flight."""
    if profile not in PROFILES:
        raise ValueError("unknown profile %r" % profile)
    net = Simnet(seed=seed, latency=_latency_for(profile), mode=mode)
    alpha = Chain(
        "alpha",
        ALPHA_INTERVAL,
        TimerConfig(4, 4, ALPHA_UNLOCK, ALPHA_ASSIST if assist_enabled else None),
    )
    beta = Chain("beta", BETA_INTERVAL, TimerConfig(4, 4, BETA_UNLOCK, None))
    net.add_chain(alpha)
    net.add_chain(beta)

    directory: dict = {}
    parties = {}
    for name in ("S", "R"):
        keys = {
            c.chain_id: keypair_from_label("%s:atom:%d:%s" % (name, seed, c.chain_id))
            for c in (alpha, beta)
        }
        behavior = BehaviorProfile(withhold_pre=(name == "S" and profile in ("withhold_pre", "withhold_delay")))
        p = Party(name, keys, behavior=behavior, directory=directory, seed=seed)
        parties[name] = p
        net.register(name, p)
        for c in (alpha, beta):
            c.create_account(p.address(c.chain_id), 1_000)
            directory[p.address(c.chain_id)] = name

    mkp = keypair_from_label("M.atom:%d" % seed)
    miner = Miner("M", alpha, mkp, behavior=MinerBehavior(assist=assist_enabled))
    net.register("M", miner)
    alpha.register_miner(mkp.address)

    # sessions already settled: alpha pays 60 S->R, beta pays 60 R->S
    pre = hash_bytes(b"atom-pre:%d" % seed)
    h_pre = hash_bytes(pre)
    S, R = parties["S"], parties["R"]
    for chain, gainer in ((alpha, R), (beta, S)):
        loser = S if gainer is R else R
        s = ContractSession(session_id="c0", state=CLOSE)
        s.parties = sorted([S.address(chain.chain_id), R.address(chain.chain_id)])
        s.deposits = {S.address(chain.chain_id): 100, R.address(chain.chain_id): 100}
        for addr, v in s.deposits.items():
            chain.debit(addr, v)
        s.escrow = 200
        s.locked_allocations = {
            gainer.address(chain.chain_id): 160,
            loser.address(chain.chain_id): 40,
        }
        chain.contract.sessions["c0"] = s

    S.roles["c0"] = SessionRole(mode="CE", counterpart="R", lock_chain="alpha",
                                update_chain="beta", pre=pre, h_pre=h_pre)
    R.roles["c0"] = SessionRole(mode="CE", counterpart="S", relay_lock_chain="beta",
                                relay_update_chain="alpha")
    for p in (S, R):
        p.session_states[("alpha", "c0")] = CLOSE
        p.session_states[("beta", "c0")] = CLOSE

    # narrow event fan-out: only the deliveries the protocol needs
    net.subscribe(alpha, "R", kinds=("Lock",))
    net.subscribe(beta, "S", kinds=("Lock",))
    net.subscribe(beta, "R", kinds=("Update",))
    net.subscribe(beta, "M", kinds=("Update",))

    S._submit_lock(net, "alpha", "c0")
    return net


def outcome_of(net: Simnet):
    states = []
    for chain in net.chains:
        s = chain.contract.sessions["c0"]
        if s.state not in TERMINAL_STATES:
            return None
        states.append(s.state)
    return tuple(states)


def enumerate_close_phase(profile: str, assist_enabled: bool = True, seed: int = 1,
                          bound: int = 12) -> EnumResult:
    return enumerate_schedules(
        lambda: build_close_phase_world(profile, assist_enabled, seed),
        outcome_of,
        bound=bound,
        horizon=HORIZON,
    )


def atomic_outcomes_only(result: EnumResult) -> bool:
    return all(o in ((SUCCESS, SUCCESS), (REFUNDED, REFUNDED)) for o in result.outcomes)
