"""Scenario configuration and execution.

A scenario describes two chains, a set of channel pairs between one
sender and one receiver, a receipt workload, timer windows, the
threshold-sharing parameters, latency, and adversarial behavior flags.
run_scenario drives the full four-phase flow (initialize, open,
exchange, close) end to end and reports metrics; run_scaling_sweep
repeats it across channel counts and fits the throughput line.

Everything derives from the config seed: replaying a config yields a
byte-identical trace.
"""

from __future__ import annotations

import json
import random
import statistics
from dataclasses import asdict, dataclass, field, fields

from . import contract as ct
from .chain import Chain, TimerConfig
from .crypto import DEFAULT_GROUP, hash_bytes, key_to_bytes, keypair_from_label
from .engine import BehaviorProfile, ChannelView, Miner, MinerBehavior, Party, SessionRole
from .proofs import TransparentMacBackend
from .simnet import LatencyModel, Simnet

MODES = ("CE", "FE", "EIE")
BASELINES = ("cross_channel", "plain_htlc")


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class ScenarioConfig:
    mode: str = "CE"
    baseline: str = "cross_channel"
    seed: int = 1
    channels: int = 1
    receipts_n: int = 10  # workload receipts per channel pair
    amount_lo: int = 1
    amount_hi: int = 3
    funding: int = 10_000  # per party per chain
    receipt_size_bytes: int | None = None  # default 130 CE, 1300 FE/EIE
    bandwidth_bytes_per_tick: int = 1300
    block_interval_alpha: int = 4
    block_interval_beta: int = 3
    appeal_window: int = 8  # fake-share report window after bindings publish
    close_window: int = 12  # settlement data collection window
    alpha_unlock: int = 30  # preimage deadline on alpha (the longer one)
    beta_unlock: int = 20  # preimage deadline on beta
    assist_window: int = 45  # miner assist deadline on alpha
    assist_enabled: bool = True
    assist_reward_percent: int = 1
    vss_t: int = 2
    vss_n: int = 3
    byzantine_ell: int = 1
    n_node: int = 4  # miners per chain
    byzantine_miners: int = 0  # miners that withhold recovery shares
    levels: int = 1  # alpha-side channel tree depth
    sub_funding: tuple = ()
    sub_receipts: tuple = ()
    latency: dict = field(default_factory=lambda: {"kind": "fixed", "fixed": 1})
    adversary: dict = field(default_factory=dict)  # party name -> [flag, ...]
    max_ticks: int = 4000

    def __post_init__(self):
        if self.receipt_size_bytes is None:
            self.receipt_size_bytes = 130 if self.mode == "CE" else 1300
        self.sub_funding = tuple(self.sub_funding)
        self.sub_receipts = tuple(self.sub_receipts)

    def validate(self) -> list[str]:
        v = []
        if self.mode not in MODES:
            v.append("mode must be one of %s" % (MODES,))
        if self.baseline not in BASELINES:
            v.append("baseline must be one of %s" % (BASELINES,))
        if not self.alpha_unlock > self.beta_unlock:
            v.append("alpha_unlock > beta_unlock violated (%d <= %d)" % (self.alpha_unlock, self.beta_unlock))
        if not self.assist_window > self.alpha_unlock:
            v.append("assist_window > alpha_unlock violated (%d <= %d)" % (self.assist_window, self.alpha_unlock))
        if not self.vss_t > self.byzantine_ell:
            v.append("t > ell violated (%d <= %d)" % (self.vss_t, self.byzantine_ell))
        if not self.vss_n >= self.vss_t + self.byzantine_ell:
            v.append("n >= t + ell violated (%d < %d + %d)" % (self.vss_n, self.vss_t, self.byzantine_ell))
        if not self.n_node == 3 * self.byzantine_ell + 1:
            v.append("n_node = 3*ell + 1 violated (%d != %d)" % (self.n_node, 3 * self.byzantine_ell + 1))
        if not 1 <= self.vss_t <= self.vss_n:
            v.append("1 <= t <= n violated")
        if not self.vss_n <= self.n_node:
            v.append("n <= n_node violated (%d > %d)" % (self.vss_n, self.n_node))
        if self.block_interval_alpha < 1 or self.block_interval_beta < 1:
            v.append("block intervals must be >= 1")
        for name in ("appeal_window", "close_window", "alpha_unlock", "beta_unlock"):
            if getattr(self, name) < 1:
                v.append("%s must be >= 1" % name)
        if self.channels < 1:
            v.append("channels must be >= 1")
        if self.receipts_n < 0:
            v.append("receipts_n must be >= 0")
        if not 0 < self.amount_lo <= self.amount_hi:
            v.append("0 < amount_lo <= amount_hi violated")
        if self.levels < 1 or self.levels > 3:
            v.append("levels must be in 1..3")
        if len(self.sub_funding) != self.levels - 1 or len(self.sub_receipts) != self.levels - 1:
            v.append("sub_funding/sub_receipts must list one entry per level beyond the first")
        if self.byzantine_miners > self.byzantine_ell:
            v.append("byzantine_miners <= ell violated")
        for i in range(len(self.sub_funding) - 1):
            if self.sub_funding[i + 1] + self.sub_receipts[i + 1] > self.sub_funding[i]:
                v.append("sub-channel %d cannot spend more than its funding" % (i + 2))
        return v

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(["unknown config keys: %s" % sorted(unknown)])
        cfg = cls(**raw)
        violations = cfg.validate()
        if violations:
            raise ConfigError(violations)
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "ScenarioConfig":
        with open(path) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ConfigError(["config file must hold a JSON object"])
        return cls.from_dict(raw)


def load_config(path: str) -> ScenarioConfig:
    return ScenarioConfig.from_json(path)


@dataclass
class RunMetrics:
    onchain_tx_count: dict
    receipts_processed: int
    outcomes: dict  # "chain:session" -> terminal state
    ticks_elapsed: int
    receipts_per_tick: float
    invariants_ok: bool = True

    def total_txs(self) -> int:
        return sum(self.onchain_tx_count.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)


@dataclass
class World:
    config: ScenarioConfig
    net: Simnet
    alpha: Chain
    beta: Chain
    parties: dict
    miners: list
    expected_receipts: int
    session_ids: list


def _receipt_rate(config: ScenarioConfig) -> int:
    return max(1, config.bandwidth_bytes_per_tick // config.receipt_size_bytes)


def _close_barrier(config: ScenarioConfig) -> int:
    """Tick at which the parties agree to start closing: late enough for
    every planned receipt and sub-channel round trip to have happened."""
    lat = config.latency
    max_lat = lat.get("fixed", 1) if lat.get("kind", "fixed") == "fixed" else lat.get("hi", 1)
    rate = _receipt_rate(config)
    n_alpha = (config.receipts_n + 1) // 2 + (1 if config.levels >= 2 else 0)
    n_beta = config.receipts_n // 2
    longest = max(n_alpha, n_beta)
    sub_total = 0
    for i in range(config.levels - 1):
        count = config.sub_receipts[i] + (1 if i + 1 < config.levels - 1 else 0)
        sub_total += (count + rate - 1) // rate + 6 * max_lat + 4
    open_ticks = 2 * max(config.block_interval_alpha, config.block_interval_beta) + max_lat + 2
    pump_ticks = (longest + rate - 1) // rate + max_lat + 3
    return open_ticks + pump_ticks + sub_total


def _behavior_for(config, name) -> BehaviorProfile:
    flags = {f: True for f in config.adversary.get(name, ())}
    return BehaviorProfile(**flags)


def build_world(config: ScenarioConfig, mode: str = "run") -> World:
    violations = config.validate()
    if violations:
        raise ConfigError(violations)
    group = DEFAULT_GROUP
    latency = LatencyModel.from_config(config.latency)
    net = Simnet(seed=config.seed, latency=latency, mode=mode)
    timers_a = TimerConfig(
        appeal_window=config.appeal_window,
        close_window=config.close_window,
        unlock_window=config.alpha_unlock,
        assist_window=config.assist_window if config.assist_enabled else None,
    )
    timers_b = TimerConfig(
        appeal_window=config.appeal_window,
        close_window=config.close_window,
        unlock_window=config.beta_unlock,
        assist_window=None,
    )
    alpha = Chain("alpha", config.block_interval_alpha, timers_a, config.assist_reward_percent)
    beta = Chain("beta", config.block_interval_beta, timers_b, config.assist_reward_percent)
    net.add_chain(alpha)
    net.add_chain(beta)

    party_names = ["S", "R"] + (["D"] if config.levels >= 2 else []) + (
        ["Q"] if config.levels >= 3 else []
    )
    directory = {}
    parties = {}
    for name in party_names:
        keys = {
            c.chain_id: keypair_from_label("%s:%d:%s" % (name, config.seed, c.chain_id))
            for c in (alpha, beta)
        }
        p = Party(
            name,
            keys,
            behavior=_behavior_for(config, name),
            directory=directory,
            seed=config.seed,
            group=group,
        )
        parties[name] = p
        net.register(name, p)
        for c in (alpha, beta):
            funded = config.funding * config.channels if name in ("S", "R") else 0
            c.create_account(p.address(c.chain_id), funded)
            directory[p.address(c.chain_id)] = name
            net.subscribe(c, name)

    miners = []
    for c in (alpha, beta):
        for i in range(config.n_node):
            mname = "M.%s.%d" % (c.chain_id, i + 1)
            kp = keypair_from_label("%s:%d" % (mname, config.seed))
            behavior = MinerBehavior(
                respond_recover=i >= config.byzantine_miners,
                assist=config.assist_enabled,
            )
            m = Miner(mname, c, kp, behavior=behavior, group=group,
                      other_chain=(beta if c is alpha else alpha).chain_id)
            miners.append(m)
            net.register(mname, m)
            c.register_miner(kp.address)
            directory[kp.address] = mname
            net.subscribe(c, mname)
            if c is alpha:
                # alpha miners watch beta for revealed preimages (assist)
                net.subscribe(beta, mname, kinds=(ct.UPDATE_TX, ct.UPDATE_EIE_TX))

    rng = random.Random("workload:%d" % config.seed)
    rate = _receipt_rate(config)
    session_ids = ["c%d" % i for i in range(config.channels)]
    expected = 0
    S, R = parties["S"], parties["R"]

    for sid in session_ids:
        n_alpha = (config.receipts_n + 1) // 2
        n_beta = config.receipts_n // 2
        alpha_amounts = [rng.randint(config.amount_lo, config.amount_hi) for _ in range(n_alpha)]
        beta_amounts = [rng.randint(config.amount_lo, config.amount_hi) for _ in range(n_beta)]
        if config.levels >= 2:
            alpha_amounts = [config.sub_funding[0]] + alpha_amounts
        if sum(alpha_amounts) > config.funding or sum(beta_amounts) > config.funding:
            raise ConfigError(["workload exceeds channel funding"])

        pre = hash_bytes(b"pre:%s:%d" % (sid.encode(), config.seed))
        key_s = int.from_bytes(hash_bytes(b"key:S:%s:%d" % (sid.encode(), config.seed)), "big") % group.q
        key_r = int.from_bytes(hash_bytes(b"key:R:%s:%d" % (sid.encode(), config.seed)), "big") % group.q
        if config.mode == "FE":
            pre = key_to_bytes(key_s)
        h_pre = hash_bytes(pre)

        S.roles[sid] = SessionRole(
            mode=config.mode, counterpart="R", lock_chain="alpha", update_chain="beta",
            pre=pre, h_pre=h_pre,
        )
        R.roles[sid] = SessionRole(
            mode=config.mode, counterpart="S", relay_lock_chain="beta", relay_update_chain="alpha",
        )

        S.plan_sends("alpha", sid, (), alpha_amounts, rate)
        R.expect("alpha", sid, (), len(alpha_amounts))
        R.plan_sends("beta", sid, (), beta_amounts, rate)
        S.expect("beta", sid, (), len(beta_amounts))
        expected += len(alpha_amounts) + len(beta_amounts)

        if config.levels >= 2:
            D = parties["D"]
            sub1 = [1] * config.sub_receipts[0]
            if config.levels >= 3:
                sub1 = [config.sub_funding[1]] + sub1
            if sum(sub1) > config.sub_funding[0]:
                raise ConfigError(["level-2 spend exceeds its funding"])
            R.plan_subchannel("alpha", sid, (), 1, D.address("alpha"), sub1, rate)
            D.expect("alpha", sid, (1,), len(sub1))
            D.roles.setdefault(sid, SessionRole(mode=config.mode, counterpart="R"))
            expected += len(sub1)
            if config.levels >= 3:
                Q = parties["Q"]
                sub2 = [1] * config.sub_receipts[1]
                if sum(sub2) > config.sub_funding[1]:
                    raise ConfigError(["level-3 spend exceeds its funding"])
                D.plan_subchannel("alpha", sid, (1,), 1, Q.address("alpha"), sub2, rate)
                Q.expect("alpha", sid, (1, 1), len(sub2))
                Q.roles.setdefault(sid, SessionRole(mode=config.mode, counterpart="D"))
                expected += len(sub2)

        if config.mode in ("FE", "EIE"):
            backend = TransparentMacBackend(group)
            blocks_s = tuple(
                hash_bytes(b"m:S:%s:%d:%d" % (sid.encode(), config.seed, i))[:13] for i in range(4)
            )
            vk_s = S.setup_exchange("alpha", sid, key_s, blocks_s, config.vss_t, config.vss_n,
                                    backend, hash_bytes(b"crs:S:%s" % sid.encode()))
            R.backend = backend
            R.vk_registry[("alpha", sid, S.address("alpha"))] = vk_s
            if config.mode == "EIE":
                blocks_r = tuple(
                    hash_bytes(b"m:R:%s:%d:%d" % (sid.encode(), config.seed, i))[:13] for i in range(4)
                )
                vk_r = R.setup_exchange("beta", sid, key_r, blocks_r, config.vss_t, config.vss_n,
                                        backend, hash_bytes(b"crs:R:%s" % sid.encode()))
                S.vk_registry[("beta", sid, R.address("beta"))] = vk_r

    barrier = _close_barrier(config)
    grace = barrier + 30
    for p in parties.values():
        p.close_after_tick = barrier
    for sid in session_ids:
        for name in ("S", "R"):
            for chain_id in ("alpha", "beta"):
                net.wakeup(name, barrier, {"try_close": [chain_id, sid]})
                net.wakeup(name, grace, {"force_close": [chain_id, sid]})

    return World(
        config=config,
        net=net,
        alpha=alpha,
        beta=beta,
        parties=parties,
        miners=miners,
        expected_receipts=expected,
        session_ids=session_ids,
    )


def _all_terminal(world: World) -> bool:
    for chain in (world.alpha, world.beta):
        for sid in world.session_ids:
            s = chain.contract.sessions.get(sid)
            if s is None or not s.is_terminal():
                return False
    if world.config.mode == "EIE":
        for sid in world.session_ids:
            a = world.alpha.contract.sessions.get(sid)
            if a is not None and a.state == ct.SUCCESS and a.recovery_requested:
                if ("alpha", sid) not in world.parties["R"].recovered:
                    return False
            b = world.beta.contract.sessions.get(sid)
            if b is not None and b.state == ct.SUCCESS and b.recovery_requested:
                if ("beta", sid) not in world.parties["S"].recovered:
                    return False
    if world.config.mode == "FE":
        for sid in world.session_ids:
            a = world.alpha.contract.sessions.get(sid)
            if a is not None and a.state == ct.SUCCESS:
                if ("alpha", sid) not in world.parties["R"].recovered:
                    return False
    return True


def collect_metrics(world: World) -> RunMetrics:
    counts: dict[str, int] = {}
    for entry in world.net.trace:
        if entry.get("tx_kind") in ct.PAYLOAD_KINDS and "result" in entry:
            if not entry["result"].startswith("failed:"):
                counts[entry["tx_kind"]] = counts.get(entry["tx_kind"], 0) + 1
    receipts = sum(sum(p.received_counts.values()) for p in world.parties.values())
    outcomes = {}
    for chain in (world.alpha, world.beta):
        for sid, s in sorted(chain.contract.sessions.items()):
            outcomes["%s:%s" % (chain.chain_id, sid)] = s.state
    ticks = max(world.net.now, 1)
    return RunMetrics(
        onchain_tx_count=counts,
        receipts_processed=receipts,
        outcomes=outcomes,
        ticks_elapsed=world.net.now,
        receipts_per_tick=receipts / ticks,
    )


def run_scenario(config: ScenarioConfig):
    """Execute one scenario end to end; returns (metrics, trace)."""
    if config.baseline == "plain_htlc":
        return run_plain_htlc(config)
    world = build_world(config)
    for sid in world.session_ids:
        for name in ("S", "R"):
            p = world.parties[name]
            for chain in (world.alpha, world.beta):
                p.submit_open(world.net, chain.chain_id, sid, config.funding)
    trace = world.net.run_until(lambda: _all_terminal(world), max_tick=config.max_ticks)
    metrics = collect_metrics(world)
    if not _all_terminal(world):
        metrics.invariants_ok = False
    if metrics.receipts_processed != world.expected_receipts:
        metrics.invariants_ok = False
    return metrics, trace


def run_plain_htlc(config: ScenarioConfig):
    """Baseline: one bare hash-time-locked session pair per exchange, no
    channels. Every exchange costs lock+update on each chain."""
    world = build_world(config)
    S, R = world.parties["S"], world.parties["R"]
    n = config.receipts_n
    rng = random.Random("htlc:%d" % config.seed)
    session_ids = []
    for j in range(n):
        sid = "h%d" % j
        session_ids.append(sid)
        amount = rng.randint(config.amount_lo, config.amount_hi)
        world.alpha.contract.create_htlc_session(sid, S.address("alpha"), R.address("alpha"), amount)
        world.beta.contract.create_htlc_session(sid, R.address("beta"), S.address("beta"), amount)
        pre = hash_bytes(b"pre:%s:%d" % (sid.encode(), config.seed))
        S.roles[sid] = SessionRole(mode="CE", counterpart="R", lock_chain="alpha",
                                   update_chain="beta", pre=pre, h_pre=hash_bytes(pre))
        R.roles[sid] = SessionRole(mode="CE", counterpart="S", relay_lock_chain="beta",
                                   relay_update_chain="alpha")
        for p in (S, R):
            p.session_states[("alpha", sid)] = ct.CLOSE
            p.session_states[("beta", sid)] = ct.CLOSE
    world.session_ids = session_ids
    for sid in session_ids:
        S._submit_lock(world.net, "alpha", sid)
    trace = world.net.run_until(lambda: _all_terminal(world), max_tick=config.max_ticks)
    metrics = collect_metrics(world)
    if not _all_terminal(world):
        metrics.invariants_ok = False
    return metrics, trace


@dataclass
class SweepRow:
    channels: int
    receipts: int
    ticks: int
    receipts_per_tick: float


@dataclass
class SweepResult:
    rows: list
    slope: float
    intercept: float
    r_squared: float
    single_channel_rate: float


def run_scaling_sweep(config: ScenarioConfig, channel_counts) -> SweepResult:
    """Throughput over channel count, plus a least-squares line fit."""
    from dataclasses import replace as dc_replace

    rows = []
    base = dc_replace(config, channels=1)
    base_metrics, _ = run_scenario(base)
    for count in channel_counts:
        metrics, _ = run_scenario(dc_replace(config, channels=count))
        rows.append(
            SweepRow(
                channels=count,
                receipts=metrics.receipts_processed,
                ticks=metrics.ticks_elapsed,
                receipts_per_tick=metrics.receipts_per_tick,
            )
        )
    xs = [r.channels for r in rows]
    ys = [r.receipts_per_tick for r in rows]
    fit = statistics.linear_regression(xs, ys)
    if len(set(ys)) > 1:
        r2 = statistics.correlation(xs, ys) ** 2
    else:
        r2 = 1.0
    return SweepResult(
        rows=rows,
        slope=fit.slope,
        intercept=fit.intercept,
        r_squared=r2,
        single_channel_rate=base_metrics.receipts_per_tick,
    )


def write_trace(trace, path):
    with open(path, "w") as fh:
        for entry in trace:
            fh.write(json.dumps(entry, sort_keys=False) + "\n")


def trace_bytes(trace) -> bytes:
    return "\n".join(json.dumps(e, sort_keys=False) for e in trace).encode()
