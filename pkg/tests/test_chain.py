"""Chain mechanics: mempool admission, block determinism, conservation,
committed-only reads."""

import pytest

from xchan import contract as ct
from xchan.chain import Chain, TimerConfig
from xchan.crypto import keypair_from_label

S = keypair_from_label("chain:S")
R = keypair_from_label("chain:R")


def new_chain(chain_id="alpha", interval=3):
    c = Chain(chain_id, interval, TimerConfig(6, 6, 10, 20))
    c.create_account(S.address, 500)
    c.create_account(R.address, 500)
    return c


def open_tx(kp, chain_id="alpha", sid="c0", v=100):
    return ct.make_tx(kp, chain_id, sid, ct.OPEN_TX, ct.OpenPayload(v))


class TestSubmit:
    def test_valid_tx_queued_and_included(self):
        c = new_chain()
        ok, why = c.submit_tx(open_tx(S))
        assert ok
        events = c.produce_block(3)
        assert events[0]["tx_kind"] == ct.OPEN_TX
        assert c.read_state("height") == 1

    def test_forged_signature_rejected(self):
        from dataclasses import replace

        c = new_chain()
        tx = open_tx(S)
        bad = replace(tx, sig=bytes(64))
        ok, why = c.submit_tx(bad)
        assert not ok and why == "bad signature"
        assert c.mempool == []

    def test_unknown_sender_rejected(self):
        c = new_chain()
        stranger = keypair_from_label("chain:stranger")
        ok, why = c.submit_tx(open_tx(stranger))
        assert not ok and why == "unknown sender"

    def test_wrong_chain_rejected(self):
        c = new_chain()
        ok, why = c.submit_tx(open_tx(S, chain_id="beta"))
        assert not ok and why == "wrong chain"

    def test_unknown_kind_rejected(self):
        c = new_chain()
        tx = ct.make_tx(S, "alpha", "c0", "Bogus", ct.OpenPayload(1))
        ok, why = c.submit_tx(tx)
        assert not ok and why == "unknown kind"
        # payload type must match the declared kind
        tx2 = ct.make_tx(S, "alpha", "c0", ct.LOCK_TX, ct.OpenPayload(1))
        ok, why = c.submit_tx(tx2)
        assert not ok and why == "unknown kind"

    def test_submission_order_preserved(self):
        c = new_chain()
        c.submit_tx(open_tx(S))
        c.submit_tx(open_tx(R))
        events = c.produce_block(3)
        assert [e["result"] for e in events][:2] == ["open pending", "state:Open_CE"]


class TestBlocks:
    def test_empty_block_increments_height(self):
        c = new_chain()
        events = c.produce_block(3)
        assert events == []
        assert len(c.blocks) == 1

    def test_identical_submissions_identical_hashes(self):
        def run():
            c = new_chain()
            c.submit_tx(open_tx(S))
            c.submit_tx(open_tx(R))
            c.produce_block(3)
            c.produce_block(6)
            return [b.hash for b in c.blocks]

        assert run() == run()

    def test_conservation_every_block(self):
        c = new_chain()
        total = c.total_value()
        c.submit_tx(open_tx(S))
        c.submit_tx(open_tx(R))
        c.produce_block(3)
        assert c.total_value() == total
        assert c.balance(S.address) == 400
        assert c.contract.sessions["c0"].escrow == 200

    def test_failed_tx_included_but_stateless(self):
        c = new_chain()
        c.submit_tx(open_tx(S, v=10_000))  # more than the balance
        events = c.produce_block(3)
        assert events[0]["result"].startswith("failed:")
        assert c.balance(S.address) == 500
        assert len(c.blocks[-1].entries) == 1


class TestReads:
    def test_unconfirmed_state_invisible(self):
        c = new_chain()
        c.submit_tx(open_tx(S))
        c.submit_tx(open_tx(R))
        assert c.read_session("c0") is None
        c.produce_block(3)
        assert c.read_state("session:c0") == ct.OPEN_CE

    def test_queries(self):
        c = new_chain()
        assert c.read_state("balance:%s" % S.address) == 500
        with pytest.raises(KeyError):
            c.read_state("balance:nobody")
        with pytest.raises(KeyError):
            c.read_state("nonsense")

    def test_miner_selection_deterministic(self):
        c = new_chain()
        for i in range(10):
            c.register_miner(keypair_from_label("chain:m%d" % i).address)
        a = c.pick_miners(4, b"seed-bytes")
        b = c.pick_miners(4, b"seed-bytes")
        assert a == b and len(set(a)) == 4
        assert c.pick_miners(4, b"other-seed") != a
