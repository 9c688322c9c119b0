"""Hierarchical settlement: spec'd three-level example topology plus
randomized oracle equivalence."""

import random

from xchan.contract import ClosePayload, settle_levels
from xchan.crypto import keypair_from_label
from xchan.receipts import make_final_state, make_receipt, make_sub_receipt
from gen_trees import gen_case
from oracles import settle_oracle

S = keypair_from_label("hier:S")
R = keypair_from_label("hier:R")
D = keypair_from_label("hier:D")
Q = keypair_from_label("hier:Q")
SID = "hier-1"


def three_level_case(include_level2=True):
    """Root funded (100, 100); R pays S 30 (delegated into a channel with
    D); S pays D 10 there (delegated into a channel with Q); D pays Q 4."""
    deposits = {S.address: 100, R.address: 100}
    tr_root = make_receipt(R, SID, (), 6, S.address, 30)
    sr_root = make_sub_receipt(R, D.address, tr_root)
    tr_mid = make_receipt(S, SID, (6,), 2, D.address, 10)
    sr_mid = make_sub_receipt(S, Q.address, tr_mid)
    tr_leaf = make_receipt(D, SID, (6, 2), 1, Q.address, 4)

    def close(kp, path, srs=(), trs=()):
        f = make_final_state(kp, SID, path, {})
        return (kp.address, ClosePayload(final=f, srs=tuple(srs), trs=tuple(trs)))

    submissions = [
        close(S, (), srs=[sr_root], trs=[tr_root]),
        close(R, (), srs=[sr_root], trs=[tr_root]),
        close(S, (6,), srs=[sr_mid], trs=[tr_mid]),
        close(D, (6,), srs=[sr_mid], trs=[tr_mid]),
    ]
    if include_level2:
        submissions += [
            close(D, (6, 2), trs=[tr_leaf]),
            close(Q, (6, 2), trs=[tr_leaf]),
        ]
    return deposits, submissions


def test_three_levels_settle():
    deposits, submissions = three_level_case()
    res = settle_levels(SID, deposits, [S.address, R.address], submissions)
    assert res.ok and res.cutoff_level is None
    assert res.allocations == {S.address: 120, R.address: 70, D.address: 6, Q.address: 4}
    assert sum(res.allocations.values()) == 200


def test_three_levels_match_oracle():
    deposits, submissions = three_level_case()
    ok, alloc, cutoff = settle_oracle(SID, deposits, [S.address, R.address], submissions)
    res = settle_levels(SID, deposits, [S.address, R.address], submissions)
    assert (res.ok, res.allocations, res.cutoff_level) == (ok, alloc, cutoff)


def test_missing_level_two_reverts_funding():
    deposits, submissions = three_level_case(include_level2=False)
    res = settle_levels(SID, deposits, [S.address, R.address], submissions)
    assert res.ok and res.cutoff_level == 2
    assert res.allocations == {S.address: 120, R.address: 70, D.address: 10}
    assert res.allocations.get(Q.address, 0) == 0
    assert sum(res.allocations.values()) == 200


def test_inflated_claim_is_ignored():
    deposits, submissions = three_level_case()
    # resubmit S's root claim with +1 for itself; recomputation wins
    sender, payload = submissions[0]
    inflated = make_final_state(S, SID, (), {S.address: 121, R.address: 70})
    submissions[0] = (sender, ClosePayload(final=inflated, srs=payload.srs, trs=payload.trs))
    res = settle_levels(SID, deposits, [S.address, R.address], submissions)
    assert res.allocations[S.address] == 120


def test_duplicate_sub_authorization_fails_level():
    deposits, submissions = three_level_case()
    tr_root = submissions[0][1].trs[0]
    second_sr = make_sub_receipt(R, Q.address, tr_root)
    sender, payload = submissions[1]
    submissions[1] = (
        sender,
        ClosePayload(final=payload.final, srs=payload.srs + (second_sr,), trs=payload.trs),
    )
    res = settle_levels(SID, deposits, [S.address, R.address], submissions)
    assert res.cutoff_level == 1
    # the delegated 30 reverts to the receipt's payee at the root
    assert res.allocations == {S.address: 130, R.address: 70}


def test_empty_close_settles_deposits():
    deposits = {S.address: 100, R.address: 100}
    f = make_final_state(S, SID, (), {})
    res = settle_levels(SID, deposits, [S.address, R.address],
                        [(S.address, ClosePayload(final=f, srs=(), trs=()))])
    assert res.ok
    assert res.allocations == deposits


def test_randomized_oracle_equivalence():
    rng = random.Random(20_08)
    for case in range(200):
        session, deposits, parties, submissions, flags = gen_case(rng)
        res = settle_levels(session, deposits, parties, submissions)
        ok, alloc, cutoff = settle_oracle(session, deposits, parties, submissions)
        assert res.ok == ok, (case, flags)
        assert res.allocations == alloc, (case, flags)
        assert res.cutoff_level == cutoff, (case, flags)
        assert sum(res.allocations.values()) == sum(deposits.values()), (case, flags)
