"""Overhead model and experiment reports."""

import json

import pytest

from krac.bench import (
    ARTIFACT_PEER_ITEM_BYTES,
    BenchConfig,
    artifact_message_size_overhead,
    artifact_user_storage,
    message_totals,
    predict,
    run_experiment,
)
from krac.core import RESIDUE_LEN
from krac.crypto import PUB_KEY_LEN, SIG_LEN, WRAPPED_KEY_LEN


def test_reference_profile_constants():
    pk = predict("paper", "pk", k=20)
    assert pk["message_size_overhead_bytes"] == {"rsa": 554, "ecc": 147}
    assert pk["peer_item_bytes"] == {"rsa": 679, "ecc": 273}
    assert pk["user_storage_delta_bytes"] == {"rsa": 1196 + 40 * 20, "ecc": 117 + 40 * 20}

    zkp = predict("paper", "zkp", k=20, rounds=20)
    assert zkp["message_size_overhead_bytes"] == 20 * 83
    assert zkp["peer_item_bytes"] == 84
    assert zkp["user_storage_delta_bytes"] == 25 + 40 * 20

    oth = predict("paper", "oth", k=20)
    assert oth["message_size_overhead_bytes"] == 64
    assert oth["peer_item_bytes"] == 49
    assert oth["user_storage_delta_bytes"] == 48 + 104 * 20
    assert oth["user_master_bytes"] == 32

    timings = pk["reference_timings_us"]
    assert timings["kg_rsa"] == 317092 and timings["kg_ecc"] == 685
    assert timings["ho"] == 176 and timings["so"] == 33 and timings["mo"] == 4


def test_reference_op_counts():
    pk = predict("paper", "pk", k=20, rounds=20, acl_size=10)["op_counts"]
    assert pk["user_put"]["ao_pk"] == 10 and pk["user_put"]["ao_sk"] == 1
    assert pk["peer_put"] == {"kg": 0, "so": 0, "ho": 1, "mo": 0, "ao_pk": 1, "ao_sk": 0}
    assert pk["peer_get"] == dict.fromkeys(pk["peer_get"], 0.0)

    zkp = predict("paper", "zkp", k=20, rounds=20)["op_counts"]
    assert zkp["user_put"]["mo"] == 1.5 * 20 * 41  # n rounds, 2k+1 replicas
    assert zkp["peer_put"]["mo"] == 1.5 * 20

    oth = predict("paper", "oth", k=20)["op_counts"]
    assert oth["user_put"]["ho"] == 41
    assert oth["peer_put"]["ho"] == 1


def test_message_totals():
    for k in (0, 1, 3, 20):
        for y in (1, 2, 4):
            r = 2 * k + 1
            assert message_totals("pk", k, y) == {"get": r * y, "put": r * y, "set": r * y}
            assert message_totals("oth", k, y)["put"] == r * y
            assert message_totals("zkp", k, y) == {
                "get": r * y,
                "put": 2 * r * y,
                "set": 2 * r * y,
            }
    # overhead versus a single unreplicated exchange
    out = predict("paper", "pk", k=20, y=2)
    assert out["message_delta"]["put"] == 2 * (2 * 20 + 1) - 2


def test_artifact_sizes_are_component_sums():
    assert ARTIFACT_PEER_ITEM_BYTES["pk"] == 2 * PUB_KEY_LEN + WRAPPED_KEY_LEN + 1 + 8
    assert ARTIFACT_PEER_ITEM_BYTES["zkp"] == RESIDUE_LEN + 1
    assert ARTIFACT_PEER_ITEM_BYTES["oth"] == 32 + 16 + 1
    assert artifact_message_size_overhead("pk", 20) == 4 + 2 * PUB_KEY_LEN + SIG_LEN
    assert artifact_message_size_overhead("zkp", 20) == 20 * RESIDUE_LEN
    assert artifact_message_size_overhead("oth", 20) == 32 + 32 + 16
    assert artifact_user_storage("pk", 2) == 128 + 4 + 32 * 5
    assert artifact_user_storage("zkp", 2) == 84 + 16 + 32 * 5
    assert artifact_user_storage("oth", 2) == 16 + 64 * 5


def test_predict_rejects_unknown():
    with pytest.raises(ValueError):
        predict("paper", "rsa", k=1)
    with pytest.raises(ValueError):
        predict("vendor", "pk", k=1)


@pytest.mark.parametrize("mechanism", ["pk", "zkp", "oth"])
def test_experiment_clean_network(mechanism):
    cfg = BenchConfig(
        mechanism=mechanism, k=1, rounds=8, acl_size=2, peers=16, seed=5, trials=2
    )
    report = run_experiment(cfg)
    assert len(report.rows) == 2
    agg = report.aggregates
    assert agg["all_put_messages_match"] == 1
    assert agg["all_user_storage_match"] == 1
    assert agg["all_get_ok"] == 1
    assert agg["mean_adv_put_ok"] == 1.0  # no adversary configured


def test_experiment_with_adversary_within_bound():
    cfg = BenchConfig(
        mechanism="pk", k=2, rounds=8, acl_size=1, peers=32,
        adversary=2, behaviors=("deny", "tamper"), seed=9, trials=3,
    )
    agg = run_experiment(cfg).aggregates
    assert set(agg) >= {"mean_put_messages", "mean_adv_get_ok", "all_get_ok"}


def test_reports_deterministic():
    cfg = BenchConfig(mechanism="oth", k=1, acl_size=1, peers=12, seed=3, trials=2,
                      adversary=1, behaviors=("deny",))
    a, b = run_experiment(cfg), run_experiment(cfg)
    assert a.to_json() == b.to_json()
    assert a.to_csv() == b.to_csv()


def test_report_shapes():
    cfg = BenchConfig(mechanism="pk", k=0, acl_size=1, peers=4, seed=1, trials=2)
    report = run_experiment(cfg)
    parsed = json.loads(report.to_json())
    assert set(parsed) == {"config", "predicted", "rows", "aggregates"}
    assert parsed["config"]["mechanism"] == "pk"
    assert len(parsed["rows"]) == 2

    lines = report.to_csv().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    assert any(l.startswith("# config seed=1") for l in comments)
    assert any(l.startswith("# aggregate") for l in comments)
    header, *rows = body
    assert "put_messages" in header.split(",")
    assert len(rows) == 2
    assert all(len(r.split(",")) == len(header.split(",")) for r in rows)
