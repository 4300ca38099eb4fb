import pytest
from hypothesis import given
from hypothesis import strategies as st

from qaforge.errors import InvalidPolicyError
from qaforge.policy import ACCEPT, REFINE, GatePolicy, gate_decision


def test_gate_truth_table():
    half = GatePolicy(accuracy_threshold=0.5)
    quarter = GatePolicy(accuracy_threshold=0.25)
    no_gate = GatePolicy(accuracy_threshold=None)
    assert gate_decision(0.6, half) == REFINE
    assert gate_decision(0.5, half) == ACCEPT  # strictly greater, not >=
    assert gate_decision(0.24, quarter) == ACCEPT
    for rate in (0.0, 0.25, 0.5, 0.99, 1.0):
        assert gate_decision(rate, no_gate) == ACCEPT


def test_gate_extremes():
    assert gate_decision(1.0, GatePolicy(accuracy_threshold=0.99)) == REFINE
    assert gate_decision(1.0, GatePolicy(accuracy_threshold=1.0)) == ACCEPT
    assert gate_decision(0.0, GatePolicy(accuracy_threshold=0.0)) == ACCEPT
    assert gate_decision(0.01, GatePolicy(accuracy_threshold=0.0)) == REFINE


@given(
    rate=st.floats(0, 1),
    threshold=st.one_of(st.none(), st.floats(0, 1)),
)
def test_gate_is_pure_strict_comparison(rate, threshold):
    policy = GatePolicy(accuracy_threshold=threshold)
    expected = REFINE if threshold is not None and rate > threshold else ACCEPT
    assert gate_decision(rate, policy) == expected
    assert gate_decision(rate, policy) == expected  # no hidden state


def test_gate_rejects_out_of_range_rates():
    policy = GatePolicy()
    with pytest.raises(ValueError):
        gate_decision(-0.1, policy)
    with pytest.raises(ValueError):
        gate_decision(1.1, policy)


def test_policy_validation():
    with pytest.raises(InvalidPolicyError):
        GatePolicy(accuracy_threshold=1.5)
    with pytest.raises(InvalidPolicyError):
        GatePolicy(max_refinement_rounds=0)
    with pytest.raises(InvalidPolicyError):
        GatePolicy(swarm_size=0)
    with pytest.raises(InvalidPolicyError):
        GatePolicy(chunk_parallelism=0)
    with pytest.raises(InvalidPolicyError):
        GatePolicy(level_mix=((1, 1), (4, 1)))
    with pytest.raises(InvalidPolicyError):
        GatePolicy(level_mix=((1, 1), (1, 2)))
    with pytest.raises(InvalidPolicyError):
        GatePolicy(level_mix=((1, 0), (2, 0)))
    with pytest.raises(InvalidPolicyError):
        GatePolicy(level_mix=((1, -1), (2, 2)))


def test_level_mix_accepts_dict_form():
    policy = GatePolicy(level_mix={3: 2, 1: 1})
    assert policy.level_mix == ((1, 1), (3, 2))
    assert policy.level_counts == {1: 1, 3: 2}


def test_threshold_presets_and_round_trip():
    policy = GatePolicy.from_dict({"accuracy_threshold": "none"})
    assert policy.accuracy_threshold is None
    policy = GatePolicy.from_dict({"accuracy_threshold": "quarter", "swarm_size": 3})
    assert policy.accuracy_threshold == 0.25
    with pytest.raises(InvalidPolicyError):
        GatePolicy.from_dict({"accuracy_threshold": "most"})
    with pytest.raises(InvalidPolicyError):
        GatePolicy.from_dict({"accuracy_treshold": 0.5})

    original = GatePolicy(
        accuracy_threshold=0.25,
        max_refinement_rounds=2,
        swarm_size=3,
        level_mix=((1, 2), (2, 1)),
        chunk_parallelism=4,
        enrichment=False,
        validate_evidence=False,
    )
    assert GatePolicy.from_dict(original.to_dict()) == original


def test_defaults_describe_full_pipeline():
    policy = GatePolicy()
    assert policy.enrichment and policy.validate_evidence
    assert policy.accuracy_threshold == 0.5
    assert policy.max_refinement_rounds == 4
    assert policy.swarm_size == 5
