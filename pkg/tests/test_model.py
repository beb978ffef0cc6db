import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contractmatch.errors import ValidationError
from contractmatch.model import (
    Allocation, FailureConfiguration, ParseError, PriceRanges, dump_allocation, dump_instance,
    enumerate_configurations, generate_instance, instance_to_dict, parse_allocation, parse_instance,
    tiny_instance,
)

TINY_DOC = {
    "buys": [
        {"id": "A", "price": 1, "fail_prob": 0.1, "capacity": 1},
        {"id": "B", "price": 2, "fail_prob": 0.5, "capacity": 1},
    ],
    "sells": [{"id": "X", "price": 4, "penalty": 6, "capacity": 1}],
    "edges": [[0, 0], [1, 0]],
}


def test_parse_tiny_document():
    inst = parse_instance(json.dumps(TINY_DOC))
    assert (inst.q, inst.k, len(inst.edges)) == (2, 1, 2)
    assert inst == tiny_instance()
    assert parse_instance(dump_instance(inst)) == inst


def test_fail_prob_out_of_range_names_the_field():
    doc = json.loads(json.dumps(TINY_DOC))
    doc["buys"][0]["fail_prob"] = 1.5
    with pytest.raises(ValidationError) as err:
        parse_instance(json.dumps(doc))
    assert err.value.path == "buys[0].fail_prob"


def test_empty_sells_rejected():
    doc = dict(TINY_DOC, sells=[], edges=[])
    with pytest.raises(ValidationError):
        parse_instance(json.dumps(doc))


@pytest.mark.parametrize("mutate", [
    lambda d: d["edges"].append([5, 0]),
    lambda d: d["edges"].append([0, 0]),
    lambda d: d["buys"][1].update(id="A"),
    lambda d: d["sells"][0].update(penalty=-1),
    lambda d: d["buys"][0].update(capacity=1.5),
    lambda d: d.pop("edges"),
])
def test_invalid_documents(mutate):
    doc = json.loads(json.dumps(TINY_DOC))
    mutate(doc)
    with pytest.raises(ValidationError):
        parse_instance(json.dumps(doc))


def test_malformed_json_is_a_parse_error():
    with pytest.raises(ParseError):
        parse_instance("{not json")


def test_configuration_bits_and_masks():
    c = FailureConfiguration.from_bits("10")
    assert c.alive == (True, False)
    assert c.failed_count == 1
    assert str(c) == "10"
    assert FailureConfiguration.all_alive(3).bits == "111"
    assert FailureConfiguration.all_failed(3).bits == "000"
    assert [c.bits for c in enumerate_configurations(2)] == ["00", "01", "10", "11"]
    with pytest.raises(ValueError):
        FailureConfiguration.from_bits("1x")


def test_allocation_capacity_checks():
    inst = tiny_instance()
    Allocation((1, 1), (1,)).validate_for(inst)
    with pytest.raises(ValidationError):
        Allocation((2, 0), (1,)).validate_for(inst)
    with pytest.raises(ValidationError):
        Allocation((1,), (1,)).validate_for(inst)
    assert Allocation.zero(inst).is_zero


def test_allocation_round_trip():
    inst = tiny_instance()
    alloc = Allocation((1, 0), (1,))
    assert parse_allocation(dump_allocation(alloc), inst) == alloc
    with pytest.raises(ValidationError):
        parse_allocation('{"n": [1, 0]}', inst)


def test_generator_is_deterministic():
    assert generate_instance(6, 4, 0.5, rng_seed=7) == generate_instance(6, 4, 0.5, rng_seed=7)


def test_generator_full_density_has_every_edge():
    inst = generate_instance(6, 4, 1.0, rng_seed=1)
    assert len(inst.edges) == 24


def test_generator_edge_repair():
    # density this low drops every sampled edge; repair must still connect the sell
    inst = generate_instance(2, 1, 1e-9, rng_seed=3)
    assert len(inst.incident_buys(0)) >= 1
    for seed in range(20):
        inst = generate_instance(2, 1, 0.5, rng_seed=seed)
        assert all(inst.incident_buys(i) for i in range(inst.k))


def test_generator_respects_ranges():
    ranges = PriceRanges(buy_capacity=(1, 2), sell_capacity=(2, 2), fail_prob=(0.0, 0.0))
    inst = generate_instance(5, 3, 0.7, ranges, rng_seed=11)
    assert all(1 <= b.capacity <= 2 and b.fail_prob == 0.0 for b in inst.buys)
    assert all(s.capacity == 2 for s in inst.sells)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(1, 5), st.floats(0.05, 1.0), st.integers(0, 2**31))
def test_generated_instances_round_trip(q, k, density, seed):
    inst = generate_instance(q, k, density, rng_seed=seed)
    again = parse_instance(dump_instance(inst))
    assert again == inst
    assert instance_to_dict(again) == instance_to_dict(inst)
    assert all(inst.incident_buys(i) for i in range(k))
