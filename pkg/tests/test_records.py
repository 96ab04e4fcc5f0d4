import math

import pytest
from hypothesis import given, strategies as st

from hmcsim.records import (COLUMNS, ExperimentRecord, dumps_csv, from_json, loads_csv,
                            to_json)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
maybe_nan = st.one_of(finite, st.just(float("nan")))

records = st.builds(
    ExperimentRecord,
    experiment=st.sampled_from([f"E{i}" for i in range(1, 10)]),
    point=st.integers(0, 10 ** 6),
    label=st.text(st.characters(blacklist_categories=("Cs", "Cc")), max_size=20),
    request_type=st.sampled_from(["ro", "wo", "rw"]),
    payload=st.sampled_from([16, 32, 64, 128]),
    mask=st.integers(0, (1 << 34) - 1),
    anti_mask=st.integers(0, (1 << 34) - 1),
    accesses=st.integers(0, 10 ** 12),
    bandwidth_gbs=finite,
    latency_avg_ns=maybe_nan,
    temperature_c=maybe_nan,
    failed=st.booleans(),
    vault_utilization=st.lists(finite, max_size=16).map(tuple),
)


def same(a, b):
    for name in COLUMNS:
        x, y = getattr(a, name), getattr(b, name)
        if isinstance(x, float) and math.isnan(x):
            assert math.isnan(y)
        else:
            assert x == y, name


@given(st.lists(records, max_size=5))
def test_csv_round_trip(recs):
    text = dumps_csv(recs)
    back = loads_csv(text)
    assert len(back) == len(recs)
    for a, b in zip(recs, back):
        same(a, b)
    assert dumps_csv(back) == text


@given(records)
def test_json_round_trip(rec):
    same(rec, from_json(to_json(rec)))


def test_fixed_columns():
    header = dumps_csv([]).splitlines()[0]
    assert tuple(header.split(",")) == COLUMNS
    assert COLUMNS[:3] == ("experiment", "point", "label")


def test_wrong_columns_rejected():
    with pytest.raises(ValueError):
        loads_csv("a,b\n1,2\n")
