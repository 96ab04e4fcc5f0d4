import pytest
from hypothesis import given, strategies as st

from hmcsim.errors import ConfigurationError, InvalidSizeError
from hmcsim.protocol import (PAYLOAD_SIZES, Direction, Kind, LinkConfig, Packet, RequestType,
                             access_flits, effective_fraction, flits_for,
                             link_bytes_by_direction, peak_bandwidth, raw_bytes_on_links)

R, W = Kind.READ, Kind.WRITE
REQ, RESP = Direction.REQUEST, Direction.RESPONSE


def test_flit_table():
    for size in PAYLOAD_SIZES:
        assert flits_for(R, REQ, 0) == 1
        assert flits_for(R, RESP, size) == size // 16 + 1
        assert flits_for(W, REQ, size) == size // 16 + 1
        assert flits_for(W, RESP, 0) == 1
    assert flits_for(R, RESP, 128) == 9
    assert flits_for(W, REQ, 16) == 2


@pytest.mark.parametrize("bad", [8, 20, 144, 256, -16])
def test_invalid_sizes(bad):
    with pytest.raises(InvalidSizeError):
        flits_for(R, RESP, bad)


def test_packet_invariants():
    p = Packet(RESP, R, 64, tag=3)
    assert p.flits == 5 and p.size == 80
    with pytest.raises(InvalidSizeError):
        Packet(REQ, R, 64, tag=0)
    with pytest.raises(InvalidSizeError):
        Packet(RESP, W, 16, tag=0)


def test_peak_bandwidth():
    assert peak_bandwidth(LinkConfig()) == 60e9
    assert peak_bandwidth(LinkConfig(1, 8, 15.0, full_duplex=False)) == 15e9
    # independent arithmetic: 4 links x 16 lanes x 10 Gb/s x 2 directions / 8
    assert peak_bandwidth(LinkConfig(4, 16, 10.0)) == 4 * 16 * 10 * 2 / 8 * 1e9


def test_link_config_validation():
    with pytest.raises(ConfigurationError):
        LinkConfig(lanes_per_link=4)
    with pytest.raises(ConfigurationError):
        LinkConfig(lane_rate=11.0)
    LinkConfig(lane_rate=12.5)


def test_effective_fraction():
    assert effective_fraction(128) == 128 / 144
    assert effective_fraction(16) == 0.5
    assert effective_fraction(64) == 0.8
    assert effective_fraction(0) == 0.0


def test_effective_fraction_monotone():
    vals = [effective_fraction(s) for s in PAYLOAD_SIZES]
    assert vals == sorted(vals) and len(set(vals)) == len(vals)


def test_raw_bytes_examples():
    assert raw_bytes_on_links({(RequestType.READ_ONLY, 128): 1}) == 160
    assert raw_bytes_on_links({(RequestType.WRITE_ONLY, 128): 1}) == 160
    assert raw_bytes_on_links({(RequestType.READ_ONLY, 32): 10 ** 6}) == 64 * 10 ** 6
    assert raw_bytes_on_links({(RequestType.READ_MODIFY_WRITE, 64): 1}) == 2 * 96


def test_raw_bytes_negative():
    with pytest.raises(ValueError):
        raw_bytes_on_links({(RequestType.READ_ONLY, 32): -1})


@given(st.sampled_from(PAYLOAD_SIZES))
def test_read_write_symmetry(size):
    rf = flits_for(R, REQ, 0) + flits_for(R, RESP, size)
    wf = flits_for(W, REQ, size) + flits_for(W, RESP, 0)
    assert rf == wf
    assert raw_bytes_on_links({(RequestType.READ_ONLY, size): 1}) == \
        raw_bytes_on_links({(RequestType.WRITE_ONLY, size): 1})


def test_direction_asymmetry():
    up, down = link_bytes_by_direction({(RequestType.READ_ONLY, 128): 1})
    assert (up, down) == (16, 144)
    up, down = link_bytes_by_direction({(RequestType.WRITE_ONLY, 128): 1})
    assert (up, down) == (144, 16)
    assert access_flits(RequestType.READ_MODIFY_WRITE, 128) == (10, 10)


def test_request_type_parse():
    assert RequestType.parse("RW") is RequestType.READ_MODIFY_WRITE
    assert RequestType.parse("read_only") is RequestType.READ_ONLY
    assert not RequestType.READ_ONLY.has_writes
