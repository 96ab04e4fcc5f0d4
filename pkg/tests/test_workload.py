import math
from collections import Counter

import numpy as np
import pytest

from hmcsim.errors import ConfigurationError, ProtocolError
from hmcsim.geometry import AddressFilter, decode, device_preset
from hmcsim.protocol import Kind, RequestType
from hmcsim.workload import (STALLED, Addressing, GeneratorState, PortConfig, StreamBatch,
                             StreamCommand, configure_scale, next_request, retire, run_stream)

HMC11 = device_preset("hmc-1.1-4GB")


def make(cfg, seed=0):
    return GeneratorState.create(cfg, HMC11, seed)


def test_linear_addresses():
    cfg = PortConfig(addressing=Addressing.LINEAR, linear_step=128, linear_start=0)
    st = make(cfg)
    addrs = [next_request(st, cfg, 0).address for _ in range(5)]
    assert addrs == [0, 128, 256, 384, 512]


def test_linear_wraps_at_capacity():
    cfg = PortConfig(addressing=Addressing.LINEAR, linear_step=128,
                     linear_start=HMC11.capacity - 128, tag_pool_depth=4)
    st = make(cfg)
    assert [next_request(st, cfg, 0).address for _ in range(2)] == [HMC11.capacity - 128, 0]


def test_linear_step_must_cover_payload():
    with pytest.raises(ConfigurationError):
        PortConfig(addressing=Addressing.LINEAR, payload=128, linear_step=64)


def test_one_vault_mask():
    cfg = PortConfig(filter=AddressFilter.from_registers(0xFFFFF87F))
    st = make(cfg, 5)
    for _ in range(64):
        p = next_request(st, cfg, 0)
        assert decode(HMC11, p.address).vault == 0


def test_tag_pool_exhaustion():
    cfg = PortConfig(tag_pool_depth=1)
    st = make(cfg)
    assert next_request(st, cfg, 0) is not STALLED
    for t in range(100):
        assert next_request(st, cfg, t) is STALLED


def test_retire_latency_and_reuse():
    cfg = PortConfig(tag_pool_depth=1)
    st = make(cfg)
    p = next_request(st, cfg, 0)
    assert retire(st, p, 711_000) == 711.0
    q = next_request(st, cfg, 800_000)
    assert q.tag == p.tag
    assert retire(st, q, 900_000) == 100.0
    assert (st.latency_min, st.latency_max, st.latency_avg) == (100.0, 711.0, 405.5)


def test_double_retire():
    cfg = PortConfig()
    st = make(cfg)
    p = next_request(st, cfg, 0)
    retire(st, p, 10)
    with pytest.raises(ProtocolError):
        retire(st, p, 20)


def test_in_flight_bounded_by_depth():
    cfg = PortConfig(tag_pool_depth=64)
    st = make(cfg)
    issued = [next_request(st, cfg, 0) for _ in range(200)]
    assert sum(p is not STALLED for p in issued) == 64
    assert len(st.in_flight) == 64


def test_writes_not_tag_limited():
    cfg = PortConfig(request_type=RequestType.WRITE_ONLY, tag_pool_depth=1)
    st = make(cfg)
    packets = [next_request(st, cfg, 0) for _ in range(10)]
    assert all(p.kind is Kind.WRITE for p in packets)
    assert len({p.tag for p in packets}) == 10


def test_rw_write_follows_read():
    cfg = PortConfig(request_type=RequestType.READ_MODIFY_WRITE, tag_pool_depth=1)
    st = make(cfg)
    r = next_request(st, cfg, 0)
    assert r.kind is Kind.READ
    assert next_request(st, cfg, 1) is STALLED
    retire(st, r, 700_000, cfg)
    w = next_request(st, cfg, 700_000)
    assert w.kind is Kind.WRITE and w.address == r.address and w.tag != r.tag


def test_configure_scale():
    assert len(configure_scale(9).active_ports) == 9
    wl = configure_scale(1)
    assert [p.port for p in wl.active_ports] == [0]
    for bad in (0, 10):
        with pytest.raises(ConfigurationError):
            configure_scale(bad)


def test_inactive_port_rejected():
    wl = configure_scale(1)
    cfg = wl.ports[3]
    with pytest.raises(ConfigurationError):
        next_request(make(cfg), cfg, 0)


def test_random_vaults_uniform():
    cfg = PortConfig(tag_pool_depth=10 ** 6)
    st = make(cfg, 42)
    n = 100_000
    counts = Counter(decode(HMC11, next_request(st, cfg, 0).address).vault for _ in range(n))
    p = 1 / 16
    sigma = math.sqrt(n * p * (1 - p))
    assert len(counts) == 16
    for c in counts.values():
        assert abs(c - n * p) <= 3 * sigma


def test_linear_sweeps_vaults_in_order():
    cfg = PortConfig(addressing=Addressing.LINEAR, payload=128, linear_step=128, linear_start=0)
    st = make(cfg)
    seq = [decode(HMC11, next_request(st, cfg, 0).address).vault for _ in range(32)]
    assert seq == list(range(16)) * 2


def test_random_addresses_aligned():
    cfg = PortConfig(payload=48)
    st = make(cfg, 3)
    for _ in range(64):
        assert next_request(st, cfg, 0).address % 64 == 0


def test_deterministic_replay():
    wl = configure_scale(9, seed=7)
    a, b = wl.states(HMC11), wl.states(HMC11)
    cfg = wl.ports[4]
    seq_a = [next_request(a[4], cfg, 0).address for _ in range(50)]
    seq_b = [next_request(b[4], cfg, 0).address for _ in range(50)]
    assert seq_a == seq_b
    other = [next_request(a[5], wl.ports[5], 0).address for _ in range(50)]
    assert other != seq_a


def test_stream_single_read():
    r = run_stream([StreamCommand(0x46300000, Kind.READ, 128)], HMC11)
    assert r.min == r.max == r.avg


def test_stream_small_insensitive_to_size():
    a = run_stream(StreamBatch.spread(2, 16), HMC11).avg
    b = run_stream(StreamBatch.spread(2, 128), HMC11).avg
    assert b / a == pytest.approx(1.0, abs=0.12)


def test_stream_28_ratio():
    big = run_stream(StreamBatch.spread(28, 128), HMC11).avg
    small = run_stream(StreamBatch.spread(28, 16), HMC11).avg
    assert big / small == pytest.approx(1.5, abs=0.15)


def test_empty_stream():
    with pytest.raises(ConfigurationError):
        run_stream([], HMC11)
