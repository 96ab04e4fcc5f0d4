"""GUPS-style request generation.

Nine ports, each with its own address generator, read tag pool and
latency monitor. Full-scale runs activate all ports, small-scale runs a
subset, and stream runs replay a fixed batch of commands from one port.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ProtocolError
from .geometry import IDENTITY_FILTER, AddressFilter, DeviceConfig, apply_filter
from .protocol import Direction, Kind, Packet, RequestType, check_payload

MAX_PORTS = 9
TAG_POOL_DEPTH = 64
_RNG_BATCH = 4096


class Addressing(enum.Enum):
    RANDOM = "random"
    LINEAR = "linear"


class _Stalled:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "STALLED"

    def __bool__(self):
        return False


STALLED = _Stalled()


@dataclass(frozen=True)
class PortConfig:
    port: int = 0
    request_type: RequestType = RequestType.READ_ONLY
    payload: int = 128
    addressing: Addressing = Addressing.RANDOM
    linear_step: int = 128
    filter: AddressFilter = IDENTITY_FILTER
    tag_pool_depth: int = TAG_POOL_DEPTH
    active: bool = True
    linear_start: int | None = None

    def __post_init__(self):
        if not 0 <= self.port < MAX_PORTS:
            raise ConfigurationError(f"port id must be in 0..{MAX_PORTS - 1}")
        if self.tag_pool_depth < 1:
            raise ConfigurationError("tag pool depth must be at least 1")
        check_payload(self.payload, allow_zero=False)
        if self.addressing is Addressing.LINEAR and self.linear_step < self.payload:
            raise ConfigurationError("linear step must cover the request size")


def _alignment(device: DeviceConfig, payload: int) -> int:
    align = 16
    while align < payload:
        align <<= 1
    return min(align, device.max_block)


@dataclass
class GeneratorState:
    """Mutable per-port state: RNG stream, tag pool and latency accumulators."""

    device: DeviceConfig
    rng: np.random.Generator
    next_linear: int = 0
    align: int = 16
    free_tags: deque = field(default_factory=deque)
    in_flight: dict = field(default_factory=dict)
    pending_writes: deque = field(default_factory=deque)
    issued: int = 0
    retired: int = 0
    writes_issued: int = 0
    writes_acked: int = 0
    latency_min: float = float("inf")
    latency_max: float = 0.0
    latency_sum: float = 0.0
    _draws: list = field(default_factory=list)
    _next_write_tag: int = 0

    @classmethod
    def create(cls, cfg: PortConfig, device: DeviceConfig, seed=None) -> "GeneratorState":
        if isinstance(seed, np.random.SeedSequence):
            rng = np.random.Generator(np.random.PCG64(seed))
        else:
            rng = np.random.Generator(np.random.PCG64(seed))
        start = cfg.linear_start
        if start is None:
            # spread linear ports evenly over the device, block aligned
            start = (device.capacity // MAX_PORTS * cfg.port) & ~(device.max_block - 1)
        return cls(
            device=device,
            rng=rng,
            next_linear=start % device.capacity,
            align=_alignment(device, cfg.payload),
            free_tags=deque(range(cfg.tag_pool_depth)),
            _next_write_tag=cfg.tag_pool_depth,
        )

    @property
    def latency_count(self) -> int:
        return self.retired

    @property
    def latency_avg(self) -> float:
        return self.latency_sum / self.retired if self.retired else float("nan")

    def reset_stats(self) -> None:
        self.latency_min = float("inf")
        self.latency_max = 0.0
        self.latency_sum = 0.0
        self.retired = 0
        self.writes_acked = 0

    def _raw_random(self) -> int:
        if not self._draws:
            self._draws = self.rng.bit_generator.random_raw(_RNG_BATCH).tolist()
        return self._draws.pop()

    def next_address(self, cfg: PortConfig) -> int:
        capacity = self.device.capacity
        if cfg.addressing is Addressing.LINEAR:
            raw = self.next_linear
            self.next_linear = (raw + cfg.linear_step) % capacity
        else:
            raw = self._raw_random() & (capacity - 1) & ~(self.align - 1)
        return apply_filter(cfg.filter, raw)


def next_request(state: GeneratorState, cfg: PortConfig, now: int):
    """Next request packet for a port, or ``STALLED`` when no read tag is free.

    Dependent rw writes go first and do not need a tag. ``now`` is in
    picoseconds.
    """
    if not cfg.active:
        raise ConfigurationError(f"port {cfg.port} is not active")
    if state.pending_writes:
        address = state.pending_writes.popleft()
        return _write(state, cfg, address, now)
    if cfg.request_type is RequestType.WRITE_ONLY:
        return _write(state, cfg, state.next_address(cfg), now)
    if not state.free_tags:
        return STALLED
    tag = state.free_tags.popleft()
    packet = Packet(Direction.REQUEST, Kind.READ, 0, tag,
                    address=state.next_address(cfg), port=cfg.port)
    packet.stages["issue"] = now
    state.in_flight[tag] = (now, packet.address)
    state.issued += 1
    return packet


def _write(state: GeneratorState, cfg: PortConfig, address: int, now: int) -> Packet:
    tag = state._next_write_tag
    state._next_write_tag += 1
    packet = Packet(Direction.REQUEST, Kind.WRITE, cfg.payload, tag,
                    address=address, port=cfg.port)
    packet.stages["issue"] = now
    state.writes_issued += 1
    return packet


def retire(state: GeneratorState, response: Packet, now: int, cfg: PortConfig | None = None) -> float:
    """Free the read tag of ``response`` and return its latency in ns."""
    try:
        issued_at, address = state.in_flight.pop(response.tag)
    except KeyError:
        raise ProtocolError(f"tag {response.tag} is not in flight") from None
    state.free_tags.append(response.tag)
    latency = (now - issued_at) / 1000.0
    state.retired += 1
    state.latency_sum += latency
    if latency < state.latency_min:
        state.latency_min = latency
    if latency > state.latency_max:
        state.latency_max = latency
    if cfg is not None and cfg.request_type is RequestType.READ_MODIFY_WRITE:
        state.pending_writes.append(address)
    return latency


def acknowledge_write(state: GeneratorState) -> None:
    state.writes_acked += 1


@dataclass
class Workload:
    ports: list[PortConfig]
    seed: int = 0

    @property
    def active_ports(self) -> list[PortConfig]:
        return [p for p in self.ports if p.active]

    def states(self, device: DeviceConfig) -> dict[int, GeneratorState]:
        seeds = np.random.SeedSequence(self.seed).spawn(MAX_PORTS)
        return {p.port: GeneratorState.create(p, device, seeds[p.port])
                for p in self.active_ports}


def configure_scale(ports_active: int, template: PortConfig | None = None,
                    seed: int = 0) -> Workload:
    """Workload with ports ``0..ports_active-1`` generating traffic."""
    if not 1 <= ports_active <= MAX_PORTS:
        raise ConfigurationError(f"active ports must be in 1..{MAX_PORTS}, got {ports_active}")
    template = template or PortConfig()
    ports = [replace(template, port=i, active=i < ports_active) for i in range(MAX_PORTS)]
    return Workload(ports, seed)


@dataclass(frozen=True)
class StreamCommand:
    address: int
    kind: Kind = Kind.READ
    payload: int = 128


@dataclass
class StreamBatch:
    commands: list[StreamCommand]
    port: int = 0

    def __post_init__(self):
        for cmd in self.commands:
            check_payload(cmd.payload, allow_zero=False)

    @classmethod
    def spread(cls, count: int, payload: int, start: int = 0x46300000,
               stride: int = 0x80, port: int = 0) -> "StreamBatch":
        """Reads spread across vaults, the layout used for low-load latency."""
        return cls([StreamCommand(start + i * stride, Kind.READ, payload)
                    for i in range(count)], port)


@dataclass
class StreamResult:
    latencies: list[float]

    @property
    def min(self) -> float:
        return min(self.latencies)

    @property
    def max(self) -> float:
        return max(self.latencies)

    @property
    def avg(self) -> float:
        return sum(self.latencies) / len(self.latencies)


def run_stream(batch: StreamBatch | Sequence[StreamCommand], device: DeviceConfig | None = None,
               timing=None) -> StreamResult:
    """Issue ``batch`` back to back from one port and collect read latencies."""
    from .simulator import simulate_stream

    if not isinstance(batch, StreamBatch):
        batch = StreamBatch(list(batch))
    if not batch.commands:
        raise ConfigurationError("stream batch is empty")
    return StreamResult(simulate_stream(batch, device=device, timing=timing))
