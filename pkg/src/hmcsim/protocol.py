"""Flit arithmetic, link bandwidth and raw-byte accounting for the packet interface."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

from .errors import ConfigurationError, InvalidSizeError
from .geometry import FLIT_BYTES

PAYLOAD_SIZES = tuple(range(16, 129, 16))
LANE_RATES = (10.0, 12.5, 15.0)


class RequestType(enum.Enum):
    READ_ONLY = "ro"
    WRITE_ONLY = "wo"
    READ_MODIFY_WRITE = "rw"

    @property
    def has_writes(self) -> bool:
        return self is not RequestType.READ_ONLY

    @classmethod
    def parse(cls, text: str) -> "RequestType":
        try:
            return cls(text.lower())
        except ValueError:
            return cls[text.upper()]


class Kind(enum.Enum):
    READ = "read"
    WRITE = "write"


class Direction(enum.Enum):
    REQUEST = "request"
    RESPONSE = "response"


def check_payload(payload: int, allow_zero: bool = True) -> None:
    if payload == 0 and allow_zero:
        return
    if payload not in PAYLOAD_SIZES:
        raise InvalidSizeError(
            f"payload must be a multiple of {FLIT_BYTES} B up to 128 B, got {payload}")


def carries_data(kind: Kind, direction: Direction) -> bool:
    return (kind is Kind.READ) == (direction is Direction.RESPONSE)


def flits_for(kind: Kind, direction: Direction, payload: int) -> int:
    """Packet length in flits for an access of ``payload`` bytes.

    Read requests and write responses are header/tail only.
    """
    check_payload(payload)
    if not carries_data(kind, direction):
        return 1
    return payload // FLIT_BYTES + 1


@dataclass
class Packet:
    direction: Direction
    kind: Kind
    payload: int
    tag: int
    address: int = 0
    port: int = 0
    stages: dict[str, int] = field(default_factory=dict)
    access: int = 0  # bytes moved by the whole access; a read request asks for this many
    vault: int = -1
    bank: int = -1

    def __post_init__(self):
        check_payload(self.payload)
        if not self.access:
            self.access = self.payload
        if not carries_data(self.kind, self.direction) and self.payload:
            raise InvalidSizeError(
                f"{self.kind.value} {self.direction.value} carries no data")

    @property
    def flits(self) -> int:
        return self.payload // FLIT_BYTES + 1

    @property
    def size(self) -> int:
        return self.flits * FLIT_BYTES


@dataclass(frozen=True)
class LinkConfig:
    links: int = 2
    lanes_per_link: int = 8
    lane_rate: float = 15.0
    full_duplex: bool = True

    def __post_init__(self):
        if self.links < 1:
            raise ConfigurationError("at least one link is required")
        if self.lanes_per_link not in (8, 16):
            raise ConfigurationError("lanes_per_link must be 8 (half) or 16 (full width)")
        if float(self.lane_rate) not in LANE_RATES:
            raise ConfigurationError(f"lane_rate must be one of {LANE_RATES} Gbps")

    @classmethod
    def for_device(cls, device) -> "LinkConfig":
        return cls(device.links, device.lanes_per_link, device.lane_rate)

    @property
    def direction_bytes_per_second(self) -> float:
        """Raw capacity of one direction of one link."""
        return self.lanes_per_link * self.lane_rate * 1e9 / 8


def peak_bandwidth(link: LinkConfig) -> float:
    """Aggregate raw link bandwidth in bytes/second."""
    duplex = 2 if link.full_duplex else 1
    return link.links * link.lanes_per_link * link.lane_rate * 1e9 * duplex / 8


def effective_fraction(payload: int) -> float:
    check_payload(payload)
    if payload == 0:
        return 0.0
    return payload / (payload + FLIT_BYTES)


def access_flits(request_type: RequestType, payload: int) -> tuple[int, int]:
    """(request-direction, response-direction) flits for one access."""
    check_payload(payload, allow_zero=False)
    data = payload // FLIT_BYTES + 1
    if request_type is RequestType.READ_ONLY:
        return 1, data
    if request_type is RequestType.WRITE_ONLY:
        return data, 1
    return 1 + data, data + 1


def link_bytes_by_direction(counts: Mapping[tuple[RequestType, int], int]) -> tuple[int, int]:
    up = down = 0
    for (request_type, payload), n in counts.items():
        if n < 0:
            raise ValueError("tallies must be nonnegative")
        req, resp = access_flits(request_type, payload)
        up += n * req * FLIT_BYTES
        down += n * resp * FLIT_BYTES
    return up, down


def raw_bytes_on_links(counts: Mapping[tuple[RequestType, int], int]) -> int:
    """Bytes moved over both link directions, headers and tails included.

    ``counts`` maps (request type, payload bytes) to completed accesses; an
    rw access contributes its read pair and its write pair.
    """
    up, down = link_bytes_by_direction(counts)
    return up + down
