"""Structural hierarchy of an HMC device and its low-order-interleaved address map."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from importlib import resources
from typing import Iterable, NamedTuple

from .errors import AddressRangeError, ConfigurationError

ADDRESS_BITS = 34
ADDRESS_MASK = (1 << ADDRESS_BITS) - 1
FLIT_BYTES = 16
MAX_BLOCK_SIZES = (16, 32, 64, 128)


def _log2(value: int, name: str) -> int:
    if value <= 0 or value & (value - 1):
        raise ConfigurationError(f"{name} must be a power of two, got {value}")
    return value.bit_length() - 1


@dataclass(frozen=True)
class DeviceConfig:
    """Structural and interface parameters of one HMC generation.

    Sizes are in bytes except ``layer_size`` which is in bits, as the
    datasheets quote it.
    """

    generation: str
    dram_layers: int
    layer_size: int
    quadrants: int
    vaults: int
    vaults_per_quadrant: int
    partitions_per_layer: int
    banks_per_partition: int
    bank_size: int
    partition_size: int
    links: int = 2
    lanes_per_link: int = 8
    lane_rate: float = 15.0
    max_block: int = 128
    page_size: int = 256
    dram_bus_granularity: int = 32

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("dram_layers", "layer_size", "quadrants", "vaults",
                     "vaults_per_quadrant", "partitions_per_layer",
                     "banks_per_partition", "bank_size", "partition_size",
                     "links", "lanes_per_link"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.max_block not in MAX_BLOCK_SIZES:
            raise ConfigurationError(
                f"max_block must be one of {MAX_BLOCK_SIZES}, got {self.max_block}")
        if self.vaults != self.quadrants * self.vaults_per_quadrant:
            raise ConfigurationError("vaults != quadrants * vaults_per_quadrant")
        if self.partitions_per_layer != self.vaults:
            raise ConfigurationError("each vault owns one partition per layer")
        if self.partition_size != self.banks_per_partition * self.bank_size:
            raise ConfigurationError("partition_size != banks_per_partition * bank_size")
        if self.dram_layers * self.layer_size // 8 != self.capacity:
            raise ConfigurationError("layer capacity does not match bank capacity")
        _log2(self.vaults, "vaults")
        _log2(self.banks_per_vault, "banks_per_vault")
        _log2(self.capacity, "capacity")
        if self.capacity > 1 << ADDRESS_BITS:
            raise ConfigurationError("capacity exceeds the 34-bit address field")

    @property
    def banks_per_vault(self) -> int:
        return self.dram_layers * self.banks_per_partition

    @property
    def capacity(self) -> int:
        return self.vaults * self.banks_per_vault * self.bank_size

    @property
    def address_bits(self) -> int:
        return self.capacity.bit_length() - 1

    @property
    def decoded_bits(self) -> int:
        """Low address bits the device looks at; HMC 1.x ignores bits 32 and 33."""
        return max(ADDRESS_BITS - 2, self.address_bits)

    @property
    def block_bits(self) -> int:
        return _log2(self.max_block, "max_block")

    @property
    def vault_bits(self) -> int:
        return _log2(self.vaults, "vaults")

    @property
    def bank_bits(self) -> int:
        return _log2(self.banks_per_vault, "banks_per_vault")

    @property
    def vault_shift(self) -> int:
        return self.block_bits

    @property
    def bank_shift(self) -> int:
        return self.block_bits + self.vault_bits

    @property
    def row_shift(self) -> int:
        return self.block_bits + self.vault_bits + self.bank_bits

    def with_max_block(self, max_block: int) -> "DeviceConfig":
        data = asdict(self)
        data["max_block"] = max_block
        return DeviceConfig(**data)


class DecodedAddress(NamedTuple):
    quadrant: int
    vault: int
    bank: int
    dram_row: int
    byte_in_block: int


@dataclass(frozen=True)
class AddressFilter:
    """Mask/anti-mask pair: ``mask`` zero bits force 0, ``anti_mask`` one bits force 1."""

    mask: int = ADDRESS_MASK
    anti_mask: int = 0

    def __post_init__(self):
        if not 0 <= self.mask <= ADDRESS_MASK or not 0 <= self.anti_mask <= ADDRESS_MASK:
            raise ConfigurationError("mask and anti-mask must fit in 34 bits")
        if ~self.mask & self.anti_mask & ADDRESS_MASK:
            raise ConfigurationError(
                f"mask {self.mask:#x} and anti-mask {self.anti_mask:#x} force "
                f"bits {~self.mask & self.anti_mask & ADDRESS_MASK:#x} both ways")

    @classmethod
    def from_registers(cls, mask: int, anti_mask: int = 0) -> "AddressFilter":
        """Build from 32-bit GUPS register values; the ignored top bits pass through.

        The registers apply as ``(addr & mask) | anti_mask``, so anti-mask bits are
        folded into the mask: the result is identical and no bit is forced both ways.
        """
        if mask <= 0xFFFFFFFF:
            mask |= ADDRESS_MASK & ~0xFFFFFFFF
        return cls(mask | anti_mask, anti_mask)

    @property
    def is_identity(self) -> bool:
        return self.mask == ADDRESS_MASK and self.anti_mask == 0


IDENTITY_FILTER = AddressFilter()


def bank_count(config: DeviceConfig) -> int:
    return config.dram_layers * config.partitions_per_layer * config.banks_per_partition


def decode(config: DeviceConfig, address: int) -> DecodedAddress:
    """Split a 34-bit address into vault, bank, row and block offset.

    Bits above ``config.decoded_bits`` are dropped before the range check.
    """
    if address < 0 or address > ADDRESS_MASK:
        raise AddressRangeError(f"address {address:#x} is not a 34-bit value")
    address &= (1 << config.decoded_bits) - 1
    if address >= config.capacity:
        raise AddressRangeError(
            f"address {address:#x} beyond {config.generation} capacity {config.capacity:#x}")
    vault = (address >> config.vault_shift) & (config.vaults - 1)
    bank = (address >> config.bank_shift) & (config.banks_per_vault - 1)
    return DecodedAddress(
        quadrant=vault // config.vaults_per_quadrant,
        vault=vault,
        bank=bank,
        dram_row=address >> config.row_shift,
        byte_in_block=address & (config.max_block - 1),
    )


def encode(config: DeviceConfig, decoded: DecodedAddress) -> int:
    if not 0 <= decoded.vault < config.vaults:
        raise AddressRangeError(f"vault {decoded.vault} out of range")
    if not 0 <= decoded.bank < config.banks_per_vault:
        raise AddressRangeError(f"bank {decoded.bank} out of range")
    if not 0 <= decoded.byte_in_block < config.max_block:
        raise AddressRangeError(f"offset {decoded.byte_in_block} out of range")
    address = (decoded.dram_row << config.row_shift
               | decoded.bank << config.bank_shift
               | decoded.vault << config.vault_shift
               | decoded.byte_in_block)
    if not 0 <= address < config.capacity:
        raise AddressRangeError(f"row {decoded.dram_row} out of range")
    return address


def apply_filter(filter: AddressFilter, raw_address: int) -> int:
    return (raw_address & filter.mask) | filter.anti_mask


def blp_footprint(config: DeviceConfig, addresses: Iterable[int]) -> tuple[int, int, int]:
    """Distinct (vaults, banks, quadrants) touched; banks are counted device-wide."""
    vaults, banks, quadrants = set(), set(), set()
    for address in addresses:
        d = decode(config, address)
        vaults.add(d.vault)
        banks.add((d.vault, d.bank))
        quadrants.add(d.quadrant)
    return len(vaults), len(banks), len(quadrants)


def link_for_quadrant(config: DeviceConfig, quadrant: int) -> int:
    """External link local to ``quadrant``.

    With fewer links than quadrants each link serves a contiguous group.
    """
    if config.links < config.quadrants:
        return quadrant * config.links // config.quadrants
    return quadrant % config.links


def _preset_data() -> dict:
    text = resources.files("hmcsim.data").joinpath("presets.json").read_text()
    return json.loads(text)


def load_presets(path: str | None = None) -> dict[str, DeviceConfig]:
    """Device presets keyed by name, from the packaged table or a JSON file."""
    if path is None:
        data = _preset_data()
    else:
        with open(path) as fh:
            data = json.load(fh)
    return {name: DeviceConfig(generation=name, **fields)
            for name, fields in data["devices"].items()}


def device_preset(name: str) -> DeviceConfig:
    presets = load_presets()
    try:
        return presets[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown device {name!r}; choose from {sorted(presets)}") from None
