"""Packet-level HMC 1.1 simulator with GUPS workloads and thermal/power models."""

from .geometry import DeviceConfig, AddressFilter, decode, encode, apply_filter, device_preset
from .harness import ExperimentSpec, run_experiment, summarize
from .protocol import LinkConfig, RequestType, peak_bandwidth
from .records import ExperimentRecord, read_csv, write_csv
from .simulator import PipelineTiming, Sampling, simulate
from .workload import PortConfig, configure_scale

__all__ = [
    "AddressFilter", "DeviceConfig", "ExperimentRecord", "ExperimentSpec", "LinkConfig",
    "PipelineTiming", "PortConfig", "RequestType", "Sampling", "apply_filter",
    "configure_scale", "decode", "device_preset", "encode", "peak_bandwidth", "read_csv",
    "run_experiment", "simulate", "summarize", "write_csv",
]
__version__ = "0.1.0"
