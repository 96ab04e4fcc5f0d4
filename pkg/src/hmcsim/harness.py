"""Experiment families E1-E9, summaries and reference checks."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
import random
from dataclasses import dataclass, field
from importlib import resources
from statistics import fmean
from typing import Callable, Iterable, Sequence

from .errors import ConfigurationError
from .geometry import AddressFilter, DeviceConfig, device_preset
from .protocol import LinkConfig, RequestType, effective_fraction
from .records import ExperimentRecord
from .simulator import DEFAULT_TIMING, PipelineTiming, Sampling, littles_law, simulate
from .thermal_power import (DEFAULT_POWER, DEFAULT_THERMAL, DeviceState, Status,
                            cooling_power_required, cooling_preset, fit_line,
                            steady_temperature, system_power)
from .workload import (MAX_PORTS, Addressing, PortConfig, StreamBatch, configure_scale,
                       run_stream)

log = logging.getLogger(__name__)

EXPERIMENTS = tuple(f"E{i}" for i in range(1, 10))
BANDWIDTH_DURATION = 20.0
THERMAL_DURATION = 200.0

# Targeted access patterns as 32-bit mask registers (128 B max block).
PATTERNS = {
    "16 vaults": 0xFFFFFFFF,
    "8 vaults": 0xFFFFFBFF,
    "4 vaults": 0xFFFFF9FF,
    "2 vaults": 0xFFFFF97F,
    "1 vault": 0xFFFFF87F,
    "8 banks": 0xFFFFB87F,
    "4 banks": 0xFFFF987F,
    "2 banks": 0xFFFF887F,
    "1 bank": 0xFFFF807F,
}
ALL_TYPES = (RequestType.READ_ONLY, RequestType.WRITE_ONLY, RequestType.READ_MODIFY_WRITE)
STREAM_ADDRESS = 0x46300000
STREAM_STRIDE = 0x80


def e1_mask(shift: int) -> int:
    """Eight-bit zero window sliding down from bits 24-31 (shift 0) to bits 0-7 (shift 24)."""
    if not 0 <= shift <= 24:
        raise ConfigurationError("mask shift must be in 0..24")
    return ~(0xFF000000 >> shift) & 0xFFFFFFFF


def e1_label(shift: int) -> str:
    hi = 31 - shift
    return f"bits {hi - 7}-{hi}"


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str
    device: str = "hmc-1.1-4GB"
    cooling: str = "Cfg2"
    request_types: tuple = ()
    payloads: tuple = ()
    ports: tuple = ()
    patterns: tuple = ()
    custom_filter: AddressFilter | None = None
    addressing: tuple = ()
    linear_step: int | None = None
    stream_lengths: tuple = tuple(range(2, 29))
    seed: int = 0
    duration: float | None = None
    placements: int = 8
    exhaustive: bool = False
    target_temperature: float = 75.0
    sampling: Sampling = Sampling()
    timing: PipelineTiming = DEFAULT_TIMING

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"experiment must be one of {EXPERIMENTS}")
        for p in self.ports:
            if not 1 <= p <= MAX_PORTS:
                raise ConfigurationError(f"active ports must be in 1..{MAX_PORTS}, got {p}")
        for name in self.patterns:
            if name not in PATTERNS:
                raise ConfigurationError(f"unknown pattern {name!r}")
        if self.placements < 1:
            raise ConfigurationError("placements must be at least 1")
        if self.duration is not None and self.duration <= 0:
            raise ConfigurationError("duration must be positive")
        cooling_preset(self.cooling)
        device_preset(self.device)

    @property
    def run_duration(self) -> float:
        if self.duration is not None:
            return self.duration
        return THERMAL_DURATION if self.experiment in ("E4", "E5") else BANDWIDTH_DURATION

    def axis(self, name: str, default):
        value = getattr(self, name)
        return tuple(value) if value else tuple(default)


def placements(mask: int, count: int, seed: int, device: DeviceConfig,
               exhaustive: bool = False) -> list[int]:
    """Anti-masks that move a targeted pattern onto other vaults/banks.

    The first placement is always the canonical one (anti-mask 0).
    """
    lo, hi = device.vault_shift, device.row_shift
    free = [b for b in range(lo, hi) if not mask >> b & 1]
    every = 1 << len(free)

    def value(k: int) -> int:
        return sum(1 << free[i] for i in range(len(free)) if k >> i & 1)

    if exhaustive or count >= every:
        return [value(k) for k in range(every)]
    rng = random.Random(seed)
    picks = [0] + rng.sample(range(1, every), count - 1)
    return [value(k) for k in picks]


def _average(records: Sequence[ExperimentRecord]) -> ExperimentRecord:
    first = records[0]
    if len(records) == 1:
        return first

    def mean(name):
        vals = [getattr(r, name) for r in records]
        return fmean(vals)

    util = tuple(round(fmean(col), 6) for col in zip(*(r.vault_utilization for r in records)))
    return dataclasses.replace(
        first,
        anti_mask=0,
        accesses=round(mean("accesses")),
        raw_bytes=round(mean("raw_bytes")),
        bandwidth_gbs=mean("bandwidth_gbs"),
        mrps=mean("mrps"),
        latency_min_ns=min(r.latency_min_ns for r in records),
        latency_avg_ns=mean("latency_avg_ns"),
        latency_max_ns=max(r.latency_max_ns for r in records),
        residence_ns=mean("residence_ns"),
        admitted_rate=mean("admitted_rate"),
        littles_bytes=mean("littles_bytes"),
        vault_utilization=util,
    )


class Runner:
    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.device = device_preset(spec.device)
        self.link = LinkConfig.for_device(self.device)
        self.cooling = cooling_preset(spec.cooling)
        self.state = DeviceState(DEFAULT_THERMAL)
        self.records: list[ExperimentRecord] = []

    def _port(self, rtype: RequestType, payload: int, filt: AddressFilter,
              addressing: Addressing = Addressing.RANDOM) -> PortConfig:
        step = self.spec.linear_step or payload
        return PortConfig(request_type=rtype, payload=payload, filter=filt,
                          addressing=addressing, linear_step=step)

    def measure(self, label: str, rtype: RequestType, payload: int, mask: int,
                ports: int = MAX_PORTS, addressing: Addressing = Addressing.RANDOM,
                spread: bool = True, anti_mask: int = 0, keep: bool = True) -> ExperimentRecord:
        spec = self.spec
        if spread and spec.custom_filter is not None:
            antis = [spec.custom_filter.anti_mask]
            mask = spec.custom_filter.mask
        elif spread:
            antis = placements(mask, spec.placements, spec.seed, self.device, spec.exhaustive)
        else:
            antis = [anti_mask]
        runs = []
        for i, anti in enumerate(antis):
            filt = AddressFilter.from_registers(mask, anti)
            wl = configure_scale(ports, self._port(rtype, payload, filt, addressing),
                                 seed=spec.seed + i)
            runs.append(simulate(self.device, self.link, spec.timing, wl, spec.run_duration,
                                 spec.sampling, experiment=spec.experiment,
                                 point=len(self.records), label=label))
        record = _average(runs)
        return self.add(record) if keep else record

    def add(self, record: ExperimentRecord, cooling=None) -> ExperimentRecord:
        cooling = cooling or self.cooling
        rtype = RequestType.parse(record.request_type)
        bw = record.bandwidth_gbs
        temp = steady_temperature(DEFAULT_THERMAL, cooling, bw, rtype)
        failed = self.state.apply(temp, rtype) is Status.THERMAL_FAILURE
        if failed:
            # recovery: cool down, reset device and host, reinitialize
            self.state.reset()
        req = cooling_power_required(self.spec.target_temperature, bw, rtype)
        record = dataclasses.replace(
            record, point=len(self.records), cooling=cooling.name, temperature_c=temp,
            power_w=system_power(DEFAULT_POWER, bw), cooling_power_w=req.watts, failed=failed)
        self.records.append(record)
        return record


def _types(spec, default=ALL_TYPES):
    return spec.axis("request_types", default)


def _e1(r: Runner):
    payload = r.spec.axis("payloads", (128,))[0]
    for rtype in _types(r.spec):
        for shift in range(25):
            r.measure(e1_label(shift), rtype, payload, e1_mask(shift), spread=False)


def _pattern_grid(r: Runner, types, payloads, patterns, ports=(MAX_PORTS,)):
    for rtype in types:
        for payload in payloads:
            for name in patterns:
                for p in ports:
                    r.measure(name, rtype, payload, PATTERNS[name], ports=p)


def _e2(r):
    _pattern_grid(r, _types(r.spec), r.spec.axis("payloads", (128,)),
                  r.spec.axis("patterns", PATTERNS), r.spec.axis("ports", (MAX_PORTS,)))


def _e3(r):
    _pattern_grid(r, _types(r.spec, (RequestType.READ_ONLY,)),
                  r.spec.axis("payloads", (32, 64, 128)), r.spec.axis("patterns", PATTERNS),
                  r.spec.axis("ports", (MAX_PORTS,)))


def _e4(r: Runner, coolings=("Cfg1", "Cfg2", "Cfg3", "Cfg4")):
    """Bandwidth does not depend on cooling, so each point is simulated once."""
    measured = []
    for rtype in _types(r.spec):
        for name in r.spec.axis("patterns", PATTERNS):
            measured.append(r.measure(name, rtype, r.spec.axis("payloads", (128,))[0],
                                      PATTERNS[name], keep=False))
    for cfg in coolings:
        for rec in measured:
            r.add(rec, cooling_preset(cfg))


def _e5(r):
    _e4(r, coolings=(r.spec.cooling,))


def _e6(r):
    for payload in r.spec.axis("payloads", (32, 64, 128)):
        for mode in r.spec.axis("addressing", (Addressing.RANDOM, Addressing.LINEAR)):
            for name in r.spec.axis("patterns", ("16 vaults",)):
                r.measure(f"{name} {mode.value}", _types(r.spec, (RequestType.READ_ONLY,))[0],
                          payload, PATTERNS[name], addressing=mode)


def _e7(r: Runner):
    spec = r.spec
    ports = spec.axis("ports", range(1, MAX_PORTS + 1))
    for payload in spec.axis("payloads", (16, 32, 64, 128)):
        for n in spec.stream_lengths:
            lat_min, lat_max, avgs = math.inf, -math.inf, []
            for p in ports:
                res = run_stream(StreamBatch.spread(n, payload, STREAM_ADDRESS, STREAM_STRIDE,
                                                    port=p - 1),
                                 r.device, spec.timing)
                lat_min = min(lat_min, res.min)
                lat_max = max(lat_max, res.max)
                avgs.append(res.avg)
            r.add(ExperimentRecord(
                experiment="E7", label=f"stream {n}", device=r.device.generation,
                request_type="ro", payload=payload, ports=len(ports), mask=0xFFFFFFFF,
                seed=spec.seed, duration_s=spec.run_duration, accesses=n,
                latency_min_ns=lat_min, latency_avg_ns=fmean(avgs), latency_max_ns=lat_max))


def _e8(r):
    _pattern_grid(r, _types(r.spec, (RequestType.READ_ONLY,)),
                  r.spec.axis("payloads", (32, 64, 128)), r.spec.axis("patterns", PATTERNS))


def _e9(r):
    _pattern_grid(r, _types(r.spec, (RequestType.READ_ONLY,)),
                  r.spec.axis("payloads", (128,)), r.spec.axis("patterns", PATTERNS),
                  r.spec.axis("ports", range(1, MAX_PORTS + 1)))


_RUNNERS: dict[str, Callable] = {
    "E1": _e1, "E2": _e2, "E3": _e3, "E4": _e4, "E5": _e5,
    "E6": _e6, "E7": _e7, "E8": _e8, "E9": _e9,
}


def run_experiment(spec: ExperimentSpec) -> list[ExperimentRecord]:
    runner = Runner(spec)
    _RUNNERS[spec.experiment](runner)
    return runner.records


# ----- summaries -----

@dataclass
class Fit:
    key: str
    slope: float | None
    intercept: float | None

    @property
    def no_fit(self) -> bool:
        return self.slope is None


@dataclass
class Summary:
    table: str
    fits: list[Fit] = field(default_factory=list)
    littles: dict = field(default_factory=dict)

    def text(self) -> str:
        out = [self.table, ""]
        for f in self.fits:
            if f.no_fit:
                out.append(f"fit {f.key}: no-fit (constant sweep axis)")
            else:
                out.append(f"fit {f.key}: slope {f.slope:.6g} intercept {f.intercept:.6g}")
        for key, est in self.littles.items():
            flag = "" if est.saturated else " (unsaturated estimate)"
            out.append(f"littles {key}: {est.outstanding_bytes:.1f} B{flag}")
        return "\n".join(out) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.3f}"
    return str(v)


def summarize(records: Sequence[ExperimentRecord]) -> Summary:
    if len(records) < 1:
        raise ValueError("nothing to summarize")
    cols = ("experiment", "label", "cooling", "request_type", "payload", "ports",
            "bandwidth_gbs", "mrps", "latency_avg_ns", "temperature_c", "power_w", "failed")
    rows = [cols] + [tuple(_fmt(getattr(r, c)) for c in cols) for r in records]
    widths = [max(len(row[i]) for row in rows) for i in range(len(cols))]
    table = "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip()
                      for row in rows)
    summary = Summary(table)

    groups: dict = {}
    for r in records:
        if r.experiment in ("E4", "E5"):
            groups.setdefault(("temperature", r.cooling, r.request_type), []).append(
                (r.bandwidth_gbs, r.temperature_c))
            groups.setdefault(("power", r.cooling, r.request_type), []).append(
                (r.bandwidth_gbs, r.power_w))
        elif r.experiment == "E9":
            groups.setdefault(("latency", r.label, r.request_type), []).append(
                (r.bandwidth_gbs, r.latency_avg_ns))
    for key, pts in groups.items():
        fit = fit_line([p[0] for p in pts], [p[1] for p in pts])
        name = " ".join(str(k) for k in key)
        summary.fits.append(Fit(name, *(fit or (None, None))))

    series: dict = {}
    for r in records:
        if r.experiment == "E9":
            series.setdefault((r.label, r.payload), []).append(r)
    for (label, payload), recs in series.items():
        recs.sort(key=lambda r: r.ports)
        samples = [(r.residence_ns, r.admitted_rate) for r in recs]
        summary.littles[f"{label} {payload}B"] = littles_law(samples)
    return summary


# ----- reference comparison -----

def load_reference(path: str | None = None) -> list[dict]:
    if path is None:
        text = resources.files("hmcsim.data").joinpath("reference.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)["metrics"]


def _pick(records, experiment, **match):
    out = []
    for r in records:
        if r.experiment != experiment:
            continue
        if all(getattr(r, k) == v for k, v in match.items()):
            out.append(r)
    return out


def _one(records, experiment, **match) -> ExperimentRecord | None:
    found = _pick(records, experiment, **match)
    return found[0] if found else None


def _saturation(records, label):
    for exp in ("E9", "E2", "E8"):
        cands = _pick(records, exp, label=label, request_type="ro", payload=128)
        if cands:
            return max(r.bandwidth_gbs for r in cands)
    return None


def _mrps_ratio(records):
    a = _one(records, "E3", label="16 vaults", payload=32, request_type="ro")
    b = _one(records, "E3", label="16 vaults", payload=128, request_type="ro")
    return a.mrps / b.mrps if a and b else None


def _e1_values(records, rtype):
    return {r.label: r.bandwidth_gbs for r in _pick(records, "E1", request_type=rtype)}


def _e1_argmin_ok(records):
    ok = None
    for rtype in ("ro", "wo", "rw"):
        vals = _e1_values(records, rtype)
        if not vals:
            continue
        low = min(vals.values())
        hits = [k for k, v in vals.items() if v == low]
        ok = (ok is not False) and hits == ["bits 7-14"]
    return None if ok is None else float(ok)


def _e1_drop(records):
    vals = _e1_values(records, "ro")
    if "bits 2-9" not in vals or "bits 3-10" not in vals:
        return None
    return vals["bits 3-10"] / vals["bits 2-9"]


def _rw_wo(records):
    ratios = []
    for name in ("16 vaults", "8 vaults", "4 vaults"):
        rw = _one(records, "E2", label=name, request_type="rw", payload=128)
        wo = _one(records, "E2", label=name, request_type="wo", payload=128)
        if rw and wo:
            ratios.append(rw.bandwidth_gbs / wo.bandwidth_gbs)
    return ratios or None


def _rw_over_ro(records):
    rw = _one(records, "E2", label="16 vaults", request_type="rw", payload=128)
    ro = _one(records, "E2", label="16 vaults", request_type="ro", payload=128)
    return rw.bandwidth_gbs / ro.bandwidth_gbs if rw and ro else None


def _linear_random(records):
    out = []
    for payload in sorted({r.payload for r in _pick(records, "E6")}):
        rnd = _one(records, "E6", label="16 vaults random", payload=payload)
        lin = _one(records, "E6", label="16 vaults linear", payload=payload)
        if rnd and lin:
            out.append((rnd.bandwidth_gbs - lin.bandwidth_gbs) / rnd.bandwidth_gbs)
    return out or None


def _stream(records, payload, n, field_name):
    rec = _one(records, "E7", label=f"stream {n}", payload=payload)
    return getattr(rec, field_name) if rec else None


def _single_latency(records, payload):
    # the first request of any stream is an isolated read
    recs = _pick(records, "E7", payload=payload)
    return min(r.latency_min_ns for r in recs) if recs else None


def _stream_ratio(records):
    a = _stream(records, 128, 28, "latency_avg_ns")
    b = _stream(records, 16, 28, "latency_avg_ns")
    return a / b if a and b else None


def _min_flat(records):
    vals = [r.latency_min_ns for r in _pick(records, "E7", payload=128)]
    return (max(vals) - min(vals)) / min(vals) if vals else None


def _high_low(records):
    a = _one(records, "E8", label="1 bank", payload=128)
    b = _one(records, "E8", label="16 vaults", payload=32)
    return a.latency_avg_ns / b.latency_avg_ns if a and b else None


def _high_over_low(records):
    high = [r.latency_avg_ns for r in _pick(records, "E8")]
    low = [r.latency_avg_ns for r in _pick(records, "E7")]
    return fmean(high) / fmean(low) if high and low else None


def _littles(records, label):
    recs = sorted(_pick(records, "E9", label=label, payload=128), key=lambda r: r.ports)
    if not recs:
        return None
    return littles_law([(r.residence_ns, r.admitted_rate) for r in recs]).outstanding_bytes


def _littles_half(records):
    four, two = _littles(records, "4 banks"), _littles(records, "2 banks")
    return two / four if four and two else None


def _temp_delta(records, rtype):
    # model-anchored: evaluate the fitted line over 5 -> 20 GB/s
    pts = [(r.bandwidth_gbs, r.temperature_c) for r in records
           if r.experiment in ("E4", "E5") and r.cooling == "Cfg2" and r.request_type == rtype]
    fit = fit_line(*zip(*pts)) if len(pts) >= 2 else None
    return fit[0] * 15.0 if fit else None


def _power_delta(records):
    pts = [(r.bandwidth_gbs, r.power_w) for r in records if r.experiment in ("E4", "E5")]
    fit = fit_line(*zip(*pts)) if len(pts) >= 2 else None
    return fit[0] * 15.0 if fit else None


def _cooling_delta(records):
    pts = [(r.bandwidth_gbs, r.cooling_power_w) for r in records if r.experiment in ("E4", "E5")]
    fit = fit_line(*zip(*pts)) if len(pts) >= 2 else None
    return fit[0] * 16.0 if fit else None


def _thermal_failure(records, rtype):
    recs = _pick(records, "E4", cooling="Cfg1", label="16 vaults", request_type=rtype)
    return float(recs[0].failed) if recs else None


METRICS: dict[str, Callable] = {
    "effective_fraction_128": lambda recs: effective_fraction(128),
    "effective_fraction_16": lambda recs: effective_fraction(16),
    "vault_ceiling_1_vault": lambda recs: _saturation(recs, "1 vault"),
    "vault_ceiling_2_vaults": lambda recs: _saturation(recs, "2 vaults"),
    "mask_minimum_bits_7_14": _e1_argmin_ok,
    "mask_drop_3_10_over_2_9": _e1_drop,
    "rw_over_wo": _rw_wo,
    "rw_over_ro": _rw_over_ro,
    "mrps_ratio_32_128": _mrps_ratio,
    "linear_random_gap": _linear_random,
    "low_load_128": lambda recs: _single_latency(recs, 128),
    "low_load_16": lambda recs: _single_latency(recs, 16),
    "stream_ratio_28": _stream_ratio,
    "min_latency_spread": _min_flat,
    "one_bank_over_16_vaults": _high_low,
    "high_over_low_load": _high_over_low,
    "littles_4_banks": lambda recs: _littles(recs, "4 banks"),
    "littles_2_over_4": _littles_half,
    "temperature_rise_ro": lambda recs: _temp_delta(recs, "ro"),
    "temperature_rise_rw": lambda recs: _temp_delta(recs, "rw"),
    "device_power_rise": _power_delta,
    "cooling_power_per_16": _cooling_delta,
    "thermal_failure_wo_cfg1": lambda recs: _thermal_failure(recs, "wo"),
    "thermal_failure_ro_cfg1": lambda recs: _thermal_failure(recs, "ro"),
}


@dataclass
class Report:
    lines: list[str]
    failures: int
    skipped: int

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def compare_to_reference(records: Sequence[ExperimentRecord],
                         reference: Iterable[dict] | None = None) -> Report:
    reference = load_reference() if reference is None else reference
    lines, failures, skipped = [], 0, 0
    for entry in reference:
        name = entry["metric"]
        fn = METRICS.get(name)
        value = fn(records) if fn else None
        if value is None:
            log.info("no data for reference metric %s; skipped", name)
            lines.append(f"SKIP {name} [{entry['source']}]: warning, no matching records")
            skipped += 1
            continue
        values = value if isinstance(value, list) else [value]
        ok = all(entry["low"] <= v <= entry["high"] for v in values)
        failures += not ok
        shown = ", ".join(f"{v:.4g}" for v in values)
        lines.append(f"{'PASS' if ok else 'FAIL'} {name} [{entry['source']}]: "
                     f"{shown} in [{entry['low']}, {entry['high']}]")
    return Report(lines, failures, skipped)
