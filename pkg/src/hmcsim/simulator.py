"""Discrete-event model of the controller pipeline, links, vaults and DRAM banks.

Time is kept in integer picoseconds. A read travels

    port -> arbiter/TX slot -> TX pipeline -> hop -> vault FIFO -> bank queue
    -> DRAM -> hop -> RX slot -> RX pipeline -> port delivery -> retire

and every boundary is stamped on the packet, so the stage residencies
telescope to the end-to-end latency.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ConfigurationError
from .geometry import DecodedAddress, DeviceConfig, decode, device_preset, link_for_quadrant
from .protocol import (FLIT_BYTES, Direction, Kind, LinkConfig, Packet, RequestType,
                       raw_bytes_on_links)
from .records import ExperimentRecord
from .workload import (MAX_PORTS, STALLED, GeneratorState, StreamBatch, Workload,
                       acknowledge_write, next_request, retire)

PS_PER_NS = 1000
PS_PER_S = 10 ** 12
# A window of ~10^4 completions cannot resolve finer than ~1e-4 relative;
# report bandwidth at 10 MB/s so saturated runs do not differ by edge noise.
BANDWIDTH_DECIMALS = 2


@dataclass(frozen=True)
class PipelineTiming:
    """Controller, link and DRAM timing. Cycle counts are controller cycles."""

    controller_clock: float = 187.5  # MHz
    port_interface: int = 2
    flits_to_parallel: int = 10
    arbiter: tuple[int, int] = (2, 9)
    seq_flowctl_crc: int = 10
    serdes_convert_serialize: int = 10
    tx_wire_128B: int = 15
    tx_total_max: int = 54
    rx_total: float = 260.0  # ns
    infra_total: float = 547.0  # ns
    flits_per_slot: int = 5
    rx_flit_ps: int = 3200
    port_flit_ps: int = 2667
    hop_ps: int = 42057
    remote_penalty: int = 1  # cycles
    dram_beat_ps: int = 3200
    row_overhead_ps: int = 29300
    vault_bandwidth: float = 10e9  # bytes/s
    bank_queue_bytes: int = 94
    flow_control_flits: int = 136  # outstanding write-data flits per link
    credit_at_admit: bool = True  # write credits return on bank admission, else on response

    def __post_init__(self):
        if self.controller_clock <= 0:
            raise ConfigurationError("controller clock must be positive")
        lo, hi = self.arbiter
        if not 1 <= lo <= hi:
            raise ConfigurationError("arbiter range must satisfy 1 <= min <= max")
        if self.bank_queue_bytes < FLIT_BYTES:
            raise ConfigurationError("bank queue must hold at least one request flit")
        if self.flow_control_flits < 1 or self.flits_per_slot < 1:
            raise ConfigurationError("flow control threshold and slot width must be positive")
        if self.vault_bandwidth <= 0:
            raise ConfigurationError("vault bandwidth must be positive")

    @property
    def cycle_ps(self) -> int:
        return round(1e6 / self.controller_clock)

    @property
    def tx_front_ps(self) -> int:
        """Port interface plus flit-to-parallel conversion."""
        return (self.port_interface + self.flits_to_parallel) * self.cycle_ps

    @property
    def tx_back_ps(self) -> int:
        """Sequencing/CRC, SerDes and wire after the arbiter."""
        return (self.seq_flowctl_crc + self.serdes_convert_serialize
                + self.tx_wire_128B) * self.cycle_ps

    @property
    def tx_max_ns(self) -> float:
        return self.tx_total_max * self.cycle_ps / PS_PER_NS

    def slot_ps(self, flits: int) -> int:
        """Link datapath occupancy; header-only packets pack several per cycle."""
        if flits == 1:
            return self.cycle_ps // self.flits_per_slot
        return -(-flits // self.flits_per_slot) * self.cycle_ps

    def bus_ps(self, raw_bytes: int) -> int:
        return round(raw_bytes * PS_PER_S / self.vault_bandwidth)


DEFAULT_TIMING = PipelineTiming()


@dataclass
class VaultModel:
    """One vault controller: per-bank byte-bounded queues fed from per-bank
    overflow lines, and a data bus shared by all banks."""

    vault: int
    banks: int
    timing: PipelineTiming = DEFAULT_TIMING
    waiting: list = field(default_factory=list)
    queues: list = field(default_factory=list)
    occupancy: list = field(default_factory=list)
    busy: list = field(default_factory=list)
    bus_free: int = 0
    kick_pending: bool = False
    bus_busy_ps: int = 0

    def __post_init__(self):
        self.waiting = [deque() for _ in range(self.banks)]
        self.queues = [deque() for _ in range(self.banks)]
        self.occupancy = [0] * self.banks
        self.busy = [False] * self.banks

    def admit(self, bank: int, now: int) -> list:
        """Move waiting requests into the bank queue while it has room; return them."""
        line, queue, cap = self.waiting[bank], self.queues[bank], self.timing.bank_queue_bytes
        moved = []
        while line and self.occupancy[bank] < cap:
            pkt = line.popleft()
            self.occupancy[bank] += pkt.size
            pkt.stages["bank_admit"] = now
            queue.append(pkt)
            moved.append(pkt)
        return moved

    def next_bank(self) -> int | None:
        """Idle bank whose queue head has waited longest."""
        best, best_t = None, None
        for b in range(self.banks):
            q = self.queues[b]
            if q and not self.busy[b]:
                t = q[0].stages["bank_admit"]
                if best is None or t < best_t:
                    best, best_t = b, t
        return best


def dram_service(vault: VaultModel, request: Packet, now: int) -> int:
    """Start ``request`` at its bank; return its completion time.

    Closed page: every access pays the row overhead plus one beat per 32 B.
    """
    t = vault.timing
    beats = max(1, -(-request.access // 32))
    return now + t.row_overhead_ps + beats * t.dram_beat_ps


def route(device: DeviceConfig, decoded: DecodedAddress, ingress_link: int,
          timing: PipelineTiming = DEFAULT_TIMING) -> tuple[int, int]:
    """(vault, hop latency in ps) from an ingress link to the decoded vault."""
    hop = timing.hop_ps
    if link_for_quadrant(device, decoded.quadrant) != ingress_link:
        hop += timing.remote_penalty * timing.cycle_ps
    return decoded.vault, hop


def port_link(port: int, links: int) -> int:
    return port * links // MAX_PORTS


@dataclass(frozen=True)
class Sampling:
    """Warm-up and measured window, counted in completed requests."""

    warmup: int = 2000
    window: int = 20000
    max_time_ps: int = 10 ** 11

    def __post_init__(self):
        if self.warmup < 0 or self.window < 1:
            raise ConfigurationError("sampling needs warmup >= 0 and window >= 1")


@dataclass
class LittleEstimate:
    outstanding_bytes: float
    saturated: bool
    residence_ns: float = float("nan")
    input_rate: float = float("nan")  # bytes per ns


def littles_law(samples: Sequence[tuple[float, float]], flat: float = 0.05) -> LittleEstimate:
    """Outstanding bytes from (residence ns, admitted bytes/ns) samples ordered by load.

    The last sample is used; it counts as saturated when throughput grew by
    less than ``flat`` over the preceding sample.
    """
    if not samples:
        raise ValueError("no samples")
    residence, rate = samples[-1]
    saturated = len(samples) >= 2 and samples[-2][1] > 0 and \
        rate <= samples[-2][1] * (1 + flat)
    return LittleEstimate(residence * rate, saturated, residence, rate)


_PORT_TRY, _VAULT_ARRIVE, _VAULT_KICK, _DRAM_DONE, _RETIRE, _WRITE_DONE = range(6)


class EventQueue:
    """Min-heap on (time, insertion order)."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0

    def push(self, time: int, kind: int, a=None, b=None) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, a, b))

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self):
        return len(self._heap)


class Simulator:
    def __init__(self, device: DeviceConfig, link: LinkConfig | None = None,
                 timing: PipelineTiming = DEFAULT_TIMING, trace: bool = False):
        self.device = device
        self.link = link or LinkConfig.for_device(device)
        self.timing = timing
        self.events = EventQueue()
        self.now = 0
        self.vaults = [VaultModel(v, device.banks_per_vault, timing)
                       for v in range(device.vaults)]
        n = self.link.links
        self.tx_free = [0] * n
        self.rx_free = [0] * n
        self.fc = [0] * n
        self.fc_waiters: list[set] = [set() for _ in range(n)]
        self.port_free = [0] * MAX_PORTS
        self.port_next = [0] * MAX_PORTS
        self.scheduled = [False] * MAX_PORTS
        self.ports: dict[int, tuple] = {}
        self.scripts: dict[int, deque] = {}
        self.issued = 0
        self.completed = 0
        self.trace = [] if trace else None
        self._decoded: dict[int, DecodedAddress] = {}
        self._reset_window(0)
        self.measuring = False

    # ----- bookkeeping -----
    def _reset_window(self, now: int) -> None:
        self.window_start = now
        self.tally: dict = {}
        self.packets_done = 0
        self.res_bytes = 0
        self.res_sum = 0
        self.res_count = 0
        self.admitted_bytes = 0
        for v in self.vaults:
            v.bus_busy_ps = 0

    @property
    def in_flight(self) -> int:
        return self.issued - self.completed

    def add_port(self, cfg, state: GeneratorState) -> None:
        self.ports[cfg.port] = (cfg, state, port_link(cfg.port, self.link.links))
        self._wake(cfg.port, 0)

    def _wake(self, port: int, now: int) -> None:
        if not self.scheduled[port]:
            self.scheduled[port] = True
            self.events.push(max(now, self.port_next[port]), _PORT_TRY, port)

    # ----- request path -----
    def _try_port(self, port: int, now: int) -> None:
        self.scheduled[port] = False
        cfg, state, link = self.ports[port]
        script = self.scripts.get(port)
        if script is not None:
            if not script:
                return
            cmd = script[0]
            write_next = cmd.kind is Kind.WRITE
            payload = cmd.payload
        else:
            write_next = bool(state.pending_writes) or cfg.request_type is RequestType.WRITE_ONLY
            payload = cfg.payload
        waiters = self.fc_waiters[link]
        if waiters:
            # link is under STOP until a write response drains it
            waiters.add(port)
            return
        if write_next:
            data_flits = payload // FLIT_BYTES
            used = self.fc[link]
            if used and used + data_flits > self.timing.flow_control_flits:
                waiters.add(port)
                return
        if script is not None:
            pkt = self._script_request(state, script, port, now)
        else:
            pkt = next_request(state, cfg, now)
        if pkt is STALLED:
            return
        pkt.access = payload
        self._issue(pkt, link, now)
        self.port_next[port] = now + self.timing.cycle_ps
        self._wake(port, now)

    def _script_request(self, state: GeneratorState, script: deque, port: int, now: int):
        cmd = script[0]
        if cmd.kind is Kind.READ:
            if not state.free_tags:
                return STALLED
            tag = state.free_tags.popleft()
            pkt = Packet(Direction.REQUEST, Kind.READ, 0, tag, cmd.address, port)
            state.in_flight[tag] = (now, cmd.address)
            state.issued += 1
        else:
            tag = state._next_write_tag
            state._next_write_tag += 1
            pkt = Packet(Direction.REQUEST, Kind.WRITE, cmd.payload, tag, cmd.address, port)
            state.writes_issued += 1
        script.popleft()
        pkt.stages["issue"] = now
        return pkt

    def _issue(self, pkt: Packet, link: int, now: int) -> None:
        t = self.timing
        decoded = decode(self.device, pkt.address)
        flits = pkt.flits
        ready = now + t.tx_front_ps
        granted = max(ready, self.tx_free[link])
        slot = t.slot_ps(flits)
        self.tx_free[link] = granted + slot
        arbitrated = granted + max(t.arbiter[0] * t.cycle_ps, slot)
        departed = arbitrated + t.tx_back_ps
        vault, hop = route(self.device, decoded, link, t)
        arrive = departed + hop
        s = pkt.stages
        s["ready"] = ready
        s["granted"] = granted
        s["arbitrated"] = arbitrated
        s["departed"] = departed
        s["vault_arrive"] = arrive
        if pkt.kind is Kind.WRITE:
            self.fc[link] += pkt.payload // FLIT_BYTES
        self.issued += 1
        pkt.vault, pkt.bank = vault, decoded.bank
        self.events.push(arrive, _VAULT_ARRIVE, pkt, decoded.bank)

    # ----- vault and DRAM -----
    def _kick(self, vault: VaultModel, now: int) -> None:
        if vault.bus_free > now:
            if not vault.kick_pending:
                vault.kick_pending = True
                self.events.push(vault.bus_free, _VAULT_KICK, vault)
            return
        bank = vault.next_bank()
        if bank is None:
            return
        pkt = vault.queues[bank][0]
        vault.busy[bank] = True
        resp_flits = pkt.access // FLIT_BYTES + 1 if pkt.kind is Kind.READ else 1
        bus = self.timing.bus_ps((pkt.flits + resp_flits) * FLIT_BYTES)
        vault.bus_free = now + bus
        if self.measuring:
            vault.bus_busy_ps += bus
        pkt.stages["dram_start"] = now
        self.events.push(dram_service(vault, pkt, now), _DRAM_DONE, vault, bank)
        if vault.next_bank() is not None and not vault.kick_pending:
            vault.kick_pending = True
            self.events.push(vault.bus_free, _VAULT_KICK, vault)

    def _dram_done(self, vault: VaultModel, bank: int, now: int) -> None:
        t = self.timing
        pkt = vault.queues[bank].popleft()
        vault.busy[bank] = False
        vault.occupancy[bank] -= pkt.size
        s = pkt.stages
        s["dram_done"] = now
        if self.measuring:
            res = now - s["bank_admit"]
            self.res_sum += res
            self.res_count += 1
            self.res_bytes += res * pkt.size
            self.admitted_bytes += pkt.size
        self._admitted(vault.admit(bank, now), now)
        self._kick(vault, now)

        link = self.ports[pkt.port][2]
        is_read = pkt.kind is Kind.READ
        flits = pkt.access // FLIT_BYTES + 1 if is_read else 1
        at_link = now + t.hop_ps
        rx_start = max(self.rx_free[link], at_link)
        self.rx_free[link] = rx_end = rx_start + t.slot_ps(flits)
        at_ctrl = rx_end + round(t.rx_total * PS_PER_NS) + flits * t.rx_flit_ps
        s["link_rx"] = at_link
        s["rx_start"] = rx_start
        s["rx_end"] = rx_end
        s["controller"] = at_ctrl
        if is_read:
            start = max(self.port_free[pkt.port], at_ctrl)
            self.port_free[pkt.port] = done = start + flits * t.port_flit_ps
            s["port_start"] = start
            s["retire"] = done
            self.events.push(done, _RETIRE, pkt)
        else:
            s["retire"] = at_ctrl
            self.events.push(at_ctrl, _WRITE_DONE, pkt)

    # ----- completions -----
    def _complete(self, pkt: Packet, key, now: int) -> None:
        self.completed += 1
        if self.measuring:
            self.tally[key] = self.tally.get(key, 0) + 1
            self.packets_done += 1
        if self.trace is not None:
            s = pkt.stages
            self.trace.append((pkt.port, pkt.tag, pkt.kind.value, s["issue"], now,
                               pkt.vault, pkt.bank, pkt.access, dict(s)))

    def _retire(self, pkt: Packet, now: int) -> None:
        cfg, state, _ = self.ports[pkt.port]
        retire(state, pkt, now, cfg)
        self._complete(pkt, (RequestType.READ_ONLY, pkt.access), now)
        self._wake(pkt.port, now)

    def _admitted(self, packets: list, now: int) -> None:
        if self.timing.credit_at_admit:
            for pkt in packets:
                if pkt.kind is Kind.WRITE:
                    self._release(pkt, now)

    def _write_done(self, pkt: Packet, now: int) -> None:
        cfg, state, link = self.ports[pkt.port]
        acknowledge_write(state)
        if not self.timing.credit_at_admit:
            self._release(pkt, now)
        self._complete(pkt, (RequestType.WRITE_ONLY, pkt.payload), now)

    def _release(self, pkt: Packet, now: int) -> None:
        link = self.ports[pkt.port][2]
        self.fc[link] -= pkt.payload // FLIT_BYTES
        waiters = self.fc_waiters[link]
        if waiters:
            for p in sorted(waiters):
                self._wake(p, now)
            waiters.clear()

    # ----- main loop -----
    def run(self, until_completed: int | None = None, max_time_ps: int | None = None,
            on_completed=None) -> None:
        ev = self.events
        while len(ev):
            time, _, kind, a, b = ev.pop()
            if max_time_ps is not None and time > max_time_ps:
                break
            self.now = time
            if kind == _PORT_TRY:
                self._try_port(a, time)
            elif kind == _VAULT_ARRIVE:
                vault = self.vaults[a.vault]
                vault.waiting[b].append(a)
                self._admitted(vault.admit(b, time), time)
                self._kick(vault, time)
            elif kind == _VAULT_KICK:
                a.kick_pending = False
                self._kick(a, time)
            elif kind == _DRAM_DONE:
                self._dram_done(a, b, time)
            elif kind == _RETIRE:
                self._retire(a, time)
                if on_completed is not None:
                    on_completed(time)
            else:
                self._write_done(a, time)
                if on_completed is not None:
                    on_completed(time)
            if until_completed is not None and self.completed >= until_completed:
                break


def _pattern_label(workload: Workload) -> tuple:
    p = workload.active_ports[0]
    return p.request_type, p.payload, p.filter, p.addressing


def simulate(device: DeviceConfig, link: LinkConfig | None, timing: PipelineTiming,
             workload: Workload, duration: float = 20.0,
             sampling: Sampling = Sampling(), trace_path: str | None = None,
             experiment: str = "", point: int = 0, label: str = "") -> ExperimentRecord:
    """Run ``workload`` to steady state and measure one window.

    The window's rates are extrapolated to ``duration`` simulated seconds.
    """
    if duration <= 0:
        raise ConfigurationError("duration must be positive")
    active = workload.active_ports
    if not active:
        raise ConfigurationError("workload has no active ports")
    sim = Simulator(device, link, timing, trace=trace_path is not None)
    states = workload.states(device)
    for cfg in active:
        sim.add_port(cfg, states[cfg.port])

    sim.run(until_completed=sampling.warmup, max_time_ps=sampling.max_time_ps)
    for st in states.values():
        st.reset_stats()
    sim._reset_window(sim.now)
    sim.measuring = True
    if sim.trace is not None:
        sim.trace.clear()
    sim.run(until_completed=sampling.warmup + sampling.window,
            max_time_ps=sampling.max_time_ps)
    window_ps = sim.now - sim.window_start
    if window_ps <= 0 or not sim.tally:
        raise ConfigurationError("measurement window recorded no completions")
    window_s = window_ps / PS_PER_S

    raw = raw_bytes_on_links(sim.tally)
    requests = sum(sim.tally.values())
    retired = sum(st.retired for st in states.values())
    lat_sum = sum(st.latency_sum for st in states.values())
    lat_min = min((st.latency_min for st in states.values() if st.retired), default=math.nan)
    lat_max = max((st.latency_max for st in states.values() if st.retired), default=math.nan)
    util = [v.bus_busy_ps / window_ps for v in sim.vaults]
    littles = sim.res_bytes / window_ps
    residence = sim.res_sum / sim.res_count / PS_PER_NS if sim.res_count else math.nan
    rate = sim.admitted_bytes / (window_ps / PS_PER_NS)

    if trace_path is not None:
        write_trace(trace_path, sim.trace)

    first = active[0]
    return ExperimentRecord(
        experiment=experiment,
        point=point,
        label=label,
        device=device.generation,
        request_type=first.request_type.value,
        payload=first.payload,
        ports=len(active),
        addressing=first.addressing.value,
        mask=first.filter.mask & ~first.filter.anti_mask,
        anti_mask=first.filter.anti_mask,
        seed=workload.seed,
        duration_s=duration,
        accesses=round(requests * duration / window_s),
        raw_bytes=round(raw * duration / window_s),
        bandwidth_gbs=round(raw / window_s / 1e9, BANDWIDTH_DECIMALS),
        mrps=requests / window_s / 1e6,
        latency_min_ns=lat_min,
        latency_avg_ns=lat_sum / retired if retired else math.nan,
        latency_max_ns=lat_max,
        residence_ns=residence,
        admitted_rate=rate,
        littles_bytes=littles,
        vault_utilization=tuple(round(u, 6) for u in util),
    )


def write_trace(path: str, rows: Iterable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["port", "tag", "kind", "issue_ns", "retire_ns", "vault", "bank", "payload"])
        for port, tag, kind, issue, done, vault, bank, payload, _ in rows:
            w.writerow([port, tag, kind, issue / PS_PER_NS, done / PS_PER_NS, vault, bank, payload])


def simulate_stream(batch: StreamBatch, device: DeviceConfig | None = None,
                    timing: PipelineTiming | None = None,
                    link: LinkConfig | None = None) -> list[float]:
    """Issue ``batch`` back to back from one idle port; read latencies in ns, in command order."""
    from .workload import PortConfig

    device = device or device_preset("hmc-1.1-4GB")
    timing = timing or DEFAULT_TIMING
    sim = Simulator(device, link, timing, trace=True)
    cfg = PortConfig(port=batch.port)
    state = GeneratorState.create(cfg, device, 0)
    sim.scripts[batch.port] = deque(batch.commands)
    sim.add_port(cfg, state)
    sim.run()
    reads = [row for row in sim.trace if row[2] == Kind.READ.value]
    reads.sort(key=lambda row: (row[3], row[1]))
    return [(row[4] - row[3]) / PS_PER_NS for row in reads]
