"""Unit-delay switch-level simulation with charge sharing and X propagation.

Every resolution step looks at the current gate levels, turns each device on,
off or unknown, groups the non-source nodes into channel-connected components
and assigns each component a level: driven by a rail or source, shorted (X),
or the capacitance-weighted average of its stored charge.  One step costs one
device delay.
"""

from __future__ import annotations

import enum
import heapq
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .netlist import MosKind, Netlist, NodeKind

LOW, HIGH, X = 0, 1, 2

# device conduction codes
OFF, ON, UNKNOWN = 0, 1, 2
_CONDUCTS = {
    MosKind.NMOS: (OFF, ON, UNKNOWN),
    MosKind.PMOS: (ON, OFF, UNKNOWN),
}

_EPS = 1e-12


class Strength(enum.Enum):
    DRIVEN = "driven"
    STORED = "stored"


def logic_level(voltage: float, low: float = 0.4, high: float = 0.6) -> int:
    if voltage <= low:
        return LOW
    if voltage >= high:
        return HIGH
    return X


def logic_char(level: int) -> str:
    return "01x"[level]


@dataclass(frozen=True)
class NodeState:
    voltage: float
    strength: Strength = Strength.STORED

    @property
    def logic(self) -> int:
        return logic_level(self.voltage)

    @property
    def driven(self) -> bool:
        return self.strength is Strength.DRIVEN

    @classmethod
    def drive(cls, value: int) -> "NodeState":
        return cls(1.0 if value else 0.0, Strength.DRIVEN)


@dataclass(frozen=True)
class SimConfig:
    device_delay: int = 1
    threshold_low: float = 0.4
    threshold_high: float = 0.6
    max_settle_iterations: int = 1000
    sample_offset: int = 1

    def __post_init__(self):
        if not 0 < self.threshold_low < self.threshold_high < 1:
            raise ValueError("thresholds must satisfy 0 < low < high < 1")
        if self.device_delay < 1:
            raise ValueError("device_delay must be at least one tick")
        if self.max_settle_iterations < 1:
            raise ValueError("max_settle_iterations must be positive")
        if self.sample_offset < 0:
            raise ValueError("sample_offset must be non-negative")


class OscillationDetected(RuntimeError):
    def __init__(self, time: int, nodes: Iterable[str]):
        self.time = time
        self.nodes = tuple(sorted(nodes))
        super().__init__(f"no fixpoint by t={time}; still changing: {', '.join(self.nodes)}")


class StimulusError(ValueError):
    pass


@dataclass
class Stimulus:
    clock_period: int
    clock_high_first: bool = False
    input_schedule: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    duration: int = 0

    def __post_init__(self):
        if self.clock_period < 2:
            raise StimulusError("clock period must be at least 2 ticks")
        if self.duration < 0:
            raise StimulusError("duration must be non-negative")
        for name, changes in self.input_schedule.items():
            last = -1
            for t, v in changes:
                if t <= last:
                    raise StimulusError(f"transitions for {name} are not strictly time-ascending")
                if v not in (0, 1):
                    raise StimulusError(f"value for {name} at t={t} must be 0 or 1")
                last = t

    @property
    def half_period(self) -> int:
        return self.clock_period // 2

    def clock_events(self) -> list[tuple[int, int]]:
        """(time, level) for t=0 and every clock edge up to the duration."""
        first = 1 if self.clock_high_first else 0
        events = [(0, first)]
        k = 0
        while True:
            t = k * self.clock_period + self.half_period
            if t > self.duration:
                break
            events.append((t, 1 - first))
            t = (k + 1) * self.clock_period
            if t > self.duration:
                break
            events.append((t, first))
            k += 1
        return events

    def falling_edges(self) -> list[int]:
        return [t for t, v in self.clock_events() if v == 0 and t > 0]

    def rising_edges(self) -> list[int]:
        return [t for t, v in self.clock_events() if v == 1 and t > 0]

    def sample_points(self, offset: int = 1) -> list[int]:
        """One tick-offset before each falling edge, i.e. the end of each evaluation."""
        return [t - offset for t in self.falling_edges() if t - offset >= 0]

    def to_text(self) -> str:
        lines = [f"CLOCK {self.clock_period} {int(self.clock_high_first)}"]
        events = sorted((t, name, v) for name, ch in self.input_schedule.items() for t, v in ch)
        lines += [f"AT {t} {name} {v}" for t, name, v in events]
        lines.append(f"RUN {self.duration}")
        return "\n".join(lines) + "\n"


def parse_stimulus(text: str) -> Stimulus:
    period = None
    high_first = False
    duration = None
    schedule: dict[str, list[tuple[int, int]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        key = words[0].upper()
        try:
            if key == "CLOCK" and len(words) == 3:
                period = int(words[1])
                if words[2] not in ("0", "1"):
                    raise ValueError(words[2])
                high_first = words[2] == "1"
            elif key == "AT" and len(words) == 4:
                t, value = int(words[1]), int(words[3])
                if t < 0 or value not in (0, 1):
                    raise ValueError(line)
                schedule.setdefault(words[2], []).append((t, value))
            elif key == "RUN" and len(words) == 2:
                duration = int(words[1])
            else:
                raise StimulusError(f"line {lineno}: cannot parse {line!r}")
        except ValueError as exc:
            if isinstance(exc, StimulusError):
                raise
            raise StimulusError(f"line {lineno}: bad value in {line!r}") from None
    if period is None:
        raise StimulusError("missing CLOCK statement")
    if duration is None:
        raise StimulusError("missing RUN statement")
    for name in schedule:
        schedule[name].sort()
    return Stimulus(period, high_first, schedule, duration)


@dataclass(frozen=True)
class Resolution:
    states: dict[str, NodeState]
    shorts: frozenset[str]


class Waveform:
    """Per-node change records from one run plus the final state."""

    def __init__(self, names, capacitance, kinds, records, duration, config, final, quiescent=True):
        self.names = list(names)
        self.index = {n: i for i, n in enumerate(self.names)}
        self.capacitance = list(capacitance)
        self.kinds = list(kinds)
        self._records = records
        self.duration = duration
        self.config = config
        self._final = final
        self.quiescent = quiescent

    def _state(self, rec) -> NodeState:
        return NodeState(rec[1], Strength.DRIVEN if rec[2] else Strength.STORED)

    def changes(self, name: str) -> list[tuple[int, NodeState]]:
        return [(r[0], self._state(r)) for r in self._records[self.index[name]]]

    def state_at(self, name: str, time: int) -> NodeState:
        if not 0 <= time <= self.duration:
            raise ValueError(f"time {time} outside [0, {self.duration}]")
        last = None
        for r in self._records[self.index[name]]:
            if r[0] > time:
                break
            last = r
        return self._state(last)

    def sample(self, time: int) -> dict[str, NodeState]:
        return {name: self.state_at(name, time) for name in self.names}

    def logic(self, state: NodeState) -> int:
        return logic_level(state.voltage, self.config.threshold_low, self.config.threshold_high)

    def logic_at(self, name: str, time: int) -> int:
        return self.logic(self.state_at(name, time))

    def logic_changes(self, name: str) -> list[tuple[int, int]]:
        """Times at which the node's logic value changes (first entry at t=0)."""
        out = []
        lo, hi = self.config.threshold_low, self.config.threshold_high
        for t, v, _ in self._records[self.index[name]]:
            level = logic_level(v, lo, hi)
            if not out or out[-1][1] != level:
                out.append((t, level))
        return out

    def final_states(self) -> dict[str, NodeState]:
        volt, drv = self._final
        return {n: NodeState(volt[i], Strength.DRIVEN if drv[i] else Strength.STORED)
                for i, n in enumerate(self.names)}

    def records_equal(self, other: "Waveform") -> bool:
        return self.names == other.names and self._records == other._records


class Simulator:
    """A compiled netlist ready for repeated runs.

    The nodes are split into static regions: the groups that would be channel
    connected if every device conducted.  A region's resolution only depends on
    its own members, the gates of its devices and the sources it touches, so
    each region memoises its components per gate-level pattern and only regions
    touched by a change are re-evaluated.
    """

    _CACHE_LIMIT = 50_000

    def __init__(self, netlist: Netlist, config: SimConfig | None = None):
        self.netlist = netlist
        self.config = config or SimConfig()
        self.names = [n.id for n in netlist.nodes]
        self.index = {n: i for i, n in enumerate(self.names)}
        self.kinds = [n.kind for n in netlist.nodes]
        self.cap = [n.capacitance for n in netlist.nodes]
        self.is_source = [k.is_source for k in self.kinds]
        self.free = [i for i, s in enumerate(self.is_source) if not s]
        self.vdd = self.index[netlist.vdd]
        self.gnd = self.index[netlist.gnd]
        self.clock = self.index[netlist.clock]
        self._build_regions()

    def _build_regions(self) -> None:
        n = len(self.names)
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        devs = []
        for d in self.netlist.devices:
            a, b = self.index[d.source], self.index[d.drain]
            if self.is_source[a] and self.is_source[b]:
                continue
            devs.append((self.index[d.gate], _CONDUCTS[d.kind], a, b))
            if not self.is_source[a] and not self.is_source[b]:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        rid_of: dict[int, int] = {}
        members: list[list[int]] = []
        for i in self.free:
            r = find(i)
            if r not in rid_of:
                rid_of[r] = len(members)
                members.append([])
            members[rid_of[r]].append(i)
        region_devs: list[list] = [[] for _ in members]
        for g, table, a, b in devs:
            region_devs[rid_of[find(b if self.is_source[a] else a)]].append((g, table, a, b))

        self.region_of = [-1] * n
        influence: list[set] = [set() for _ in range(n)]
        self._regions = []
        for k, (mem, rdevs) in enumerate(zip(members, region_devs)):
            gates = sorted({g for g, _, _, _ in rdevs})
            pos = {g: j for j, g in enumerate(gates)}
            local = tuple((pos[g], table, a, b) for g, table, a, b in rdevs)
            for i in mem:
                self.region_of[i] = k
                influence[i].add(k)
            for g, _, a, b in rdevs:
                influence[g].add(k)
                influence[a].add(k)
                influence[b].add(k)
            self._regions.append((tuple(mem), tuple(gates), local, {}))
        self.influence = [tuple(sorted(s)) for s in influence]

    # -- resolution ---------------------------------------------------------

    def _components(self, region, pattern: bytes, unknown_on: bool):
        mem, _, devs, _ = region
        parent = {i: i for i in mem}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        is_source = self.is_source
        attached: dict[int, set] = {}
        for gpos, table, a, b in devs:
            state = table[pattern[gpos]]
            if state == OFF or (state == UNKNOWN and not unknown_on):
                continue
            sa, sb = is_source[a], is_source[b]
            if sa:
                attached.setdefault(b, set()).add(a)
            elif sb:
                attached.setdefault(a, set()).add(b)
            else:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups: dict[int, list[int]] = {}
        sources: dict[int, set] = {}
        for i in mem:
            r = find(i)
            groups.setdefault(r, []).append(i)
            if i in attached:
                sources.setdefault(r, set()).update(attached[i])
        comps = []
        for r, group in groups.items():
            srcs = tuple(sorted(sources.get(r, ())))
            caps = tuple(self.cap[i] for i in group)
            comps.append((tuple(group), srcs, caps, sum(caps)))
        return comps

    def _lookup(self, region, pattern: bytes):
        cache = region[3]
        entry = cache.get(pattern)
        if entry is None:
            off = self._components(region, pattern, False)
            on = self._components(region, pattern, True) if X in pattern else None
            if len(cache) >= self._CACHE_LIMIT:
                cache.clear()
            entry = cache[pattern] = (off, on)
        return entry

    @staticmethod
    def _apply(comps, logic, volt, new_v, new_d, shorts):
        for members, srcs, caps, total in comps:
            if srcs:
                hi = lo = False
                for s in srcs:
                    if logic[s] == HIGH:
                        hi = True
                    elif logic[s] == LOW:
                        lo = True
                    else:
                        hi = lo = True
                if hi and lo:
                    for m in members:
                        new_v[m] = 0.5
                        new_d[m] = False
                    if shorts is not None:
                        shorts.extend(members)
                    continue
                level = 1.0 if hi else 0.0
                for m in members:
                    new_v[m] = level
                    new_d[m] = True
                continue
            if len(members) == 1:
                m = members[0]
                new_v[m] = volt[m]
                new_d[m] = False
                continue
            v0 = volt[members[0]]
            if all(abs(volt[m] - v0) <= _EPS for m in members):
                for m in members:
                    new_v[m] = volt[m]
                    new_d[m] = False
                continue
            q = 0.0
            for m, c in zip(members, caps):
                q += c * volt[m]
            v = q / total
            for m in members:
                new_v[m] = v
                new_d[m] = False

    def _eval(self, rids, volt, logic, new_v, new_d, shorts):
        lo, hi = self.config.threshold_low, self.config.threshold_high
        apply = self._apply
        regions = self._regions
        for r in rids:
            region = regions[r]
            off, on = self._lookup(region, bytes([logic[g] for g in region[1]]))
            apply(off, logic, volt, new_v, new_d, shorts)
            if on is not None:
                alt_v: dict[int, float] = {}
                apply(on, logic, volt, alt_v, {}, None)
                for i in region[0]:
                    a, b = new_v[i], alt_v[i]
                    la = LOW if a <= lo else HIGH if a >= hi else X
                    lb = LOW if b <= lo else HIGH if b >= hi else X
                    if la != lb:
                        new_v[i] = 0.5
                        new_d[i] = False

    def step(self, volt: list[float], drv: list[bool]):
        """One full resolution step; returns (voltages, driven flags, shorted node indices)."""
        lo, hi = self.config.threshold_low, self.config.threshold_high
        logic = [LOW if v <= lo else HIGH if v >= hi else X for v in volt]
        new_v = list(volt)
        new_d = list(drv)
        shorts: list[int] = []
        self._eval(range(len(self._regions)), volt, logic, new_v, new_d, shorts)
        return new_v, new_d, shorts

    def resolve_states(self, states: Mapping[str, NodeState]) -> Resolution:
        missing = [n for n in self.names if n not in states]
        if missing:
            raise ValueError(f"no state for nodes: {', '.join(missing)}")
        volt = [states[n].voltage for n in self.names]
        drv = [states[n].driven for n in self.names]
        for i, src in enumerate(self.is_source):
            if src and not drv[i]:
                raise ValueError(f"source node {self.names[i]} must be driven")
        new_v, new_d, shorts = self.step(volt, drv)
        out = {n: NodeState(new_v[i], Strength.DRIVEN if new_d[i] else Strength.STORED)
               for i, n in enumerate(self.names)}
        return Resolution(out, frozenset(self.names[i] for i in shorts))

    # -- event loop -----------------------------------------------------------

    def _external_events(self, stimulus: Stimulus) -> dict[int, list[tuple[int, float]]]:
        events: dict[int, list[tuple[int, float]]] = {}
        for t, level in stimulus.clock_events():
            events.setdefault(t, []).append((self.clock, float(level)))
        for name, changes in stimulus.input_schedule.items():
            idx = self.index.get(name)
            if idx is None:
                raise StimulusError(f"stimulus drives unknown node {name}")
            if self.kinds[idx] is not NodeKind.INPUT:
                raise StimulusError(f"stimulus drives {name}, which is not an input node")
            for t, v in changes:
                if t <= stimulus.duration:
                    events.setdefault(t, []).append((idx, float(v)))
        return events

    def run(self, stimulus: Stimulus, initial: Mapping[str, NodeState] | None = None,
            record: bool = True, sample_times: Iterable[int] = ()):
        """Simulate; returns ``(waveform, samples)``.

        ``samples`` maps each requested time to the voltage list at that tick.
        ``initial`` replaces the all-zero starting state (used to resume from a
        quiescent snapshot).
        """
        cfg = self.config
        n = len(self.names)
        volt = [0.0] * n
        drv = [False] * n
        if initial is not None:
            for name, st in initial.items():
                i = self.index[name]
                volt[i] = st.voltage
                drv[i] = st.driven
        for i, src in enumerate(self.is_source):
            if src:
                volt[i] = 1.0 if volt[i] >= 0.5 else 0.0
                drv[i] = True
        volt[self.vdd] = 1.0
        volt[self.gnd] = 0.0

        events = self._external_events(stimulus)
        for idx, v in events.pop(0, ()):
            volt[idx] = v
        ext_times = sorted(events)
        duration = stimulus.duration
        delay = cfg.device_delay
        max_settle = cfg.max_settle_iterations

        records = [[(0, volt[i], drv[i])] for i in range(n)] if record else None
        samples: dict[int, list[float]] = {}
        pending_samples = sorted(set(t for t in sample_times if 0 <= t <= duration))
        si = 0

        lo, hi = cfg.threshold_low, cfg.threshold_high
        logic = [LOW if v <= lo else HIGH if v >= hi else X for v in volt]
        influence = self.influence
        evaluate = self._eval
        dirty: set[int] = set(range(len(self._regions)))

        pending: dict[int, list] = {}
        heap: list[int] = []
        ei = 0
        t = 0
        settle = 0
        ext_triggered = True

        while True:
            if dirty:
                res_v: dict[int, float] = {}
                res_d: dict[int, bool] = {}
                evaluate(sorted(dirty), volt, logic, res_v, res_d, None)
                dirty = set()
                updates = [(i, v, res_d[i]) for i, v in res_v.items()
                           if res_d[i] != drv[i] or abs(v - volt[i]) > _EPS]
                if updates:
                    due = t + delay
                    if due in pending:
                        pending[due].extend(updates)
                    else:
                        pending[due] = updates
                        heapq.heappush(heap, due)
                    if ext_triggered:
                        settle = 1
                    else:
                        settle += 1
                        if settle > max_settle:
                            raise OscillationDetected(t, (self.names[i] for i, _, _ in updates))

            nxt_ext = ext_times[ei] if ei < len(ext_times) else None
            nxt_pend = heap[0] if heap else None
            if nxt_ext is None and nxt_pend is None:
                break
            nt = nxt_ext if nxt_pend is None or (nxt_ext is not None and nxt_ext < nxt_pend) else nxt_pend
            if nt > duration:
                break
            while si < len(pending_samples) and pending_samples[si] < nt:
                samples[pending_samples[si]] = list(volt)
                si += 1
            t = nt
            ext_triggered = False
            if heap and heap[0] == t:
                heapq.heappop(heap)
                for i, v, d in pending.pop(t):
                    if d != drv[i] or abs(v - volt[i]) > _EPS:
                        volt[i] = v
                        drv[i] = d
                        logic[i] = LOW if v <= lo else HIGH if v >= hi else X
                        dirty.update(influence[i])
                        if record:
                            rec = records[i]
                            if rec[-1][0] == t:
                                rec[-1] = (t, v, d)
                            else:
                                rec.append((t, v, d))
            if nxt_ext == t:
                for i, v in events[t]:
                    if volt[i] != v:
                        volt[i] = v
                        logic[i] = LOW if v <= lo else HIGH if v >= hi else X
                        dirty.update(influence[i])
                        ext_triggered = True
                        if record:
                            records[i].append((t, v, True))
                ei += 1

        while si < len(pending_samples):
            samples[pending_samples[si]] = list(volt)
            si += 1
        quiescent = not heap and not dirty
        wave = Waveform(self.names, self.cap, self.kinds, records if record else [[] for _ in range(n)],
                        duration, cfg, (list(volt), list(drv)), quiescent)
        return wave, samples


def resolve(netlist: Netlist, states: Mapping[str, NodeState],
            config: SimConfig | None = None) -> Resolution:
    return Simulator(netlist, config).resolve_states(states)


def simulate(netlist: Netlist, stimulus: Stimulus, config: SimConfig | None = None,
             initial: Mapping[str, NodeState] | None = None) -> Waveform:
    return Simulator(netlist, config).run(stimulus, initial)[0]


def sample(waveform: Waveform, time: int) -> dict[str, NodeState]:
    return waveform.sample(time)


@dataclass
class Activity:
    score: float
    transitions: dict[str, int]
    x_transitions: dict[str, int]

    @property
    def total_transitions(self) -> int:
        return sum(self.transitions.values())


def switching_activity(waveform: Waveform) -> Activity:
    """Capacitance-weighted count of 0<->1 logic transitions; X moves are tallied apart."""
    score = 0.0
    counts: dict[str, int] = {}
    xcounts: dict[str, int] = {}
    for i, name in enumerate(waveform.names):
        if waveform.kinds[i] in (NodeKind.VDD, NodeKind.GND):
            continue
        changes = waveform.logic_changes(name)
        clean = xs = 0
        for (_, a), (_, b) in zip(changes, changes[1:]):
            if X in (a, b):
                xs += 1
            else:
                clean += 1
        if clean:
            counts[name] = clean
            score += clean * waveform.capacitance[i]
        if xs:
            xcounts[name] = xs
    return Activity(score, counts, xcounts)
