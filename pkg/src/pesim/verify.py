"""Verification campaigns over the switch-level simulator.

Clocking protocol used by every campaign (``Timing``): each cycle starts with
the clock falling (pre-discharge / precharge half) and ends with the
evaluation half.  Inputs and the setup look-ahead value are applied
``input_skew`` ticks into the cycle; late look-ahead arrivals are placed at
``offset`` ticks after the evaluation edge.  Outputs are sampled
``sample_offset`` ticks before the falling edge that closes the cycle.

Every case starts from the same quiescent state reached after ``warmup``
neutral cycles (all inputs 0, cell enabled).  Campaigns resume from that
snapshot instead of re-simulating the warm-up; ``replay`` re-runs a scenario
from power-up and must observe the same values.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import behavior
from .designs import Design, get_design
from .sim import HIGH, LOW, X, NodeState, SimConfig, Simulator, Stimulus, logic_char, switching_activity

PRNG_NAME = "numpy PCG64"
MAX_RECORDED_FAILURES = 200


@dataclass(frozen=True)
class Timing:
    clock_period: int = 100
    input_skew: int = 2
    warmup: int = 3

    @property
    def eval_start(self) -> int:
        return self.clock_period // 2

    @property
    def eval_window(self) -> int:
        return self.clock_period - self.eval_start


class CampaignError(RuntimeError):
    def __init__(self, scenario: "Scenario", cause: Exception):
        super().__init__(f"{scenario.design} [{scenario.label}]: {cause}")
        self.scenario = scenario
        self.cause = cause


@dataclass(frozen=True)
class Scenario:
    design: str
    ip_sequence: tuple[tuple[int, ...], ...]
    la_sequence: tuple[int, ...]
    la_schedule: tuple[tuple[int, int, int], ...] = ()
    label: str = ""

    def __post_init__(self):
        if len(self.la_sequence) != len(self.ip_sequence):
            raise ValueError("one setup look-ahead value per cycle is required")
        for cycle, _, _ in self.la_schedule:
            if not 0 <= cycle < len(self.ip_sequence):
                raise ValueError(f"look-ahead transition in cycle {cycle} is outside the sequence")

    def check_offsets(self, timing: Timing):
        for _, offset, _ in self.la_schedule:
            if not 0 <= offset < timing.eval_window:
                raise ValueError(f"offset {offset} outside [0, {timing.eval_window})")

    def final_la(self, cycle: int) -> int:
        la = self.la_sequence[cycle]
        for c, _, value in sorted(self.la_schedule):
            if c == cycle:
                la = value
        return la

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "ip_sequence": [behavior.to_str(v) for v in self.ip_sequence],
            "la_sequence": list(self.la_sequence),
            "la_schedule": [list(t) for t in self.la_schedule],
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(d["design"], tuple(behavior.vector(v) for v in d["ip_sequence"]),
                   tuple(d["la_sequence"]), tuple(tuple(t) for t in d.get("la_schedule", ())),
                   d.get("label", ""))


def scenario_stimulus(scenario: Scenario, design: Design, timing: Timing, warmup: bool = True,
                      trailing_idle: int = 0) -> Stimulus:
    """Build the stimulus; cycle indices in the scenario exclude the warm-up."""
    P = timing.clock_period
    width = design.width
    ips = list(scenario.ip_sequence) + [(0,) * width] * trailing_idle
    las = list(scenario.la_sequence) + [design.neutral_la] * trailing_idle
    lead = timing.warmup if warmup else 0
    ips = [(0,) * width] * lead + ips
    las = [design.neutral_la] * lead + las

    late: dict[int, list[tuple[int, int]]] = {}
    for cycle, offset, value in scenario.la_schedule:
        if offset == 0:
            # arrival together with the inputs: no race
            las[cycle + lead] = value
        else:
            late.setdefault(cycle + lead, []).append((offset, value))

    schedule: dict[str, list[tuple[int, int]]] = {}
    # nothing is assumed about the starting state, so the first cycle sets every input
    current: dict[str, int] = {}

    def put(name, t, value):
        if current.get(name) != value:
            schedule.setdefault(name, []).append((t, value))
            current[name] = value

    for k, (ip, la) in enumerate(zip(ips, las)):
        t = k * P + timing.input_skew
        for i, b in enumerate(ip):
            put(f"IP{i}", t, b)
        put("LA", t, la)
        for offset, value in sorted(late.get(k, ())):
            put("LA", k * P + timing.eval_start + offset, value)
    return Stimulus(P, False, schedule, len(ips) * P - 1)


def _observe(sim: Simulator, out_idx: Sequence[int], volt: Sequence[float]) -> tuple[int, ...]:
    lo, hi = sim.config.threshold_low, sim.config.threshold_high
    return tuple(LOW if volt[i] <= lo else HIGH if volt[i] >= hi else X for i in out_idx)


def obs_str(obs: Sequence[int]) -> str:
    return "".join(logic_char(v) for v in obs)


class Bench:
    """A design compiled once, plus its warmed-up snapshot."""

    def __init__(self, design: Design | str, config: SimConfig | None = None, timing: Timing | None = None):
        self.design = get_design(design) if isinstance(design, str) else design
        self.config = config or SimConfig()
        self.timing = timing or Timing()
        self.netlist = self.design.build()
        self.sim = Simulator(self.netlist, self.config)
        self.out_idx = [self.sim.index[o] for o in self.netlist.outputs]
        if len(self.out_idx) != self.design.width:
            raise ValueError(f"{self.design.name}: netlist has {len(self.out_idx)} outputs")
        self.warm = self._warm_state()

    def _warm_state(self) -> dict[str, NodeState]:
        idle = Scenario(self.design.name, (), (), label="warm-up")
        stim = scenario_stimulus(idle, self.design, self.timing)
        try:
            wave, _ = self.sim.run(stim, record=False)
        except Exception as exc:
            raise CampaignError(idle, exc) from exc
        if not wave.quiescent:
            raise RuntimeError(f"{self.design.name}: not quiescent after warm-up")
        return wave.final_states()

    def sample_points(self, cycles: int) -> list[int]:
        P = self.timing.clock_period
        return [(k + 1) * P - self.config.sample_offset for k in range(cycles)]

    def run(self, scenario: Scenario, start: dict[str, NodeState] | None = None):
        """Observed output logic at the end of every scenario cycle, plus the final state."""
        scenario.check_offsets(self.timing)
        stim = scenario_stimulus(scenario, self.design, self.timing, warmup=False)
        times = self.sample_points(len(scenario.ip_sequence))
        try:
            wave, samples = self.sim.run(stim, start or self.warm, record=False, sample_times=times)
        except Exception as exc:
            raise CampaignError(scenario, exc) from exc
        return [_observe(self.sim, self.out_idx, samples[t]) for t in times], wave

    def replay(self, scenario: Scenario):
        """Same as ``run`` but from power-up, warm-up cycles included; returns the waveform too."""
        stim = scenario_stimulus(scenario, self.design, self.timing, warmup=True)
        P = self.timing.clock_period
        lead = self.timing.warmup
        times = [t + lead * P for t in self.sample_points(len(scenario.ip_sequence))]
        wave, samples = self.sim.run(stim, sample_times=times)
        return [_observe(self.sim, self.out_idx, samples[t]) for t in times], wave


@dataclass
class Failure:
    scenario: Scenario
    cycle: int
    expected: tuple[int, ...]
    observed: tuple[int, ...]

    @property
    def flips(self) -> int:
        return sum(1 for e, o in zip(self.expected, self.observed) if o != X and o != e)

    @property
    def xs(self) -> int:
        return sum(1 for o in self.observed if o == X)

    @property
    def stale_high(self) -> bool:
        return any(e == 0 and o == HIGH for e, o in zip(self.expected, self.observed))

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.to_dict(),
            "cycle": self.cycle,
            "expected": behavior.to_str(self.expected),
            "observed": obs_str(self.observed),
            "waveform": f"replay {self.scenario.design} [{self.scenario.label}]",
        }


@dataclass
class Report:
    campaign: str
    design: str
    config: dict
    total: int = 0
    failure_count: int = 0
    flipped_outputs: int = 0
    x_outputs: int = 0
    onehot_violations: int = 0
    samples: int = 0
    failures: list[Failure] = field(default_factory=list)
    activity: dict | None = None
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "pass" if not self.failures else "fail"

    @property
    def passed(self) -> bool:
        return not self.failures

    def add_observation(self, scenario: Scenario, cycle: int, expected, observed, compare: bool = True):
        self.samples += 1
        if sum(1 for o in observed if o == HIGH) > 1:
            self.onehot_violations += 1
        if compare and tuple(observed) != tuple(expected):
            f = Failure(scenario, cycle, tuple(expected), tuple(observed))
            self.failure_count += 1
            self.flipped_outputs += f.flips
            self.x_outputs += f.xs
            if len(self.failures) < MAX_RECORDED_FAILURES:
                self.failures.append(f)
            return f
        return None

    def to_dict(self) -> dict:
        return {
            "campaign": self.campaign,
            "design": self.design,
            "config": self.config,
            "counts": {
                "total": self.total,
                "passed": self.total - self.failure_count,
                "failed": self.failure_count,
                "flipped_outputs": self.flipped_outputs,
                "x_outputs": self.x_outputs,
                "onehot_violations": self.onehot_violations,
                "samples": self.samples,
                "recorded_failures": len(self.failures),
            },
            "details": self.details,
            "activity": self.activity,
            "failures": [f.to_dict() for f in self.failures],
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self, max_rows: int = 10) -> str:
        lines = [
            f"campaign  {self.campaign}",
            f"design    {self.design}",
            f"cases     {self.total}",
            f"failed    {self.failure_count}  (flipped outputs {self.flipped_outputs}, X outputs {self.x_outputs})",
            f"one-hot   {self.onehot_violations} violations over {self.samples} samples",
        ]
        for key, value in sorted(self.details.items()):
            if isinstance(value, dict) and len(value) > 8:
                continue
            lines.append(f"{key:<9} {value}")
        if self.activity:
            lines.append(f"activity  {self.activity.get('score')}")
        if self.failures:
            lines.append("")
            lines.append(f"{'scenario':<40} {'expected':<18} observed")
            for f in self.failures[:max_rows]:
                lines.append(f"{f.scenario.label:<40} {behavior.to_str(f.expected):<18} {obs_str(f.observed)}")
            if self.failure_count > max_rows:
                lines.append(f"... {self.failure_count - max_rows} more")
        lines.append(f"verdict   {self.verdict.upper()}")
        return "\n".join(lines) + "\n"


def _base_config(bench_or_design, config: SimConfig, timing: Timing, **extra) -> dict:
    out = {"sim": asdict(config), "timing": asdict(timing)}
    out.update(extra)
    return out


# -- parallel execution ----------------------------------------------------

_WORKER_BENCH: dict = {}


def _worker_bench(design: str, config: SimConfig, timing: Timing) -> Bench:
    key = (design, config, timing)
    bench = _WORKER_BENCH.get(key)
    if bench is None:
        _WORKER_BENCH.clear()
        bench = _WORKER_BENCH[key] = Bench(design, config, timing)
    return bench


def _run_scenarios(args):
    design, config, timing, scenarios = args
    bench = _worker_bench(design, config, timing)
    return [bench.run(s)[0] for s in scenarios]


def _run_pair_rows(args):
    design, config, timing, v1s, v2s = args
    bench = _worker_bench(design, config, timing)
    la = bench.design.neutral_la
    rows = []
    for v1 in v1s:
        first = Scenario(design, (v1,), (la,))
        obs1, wave = bench.run(first)
        snap = wave.final_states()
        row = [bench.run(Scenario(design, (v2,), (la,)), start=snap)[0][0] for v2 in v2s]
        rows.append((obs1[0], row))
    return rows


def _chunks(items: list, n: int) -> list[list]:
    if n <= 1:
        return [items]
    size = max(1, -(-len(items) // (n * 4)))
    return [items[i:i + size] for i in range(0, len(items), size)]


def _parallel_map(func, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, tasks))


def run_scenarios(design: str, scenarios: list[Scenario], config: SimConfig, timing: Timing,
                  jobs: int = 1) -> list:
    tasks = [(design, config, timing, chunk) for chunk in _chunks(scenarios, jobs)]
    out = []
    for part in _parallel_map(_run_scenarios, tasks, jobs):
        out.extend(part)
    return out


# -- campaigns ---------------------------------------------------------------

def exhaustive_equivalence(design: str, la_values: Iterable[int] | None = None,
                           config: SimConfig | None = None, timing: Timing | None = None,
                           jobs: int = 1) -> Report:
    """Every input vector with the look-ahead held stable for a whole cycle."""
    d = get_design(design)
    config = config or SimConfig()
    timing = timing or Timing()
    la_values = tuple(la_values) if la_values is not None else (0, 1)
    scenarios = [
        Scenario(d.name, (ip,), (la,), label=f"ip={behavior.to_str(ip)} la={la}")
        for v in range(1 << d.width) for ip in [behavior.from_int(v, d.width)] for la in la_values
    ]
    results = run_scenarios(d.name, scenarios, config, timing, jobs)
    report = Report("exhaustive_equivalence", d.name, _base_config(d, config, timing, la_values=list(la_values)))
    report.total = len(scenarios)
    for s, obs in zip(scenarios, results):
        report.add_observation(s, 0, d.expected(s.ip_sequence[0], s.la_sequence[0]), obs[0])
    return report


def race_scenarios(design: Design, offsets: Iterable[int], directions=("fall", "rise")) -> list[Scenario]:
    out = []
    for offset in offsets:
        for direction in directions:
            start, end = (1, 0) if direction == "fall" else (0, 1)
            for v in range(1 << design.width):
                ip = behavior.from_int(v, design.width)
                out.append(Scenario(design.name, (ip,), (start,), ((0, offset, end),),
                                    label=f"ip={behavior.to_str(ip)} LA {start}->{end} at +{offset}"))
    return out


def race_sweep(design: str, offsets: Iterable[int], directions=("fall", "rise"),
               config: SimConfig | None = None, timing: Timing | None = None, jobs: int = 1) -> Report:
    """Look-ahead arriving ``offset`` ticks after the evaluation edge; judged against its final value."""
    d = get_design(design)
    config = config or SimConfig()
    timing = timing or Timing()
    offsets = list(offsets)
    for off in offsets:
        if not 0 <= off < timing.eval_window:
            raise ValueError(f"offset {off} outside the evaluation window [0, {timing.eval_window})")
    scenarios = race_scenarios(d, offsets, directions)
    results = run_scenarios(d.name, scenarios, config, timing, jobs)
    report = Report("race_sweep", d.name, _base_config(d, config, timing, offsets=offsets,
                                                       directions=list(directions)))
    report.total = len(scenarios)
    by_offset = {str(o): 0 for o in offsets}
    stale = 0
    for s, obs in zip(scenarios, results):
        f = report.add_observation(s, 0, d.expected(s.ip_sequence[0], s.final_la(0)), obs[0])
        if f is not None:
            by_offset[str(s.la_schedule[0][1])] += 1
            stale += f.stale_high
    report.details = {"failures_by_offset": by_offset, "stale_high_failures": stale}
    return report


def charge_share_scan(design: str, mode: str = "exhaustive", n: int = 1000, seed: int = 0,
                      config: SimConfig | None = None, timing: Timing | None = None, jobs: int = 1) -> Report:
    """Consecutive input pairs (v1 then v2, cell enabled); cycle-2 outputs judged against v2."""
    d = get_design(design)
    config = config or SimConfig()
    timing = timing or Timing()
    la = d.neutral_la
    extra = {"mode": mode}
    report_pairs: list[tuple[Scenario, list]] = []

    if mode == "exhaustive":
        if d.width > 8:
            raise ValueError("exhaustive pair scan is limited to 8-bit designs; use random mode")
        vecs = [behavior.from_int(v, d.width) for v in range(1 << d.width)]
        tasks = [(d.name, config, timing, chunk, vecs) for chunk in _chunks(vecs, jobs)]
        rows = []
        for part in _parallel_map(_run_pair_rows, tasks, jobs):
            rows.extend(part)
        for v1, (obs1, row) in zip(vecs, rows):
            for v2, obs2 in zip(vecs, row):
                s = Scenario(d.name, (v1, v2), (la, la),
                             label=f"{behavior.to_str(v1)} -> {behavior.to_str(v2)}")
                report_pairs.append((s, [obs1, obs2]))
    elif mode == "random":
        rng = np.random.Generator(np.random.PCG64(seed))
        bits = rng.integers(0, 2, size=(n, 2, d.width))
        scenarios = [Scenario(d.name, (tuple(int(b) for b in p[0]), tuple(int(b) for b in p[1])), (la, la),
                              label=f"pair {k}") for k, p in enumerate(bits)]
        for s, obs in zip(scenarios, run_scenarios(d.name, scenarios, config, timing, jobs)):
            report_pairs.append((s, obs))
        extra.update(seed=seed, prng=PRNG_NAME, pairs=n)
    else:
        raise ValueError(f"unknown scan mode {mode!r}")

    report = Report("charge_share_scan", d.name, _base_config(d, config, timing, **extra))
    report.total = len(report_pairs)
    failing_outputs: dict[str, int] = {}
    for s, obs in report_pairs:
        report.add_observation(s, 0, d.expected(s.ip_sequence[0], la), obs[0], compare=False)
        f = report.add_observation(s, 1, d.expected(s.ip_sequence[1], la), obs[1])
        if f is not None:
            for i, (e, o) in enumerate(zip(f.expected, f.observed)):
                if e != o:
                    failing_outputs[f"OP{i}"] = failing_outputs.get(f"OP{i}", 0) + 1
    report.details = {"failing_outputs": dict(sorted(failing_outputs.items()))}
    return report


def random_sequence(width: int, cycles: int, seed: int) -> list[tuple[int, ...]]:
    rng = np.random.Generator(np.random.PCG64(seed))
    return [tuple(int(b) for b in row) for row in rng.integers(0, 2, size=(cycles, width))]


def switching_audit(design: str, ip_sequence: Sequence[Sequence[int]], config: SimConfig | None = None,
                    timing: Timing | None = None, seed: int | None = None) -> Report:
    """Count output charge/discharge events per evaluation and the pre-discharge after it."""
    d = get_design(design)
    config = config or SimConfig()
    timing = timing or Timing()
    bench = Bench(d, config, timing)
    seq = tuple(tuple(v) for v in ip_sequence)
    la = d.neutral_la
    scenario = Scenario(d.name, seq, (la,) * len(seq), label=f"{len(seq)}-cycle sequence")
    stim = scenario_stimulus(scenario, d, timing, warmup=False, trailing_idle=1)
    wave, samples = bench.sim.run(stim, bench.warm, sample_times=bench.sample_points(len(seq)))

    P = timing.clock_period
    rises = [0] * len(seq)
    falls = [0] * len(seq)
    xs = [0] * len(seq)
    for name in bench.netlist.outputs:
        changes = wave.logic_changes(name)
        for (_, a), (t, b) in zip(changes, changes[1:]):
            k, phase = divmod(t, P)
            # evaluation of cycle k, or the pre-discharge that follows it (cycle k+1's first half)
            if phase >= timing.eval_start:
                cyc = k
            else:
                cyc = k - 1
            if not 0 <= cyc < len(seq):
                continue
            if X in (a, b):
                xs[cyc] += 1
            elif phase >= timing.eval_start and (a, b) == (LOW, HIGH):
                rises[cyc] += 1
            elif phase < timing.eval_start and (a, b) == (HIGH, LOW):
                falls[cyc] += 1
            else:
                # a fall during evaluation or a rise during pre-discharge
                xs[cyc] += 1

    extra = {"cycles": len(seq)}
    if seed is not None:
        extra.update(seed=seed, prng=PRNG_NAME)
    report = Report("switching_audit", d.name, _base_config(d, config, timing, **extra))
    report.total = len(seq)
    violations = 0
    for k, ip in enumerate(seq):
        obs = _observe(bench.sim, bench.out_idx, samples[bench.sample_points(len(seq))[k]])
        want = (1, 1, 0) if any(ip) else (0, 0, 0)
        ok = (rises[k], falls[k], xs[k]) == want
        report.add_observation(scenario, k, d.expected(ip, la), obs)
        if not ok:
            violations += 1
            report.failure_count += 1
            if len(report.failures) < MAX_RECORDED_FAILURES:
                report.failures.append(Failure(Scenario(d.name, seq[: k + 1], (la,) * (k + 1),
                                                        label=f"cycle {k}: {rises[k]} up, {falls[k]} down, "
                                                              f"{xs[k]} other"),
                                               k, d.expected(ip, la), obs))
    act = switching_activity(wave)
    out_names = set(bench.netlist.outputs)
    report.activity = {
        "score": round(act.score, 9),
        "output_transitions": sum(v for k, v in act.transitions.items() if k in out_names),
        "total_transitions": act.total_transitions,
        "x_transitions": sum(act.x_transitions.values()),
    }
    report.details = {
        "transition_violations": violations,
        "output_rises": sum(rises),
        "output_falls": sum(falls),
        "nonzero_cycles": sum(1 for ip in seq if any(ip)),
    }
    return report


def cascade_check(n_bits: int, vectors: int = 100_000, netlist_vectors: int = 1000, seed: int = 0,
                  exhaustive: bool | None = None, config: SimConfig | None = None,
                  timing: Timing | None = None, jobs: int = 1) -> Report:
    """Behavioural cascade against the flat encoder, then the cascaded netlist by simulation."""
    if n_bits <= 0 or n_bits % 8:
        raise ValueError(f"cascade width must be a positive multiple of 8, got {n_bits}")
    config = config or SimConfig()
    timing = timing or Timing()
    if exhaustive is None:
        exhaustive = n_bits <= 16
    d = get_design(f"cascade{n_bits}")
    report = Report("cascade_check", d.name,
                    _base_config(d, config, timing, seed=seed, prng=PRNG_NAME, exhaustive=exhaustive,
                                 vectors=vectors, netlist_vectors=netlist_vectors))
    if exhaustive:
        vecs = [behavior.from_int(v, n_bits) for v in range(1 << n_bits)]
    else:
        rng = np.random.Generator(np.random.PCG64(seed))
        vecs = [tuple(int(b) for b in row) for row in rng.integers(0, 2, size=(vectors, n_bits))]
        vecs += behavior.walking_ones(n_bits)
    behavioural_fail = 0
    for v in vecs:
        got = behavior.cascade(v)
        if got != behavior.pe_general(v):
            behavioural_fail += 1
            report.add_observation(Scenario(d.name, (v,), (0,), label="behavioural"), 0,
                                   behavior.pe_general(v), got)
    netvecs = vecs if exhaustive else vecs[:netlist_vectors] + behavior.walking_ones(n_bits)
    if netlist_vectors == 0 and not exhaustive:
        netvecs = []
    scenarios = [Scenario(d.name, (v,), (0,), label=f"netlist {k}") for k, v in enumerate(netvecs)]
    results = run_scenarios(d.name, scenarios, config, timing, jobs) if scenarios else []
    netlist_fail = 0
    for s, obs in zip(scenarios, results):
        if report.add_observation(s, 0, behavior.pe_general(s.ip_sequence[0]), obs[0]) is not None:
            netlist_fail += 1
    report.total = len(vecs) + len(scenarios)
    report.details = {
        "behavioural_cases": len(vecs),
        "behavioural_failures": behavioural_fail,
        "netlist_cases": len(scenarios),
        "netlist_failures": netlist_fail,
    }
    return report
