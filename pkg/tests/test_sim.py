import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pesim.netlist import MosDevice, MosKind, Node, NodeKind, make_netlist, parse_netlist
from pesim.sim import (HIGH, LOW, X, NodeState, OscillationDetected, SimConfig, Simulator, Stimulus,
                       StimulusError, Strength, logic_level, parse_stimulus, resolve, sample, simulate,
                       switching_activity)
from pesim.verify import Bench, Scenario, scenario_stimulus

import oracles

RAILS = [Node("VDD", NodeKind.VDD, 1.0), Node("GND", NodeKind.GND, 1.0), Node("CLK", NodeKind.CLOCK, 1.0)]


def stored(v):
    return NodeState(v, Strength.STORED)


def driven(v):
    return NodeState.drive(v)


def rails_states(clk=0):
    return {"VDD": driven(1), "GND": driven(0), "CLK": driven(clk)}


# -- resolve examples ------------------------------------------------------

def test_nmos_discharges_drain():
    n = make_netlist(RAILS + [Node("g", NodeKind.INPUT, 1), Node("d", NodeKind.INTERNAL, 1)],
                     [MosDevice("m", MosKind.NMOS, "g", "GND", "d")])
    r = resolve(n, {**rails_states(), "g": driven(1), "d": stored(1.0)})
    assert r.states["d"] == NodeState(0.0, Strength.DRIVEN)
    assert not r.shorts


def _pair(c1, v1, c2, v2):
    n = make_netlist(RAILS + [Node("en", NodeKind.INPUT, 1), Node("a", NodeKind.INTERNAL, c1),
                              Node("b", NodeKind.INTERNAL, c2)],
                     [MosDevice("m", MosKind.NMOS, "en", "a", "b")])
    return resolve(n, {**rails_states(), "en": driven(1), "a": stored(v1), "b": stored(v2)})


def test_equal_charge_share_gives_x():
    r = _pair(10, 1.0, 10, 0.0)
    assert r.states["a"].voltage == pytest.approx(0.5)
    assert r.states["b"].voltage == pytest.approx(0.5)
    assert r.states["a"].logic == X
    assert r.states["a"].strength is Strength.STORED


def test_degraded_charge_share_stays_one():
    r = _pair(9, 1.0, 1, 0.0)
    assert r.states["a"].voltage == pytest.approx(0.9)
    assert r.states["b"].voltage == pytest.approx(0.9)
    assert r.states["b"].logic == HIGH


def test_rail_short_flagged():
    n = make_netlist(RAILS + [Node("g", NodeKind.INPUT, 1), Node("m", NodeKind.INTERNAL, 1)],
                     [MosDevice("p", MosKind.PMOS, "g", "VDD", "m"), MosDevice("n", MosKind.NMOS, "CLK", "m", "GND")])
    r = resolve(n, {**rails_states(clk=1), "g": driven(0), "m": stored(0.0)})
    assert r.shorts == {"m"}
    assert r.states["m"] == NodeState(0.5, Strength.STORED)


def test_resolve_requires_all_states():
    n = parse_netlist("NODE VDD vdd\nNODE GND gnd\nNODE CLK clock\nNODE a internal\n")
    with pytest.raises(ValueError, match="no state"):
        resolve(n, rails_states())
    with pytest.raises(ValueError, match="must be driven"):
        resolve(n, {**rails_states(), "VDD": stored(1.0), "a": stored(0)})


def _x_gate_netlist(second_gate):
    # x is an undriven node at 0.5, gating a pull-down onto d; d also has a second pull-down
    nodes = RAILS + [Node("x", NodeKind.INTERNAL, 1), Node("g", NodeKind.INPUT, 1),
                     Node("d", NodeKind.INTERNAL, 1)]
    devs = [MosDevice("mx", MosKind.NMOS, "x", "GND", "d"), MosDevice("mg", MosKind.NMOS, second_gate, "GND", "d"),
            MosDevice("mp", MosKind.PMOS, "g", "VDD", "d")]
    return make_netlist(nodes, devs)


def test_x_soundness_agreeing_passes_keep_logic():
    # g=1: PMOS off, NMOS mg on, so d is 0 whether or not mx conducts
    r = resolve(_x_gate_netlist("g"), {**rails_states(), "x": stored(0.5), "g": driven(1), "d": stored(1.0)})
    assert r.states["d"].logic == LOW
    assert r.states["d"].driven


def test_x_gate_makes_node_unknown_when_passes_differ():
    # g=0: PMOS pulls d up; mx unknown could also pull it down
    r = resolve(_x_gate_netlist("g"), {**rails_states(), "x": stored(0.5), "g": driven(0), "d": stored(0.0)})
    assert r.states["d"] == NodeState(0.5, Strength.STORED)


# -- property tests against the literal oracle --------------------------------

@st.composite
def random_circuits(draw, rail_free=False):
    n_free = draw(st.integers(1, 7))
    free = [Node(f"n{i}", NodeKind.INTERNAL, draw(st.floats(0.5, 20))) for i in range(n_free)]
    ins = [Node(f"i{i}", NodeKind.INPUT, 1.0) for i in range(2)]
    terms = [n.id for n in free] + ([] if rail_free else ["VDD", "GND", "CLK", "i0", "i1"])
    gates = [n.id for n in free] + ["VDD", "GND", "CLK", "i0", "i1"]
    devs = []
    for k in range(draw(st.integers(0, 10))):
        a, b = draw(st.sampled_from(terms)), draw(st.sampled_from(terms))
        if a == b:
            continue
        kind = draw(st.sampled_from([MosKind.NMOS, MosKind.PMOS]))
        devs.append(MosDevice(f"m{k}", kind, draw(st.sampled_from(gates)), a, b))
    netlist = make_netlist(RAILS + ins + free, devs)
    states = {**rails_states(draw(st.integers(0, 1))),
              "i0": driven(draw(st.integers(0, 1))), "i1": driven(draw(st.integers(0, 1)))}
    for n in free:
        v = draw(st.sampled_from([0.0, 1.0, 0.5]) | st.floats(0, 1))
        states[n.id] = NodeState(v, draw(st.sampled_from(list(Strength))))
    return netlist, states


@settings(max_examples=300, deadline=None)
@given(random_circuits())
def test_resolve_matches_oracle(case):
    netlist, states = case
    got = resolve(netlist, states)
    want, shorts = oracles.resolve(netlist, states)
    assert got.shorts == shorts
    for name, s in want.items():
        assert got.states[name].voltage == pytest.approx(s.voltage, abs=1e-9), name
        assert got.states[name].strength == s.strength, name


@settings(max_examples=200, deadline=None)
@given(random_circuits(rail_free=True))
def test_charge_conserved_per_component(case):
    netlist, states = case
    # with no unknown gates the component structure of the OFF pass is the whole story
    if any(logic_level(states[d.gate].voltage) == X for d in netlist.devices):
        return
    got = resolve(netlist, states)
    cap = {n.id: n.capacitance for n in netlist.nodes}
    free = [n.id for n in netlist.nodes if not n.kind.is_source]
    before = sum(cap[n] * states[n].voltage for n in free)
    after = sum(cap[n] * got.states[n].voltage for n in free)
    assert after == pytest.approx(before, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(random_circuits())
def test_driven_values_are_exact(case):
    netlist, states = case
    got = resolve(netlist, states)
    for s in got.states.values():
        if s.driven:
            assert s.voltage in (0.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(random_circuits())
def test_rail_dominance(case):
    netlist, states = case
    got = resolve(netlist, states)
    has_x_gate = any(logic_level(states[d.gate].voltage) == X for d in netlist.devices)
    for d in netlist.devices:
        g = logic_level(states[d.gate].voltage)
        on = g == (HIGH if d.kind is MosKind.NMOS else LOW)
        ends = {d.source, d.drain}
        if on and not has_x_gate and len(ends & {"VDD", "GND"}) == 1:
            (other,) = ends - {"VDD", "GND"}
            node = netlist.node(other)
            if not node.kind.is_source and other not in got.shorts:
                assert got.states[other].driven


def test_threshold_grid():
    for v in np.linspace(0.0, 1.0, 1001):
        v = float(v)
        want = LOW if v <= 0.4 else HIGH if v >= 0.6 else X
        assert logic_level(v) == want
    assert logic_level(0.4) == LOW and logic_level(0.6) == HIGH and logic_level(0.5) == X


def test_config_rejects_bad_thresholds():
    with pytest.raises(ValueError):
        SimConfig(threshold_low=0.6, threshold_high=0.4)
    with pytest.raises(ValueError):
        SimConfig(threshold_low=0.0)


# -- event loop ---------------------------------------------------------------

def test_inverter_step_delay(inverter_text):
    n = parse_netlist(inverter_text)
    stim = Stimulus(20, False, {"a": [(5, 1)]}, 20)
    w = simulate(n, stim)
    assert w.logic_changes("y") == [(0, LOW), (1, HIGH), (6, LOW)]
    w2 = simulate(n, stim, SimConfig(device_delay=3))
    assert w2.logic_changes("y")[-1] == (8, LOW)


def test_sample(inverter_text):
    n = parse_netlist(inverter_text)
    w = simulate(n, Stimulus(20, False, {"a": [(5, 1)]}, 20))
    s0 = sample(w, 0)
    assert s0["y"] == NodeState(0.0, Strength.STORED)
    assert s0["VDD"] == NodeState(1.0, Strength.DRIVEN)
    assert sample(w, 20)["y"] == w.final_states()["y"]
    with pytest.raises(ValueError):
        sample(w, 21)


def test_waveform_records_ascending():
    b = Bench("robust8")
    _, w = b.replay(Scenario("robust8", ((0, 1, 1, 0, 0, 0, 0, 1),), (0,)))
    for name in w.names:
        times = [t for t, _ in w.changes(name)]
        assert times[0] == 0
        assert times == sorted(set(times))


def test_ring_oscillator_detected():
    text = "NODE VDD vdd\nNODE GND gnd\nNODE CLK clock\n" + "".join(
        f"NODE r{i} internal\nMOS p{i} PMOS r{i} VDD r{(i + 1) % 3}\nMOS n{i} NMOS r{i} GND r{(i + 1) % 3}\n"
        for i in range(3))
    with pytest.raises(OscillationDetected) as exc:
        simulate(parse_netlist(text), Stimulus(10000, False, {}, 5000), SimConfig(max_settle_iterations=50))
    assert exc.value.nodes


def test_stimulus_only_drives_inputs(inverter_text):
    n = parse_netlist(inverter_text)
    with pytest.raises(StimulusError, match="not an input"):
        simulate(n, Stimulus(20, False, {"y": [(1, 1)]}, 20))
    with pytest.raises(StimulusError, match="unknown node"):
        simulate(n, Stimulus(20, False, {"q": [(1, 1)]}, 20))


def test_stimulus_parse_round_trip():
    text = "CLOCK 100 0\nAT 2 IP0 1\nAT 2 LA 0\nAT 52 LA 1\nRUN 399\n"
    s = parse_stimulus(text)
    assert s.clock_period == 100 and not s.clock_high_first and s.duration == 399
    assert s.input_schedule["LA"] == [(2, 0), (52, 1)]
    assert parse_stimulus(s.to_text()) == s
    assert s.falling_edges() == [100, 200, 300]
    assert s.rising_edges() == [50, 150, 250, 350]
    assert s.sample_points() == [99, 199, 299]


@pytest.mark.parametrize("text", [
    "AT 1 a 1\nRUN 5\n", "CLOCK 10 0\n", "CLOCK 10 2\nRUN 5\n", "CLOCK 10 0\nAT 1 a 3\nRUN 5\n",
    "CLOCK 10 0\nAT 1 a 1\nAT 1 a 0\nRUN 5\n", "CLOCK 10 0\nWAIT 3\nRUN 5\n",
])
def test_stimulus_parse_errors(text):
    with pytest.raises(StimulusError):
        parse_stimulus(text)


def test_determinism_bit_for_bit():
    b = Bench("cshare8")
    sc = Scenario("cshare8", ((0,) * 7 + (1,), (0,) * 8), (0, 0))
    _, w1 = b.replay(sc)
    _, w2 = Bench("cshare8").replay(sc)
    assert w1.records_equal(w2)


@pytest.mark.parametrize("design", ["robust8", "raceprone8", "cshare8"])
def test_fixpoint_stability(design):
    b = Bench(design)
    _, w = b.replay(Scenario(design, ((1, 0, 1, 0, 0, 1, 0, 0),), (b.design.neutral_la,)))
    assert w.quiescent
    final = w.final_states()
    again = b.sim.resolve_states(final)
    for name, s in final.items():
        assert again.states[name].voltage == pytest.approx(s.voltage, abs=1e-12)
        assert again.states[name].strength == s.strength


@pytest.mark.parametrize("design", ["robust8", "raceprone8", "cshare8", "cascade16"])
def test_incremental_loop_matches_time_stepped(design):
    b = Bench(design)
    rng = np.random.Generator(np.random.PCG64(7))
    for _ in range(3):
        ips = tuple(tuple(int(x) for x in rng.integers(0, 2, b.design.width)) for _ in range(3))
        las = tuple(int(x) for x in rng.integers(0, 2, 3))
        sched = ((1, int(rng.integers(1, 25)), 1 - las[1]),)
        stim = scenario_stimulus(Scenario(design, ips, las, sched), b.design, b.timing)
        w, _ = b.sim.run(stim)
        assert w._records == oracles.time_stepped(b.sim, stim)


def test_snapshot_resume_equals_replay():
    b = Bench("robust8")
    rng = np.random.Generator(np.random.PCG64(3))
    for _ in range(20):
        ips = tuple(tuple(int(x) for x in rng.integers(0, 2, 8)) for _ in range(2))
        las = tuple(int(x) for x in rng.integers(0, 2, 2))
        sc = Scenario("robust8", ips, las)
        assert b.run(sc)[0] == b.replay(sc)[0]


# -- switching activity ---------------------------------------------------------

def test_activity_no_transitions():
    n = parse_netlist("NODE VDD vdd\nNODE GND gnd\nNODE CLK clock\nNODE a internal\n")
    w = simulate(n, Stimulus(10, False, {}, 3))
    act = switching_activity(w)
    assert act.score == 0 and act.total_transitions == 0


def test_activity_inverter_toggle():
    n = parse_netlist("NODE VDD vdd\nNODE GND gnd\nNODE CLK clock\nNODE a input\nNODE y output 1\n"
                      "MOS mp PMOS a VDD y\nMOS mn NMOS a GND y\n")
    # start from the settled state so only the toggle is counted
    sim = Simulator(n)
    settled = sim.run(Stimulus(1000, False, {}, 5))[0].final_states()
    w, _ = sim.run(Stimulus(1000, False, {"a": [(5, 1)]}, 20), settled)
    act = switching_activity(w)
    assert act.transitions == {"a": 1, "y": 1}
    assert act.score == pytest.approx(2.0)


def test_single_output_charged_for_ip3():
    b = Bench("robust8")
    ip = (0, 0, 0, 1, 0, 0, 0, 0)
    stim = scenario_stimulus(Scenario("robust8", (ip,), (0,)), b.design, b.timing, warmup=False)
    w, _ = b.sim.run(stim, b.warm)
    act = switching_activity(w)
    charged = [o for o in b.netlist.outputs if act.transitions.get(o)]
    assert charged == ["OP3"]
    assert w.logic_changes("OP3")[1][1] == HIGH
