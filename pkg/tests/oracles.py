"""Independent reference implementations used to cross-check the package.

They are deliberately naive: no caching, no region splitting, no incremental
evaluation.
"""

import networkx as nx

from pesim.netlist import MosKind, Netlist
from pesim.sim import _EPS, NodeState, Strength


def level(v, lo=0.4, hi=0.6):
    if v <= lo:
        return 0
    if v >= hi:
        return 1
    return 2


def _pass(netlist: Netlist, states: dict, unknown_on: bool):
    sources = {n.id for n in netlist.nodes if n.kind.is_source}
    g = nx.Graph()
    g.add_nodes_from(n.id for n in netlist.nodes)
    for d in netlist.devices:
        gl = level(states[d.gate].voltage)
        if gl == 2:
            on = unknown_on
        else:
            on = gl == (1 if d.kind is MosKind.NMOS else 0)
        if on:
            g.add_edge(d.source, d.drain)
    # a source is a terminal, not a conductor: split it per attached neighbour
    h = nx.Graph()
    h.add_nodes_from(n for n in g if n not in sources)
    touching = {n: set() for n in h}
    for a, b in g.edges:
        if a in sources and b in sources:
            continue
        if a in sources:
            touching[b].add(a)
        elif b in sources:
            touching[a].add(b)
        else:
            h.add_edge(a, b)
    out, shorts = {}, set()
    cap = {n.id: n.capacitance for n in netlist.nodes}
    for comp in nx.connected_components(h):
        srcs = set().union(*(touching[n] for n in comp))
        levels = {level(states[s].voltage) for s in srcs}
        if srcs and (len(levels) > 1 or 2 in levels):
            for n in comp:
                out[n] = NodeState(0.5, Strength.STORED)
            shorts |= comp
        elif srcs:
            v = float(levels.pop())
            for n in comp:
                out[n] = NodeState(v, Strength.DRIVEN)
        else:
            q = sum(cap[n] * states[n].voltage for n in comp)
            c = sum(cap[n] for n in comp)
            for n in comp:
                out[n] = NodeState(q / c, Strength.STORED)
    for s in sources:
        out[s] = states[s]
    return out, shorts


def resolve(netlist: Netlist, states: dict):
    """One resolution step following the written rules literally."""
    off, shorts = _pass(netlist, states, False)
    if not any(level(states[d.gate].voltage) == 2 for d in netlist.devices):
        return off, shorts
    on, _ = _pass(netlist, states, True)
    out = dict(off)
    for n, st in off.items():
        if level(st.voltage) != level(on[n].voltage):
            out[n] = NodeState(0.5, Strength.STORED)
    return out, shorts


def time_stepped(sim, stim, initial=None):
    """Evaluate the whole circuit at every tick; returns per-node change records."""
    n = len(sim.names)
    volt = [0.0] * n
    drv = [False] * n
    if initial is not None:
        for name, st in initial.items():
            volt[sim.index[name]] = st.voltage
            drv[sim.index[name]] = st.driven
    for i, s in enumerate(sim.is_source):
        if s:
            drv[i] = True
            volt[i] = 1.0 if volt[i] >= 0.5 else 0.0
    volt[sim.vdd], volt[sim.gnd] = 1.0, 0.0
    events = sim._external_events(stim)
    for i, v in events.pop(0, ()):
        volt[i] = v
    recs = [[(0, volt[i], drv[i])] for i in range(n)]
    pending = {}
    for t in range(stim.duration + 1):
        for i, v, d in pending.pop(t, ()):
            if d != drv[i] or abs(v - volt[i]) > _EPS:
                volt[i], drv[i] = v, d
                r = recs[i]
                if r[-1][0] == t:
                    r[-1] = (t, v, d)
                else:
                    r.append((t, v, d))
        for i, v in events.get(t, ()):
            if volt[i] != v:
                volt[i] = v
                recs[i].append((t, v, True))
        new_v, new_d, _ = sim.step(volt, drv)
        upd = [(i, new_v[i], new_d[i]) for i in sim.free
               if new_d[i] != drv[i] or abs(new_v[i] - volt[i]) > _EPS]
        if upd:
            pending[t + sim.config.device_delay] = upd
    return recs
