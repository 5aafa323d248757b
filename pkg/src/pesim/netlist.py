"""Transistor-level netlists: data model, text format and structural checks.

The text format is line oriented, ``#`` starts a comment::

    NODE <name> <vdd|gnd|clock|input|output|internal> [<capacitance>]
    MOS  <name> <NMOS|PMOS> <gate> <source> <drain>
    LAIN <name>
    LAOUT <name>

Input nodes are listed in declaration order, which is also priority order
(index 0 is the highest priority).
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable


class NodeKind(enum.Enum):
    VDD = "vdd"
    GND = "gnd"
    CLOCK = "clock"
    INPUT = "input"
    OUTPUT = "output"
    INTERNAL = "internal"

    @property
    def is_source(self) -> bool:
        """Rails, clock and inputs are ideal drivers; their level is imposed."""
        return self in _SOURCE_KINDS


_SOURCE_KINDS = {NodeKind.VDD, NodeKind.GND, NodeKind.CLOCK, NodeKind.INPUT}

RESERVED = {"VDD": NodeKind.VDD, "GND": NodeKind.GND, "CLK": NodeKind.CLOCK}

DEFAULT_CAPACITANCE = {
    NodeKind.OUTPUT: 10.0,
    NodeKind.INTERNAL: 1.0,
    NodeKind.VDD: 1.0,
    NodeKind.GND: 1.0,
    NodeKind.CLOCK: 1.0,
    NodeKind.INPUT: 1.0,
}


class MosKind(enum.Enum):
    NMOS = "NMOS"
    PMOS = "PMOS"


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    capacitance: float = 1.0


@dataclass(frozen=True)
class MosDevice:
    id: str
    kind: MosKind
    gate: str
    source: str
    drain: str

    @property
    def channel(self) -> tuple[str, str]:
        return (self.source, self.drain)


class NetlistError(ValueError):
    pass


class NetlistSyntaxError(NetlistError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


@dataclass(frozen=True)
class StructuralViolation:
    rule: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.rule}: {self.message}"


@dataclass(frozen=True)
class Netlist:
    nodes: tuple[Node, ...]
    devices: tuple[MosDevice, ...]
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    lookahead_in: str | None = None
    lookahead_out: str | None = None
    name: str = field(default="", compare=False)

    @cached_property
    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def node(self, name: str) -> Node:
        return self.node_map[name]

    def nodes_of_kind(self, kind: NodeKind) -> list[Node]:
        return [n for n in self.nodes if n.kind is kind]

    def _rail(self, kind: NodeKind) -> str:
        found = self.nodes_of_kind(kind)
        if len(found) != 1:
            raise NetlistError(f"expected exactly one {kind.value} node, found {len(found)}")
        return found[0].id

    @property
    def vdd(self) -> str:
        return self._rail(NodeKind.VDD)

    @property
    def gnd(self) -> str:
        return self._rail(NodeKind.GND)

    @property
    def clock(self) -> str:
        return self._rail(NodeKind.CLOCK)

    def to_text(self) -> str:
        return format_netlist(self)


def make_netlist(nodes: Iterable[Node], devices: Iterable[MosDevice],
                 lookahead_in: str | None = None, lookahead_out: str | None = None,
                 name: str = "") -> Netlist:
    """Assemble a netlist, deriving the ordered input/output lists from node order.

    The look-ahead nodes are designated separately and excluded from those lists.
    """
    nodes = tuple(nodes)
    inputs = tuple(n.id for n in nodes if n.kind is NodeKind.INPUT and n.id != lookahead_in)
    outputs = tuple(n.id for n in nodes if n.kind is NodeKind.OUTPUT and n.id != lookahead_out)
    return Netlist(nodes, tuple(devices), inputs, outputs, lookahead_in, lookahead_out, name)


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def parse_netlist(text: str, name: str = "") -> Netlist:
    nodes: dict[str, Node] = {}
    devices: dict[str, MosDevice] = {}
    device_lines: dict[str, int] = {}
    la_in = la_out = None
    seen_kinds: Counter = Counter()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line:
            continue
        words = line.split()
        key = words[0].upper()
        if key == "NODE":
            if len(words) not in (3, 4):
                raise NetlistSyntaxError(lineno, "NODE expects <name> <kind> [<capacitance>]")
            nid, kind_word = words[1], words[2].lower()
            try:
                kind = NodeKind(kind_word)
            except ValueError:
                raise NetlistSyntaxError(lineno, f"unknown node kind {words[2]!r}") from None
            if nid in nodes:
                raise NetlistSyntaxError(lineno, f"duplicate node {nid}")
            if nid in RESERVED and RESERVED[nid] is not kind:
                raise NetlistSyntaxError(lineno, f"reserved name {nid} must be of kind {RESERVED[nid].value}")
            if kind in (NodeKind.VDD, NodeKind.GND, NodeKind.CLOCK):
                if seen_kinds[kind]:
                    raise NetlistSyntaxError(lineno, f"multiple {kind.value} declarations")
                seen_kinds[kind] += 1
            cap = DEFAULT_CAPACITANCE[kind]
            if len(words) == 4:
                try:
                    cap = float(words[3])
                except ValueError:
                    raise NetlistSyntaxError(lineno, f"bad capacitance {words[3]!r}") from None
                if not cap > 0:
                    raise NetlistSyntaxError(lineno, "capacitance must be positive")
            nodes[nid] = Node(nid, kind, cap)
        elif key == "MOS":
            if len(words) != 6:
                raise NetlistSyntaxError(lineno, "MOS expects <name> <NMOS|PMOS> <gate> <source> <drain>")
            did = words[1]
            try:
                mkind = MosKind(words[2].upper())
            except ValueError:
                raise NetlistSyntaxError(lineno, f"unknown device kind {words[2]!r}") from None
            if did in devices:
                raise NetlistSyntaxError(lineno, f"duplicate device {did}")
            devices[did] = MosDevice(did, mkind, words[3], words[4], words[5])
            device_lines[did] = lineno
        elif key in ("LAIN", "LAOUT"):
            if len(words) != 2:
                raise NetlistSyntaxError(lineno, f"{key} expects <name>")
            if key == "LAIN":
                if la_in is not None:
                    raise NetlistSyntaxError(lineno, "multiple LAIN declarations")
                la_in = (words[1], lineno)
            else:
                if la_out is not None:
                    raise NetlistSyntaxError(lineno, "multiple LAOUT declarations")
                la_out = (words[1], lineno)
        else:
            raise NetlistSyntaxError(lineno, f"unknown statement {words[0]!r}")

    # forward references are allowed, so node checks happen after the full read
    for did, dev in devices.items():
        for term in (dev.gate, dev.source, dev.drain):
            if term not in nodes:
                raise NetlistSyntaxError(device_lines[did], f"undeclared node {term}")
        if dev.source == dev.drain:
            raise NetlistSyntaxError(device_lines[did], f"device {did} has source == drain")
    for ref in (la_in, la_out):
        if ref is not None and ref[0] not in nodes:
            raise NetlistSyntaxError(ref[1], f"undeclared node {ref[0]}")

    return make_netlist(nodes.values(), devices.values(),
                        la_in[0] if la_in else None, la_out[0] if la_out else None, name)


def format_netlist(netlist: Netlist) -> str:
    lines = []
    if netlist.name:
        lines.append(f"# {netlist.name}")
    for n in netlist.nodes:
        if n.kind.is_source and n.capacitance == DEFAULT_CAPACITANCE[n.kind]:
            lines.append(f"NODE {n.id} {n.kind.value}")
        else:
            lines.append(f"NODE {n.id} {n.kind.value} {n.capacitance!r}")
    for d in netlist.devices:
        lines.append(f"MOS {d.id} {d.kind.value} {d.gate} {d.source} {d.drain}")
    if netlist.lookahead_in:
        lines.append(f"LAIN {netlist.lookahead_in}")
    if netlist.lookahead_out:
        lines.append(f"LAOUT {netlist.lookahead_out}")
    return "\n".join(lines) + "\n"


def pulldown_devices(netlist: Netlist, node: str) -> list[MosDevice]:
    """NMOS devices whose channel joins ``node`` directly to ground."""
    gnd = netlist.gnd
    return [d for d in netlist.devices
            if d.kind is MosKind.NMOS and {d.source, d.drain} == {node, gnd}]


def validate(netlist: Netlist, two_pulldown: bool = False) -> list[StructuralViolation]:
    """Return every structural problem found; an empty list means the netlist is sound.

    With ``two_pulldown`` set, each output must additionally be tied to ground by
    exactly two NMOS devices and touch no other NMOS channel, so no stack node
    can ever share charge with it.
    """
    out: list[StructuralViolation] = []
    ids = Counter(n.id for n in netlist.nodes)
    for nid, count in ids.items():
        if count > 1:
            out.append(StructuralViolation("duplicate-node", nid, f"node {nid} declared {count} times"))
    dids = Counter(d.id for d in netlist.devices)
    for did, count in dids.items():
        if count > 1:
            out.append(StructuralViolation("duplicate-device", did, f"device {did} declared {count} times"))

    kinds = Counter(n.kind for n in netlist.nodes)
    for kind in (NodeKind.VDD, NodeKind.GND, NodeKind.CLOCK):
        if kinds[kind] != 1:
            out.append(StructuralViolation("rail-count", kind.value,
                                           f"expected one {kind.value} node, found {kinds[kind]}"))
    for n in netlist.nodes:
        if n.id in RESERVED and RESERVED[n.id] is not n.kind:
            out.append(StructuralViolation("reserved-name", n.id, f"{n.id} is reserved for {RESERVED[n.id].value}"))
        if not n.capacitance > 0 and not n.kind.is_source:
            out.append(StructuralViolation("capacitance", n.id, f"node {n.id} has non-positive capacitance"))

    nodes = netlist.node_map
    rails = {n.id for n in netlist.nodes if n.kind in (NodeKind.VDD, NodeKind.GND)}
    for d in netlist.devices:
        missing = [t for t in (d.gate, d.source, d.drain) if t not in nodes]
        for t in missing:
            out.append(StructuralViolation("undeclared-node", d.id, f"device {d.id} references undeclared node {t}"))
        if d.source == d.drain:
            out.append(StructuralViolation("self-channel", d.id, f"device {d.id} has source == drain"))
        if len(rails) == 2 and {d.source, d.drain} == rails:
            out.append(StructuralViolation("rail-short", d.id, f"device {d.id} channel joins VDD and GND (rail short)"))

    for nid in netlist.inputs:
        if nid not in nodes or nodes[nid].kind is not NodeKind.INPUT:
            out.append(StructuralViolation("input-kind", nid, f"listed input {nid} is not an input node"))
    for nid in netlist.outputs:
        if nid not in nodes or nodes[nid].kind is not NodeKind.OUTPUT:
            out.append(StructuralViolation("output-kind", nid, f"listed output {nid} is not an output node"))
    if netlist.lookahead_in is not None:
        la = nodes.get(netlist.lookahead_in)
        if la is None or la.kind is not NodeKind.INPUT:
            out.append(StructuralViolation("lookahead-kind", netlist.lookahead_in,
                                           "look-ahead input must be an input node"))
    if netlist.lookahead_out is not None and netlist.lookahead_out not in nodes:
        out.append(StructuralViolation("undeclared-node", netlist.lookahead_out,
                                       "look-ahead output is not declared"))

    if two_pulldown and kinds[NodeKind.GND] == 1:
        for nid in netlist.outputs:
            pd = pulldown_devices(netlist, nid)
            if len(pd) != 2:
                out.append(StructuralViolation("two-pulldown", nid,
                                               f"output {nid} has {len(pd)} NMOS pull-downs to GND, expected 2"))
            pd_ids = {d.id for d in pd}
            others = [d.id for d in netlist.devices
                      if d.kind is MosKind.NMOS and nid in d.channel and d.id not in pd_ids]
            if others:
                out.append(StructuralViolation("two-pulldown", nid,
                                               f"output {nid} has extra NMOS channels: {', '.join(others)}"))
    return out


def device_count(netlist: Netlist) -> dict[str, int]:
    counts = Counter(d.kind.value for d in netlist.devices)
    return {"NMOS": counts["NMOS"], "PMOS": counts["PMOS"], "total": len(netlist.devices)}
