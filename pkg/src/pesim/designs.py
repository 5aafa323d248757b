"""Netlist constructors for the robust 8-bit encoder, two failure archetypes
and cascaded wide encoders.

Node names shared by every design: ``IP<i>`` inputs, ``OP<i>`` outputs,
``LA`` look-ahead input and ``LA_OUT`` look-ahead output.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

from . import behavior
from .netlist import (DEFAULT_CAPACITANCE, MosDevice, MosKind, Netlist, Node,
                      NodeKind, device_count, make_netlist)

OUTPUT_CAP = DEFAULT_CAPACITANCE[NodeKind.OUTPUT]
# stack nodes of the charge-sharing archetype; comparable to the dynamic node
CSHARE_STACK_CAP = 2.0


class Builder:
    """Accumulates nodes and devices; every device is tagged with a group name."""

    def __init__(self, name: str):
        self.name = name
        self.nodes: dict[str, Node] = {}
        self.devices: list[MosDevice] = []
        self.groups: dict[str, str] = {}
        self.group = "misc"
        self._serial = Counter()
        for rail, kind in (("VDD", NodeKind.VDD), ("GND", NodeKind.GND), ("CLK", NodeKind.CLOCK)):
            self.node(rail, kind)

    def node(self, name: str, kind: NodeKind = NodeKind.INTERNAL, cap: float | None = None) -> str:
        if name not in self.nodes:
            self.nodes[name] = Node(name, kind, DEFAULT_CAPACITANCE[kind] if cap is None else cap)
        return name

    def _auto(self, stem: str) -> str:
        self._serial[stem] += 1
        return f"{stem}{self._serial[stem]}"

    def mos(self, kind: MosKind, gate: str, source: str, drain: str, name: str | None = None) -> str:
        for n in (gate, source, drain):
            self.node(n)
        name = name or self._auto("mn" if kind is MosKind.NMOS else "mp")
        self.devices.append(MosDevice(name, kind, gate, source, drain))
        self.groups[name] = self.group
        return name

    def nmos(self, gate, source, drain, name=None):
        return self.mos(MosKind.NMOS, gate, source, drain, name)

    def pmos(self, gate, source, drain, name=None):
        return self.mos(MosKind.PMOS, gate, source, drain, name)

    # static CMOS gates -----------------------------------------------------

    def inv(self, a: str, out: str, tag: str | None = None) -> str:
        tag = tag or out
        self.pmos(a, "VDD", out, f"{tag}.p")
        self.nmos(a, "GND", out, f"{tag}.n")
        return out

    def nor(self, ins: Sequence[str], out: str, tag: str | None = None) -> str:
        tag = tag or out
        if len(ins) == 1:
            return self.inv(ins[0], out, tag)
        prev = "VDD"
        for k, a in enumerate(ins):
            nxt = out if k == len(ins) - 1 else self.node(f"{tag}.s{k}")
            self.pmos(a, prev, nxt, f"{tag}.p{k}")
            prev = nxt
        for k, a in enumerate(ins):
            self.nmos(a, "GND", out, f"{tag}.n{k}")
        return out

    def nand(self, ins: Sequence[str], out: str, tag: str | None = None) -> str:
        tag = tag or out
        if len(ins) == 1:
            return self.inv(ins[0], out, tag)
        prev = "GND"
        for k, a in enumerate(ins):
            nxt = out if k == len(ins) - 1 else self.node(f"{tag}.s{k}")
            self.nmos(a, prev, nxt, f"{tag}.n{k}")
            prev = nxt
        for k, a in enumerate(ins):
            self.pmos(a, "VDD", out, f"{tag}.p{k}")
        return out

    def or_gate(self, ins: Sequence[str], out: str, tag: str | None = None) -> str:
        """Static OR of any fan-in, as NOR+INV, NAND-of-NORs, or a tree of those.

        ``tag`` names the internal nodes and devices (defaults to ``out``).
        """
        tag = tag or out
        ins = list(ins)
        if len(ins) <= 4:
            self.nor(ins, f"{tag}_n")
            return self.inv(f"{tag}_n", out, tag)
        chunks = [ins[i:i + 4] for i in range(0, len(ins), 4)]
        if len(chunks) <= 4:
            nors = [self.nor(ch, f"{tag}_n{j}") for j, ch in enumerate(chunks)]
            return self.nand(nors, out, tag)
        subs = [self.or_gate(ins[i:i + 16], f"{tag}_g{j}") for j, i in enumerate(range(0, len(ins), 16))]
        return self.or_gate(subs, out, tag)

    def netlist(self, lookahead_in: str | None = None, lookahead_out: str | None = None) -> Netlist:
        return make_netlist(self.nodes.values(), self.devices, lookahead_in, lookahead_out, self.name)


def _declare_ports(b: Builder, width: int, la_out: bool = True) -> tuple[list[str], list[str]]:
    ips = [b.node(f"IP{i}", NodeKind.INPUT) for i in range(width)]
    b.node("LA", NodeKind.INPUT)
    ops = [b.node(f"OP{i}", NodeKind.OUTPUT) for i in range(width)]
    if la_out:
        b.node("LA_OUT", NodeKind.OUTPUT)
    return ips, ops


def _chain(b: Builder, pfx: str, head: str, ips: Sequence[str], ipbs: Sequence[str],
           ops: Sequence[str], chain_names: Sequence[str]):
    """Series p-type token chain: branch k conducts iff IP_k=1, link k iff IP_k=0.

    At most one branch can ever be reached from ``head``: the chain stops at the
    first requesting bit, which is the bit that is charged.
    """
    node = head
    for k in range(len(ips)):
        b.pmos(ipbs[k], node, ops[k], f"{pfx}pb{k}")
        if k < len(ips) - 1:
            nxt = b.node(chain_names[k])
            b.pmos(ips[k], node, nxt, f"{pfx}pc{k}")
            node = nxt


def robust_cell(b: Builder, ips: Sequence[str], ops: Sequence[str], la: str, la_out: str,
                pfx: str = "") -> None:
    """The race-free, charge-sharing-free 8-bit cell (active-low look-ahead)."""
    assert len(ips) == len(ops) == 8
    clkb = f"{pfx}clkb"
    b.group = "clock inverter"
    b.inv("CLK", clkb)
    b.group = "input inverters"
    ipbs = [b.inv(ip, f"{pfx}ipb{i}") for i, ip in enumerate(ips)]

    b.group = "second-level look-ahead"
    la_inter = b.or_gate([la, *ips[:4]], f"{pfx}la_inter")

    b.group = "upper p-chain"
    b.pmos(clkb, "VDD", b.node(f"{pfx}u_clk"), f"{pfx}pu_clk")
    b.pmos(la, f"{pfx}u_clk", b.node(f"{pfx}en_hi"), f"{pfx}pu_la")
    _chain(b, pfx, f"{pfx}en_hi", ips[:4], ipbs[:4], ops[:4], [f"{pfx}la{k}" for k in range(3)])

    b.group = "lower p-chain"
    b.pmos(clkb, "VDD", b.node(f"{pfx}l_clk"), f"{pfx}pl_clk")
    b.pmos(la_inter, f"{pfx}l_clk", b.node(f"{pfx}en_lo"), f"{pfx}pl_la")
    _chain(b, f"{pfx}l", f"{pfx}en_lo", ips[4:], ipbs[4:], ops[4:], [f"{pfx}lb{k}" for k in range(3)])

    b.group = "pre-discharge"
    for i, op in enumerate(ops):
        b.nmos(clkb, "GND", op, f"{pfx}pd{i}")
    b.group = "reset"
    for i, op in enumerate(ops):
        b.nmos(la if i < 4 else la_inter, "GND", op, f"{pfx}rs{i}")

    b.group = "look-ahead output"
    b.or_gate([la_inter, *ips[4:]], la_out, f"{pfx}la_out")


def build_robust_pe8() -> Netlist:
    b = Builder("robust8")
    ips, ops = _declare_ports(b, 8)
    robust_cell(b, ips, ops, "LA", "LA_OUT")
    return b.netlist("LA", "LA_OUT")


def robust_pe8_breakdown() -> dict[str, int]:
    b = Builder("robust8")
    ips, ops = _declare_ports(b, 8)
    robust_cell(b, ips, ops, "LA", "LA_OUT")
    return dict(Counter(b.groups.values()))


def build_race_prone_pe8() -> Netlist:
    """Active-high look-ahead (``LA=1`` enables) and no reset devices.

    A late look-ahead drop cuts the pull-up chain but nothing discharges an
    output that was already charged, so it stays 1 until the next pre-discharge.
    """
    b = Builder("raceprone8")
    ips, ops = _declare_ports(b, 8, la_out=False)
    b.group = "clock inverter"
    b.inv("CLK", "clkb")
    b.group = "input inverters"
    ipbs = [b.inv(ip, f"ipb{i}") for i, ip in enumerate(ips)]
    lab = b.inv("LA", "lab")
    b.group = "second-level look-ahead"
    dis_lo = b.or_gate(["lab", *ips[:4]], "dis_lo")
    b.group = "upper p-chain"
    b.pmos("clkb", "VDD", b.node("u_clk"), "pu_clk")
    b.pmos(lab, "u_clk", b.node("en_hi"), "pu_la")
    _chain(b, "", "en_hi", ips[:4], ipbs[:4], ops[:4], [f"la{k}" for k in range(3)])
    b.group = "lower p-chain"
    b.pmos("clkb", "VDD", b.node("l_clk"), "pl_clk")
    b.pmos(dis_lo, "l_clk", b.node("en_lo"), "pl_la")
    _chain(b, "l", "en_lo", ips[4:], ipbs[4:], ops[4:], [f"lb{k}" for k in range(3)])
    b.group = "pre-discharge"
    for i, op in enumerate(ops):
        b.nmos("clkb", "GND", op, f"pd{i}")
    return b.netlist("LA")


def build_charge_share_prone_pe8() -> Netlist:
    """Domino archetype: precharged-high dynamic nodes, each with a series n-stack.

    The clocked evaluation device sits at the top of each stack and the
    complemented inputs are clock-gated, so during precharge the stack nodes
    are cut off from the dynamic node and keep whatever charge the previous
    evaluation left on them.
    """
    b = Builder("cshare8")
    ips, ops = _declare_ports(b, 8, la_out=False)
    b.group = "clock inverter"
    b.inv("CLK", "clkb")
    b.group = "gated complements"
    gipb = [b.nor(["clkb", ip], f"gipb{j}") for j, ip in enumerate(ips[:7])]
    b.group = "look-ahead inverter"
    lab = b.inv("LA", "lab")
    for k in range(8):
        dyn = b.node(f"dyn{k}", NodeKind.INTERNAL, OUTPUT_CAP)
        b.group = "precharge"
        b.pmos("CLK", "VDD", dyn, f"pre{k}")
        b.group = "evaluation stacks"
        stack = [b.node(f"s{k}_{m}", NodeKind.INTERNAL, CSHARE_STACK_CAP) for m in range(k + 2)]
        b.nmos("CLK", dyn, stack[0], f"ev{k}")
        gates = [gipb[j] for j in range(k - 1, -1, -1)] + [ips[k]]
        for m, g in enumerate(gates):
            b.nmos(g, stack[m], stack[m + 1], f"st{k}_{m}")
        b.nmos(lab, stack[-1], "GND", f"en{k}")
        b.group = "output inverters"
        b.inv(dyn, ops[k])
    return b.netlist("LA")


def build_cascaded(n_bits: int) -> Netlist:
    """``n_bits/8`` robust cells; block ``b`` is disabled by the OR of ``LA`` and
    every raw input of the blocks above it."""
    if n_bits <= 0 or n_bits % 8:
        raise ValueError(f"cascade width must be a positive multiple of 8, got {n_bits}")
    nblocks = n_bits // 8
    b = Builder(f"cascade{n_bits}")
    ips, ops = _declare_ports(b, n_bits)
    b.group = "look-ahead glue"
    groups = [b.or_gate(ips[8 * k: 8 * k + 8], f"grp{k}") for k in range(nblocks - 1)]
    block_la = ["LA"]
    for k in range(1, nblocks):
        b.group = "look-ahead glue"
        block_la.append(b.or_gate(["LA", *groups[:k]], f"la_blk{k}"))
    for k in range(nblocks):
        la_out = "LA_OUT" if k == nblocks - 1 else f"b{k}_la_out"
        robust_cell(b, ips[8 * k: 8 * k + 8], ops[8 * k: 8 * k + 8], block_la[k], la_out, f"b{k}_")
    return b.netlist("LA", "LA_OUT")


def glue_device_count(netlist: Netlist) -> int:
    """Devices outside the per-block cells of a cascaded netlist."""
    return sum(1 for d in netlist.devices if not re.match(r"b\d+_", d.id))


@dataclass(frozen=True)
class Design:
    name: str
    width: int
    la_active_low: bool
    build: Callable[[], Netlist]

    @property
    def neutral_la(self) -> int:
        """Look-ahead level that enables the cell."""
        return 0 if self.la_active_low else 1

    def enabled(self, la: int) -> bool:
        return la == self.neutral_la

    def expected(self, ip: Sequence[int], la: int) -> behavior.PEVector:
        if not self.la_active_low:
            return behavior.pe_general(ip) if la else (0,) * len(ip)
        if self.width == 8:
            return behavior.pe8(ip, la).op
        return behavior.cascade(ip, la)


_FIXED = {
    "robust8": Design("robust8", 8, True, build_robust_pe8),
    "raceprone8": Design("raceprone8", 8, False, build_race_prone_pe8),
    "cshare8": Design("cshare8", 8, True, build_charge_share_prone_pe8),
}


def get_design(name: str) -> Design:
    if name in _FIXED:
        return _FIXED[name]
    m = re.fullmatch(r"cascade(\d+)", name)
    if m:
        n = int(m.group(1))
        if n <= 0 or n % 8:
            raise ValueError(f"cascade width must be a positive multiple of 8, got {n}")
        return Design(name, n, True, lambda: build_cascaded(n))
    raise ValueError(f"unknown design {name!r}; choose robust8, raceprone8, cshare8 or cascade<N>")


DESIGN_NAMES = tuple(_FIXED)


# reference transistor count the 8-bit cell is compared against
REFERENCE_ROBUST8_COUNT = 79


def device_report(name: str = "robust8") -> dict:
    """Device totals with a per-group breakdown and the delta to the reference count."""
    design = get_design(name)
    counts = device_count(design.build())
    out = {"design": name, "counts": counts}
    if name == "robust8":
        out["breakdown"] = dict(sorted(robust_pe8_breakdown().items()))
        out["reference_total"] = REFERENCE_ROBUST8_COUNT
        out["delta"] = counts["total"] - REFERENCE_ROBUST8_COUNT
    return out
