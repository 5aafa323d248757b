"""Waveform export as a VCD file (1-bit wires, values 0/1/x)."""

from __future__ import annotations

from typing import Iterable, TextIO

from vcd import VCDWriter

from .sim import Waveform, logic_char, logic_level


def write_vcd(waveform: Waveform, out: TextIO, nodes: Iterable[str] | None = None,
              scope: str = "top", timescale: str = "1 ps") -> None:
    """Write the logic view of ``waveform``; one VCD identifier per node.

    No date or version header is emitted, so identical waveforms give identical files.
    """
    names = list(nodes) if nodes is not None else list(waveform.names)
    lo, hi = waveform.config.threshold_low, waveform.config.threshold_high
    events: list[tuple[int, int, str]] = []
    with VCDWriter(out, timescale=timescale, date="", version="") as writer:
        handles = []
        for k, name in enumerate(names):
            changes = waveform.changes(name)
            first = logic_char(logic_level(changes[0][1].voltage, lo, hi)) if changes else "x"
            handles.append(writer.register_var(scope, name, "wire", size=1, init=first))
            last = first
            for t, state in changes[1:]:
                value = logic_char(logic_level(state.voltage, lo, hi))
                if value != last:
                    events.append((t, k, value))
                    last = value
        for t, k, value in sorted(events):
            writer.change(handles[k], t, value)
