"""Functional reference models for priority encoders.

Vectors are tuples of 0/1 with index 0 the highest priority.  Bit strings are
written with index 0 leftmost, so ``"00100100"`` has bits 2 and 5 set.
"""

from __future__ import annotations

from typing import NamedTuple, Sequence

PEVector = tuple[int, ...]


def vector(bits: str | Sequence[int]) -> PEVector:
    if isinstance(bits, str):
        bits = [int(c) for c in bits]
    out = tuple(int(b) for b in bits)
    if any(b not in (0, 1) for b in out):
        raise ValueError(f"not a bit vector: {bits!r}")
    return out


def from_int(value: int, width: int) -> PEVector:
    """Bit ``i`` of the vector is bit ``i`` of ``value``."""
    return tuple((value >> i) & 1 for i in range(width))


def to_int(bits: Sequence[int]) -> int:
    return sum(b << i for i, b in enumerate(bits))


def to_str(bits: Sequence[int]) -> str:
    return "".join(str(b) for b in bits)


def pe_general(ip: Sequence[int]) -> PEVector:
    """Pass the priority token down from index 0; only its holder may output 1."""
    ip = vector(ip)
    if not ip:
        raise ValueError("priority encoder needs at least one input")
    out = [0] * len(ip)
    for i, b in enumerate(ip):
        if b:
            out[i] = 1
            break
    return tuple(out)


class PE8Result(NamedTuple):
    op: PEVector
    la_inter: int
    la_out: int


def pe8(ip: Sequence[int], la: int) -> PE8Result:
    """8-bit cell with an active-low look-ahead input (``la=1`` disables the cell).

    ``la_inter`` disables the lower half: it is set by ``la`` or by any request
    in bits 0-3.
    """
    ip = vector(ip)
    if len(ip) != 8:
        raise ValueError("pe8 takes exactly 8 input bits")
    if la not in (0, 1):
        raise ValueError("look-ahead must be 0 or 1")
    nla = 1 - la
    n = [1 - b for b in ip]
    upper = (
        nla & ip[0],
        nla & n[0] & ip[1],
        nla & n[0] & n[1] & ip[2],
        nla & n[0] & n[1] & n[2] & ip[3],
    )
    la_inter = la | ip[0] | ip[1] | ip[2] | ip[3]
    ni = 1 - la_inter
    lower = (
        ni & ip[4],
        ni & n[4] & ip[5],
        ni & n[4] & n[5] & ip[6],
        ni & n[4] & n[5] & n[6] & ip[7],
    )
    la_out = la | int(any(ip))
    return PE8Result(upper + lower, la_inter, la_out)


def block_lookaheads(ip: Sequence[int], la: int = 0, block: int = 8) -> list[int]:
    """Look-ahead for each block, each taken straight from the raw inputs above it."""
    nblocks = len(ip) // block
    return [la | int(any(ip[: b * block])) for b in range(nblocks)]


def cascade(ip: Sequence[int], la: int = 0) -> PEVector:
    ip = vector(ip)
    if not ip or len(ip) % 8:
        raise ValueError(f"cascade width must be a positive multiple of 8, got {len(ip)}")
    out: list[int] = []
    for b, bla in enumerate(block_lookaheads(ip, la)):
        out.extend(pe8(ip[8 * b: 8 * b + 8], bla).op)
    return tuple(out)


def walking_ones(width: int) -> list[PEVector]:
    return [tuple(1 if j == i else 0 for j in range(width)) for i in range(width)]
