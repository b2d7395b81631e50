"""Node subsets as Python int bitmasks."""
from __future__ import annotations

from typing import Iterable, Iterator


def mask_of(nodes: Iterable[int]) -> int:
    m = 0
    for v in nodes:
        m |= 1 << v
    return m


def members(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def popcount(mask: int) -> int:
    return bin(mask).count("1")


def submasks(mask: int) -> Iterator[int]:
    """All submasks of ``mask`` in increasing numeric order."""
    bits = members(mask)
    for i in range(1 << len(bits)):
        m = 0
        for j, b in enumerate(bits):
            if i >> j & 1:
                m |= 1 << b
        yield m


def fmt(mask: int) -> str:
    return "{" + ",".join(map(str, members(mask))) + "}"
