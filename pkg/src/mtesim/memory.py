"""Tagged memory model.

Memory is a sparse byte store plus a parallel sparse store of 4-bit tags,
one tag per 16-byte granule.  Untouched bytes read as 0 and untouched
granules carry tag 0, so "never allocated" and "unprotected" fall out of
the representation for free.

Pointers carry a 4-bit address tag in bits [59:56] (the low nibble of the
top byte); the whole top byte is ignored when forming an address, mirroring
top-byte-ignore addressing.  Bits [63:60] are kept zero as a canary.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Dict

GRANULE_SIZE = 16
TAG_BITS = 4
TAG_SHIFT = 56
ADDRESS_MASK = (1 << TAG_SHIFT) - 1  # clears the whole top byte
MASK64 = (1 << 64) - 1
GRANULE_MASK = ~(GRANULE_SIZE - 1)


def untagged(raw: int) -> int:
    """Strip the top byte of a 64-bit pointer value, leaving the address."""
    return raw & ADDRESS_MASK


def address_tag(raw: int) -> int:
    """Extract the 4-bit address tag from bits [59:56] of a pointer value."""
    return (raw >> TAG_SHIFT) & 0xF


@dataclass(frozen=True)
class TaggedPointer:
    """A 64-bit pointer value with a 4-bit tag in the top byte.

    Bits [63:60] must be zero; the allocator never produces anything else
    and consumers treat a nonzero high nibble as a wild pointer.
    """

    raw: int

    def __post_init__(self):
        if not 0 <= self.raw <= MASK64:
            raise ValueError(f"pointer value out of 64-bit range: {self.raw:#x}")
        if (self.raw >> 60) & 0xF:
            raise ValueError(f"bits [63:60] of a tagged pointer must be zero: {self.raw:#x}")

    @classmethod
    def make(cls, address: int, tag: int) -> "TaggedPointer":
        if not 0 <= tag <= 0xF:
            raise ValueError(f"tag out of range: {tag}")
        return cls((address & ADDRESS_MASK) | (tag << TAG_SHIFT))

    @property
    def tag(self) -> int:
        return address_tag(self.raw)

    @property
    def address(self) -> int:
        return untagged(self.raw)


class TaggedMemory:
    """Sparse data bytes plus a 4-bit tag per 16-byte granule.

    Data and tags are independent maps: tag writes never disturb bytes and
    byte writes never disturb tags.  Reads of untouched locations return 0.
    All addresses are interpreted with the top byte masked off, so callers
    may pass tagged pointer values directly.
    """

    def __init__(self):
        self.data: Dict[int, int] = {}
        self.tags: Dict[int, int] = {}

    def set_granule_tag(self, addr: int, tag: int) -> None:
        if not 0 <= tag <= 0xF:
            raise ValueError(f"tag out of range: {tag}")
        self.tags[untagged(addr) // GRANULE_SIZE] = tag

    def get_granule_tag(self, addr: int) -> int:
        return self.tags.get(untagged(addr) // GRANULE_SIZE, 0)

    def read_bytes(self, addr: int, length: int) -> bytes:
        base = untagged(addr)
        return bytes(self.data.get(base + i, 0) for i in range(length))

    def write_bytes(self, addr: int, data: bytes) -> None:
        base = untagged(addr)
        for i, b in enumerate(data):
            self.data[base + i] = b

    def read_byte(self, addr: int) -> int:
        return self.data.get(untagged(addr), 0)

    def write_byte(self, addr: int, value: int) -> None:
        self.data[untagged(addr)] = value & 0xFF


def tag_storage_overhead(granule_size: int = GRANULE_SIZE, tag_bits: int = TAG_BITS) -> Fraction:
    """Fraction of total physical storage devoted to tag storage.

    Each granule of `granule_size` bytes (8 * granule_size bits) needs
    `tag_bits` bits of tag storage, so tags take
    tag_bits / (8 * granule_size + tag_bits) of everything.  With the
    default 16-byte granule and 4-bit tag this is 1/33, about 3%.
    Overrides exist so experiments can report hypothetical geometries
    (1-byte granules cost a full third of memory).
    """
    return Fraction(tag_bits, 8 * granule_size + tag_bits)
