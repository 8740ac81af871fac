"""Canonical cylinders (levels) of both systems and their projections.

A Morse level is one rung of one of the two Kakutani-Rokhlin towers of
the substitution system at stage exponent k; an odometer level is one
rung of the single dyadic tower.  Projections send a level to the unique
coarser level containing it.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .words import Word, flip, morse_bit, morse_prefix

# Explicit word comparison is used for bar computation up to this stage
# exponent; above it only the parity form is possible.
DIRECT_COMPARE_MAX_K = 24


@dataclass(frozen=True, order=True)
class MorseLevel:
    k: int
    i: int
    bar: bool = False

    def __post_init__(self):
        if not 0 <= self.i < (1 << self.k):
            raise ValueError(f"position {self.i} out of range for k={self.k}")

    def to_json(self):
        return {"sys": "M", "k": self.k, "i": self.i, "bar": self.bar}


@dataclass(frozen=True, order=True)
class OdometerLevel:
    k: int
    i: int

    def __post_init__(self):
        if not 0 <= self.i < (1 << self.k):
            raise ValueError(f"position {self.i} out of range for k={self.k}")

    def to_json(self):
        return {"sys": "O", "k": self.k, "i": self.i}


Level = Union[MorseLevel, OdometerLevel]


def level_from_json(d) -> Level:
    if d["sys"] == "M":
        return MorseLevel(d["k"], d["i"], bool(d.get("bar", False)))
    if d["sys"] == "O":
        return OdometerLevel(d["k"], d["i"])
    raise ValueError(f"unknown system {d['sys']!r}")


def odometer_word(l: OdometerLevel) -> Word:
    """Length-k cylinder word: binary expansion of i, least significant first."""
    return Word(l.i, l.k)


def block_bar(k: int, k2: int, block_index: int) -> int:
    """Whether aligned 2^k2 block number block_index of the stage-k word
    is the flip of the stage-k2 prefix (0 = plain, 1 = flipped)."""
    if k <= DIRECT_COMPARE_MAX_K:
        u = morse_prefix(k)
        blk = u.slice(block_index << k2, 1 << k2)
        if blk == morse_prefix(k2):
            return 0
        if blk == flip(morse_prefix(k2)):
            return 1
        raise AssertionError("block is neither the prefix nor its flip")
    return morse_bit(block_index)


def project_morse(l: MorseLevel, k2: int) -> MorseLevel:
    """The stage-k2 level containing l (k2 <= l.k)."""
    if k2 > l.k:
        raise ValueError("upward projection")
    if k2 == l.k:
        return l
    b = block_bar(l.k, k2, l.i >> k2)
    return MorseLevel(k2, l.i & ((1 << k2) - 1), bool(b ^ l.bar))


def project_odometer(l: OdometerLevel, k2: int) -> OdometerLevel:
    """The stage-k2 level containing l: keep the first k2 cylinder symbols."""
    if k2 > l.k:
        raise ValueError("upward projection")
    return OdometerLevel(k2, l.i & ((1 << k2) - 1))


def project_level(l: Level, k2: int) -> Level:
    if isinstance(l, MorseLevel):
        return project_morse(l, k2)
    return project_odometer(l, k2)


def level_measure(l: Level) -> Fraction:
    if isinstance(l, MorseLevel):
        return Fraction(1, 1 << (l.k + 1))
    return Fraction(1, 1 << l.k)


def advance_level(l: Level):
    """One step up the tower; None at the top rung."""
    if l.i + 1 >= (1 << l.k):
        return None
    if isinstance(l, MorseLevel):
        return MorseLevel(l.k, l.i + 1, l.bar)
    return OdometerLevel(l.k, l.i + 1)
