"""Binary words for the Thue-Morse substitution: prefixes, flips, parsing.

Words are stored as packed bit sequences (a Python int, bit i = symbol i)
so that prefixes up to 2^24 symbols stay cheap and all comparisons are
exact integer comparisons.
"""

from __future__ import annotations

from functools import lru_cache


class NotMorseFactor(ValueError):
    """The window admits no valid block offset at the requested scale."""


class AmbiguousWindow(ValueError):
    """The window admits several valid block offsets; it is too short."""

    def __init__(self, offsets):
        super().__init__(f"window too short: valid offsets {sorted(offsets)}")
        self.offsets = sorted(offsets)


class Word:
    """Immutable 0/1 word, packed little-endian into an int."""

    __slots__ = ("bits", "length")

    def __init__(self, bits: int, length: int):
        if length < 0:
            raise ValueError("negative length")
        self.bits = bits & ((1 << length) - 1)
        self.length = length

    @classmethod
    def from_string(cls, s: str) -> "Word":
        bits = 0
        for i, c in enumerate(s):
            if c == "1":
                bits |= 1 << i
            elif c != "0":
                raise ValueError(f"invalid symbol {c!r}")
        return cls(bits, len(s))

    def to_string(self) -> str:
        return "".join("1" if (self.bits >> i) & 1 else "0" for i in range(self.length))

    def __len__(self) -> int:
        return self.length

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Word)
            and self.length == other.length
            and self.bits == other.bits
        )

    def __hash__(self) -> int:
        return hash((self.bits, self.length))

    def __repr__(self) -> str:
        if self.length <= 64:
            return f"Word({self.to_string()!r})"
        return f"Word(<{self.length} symbols>)"

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise IndexError(i)
        return (self.bits >> i) & 1

    def slice(self, start: int, length: int) -> "Word":
        if start < 0 or start + length > self.length:
            raise IndexError((start, length))
        return Word((self.bits >> start) & ((1 << length) - 1), length)

    def concat(self, other: "Word") -> "Word":
        return Word(self.bits | (other.bits << self.length), self.length + other.length)

    def to_json(self) -> str:
        return self.to_string()


def flip(w: Word) -> Word:
    """Symbol-wise complement; an involution."""
    return Word(~w.bits & ((1 << w.length) - 1), w.length)


def substitute(w: Word) -> Word:
    """Apply 0 -> 01, 1 -> 10 symbol-wise.  Output has twice the length."""
    if w.length == 0:
        raise ValueError("empty word")
    bits = 0
    for i in range(w.length):
        b = (w.bits >> i) & 1
        bits |= (b | ((1 - b) << 1)) << (2 * i)
    return Word(bits, 2 * w.length)


@lru_cache(maxsize=32)
def morse_prefix(k: int) -> Word:
    """The word of length 2^k obtained by k-fold substitution from "0".

    Built by the doubling identity: each prefix is the previous one
    followed by its flip.
    """
    if k < 0:
        raise ValueError("negative k")
    w = Word(0, 1)
    for _ in range(k):
        w = w.concat(flip(w))
    return w


def morse_bit(n: int) -> int:
    """Symbol n of the Thue-Morse sequence (parity of binary ones in n)."""
    return bin(n).count("1") & 1


def _valid_offset(w: Word, k: int, o: int) -> bool:
    """Every complete aligned 2^k block at positions == o mod 2^k is u_k or its flip."""
    n = 1 << k
    u = morse_prefix(k)
    ub = flip(u)
    start = o % n
    any_block = False
    while start + n <= w.length:
        blk = w.slice(start, n)
        if blk != u and blk != ub:
            return False
        any_block = True
        start += n
    return any_block


def parse_partition(w: Word, k: int) -> int:
    """Find the unique offset o in [0, 2^k) aligning w to 2^k blocks.

    Raises NotMorseFactor when no offset works and AmbiguousWindow (with
    the candidate list) when several do.  Candidates are pruned
    hierarchically: a valid offset at scale k restricts to a valid offset
    at scale k-1, so only two candidates survive per level.
    """
    if k == 0:
        return 0
    candidates = [0]
    for j in range(1, k + 1):
        next_candidates = []
        for o in candidates:
            for cand in (o, o + (1 << (j - 1))):
                if _valid_offset(w, j, cand):
                    next_candidates.append(cand)
        if not next_candidates:
            raise NotMorseFactor(f"not a Morse factor at scale 2^{j}")
        candidates = next_candidates
    if len(candidates) > 1:
        raise AmbiguousWindow(candidates)
    return candidates[0]


def parse_partition_brute(w: Word, k: int):
    """All valid offsets by direct search; oracle for parse_partition."""
    return [o for o in range(1 << k) if _valid_offset(w, k, o)]


def every_other_match(k: int, blocks: int) -> set:
    """Parities p such that block i (i == p mod 2) of the Morse sequence at
    scale 2^k equals block i+1 of its flip, for all i < blocks.

    The comparison behind the good-set matching argument: shifting the
    flipped sequence left by one block realigns it with the original on
    exactly one parity class.
    """
    if blocks < 1:
        raise ValueError("need at least one block")
    n = 1 << k
    depth = k
    while (1 << depth) < (blocks + 2) * n:
        depth += 1
    m = morse_prefix(depth)
    f = flip(m)
    result = set()
    for p in (0, 1):
        idx = [i for i in range(blocks) if i % 2 == p]
        if idx and all(m.slice(i * n, n) == f.slice((i + 1) * n, n) for i in idx):
            result.add(p)
    return result
