"""Partial interval bijections and the operations used to combine them.

A PIB is the quintuple [I, J, A, B, f]: finite integer intervals I and J,
A a subset of I, B a subset of J, and f a bijection A -> B.  Small maps
keep f as sorted pairs; reordering maps of huge intervals are permutation
rule objects answering image/preimage in O(1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple


class OverlapMismatch(ValueError):
    """Sticky notes at a gluing junction are not equivalent."""


@dataclass(frozen=True)
class Interval:
    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length

    def __contains__(self, j: int) -> bool:
        return self.start <= j < self.stop

    def shift(self, t: int) -> "Interval":
        return Interval(self.start + t, self.length)


EMPTY = Interval(0, 0)


@dataclass(frozen=True)
class PIB:
    I: Interval
    J: Interval
    pairs: Tuple[Tuple[int, int], ...]          # sorted by domain position
    domain_template: Optional[object] = None
    range_template: Optional[object] = None
    notes: Optional["Notes"] = None

    def __post_init__(self):
        a_seen = set()
        b_seen = set()
        for a, b in self.pairs:
            if a not in self.I or b not in self.J:
                raise ValueError(f"pair ({a},{b}) outside [I]x[J]")
            if a in a_seen or b in b_seen:
                raise ValueError("f is not a bijection")
            a_seen.add(a)
            b_seen.add(b)

    @property
    def A(self) -> tuple:
        return tuple(a for a, _ in self.pairs)

    @property
    def B(self) -> tuple:
        return tuple(sorted(b for _, b in self.pairs))

    def image(self, a: int) -> Optional[int]:
        for x, y in self.pairs:
            if x == a:
                return y
        return None

    def range_level(self, b: int):
        if self.range_template is None:
            raise ValueError("untyped match: no range template")
        return self.range_template.level_at(b - self.J.start)

    def domain_level(self, a: int):
        if self.domain_template is None:
            raise ValueError("no domain template")
        return self.domain_template.level_at(a - self.I.start)

    def with_templates(self, dom=None, rng=None) -> "PIB":
        return replace(self, domain_template=dom or self.domain_template,
                       range_template=rng or self.range_template)

    def with_notes(self, bottom: "PIB", body: "PIB", top: "PIB",
                   mode: str = "disjoint") -> "PIB":
        return replace(self, notes=Notes(bottom, body, top, mode))

    def to_json(self):
        return {
            "I": [self.I.start, self.I.stop - 1] if self.I.length else [],
            "J": [self.J.start, self.J.stop - 1] if self.J.length else [],
            "A": list(self.A),
            "pairs": [list(p) for p in self.pairs],
        }


@dataclass(frozen=True)
class Notes:
    bottom: PIB
    body: PIB
    top: PIB
    mode: str                                   # 'disjoint' | 'overlapping'


def make_pib(I, J, mapping, dom=None, rng=None) -> PIB:
    """mapping: dict or pair iterable; intervals as (start, length) or Interval."""
    if not isinstance(I, Interval):
        I = Interval(*I)
    if not isinstance(J, Interval):
        J = Interval(*J)
    if isinstance(mapping, dict):
        pairs = tuple(sorted(mapping.items()))
    else:
        pairs = tuple(sorted(mapping))
    return PIB(I, J, pairs, dom, rng)


EMPTY_PIB = PIB(EMPTY, EMPTY, ())


def invert(f: PIB) -> PIB:
    notes = None
    if f.notes is not None:
        notes = Notes(invert(f.notes.bottom), invert(f.notes.body),
                      invert(f.notes.top), f.notes.mode)
    return PIB(f.J, f.I, tuple(sorted((b, a) for a, b in f.pairs)),
               f.range_template, f.domain_template, notes)


def equivalent(f: PIB, g: PIB) -> bool:
    """One map is a translate of the other (templates are ignored)."""
    if f.I.length != g.I.length or f.J.length != g.J.length:
        return False
    if len(f.pairs) != len(g.pairs):
        return False
    t = g.I.start - f.I.start
    s = g.J.start - f.J.start
    return all((a + t, b + s) in g.pairs for a, b in f.pairs)


def matches(f: PIB, g: PIB) -> bool:
    """Same I, J, A, and identical range levels at the mapped positions."""
    if f.I != g.I or f.J != g.J or f.A != g.A:
        return False
    if f.range_template is None or g.range_template is None:
        raise ValueError("untyped match: range template missing")
    for a, b in f.pairs:
        if f.range_level(b) != g.range_level(g.image(a)):
            return False
    return True


def _normalized(f: PIB) -> PIB:
    """Translate so both intervals start at 0 (templates kept)."""
    di, dj = f.I.start, f.J.start
    if di == 0 and dj == 0:
        return f
    return PIB(Interval(0, f.I.length), Interval(0, f.J.length),
               tuple((a - di, b - dj) for a, b in f.pairs),
               f.domain_template, f.range_template, f.notes)


def concat(f: PIB, g: PIB) -> PIB:
    """Simple concatenation: shift g past f and take unions."""
    f = _normalized(f)
    g = _normalized(g)
    t, s = f.I.length, f.J.length
    pairs = f.pairs + tuple((a + t, b + s) for a, b in g.pairs)
    return PIB(Interval(0, t + g.I.length), Interval(0, s + g.J.length), pairs)


def concat_all(fs: Sequence[PIB]) -> PIB:
    out = EMPTY_PIB
    for f in fs:
        out = concat(out, f)
    return out


def _strip_bottom_note(g: PIB) -> PIB:
    """g without the domain/range span of its bottom sticky note."""
    cut_a = g.notes.bottom.I.length
    cut_b = g.notes.bottom.J.length
    gn = _normalized(g)
    kept = tuple((a, b) for a, b in gn.pairs if a >= cut_a)
    if any(b < cut_b for _, b in kept):
        raise OverlapMismatch("note span is not an initial segment of the range")
    if len(kept) + sum(1 for a, _ in gn.pairs if a < cut_a) != len(gn.pairs):
        raise AssertionError
    return PIB(Interval(cut_a, gn.I.length - cut_a),
               Interval(cut_b, gn.J.length - cut_b), kept)


def overlap_concat(f: PIB, g: PIB) -> PIB:
    """Glue f and g along equivalent sticky notes.

    Works for both decomposition styles: when the notes are disjoint
    pieces this is the five-term simple concatenation; when they overlap
    their own bodies the same flat formula applies and the inner middle is
    reassembled recursively.  The result keeps a decomposition with
    bottom = f's bottom note and top = g's top note.
    """
    if f.notes is None or g.notes is None:
        raise OverlapMismatch("operands must carry sticky-note decompositions")
    if not equivalent(f.notes.top, g.notes.bottom):
        raise OverlapMismatch("overlap mismatch: top note of left piece is not "
                              "equivalent to bottom note of right piece")
    flat = concat(f, _strip_bottom_note(g))
    mode = f.notes.mode
    if mode == "disjoint":
        middle = concat_all([f.notes.body, f.notes.top, g.notes.body])
    else:
        middle = overlap_concat(overlap_concat(f.notes.body, f.notes.top),
                                g.notes.body)
    return flat.with_notes(f.notes.bottom, middle, g.notes.top, mode)


# -- permutation rules ------------------------------------------------------

class IdentityPerm:
    def __init__(self, n: int):
        self.n = n

    def image(self, j: int) -> int:
        return j

    def preimage(self, j: int) -> int:
        return j


class ExplicitPerm:
    def __init__(self, mapping: Sequence[int]):
        self.n = len(mapping)
        self._fwd = list(mapping)
        self._bwd = [0] * self.n
        for j, p in enumerate(mapping):
            self._bwd[p] = j

    def image(self, j: int) -> int:
        return self._fwd[j]

    def preimage(self, p: int) -> int:
        return self._bwd[p]


class SlidePerm:
    """Move C levels from the bottom region to the top region.

    Removal positions A + (m-1)P (m = 1..C); the m-th removed level is
    reinserted directly after original position B + (m-1)P.  Everything
    strictly between the last removal and the first insertion slides down
    by exactly C positions.  Equals the composite of the elementary cycles
    q_C o ... o q_1 whenever the two regions are disjoint.
    """

    def __init__(self, n: int, A: int, P: int, C: int, B: int):
        if C > 0 and not (A + (C - 1) * P < B - (C - 1) * P + 1 and B + (C - 1) * P < n):
            if A + (C - 1) * P >= B:
                raise ValueError("slide regions overlap")
        self.n, self.A, self.P, self.C, self.B = n, A, P, C, B

    def _removals_upto(self, j: int) -> int:
        if self.C == 0 or j < self.A:
            return 0
        return min((j - self.A) // self.P + 1, self.C)

    def _inserts_below(self, j: int) -> int:
        if self.C == 0 or j <= self.B:
            return 0
        return min((j - self.B - 1) // self.P + 1, self.C)

    def _removal_index(self, j: int):
        if self.C and j >= self.A and (j - self.A) % self.P == 0:
            m = (j - self.A) // self.P + 1
            if m <= self.C:
                return m
        return None

    def image(self, j: int) -> int:
        if not 0 <= j < self.n:
            raise IndexError(j)
        m = self._removal_index(j)
        if m is not None:
            e = self.B + (m - 1) * self.P
            return e - self.C + m           # final(e_m) + 1
        return j - self._removals_upto(j) + self._inserts_below(j)

    def preimage(self, p: int) -> int:
        if not 0 <= p < self.n:
            raise IndexError(p)
        if self.C:
            q, r = divmod(p - self.B + self.C - 1, self.P + 1)
            if r == 0 and 0 <= q < self.C:
                return self.A + q * self.P
        j = p
        for _ in range(4):
            j2 = p + self._removals_upto(j) - self._inserts_below(j)
            if j2 == j:
                break
            j = j2
        if self._removal_index(j) is not None or self.image(j) != p:
            raise AssertionError("preimage iteration failed")
        return j


class ComposedPerm:
    """Apply a chain of permutations left to right."""

    def __init__(self, perms):
        self.perms = list(perms)
        self.n = self.perms[0].n if self.perms else 0

    def image(self, j: int) -> int:
        for p in self.perms:
            j = p.image(j)
        return j

    def preimage(self, j: int) -> int:
        for p in reversed(self.perms):
            j = p.preimage(j)
        return j


@dataclass(frozen=True)
class Reordering:
    """A PIB of the form [J, J, J, J, p]: a permutation of one interval."""

    J: Interval
    perm: object

    def image(self, j: int) -> int:
        return self.J.start + self.perm.image(j - self.J.start)

    def preimage(self, j: int) -> int:
        return self.J.start + self.perm.preimage(j - self.J.start)


def identity_reordering(J) -> Reordering:
    if not isinstance(J, Interval):
        J = Interval(*J)
    return Reordering(J, IdentityPerm(J.length))


def compose_reorder(p2: Reordering, p1: Reordering) -> Reordering:
    if p1.J != p2.J:
        raise ValueError("interval mismatch")
    return Reordering(p1.J, ComposedPerm([p1.perm, p2.perm]))


class ReorderedTemplate:
    """Lazy view: the template with level t[j] placed at position p(j)."""

    def __init__(self, reordering: Reordering, template):
        self.reordering = reordering
        self.template = template

    def height(self) -> int:
        return self.template.height()

    def level_at(self, p: int):
        return self.template.level_at(self.reordering.perm.preimage(p))

    def levels(self):
        return tuple(self.level_at(p) for p in range(self.height()))


def apply_reorder(p: Reordering, template) -> ReorderedTemplate:
    if p.J.length != template.height():
        raise ValueError("interval mismatch")
    return ReorderedTemplate(p, template)


def reorder_after(p: Reordering, f: PIB) -> PIB:
    """p o f = [I, J, A, p(B), p|_B o f]."""
    if p.J != f.J:
        raise ValueError("interval mismatch")
    return replace(f, pairs=tuple(sorted((a, p.image(b)) for a, b in f.pairs)))
