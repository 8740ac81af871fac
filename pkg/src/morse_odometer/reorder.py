"""Stage geometry: safe zones, block partitions, global and intermediate
reordering of basic templates.

All positions are plain ints (arbitrary precision); nothing here
materializes an interval, so the same code drives stage exponents 14 and
62.  Block spans come in three flavours: the original template, the
globally reordered template, and the fully reordered template (after the
per-block slides), matching the three partition layers of the
construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

from .pib import (ComposedPerm, IdentityPerm, Interval, Reordering, SlidePerm,
                  apply_reorder, compose_reorder, identity_reordering)
from .templates import Template, zero_template
from .towers import project_level


class GeometryError(ValueError):
    pass


class TwoCasesViolation(AssertionError):
    """A clean intermediate block projects to neither the aligned content
    nor its flip."""


@dataclass(frozen=True)
class StageGeometry:
    k_n: int
    k_np1: int
    k_np2: int
    g: int
    a: int
    b: int
    c: int

    @property
    def n(self) -> int:
        return 1 << self.k_np2

    @property
    def P(self) -> int:                  # intermediate block height
        return 1 << self.k_np1

    @property
    def Q(self) -> int:                  # local block height
        return 1 << self.k_n

    @property
    def L(self) -> int:
        return 1 << (self.k_np2 - self.k_np1)

    @property
    def Lp(self) -> int:
        return 1 << (self.k_np1 - self.k_n)

    # safe zone windows (inclusive-exclusive)
    @property
    def global_bottom(self) -> Interval:
        w = self.P * (1 + self.P)
        return Interval(0, w)

    @property
    def global_top(self) -> Interval:
        w = self.P * (1 + self.P)
        return Interval(self.n - w, w)

    @property
    def inter_bottom(self) -> Interval:  # within J' = [0, 2^{k_np1})
        w = self.Q * (1 + self.Q)
        return Interval(0, w)

    @property
    def inter_top(self) -> Interval:
        w = self.Q * (1 + self.Q)
        return Interval(self.P - w, w)

    def feasible(self) -> bool:
        return (self.n >= 2 * self.P * (1 + self.P)
                and self.P >= 2 * self.Q * (1 + self.Q))


def safe_zones_fit(k_n: int, k_np1: int, k_np2: int) -> bool:
    return ((1 << k_np2) >= 2 * (1 << k_np1) * (1 + (1 << k_np1))
            and (1 << k_np1) >= 2 * (1 << k_n) * (1 + (1 << k_n)))


def geometry(k_n: int, k_np1: int, k_np2: int, t: Template) -> StageGeometry:
    if not safe_zones_fit(k_n, k_np1, k_np2):
        raise GeometryError(f"geometry infeasible for chain "
                            f"({k_n},{k_np1},{k_np2})")
    g = t.global_cut_position()
    a = g % (1 << k_np1)
    b = g % (1 << k_n)
    c = a >> k_n
    return StageGeometry(k_n, k_np1, k_np2, g, a, b, c)


# -- intermediate block spans ------------------------------------------------

def block_count(geom: StageGeometry) -> int:
    return geom.L if geom.a == 0 else geom.L + 1


def original_block_span(geom: StageGeometry, m: int) -> Interval:
    """Span of intermediate block m of the unreordered template."""
    a, P, L, n = geom.a, geom.P, geom.L, geom.n
    if a == 0:
        if not 0 <= m < L:
            raise IndexError(m)
        return Interval(m * P, P)
    if m == 0:
        return Interval(0, a)
    if m == L:
        return Interval(a + (L - 1) * P, P - a)
    if not 1 <= m < L:
        raise IndexError(m)
    return Interval(a + (m - 1) * P, P)


def reordered_block_span(geom: StageGeometry, m: int) -> Interval:
    """Span of intermediate block m after global reordering."""
    a, P, L = geom.a, geom.P, geom.L
    if a == 0:
        return original_block_span(geom, m)
    if m == 0:
        return Interval(0, a)
    if 1 <= m <= a:                       # extraction zone: bottoms removed
        return Interval(a + (m - 1) * (P - 1), P - 1)
    if m <= L - a - 1:                    # clean middle, aligned
        return Interval((m - 1) * P, P)
    if m <= L - 1:                        # insertion zone: one level added
        base = (L - a - 1) * P
        i = m - (L - a)
        return Interval(base + i * (P + 1), P + 1)
    if m == L:
        return Interval((L - 1) * P + a, P - a)
    raise IndexError(m)


def locate_reordered_block(geom: StageGeometry, p: int) -> int:
    a, P, L = geom.a, geom.P, geom.L
    if not 0 <= p < geom.n:
        raise IndexError(p)
    if a == 0:
        return p // P
    if p < a:
        return 0
    if p < a * P:
        return 1 + (p - a) // (P - 1)
    if p < (L - a - 1) * P:
        return p // P + 1
    if p < (L - 1) * P + a:
        return L - a + (p - (L - a - 1) * P) // (P + 1)
    return L


# -- global reordering --------------------------------------------------------

def global_reordering(t: Template, geom: StageGeometry) -> Reordering:
    J = Interval(0, geom.n)
    if geom.a == 0:
        return identity_reordering(J)
    perm = SlidePerm(geom.n, A=geom.a, P=geom.P, C=geom.a,
                     B=geom.a + (geom.L - geom.a) * geom.P - 1)
    return Reordering(J, perm)


# -- the two-case test and intermediate reordering ----------------------------

def block_in_global_safe_zone(geom: StageGeometry, m: int) -> bool:
    span = reordered_block_span(geom, m)
    gb, gt = geom.global_bottom, geom.global_top
    return span.start < gb.stop or span.stop > gt.start


def block_case(t: Template, geom: StageGeometry, p1: Reordering, m: int) -> str:
    """'safe', 'identity' or 'flip' for intermediate block m of p1(t)."""
    if block_in_global_safe_zone(geom, m):
        return "safe"
    span = reordered_block_span(geom, m)
    star = zero_template(t.system, geom.k_np2)
    lv = t.level_at(p1.preimage(span.start))
    zv = star.level_at(span.start)
    pl = project_level(lv, geom.k_np1)
    pz = project_level(zv, geom.k_np1)
    if pl == pz:
        return "identity"
    if t.system == "M" and pl.i == pz.i and pl.bar != pz.bar:
        return "flip"
    raise TwoCasesViolation(f"block {m} of the reordered template projects to "
                            f"neither the aligned content nor its flip")


def _local_slide(geom: StageGeometry) -> SlidePerm:
    Q, P, Lp = geom.Q, geom.P, geom.Lp
    return SlidePerm(P, A=Q, P=Q, C=Q, B=(Lp - Q + 1) * Q - 1)


class BlockwisePerm:
    """The concatenation of the per-block reordering maps: identity on safe
    and aligned blocks, a local slide on blocks whose projection is
    flipped.  Decisions are memoized lazily, so huge stages only pay for
    the blocks actually visited."""

    def __init__(self, t: Template, geom: StageGeometry, p1: Reordering):
        self.t = t
        self.geom = geom
        self.p1 = p1
        self.n = geom.n
        self._cases: dict = {}
        self._slide = _local_slide(geom)

    def case(self, m: int) -> str:
        got = self._cases.get(m)
        if got is None:
            got = block_case(self.t, self.geom, self.p1, m)
            self._cases[m] = got
        return got

    def image(self, j: int) -> int:
        m = locate_reordered_block(self.geom, j)
        if self.case(m) != "flip":
            return j
        span = reordered_block_span(self.geom, m)
        return span.start + self._slide.image(j - span.start)

    def preimage(self, j: int) -> int:
        m = locate_reordered_block(self.geom, j)
        if self.case(m) != "flip":
            return j
        span = reordered_block_span(self.geom, m)
        return span.start + self._slide.preimage(j - span.start)


def intermediate_reordering(t: Template, geom: StageGeometry, p1: Reordering,
                            direction: str) -> Reordering:
    """direction 'O': targets are odometer templates, the map is the
    identity; direction 'M': per-block slides on the flipped blocks."""
    J = Interval(0, geom.n)
    if direction == "O":
        return identity_reordering(J)
    if direction != "M":
        raise ValueError(direction)
    return Reordering(J, BlockwisePerm(t, geom, p1))


@dataclass
class ReorderedStage:
    """A basic template together with its reordering maps and partitions."""

    t: Template
    geom: StageGeometry
    p1: Reordering
    p2: Reordering
    p21: Reordering                         # p2 o p1

    def hat_level_at(self, p: int):
        return self.t.level_at(self.p21.preimage(p))

    def case(self, m: int) -> str:
        perm = self.p2.perm
        if isinstance(perm, BlockwisePerm):
            return perm.case(m)
        if block_in_global_safe_zone(self.geom, m):
            return "safe"
        return "identity"


def reorder_template(t: Template, k_n: int, k_np1: int, k_np2: int,
                     direction: Optional[str] = None) -> ReorderedStage:
    geom = geometry(k_n, k_np1, k_np2, t)
    p1 = global_reordering(t, geom)
    if direction is None:
        direction = t.system
    p2 = intermediate_reordering(t, geom, p1, direction)
    return ReorderedStage(t, geom, p1, p2, compose_reorder(p2, p1))


# -- local pieces --------------------------------------------------------------

def _pieces_by_heights(start: int, heights) -> Iterator[Interval]:
    p = start
    for h in heights:
        yield Interval(p, h)
        p += h


def _edge_block_heights(geom: StageGeometry, m: int):
    """Heights of the partial blocks 0 and L (a != 0 only)."""
    Q, b, c, Lp = geom.Q, geom.b, geom.c, geom.Lp
    if m == 0:
        # [.]^b (if b != 0) followed by c full blocks
        return ([b] if b else []) + [Q] * c
    # m == L: L'-c-1 full blocks, then [.]_b of height Q-b (if b != 0)
    if b:
        return [Q] * (Lp - c - 1) + [Q - b]
    return [Q] * (Lp - c)


def local_pieces_original(geom: StageGeometry, m: int) -> Iterator[Interval]:
    """Local block spans of intermediate block m of the unreordered
    template: blocks of height 2^{k_n} cut at positions congruent to b."""
    span = original_block_span(geom, m)
    Q, Lp = geom.Q, geom.Lp
    if geom.a != 0 and m in (0, geom.L):
        heights = _edge_block_heights(geom, m)
    else:
        heights = [Q] * Lp
    pieces = list(_pieces_by_heights(span.start, heights))
    assert not pieces or pieces[-1].stop == span.stop
    yield from pieces


def local_pieces_hat(stage: ReorderedStage, m: int) -> Iterator[Interval]:
    """Local block spans of intermediate block m of the fully reordered
    template (uneven heights around flipped blocks per the construction;
    totals are asserted)."""
    geom = stage.geom
    span = reordered_block_span(geom, m)
    case = stage.case(m)
    Q, Lp, a = geom.Q, geom.Lp, geom.a
    if case == "flip":
        heights = ([Q] + [Q - 1] * Q + [Q] * (Lp - 2 * Q - 2)
                   + [Q + 1] * Q + [Q])
    elif a != 0 and 1 <= m <= a:
        # the bottom level was removed from the first local block
        heights = [Q - 1] + [Q] * (Lp - 1)
    elif a != 0 and geom.L - a <= m <= geom.L - 1:
        # one level was inserted at the top of the last local block
        heights = [Q] * (Lp - 1) + [Q + 1]
    elif a != 0 and m in (0, geom.L):
        heights = _edge_block_heights(geom, m)
    else:
        heights = [Q] * Lp
    pieces = list(_pieces_by_heights(span.start, heights))
    assert pieces[-1].stop == span.stop, "local partition must tile the block"
    yield from pieces


def iter_hat_pieces(stage: ReorderedStage) -> Iterator[Interval]:
    for m in range(block_count(stage.geom)):
        yield from local_pieces_hat(stage, m)


# -- adjusted partitions of non-basic templates -------------------------------

def variant_partition_deltas(tag: str) -> Tuple[int, int]:
    """(delta at the very bottom piece, delta at the very top piece) in
    levels for the variant built from a basic template; the cut-side
    adjustments of the diminished/augmented forms stay inside the block
    that holds the cut."""
    bottom = {"m": -1, "-d": +1, "-d0": +1, "-d1": +1,
              "+d": -1, "+d0": -1, "+d1": -1}.get(tag, 0)
    top = {"e": +1, "e0": +1, "e1": +1, "-u": +1, "-u0": +1, "-u1": +1,
           "+u": -1, "+u0": -1, "+u1": -1}.get(tag, 0)
    return bottom, top
