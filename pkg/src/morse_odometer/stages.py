"""The staged construction: exponent sequences, the explicit second stage,
the stage-4 builder (simple concatenations with sticky notes), and the
lazy stage-6/8 families built from overlapping concatenations.

Stage maps always run from the canonical tower of one system to a basic
(or variant) template of the other; the family for one stage is keyed by
the target template and, when sticky notes exist, by the tail/head
choices.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from .goodset import GoodSet, good_positions, stage2_good_levels
from .pib import PIB, Interval, Reordering, invert, make_pib, matches
from .reorder import (ReorderedStage, block_count, geometry, local_pieces_hat,
                      locate_reordered_block, reorder_template,
                      reordered_block_span, safe_zones_fit)
from .templates import (Template, basic_morse, basic_odometer, canonical,
                        enumerate_basic, modified, one_template, predecessors,
                        variant_of, variants_of, zero_template)
from .towers import (MorseLevel, OdometerLevel, morse_bit, project_level,
                     project_morse, project_odometer)


class StageError(ValueError):
    pass


class SeventhCase(AssertionError):
    """A successive pair of body templates fits none of the six classes."""


# ---------------------------------------------------------------------------
# exponent sequences
# ---------------------------------------------------------------------------

@dataclass
class StageParams:
    eps: List[Fraction]
    mode: str
    ks: List[int]                    # ks[n] for 0 <= n <= stages
    ms: List[int]                    # the m choices, in order of use

    def chain(self, n: int) -> Tuple[int, int, int]:
        """(k_{n-2}, k_{n-1}, k_n) driving the stage-n build."""
        return (self.ks[n - 2], self.ks[n - 1], self.ks[n])


def _min_m(kn: int, eps: Fraction) -> int:
    base = 2 * (1 + (1 << kn))
    # smallest m with base/(base+m) < eps
    m = 1
    while not (base * eps.denominator < eps.numerator * (base + m)):
        m += 1
    return m


def _min_k(kn: int, m: int) -> int:
    need = m * (1 << kn) + 2 * ((1 << kn) + (1 << kn) * (1 << kn))
    k = 0
    while (1 << k) < need:
        k += 1
    return k


def build_sequence(eps, mode: str, stages: int,
                   chain: Optional[Sequence[int]] = None) -> StageParams:
    """k_0 = k_1 = 0 and k_2 = 2 always; the rest per mode.

    strict      minimal m from the tolerance inequality, then minimal k;
    min         m = 1 and minimal k (the smallest feasible chain);
    chain       user-supplied exponents k_2, k_3, ..., validated.
    """
    if stages < 2 or stages % 2:
        raise StageError("stages must be an even number >= 2")
    if isinstance(eps, (int, float, str, Fraction)):
        eps = [Fraction(eps)] * (stages + 1)
    else:
        eps = [Fraction(e) for e in eps]
        if len(eps) < stages + 1:
            eps = eps + [eps[-1]] * (stages + 1 - len(eps))
    if any(not (0 < e < 1) for e in eps):
        raise StageError("tolerances must lie in (0,1)")

    ks = [0, 0, 2]
    ms: List[int] = []
    if mode == "chain":
        if chain is None:
            raise StageError("chain mode needs --chain")
        ks = [0, 0] + [int(k) for k in chain]
        if len(ks) < stages + 1:
            raise StageError("chain too short for requested stages")
        if ks[2] != 2:
            raise StageError("k_2 = 2 is fixed")
    elif mode in ("strict", "min"):
        n = 2
        while len(ks) <= stages:
            kn = ks[n]
            m1 = _min_m(kn, eps[n]) if mode == "strict" else 1
            ks.append(_min_k(kn, m1))
            ms.append(m1)
            if len(ks) <= stages:
                kn1 = ks[n + 1]
                m2 = _min_m(kn1, eps[n + 1]) if mode == "strict" else 1
                ks.append(_min_k(kn1, m2))
                ms.append(m2)
            n += 2
    else:
        raise StageError(f"unknown mode {mode!r}")

    ks = ks[: stages + 1]
    validate_sequence(ks, ms, eps, mode)
    return StageParams(eps[: stages + 1], mode, ks, ms)


def validate_sequence(ks: List[int], ms: List[int], eps: List[Fraction],
                      mode: str) -> None:
    for n in range(0, len(ks) - 2):
        if not safe_zones_fit(ks[n], ks[n + 1], ks[n + 2]):
            raise StageError(
                f"safe zones do not fit for (k_{n}, k_{n+1}, k_{n+2}) = "
                f"({ks[n]}, {ks[n+1]}, {ks[n+2]})")
    if mode == "strict":
        mi = 0
        for n in range(2, len(ks) - 1):
            m = ms[mi]
            mi += 1
            base = 2 * (1 + (1 << ks[n]))
            if not base * eps[n].denominator < eps[n].numerator * (base + m):
                raise StageError(f"tolerance inequality fails at n={n}")
            need = m * (1 << ks[n]) + 2 * ((1 << ks[n]) + (1 << (2 * ks[n])))
            if (1 << ks[n + 1]) < need:
                raise StageError(f"growth inequality fails at n={n}")


# ---------------------------------------------------------------------------
# stage 2: the explicit table
# ---------------------------------------------------------------------------

K2 = 2
# range position of the single mapped level, per global cut position
B_POSITION = {0: 2, 1: 2, 2: 1, 3: 1}


def omega_family(include_modified: bool = True) -> List[Template]:
    """All stage-2 odometer targets: basics, diminished, augmented
    (and, when asked, the missing/extra forms)."""
    out: List[Template] = []
    for b in enumerate_basic("O", K2):
        out.append(b)
        for tag in ("-d", "-u", "+d", "+u"):
            out.append(variant_of(b, tag))
        if include_modified:
            out.append(variant_of(b, "m"))
            out.append(variant_of(b, "e"))
    return out


def level_positions(t, lv) -> List[int]:
    """Positions of level lv in template t.

    Candidates come from the base-tower position plus the handful of slots
    a variant can disturb; every variant displaces a level by at most one
    position, so the scan is O(1).
    """
    h = t.height()
    n = 1 << t.k
    p0 = (lv.i + getattr(t, "g", 0)) % n
    cands = {p0 - 1, p0, p0 + 1, 0, 1, h - 2, h - 1}
    g = getattr(t, "g", None)
    if g is not None:
        cands |= {g - 1, g, g + 1}
    out = [p for p in sorted(cands) if 0 <= p < h and t.level_at(p) == lv]
    return out


def match_map(ref: PIB, target: Template) -> PIB:
    """The partial interval bijection matching ref into a new range
    template: same I and A, images re-located level-for-level by the
    unique order-preserving assignment."""
    pairs = []
    prev = None
    J = Interval(0, target.height())
    for a, b in ref.pairs:
        lv = ref.range_level(b)
        cands = [p for p in level_positions(target, lv)
                 if prev is None or p > prev]
        if not cands:
            raise StageError("no matching position for level "
                             f"{lv} in {target.kind}:{target.variant}")
        prev = cands[0]
        pairs.append((a, J.start + prev))
    return PIB(ref.I, J, tuple(pairs), ref.domain_template, target)


class Stage2Family:
    """The explicit second-stage maps, one per (target, source tower) and
    per extra-variant flavour."""

    def __init__(self):
        self.k = K2

    def basic_map(self, omega: Template, which: int = 0) -> PIB:
        if not omega.is_basic() or omega.system != "O" or omega.k != K2:
            raise StageError("expected a stage-2 basic odometer template")
        I = Interval(0, 4)
        b = B_POSITION[omega.g]
        return make_pib(I, I, {2: b}, canonical("M", K2, which), omega)

    def map_to(self, omega: Template, which: int = 0, j: int = 0) -> PIB:
        """The map onto any stage-2 target template.

        Diminished/augmented targets match the map of the base template or
        of its predecessor; missing/extra targets reuse the quintuple on a
        shrunken/grown interval.
        """
        if omega.is_basic():
            return self.basic_map(omega, which)
        if omega.kind != "variant":
            raise StageError(f"unsupported stage-2 target {omega.kind}")
        base = basic_odometer(K2, omega.g)
        tag = omega.variant
        if tag in ("-u", "+d"):
            ref = self.basic_map(base, which)
            return match_map(ref, omega)
        if tag in ("-d", "+u"):
            ref = self.map_to(predecessors(base)[0], which)
            return match_map(ref, omega)
        if tag == "m":
            f = self.basic_map(base, which)
            I = Interval(1, 3)
            return PIB(I, I, f.pairs, modified("M", K2, "m", which), omega)
        if tag == "e":
            f = self.basic_map(base, which)
            I = Interval(0, 5)
            return PIB(I, I, f.pairs, modified("M", K2, f"e{j}", which), omega)
        raise StageError(f"unsupported stage-2 variant {tag}")

    def all_maps(self) -> Iterator[Tuple[Template, int, int, PIB]]:
        for omega in omega_family():
            flavours = ((0,) if omega.variant != "e" else (0, 1))
            for which in (0, 1):
                for j in flavours:
                    yield omega, which, j, self.map_to(omega, which, j)


def build_stage2() -> Stage2Family:
    return Stage2Family()


# ---------------------------------------------------------------------------
# head / tail sets (stage-2 scale notes for the stage-4 maps)
# ---------------------------------------------------------------------------

def _v(i: int) -> OdometerLevel:
    return OdometerLevel(K2, i % 4)


def tail_set(b: int) -> List[Template]:
    """Targets whose top b levels are the bottom b levels of the source
    tower of the next stage."""
    if b == 0:
        return []
    want = [_v(t) for t in range(b)]
    return [w for w in omega_family(include_modified=False)
            if [w.level_at(w.height() - b + t) for t in range(b)] == want]


def head_set(b: int) -> List[Template]:
    if b == 0:
        return []
    m = 4 - b
    want = [_v(b + t) for t in range(m)]
    return [w for w in omega_family(include_modified=False)
            if [w.level_at(t) for t in range(m)] == want]


def tail_set_missing(b: int) -> List[Template]:
    """Tail choices for a missing-source map: top b-1 levels match the
    shifted bottom."""
    if b == 0:
        return []
    want = [_v(1 + t) for t in range(b - 1)]
    return [w for w in omega_family(include_modified=False)
            if [w.level_at(w.height() - (b - 1) + t) for t in range(b - 1)] == want]


def head_set_extra(b: int) -> List[Template]:
    """Head choices for an extra-source map: bottom 4-b+1 levels match the
    grown top."""
    if b == 0:
        return []
    m = 4 - b + 1
    want = [_v(b - 1 + t) for t in range(m - 1)] + [_v(0)]
    want = [_v(b + t) for t in range(4 - b)] + [_v(0)]
    return [w for w in omega_family(include_modified=False)
            if w.height() >= m and
            [w.level_at(t) for t in range(m)] == want]


def heads_tails(b: int):
    """(tail set, head set) for a basic target with cut residue b."""
    return tail_set(b), head_set(b)


# ---------------------------------------------------------------------------
# stage 4
# ---------------------------------------------------------------------------

def piece_at(stage: ReorderedStage, pos: int) -> Interval:
    """The local piece of the reordered template containing pos (O(1))."""
    geom = stage.geom
    m = locate_reordered_block(geom, pos)
    span = reordered_block_span(geom, m)
    case = stage.case(m)
    Q, Lp, a, b, c = geom.Q, geom.Lp, geom.a, geom.b, geom.c
    off = pos - span.start
    if case == "flip":
        t1 = Q
        t2 = t1 + Q * (Q - 1)
        t3 = t2 + (Lp - 2 * Q - 2) * Q
        t4 = t3 + Q * (Q + 1)
        if off < t1:
            return Interval(span.start, Q)
        if off < t2:
            i = (off - t1) // (Q - 1)
            return Interval(span.start + t1 + i * (Q - 1), Q - 1)
        if off < t3:
            i = (off - t2) // Q
            return Interval(span.start + t2 + i * Q, Q)
        if off < t4:
            i = (off - t3) // (Q + 1)
            return Interval(span.start + t3 + i * (Q + 1), Q + 1)
        return Interval(span.start + t4, Q)
    if a != 0 and 1 <= m <= a:
        if off < Q - 1:
            return Interval(span.start, Q - 1)
        i = (off - (Q - 1)) // Q
        return Interval(span.start + Q - 1 + i * Q, Q)
    if a != 0 and geom.L - a <= m <= geom.L - 1:
        if off < (Lp - 1) * Q:
            return Interval(span.start + (off // Q) * Q, Q)
        return Interval(span.start + (Lp - 1) * Q, Q + 1)
    if a != 0 and m == 0 and b:
        if off < b:
            return Interval(span.start, b)
        i = (off - b) // Q
        return Interval(span.start + b + i * Q, Q)
    if a != 0 and m == geom.L and b:
        full = Lp - c - 1
        if off < full * Q:
            return Interval(span.start + (off // Q) * Q, Q)
        return Interval(span.start + full * Q, Q - b)
    return Interval(span.start + (off // Q) * Q, Q)


def stage2_offsets(piece: Interval, n: int):
    """(domain offset, image offset) of the second-stage map attached to a
    source piece, or None for the partial edge pieces."""
    if piece.start == 0 or piece.stop == n:
        if piece.length != 4:
            return None
    r = piece.start % 4
    if piece.length == 4:
        g = (4 - r) % 4
        return (B_POSITION[g], 2)
    if piece.length == 3:
        g = (4 - ((piece.start - 1) % 4)) % 4
        return (B_POSITION[g] - 1, 1)
    if piece.length == 5:
        g = (4 - r) % 4
        return (B_POSITION[g], 2)
    return None


@dataclass
class Stage4Map:
    """One stage-4 partial interval bijection onto a basic Morse target."""

    target: Template
    stage: ReorderedStage
    good: GoodSet
    tail_choice: Optional[Template] = None
    head_choice: Optional[Template] = None

    @property
    def geom(self):
        return self.stage.geom

    @property
    def b(self) -> int:
        return self.geom.b

    # body map: source position -> position within the reordered target
    def hat_image(self, s: int) -> Optional[int]:
        n = self.geom.n
        if not 0 <= s < n:
            raise IndexError(s)
        if self.good.contains(s):
            return s
        piece = piece_at(self.stage, s)
        offs = stage2_offsets(piece, n)
        if offs is None:
            return None
        dom, img = offs
        if s == piece.start + dom:
            return piece.start + img
        return None

    def eval(self, s: int) -> Optional[int]:
        """Target position of source position s under the body, None when
        undefined there (edge positions belong to the sticky notes)."""
        jhat = self.hat_image(s)
        if jhat is None:
            return None
        return self.stage.p21.preimage(jhat)

    def value(self, s: int) -> MorseLevel:
        j = self.eval(s)
        if j is None:
            raise StageError(f"position {s} not in the body domain")
        return self.target.level_at(j)

    # notes ------------------------------------------------------------

    def note_domain_positions(self, note_template: Template, side: str):
        """Source positions covered by a tail ('t') or head ('h') note."""
        b = self.b
        if b == 0:
            return []
        fam = Stage2Family()
        bpos = fam.map_to(note_template).pairs[0][1] if note_template.kind == "variant" \
            else B_POSITION[note_template.g]
        if side == "t":
            s = bpos - (4 - b)
            return [s] if 0 <= s < b else []
        s = self.geom.n - (4 - b) + bpos
        return [s] if s < self.geom.n else []

    def note_range_positions(self) -> List[int]:
        """Target positions covered by the sticky notes (both sides)."""
        b = self.b
        out = []
        if b >= 2:
            out.append(b - 2)
        if b == 1:
            out.append(self.geom.n - 1)
        return out

    def target_in_range(self, j: int) -> bool:
        jhat = self.stage.p21.image(j)
        if self.good.contains(jhat):
            return True
        piece = piece_at(self.stage, jhat)
        offs = stage2_offsets(piece, self.geom.n)
        if offs is not None and jhat == piece.start + offs[1]:
            return True
        return j in self.note_range_positions()

    # explicit materialization ------------------------------------------

    def body_pairs(self) -> List[Tuple[int, int]]:
        """All (source, target) pairs of the body, materialized."""
        pairs = []
        n = self.geom.n
        pos = 0
        while pos < n:
            piece = piece_at(self.stage, pos)
            offs = stage2_offsets(piece, n)
            covered = set()
            if self.good.contains(piece.start):
                for s in range(piece.start, min(piece.start + 4, piece.stop)):
                    if self.good.contains(s):
                        pairs.append((s, self.stage.p21.preimage(s)))
                        covered.add(s)
            if offs is not None:
                s = piece.start + offs[0]
                if s not in covered:
                    pairs.append((s, self.stage.p21.preimage(piece.start + offs[1])))
            pos = piece.stop
        return pairs

    def as_pib(self) -> PIB:
        n = self.geom.n
        I = Interval(0, n)
        return PIB(I, I, tuple(sorted(self.body_pairs())),
                   canonical("O", self.geom.k_np2), self.target)


class Stage4Family:
    """Maps from the odometer tower onto the basic Morse templates at the
    second build stage, with the diminished/augmented maps derived by
    matching."""

    def __init__(self, params: StageParams, parity_mode="auto"):
        self.params = params
        self.chain = params.chain(4)
        k_n, k_np1, k_np2 = self.chain
        if k_n != K2:
            raise StageError("the first chain entry is the fixed k_2 = 2")
        self.k = k_np2
        self.good = good_positions(k_n, k_np1, k_np2, parity_mode)
        self.basics = enumerate_basic("M", k_np2)
        self._cache: Dict = {}

    def map_for(self, t: Template, tail: Optional[Template] = None,
                head: Optional[Template] = None) -> Stage4Map:
        key = t.key()
        stage = self._cache.get(key)
        if stage is None:
            stage = reorder_template(t, *self.chain, direction="M")
            self._cache[key] = stage
        m = Stage4Map(t, stage, self.good)
        b = stage.geom.b
        if b:
            m.tail_choice = tail or tail_set(b)[0]
            m.head_choice = head or head_set(b)[0]
        return m

    def matched_variant_pairs(self, t: Template):
        """The two matching assertions for the diminished and augmented
        variants of t: pairs of body PIBs that must agree level-for-level."""
        if not t.is_basic() or t.is_end_cut() or t.is_top_cut():
            raise StageError("interior-cut targets only")
        tp = predecessors(t)[0]
        ref_t = self.map_for(t).as_pib()
        ref_p = self.map_for(tp).as_pib()
        out = []
        # diminished: map to t^-(d) matches the predecessor reference, map
        # to tp^-(u) likewise
        dim_d = match_map(ref_p, variant_of(t, "-d"))
        dim_u = match_map(ref_p, variant_of(tp, "-u"))
        out.append(("diminished", dim_d, dim_u))
        for j in (0, 1):
            aug_u = match_map(ref_p, variant_of(t, f"+u{j}"))
            aug_d = match_map(ref_p, variant_of(tp, f"+d{j}"))
            out.append((f"augmented{j}", aug_u, aug_d))
        return out

    def phi_value(self, s: int, sample_targets: Sequence[Template]):
        """The common projected image of the good source position s across
        targets; raises when targets disagree."""
        if not self.good.contains(s):
            raise StageError(f"{s} is not a good position")
        vals = set()
        for t in sample_targets:
            m = self.map_for(t)
            vals.add(project_morse(m.value(s), K2))
        if len(vals) != 1:
            raise StageError(f"targets disagree at good position {s}: {vals}")
        return vals.pop()


# ---------------------------------------------------------------------------
# lazy stages 6 and 8
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BodyPiece:
    """One factor of a lazy body: a source run and its projected template
    descriptor at the previous stage's scale."""

    span: Interval
    kind: str                       # 'full' | 'missing' | 'extra' | 'edge'
    bottom_index: int               # index of the run's first level, prev scale
    aligned: bool


class LazyStageFamily:
    """Stages whose towers are far above the materialization cap: the maps
    exist as piece enumerations plus junction bookkeeping."""

    def __init__(self, params: StageParams, n: int):
        if n not in (6, 8):
            raise StageError("lazy families exist for stages 6 and 8")
        if n + 1 > len(params.ks):
            raise StageError("sequence too short for this stage")
        self.n = n
        self.params = params
        self.chain = params.chain(n)
        self.k_prev = self.chain[0]
        self.k = self.chain[2]
        # stage 6 maps the Morse towers onto odometer targets; stage 8 the
        # other way around
        self.target_system = "O" if n % 4 == 2 else "M"
        self.source_system = "M" if n % 4 == 2 else "O"
        self.good = good_positions(*self.chain, "paper")

    def sample_targets(self, count: int, seed: int) -> List[Template]:
        rng = random.Random(seed)
        fam = enumerate_basic(self.target_system, self.k)
        return [fam[rng.randrange(len(fam))] for _ in range(count)]

    def reorder(self, t: Template) -> ReorderedStage:
        return reorder_template(t, *self.chain, direction=self.target_system)

    def piece_descriptor(self, piece: Interval, which: int = 0) -> BodyPiece:
        """Project a source run to its previous-stage template descriptor."""
        kp = self.k_prev
        Q = 1 << kp
        r = piece.start % Q
        if piece.length == Q:
            kind = "full"
            bot = r
        elif piece.length == Q - 1:
            kind = "missing"
            bot = (piece.start - 1) % Q
        elif piece.length == Q + 1:
            kind = "extra"
            bot = r
        else:
            kind = "edge"
            bot = r
        aligned = (r == 0) if kind in ("full", "extra") else ((piece.start - 1) % Q == 0)
        return BodyPiece(piece, kind, bot, aligned)

    def sigma_template(self, p: BodyPiece, which: int = 0) -> Template:
        """The previous-stage template the piece projects onto."""
        kp = self.k_prev
        Q = 1 << kp
        if self.source_system == "O":
            base = basic_odometer(kp, (Q - p.bottom_index) % Q)
            if p.kind == "full":
                return base
            if p.kind == "missing":
                return variant_of(base, "m")
            if p.kind == "extra":
                return variant_of(base, "e")
            raise StageError("edge pieces carry no template")
        # Morse source: arms from the content bits of the two straddled blocks
        nblock = p.span.start >> kp
        bit0 = morse_bit(nblock) ^ which
        bit1 = morse_bit(nblock + 1) ^ which
        if p.kind == "full":
            if p.aligned:
                return zero_template("M", kp) if bit0 == 0 else one_template(kp)
            return basic_morse(kp, (Q - p.bottom_index) % Q, bit0, bit1)
        if p.kind == "missing":
            start_block = (p.span.start - 1) >> kp
            b0 = morse_bit(start_block) ^ which
            b1 = morse_bit(start_block + 1) ^ which
            if (p.span.start - 1) % Q == 0:
                base = zero_template("M", kp) if b0 == 0 else one_template(kp)
            else:
                base = basic_morse(kp, (Q - p.bottom_index) % Q, b0, b1)
            return variant_of(base, "m")
        if p.kind == "extra":
            if p.aligned:
                base = zero_template("M", kp) if bit0 == 0 else one_template(kp)
                extra_bar = morse_bit((p.span.stop - 1) >> kp) ^ which
                return variant_of(base, f"e{extra_bar}")
            return variant_of(
                basic_morse(kp, (Q - p.bottom_index) % Q, bit0, bit1), "e")
        raise StageError("edge pieces carry no template")

    # -- body enumeration ---------------------------------------------------

    def pieces_of_block(self, stage: ReorderedStage, m: int) -> Iterator[Interval]:
        return local_pieces_hat(stage, m)

    def body_piece_after(self, stage: ReorderedStage, pos: int) -> Optional[Interval]:
        """The piece starting at pos, or None past the end."""
        if pos >= stage.geom.n:
            return None
        return piece_at(stage, pos)

    def iter_junctions(self, t: Template, sample: int, seed: int):
        """Successive body-piece pairs of the map onto t: every structural
        zone boundary plus seeded random interior junctions."""
        stage = self.reorder(t)
        geom = stage.geom
        rng = random.Random(seed)
        spots: List[int] = []
        a, L = geom.a, geom.L
        blocks = {0, 1, 2, 3}
        if a:
            blocks |= {max(1, a - 1), a, a + 1, a + 2,
                       L - a - 2, L - a - 1, L - a, L - a + 1, L - 2, L - 1, L}
        blocks |= {L // 2, L // 2 + 1}
        for _ in range(sample):
            blocks.add(rng.randrange(block_count(geom)))
        for m in sorted(b for b in blocks if 0 <= b < block_count(geom)):
            pieces = []
            span = reordered_block_span(geom, m)
            p = span.start
            # first two, middle two and last two pieces of the block
            local = list(self.pieces_of_block(stage, m))
            idxs = {0, 1, len(local) // 2, len(local) // 2 + 1,
                    len(local) - 2, len(local) - 1}
            idxs |= {rng.randrange(len(local)) for _ in range(4)}
            for i in sorted(x for x in idxs if 0 <= x < len(local)):
                pieces.append(local[i])
            for piece in pieces:
                nxt = self.body_piece_after(stage, piece.stop)
                if nxt is None:
                    continue
                left = self.piece_descriptor(piece)
                right = self.piece_descriptor(nxt)
                if left.kind == "edge" or right.kind == "edge":
                    continue
                yield left, right

    # -- classification and gluing ------------------------------------------

    def classify_pair(self, left: BodyPiece, right: BodyPiece) -> int:
        lk, rk = left.kind, right.kind
        if lk == "full" and rk == "full":
            if left.aligned and right.aligned:
                return 1
            if left.bottom_index == right.bottom_index:
                return 2
            raise SeventhCase(f"misaligned full pair at {right.span.start}")
        if lk == "missing" and rk in ("full",):
            return 3
        if rk == "missing":
            return 4
        if lk in ("full",) and rk == "extra":
            return 5
        if lk == "extra":
            return 6
        raise SeventhCase(f"unclassifiable pair {lk}/{rk} at {right.span.start}")

    def junction_note_options(self, left: BodyPiece, right: BodyPiece):
        """Stage-2-scale sticky-note templates usable on both sides of the
        junction; nonempty means the overlapping concatenation is defined.

        Only the cut residue and the piece kinds matter, so the option
        sets are computed once at the note scale.
        """
        Q = 1 << self.k_prev
        q = right.span.start
        o = q % 4
        bj = (4 - o) % 4
        if bj == 0:
            return None                   # trivial notes; plain concatenation
        if left.kind in ("full", "missing"):
            heads = head_set(bj)
        else:
            heads = head_set_extra(bj + 1)
        if right.kind in ("full", "extra"):
            tails = tail_set(bj)
        else:
            tails = tail_set_missing(bj + 1)
        hkeys = {tuple(w.levels()) for w in heads}
        return [w for w in tails if tuple(w.levels()) in hkeys]

    def junction_valid(self, left: BodyPiece, right: BodyPiece) -> bool:
        opts = self.junction_note_options(left, right)
        if opts is None:
            return True
        if not opts:
            raise StageError(
                "overlap mismatch: no shared sticky note at position "
                f"{right.span.start}")
        return True

    # -- good-set evaluation ---------------------------------------------------

    def phi_position(self, s: int, which: int = 0) -> int:
        """Image position of a good source position under the body: the
        previous stage's reordering twist of the containing piece."""
        if not self.good.contains(s):
            raise StageError(f"{s} not in the stage-{self.n} good set")
        kp = self.k_prev
        local = s % (1 << kp)
        nblock = s >> kp
        if self.source_system == "M":
            bar = morse_bit(nblock) ^ which
            prev_chain = self.params.chain(self.n - 2)
            sigma = zero_template("M", kp) if bar == 0 else one_template(kp)
            st = reorder_template(sigma, *prev_chain, direction="M")
            return (s - local) + st.p21.image(local)
        # odometer source (stage 8): previous targets reorder trivially at
        # good positions
        return s


def build_stage(n: int, params: StageParams, parity_mode: str = "auto"):
    if n == 2:
        return build_stage2()
    if n == 4:
        return Stage4Family(params, parity_mode)
    if n in (6, 8):
        return LazyStageFamily(params, n)
    raise StageError("stages beyond 8 are out of desk range")
