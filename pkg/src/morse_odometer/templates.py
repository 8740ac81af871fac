"""Template families for both systems.

A template is an ordered multiset of levels.  Everything here is stored
parametrically (stage exponent, cut position, arm flags, variant tag) so
that a template of height 2^62 answers level-at-position queries in O(k);
explicit level tuples are materialized only below a configurable cap.

Families:
  canonical towers and their modified forms (missing bottom / extra top),
  basic templates (tower orderings allowed by the dynamics, one global cut),
  diminished / augmented / missing / extra variants of basic templates.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Sequence

from .towers import Level, MorseLevel, OdometerLevel, project_level

# Materialization cap: explicit level lists only when height <= 2^MAT_CAP_K.
MAT_CAP_K = 20

# Paper-literal reading of the second predecessor of a top-cut template
# (bar index 1 instead of 0); kept behind a flag, off by default.
LITERAL_TOP_CUT_PREDECESSOR = False

_ODO_VARIANTS = ("-d", "-u", "+d", "+u", "m", "e")
_MORSE_INTERIOR_VARIANTS = ("-d", "-u", "+d0", "+d1", "+u0", "+u1", "m", "e")
_MORSE_ENDCUT_VARIANTS = (
    "-d0", "-d1", "-u0", "-u1", "+d0", "+d1", "+u0", "+u1", "m", "e0", "e1",
)


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    system: str                      # 'M' | 'O'
    k: int
    kind: str                        # canonical | modified | basic | variant | explicit
    which: int = 0                   # canonical/modified tower selector
    variant: str = ""                # modified or variant tag
    g: int = 0                       # basic: global cut position
    arm_a: int = 0                   # Morse arms; odometer ignores
    arm_b: int = 0
    levels_: Optional[tuple] = field(default=None, compare=True)

    # -- basic structure ------------------------------------------------

    @property
    def n(self) -> int:
        return 1 << self.k

    def height(self) -> int:
        if self.kind == "explicit":
            return len(self.levels_)
        if self.kind in ("canonical", "basic"):
            return self.n
        if self.kind == "modified":
            return self.n - 1 if self.variant == "m" else self.n + 1
        if self.kind == "variant":
            if self.variant == "m":
                return self.n - 1
            if self.variant in ("e", "e0", "e1"):
                return self.n + 1
            return self.n
        raise TemplateError(self.kind)

    def is_basic(self) -> bool:
        return self.kind == "basic"

    def is_end_cut(self) -> bool:
        """Basic with the global cut at the bottom (zero/one-template)."""
        return self.kind == "basic" and self.g == 0

    def is_top_cut(self) -> bool:
        return self.kind == "basic" and self.g == self.n - 1

    # -- level access ---------------------------------------------------

    def _mk(self, i: int, bar: int) -> Level:
        if self.system == "M":
            return MorseLevel(self.k, i % self.n, bool(bar))
        return OdometerLevel(self.k, i % self.n)

    def _basic_at(self, p: int) -> Level:
        bar = self.arm_a if (self.g == 0 or p < self.g) else self.arm_b
        return self._mk((p - self.g) % self.n, bar)

    def level_at(self, p: int) -> Level:
        h = self.height()
        if not 0 <= p < h:
            raise IndexError(p)
        if self.kind == "explicit":
            return self.levels_[p]
        if self.kind == "canonical":
            return self._mk(p, self.which)
        if self.kind == "modified":
            if self.variant == "m":
                return self._mk(p + 1, self.which)
            if p < self.n:
                return self._mk(p, self.which)
            bar = {"e": 0, "e0": 0, "e1": 1}[self.variant]
            return self._mk(0, bar)
        if self.kind == "basic":
            return self._basic_at(p)
        if self.kind == "variant":
            return self._variant_at(p)
        raise TemplateError(self.kind)

    def _base(self) -> "Template":
        return Template(self.system, self.k, "basic",
                        g=self.g, arm_a=self.arm_a, arm_b=self.arm_b)

    def _variant_at(self, p: int) -> Level:
        base = self._base()
        n, g = self.n, self.g
        tag = self.variant
        at = base._basic_at
        i0 = (-g) % n                      # bottom level index of the base
        jbar = int(tag[-1]) if tag[-1] in "01" else 0

        def minus_cut(q):
            return at(q) if q < g else at(q + 1)

        if tag == "m":
            return at(p + 1)
        if tag in ("e", "e0", "e1"):
            if p < n:
                return at(p)
            if tag == "e":                 # follower of the top level
                bar = self.arm_b if g > 0 else self.arm_a
                return self._mk(i0, bar)
            return self._mk(0, jbar)       # zero/one-template: e(j)
        if tag == "-d":                    # interior only
            if p == 0:
                return self._mk(i0 - 1, self.arm_a)
            return minus_cut(p - 1)
        if tag == "-u":
            if p == n - 1:
                return self._mk(i0, self.arm_b)
            return minus_cut(p)
        if tag in ("-d0", "-d1"):          # zero/one: cut == bottom
            if p == 0:
                return self._mk(n - 1, jbar)
            return at(p)
        if tag in ("-u0", "-u1"):
            if p == n - 1:
                return self._mk(0, jbar)
            return at(p + 1)
        if tag in ("+d0", "+d1"):
            if g == 0:
                return self._mk(0, jbar) if p == 0 else at(p)
            if p < g - 1:
                return at(p + 1)
            if p == g - 1:
                return self._mk(0, jbar)
            return at(p)
        if tag in ("+u0", "+u1"):
            if p < g:
                return at(p)
            if p == g:
                return self._mk(0, jbar)
            return at(p - 1)
        if tag in ("+d", "+u"):            # odometer forms
            if tag == "+d":
                if g == 0:
                    return at(p)
                if p < g - 1:
                    return at(p + 1)
                if p == g - 1:
                    return self._mk(0, 0)
                return at(p)
            if p < g:
                return at(p)
            if p == g:
                return self._mk(0, 0)
            return at(p - 1)
        raise TemplateError(tag)

    def levels(self) -> tuple:
        if self.kind == "explicit":
            return self.levels_
        if self.k > MAT_CAP_K:
            raise TemplateError(f"height 2^{self.k} above materialization cap")
        return tuple(self.level_at(p) for p in range(self.height()))

    # -- misc -------------------------------------------------------------

    def global_cut_position(self) -> int:
        if self.kind != "basic":
            raise TemplateError("global cut defined for basic templates")
        return self.g

    def key(self):
        if self.kind == "explicit":
            return (self.system, self.k, "explicit", self.levels_)
        return (self.system, self.k, self.kind, self.which, self.variant,
                self.g, self.arm_a, self.arm_b)

    def to_json(self):
        d = {"system": self.system, "k": self.k, "kind": self.kind}
        if self.kind in ("canonical", "modified"):
            d["which"] = self.which
        if self.variant:
            d["form"] = self.variant
        if self.kind in ("basic", "variant"):
            d["g"] = self.g
            if self.system == "M":
                d["arms"] = [self.arm_a, self.arm_b]
        if self.kind == "explicit" or self.k <= MAT_CAP_K and self.height() <= 64:
            d["levels"] = [l.to_json() for l in self.levels()]
        return d


def explicit_template(system: str, k: int, levels: Sequence[Level]) -> Template:
    return Template(system, k, "explicit", levels_=tuple(levels))


# -- constructors ---------------------------------------------------------

def canonical(system: str, k: int, which: int = 0) -> Template:
    if system == "O" and which != 0:
        raise TemplateError("odometer has a single canonical tower")
    if which not in (0, 1):
        raise TemplateError(f"bad tower selector {which}")
    return Template(system, k, "canonical", which=which)


def modified(system: str, k: int, variant: str, which: int = 0) -> Template:
    valid = ("m", "e0", "e1") if system == "M" else ("m", "e")
    if variant not in valid:
        raise TemplateError(f"bad modified variant {variant!r} for {system}")
    if system == "O" and which != 0:
        raise TemplateError("odometer has a single canonical tower")
    return Template(system, k, "modified", which=which, variant=variant)


def basic_odometer(k: int, g: int) -> Template:
    return Template("O", k, "basic", g=g % (1 << k))


def basic_morse(k: int, g: int, arm_a: int, arm_b: int) -> Template:
    n = 1 << k
    g %= n
    if g == 0 and arm_a != arm_b:
        raise TemplateError("zero/one-template arms must agree")
    return Template("M", k, "basic", g=g, arm_a=arm_a, arm_b=arm_b)


def zero_template(system: str, k: int) -> Template:
    if system == "O":
        return basic_odometer(k, 0)
    return basic_morse(k, 0, 0, 0)


def one_template(k: int) -> Template:
    return basic_morse(k, 0, 1, 1)


# -- families -------------------------------------------------------------

class BasicFamily:
    """Lazy indexable enumeration of the basic templates at one stage."""

    def __init__(self, system: str, k: int):
        self.system = system
        self.k = k
        n = 1 << k
        self.size = n if system == "O" else 2 + 4 * (n - 1)

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, idx: int) -> Template:
        if not 0 <= idx < self.size:
            raise IndexError(idx)
        if self.system == "O":
            return basic_odometer(self.k, idx)
        if idx == 0:
            return zero_template("M", self.k)
        if idx == 1:
            return one_template(self.k)
        q, r = divmod(idx - 2, 4)
        g = (1 << self.k) - 1 - q          # bottom index i0 = q + 1
        return basic_morse(self.k, g, r >> 1, r & 1)

    def __iter__(self) -> Iterator[Template]:
        return (self[i] for i in range(self.size))

    def index_of(self, t: Template) -> int:
        if self.system == "O":
            return t.g
        if t.g == 0:
            return t.arm_a
        q = (1 << self.k) - 1 - t.g
        return 2 + 4 * q + (t.arm_a << 1) + t.arm_b


def enumerate_basic(system: str, k: int) -> BasicFamily:
    if k < 1:
        raise TemplateError("basic families start at k = 1")
    return BasicFamily(system, k)


def variant_of(t: Template, tag: str) -> Template:
    if not t.is_basic():
        raise TemplateError("variants are defined for basic templates")
    if t.system == "O":
        if tag not in _ODO_VARIANTS:
            raise TemplateError(f"bad odometer variant {tag!r}")
    else:
        valid = _MORSE_ENDCUT_VARIANTS if t.is_end_cut() else _MORSE_INTERIOR_VARIANTS
        if tag == "e" and t.is_end_cut():
            raise TemplateError("zero/one-template has two extra variants: e0, e1")
        if tag not in valid:
            raise TemplateError(f"bad Morse variant {tag!r} for this cut")
    return replace(t, kind="variant", variant=tag)


def variants_of(t: Template) -> list:
    if not t.is_basic():
        raise TemplateError("variants are defined for basic templates")
    if t.system == "O":
        tags = _ODO_VARIANTS
    elif t.is_end_cut():
        tags = _MORSE_ENDCUT_VARIANTS
    else:
        tags = _MORSE_INTERIOR_VARIANTS
    return [variant_of(t, tag) for tag in tags]


# -- predecessors / successors ---------------------------------------------

def predecessors(t: Template) -> list:
    """Basic templates whose global cut sits one position higher."""
    if not t.is_basic():
        raise TemplateError("predecessors defined for basic templates")
    n = t.n
    if t.system == "O":
        return [basic_odometer(t.k, (t.g + 1) % n)]
    if t.is_end_cut():
        w = t.arm_a
        return [basic_morse(t.k, 1, 0, w), basic_morse(t.k, 1, 1, w)]
    if t.is_top_cut():
        # cut removed, a stage-0 level tacked on at the bottom
        base = zero_template("M", t.k) if t.arm_a == 0 else one_template(t.k)
        p0 = variant_of(base, "+d0")
        if LITERAL_TOP_CUT_PREDECESSOR:
            lv = [MorseLevel(t.k, 1, True)] + [t.level_at(p) for p in range(n - 1)]
            return [p0, explicit_template("M", t.k, lv)]
        return [p0, variant_of(base, "+d1")]
    return [basic_morse(t.k, t.g + 1, t.arm_a, t.arm_b)]


def successors(t: Template) -> list:
    """Basic templates whose global cut sits one position lower."""
    if not t.is_basic():
        raise TemplateError("successors defined for basic templates")
    n = t.n
    if t.system == "O":
        return [basic_odometer(t.k, (t.g - 1) % n)]
    if t.is_end_cut():
        w = t.arm_a
        return [basic_morse(t.k, n - 1, w, 0), basic_morse(t.k, n - 1, w, 1)]
    if t.is_top_cut():
        return [basic_morse(t.k, n - 2, t.arm_a, t.arm_b)]
    if t.g == 1:
        # the cut slides to the bottom: the zero- or one-template of arm B
        return [basic_morse(t.k, 0, t.arm_b, t.arm_b)]
    return [basic_morse(t.k, t.g - 1, t.arm_a, t.arm_b)]


# -- projections and flips ---------------------------------------------------

def project_block(levels: Sequence[Level], k2: int) -> list:
    """Ordered stage-k2 projections of a block of levels (single system)."""
    systems = {type(l) for l in levels}
    if len(systems) > 1:
        raise TemplateError("mixed systems in block")
    return [project_level(l, k2) for l in levels]


def zeta_template(t: Template, k2: int, start: int, count: int) -> list:
    """Projections of the block of `count` levels of t starting at `start`."""
    return [project_level(t.level_at(p), k2) for p in range(start, start + count)]


def flip_template(t: Template) -> Template:
    """Toggle every bar flag, order unchanged; Morse only; an involution."""
    if t.system != "M":
        raise TemplateError("flip applies to Morse templates")
    if t.kind == "explicit":
        return explicit_template(
            "M", t.k, [MorseLevel(l.k, l.i, not l.bar) for l in t.levels_])
    def fliptag(tag):
        if tag and tag[-1] in "01":
            return tag[:-1] + ("1" if tag[-1] == "0" else "0")
        return tag
    if t.kind in ("canonical", "modified"):
        return replace(t, which=t.which ^ 1, variant=fliptag(t.variant))
    return replace(t, arm_a=t.arm_a ^ 1, arm_b=t.arm_b ^ 1,
                   variant=fliptag(t.variant))


# -- recognition (used by round-trip checks) --------------------------------

def recognize(system: str, k: int, levels: Sequence[Level]) -> list:
    """All parametric descriptors whose materialization equals `levels`."""
    levels = tuple(levels)
    out = []
    cands: list = [canonical(system, k, w) for w in ((0, 1) if system == "M" else (0,))]
    for w in (0, 1) if system == "M" else (0,):
        for v in ("m", "e0", "e1") if system == "M" else ("m", "e"):
            cands.append(modified(system, k, v, w))
    for b in enumerate_basic(system, k):
        cands.append(b)
        cands.extend(variants_of(b))
    for c in cands:
        if c.height() == len(levels) and c.levels() == levels:
            out.append(c)
    return out
