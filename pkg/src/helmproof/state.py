"""State spaces, lenses, and hybrid states.

A hybrid state pairs a flat continuous vector with a finite family of
discrete slots. Both halves are addressed through lenses: a lens names a
region of the state and provides ``get`` and ``put`` obeying the usual
GetPut / PutGet / PutPut laws. Continuous lenses view a contiguous slice
of the vector as a small matrix, so their ``get`` is a linear projection;
discrete lenses hold one of four sorts of value (real scalar, 2-vector,
mode symbol, or a finite set of 2-vectors).

Element lenses produced by :func:`mat_lens` address a single entry of a
matrix lens with 1-based indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import (
    DuplicateNameError,
    IndexOutOfRangeError,
    ShapeMismatchError,
    UnknownLensError,
    ZeroDimensionError,
)

DISC_SORTS = ("real", "vec2", "mode", "set")


@dataclass(frozen=True)
class MatVal:
    """Immutable real matrix; a 1x1 value doubles as a scalar."""

    rows: int
    cols: int
    data: tuple  # row-major floats

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ZeroDimensionError(f"matrix shape {self.rows}x{self.cols}")
        if len(self.data) != self.rows * self.cols:
            raise ShapeMismatchError(
                f"{self.rows}x{self.cols} matrix needs {self.rows * self.cols} "
                f"entries, got {len(self.data)}"
            )

    @staticmethod
    def scalar(x):
        return MatVal(1, 1, (float(x),))

    @staticmethod
    def vec2(x, y):
        return MatVal(1, 2, (float(x), float(y)))

    @staticmethod
    def from_rows(rows):
        """Build from a list of rows; rejects ragged input."""
        if not rows or not rows[0]:
            raise ZeroDimensionError("empty matrix literal")
        width = len(rows[0])
        for r in rows:
            if len(r) != width:
                raise ShapeMismatchError("rows of unequal length")
        flat = tuple(float(x) for r in rows for x in r)
        return MatVal(len(rows), width, flat)

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def is_scalar(self):
        return self.rows == 1 and self.cols == 1

    def as_float(self):
        if not self.is_scalar:
            raise ShapeMismatchError(f"{self.rows}x{self.cols} value used as scalar")
        return self.data[0]

    def entry(self, i, j):
        """1-based element access."""
        if not (1 <= i <= self.rows and 1 <= j <= self.cols):
            raise IndexOutOfRangeError(
                f"entry ({i},{j}) of a {self.rows}x{self.cols} matrix"
            )
        return self.data[(i - 1) * self.cols + (j - 1)]

    def add(self, other):
        self._need_same_shape(other, "+")
        return MatVal(self.rows, self.cols,
                      tuple(a + b for a, b in zip(self.data, other.data)))

    def sub(self, other):
        self._need_same_shape(other, "-")
        return MatVal(self.rows, self.cols,
                      tuple(a - b for a, b in zip(self.data, other.data)))

    def neg(self):
        return MatVal(self.rows, self.cols, tuple(-a for a in self.data))

    def scale(self, c):
        return MatVal(self.rows, self.cols, tuple(c * a for a in self.data))

    def dot(self, other):
        """Sum of entrywise products; on row vectors the usual dot product."""
        self._need_same_shape(other, ".")
        acc = 0.0
        for a, b in zip(self.data, other.data):
            acc += a * b
        return acc

    def norm(self):
        """Frobenius norm; absolute value on scalars."""
        return math.sqrt(self.dot(self))

    def transpose(self):
        out = []
        for j in range(self.cols):
            for i in range(self.rows):
                out.append(self.data[i * self.cols + j])
        return MatVal(self.cols, self.rows, tuple(out))

    def _need_same_shape(self, other, op):
        if self.shape != other.shape:
            raise ShapeMismatchError(
                f"{self.rows}x{self.cols} {op} {other.rows}x{other.cols}"
            )

    def __str__(self):
        if self.is_scalar:
            return _fmt(self.data[0])
        if self.rows == 1:
            return "[" + ", ".join(_fmt(x) for x in self.data) + "]"
        rows = []
        for i in range(self.rows):
            row = self.data[i * self.cols:(i + 1) * self.cols]
            rows.append("[" + ", ".join(_fmt(x) for x in row) + "]")
        return "[" + ", ".join(rows) + "]"


def _fmt(x):
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True)
class ContDecl:
    name: str
    rows: int
    cols: int


@dataclass(frozen=True)
class DiscDecl:
    name: str
    sort: str
    modes: tuple = ()


def cont(name, rows, cols):
    return ContDecl(name, rows, cols)


def disc(name, sort, modes=()):
    if sort not in DISC_SORTS:
        raise ShapeMismatchError(f"unknown discrete sort {sort!r}")
    if sort == "mode" and not modes:
        raise ShapeMismatchError(f"mode lens {name!r} declared without mode symbols")
    return DiscDecl(name, sort, tuple(modes))


@dataclass(frozen=True)
class Lens:
    """Address of one state region; build via StateSpace, not directly.

    Continuous lenses carry an offset and a matrix shape. Discrete lenses
    carry a value sort. Element lenses refer back to their parent and a
    1-based (row, col) pair.
    """

    name: str
    kind: str                     # 'cont' or 'disc'
    rows: int = 1
    cols: int = 1
    sort: str = "real"            # discrete lenses only
    modes: tuple = ()             # sort == 'mode' only
    offset: int = -1              # continuous lenses only
    parent: str | None = None     # element lenses only
    elem: tuple | None = None     # (i, j), 1-based

    @property
    def size(self):
        return self.rows * self.cols

    @property
    def shape(self):
        return (self.rows, self.cols)

    def __str__(self):
        if self.elem:
            return f"{self.parent}[{self.elem[0]},{self.elem[1]}]"
        return self.name


def mat_lens(lens, i, j):
    """Element lens for entry (i, j), 1-based, of a matrix-shaped lens."""
    if lens.kind == "disc" and lens.sort == "vec2":
        rows, cols = 1, 2
    elif lens.kind == "cont":
        rows, cols = lens.rows, lens.cols
    else:
        raise ShapeMismatchError(f"lens {lens.name!r} has no matrix elements")
    if lens.elem is not None:
        raise ShapeMismatchError("element lenses cannot be nested")
    if not (1 <= i <= rows and 1 <= j <= cols):
        raise IndexOutOfRangeError(
            f"element ({i},{j}) of {rows}x{cols} lens {lens.name!r}"
        )
    if lens.kind == "cont":
        off = lens.offset + (i - 1) * cols + (j - 1)
        return Lens(name=f"{lens.name}[{i},{j}]", kind="cont", rows=1, cols=1,
                    offset=off, parent=lens.name, elem=(i, j))
    return Lens(name=f"{lens.name}[{i},{j}]", kind="disc", sort="real",
                parent=lens.name, elem=(i, j))


@dataclass(frozen=True)
class StateSpace:
    """Ordered lens declarations plus the flat continuous layout."""

    cont_lenses: tuple
    disc_lenses: tuple
    dim: int
    _by_name: dict = field(compare=False, hash=False, default_factory=dict)

    @property
    def lenses(self):
        return self.cont_lenses + self.disc_lenses

    def lens(self, name):
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownLensError(f"no lens named {name!r}") from None

    def has_lens(self, name):
        return name in self._by_name

    def zero_state(self):
        """All-zero continuous vector; discrete slots get neutral values."""
        discs = {}
        for l in self.disc_lenses:
            if l.sort == "real":
                discs[l.name] = MatVal.scalar(0.0)
            elif l.sort == "vec2":
                discs[l.name] = MatVal.vec2(0.0, 0.0)
            elif l.sort == "mode":
                discs[l.name] = l.modes[0]
            else:
                discs[l.name] = frozenset()
        return HybridState(self, (0.0,) * self.dim, discs)

    def make_state(self, cont_vals=None, disc_vals=None):
        """Build a state from per-lens values; unmentioned slots are zero."""
        st = self.zero_state()
        for name, val in (cont_vals or {}).items():
            st = lens_put(st, self.lens(name), _coerce(self.lens(name), val))
        for name, val in (disc_vals or {}).items():
            st = lens_put(st, self.lens(name), _coerce(self.lens(name), val))
        return st

    def sample(self, rng, box=None, set_size=(0, 3)):
        """Random state for property tests; box maps lens name to (lo, hi)."""
        box = box or {}

        def draw(name):
            lo, hi = box.get(name, (-10.0, 10.0))
            return rng.uniform(lo, hi)

        vec = []
        for l in self.cont_lenses:
            vec.extend(draw(l.name) for _ in range(l.size))
        discs = {}
        for l in self.disc_lenses:
            if l.sort == "real":
                discs[l.name] = MatVal.scalar(draw(l.name))
            elif l.sort == "vec2":
                discs[l.name] = MatVal.vec2(draw(l.name), draw(l.name))
            elif l.sort == "mode":
                discs[l.name] = l.modes[rng.randrange(len(l.modes))]
            else:
                n = rng.randint(*set_size)
                discs[l.name] = frozenset(
                    MatVal.vec2(draw(l.name), draw(l.name)) for _ in range(n)
                )
        return HybridState(self, tuple(vec), discs)


def register_space(decls):
    """Create a StateSpace from continuous and discrete declarations.

    Offsets are assigned in declaration order, so the continuous vector
    layout is reproducible from the declaration list alone.
    """
    seen = set()
    cont_lenses = []
    disc_lenses = []
    offset = 0
    for d in decls:
        if d.name in seen:
            raise DuplicateNameError(f"lens {d.name!r} declared twice")
        seen.add(d.name)
        if isinstance(d, ContDecl):
            if d.rows < 1 or d.cols < 1:
                raise ZeroDimensionError(f"lens {d.name!r} shape {d.rows}x{d.cols}")
            cont_lenses.append(Lens(name=d.name, kind="cont", rows=d.rows,
                                    cols=d.cols, offset=offset))
            offset += d.rows * d.cols
        elif isinstance(d, DiscDecl):
            disc_lenses.append(Lens(name=d.name, kind="disc", sort=d.sort,
                                    modes=d.modes))
        else:
            raise ShapeMismatchError(f"not a lens declaration: {d!r}")
    space = StateSpace(tuple(cont_lenses), tuple(disc_lenses), offset)
    for l in space.lenses:
        space._by_name[l.name] = l
    return space


@dataclass(frozen=True)
class HybridState:
    """One point of a state space; value-compared, safe to share."""

    space: StateSpace
    cont: tuple          # flat row-major continuous vector
    disc: dict

    def __eq__(self, other):
        if not isinstance(other, HybridState):
            return NotImplemented
        return (self.space is other.space and self.cont == other.cont
                and self.disc == other.disc)

    def __hash__(self):
        return hash((id(self.space), self.cont,
                     tuple(sorted(self.disc.items(), key=lambda kv: kv[0]))))

    def describe(self):
        """Readable one-line-per-lens rendering, declaration order."""
        parts = []
        for l in self.space.cont_lenses:
            parts.append(f"{l.name} = {lens_get(self, l)}")
        for l in self.space.disc_lenses:
            v = self.disc[l.name]
            if isinstance(v, frozenset):
                items = sorted(str(m) for m in v)
                parts.append(f"{l.name} = {{" + ", ".join(items) + "}")
            else:
                parts.append(f"{l.name} = {v}")
        return "\n".join(parts)


def _coerce(lens, val):
    """Accept plain numbers, pairs, and sequences for convenience."""
    if lens.kind == "cont" or lens.sort in ("real", "vec2"):
        if isinstance(val, MatVal):
            return val
        if isinstance(val, (int, float)):
            return MatVal.scalar(val)
        seq = tuple(val)
        if seq and isinstance(seq[0], (list, tuple)):
            return MatVal.from_rows([list(r) for r in seq])
        if lens.kind == "cont" and lens.shape == (1, len(seq)):
            return MatVal(1, len(seq), tuple(float(x) for x in seq))
        if len(seq) == 2:
            return MatVal.vec2(*seq)
        return MatVal(1, len(seq), tuple(float(x) for x in seq))
    if lens.sort == "mode":
        return str(val)
    if lens.sort == "set":
        out = set()
        for item in val:
            out.add(item if isinstance(item, MatVal) else MatVal.vec2(*item))
        return frozenset(out)
    raise ShapeMismatchError(f"cannot coerce value for lens {lens.name!r}")


def lens_get(state, lens):
    """Read a lens; continuous lenses produce a MatVal view of the vector."""
    if lens.kind == "cont":
        if lens.offset < 0:
            raise UnknownLensError(f"lens {lens.name!r} is not registered")
        return MatVal(lens.rows, lens.cols,
                      state.cont[lens.offset:lens.offset + lens.size])
    if lens.elem is not None:
        return MatVal.scalar(state.disc[lens.parent].entry(*lens.elem))
    try:
        return state.disc[lens.name]
    except KeyError:
        raise UnknownLensError(f"lens {lens.name!r} is not in this state") from None


def lens_put(state, lens, value):
    """Write a lens, returning a new state; shapes and sorts are checked."""
    if lens.kind == "cont":
        if not isinstance(value, MatVal) or value.shape != lens.shape:
            got = value.shape if isinstance(value, MatVal) else type(value).__name__
            raise ShapeMismatchError(
                f"lens {lens.name!r} holds {lens.rows}x{lens.cols}, got {got}"
            )
        vec = list(state.cont)
        vec[lens.offset:lens.offset + lens.size] = value.data
        return HybridState(state.space, tuple(vec), state.disc)
    if lens.elem is not None:
        old = state.disc[lens.parent]
        i, j = lens.elem
        data = list(old.data)
        data[(i - 1) * old.cols + (j - 1)] = value.as_float()
        new = MatVal(old.rows, old.cols, tuple(data))
        discs = dict(state.disc)
        discs[lens.parent] = new
        return HybridState(state.space, state.cont, discs)
    _check_disc_value(lens, value)
    discs = dict(state.disc)
    discs[lens.name] = value
    return HybridState(state.space, state.cont, discs)


def _check_disc_value(lens, value):
    if lens.sort == "real":
        if not (isinstance(value, MatVal) and value.is_scalar):
            raise ShapeMismatchError(f"lens {lens.name!r} holds a real scalar")
    elif lens.sort == "vec2":
        if not (isinstance(value, MatVal) and value.shape == (1, 2)):
            raise ShapeMismatchError(f"lens {lens.name!r} holds a 1x2 vector")
    elif lens.sort == "mode":
        if value not in lens.modes:
            raise ShapeMismatchError(
                f"lens {lens.name!r} takes modes {lens.modes}, got {value!r}"
            )
    elif lens.sort == "set":
        if not isinstance(value, frozenset) or any(
            not (isinstance(m, MatVal) and m.shape == (1, 2)) for m in value
        ):
            raise ShapeMismatchError(f"lens {lens.name!r} holds a set of 1x2 vectors")


def cont_vector(state):
    """The flat continuous vector (tuple of floats)."""
    return state.cont


def with_cont_vector(state, vec):
    """Replace the whole continuous vector; length must match the space."""
    vec = tuple(float(x) for x in vec)
    if len(vec) != state.space.dim:
        raise ShapeMismatchError(
            f"vector of length {len(vec)} for a dim-{state.space.dim} space"
        )
    return HybridState(state.space, vec, state.disc)
