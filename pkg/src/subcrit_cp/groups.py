"""Countable-group arithmetic for the two supported lattice models.

Elements are plain hashable tuples so they can be used as dict keys and
compared cheaply:

* ``zd``: an integer vector ``(x_1, ..., x_d)``; the order is lexicographic.
* ``free_product``: a reduced word ``((letter, exp), ...)`` over the factors of
  a free product of cyclic groups.  ``letter`` indexes a factor and ``exp`` is
  normalized to ``1..n-1`` for a factor of order ``n`` or to a nonzero integer
  for an infinite cyclic factor.  The order is shortlex (word length first).

Configuration sets are represented as sorted, duplicate-free tuples of
elements (see :meth:`Group.config`).
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

_LETTERS = "abcdfghjklmnpqrsuvwxyz"  # skips e, i, o, t to keep strings unambiguous


class Group:
    """Interface shared by the concrete group models."""

    model: str = ""

    # arithmetic -------------------------------------------------------
    @property
    def identity(self):
        raise NotImplementedError

    def mul(self, x, y):
        raise NotImplementedError

    def inv(self, x):
        raise NotImplementedError

    def word_length(self, x) -> int:
        raise NotImplementedError

    def key(self, x):
        """Sort key realizing the total order of the model."""
        raise NotImplementedError

    def generators(self) -> list:
        """Standard symmetric generating set (closed under inversion)."""
        raise NotImplementedError

    # I/O ----------------------------------------------------------------
    def parse(self, obj):
        raise NotImplementedError

    def format(self, x) -> str:
        raise NotImplementedError

    def stream_key(self, x) -> tuple[int, ...]:
        """Injective map to nonnegative integers, used to key random streams."""
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    # derived helpers ------------------------------------------------------
    def div(self, x, y):
        """Return ``x^{-1} y``."""
        return self.mul(self.inv(x), y)

    def config(self, items: Iterable) -> tuple:
        """Sorted duplicate-free tuple (a ConfigSet)."""
        return tuple(sorted(set(items), key=self.key))

    def translate(self, g, A: Iterable) -> tuple:
        """Left translate ``gA`` as a ConfigSet."""
        return self.config(self.mul(g, a) for a in A)

    def diameter(self, A: Sequence) -> int:
        """Max word length of ``a^{-1} b`` over pairs in ``A`` (0 for |A| <= 1)."""
        best = 0
        n = len(A)
        for p in range(n):
            ip = self.inv(A[p])
            for q in range(p + 1, n):
                w = self.word_length(self.mul(ip, A[q]))
                if w > best:
                    best = w
        return best

    def ball(self, radius: int) -> list:
        """All elements of word length at most ``radius``, in BFS order."""
        gens = self.generators()
        seen = {self.identity: 0}
        queue = deque([self.identity])
        while queue:
            x = queue.popleft()
            dx = seen[x]
            if dx == radius:
                continue
            for s in gens:
                y = self.mul(x, s)
                if y not in seen:
                    seen[y] = dx + 1
                    queue.append(y)
        return list(seen)

    def format_set(self, A: Sequence) -> str:
        return "{" + ",".join(self.format(a) for a in A) + "}"


@dataclass(frozen=True)
class ZdGroup(Group):
    """The lattice Z^d under addition."""

    dim: int = 1
    model: str = field(default="zd", init=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be at least 1")

    @property
    def identity(self):
        return (0,) * self.dim

    def mul(self, x, y):
        return tuple(a + b for a, b in zip(x, y))

    def inv(self, x):
        return tuple(-a for a in x)

    def word_length(self, x) -> int:
        return sum(abs(a) for a in x)

    def key(self, x):
        return x

    def generators(self) -> list:
        gens = []
        for k in range(self.dim):
            for s in (1, -1):
                e = [0] * self.dim
                e[k] = s
                gens.append(tuple(e))
        return gens

    def config(self, items: Iterable) -> tuple:
        return tuple(sorted(set(items)))

    def diameter(self, A: Sequence) -> int:
        if len(A) <= 1:
            return 0
        best = 0
        for p in range(len(A)):
            ap = A[p]
            for q in range(p + 1, len(A)):
                w = sum(abs(u - v) for u, v in zip(ap, A[q]))
                if w > best:
                    best = w
        return best

    def parse(self, obj):
        if isinstance(obj, bool):
            raise ValueError(f"not a Z^{self.dim} element: {obj!r}")
        if isinstance(obj, int):
            vec = (obj,)
        elif isinstance(obj, str):
            s = obj.strip().strip("()[]")
            vec = tuple(int(p) for p in s.split(",")) if s else ()
        else:
            vec = tuple(int(p) for p in obj)
        if len(vec) != self.dim:
            raise ValueError(f"expected a {self.dim}-vector, got {obj!r}")
        return vec

    def format(self, x) -> str:
        if self.dim == 1:
            return str(x[0])
        return "(" + ",".join(str(a) for a in x) + ")"

    def stream_key(self, x) -> tuple[int, ...]:
        return tuple(2 * a if a >= 0 else -2 * a - 1 for a in x)

    def descriptor(self) -> dict:
        return {"model": "zd", "dim": self.dim}


@dataclass(frozen=True)
class FreeProductGroup(Group):
    """Free product of cyclic groups; ``orders[k] == 0`` means infinite cyclic.

    A single factor gives a cyclic group, ``(2, 2, 2)`` gives the group whose
    Cayley graph is the 3-regular tree, and ``(0, 0)`` gives the free group F_2.
    """

    orders: tuple = (2, 2, 2)
    model: str = field(default="free_product", init=False)

    def __post_init__(self):
        orders = tuple(int(n) for n in self.orders)
        if not orders:
            raise ValueError("free product needs at least one factor")
        if any(n == 1 or n < 0 for n in orders):
            raise ValueError("factor orders must be 0 (infinite) or >= 2")
        if len(orders) > len(_LETTERS):
            raise ValueError("too many factors")
        object.__setattr__(self, "orders", orders)

    @property
    def identity(self):
        return ()

    def _norm(self, letter, e):
        n = self.orders[letter]
        return e % n if n else e

    def mul(self, x, y):
        if not y:
            return x
        if not x:
            return y
        w = list(x)
        for letter, e in y:
            if w and w[-1][0] == letter:
                e2 = self._norm(letter, w[-1][1] + e)
                w.pop()
                if e2:
                    w.append((letter, e2))
            else:
                w.append((letter, e))
        return tuple(w)

    def inv(self, x):
        return tuple((letter, self._norm(letter, -e)) for letter, e in reversed(x))

    def _syll_len(self, letter, e):
        n = self.orders[letter]
        return min(e, n - e) if n else abs(e)

    def word_length(self, x) -> int:
        return sum(self._syll_len(letter, e) for letter, e in x)

    def key(self, x):
        return (self.word_length(x), x)

    def generators(self) -> list:
        gens = []
        for letter, n in enumerate(self.orders):
            g = ((letter, 1),)
            gi = self.inv(g)
            gens.append(g)
            if gi != g:
                gens.append(gi)
        return gens

    def letter(self, k: int):
        return ((k, 1),)

    _TOKEN = re.compile(r"([a-z])(?:\^\(?(-?\d+)\)?)?")

    def parse(self, obj):
        if isinstance(obj, (list, tuple)):
            # explicit syllable list [[letter, exp], ...]
            x = ()
            for letter, e in obj:
                letter = int(letter)
                if not 0 <= letter < len(self.orders):
                    raise ValueError(f"unknown factor {letter}")
                e = self._norm(letter, int(e))
                if e:
                    x = self.mul(x, ((letter, e),))
            return x
        if not isinstance(obj, str):
            raise ValueError(f"not a word: {obj!r}")
        s = obj.replace(" ", "").replace("*", "")
        if s in ("", "1"):
            return ()
        x = ()
        pos = 0
        while pos < len(s):
            m = self._TOKEN.match(s, pos)
            if m is None:
                raise ValueError(f"cannot parse word {obj!r}")
            letter = _LETTERS.find(m.group(1))
            if letter < 0 or letter >= len(self.orders):
                raise ValueError(f"unknown letter {m.group(1)!r} in {obj!r}")
            e = self._norm(letter, int(m.group(2)) if m.group(2) else 1)
            if e:
                x = self.mul(x, ((letter, e),))
            pos = m.end()
        return x

    def format(self, x) -> str:
        if not x:
            return "1"
        parts = []
        for letter, e in x:
            ch = _LETTERS[letter]
            parts.append(ch if e == 1 else f"{ch}^{e}")
        return "".join(parts)

    def stream_key(self, x) -> tuple[int, ...]:
        out = [len(x)]
        for letter, e in x:
            out.append(letter)
            out.append(2 * e if e >= 0 else -2 * e - 1)
        return tuple(out)

    def descriptor(self) -> dict:
        return {"model": "free_product", "orders": list(self.orders)}


def group_from_spec(spec) -> Group:
    """Build a group from a config fragment such as ``{"model": "zd", "dim": 2}``."""
    if isinstance(spec, Group):
        return spec
    if not isinstance(spec, dict):
        raise ValueError(f"group spec must be an object, got {spec!r}")
    model = spec.get("model")
    if model == "zd":
        return ZdGroup(int(spec.get("dim", 1)))
    if model == "free_product":
        orders = spec.get("orders")
        if orders is None:
            raise ValueError("free_product group needs 'orders'")
        return FreeProductGroup(tuple(int(n) for n in orders))
    raise ValueError(f"unknown group model {model!r}")
