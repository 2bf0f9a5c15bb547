"""Words, cylinders, periodic orbits and the ultrametric on {0..d-1}^N."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ResourceError

DEFAULT_LAMBDA = 0.5
DEFAULT_FIX_CAP = 1 << 22


def _check_symbols(symbols, d):
    if d < 1:
        raise ValueError(f"alphabet size must be positive, got {d}")
    for s in symbols:
        if not 0 <= s < d:
            raise ValueError(f"symbol {s} outside alphabet 0..{d - 1}")


def _parse_digits(text):
    if not all(ch.isdigit() for ch in text):
        raise ValueError(f"words are strings of digits, got {text!r}")
    return tuple(int(ch) for ch in text)


@dataclass(frozen=True, order=True)
class Word:
    symbols: tuple
    d: int = 2

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        _check_symbols(self.symbols, self.d)

    @classmethod
    def parse(cls, text: str, d: int = 2) -> "Word":
        return cls(_parse_digits(text), d)

    def __len__(self):
        return len(self.symbols)

    def __str__(self):
        return "".join(map(str, self.symbols))

    @property
    def index(self) -> int:
        """Big-endian base-d value; lexicographic order equals index order."""
        return word_index(self.symbols, self.d)


@dataclass(frozen=True, order=True)
class Cylinder:
    word: Word

    def __post_init__(self):
        if len(self.word) < 1:
            raise ValueError("cylinders need a nonempty word")

    @classmethod
    def parse(cls, text: str, d: int = 2) -> "Cylinder":
        return cls(Word.parse(text, d))

    @classmethod
    def from_index(cls, index: int, depth: int, d: int = 2) -> "Cylinder":
        return cls(Word(index_word(index, depth, d), d))

    @property
    def depth(self) -> int:
        return len(self.word)

    @property
    def d(self) -> int:
        return self.word.d

    @property
    def index(self) -> int:
        return self.word.index

    def contains(self, point: "Point") -> bool:
        return point.prefix(self.depth) == self.word.symbols

    def __str__(self):
        return f"[{self.word}]"


def primitive_root(symbols: tuple) -> tuple:
    n = len(symbols)
    for p in range(1, n + 1):
        if n % p == 0 and symbols[:p] * (n // p) == symbols:
            return symbols[:p]
    return symbols


def least_rotation(symbols: tuple) -> tuple:
    return min(symbols[i:] + symbols[:i] for i in range(len(symbols)))


@dataclass(frozen=True, order=True)
class Point:
    """Eventually periodic point ``pre`` followed by ``rep`` repeated forever.

    Stored in reduced form (primitive ``rep``, shortest ``pre``) so that equal
    points compare equal.
    """

    pre: tuple
    rep: tuple
    d: int = 2

    def __post_init__(self):
        pre = tuple(int(s) for s in self.pre)
        rep = tuple(int(s) for s in self.rep)
        if not rep:
            raise ValueError("the periodic part of a point must be nonempty")
        _check_symbols(pre + rep, self.d)
        rep = primitive_root(rep)
        while pre and pre[-1] == rep[-1]:
            pre = pre[:-1]
            rep = rep[-1:] + rep[:-1]
        object.__setattr__(self, "pre", pre)
        object.__setattr__(self, "rep", rep)

    @classmethod
    def parse(cls, text: str, d: int = 2) -> "Point":
        """Parse ``"pre|rep"``; ``"|01"`` is (01)^inf, ``"0|1"`` is 0 1^inf."""
        if text.count("|") != 1:
            raise ValueError(f"point strings look like 'pre|rep', got {text!r}")
        pre, rep = text.split("|")
        return cls(_parse_digits(pre), _parse_digits(rep), d)

    @classmethod
    def periodic(cls, word, d: int = 2) -> "Point":
        if isinstance(word, str):
            word = _parse_digits(word)
        return cls((), tuple(word), d)

    def __str__(self):
        return "".join(map(str, self.pre)) + "|" + "".join(map(str, self.rep))

    def symbol(self, i: int) -> int:
        if i < len(self.pre):
            return self.pre[i]
        return self.rep[(i - len(self.pre)) % len(self.rep)]

    def prefix(self, n: int) -> tuple:
        return tuple(self.symbol(i) for i in range(n))

    def shift(self, times: int = 1) -> "Point":
        p = self
        for _ in range(times):
            if p.pre:
                p = Point(p.pre[1:], p.rep, p.d)
            else:
                p = Point((), p.rep[1:] + p.rep[:1], p.d)
        return p

    def cylinder(self, depth: int) -> Cylinder:
        return Cylinder(Word(self.prefix(depth), self.d))


@dataclass(frozen=True, order=True)
class PeriodicOrbit:
    primitive_word: Word

    def __post_init__(self):
        s = self.primitive_word.symbols
        if not s:
            raise ValueError("orbits need a nonempty word")
        if primitive_root(s) != s or least_rotation(s) != s:
            raise ValueError(f"{self.primitive_word} is not a Lyndon word; use canonical_orbit")

    @property
    def period(self) -> int:
        return len(self.primitive_word)

    @property
    def d(self) -> int:
        return self.primitive_word.d

    def points(self) -> list:
        s = self.primitive_word.symbols
        return [Point((), s[i:] + s[:i], self.d) for i in range(len(s))]

    def __str__(self):
        return f"orbit({self.primitive_word})"


def canonical_orbit(w) -> PeriodicOrbit:
    """Orbit of the periodic point w^inf."""
    if isinstance(w, str):
        w = Word.parse(w)
    if len(w) == 0:
        raise ValueError("canonical_orbit needs a nonempty word")
    root = least_rotation(primitive_root(w.symbols))
    return PeriodicOrbit(Word(root, w.d))


def _lyndon_words(n, d):
    # Duval's generator: Lyndon words of length <= n, lexicographic order
    w = [-1]
    while w:
        w[-1] += 1
        m = len(w)
        if n % m == 0:
            yield tuple(w)
        while len(w) < n:
            w.append(w[-m])
        while w and w[-1] == d - 1:
            w.pop()


def enumerate_fix(n: int, d: int = 2, exact: bool = False, cap: int = DEFAULT_FIX_CAP,
                  method: str = "necklace") -> list:
    """All orbits of points fixed by sigma^n, sorted lexicographically.

    With ``exact=True`` only orbits of period exactly ``n`` are returned.
    ``method="filter"`` scans all d**n words (slow, used as a cross-check).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if d < 2:
        raise ValueError("alphabet size must be >= 2")
    if d ** n > cap:
        raise ResourceError(f"Fix_{n} over {d} symbols has {d ** n} points, cap is {cap}")
    if method == "necklace":
        words = list(_lyndon_words(n, d))
    elif method == "filter":
        words = []
        for idx in range(d ** n):
            s = index_word(idx, n, d)
            root = primitive_root(s)
            if s == least_rotation(s):
                words.append(root)
    else:
        raise ValueError(f"unknown method {method!r}")
    orbits = sorted(PeriodicOrbit(Word(s, d)) for s in set(words))
    if exact:
        orbits = [o for o in orbits if o.period == n]
    return orbits


def first_disagreement(x: Point, y: Point):
    """Least index where x and y differ, or None when x == y."""
    if x == y:
        return None
    horizon = max(len(x.pre), len(y.pre)) + math.lcm(len(x.rep), len(y.rep))
    for i in range(horizon):
        if x.symbol(i) != y.symbol(i):
            return i
    return None


def metric_distance(x: Point, y: Point, lam: float = DEFAULT_LAMBDA) -> float:
    m = first_disagreement(x, y)
    return 0.0 if m is None else lam ** m


def shift_frame(v: Cylinder):
    """(prefix, suffix) depth-(k-1) cylinders of a depth-k cylinder.

    sigma maps [a w] into [w]: the suffix is where the shifted points land.
    """
    if v.depth < 2:
        raise ValueError("shift_frame needs depth >= 2")
    s = v.word.symbols
    return Cylinder(Word(s[:-1], v.d)), Cylinder(Word(s[1:], v.d))


# ---------------------------------------------------------------------------
# integer encodings used by the vectorised code paths

def word_index(symbols, d: int) -> int:
    idx = 0
    for s in symbols:
        idx = idx * d + s
    return idx


def index_word(index: int, depth: int, d: int) -> tuple:
    out = []
    for _ in range(depth):
        index, r = divmod(index, d)
        out.append(r)
    return tuple(reversed(out))


@lru_cache(maxsize=64)
def _digit_table(depth: int, d: int) -> np.ndarray:
    idx = np.arange(d ** depth)
    powers = d ** np.arange(depth - 1, -1, -1)
    table = (idx[:, None] // powers[None, :]) % d
    table.setflags(write=False)
    return table


def digit_table(depth: int, d: int) -> np.ndarray:
    """(d**depth, depth) array whose row i spells the word with index i."""
    return _digit_table(depth, d)


def common_prefix_lengths(words: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Length of the longest common prefix of each row of ``words`` with ``target``."""
    mism = words != target[None, :]
    any_mism = mism.any(axis=1)
    first = mism.argmax(axis=1)
    return np.where(any_mism, first, words.shape[1])
