"""Word combinatorics, truncated tensors and canonical lifts.

Drivers are piecewise linear; their lift is the segment-wise tensor
exponential glued by Chen's relation.  Words are plain tuples of letters in
``{1..d}``; level data is kept in dicts keyed by word, which is comfortable
at the desk-scale caps ``d <= 4``, ``N <= 4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product as iproduct
from typing import Callable, Iterable, Sequence

import numpy as np

from .gridpath import SampledPath, TimeGrid, pvar_from_increments

__all__ = [
    "Word",
    "all_words",
    "words_up_to",
    "shuffle_set",
    "shuffle_multiplicity",
    "RoughPath",
    "signature_lift",
    "chen_check",
    "shuffle_check",
    "rough_pvar_norm",
    "word_level_pvar",
    "rough_distance",
]

Word = tuple[int, ...]

MAX_LEVEL = 4
MAX_DIM = 4


def all_words(d: int, level: int) -> list[Word]:
    return [tuple(w) for w in iproduct(range(1, d + 1), repeat=level)]


def words_up_to(d: int, N: int, min_level: int = 1) -> list[Word]:
    out: list[Word] = []
    for k in range(min_level, N + 1):
        out.extend(all_words(d, k))
    return out


def shuffle_set(eps: Word, delta: Word) -> list[Word]:
    """All interleavings of two words preserving internal order, with multiplicity."""
    if not eps:
        return [tuple(delta)]
    if not delta:
        return [tuple(eps)]
    head_e = [(eps[0], *w) for w in shuffle_set(eps[1:], delta)]
    head_d = [(delta[0], *w) for w in shuffle_set(eps, delta[1:])]
    return head_e + head_d


@lru_cache(maxsize=None)
def _shuffle_mult(target: Word, parts: tuple[Word, ...]) -> int:
    """Number of interleavings of ``parts`` spelling ``target``."""
    if not target:
        return 1 if all(not p for p in parts) else 0
    total = 0
    head = target[0]
    for i, p in enumerate(parts):
        if p and p[0] == head:
            rest = parts[:i] + (p[1:],) + parts[i + 1 :]
            total += _shuffle_mult(target[1:], rest)
    return total


def shuffle_multiplicity(target: Word, parts: Sequence[Word]) -> int:
    return _shuffle_mult(tuple(target), tuple(tuple(p) for p in parts))


def _chen_product(a: dict[Word, float], b: dict[Word, float], words: Sequence[Word]) -> dict[Word, float]:
    """Truncated tensor product with unit level-0: (a * b)[w] over given words."""
    out: dict[Word, float] = {}
    for w in words:
        v = a.get(w, 0.0) + b.get(w, 0.0)
        for cut in range(1, len(w)):
            v += a.get(w[:cut], 0.0) * b.get(w[cut:], 0.0)
        out[w] = v
    return out


def _segment_signature(delta: np.ndarray, words: Sequence[Word]) -> dict[Word, float]:
    """Signature of one linear segment: word (i1..ik) -> prod delta_i / k!."""
    sig: dict[Word, float] = {}
    for w in words:
        v = 1.0
        for letter in w:
            v *= delta[letter - 1]
        sig[w] = v / math.factorial(len(w))
    return sig


@dataclass
class RoughPath:
    """Two-parameter family of truncated-tensor increments on a grid.

    Lift-backed instances carry per-cell signatures and assemble any window
    by Chen's relation, memoizing rows as they are touched.  Table-backed
    instances (see :meth:`from_pair_table`) carry explicit values and exist
    so the identity checks can see injected faults.
    """

    grid: TimeGrid
    d: int
    N: int
    p: float
    cell_sigs: list[dict[Word, float]] | None = None
    pair_table: dict[tuple[int, int], dict[Word, float]] | None = None
    base: np.ndarray | None = None
    _memo: dict[tuple[int, int], dict[Word, float]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.N < 1 or self.N > MAX_LEVEL:
            raise ValueError(f"truncation level must lie in 1..{MAX_LEVEL}, got {self.N}")
        if self.d < 1 or self.d > MAX_DIM:
            raise ValueError(f"driver dimension must lie in 1..{MAX_DIM}, got {self.d}")
        if self.cell_sigs is None and self.pair_table is None:
            raise ValueError("need either per-cell signatures or an explicit pair table")
        if self.base is None:
            object.__setattr__(self, "base", np.zeros(self.d))

    @property
    def words(self) -> list[Word]:
        return words_up_to(self.d, self.N)

    def increment_table(self, i: int, j: int) -> dict[Word, float]:
        """All word increments on ``(t_i, t_j)``."""
        if not 0 <= i <= j <= self.grid.n:
            raise ValueError(f"bad index pair ({i}, {j})")
        if i == j:
            return {w: 0.0 for w in self.words}
        if self.pair_table is not None:
            try:
                return self.pair_table[(i, j)]
            except KeyError:
                raise KeyError(f"pair table has no entry for ({i}, {j})") from None
        key = (i, j)
        got = self._memo.get(key)
        if got is not None:
            return got
        words = self.words
        # walk back to the longest memoized prefix, then extend cell by cell
        k = j - 1
        while k > i and (i, k) not in self._memo:
            k -= 1
        cur = self.cell_sigs[i] if k == i else self._memo[(i, k)]
        if k == i:
            k = i + 1
            self._memo[(i, k)] = cur
        while k < j:
            cur = _chen_product(cur, self.cell_sigs[k], words)
            k += 1
            self._memo[(i, k)] = cur
        return cur

    def increment(self, i: int, j: int, word: Word) -> float:
        return self.increment_table(i, j).get(tuple(word), 0.0)

    def trace(self) -> SampledPath:
        """Level-1 path reconstructed from increments, started at ``base``."""
        n = self.grid.n
        vals = np.zeros((n + 1, self.d))
        vals[0] = self.base
        for j in range(1, n + 1):
            tab = self.increment_table(j - 1, j)
            vals[j] = vals[j - 1] + [tab.get((k,), 0.0) for k in range(1, self.d + 1)]
        return SampledPath(self.grid, vals)

    def restrict(self, i: int, j: int) -> "RoughPath":
        if self.cell_sigs is None:
            raise ValueError("can only restrict lift-backed rough paths")
        tr = self.trace()
        return RoughPath(
            grid=self.grid.subgrid(i, j),
            d=self.d,
            N=self.N,
            p=self.p,
            cell_sigs=[dict(s) for s in self.cell_sigs[i:j]],
            base=tr.values[i].copy(),
        )

    def scaled(self, c: float) -> "RoughPath":
        """Driver scaled by ``c``; level-k entries pick up ``c^k``."""
        if self.cell_sigs is None:
            raise ValueError("can only scale lift-backed rough paths")
        cells = [{w: (c ** len(w)) * v for w, v in s.items()} for s in self.cell_sigs]
        return RoughPath(self.grid, self.d, self.N, self.p, cell_sigs=cells, base=self.base * c)

    @staticmethod
    def from_pair_table(
        grid: TimeGrid, d: int, N: int, p: float, table: dict[tuple[int, int], dict[Word, float]]
    ) -> "RoughPath":
        return RoughPath(grid, d, N, p, pair_table=dict(table))

    def window_arrays(self, i: int, j: int, words: Sequence[Word]) -> dict[Word, np.ndarray]:
        """Dense ``(a, b)`` increment arrays for the requested words.

        Fills all pairs ``i <= a < b <= j`` in O(window^2) Chen products,
        keeping only one running table per row.
        """
        words = [tuple(w) for w in words]
        k = j - i
        out = {w: np.zeros((k + 1, k + 1)) for w in words}
        needed = self.words
        for a in range(i, j):
            if self.pair_table is not None:
                for b in range(a + 1, j + 1):
                    tab = self.increment_table(a, b)
                    for w in words:
                        out[w][a - i, b - i] = tab.get(w, 0.0)
                continue
            cur = dict(self.cell_sigs[a])
            for w in words:
                out[w][a - i, a + 1 - i] = cur.get(w, 0.0)
            for b in range(a + 2, j + 1):
                cur = _chen_product(cur, self.cell_sigs[b - 1], needed)
                for w in words:
                    out[w][a - i, b - i] = cur.get(w, 0.0)
        return out

    def export_csv(self, path: str, max_pairs: int | None = None) -> None:
        """Rows ``s,t,word,value`` with the word dot-encoded, e.g. ``1.2.1``."""
        n = self.grid.n
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n + 1)]
        if max_pairs is not None:
            pairs = pairs[:max_pairs]
        with open(path, "w") as fh:
            fh.write("s,t,word,value\n")
            for i, j in pairs:
                tab = self.increment_table(i, j)
                for w in sorted(tab, key=lambda w: (len(w), w)):
                    enc = ".".join(str(x) for x in w)
                    fh.write(
                        f"{self.grid.time(i):.17g},{self.grid.time(j):.17g},{enc},{tab[w]:.17g}\n"
                    )


def signature_lift(eta: SampledPath, N: int, p: float | None = None) -> RoughPath:
    """Canonical lift of a piecewise-linear driver to its truncated signature."""
    if N > MAX_LEVEL:
        raise ValueError(f"truncation level {N} exceeds the dense-representation cap {MAX_LEVEL}")
    d = eta.dim
    words = words_up_to(d, N)
    cells = [
        _segment_signature(eta.values[i + 1] - eta.values[i], words)
        for i in range(eta.grid.n)
    ]
    return RoughPath(eta.grid, d, N, float(p if p is not None else N), cell_sigs=cells, base=eta.values[0].copy())


def _sample_triples(n: int, rng: np.random.Generator | None, cap: int) -> list[tuple[int, int, int]]:
    total = (n + 1) * n * (n - 1) // 6
    if rng is None or total <= cap:
        return [
            (i, u, j)
            for i in range(n + 1)
            for u in range(i + 1, n + 1)
            for j in range(u + 1, n + 1)
        ]
    out = []
    while len(out) < cap:
        i, u, j = sorted(rng.integers(0, n + 1, size=3))
        if i < u < j:
            out.append((int(i), int(u), int(j)))
    return out


def chen_check(zeta: RoughPath, rng: np.random.Generator | None = None, cap: int = 400) -> float:
    """Max violation of the Chen relation over (sampled) grid triples."""
    worst = 0.0
    for i, u, j in _sample_triples(zeta.grid.n, rng, cap):
        left = zeta.increment_table(i, j)
        a = zeta.increment_table(i, u)
        b = zeta.increment_table(u, j)
        prod = _chen_product(a, b, zeta.words)
        for w in zeta.words:
            worst = max(worst, abs(left.get(w, 0.0) - prod[w]))
    return worst


def shuffle_check(zeta: RoughPath, rng: np.random.Generator | None = None, cap: int = 200) -> float:
    """Max violation of the shuffle identity over (sampled) grid pairs."""
    n = zeta.grid.n
    pairs = [(i, j) for i in range(n + 1) for j in range(i + 1, n + 1)]
    if rng is not None and len(pairs) > cap:
        sel = rng.choice(len(pairs), size=cap, replace=False)
        pairs = [pairs[int(k)] for k in sel]
    lows = words_up_to(zeta.d, zeta.N - 1) if zeta.N > 1 else words_up_to(zeta.d, 1)
    worst = 0.0
    for i, j in pairs:
        tab = zeta.increment_table(i, j)
        for e in lows:
            for f in lows:
                if len(e) + len(f) > zeta.N:
                    continue
                lhs = tab.get(e, 0.0) * tab.get(f, 0.0)
                rhs = sum(tab.get(w, 0.0) for w in shuffle_set(e, f))
                worst = max(worst, abs(lhs - rhs))
    return worst


def word_level_pvar(zeta: RoughPath, word: Word, window: tuple[int, int] | None = None) -> float:
    """p/|word|-variation of one word's two-parameter increments."""
    i, j = (0, zeta.grid.n) if window is None else window
    arrays = zeta.window_arrays(i, j, [word])[tuple(word)]
    expo = zeta.p / len(word)

    def inc(a: int, b: int) -> float:
        return abs(arrays[a - i, b - i])

    return pvar_from_increments(inc, range(i, j + 1), expo)


def rough_pvar_norm(zeta: RoughPath, window: tuple[int, int] | None = None) -> float:
    """Sum over words of the level-weighted variation seminorms."""
    i, j = (0, zeta.grid.n) if window is None else window
    arrays = zeta.window_arrays(i, j, zeta.words)
    total = 0.0
    for w in zeta.words:
        arr = arrays[tuple(w)]
        expo = zeta.p / len(w)

        def inc(a: int, b: int, arr=arr) -> float:
            return abs(arr[a - i, b - i])

        total += pvar_from_increments(inc, range(i, j + 1), expo)
    return total


def rough_distance(zeta: RoughPath, eta: RoughPath, window: tuple[int, int] | None = None) -> float:
    """p-variation distance: word-wise variation of increment differences."""
    if (zeta.d, zeta.N) != (eta.d, eta.N) or zeta.grid.n != eta.grid.n:
        raise ValueError("rough paths must share grid, dimension and level")
    i, j = (0, zeta.grid.n) if window is None else window
    az = zeta.window_arrays(i, j, zeta.words)
    ae = eta.window_arrays(i, j, eta.words)
    total = 0.0
    for w in zeta.words:
        diff = az[tuple(w)] - ae[tuple(w)]
        expo = zeta.p / len(w)

        def inc(a: int, b: int, diff=diff) -> float:
            return abs(diff[a - i, b - i])

        total += pvar_from_increments(inc, range(i, j + 1), expo)
    return total


def normalization_scale(zeta: RoughPath, omega: Callable[[float, float], float]) -> float:
    """Largest scale factor keeping every word inside the control budget.

    Enforces ``sup |c^{|w|} z^w_{st}|^{|w|/floor(p)} <= omega(s,t)`` over all
    grid pairs, the global normalization the solver assumes.
    """
    fl = max(1, math.floor(zeta.p))
    c = np.inf
    n = zeta.grid.n
    for i in range(n):
        for j in range(i + 1, n + 1):
            tab = zeta.increment_table(i, j)
            om = omega(zeta.grid.time(i), zeta.grid.time(j))
            if om <= 0:
                continue
            for w, v in tab.items():
                if v == 0.0:
                    continue
                k = len(w)
                # need (c^k |v|)^(k/fl) <= om
                bound = (om ** (fl / k) / abs(v)) ** (1.0 / k)
                c = min(c, bound)
    return min(float(c), 1.0) if np.isfinite(c) else 1.0
