"""Feasibility oracles answering the extension query behind allowed actions.

Every oracle answers ``can_extend(selected, discarded, pin)``: does some
feasible set contain everything selected, avoid everything discarded, and
respect an optional pin forcing one more element in or out? Oracles are
immutable and all queries are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from .errors import EncodingOverflow, TooLarge, UnknownElement, WrongKind

Pin = tuple[int, bool] | None

EXPLICIT_MAX_ELEMENTS = 24
MATERIALIZE_MAX_ELEMENTS = 16
NESTED_MAX_K1 = 20


def _apply_pin(selected: frozenset[int], discarded: frozenset[int], pin: Pin):
    if pin is None:
        return selected, discarded
    e, inside = pin
    if inside:
        return selected | {e}, discarded
    return selected, discarded | {e}


@dataclass(frozen=True)
class ExplicitFamilyOracle:
    kind = "explicit_family"
    n: int
    sets: tuple[frozenset[int], ...]

    def __post_init__(self):
        if self.n > EXPLICIT_MAX_ELEMENTS:
            raise TooLarge(f"explicit families capped at {EXPLICIT_MAX_ELEMENTS} elements")
        if not self.sets:
            raise ValueError("family must be nonempty")
        for s in self.sets:
            for e in s:
                self._check(e)
        object.__setattr__(self, "_masks",
                           tuple(sum(1 << e for e in s) for s in self.sets))

    def _check(self, e: int) -> None:
        if not (0 <= e < self.n):
            raise UnknownElement(f"element {e} outside [0, {self.n})")

    @property
    def downward_closed(self) -> bool:
        family = set(self.sets)
        return all(s - {e} in family for s in self.sets for e in s)

    def can_extend(self, selected, discarded, pin: Pin = None) -> bool:
        sel, dis = _apply_pin(frozenset(selected), frozenset(discarded), pin)
        for e in sel | dis:
            self._check(e)
        sm = sum(1 << e for e in sel)
        dm = sum(1 << e for e in dis)
        return any(sm & m == sm and dm & m == 0 for m in self._masks)

    def is_feasible(self, s: Iterable[int]) -> bool:
        return frozenset(s) in set(self.sets)


@dataclass(frozen=True)
class KUniformOracle:
    kind = "k_uniform"
    n: int
    k: int
    downward_closed = True

    def __post_init__(self):
        if not (0 <= self.k):
            raise ValueError("capacity must be nonnegative")

    def _check(self, e: int) -> None:
        if not (0 <= e < self.n):
            raise UnknownElement(f"element {e} outside [0, {self.n})")

    def can_extend(self, selected, discarded, pin: Pin = None) -> bool:
        sel, _ = _apply_pin(frozenset(selected), frozenset(discarded), pin)
        for e in sel:
            self._check(e)
        if pin is not None:
            self._check(pin[0])
        return len(sel) <= self.k

    def is_feasible(self, s: Iterable[int]) -> bool:
        return len(frozenset(s)) <= self.k


# --- rooted-tree layout ----------------------------------------------------
#
# Elements are all strings of length 1..k over a k-letter alphabet, laid out
# layer-major then lexicographic: layer L holds k**L elements starting at
# offset(L) = sum_{i<L} k**i; within a layer, index m encodes the string in
# base k (characters 0-based).

def tree_n(k: int) -> int:
    return sum(k ** i for i in range(1, k + 1))


def tree_offsets(k: int) -> list[int]:
    offs = [0]
    for i in range(1, k + 1):
        offs.append(offs[-1] + k ** i)
    return offs


@dataclass(frozen=True)
class TreePathOracle:
    """Feasible sets are subsets of a single root-to-leaf path: any two
    member strings must be prefix-comparable."""

    kind = "tree_path"
    k: int
    downward_closed = True

    def __post_init__(self):
        if self.k < 2 or self.k % 2 != 0:
            raise ValueError("tree arity must be even and at least 2")
        object.__setattr__(self, "_offsets", tuple(tree_offsets(self.k)))
        object.__setattr__(self, "n", self._offsets[-1])

    def _check(self, e: int) -> None:
        if not (0 <= e < self.n):
            raise UnknownElement(f"element {e} outside [0, {self.n})")

    def layer_index(self, e: int) -> tuple[int, int]:
        """(layer, index-within-layer), layer 1-based."""
        self._check(e)
        offs = self._offsets
        for layer in range(1, self.k + 1):
            if e < offs[layer]:
                return layer, e - offs[layer - 1]
        raise UnknownElement(e)

    def element_id(self, layer: int, idx: int) -> int:
        return self._offsets[layer - 1] + idx

    def string_of(self, e: int) -> tuple[int, ...]:
        """The element's string, characters 1-based as displayed."""
        layer, m = self.layer_index(e)
        chars = []
        for _ in range(layer):
            chars.append(m % self.k + 1)
            m //= self.k
        return tuple(reversed(chars))

    def parent(self, e: int) -> int | None:
        layer, m = self.layer_index(e)
        if layer == 1:
            return None
        return self.element_id(layer - 1, m // self.k)

    def comparable(self, e1: int, e2: int) -> bool:
        l1, m1 = self.layer_index(e1)
        l2, m2 = self.layer_index(e2)
        if l1 > l2:
            l1, m1, l2, m2 = l2, m2, l1, m1
        return m2 // self.k ** (l2 - l1) == m1

    def _is_chain(self, sel: frozenset[int]) -> bool:
        if not sel:
            return True
        deepest = max(sel, key=lambda e: self.layer_index(e)[0])
        return all(self.comparable(e, deepest) for e in sel)

    def can_extend(self, selected, discarded, pin: Pin = None) -> bool:
        sel, _ = _apply_pin(frozenset(selected), frozenset(discarded), pin)
        for e in sel:
            self._check(e)
        if pin is not None:
            self._check(pin[0])
        return self._is_chain(sel)

    def is_feasible(self, s: Iterable[int]) -> bool:
        return self._is_chain(frozenset(s))


@dataclass(frozen=True)
class PartitionOneBlockOracle:
    """Downward-closed: any subset of a single partition block."""

    kind = "partition_one_block"
    blocks: tuple[tuple[int, ...], ...]
    downward_closed = True

    def __post_init__(self):
        ids = [e for b in self.blocks for e in b]
        n = len(ids)
        if sorted(ids) != list(range(n)):
            raise ValueError("blocks must partition a dense id range")
        block_of = {}
        for bi, b in enumerate(self.blocks):
            for e in b:
                block_of[e] = bi
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "_block_of", block_of)

    def _check(self, e: int) -> None:
        if e not in self._block_of:
            raise UnknownElement(f"element {e} outside [0, {self.n})")

    def can_extend(self, selected, discarded, pin: Pin = None) -> bool:
        sel, _ = _apply_pin(frozenset(selected), frozenset(discarded), pin)
        for e in sel:
            self._check(e)
        if pin is not None:
            self._check(pin[0])
        return len({self._block_of[e] for e in sel}) <= 1

    def is_feasible(self, s: Iterable[int]) -> bool:
        return len({self._block_of[e] for e in frozenset(s)}) <= 1


@dataclass(frozen=True)
class PairMatchOracle:
    """Feasible sets are exactly the pairs {i, i+k}; not downward-closed."""

    kind = "pair_match"
    k: int
    downward_closed = False

    def __post_init__(self):
        object.__setattr__(self, "n", 2 * self.k)

    def _check(self, e: int) -> None:
        if not (0 <= e < self.n):
            raise UnknownElement(f"element {e} outside [0, {self.n})")

    def can_extend(self, selected, discarded, pin: Pin = None) -> bool:
        sel, dis = _apply_pin(frozenset(selected), frozenset(discarded), pin)
        for e in sel | dis:
            self._check(e)
        for i in range(self.k):
            pair = {i, i + self.k}
            if sel <= pair and not (dis & pair):
                return True
        return False

    def is_feasible(self, s: Iterable[int]) -> bool:
        s = frozenset(s)
        return any(s == {i, i + self.k} for i in range(self.k))


@dataclass(frozen=True)
class NestedPhaseOracle:
    """Feasible sets are exactly V_i | {b_j} | f_i(j): a subset of A encoding
    the index i, exactly one B element, and the completion f_i(j) inside U_i.

    f_i encodes j in binary over U_i's elements in ascending id order, which
    requires 2**|U_i| >= |B| for injectivity.
    """

    kind = "nested_phase"
    a_ids: tuple[int, ...]
    b_ids: tuple[int, ...]
    c_ids: tuple[int, ...]
    u_sets: tuple[frozenset[int], ...]
    downward_closed = False

    def __post_init__(self):
        k1 = len(self.a_ids)
        if k1 > NESTED_MAX_K1:
            raise TooLarge(f"A-part capped at {NESTED_MAX_K1} elements")
        if len(self.u_sets) != 2 ** k1:
            raise ValueError("need one U set per subset of A")
        ids = set(self.a_ids) | set(self.b_ids) | set(self.c_ids)
        if len(ids) != len(self.a_ids) + len(self.b_ids) + len(self.c_ids):
            raise ValueError("A, B, C must be disjoint")
        cset = set(self.c_ids)
        k2 = len(self.b_ids)
        for u in self.u_sets:
            if not u <= cset:
                raise ValueError("every U set must lie inside C")
            if 2 ** len(u) < k2:
                raise EncodingOverflow(
                    f"|U|={len(u)} cannot injectively encode {k2} completions")
        object.__setattr__(self, "n", len(self.a_ids) + len(self.b_ids) + len(self.c_ids))
        object.__setattr__(self, "_a_pos", {e: t for t, e in enumerate(self.a_ids)})
        object.__setattr__(self, "_b_pos", {e: j for j, e in enumerate(self.b_ids)})
        object.__setattr__(self, "_u_sorted", tuple(tuple(sorted(u)) for u in self.u_sets))

    def _check(self, e: int) -> None:
        if not (0 <= e < self.n):
            raise UnknownElement(f"element {e} outside [0, {self.n})")

    def v_set(self, i: int) -> frozenset[int]:
        return frozenset(self.a_ids[t] for t in range(len(self.a_ids)) if (i >> t) & 1)

    def completion(self, i: int, j: int) -> frozenset[int]:
        """f_i(j): binary encoding of j over U_i in ascending id order."""
        u = self._u_sorted[i]
        return frozenset(u[t] for t in range(len(u)) if (j >> t) & 1)

    def can_extend(self, selected, discarded, pin: Pin = None) -> bool:
        sel, dis = _apply_pin(frozenset(selected), frozenset(discarded), pin)
        for e in sel | dis:
            self._check(e)
        if sel & dis:
            return False
        a_pos = self._a_pos
        sel_a = sum(1 << a_pos[e] for e in sel if e in a_pos)
        dis_a = sum(1 << a_pos[e] for e in dis if e in a_pos)
        sel_b = [self._b_pos[e] for e in sel if e in self._b_pos]
        if len(sel_b) > 1:
            return False
        sel_c = sel - set(self.a_ids) - set(self.b_ids)
        dis_c = dis & set(self.c_ids)
        k1 = len(self.a_ids)
        free = ((1 << k1) - 1) & ~sel_a & ~dis_a
        if len(sel_b) == 1:
            js = [sel_b[0]]
        else:
            js = [j for j, b in enumerate(self.b_ids) if b not in dis]
        # candidate i ranges over sel_a plus any subset of the undecided A bits
        sub = free
        while True:
            i = sel_a | sub
            useti = self.u_sets[i]
            if sel_c <= useti:
                for j in js:
                    f = self.completion(i, j)
                    if sel_c <= f and not (f & dis_c):
                        return True
            if sub == 0:
                break
            sub = (sub - 1) & free
        return False

    def is_feasible(self, s: Iterable[int]) -> bool:
        s = frozenset(s)
        i = 0
        for t, a in enumerate(self.a_ids):
            if a in s:
                i |= 1 << t
        bs = [j for j, b in enumerate(self.b_ids) if b in s]
        if len(bs) != 1:
            return False
        sc = s - set(self.a_ids) - set(self.b_ids)
        return sc == self.completion(i, bs[0])


def is_downward_closed(oracle) -> bool:
    """Subset-closure check; only explicit families are inspected, the
    structured kinds answer by construction."""
    if isinstance(oracle, ExplicitFamilyOracle):
        return oracle.downward_closed
    raise WrongKind(f"{oracle.kind} answers downward-closure by construction: "
                    f"{oracle.downward_closed}")


def materialize(oracle, n: int | None = None) -> tuple[frozenset[int], ...]:
    """Enumerate the full family by brute force; test-scale only."""
    n = oracle.n if n is None else n
    if n > MATERIALIZE_MAX_ELEMENTS:
        raise TooLarge(f"materialization capped at {MATERIALIZE_MAX_ELEMENTS} elements")
    out = []
    for mask in range(1 << n):
        s = frozenset(e for e in range(n) if (mask >> e) & 1)
        if oracle.is_feasible(s):
            out.append(s)
    return tuple(out)


# --- serialization ----------------------------------------------------------

def oracle_to_json(oracle) -> dict:
    if isinstance(oracle, ExplicitFamilyOracle):
        params = {"n": oracle.n, "sets": sorted(sorted(s) for s in oracle.sets)}
    elif isinstance(oracle, KUniformOracle):
        params = {"n": oracle.n, "k": oracle.k}
    elif isinstance(oracle, TreePathOracle):
        params = {"k": oracle.k}
    elif isinstance(oracle, PartitionOneBlockOracle):
        params = {"blocks": [list(b) for b in oracle.blocks]}
    elif isinstance(oracle, PairMatchOracle):
        params = {"k": oracle.k}
    elif isinstance(oracle, NestedPhaseOracle):
        params = {"a": list(oracle.a_ids), "b": list(oracle.b_ids),
                  "c": list(oracle.c_ids),
                  "u_sets": [sorted(u) for u in oracle.u_sets]}
    else:
        raise WrongKind(f"cannot serialize oracle {oracle!r}")
    return {"kind": oracle.kind, "params": params}


def oracle_from_json(doc: dict):
    kind, p = doc["kind"], doc["params"]
    if kind == "explicit_family":
        return ExplicitFamilyOracle(n=int(p["n"]),
                                    sets=tuple(frozenset(s) for s in p["sets"]))
    if kind == "k_uniform":
        return KUniformOracle(n=int(p["n"]), k=int(p["k"]))
    if kind == "tree_path":
        return TreePathOracle(k=int(p["k"]))
    if kind == "partition_one_block":
        return PartitionOneBlockOracle(blocks=tuple(tuple(b) for b in p["blocks"]))
    if kind == "pair_match":
        return PairMatchOracle(k=int(p["k"]))
    if kind == "nested_phase":
        return NestedPhaseOracle(a_ids=tuple(p["a"]), b_ids=tuple(p["b"]),
                                 c_ids=tuple(p["c"]),
                                 u_sets=tuple(frozenset(u) for u in p["u_sets"]))
    raise WrongKind(f"unknown oracle kind {kind!r}")
