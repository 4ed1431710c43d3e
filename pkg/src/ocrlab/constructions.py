"""Builders for every benchmark instance and arrival-order distribution.

Constructions are deterministic functions of (parameters, seed); randomized
ones draw from the counter-based stream in :mod:`ocrlab.core` so that each
(seed, trial) cell is reproducible in isolation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .core import (STREAM_ORDER, ArrivalOrder, FiniteOrderDistribution, Instance,
                   ValueDistribution, trial_rng)
from .errors import ExhaustedAttempts, TooLarge
from .feasibility import (KUniformOracle, NestedPhaseOracle, PairMatchOracle,
                          PartitionOneBlockOracle, TreePathOracle, tree_n,
                          tree_offsets)

DEFAULT_ELEMENT_CAP = 1_000_000
ELEMENT_CAP_ENV = "OCRLAB_ELEMENT_CAP"


def element_cap() -> int:
    raw = os.environ.get(ELEMENT_CAP_ENV)
    return int(raw) if raw else DEFAULT_ELEMENT_CAP


def _check_cap(n: int) -> None:
    cap = element_cap()
    if n > cap:
        raise TooLarge(f"construction needs {n} elements, cap is {cap} "
                       f"(override via {ELEMENT_CAP_ENV})")


# --- rooted-tree instance ----------------------------------------------------

def build_tree_instance(k: int) -> Instance:
    """One element per string of length 1..k over a k-letter alphabet, all
    values Bernoulli(1/k) on {0, 1}, feasible sets = subsets of a root-leaf
    path."""
    if k < 2 or k % 2 != 0:
        raise ValueError("k must be even and at least 2")
    n = tree_n(k)
    _check_cap(n)
    dist = ValueDistribution.bernoulli(1.0 / k)
    return Instance(
        name=f"tree-k{k}",
        dists=tuple(dist for _ in range(n)),
        feasibility=TreePathOracle(k=k),
        metadata={"construction": "tree", "k": str(k), "n": str(n)},
    )


@dataclass(frozen=True)
class TreeOrderRealization:
    """One draw of the tree order distribution: the per-node half-subsets r,
    the resulting arrival order, and the good/bad label of every element."""

    r: dict[tuple[int, ...], frozenset[int]]
    order: ArrivalOrder
    good: np.ndarray  # bool per element id


def _tree_r_nodes(k: int) -> list[tuple[int, int]]:
    """(layer, idx) for every node carrying an r-subset: strings of length
    0..k-3, the root included, in layer-major lexicographic order."""
    nodes = [(0, 0)] if k >= 3 else []
    for layer in range(1, k - 2):
        nodes.extend((layer, m) for m in range(k ** layer))
    return nodes


def _sample_tree_raw(k: int, seed: int, trial: int) -> tuple[dict, list[int]]:
    """The cheap core of the order draw: per-node half-subsets (sorted
    tuples) and the expanded arrival order.

    Good subtrees arrive top-down (children first, then each child's
    subtree); bad subtrees arrive bottom-up (deepest layer first). The two
    deepest layers use the terminal rule: children, then each child's
    remaining subtree bottom-up.
    """
    offs = tree_offsets(k)
    rng = trial_rng(seed, trial, STREAM_ORDER)

    nodes = _tree_r_nodes(k)
    r_by_node: dict[tuple[int, int], tuple[int, ...]] = {}
    if nodes:
        # one uniform row per node; argsort picks a uniform size-k/2 subset
        ranks = np.argsort(rng.random((len(nodes), k)), axis=1)[:, : k // 2]
        ranks = np.sort(ranks, axis=1)
        r_by_node = {node: tuple(int(c) for c in row)
                     for node, row in zip(nodes, ranks)}

    order: list[int] = []

    def bottom_up(layer: int, idx: int) -> None:
        # all strict descendants of (layer, idx), deepest first, lexicographic
        for depth in range(k, layer, -1):
            width = k ** (depth - layer)
            start = offs[depth - 1] + idx * width
            order.extend(range(start, start + width))

    def top_down(layer: int, idx: int) -> None:
        child_start = offs[layer] + idx * k
        order.extend(range(child_start, child_start + k))
        if layer == k - 2:
            for j in range(k):
                bottom_up(layer + 1, idx * k + j)
            return
        r = r_by_node[(layer, idx)]
        for j in range(k):
            if j in r:
                top_down(layer + 1, idx * k + j)
            else:
                bottom_up(layer + 1, idx * k + j)

    top_down(0, 0)
    return r_by_node, order


def sample_tree_order(instance: Instance, seed: int, trial: int = 0) -> TreeOrderRealization:
    """Draw the r-subsets, expand the arrival order, and label every element
    good or bad (good = every branching step lies in its node's r-subset)."""
    k = int(instance.metadata["k"])
    offs = tree_offsets(k)
    r_by_node, order = _sample_tree_raw(k, seed, trial)

    good = np.zeros(instance.n, dtype=bool)
    prev = np.array([True])  # layer-0 virtual root is good
    for layer in range(1, k + 1):
        width = k ** layer
        cur = np.empty(width, dtype=bool)
        if layer <= k - 2:
            for m in range(width):
                parent_good = prev[m // k]
                cur[m] = parent_good and (m % k) in r_by_node[(layer - 1, m // k)]
        else:
            for m in range(width):
                cur[m] = prev[m // k]
        good[offs[layer - 1]: offs[layer]] = cur
        prev = cur

    r_strings = {_node_string(k, layer, idx): frozenset(subset)
                 for (layer, idx), subset in r_by_node.items()}
    return TreeOrderRealization(r=r_strings, order=tuple(order), good=good)


def _node_string(k: int, layer: int, idx: int) -> tuple[int, ...]:
    chars = []
    for _ in range(layer):
        chars.append(idx % k + 1)
        idx //= k
    return tuple(reversed(chars))


# --- random set family (nested-phase completion sets) ------------------------

@dataclass(frozen=True)
class UFamily:
    n: int
    alpha: int
    sets: tuple[frozenset[int], ...]
    attempts: int = 1


@dataclass(frozen=True)
class UFamilyReport:
    size_ok: bool
    membership_ok: bool
    intersection_ok: bool
    witnesses: dict[str, tuple]

    @property
    def all_ok(self) -> bool:
        return self.size_ok and self.membership_ok and self.intersection_ok


def verify_u_family(family: UFamily, k3: int | None = None) -> UFamilyReport:
    """Check the three family properties: per-set size in
    [log2 n, (2a+1) log2 n], per-element membership at most
    2(a+1) 2^k1 log2(n)/k3, and pairwise intersections at most a."""
    n, alpha, sets = family.n, family.alpha, family.sets
    if k3 is None:
        k3 = max((max(u) for u in sets if u), default=-1) + 1
    log_n = math.log2(n)
    lo, hi = log_n, (2 * alpha + 1) * log_n
    witnesses: dict[str, tuple] = {}

    size_ok = True
    for i, u in enumerate(sets):
        if not (lo <= len(u) <= hi):
            size_ok = False
            witnesses["size"] = (i, len(u))
            break

    member_cap = 2 * (alpha + 1) * len(sets) * log_n / k3
    membership_ok = True
    counts = np.zeros(k3, dtype=np.int64)
    for u in sets:
        for e in u:
            counts[e] += 1
    bad = np.flatnonzero(counts > member_cap)
    if bad.size:
        membership_ok = False
        witnesses["membership"] = (int(bad[0]), int(counts[bad[0]]))

    intersection_ok = True
    for i1, i2 in combinations_iter(len(sets)):
        inter = len(sets[i1] & sets[i2])
        if inter > alpha:
            intersection_ok = False
            witnesses["intersection"] = (i1, i2, inter)
            break

    return UFamilyReport(size_ok, membership_ok, intersection_ok, witnesses)


def combinations_iter(m: int):
    for i1 in range(m):
        for i2 in range(i1 + 1, m):
            yield i1, i2


def build_u_family(n: int, alpha: int, k1: int, k3: int, seed: int,
                   max_attempts: int = 100) -> UFamily:
    """Resample independent memberships until the three properties hold.

    The membership probability is (alpha+1)*log2(n)/k3. When that leaves
    [0, 1] (always at desk scale), each set is drawn instead as a uniform
    subset of size ceil(log2 n): the smallest size the lower bound admits,
    which keeps pairwise intersections in check. Sets must additionally be
    pairwise distinct so an arrival order identifies its index.
    """
    num_sets = 2 ** k1
    if num_sets > 2 ** k3:
        raise ExhaustedAttempts(
            f"{num_sets} pairwise-distinct subsets of a {k3}-element ground set do not exist")
    p = (alpha + 1) * math.log2(n) / k3
    fixed_size = None
    if not (0.0 < p <= 1.0):
        fixed_size = min(k3, math.ceil(math.log2(n)))
    for attempt in range(1, max_attempts + 1):
        rng = trial_rng(seed, attempt, STREAM_ORDER)
        if fixed_size is None:
            member = rng.random((num_sets, k3)) < p
            sets = tuple(frozenset(np.flatnonzero(row).tolist()) for row in member)
        else:
            sets = tuple(
                frozenset(rng.choice(k3, size=fixed_size, replace=False).tolist())
                for _ in range(num_sets))
        family = UFamily(n=n, alpha=alpha, sets=sets, attempts=attempt)
        if len(set(sets)) == num_sets and verify_u_family(family, k3=k3).all_ok:
            return family
    raise ExhaustedAttempts(
        f"no valid family after {max_attempts} attempts "
        f"(n={n}, k1={k1}, k3={k3}, alpha={alpha})")


# --- nested-phase instance ----------------------------------------------------

def _nested_from_parts(name: str, k1: int, k2: int, k3: int,
                       u_sets: tuple[frozenset[int], ...], q: float,
                       metadata: dict[str, str]) -> tuple[Instance, FiniteOrderDistribution]:
    n = k1 + k2 + k3
    _check_cap(n)
    a_ids = tuple(range(k1))
    b_ids = tuple(range(k1, k1 + k2))
    c_ids = tuple(range(k1 + k2, n))
    u_global = tuple(frozenset(c_ids[t] for t in u) for u in u_sets)
    if len(set(u_global)) != len(u_global):
        raise ExhaustedAttempts("U sets must be pairwise distinct to make orders decodable")
    oracle = NestedPhaseOracle(a_ids=a_ids, b_ids=b_ids, c_ids=c_ids, u_sets=u_global)
    dists = tuple([ValueDistribution.deterministic(0.0)] * k1
                  + [ValueDistribution.bernoulli(q)] * k2
                  + [ValueDistribution.deterministic(0.0)] * k3)
    orders = []
    for u in u_global:
        phase2 = sorted(set(c_ids) - u)
        orders.append(tuple(a_ids) + tuple(phase2) + tuple(b_ids) + tuple(sorted(u)))
    inst = Instance(name=name, dists=dists, feasibility=oracle, metadata=metadata)
    return inst, FiniteOrderDistribution.uniform(orders)


def build_nested_instance(x: int, seed: int,
                          max_attempts: int = 100) -> tuple[Instance, FiniteOrderDistribution]:
    """The asymptotic construction: n = 2^(2x) elements split into A, B, C
    with a randomly built completion family. At desk scale the family build
    is expected to fail (the family only exists for very large n)."""
    n = 2 ** (2 * x)
    k1 = 4 * x
    k3 = int(math.isqrt(n))
    k2 = n - k3 - k1
    if k2 <= 0:
        raise TooLarge("n too small to leave any B elements")
    family = build_u_family(n=n, alpha=10, k1=k1, k3=k3, seed=seed,
                            max_attempts=max_attempts)
    meta = {"construction": "nested", "x": str(x), "k1": str(k1), "k2": str(k2),
            "k3": str(k3), "q": repr(1.0 / n ** 2), "seed": str(seed),
            "u_attempts": str(family.attempts)}
    return _nested_from_parts(f"nested-x{x}", k1, k2, k3, family.sets, 1.0 / n ** 2, meta)


def build_nested_scaled(k1: int, k2: int, k3: int, u_size: int, q: float,
                        seed: int = 0, disjoint: bool = True
                        ) -> tuple[Instance, FiniteOrderDistribution]:
    """Desk-scale variant with explicit part sizes. With ``disjoint`` the U
    sets are consecutive slices of C, so a wrong Phase-1 guess leaves exactly
    one selectable B element."""
    num_sets = 2 ** k1
    if disjoint:
        if num_sets * u_size > k3:
            raise TooLarge(f"{num_sets} disjoint size-{u_size} sets need "
                           f"k3 >= {num_sets * u_size}, got {k3}")
        u_sets = tuple(frozenset(range(i * u_size, (i + 1) * u_size))
                       for i in range(num_sets))
    else:
        rng = trial_rng(seed, 0, STREAM_ORDER)
        u_sets = tuple(frozenset(rng.choice(k3, size=u_size, replace=False).tolist())
                       for _ in range(num_sets))
    meta = {"construction": "nested", "k1": str(k1), "k2": str(k2), "k3": str(k3),
            "u_size": str(u_size), "q": repr(q), "scaled": "true",
            "non_asymptotic": "true"}
    name = f"nested-scaled-{k1}-{k2}-{k3}"
    return _nested_from_parts(name, k1, k2, k3, u_sets, q, meta)


# --- multi-unit (capacity k) instance ----------------------------------------

def build_multiunit_instance(k: int) -> tuple[Instance, FiniteOrderDistribution]:
    """k elements worth 7/4, k worth 1, 2k worth 0 or 2 with equal odds,
    under a capacity-k constraint; two orders differing in whether the
    mid-value block precedes or follows the random block."""
    if k < 1:
        raise ValueError("k must be at least 1")
    n = 4 * k
    _check_cap(n)
    dists = tuple([ValueDistribution.deterministic(1.75)] * k
                  + [ValueDistribution.deterministic(1.0)] * k
                  + [ValueDistribution(((0.0, 0.5), (2.0, 0.5)))] * 2 * k)
    a = tuple(range(k))
    b = tuple(range(k, 2 * k))
    c = tuple(range(2 * k, 4 * k))
    pi1 = a + b + c
    pi2 = a + c + b
    inst = Instance(
        name=f"multiunit-k{k}",
        dists=dists,
        feasibility=KUniformOracle(n=n, k=k),
        metadata={"construction": "multiunit", "k": str(k), "n": str(n)},
    )
    return inst, FiniteOrderDistribution.uniform([pi1, pi2])


# --- calibration examples -----------------------------------------------------

def build_partition_instance(kappa: int) -> Instance:
    """Full-size partition example: 2^(2^kappa) elements in blocks of size
    2^kappa, each worth 1 with probability 2^-kappa."""
    block_size = 2 ** kappa
    n = 2 ** block_size
    return build_partition_scaled(blocks=n // block_size, block_size=block_size,
                                  p=1.0 / block_size, name=f"partition-kappa{kappa}")


def build_partition_scaled(blocks: int, block_size: int, p: float,
                           name: str | None = None) -> Instance:
    n = blocks * block_size
    _check_cap(n)
    dist = ValueDistribution.bernoulli(p)
    block_ids = tuple(tuple(range(b * block_size, (b + 1) * block_size))
                      for b in range(blocks))
    return Instance(
        name=name or f"partition-{blocks}x{block_size}",
        dists=tuple(dist for _ in range(n)),
        feasibility=PartitionOneBlockOracle(blocks=block_ids),
        metadata={"construction": "partition", "blocks": str(blocks),
                  "block_size": str(block_size), "p": repr(p)},
    )


def build_pairs_instance(k: int) -> tuple[Instance, FiniteOrderDistribution]:
    """n = 2k elements, feasible sets exactly {i, i+k}; the first k are worth
    0, the rest 1 with probability 1/n. Canonical order 0..n-1."""
    n = 2 * k
    _check_cap(n)
    dists = tuple([ValueDistribution.deterministic(0.0)] * k
                  + [ValueDistribution.bernoulli(1.0 / n)] * k)
    inst = Instance(
        name=f"pairs-k{k}",
        dists=dists,
        feasibility=PairMatchOracle(k=k),
        metadata={"construction": "pairs", "k": str(k), "n": str(n)},
    )
    return inst, FiniteOrderDistribution.uniform([tuple(range(n))])
