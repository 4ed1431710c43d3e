"""Shared test helpers: random micro-instances small enough for the
exhaustive brute-force solver."""

from __future__ import annotations

import itertools

import numpy as np

from ocrlab.core import FiniteOrderDistribution, Instance, ValueDistribution
from ocrlab.feasibility import ExplicitFamilyOracle


def downward_closure(seeds) -> set[frozenset[int]]:
    family = {frozenset()}
    for s in seeds:
        s = sorted(s)
        for r in range(len(s) + 1):
            family.update(frozenset(c) for c in itertools.combinations(s, r))
    return family


def random_micro_instance(rng: np.random.Generator, max_n: int = 5,
                          max_orders: int = 2) -> tuple[Instance, FiniteOrderDistribution]:
    """A small instance with a random downward-closed family, binary value
    supports, and one or two random arrival orders."""
    n = int(rng.integers(2, max_n + 1))
    seeds = [frozenset(int(e) for e in np.flatnonzero(rng.random(n) < 0.5))
             for _ in range(3)]
    seeds.append(frozenset({0}))  # guarantee a nonzero optimum
    oracle = ExplicitFamilyOracle(n=n, sets=tuple(downward_closure(seeds)))
    dists = tuple(
        ValueDistribution.bernoulli(float(rng.uniform(0.2, 0.8)),
                                    hi=float(rng.integers(1, 4)))
        for _ in range(n))
    n_orders = int(rng.integers(1, max_orders + 1))
    orders = {tuple(int(e) for e in rng.permutation(n)) for _ in range(n_orders)}
    inst = Instance(name=f"micro-n{n}", dists=dists, feasibility=oracle)
    return inst, FiniteOrderDistribution.uniform(sorted(orders))
