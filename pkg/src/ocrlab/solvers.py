"""Exact benchmarks on small instances: the order-aware optimum for a fixed
order, the best order-unaware algorithm against a known order distribution,
the offline prophet value, and exact ratio reports.

All solvers enumerate finite supports exactly; they are guarded by
``SolverLimits`` and raise ``TooLarge`` rather than degrade.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import (Action, ArrivalOrder, FiniteOrderDistribution, Instance,
                   check_order, run_policy)
from .errors import InconsistentState, TooLarge
from .feasibility import (ExplicitFamilyOracle, KUniformOracle, NestedPhaseOracle,
                          PairMatchOracle, PartitionOneBlockOracle, TreePathOracle)


@dataclass(frozen=True)
class SolverLimits:
    max_elements: int = 20
    max_orders: int = 64
    max_states: int = 2_000_000
    max_realizations: int = 1 << 20

    def __post_init__(self):
        if min(self.max_elements, self.max_orders, self.max_states,
               self.max_realizations) <= 0:
            raise ValueError("limits must be positive")


AWARE_LIMITS = SolverLimits(max_elements=20)
UNAWARE_LIMITS = SolverLimits(max_elements=10)


@dataclass(frozen=True)
class SolveResult:
    value: float
    states_expanded: int

    def __float__(self) -> float:
        return self.value


def _mask_sets(mask: int, n: int) -> frozenset[int]:
    return frozenset(e for e in range(n) if (mask >> e) & 1)


class _StateBudget:
    def __init__(self, max_states: int):
        self.max_states = max_states
        self.count = 0

    def tick(self) -> None:
        self.count += 1
        if self.count > self.max_states:
            raise TooLarge(f"state budget {self.max_states} exceeded")


def _allowed(oracle, sel: frozenset[int], dis: frozenset[int], e: int) -> tuple[bool, bool]:
    can_sel = oracle.can_extend(sel, dis, pin=(e, True))
    can_dis = oracle.can_extend(sel, dis, pin=(e, False))
    if not (can_sel or can_dis):
        raise InconsistentState("state admits no action")
    return can_sel, can_dis


def opt_aware_exact(instance: Instance, order: ArrivalOrder,
                    limits: SolverLimits | None = None, memo: bool = True) -> SolveResult:
    """Optimal online value for a known order, by backward induction over
    (position, selected-set); the discarded set is determined by the two."""
    limits = limits or AWARE_LIMITS
    n = instance.n
    if n > limits.max_elements:
        raise TooLarge(f"{n} elements over the limit {limits.max_elements}")
    order = check_order(order, n)
    oracle = instance.feasibility
    budget = _StateBudget(limits.max_states)
    cache: dict[tuple[int, int], float] = {}

    arrived_masks = [0] * (n + 1)
    for pos, e in enumerate(order):
        arrived_masks[pos + 1] = arrived_masks[pos] | (1 << e)

    def rec(pos: int, sel_mask: int) -> float:
        if pos == n:
            return 0.0
        key = (pos, sel_mask)
        if memo and key in cache:
            return cache[key]
        budget.tick()
        e = order[pos]
        sel = _mask_sets(sel_mask, n)
        dis = _mask_sets(arrived_masks[pos] & ~sel_mask, n)
        can_sel, can_dis = _allowed(oracle, sel, dis, e)
        total = 0.0
        for v, p in instance.dists[e].atoms:
            branches = []
            if can_sel:
                branches.append(v + rec(pos + 1, sel_mask | (1 << e)))
            if can_dis:
                branches.append(rec(pos + 1, sel_mask))
            total += p * max(branches)
        if memo:
            cache[key] = total
        return total

    value = rec(0, 0)
    return SolveResult(value=value, states_expanded=budget.count)


def opt_unaware_exact(instance: Instance, orders: FiniteOrderDistribution,
                      limits: SolverLimits | None = None) -> SolveResult:
    """Value of the best algorithm that knows the order distribution but not
    the realization: expectimax over belief states.

    Orders still alive in a belief share the exact identity prefix, so the
    arrived set (hence the discarded set) is determined by (belief, position,
    selected mask). The next element's identity splits the belief; values are
    order-independent, so only the current element's realization enters.
    """
    limits = limits or UNAWARE_LIMITS
    n = instance.n
    if n > limits.max_elements:
        raise TooLarge(f"{n} elements over the limit {limits.max_elements}")
    if len(orders.orders) > limits.max_orders:
        raise TooLarge(f"{len(orders.orders)} orders over the limit {limits.max_orders}")
    oracle = instance.feasibility
    budget = _StateBudget(limits.max_states)
    cache: dict[tuple, float] = {}

    def rec(live: tuple[int, ...], pos: int, sel_mask: int) -> float:
        if pos == n:
            return 0.0
        key = (live, pos, sel_mask)
        if key in cache:
            return cache[key]
        budget.tick()
        w_live = sum(orders.weights[i] for i in live)
        groups: dict[int, list[int]] = {}
        for i in live:
            groups.setdefault(orders.orders[i][pos], []).append(i)
        arrived = 0
        for e in orders.orders[live[0]][:pos]:
            arrived |= 1 << e
        sel = _mask_sets(sel_mask, n)
        dis = _mask_sets(arrived & ~sel_mask, n)
        total = 0.0
        for e, idxs in groups.items():
            w_g = sum(orders.weights[i] for i in idxs)
            can_sel, can_dis = _allowed(oracle, sel, dis, e)
            stage = 0.0
            g = tuple(idxs)
            for v, p in instance.dists[e].atoms:
                branches = []
                if can_sel:
                    branches.append(v + rec(g, pos + 1, sel_mask | (1 << e)))
                if can_dis:
                    branches.append(rec(g, pos + 1, sel_mask))
                stage += p * max(branches)
            total += (w_g / w_live) * stage
        cache[key] = total
        return total

    value = rec(tuple(range(len(orders.orders))), 0, 0)
    return SolveResult(value=value, states_expanded=budget.count)


# --- offline benchmark ---------------------------------------------------------


def max_feasible_sum(oracle, values: np.ndarray) -> float:
    """Offline maximum of a feasible set's value sum for one realization."""
    values = np.asarray(values, dtype=np.float64)
    if isinstance(oracle, ExplicitFamilyOracle):
        return max(sum(values[e] for e in s) for s in oracle.sets)
    if isinstance(oracle, KUniformOracle):
        if oracle.k == 0:
            return 0.0
        return float(np.sort(values)[-oracle.k:].sum())
    if isinstance(oracle, TreePathOracle):
        k = oracle.k
        acc = values[:k].copy()
        offset = k
        for layer in range(2, k + 1):
            width = k ** layer
            acc = np.repeat(acc, k) + values[offset:offset + width]
            offset += width
        return float(acc.max())
    if isinstance(oracle, PartitionOneBlockOracle):
        return max(sum(values[e] for e in b) for b in oracle.blocks)
    if isinstance(oracle, PairMatchOracle):
        return float(max(values[i] + values[i + oracle.k] for i in range(oracle.k)))
    if isinstance(oracle, NestedPhaseOracle):
        best = -np.inf
        for i in range(len(oracle.u_sets)):
            base = sum(values[e] for e in oracle.v_set(i))
            for j, b in enumerate(oracle.b_ids):
                s = base + values[b] + sum(values[e] for e in oracle.completion(i, j))
                best = max(best, s)
        return float(best)
    raise TooLarge(f"no offline optimizer for oracle kind {oracle.kind!r}")


def _iter_realizations(instance: Instance, limits: SolverLimits):
    """Yield (values, probability) over the product support of all
    nondeterministic elements."""
    n = instance.n
    base = np.array([d.atoms[0][0] for d in instance.dists], dtype=np.float64)
    stochastic = [i for i, d in enumerate(instance.dists) if not d.is_deterministic]
    count = 1
    for i in stochastic:
        count *= len(instance.dists[i].atoms)
        if count > limits.max_realizations:
            raise TooLarge(f"support product exceeds {limits.max_realizations}")
    if not stochastic:
        yield base, 1.0
        return
    for combo in itertools.product(*(instance.dists[i].atoms for i in stochastic)):
        values = base.copy()
        prob = 1.0
        for i, (v, p) in zip(stochastic, combo):
            values[i] = v
            prob *= p
        yield values, prob


def _group_sum_dist(instance: Instance, ids, limits: SolverLimits) -> dict[float, float]:
    """Exact distribution of the value sum over one group of elements."""
    dist: dict[float, float] = {0.0: 1.0}
    for e in ids:
        nxt: dict[float, float] = {}
        for s, q in dist.items():
            for v, p in instance.dists[e].atoms:
                key = s + v
                nxt[key] = nxt.get(key, 0.0) + q * p
        if len(nxt) > limits.max_realizations:
            raise TooLarge("group sum support too large")
        dist = nxt
    return dist


def _expected_max_independent(dists: list[dict[float, float]]) -> tuple[float, int]:
    """E[max of independent sums] from their exact distributions."""
    points = sorted({x for d in dists for x in d})
    total = 0.0
    prev_cdf = 0.0
    cdfs_below = [0.0] * len(dists)
    for x in points:
        for i, d in enumerate(dists):
            cdfs_below[i] += d.get(x, 0.0)
        cdf = 1.0
        for c in cdfs_below:
            cdf *= c
        total += x * (cdf - prev_cdf)
        prev_cdf = cdf
    return total, len(points)


def prophet_exact(instance: Instance, limits: SolverLimits | None = None) -> SolveResult:
    """E[max feasible sum]: by enumeration of the product support, or, when
    the constraint decomposes into independent groups (one block / one
    pair), from the exact group-sum distributions."""
    limits = limits or AWARE_LIMITS
    oracle = instance.feasibility
    groups = None
    if isinstance(oracle, PartitionOneBlockOracle):
        groups = [list(b) for b in oracle.blocks]
    elif isinstance(oracle, PairMatchOracle):
        groups = [[i, i + oracle.k] for i in range(oracle.k)]
    if groups is not None:
        dists = [_group_sum_dist(instance, g, limits) for g in groups]
        value, states = _expected_max_independent(dists)
        return SolveResult(value=value, states_expanded=states)
    total = 0.0
    states = 0
    for values, prob in _iter_realizations(instance, limits):
        total += prob * max_feasible_sum(instance.feasibility, values)
        states += 1
    return SolveResult(value=total, states_expanded=states)


# --- independent brute-force oracle ---------------------------------------------


def exhaustive_policy_search(instance: Instance,
                             order_source: ArrivalOrder | FiniteOrderDistribution) -> float:
    """Maximum expected value over all deterministic decision rules, by raw
    recursion on observable histories — no canonicalization or memoization,
    so it is an independent check on both exact solvers. Tiny inputs only."""
    n = instance.n
    if n > 8:
        raise TooLarge("exhaustive search capped at 8 elements")
    if any(len(d.atoms) > 2 for d in instance.dists):
        raise TooLarge("exhaustive search needs binary supports")
    if isinstance(order_source, FiniteOrderDistribution):
        orders = order_source.orders
        weights = order_source.weights
    else:
        orders = (check_order(order_source, n),)
        weights = (1.0,)
    if len(orders) > 8:
        raise TooLarge("exhaustive search capped at 8 orders")
    oracle = instance.feasibility

    def value(history: tuple[tuple[int, float, Action], ...]) -> float:
        ids = [e for e, _, _ in history]
        live = [(o, w) for o, w in zip(orders, weights) if list(o[:len(ids)]) == ids]
        w_live = sum(w for _, w in live)
        pos = len(ids)
        if pos == n:
            return 0.0
        sel = frozenset(e for e, _, a in history if a is Action.SELECT)
        dis = frozenset(e for e, _, a in history if a is Action.DISCARD)
        total = 0.0
        groups: dict[int, float] = {}
        for o, w in live:
            groups[o[pos]] = groups.get(o[pos], 0.0) + w
        for e, w_g in groups.items():
            can_sel = oracle.can_extend(sel, dis, pin=(e, True))
            can_dis = oracle.can_extend(sel, dis, pin=(e, False))
            stage = 0.0
            for v, p in instance.dists[e].atoms:
                branches = []
                if can_sel:
                    branches.append(v + value(history + ((e, v, Action.SELECT),)))
                if can_dis:
                    branches.append(value(history + ((e, v, Action.DISCARD),)))
                stage += p * max(branches)
            total += (w_g / w_live) * stage
        return total

    return value(())


# --- policy evaluation and ratios ------------------------------------------------


def eval_policy_exact(policy, instance: Instance, order: ArrivalOrder,
                      knowledge=None, limits: SolverLimits | None = None) -> float:
    """Expected value of a deterministic policy on a fixed order, by
    enumerating value realizations."""
    from .policies import Knowledge

    limits = limits or AWARE_LIMITS
    order = check_order(order, instance.n)
    total = 0.0
    for values, prob in _iter_realizations(instance, limits):
        if knowledge is None:
            kn = Knowledge.aware(order) if policy.aware else Knowledge.unaware()
        else:
            kn = knowledge
        policy.start(instance, kn)
        trace = run_policy(policy, instance, order, values)
        total += prob * trace.total
    return total


@dataclass
class ExactRatioRow:
    order_index: int
    alg_value: float
    opt_aware: float
    ratio: float | None


@dataclass
class ExactRatioReport:
    rows: list[ExactRatioRow]
    min_ratio: float | None
    prophet: float
    competitive_ratio: float | None
    warnings: list[str] = field(default_factory=list)


def ratio_exact(instance: Instance, orders: FiniteOrderDistribution, policy,
                limits: SolverLimits | None = None) -> ExactRatioReport:
    """Per-order ALG/OPT ratios and their minimum (the order-competitive
    ratio of the policy), plus the prophet-based competitive ratio."""
    limits = limits or AWARE_LIMITS
    rows: list[ExactRatioRow] = []
    notes: list[str] = []
    prophet = prophet_exact(instance, limits).value
    for idx, order in enumerate(orders.orders):
        alg = eval_policy_exact(policy, instance, order, limits=limits)
        opt = opt_aware_exact(instance, order, limits=limits).value
        if opt <= 0.0:
            notes.append(f"order {idx}: OPT = 0, ratio undefined and excluded")
            warnings.warn(notes[-1])
            rows.append(ExactRatioRow(idx, alg, opt, None))
        else:
            rows.append(ExactRatioRow(idx, alg, opt, alg / opt))
    defined = [r.ratio for r in rows if r.ratio is not None]
    min_ratio = min(defined) if defined else None
    competitive = None
    if prophet > 0.0:
        competitive = min(r.alg_value for r in rows) / prophet
    return ExactRatioReport(rows=rows, min_ratio=min_ratio, prophet=prophet,
                            competitive_ratio=competitive, warnings=notes)
