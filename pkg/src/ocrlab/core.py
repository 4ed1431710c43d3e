"""Domain types for instances, arrival orders, decision traces, and the
forced-decision semantics of sequential selection under a feasibility
constraint.

Element ids are dense integers in [0, n). Values and probabilities are
64-bit floats compared with tolerance ``TOL``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InconsistentState, PolicyViolation, UnknownElement

TOL = 1e-9

# Sub-stream tags for the counter-based RNG. Every random draw in a trial is
# keyed by (global seed, trial index, stream), so results never depend on
# evaluation order or worker count.
STREAM_VALUES = 0
STREAM_ORDER = 1
STREAM_POLICY = 2


def trial_rng(seed: int, trial: int, stream: int = STREAM_VALUES) -> np.random.Generator:
    """Counter-based generator for one (seed, trial, stream) cell."""
    if seed < 0 or trial < 0:
        raise ValueError("seed and trial index must be nonnegative")
    key = np.array([np.uint64(seed), (np.uint64(trial) << np.uint64(2)) | np.uint64(stream)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


class Action(enum.Enum):
    SELECT = "select"
    DISCARD = "discard"


@dataclass(frozen=True)
class ValueDistribution:
    """Finite value distribution given as (value, probability) atoms."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("distribution needs at least one atom")
        values = [v for v, _ in self.atoms]
        if len(set(values)) != len(values):
            raise ValueError("atom values must be pairwise distinct")
        if any(v < 0 for v in values):
            raise ValueError("values must be nonnegative")
        if any(p < 0 or p > 1 for _, p in self.atoms):
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(sum(p for _, p in self.atoms) - 1.0) > TOL:
            raise ValueError("probabilities must sum to 1")

    @staticmethod
    def deterministic(value: float) -> "ValueDistribution":
        return ValueDistribution(((float(value), 1.0),))

    @staticmethod
    def bernoulli(p: float, hi: float = 1.0, lo: float = 0.0) -> "ValueDistribution":
        if p >= 1.0:
            return ValueDistribution.deterministic(hi)
        if p <= 0.0:
            return ValueDistribution.deterministic(lo)
        return ValueDistribution(((float(hi), float(p)), (float(lo), 1.0 - float(p))))

    @property
    def is_deterministic(self) -> bool:
        return len(self.atoms) == 1

    def mean(self) -> float:
        return sum(v * p for v, p in self.atoms)

    def support(self) -> tuple[float, ...]:
        return tuple(v for v, _ in self.atoms)

    def cumulative(self) -> np.ndarray:
        return np.cumsum([p for _, p in self.atoms])

    def from_uniform(self, u: float) -> float:
        idx = int(np.searchsorted(self.cumulative(), u, side="right"))
        return self.atoms[min(idx, len(self.atoms) - 1)][0]


@dataclass
class Instance:
    """An instance: elements with value distributions plus a feasibility
    oracle. ``metadata`` carries construction parameters as strings."""

    name: str
    dists: tuple[ValueDistribution, ...]
    feasibility: "object"
    metadata: dict[str, str] = field(default_factory=dict)
    _groups: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.dists) < 1:
            raise ValueError("instance needs at least one element")

    @property
    def n(self) -> int:
        return len(self.dists)

    def check_element(self, e: int) -> None:
        if not (0 <= e < self.n):
            raise UnknownElement(f"element {e} outside [0, {self.n})")

    def _value_groups(self):
        """Group elements by identical distribution for vectorized sampling."""
        if self._groups is None:
            by_dist: dict[tuple, list[int]] = {}
            for i, d in enumerate(self.dists):
                by_dist.setdefault(d.atoms, []).append(i)
            groups = []
            for atoms, ids in by_dist.items():
                dist = ValueDistribution(atoms)
                groups.append((np.asarray(ids, dtype=np.int64),
                               np.asarray([v for v, _ in atoms]),
                               dist.cumulative()))
            self._groups = groups
        return self._groups


ArrivalOrder = tuple[int, ...]


def check_order(order: Sequence[int], n: int) -> ArrivalOrder:
    order = tuple(int(e) for e in order)
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of all element ids")
    return order


@dataclass(frozen=True)
class FiniteOrderDistribution:
    """A finite weighted set of arrival orders."""

    orders: tuple[ArrivalOrder, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.orders) != len(self.weights) or not self.orders:
            raise ValueError("orders and weights must be nonempty and aligned")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if abs(sum(self.weights) - 1.0) > TOL:
            raise ValueError("weights must sum to 1")
        n = len(self.orders[0])
        for o in self.orders:
            check_order(o, n)

    @staticmethod
    def uniform(orders: Iterable[Sequence[int]]) -> "FiniteOrderDistribution":
        orders = tuple(tuple(o) for o in orders)
        w = 1.0 / len(orders)
        return FiniteOrderDistribution(orders, tuple(w for _ in orders))

    def sample_index(self, rng: np.random.Generator) -> int:
        u = rng.random()
        return int(np.searchsorted(np.cumsum(self.weights), u, side="right").clip(0, len(self.orders) - 1))


@dataclass
class DecisionState:
    selected: set[int] = field(default_factory=set)
    discarded: set[int] = field(default_factory=set)

    def decided(self) -> set[int]:
        return self.selected | self.discarded


@dataclass
class Trace:
    steps: list[tuple[int, float, Action]]
    total: float

    def selected_ids(self) -> frozenset[int]:
        return frozenset(e for e, _, a in self.steps if a is Action.SELECT)


def sample_values(instance: Instance, seed: int, trial: int) -> np.ndarray:
    """Realized values for all elements, one vector per (seed, trial).

    Element i consumes the i-th uniform of the trial's value stream, so the
    draw for any element is reproducible independently of which elements a
    caller ends up inspecting.
    """
    rng = trial_rng(seed, trial, STREAM_VALUES)
    u = rng.random(instance.n)
    out = np.empty(instance.n, dtype=np.float64)
    for ids, values, cum in instance._value_groups():
        if len(values) == 1:
            out[ids] = values[0]
        else:
            idx = np.searchsorted(cum, u[ids], side="right")
            out[ids] = values[np.minimum(idx, len(values) - 1)]
    return out


def allowed_actions(oracle, state: DecisionState, element: int) -> frozenset[Action]:
    """The nonempty subset of {Select, Discard} consistent with the oracle."""
    if element in state.selected or element in state.discarded:
        raise InconsistentState(f"element {element} already decided")
    sel = frozenset(state.selected)
    dis = frozenset(state.discarded)
    acts = set()
    if oracle.can_extend(sel, dis, pin=(element, True)):
        acts.add(Action.SELECT)
    if oracle.can_extend(sel, dis, pin=(element, False)):
        acts.add(Action.DISCARD)
    if not acts:
        raise InconsistentState("state admits no action; it violates its invariant")
    return frozenset(acts)


def run_policy(policy, instance: Instance, order: Sequence[int],
               values: Mapping[int, float] | np.ndarray) -> Trace:
    """Run one realization: forced actions applied automatically, the policy
    asked only when both actions are allowed."""
    oracle = instance.feasibility
    state = DecisionState()
    steps: list[tuple[int, float, Action]] = []
    total = 0.0
    for e in order:
        v = float(values[e])
        acts = allowed_actions(oracle, state, e)
        if len(acts) == 1:
            (action,) = acts
            policy.notify(e, v, state, action)
        else:
            action = policy.decide(e, v, state, acts)
            if action not in acts:
                raise PolicyViolation(f"policy {policy.name!r} returned disallowed {action}")
        if action is Action.SELECT:
            state.selected.add(e)
            total += v
        else:
            state.discarded.add(e)
        steps.append((e, v, action))
    return Trace(steps=steps, total=total)


# --- instance JSON schema -------------------------------------------------

def instance_to_json_dict(instance: Instance,
                          orders: FiniteOrderDistribution | None = None) -> dict:
    from . import feasibility as feas

    order_rows = []
    if orders is not None:
        for o, w in zip(orders.orders, orders.weights):
            order_rows.append({"sequence": list(o), "weight": w})
    return {
        "name": instance.name,
        "elements": [
            {"id": i, "dist": [[v, p] for v, p in d.atoms]}
            for i, d in enumerate(instance.dists)
        ],
        "feasibility": feas.oracle_to_json(instance.feasibility),
        "orders": order_rows,
        "metadata": dict(instance.metadata),
    }


def instance_from_json_dict(doc: dict) -> tuple[Instance, FiniteOrderDistribution | None]:
    from . import feasibility as feas

    elements = sorted(doc["elements"], key=lambda r: r["id"])
    if [r["id"] for r in elements] != list(range(len(elements))):
        raise ValueError("element ids must be dense integers from 0")
    dists = tuple(ValueDistribution(tuple((float(v), float(p)) for v, p in r["dist"]))
                  for r in elements)
    oracle = feas.oracle_from_json(doc["feasibility"])
    inst = Instance(name=doc["name"], dists=dists, feasibility=oracle,
                    metadata={str(k): str(v) for k, v in doc.get("metadata", {}).items()})
    orders = None
    if doc.get("orders"):
        orders = FiniteOrderDistribution(
            tuple(check_order(r["sequence"], inst.n) for r in doc["orders"]),
            tuple(float(r["weight"]) for r in doc["orders"]),
        )
    return inst, orders


def dump_instance(instance: Instance, path,
                  orders: FiniteOrderDistribution | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_json_dict(instance, orders), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(path) -> tuple[Instance, FiniteOrderDistribution | None]:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_json_dict(json.load(fh))
