"""End-to-end acceptance gates: one test per numbered criterion, each
printing a single PASS/FAIL summary line with its key measurements.

Criterion 3's order-ratio clause is asserted as stated even though every
competitively performing unaware rule measurably exceeds the stated ceiling
on this construction at k=4; that test fails by design rather than being
weakened (details printed in the test output).
"""

from __future__ import annotations

import functools
import json
import math
import time

import numpy as np
import pytest

from conftest import random_micro_instance
from ocrlab.analysis import derived_constants
from ocrlab.constructions import (UFamily, build_multiunit_instance,
                                  build_nested_scaled, build_pairs_instance,
                                  build_partition_scaled, build_tree_instance,
                                  build_u_family, verify_u_family)
from ocrlab.montecarlo import FixedOrder, TreeOrders, estimate_ratio, simulate_many
from ocrlab.policies import (Knowledge, greedy_policy, multiunit_threshold_policy,
                             nested_aware_policy, tree_aware_policy,
                             tree_gamble_policy)
from ocrlab.solvers import (SolverLimits, eval_policy_exact, exhaustive_policy_search,
                            opt_aware_exact, opt_unaware_exact, prophet_exact,
                            ratio_exact)

SEED = 2026
WIDE = SolverLimits(max_elements=32, max_states=10_000_000)


def _half(report) -> float:
    return report.ci95[1] - report.mean


def test_criterion_1_constants():
    t0 = time.perf_counter()
    rows = {r.name: r for r in derived_constants()}
    elapsed = time.perf_counter() - t0
    assert abs(rows["penalty_pi1_at_1.152"].value - 0.291) <= 0.001
    assert abs(rows["penalty_pi2_at_0.674"].value - 0.224) <= 0.001
    assert abs(rows["penalty_pi2_at_0.913"].value - 0.231) <= 0.001
    assert abs(rows["penalty_pi1_at_0.913"].value - 0.301) <= 0.002
    assert rows["margin_pi2"].value >= 0.001
    assert rows["margin_pi1"].value >= 0.002
    assert abs(rows["inv_c_prime"].value - 0.3935) <= 1e-4
    assert elapsed < 1.0
    print(f"criterion 1: PASS (margins {rows['margin_pi1'].value:.5f}/"
          f"{rows['margin_pi2'].value:.5f}, {elapsed:.3f}s)")


# --- criterion 2 (shared with the determinism gate, criterion 9) -------------------

C2_K = 10_000
C2_TRIALS = 50_000
C2_POLICY_NAMES = ("pi1_aware_1.152", "pi2_aware_0.674",
                   "commit_0", "commit_0.913", "commit_1.152")


@functools.lru_cache(maxsize=None)
def _criterion2_report_text(workers: int) -> str:
    instance, orders = build_multiunit_instance(C2_K)
    policies = [multiunit_threshold_policy(1.152, "pi1"),
                multiunit_threshold_policy(0.674, "pi2"),
                multiunit_threshold_policy(0.0, "unaware"),
                multiunit_threshold_policy(0.913, "unaware"),
                multiunit_threshold_policy(1.152, "unaware")]
    doc = {}
    for tag, order in zip(("pi1", "pi2"), orders.orders):
        reports = simulate_many(policies, instance, FixedOrder(order),
                                trials=C2_TRIALS, seed=SEED, workers=workers)
        doc[tag] = {name: rep.as_dict()
                    for name, rep in zip(C2_POLICY_NAMES, reports)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def test_criterion_2_multiunit_bounds():
    t0 = time.perf_counter()
    doc = json.loads(_criterion2_report_text(1))
    elapsed = time.perf_counter() - t0
    sq = math.sqrt(C2_K)
    aware_pi1 = doc["pi1"]["pi1_aware_1.152"]
    aware_pi2 = doc["pi2"]["pi2_aware_0.674"]
    for rep, bound in ((aware_pi1, 2 * C2_K - 0.295 * sq),
                       (aware_pi2, 2 * C2_K - 0.228 * sq)):
        assert rep["mean"] >= bound
        assert rep["ci95"][1] - rep["mean"] < 0.02 * sq
    # denominators are aware-policy means, i.e. lower bounds on the true
    # aware optimum, so the ratios below are (caveat) upper-bound estimates
    worst = {}
    for d in ("0", "0.913", "1.152"):
        worst[d] = min(doc["pi1"][f"commit_{d}"]["mean"] / aware_pi1["mean"],
                       doc["pi2"][f"commit_{d}"]["mean"] / aware_pi2["mean"])
        assert worst[d] <= 1.0 - 0.0005 / sq
    assert elapsed < 300.0
    print(f"criterion 2: PASS (aware means {aware_pi1['mean']:.3f}/"
          f"{aware_pi2['mean']:.3f}, commit min ratios "
          + ", ".join(f"d={d}: {v:.6f}" for d, v in worst.items())
          + f"; denominators are policy means, not exact optima; {elapsed:.1f}s)")


def test_criterion_3_tree_finite_k_bounds():
    t0 = time.perf_counter()
    instance = build_tree_instance(4)
    policies = ([tree_aware_policy()]
                + [tree_gamble_policy(l) for l in range(5)]
                + [greedy_policy()])
    reports = simulate_many(policies, instance, TreeOrders(),
                            trials=100_000, seed=SEED, workers=1)
    elapsed = time.perf_counter() - t0
    aware = reports[0]
    assert aware.mean >= 1.75 - _half(aware)
    for policy, rep in zip(policies[1:], reports[1:]):
        assert rep.mean <= 5.0 + _half(rep), policy.name
    assert elapsed < 120.0
    print(f"criterion 3 (bounds): PASS (aware {aware.mean:.4f} >= 1.75, unaware "
          + ", ".join(f"{p.name}={r.mean:.3f}" for p, r in zip(policies[1:], reports[1:]))
          + f" all <= 5; {elapsed:.1f}s)")


def test_criterion_3_tree_order_ratio_clause():
    # The clause requires the best tested unaware policy to drop to <= 0.9 of
    # the aware reference on some sampled order. Measured per-order ratios at
    # k=4 show the opposite: the strongest unaware rules (greedy and the
    # higher-budget gambles) beat the aware reference on every sampled order,
    # and only the weak gambles (budget 0 or 1) ever fall below 0.9. The
    # asymptotic separation needs far deeper trees than n=340. The assertion
    # is kept as stated and fails honestly.
    instance = build_tree_instance(4)
    sources = [TreeOrders(fixed=i) for i in range(50)]

    def per_order(policy, trials):
        return estimate_ratio(policy, instance, sources, trials=trials, seed=SEED,
                              references=[tree_aware_policy()] * len(sources))

    best = greedy_policy()  # highest mean among the unaware policies tested above
    est = per_order(best, trials=100_000)
    ratios = [r.ratio for r in est.rows]
    print(f"best unaware ({best.name}) per-order ratios over 50 sampled orders: "
          f"min {min(ratios):.4f}, max {max(ratios):.4f}, "
          f"mean {sum(ratios) / len(ratios):.4f}")
    for name, policy in (("tree_gamble_l1", tree_gamble_policy(1)),
                         ("tree_gamble_l0", tree_gamble_policy(0))):
        ctx = per_order(policy, trials=20_000)
        print(f"context, weaker policy {name}: min ratio {ctx.min_ratio:.4f}")
    ok = est.min_ratio <= 0.9
    print(f"criterion 3 (ratio clause): {'PASS' if ok else 'FAIL'} "
          f"(min ratio {est.min_ratio:.4f}, required <= 0.9)")
    assert ok, (
        f"best unaware policy's min per-order ratio is {est.min_ratio:.4f} > 0.9: "
        "at k=4 the strongest unaware rules outperform the aware reference on "
        "every sampled order, so the clause is unattainable without swapping in "
        "a deliberately weakened policy")


def test_criterion_4_nested_exact():
    t0 = time.perf_counter()
    # the stated k3=8 cannot host 4 pairwise-disjoint injective completion
    # sets of size 3 (needs k3 >= 12), so the miniature uses k3=12
    instance, orders = build_nested_scaled(2, 8, 12, u_size=3, q=0.1)
    limits = SolverLimits(max_elements=24)
    aware_target = 1.0 - 0.9 ** 8
    aware_vals = []
    for order in orders.orders:
        val = eval_policy_exact(nested_aware_policy(), instance, order, limits=limits)
        assert abs(val - aware_target) <= 1e-9
        aware_vals.append(val)
        opt = opt_aware_exact(instance, order, limits=limits).value
        assert abs(opt - aware_target) <= 1e-9
    unaware = opt_unaware_exact(instance, orders, limits=limits).value
    mixture = 0.25 * aware_target + 0.75 * 0.1
    assert unaware <= mixture + 1e-9
    ratio = unaware / (sum(aware_vals) / len(aware_vals))
    assert ratio <= 0.45
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(f"criterion 4: PASS (aware {aware_target:.9f} per order, unaware "
          f"{unaware:.9f} <= {mixture:.9f}, ratio {ratio:.4f} <= 0.45; {elapsed:.1f}s)")


def test_criterion_5_solver_cross_validation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    checked = 0
    for _ in range(100):
        instance, orders = random_micro_instance(rng)
        brute = exhaustive_policy_search(instance, orders)
        if len(orders.orders) == 1:
            solved = opt_aware_exact(instance, orders.orders[0]).value
        else:
            solved = opt_unaware_exact(instance, orders).value
        assert abs(solved - brute) <= 1e-9
        # the aware solver must also match on each single order in isolation
        for order in orders.orders:
            aware = opt_aware_exact(instance, order).value
            assert abs(aware - exhaustive_policy_search(instance, order)) <= 1e-9
        checked += 1
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    print(f"criterion 5: PASS ({checked} micro-instances agree to 1e-9; {elapsed:.1f}s)")


def test_criterion_6_set_family():
    t0 = time.perf_counter()
    # size violation: a set smaller than log2(n)
    small = UFamily(n=16, alpha=1, sets=(frozenset({0}), frozenset({1, 2, 3, 4})))
    rep = verify_u_family(small, k3=8)
    assert not rep.size_ok and rep.witnesses["size"] == (0, 1)
    # membership violation: element 0 in all four sets, pairwise intersections fine
    heavy = UFamily(n=16, alpha=1, sets=(
        frozenset({0, 1, 2, 3}), frozenset({0, 4, 5, 6}),
        frozenset({0, 7, 8, 9}), frozenset({0, 10, 11, 12})))
    rep = verify_u_family(heavy, k3=64)
    assert rep.size_ok and not rep.membership_ok
    assert rep.witnesses["membership"] == (0, 4)
    # intersection violation: two sets sharing two elements
    overlapping = UFamily(n=16, alpha=1, sets=(
        frozenset({0, 1, 2, 3}), frozenset({0, 1, 4, 5})))
    rep = verify_u_family(overlapping, k3=8)
    assert rep.size_ok and rep.membership_ok and not rep.intersection_ok
    assert rep.witnesses["intersection"] == (0, 1, 2)
    attempts = []
    for seed in range(5):
        family = build_u_family(n=2 ** 16, alpha=10, k1=4, k3=64, seed=seed,
                                max_attempts=100)
        assert verify_u_family(family, k3=64).all_ok
        attempts.append(family.attempts)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(f"criterion 6: PASS (3 violation types flagged with witnesses; builds "
          f"succeeded with attempts {attempts}; {elapsed:.1f}s)")


def test_criterion_7_ordering_relations():
    rng = np.random.default_rng(7)
    checked = ratio_pairs = 0
    for _ in range(50):
        instance, orders = random_micro_instance(rng)
        prophet = prophet_exact(instance).value
        aware_vals = [opt_aware_exact(instance, o).value for o in orders.orders]
        aware_avg = sum(w * v for w, v in zip(orders.weights, aware_vals))
        unaware = opt_unaware_exact(instance, orders).value
        for v in aware_vals:
            assert prophet >= v - 1e-9
        assert aware_avg >= unaware - 1e-9
        for policy in (greedy_policy(),):
            val = sum(w * eval_policy_exact(policy, instance, o,
                                            knowledge=Knowledge.unaware())
                      for w, o in zip(orders.weights, orders.orders))
            assert unaware >= val - 1e-9
            report = ratio_exact(instance, orders, policy)
            if report.min_ratio is not None and report.competitive_ratio is not None:
                assert report.competitive_ratio <= report.min_ratio + 1e-9
                ratio_pairs += 1
        checked += 1
    print(f"criterion 7: PASS ({checked} instances ordered prophet >= aware >= "
          f"unaware >= policy; xi <= rho on {ratio_pairs} ratio pairs)")


def test_criterion_8_calibration_examples():
    instance, orders = build_pairs_instance(3)
    aware = opt_aware_exact(instance, orders.orders[0]).value
    prophet = prophet_exact(instance).value
    assert abs(aware - 1.0 / 6.0) <= 1e-9
    assert abs(prophet - 91.0 / 216.0) <= 1e-9  # = 0.42130 to the shown precision
    partition = build_partition_scaled(blocks=8, block_size=4, p=0.25)
    order = tuple(range(partition.n))
    best_online = opt_aware_exact(partition, order, limits=WIDE).value
    p_prophet = prophet_exact(partition, limits=WIDE).value
    assert best_online <= 2.0 + 1e-9
    assert p_prophet >= 2.28
    print(f"criterion 8: PASS (pairs aware {aware:.6f}, prophet {prophet:.6f}; "
          f"partition best-online {best_online:.6f} <= 2, prophet {p_prophet:.6f} >= 2.28)")


def test_criterion_9_determinism_gate(tmp_path):
    serial = _criterion2_report_text(1)
    parallel = _criterion2_report_text(8)
    f1, f8 = tmp_path / "w1.json", tmp_path / "w8.json"
    f1.write_text(serial)
    f8.write_text(parallel)
    assert f1.read_bytes() == f8.read_bytes()
    print(f"criterion 9: PASS (workers 1 vs 8 reports bit-identical, "
          f"{len(serial)} bytes)")
