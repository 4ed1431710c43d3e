"""Command-line entry point: instance generation, simulation, exact solving,
constant tables, and verification, with reproducible machine-readable reports.

Exit codes: 0 success, 2 usage or invalid parameters, 3 resource limits,
4 failed ``--check``. Simulation and ratio reports never embed wall time or
worker counts, so reruns with different parallelism are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

from . import __version__
from .analysis import derived_constants
from .constructions import (build_multiunit_instance, build_nested_instance,
                            build_nested_scaled, build_pairs_instance,
                            build_partition_instance, build_partition_scaled,
                            build_tree_instance, build_u_family, verify_u_family)
from .core import dump_instance, instance_to_json_dict, load_instance
from .errors import (EncodingOverflow, ExhaustedAttempts, OcrlabError, TooLarge)
from .feasibility import MATERIALIZE_MAX_ELEMENTS, materialize
from .montecarlo import (FixedOrder, SampledOrders, TreeOrders, estimate_ratio,
                         simulate)
from .policies import parse_policy_spec
from .solvers import SolverLimits, opt_aware_exact, opt_unaware_exact, prophet_exact

USAGE_ERROR, RESOURCE_ERROR, CHECK_FAILURE = 2, 3, 4


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _wrap(command: str, config: dict, payload: dict) -> dict:
    return {"version": __version__, "command": command, "config": config, **payload}


# --- gen ----------------------------------------------------------------------------


def cmd_gen(args) -> int:
    name = args.construction
    orders = None
    if name == "tree":
        instance = build_tree_instance(args.k)
    elif name == "multiunit":
        instance, orders = build_multiunit_instance(args.k)
    elif name == "nested":
        instance, orders = build_nested_instance(args.x, seed=args.seed)
    elif name == "nested-scaled":
        instance, orders = build_nested_scaled(args.k1, args.k2, args.k3,
                                               u_size=args.usize, q=args.q,
                                               seed=args.seed)
    elif name == "partition":
        instance = build_partition_instance(args.kappa)
    elif name == "partition-scaled":
        instance = build_partition_scaled(args.blocks, args.block_size, args.p)
    elif name == "pairs":
        instance, orders = build_pairs_instance(args.k)
    else:
        raise ValueError(f"unknown construction {name!r}")
    dump_instance(instance, args.out, orders)
    summary = {"name": instance.name, "n": instance.n,
               "orders": len(orders.orders) if orders else 0,
               "metadata": dict(instance.metadata)}
    if instance.n <= MATERIALIZE_MAX_ELEMENTS:
        summary["family_size"] = len(materialize(instance.feasibility))
    sys.stdout.write(_json_text(summary))
    return 0


# --- simulate / ratio ------------------------------------------------------------------


def _order_source(args, instance, orders):
    mode = args.order
    if mode == "tree":
        if instance.metadata.get("construction") != "tree":
            raise ValueError("--order tree only applies to tree instances")
        return TreeOrders()
    if mode == "sampled":
        if orders is None:
            raise ValueError("instance file carries no order distribution")
        return SampledOrders(orders)
    idx = int(mode)
    if orders is None or not (0 <= idx < len(orders.orders)):
        raise ValueError(f"order index {mode} not present in the instance file")
    return FixedOrder(orders.orders[idx])


def cmd_simulate(args) -> int:
    instance, orders = load_instance(args.instance)
    policy = parse_policy_spec(args.policy)
    source = _order_source(args, instance, orders)
    report = simulate(policy, instance, source, trials=args.trials, seed=args.seed,
                      workers=args.workers)
    config = {"instance": instance.name, "policy": args.policy, "order": args.order,
              "trials": args.trials, "seed": args.seed}
    doc = _wrap("simulate", config, {"report": report.as_dict()})
    if args.format == "csv":
        header = ["version", "instance", "policy", "order", "trials", "seed",
                  "mean", "stderr", "ci_lo", "ci_hi"]
        row = [__version__, instance.name, args.policy, args.order, args.trials,
               args.seed, report.mean, report.stderr, report.ci95[0], report.ci95[1]]
        _emit(_csv_text(header, [row]), args.out)
    else:
        _emit(_json_text(doc), args.out)
    return 0


def cmd_ratio(args) -> int:
    instance, orders = load_instance(args.instance)
    if orders is None:
        raise ValueError("ratio needs an instance file with orders")
    policy = parse_policy_spec(args.policy)
    if not args.reference:
        args.reference = ["exact"]
    if args.reference == ["exact"]:
        limits = SolverLimits(max_elements=max(20, instance.n))
        references = [opt_aware_exact(instance, o, limits=limits).value
                      for o in orders.orders]
    else:
        references = [parse_policy_spec(spec) for spec in args.reference]
        if len(references) == 1:
            references = references * len(orders.orders)
    est = estimate_ratio(policy, instance, orders, trials=args.trials,
                         seed=args.seed, references=references, workers=args.workers)
    config = {"instance": instance.name, "policy": args.policy,
              "reference": list(args.reference), "trials": args.trials,
              "seed": args.seed}
    if args.format == "csv":
        header = ["version", "instance", "policy", "order_index", "num_mean",
                  "num_stderr", "den_mean", "ratio", "ratio_lo", "ratio_hi",
                  "min_ratio", "denominator_is_lower_bound"]
        rows = []
        for r in est.rows:
            den_mean = r.denominator.mean if hasattr(r.denominator, "mean") else r.denominator
            lo, hi = (r.ratio_ci if r.ratio_ci else (None, None))
            rows.append([__version__, instance.name, args.policy, r.order_index,
                         r.numerator.mean, r.numerator.stderr, den_mean, r.ratio,
                         lo, hi, est.min_ratio, est.denominator_is_lower_bound])
        _emit(_csv_text(header, rows), args.out)
    else:
        _emit(_json_text(_wrap("ratio", config, {"report": est.as_dict()})), args.out)
    return 0


# --- exact -------------------------------------------------------------------------


def cmd_exact(args) -> int:
    instance, orders = load_instance(args.instance)
    limits = SolverLimits(max_elements=args.max_elements, max_states=args.max_states)
    t0 = time.perf_counter()
    if args.mode == "aware":
        if orders is None:
            raise ValueError("aware mode needs an instance file with orders")
        result = opt_aware_exact(instance, orders.orders[args.order], limits=limits)
    elif args.mode == "unaware":
        if orders is None:
            raise ValueError("unaware mode needs an instance file with orders")
        result = opt_unaware_exact(instance, orders, limits=limits)
    else:
        result = prophet_exact(instance, limits=limits)
    wall_ms = 1000.0 * (time.perf_counter() - t0)
    config = {"instance": instance.name, "mode": args.mode,
              "order": args.order if args.mode == "aware" else None}
    doc = _wrap("exact", config, {"value": result.value,
                                  "states_expanded": result.states_expanded,
                                  "wall_time_ms": wall_ms})
    _emit(_json_text(doc), args.out)
    return 0


# --- constants -----------------------------------------------------------------------


def cmd_constants(args) -> int:
    rows = derived_constants()
    if args.format == "csv":
        header = ["name", "value", "reference_value", "abs_err", "method"]
        data = [[r.name, r.value, r.reference_value, r.abs_err, r.method] for r in rows]
        _emit(_csv_text(header, data), args.out)
    else:
        doc = _wrap("constants", {}, {"rows": [
            {"name": r.name, "value": r.value, "reference_value": r.reference_value,
             "abs_err": r.abs_err, "method": r.method} for r in rows]})
        _emit(_json_text(doc), args.out)
    if args.check:
        by_name = {r.name: r for r in rows}
        ok = (by_name["penalty_pi1_at_1.152"].abs_err <= 0.001
              and by_name["penalty_pi2_at_0.674"].abs_err <= 0.001
              and by_name["penalty_pi2_at_0.913"].abs_err <= 0.001
              and by_name["penalty_pi1_at_0.913"].abs_err <= 0.002
              and by_name["margin_pi1"].value >= 0.002
              and by_name["margin_pi2"].value >= 0.001
              and by_name["inv_c_prime"].abs_err <= 1e-4)
        if not ok:
            sys.stderr.write("constants check failed\n")
            return CHECK_FAILURE
    return 0


# --- verify --------------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.what == "ufamily":
        family = build_u_family(n=args.n, alpha=args.alpha, k1=args.k1, k3=args.k3,
                                seed=args.seed, max_attempts=args.max_attempts)
        report = verify_u_family(family, k3=args.k3)
        doc = _wrap("verify", {"what": "ufamily", "n": args.n, "alpha": args.alpha,
                               "k1": args.k1, "k3": args.k3, "seed": args.seed},
                    {"attempts": family.attempts,
                     "sizes": sorted(len(u) for u in family.sets),
                     "size_ok": report.size_ok, "membership_ok": report.membership_ok,
                     "intersection_ok": report.intersection_ok,
                     "witnesses": {k: list(v) for k, v in report.witnesses.items()}})
        _emit(_json_text(doc), args.out)
        if args.check and not report.all_ok:
            return CHECK_FAILURE
        return 0
    # instance: schema round-trip must be byte-identical
    instance, orders = load_instance(args.instance)
    with open(args.instance, "rb") as fh:
        original = fh.read()
    rendered = _json_text(instance_to_json_dict(instance, orders))
    identical = rendered.encode("utf-8") == original
    doc = _wrap("verify", {"what": "instance", "instance": args.instance},
                {"round_trip_identical": identical, "n": instance.n})
    _emit(_json_text(doc), args.out)
    if args.check and not identical:
        return CHECK_FAILURE
    return 0


# --- parser --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ocrlab")
    sub = parser.add_subparsers(dest="cmd", required=True)

    gen = sub.add_parser("gen", help="generate an instance file")
    gen.add_argument("--construction", required=True,
                     choices=["tree", "multiunit", "nested", "nested-scaled",
                              "partition", "partition-scaled", "pairs"])
    gen.add_argument("--k", type=int, default=2)
    gen.add_argument("--k1", type=int, default=2)
    gen.add_argument("--k2", type=int, default=8)
    gen.add_argument("--k3", type=int, default=12)
    gen.add_argument("--usize", type=int, default=3)
    gen.add_argument("--q", type=float, default=0.1)
    gen.add_argument("--x", type=int, default=2)
    gen.add_argument("--kappa", type=int, default=2)
    gen.add_argument("--blocks", type=int, default=4)
    gen.add_argument("--block-size", dest="block_size", type=int, default=4)
    gen.add_argument("--p", type=float, default=0.25)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    sim = sub.add_parser("simulate", help="Monte-Carlo policy evaluation")
    sim.add_argument("--instance", required=True)
    sim.add_argument("--policy", required=True)
    sim.add_argument("--order", default="0",
                     help="order index, 'sampled', or 'tree'")
    sim.add_argument("--trials", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--format", choices=["json", "csv"], default="json")
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    rat = sub.add_parser("ratio", help="per-order ratio vs an aware reference")
    rat.add_argument("--instance", required=True)
    rat.add_argument("--policy", required=True)
    rat.add_argument("--reference", action="append", default=None,
                     help="'exact' or a reference policy spec (repeatable, one per order)")
    rat.add_argument("--trials", type=int, required=True)
    rat.add_argument("--seed", type=int, required=True)
    rat.add_argument("--workers", type=int, default=1)
    rat.add_argument("--format", choices=["json", "csv"], default="json")
    rat.add_argument("--out")
    rat.set_defaults(func=cmd_ratio)

    exa = sub.add_parser("exact", help="exact solvers on small instances")
    exa.add_argument("--instance", required=True)
    exa.add_argument("--mode", choices=["aware", "unaware", "prophet"], required=True)
    exa.add_argument("--order", type=int, default=0)
    exa.add_argument("--max-elements", dest="max_elements", type=int, default=24)
    exa.add_argument("--max-states", dest="max_states", type=int, default=2_000_000)
    exa.add_argument("--out")
    exa.set_defaults(func=cmd_exact)

    con = sub.add_parser("constants", help="derived constant table")
    con.add_argument("--format", choices=["json", "csv"], default="json")
    con.add_argument("--check", action="store_true")
    con.add_argument("--out")
    con.set_defaults(func=cmd_constants)

    ver = sub.add_parser("verify", help="verify set families and instance files")
    ver.add_argument("--what", choices=["ufamily", "instance"], required=True)
    ver.add_argument("--instance")
    ver.add_argument("--n", type=int, default=2 ** 16)
    ver.add_argument("--alpha", type=int, default=10)
    ver.add_argument("--k1", type=int, default=4)
    ver.add_argument("--k3", type=int, default=64)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--max-attempts", dest="max_attempts", type=int, default=100)
    ver.add_argument("--check", action="store_true")
    ver.add_argument("--out")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (TooLarge, ExhaustedAttempts, EncodingOverflow) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return RESOURCE_ERROR
    except (OcrlabError, ValueError, OSError, KeyError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
