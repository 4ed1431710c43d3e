"""CLI: generation round-trips, report shapes, check gates, and exit codes."""

from __future__ import annotations

import csv
import json

import pytest

from ocrlab.cli import CHECK_FAILURE, RESOURCE_ERROR, USAGE_ERROR, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def multiunit_file(tmp_path, capsys):
    path = tmp_path / "mu.json"
    code, _, _ = run(capsys, "gen", "--construction", "multiunit", "--k", "4",
                     "--seed", "0", "--out", str(path))
    assert code == 0
    return str(path)


@pytest.fixture
def pairs_file(tmp_path, capsys):
    path = tmp_path / "pairs.json"
    assert run(capsys, "gen", "--construction", "pairs", "--k", "3",
               "--seed", "0", "--out", str(path))[0] == 0
    return str(path)


class TestGen:
    def test_multiunit_summary(self, tmp_path, capsys):
        path = tmp_path / "mu100.json"
        code, out, _ = run(capsys, "gen", "--construction", "multiunit",
                           "--k", "100", "--seed", "0", "--out", str(path))
        assert code == 0
        summary = json.loads(out)
        assert summary["n"] == 400 and summary["orders"] == 2

    def test_tree_k4_size(self, tmp_path, capsys):
        path = tmp_path / "t.json"
        code, out, _ = run(capsys, "gen", "--construction", "tree", "--k", "4",
                           "--seed", "7", "--out", str(path))
        assert code == 0
        assert json.loads(out)["n"] == 340

    def test_small_instance_reports_family_size(self, pairs_file, capsys):
        code, out, _ = run(capsys, "gen", "--construction", "pairs", "--k", "2",
                           "--seed", "0", "--out", pairs_file)
        assert code == 0
        assert json.loads(out)["family_size"] == 2

    def test_round_trip_verifies_byte_identical(self, multiunit_file, capsys):
        code, out, _ = run(capsys, "verify", "--what", "instance",
                           "--instance", multiunit_file, "--check")
        assert code == 0
        assert json.loads(out)["round_trip_identical"] is True

    def test_tampered_file_fails_check(self, multiunit_file, capsys, tmp_path):
        with open(multiunit_file) as fh:
            doc = json.load(fh)
        tampered = tmp_path / "tampered.json"
        tampered.write_text(json.dumps(doc))  # same content, different bytes
        code, out, _ = run(capsys, "verify", "--what", "instance",
                           "--instance", str(tampered), "--check")
        assert code == CHECK_FAILURE


class TestSimulateAndRatio:
    def test_simulate_json_report(self, multiunit_file, capsys):
        code, out, _ = run(capsys, "simulate", "--instance", multiunit_file,
                           "--policy", "multiunit_threshold:d=0.913,variant=unaware",
                           "--order", "0", "--trials", "500", "--seed", "3")
        assert code == 0
        doc = json.loads(out)
        assert doc["command"] == "simulate"
        assert doc["config"]["seed"] == 3 and doc["config"]["trials"] == 500
        assert "wall" not in out and "workers" not in out
        assert doc["report"]["trials"] == 500

    def test_simulate_is_worker_invariant(self, multiunit_file, capsys):
        outs = []
        for workers in ("1", "4"):
            code, out, _ = run(capsys, "simulate", "--instance", multiunit_file,
                               "--policy", "greedy", "--order", "sampled",
                               "--trials", "3000", "--seed", "5",
                               "--workers", workers)
            assert code == 0
            outs.append(out)
        assert outs[0] == outs[1]

    def test_simulate_csv(self, multiunit_file, capsys):
        code, out, _ = run(capsys, "simulate", "--instance", multiunit_file,
                           "--policy", "greedy", "--trials", "200", "--seed", "1",
                           "--format", "csv")
        assert code == 0
        rows = list(csv.reader(out.splitlines()))
        assert rows[0][:2] == ["version", "instance"] and len(rows) == 2

    def test_ratio_exact_reference(self, pairs_file, capsys):
        code, out, _ = run(capsys, "ratio", "--instance", pairs_file,
                           "--policy", "greedy", "--trials", "2000", "--seed", "2")
        assert code == 0
        doc = json.loads(out)
        report = doc["report"]
        assert not report["denominator_is_lower_bound"]
        assert report["rows"][0]["denominator"] == pytest.approx(1.0 / 6.0)
        assert report["min_ratio"] is not None

    def test_ratio_policy_reference_csv(self, multiunit_file, capsys):
        code, out, _ = run(capsys, "ratio", "--instance", multiunit_file,
                           "--policy", "multiunit_threshold:d=0.913,variant=unaware",
                           "--reference", "multiunit_threshold:d=0.913,variant=pi1",
                           "--trials", "1000", "--seed", "2", "--format", "csv")
        assert code == 0
        rows = list(csv.reader(out.splitlines()))
        assert len(rows) == 3  # header + one row per order
        header = rows[0]
        assert rows[1][header.index("denominator_is_lower_bound")] == "True"


class TestExact:
    def test_pairs_aware_value(self, pairs_file, capsys):
        code, out, _ = run(capsys, "exact", "--instance", pairs_file,
                           "--mode", "aware", "--order", "0")
        assert code == 0
        doc = json.loads(out)
        assert doc["value"] == pytest.approx(1.0 / 6.0)
        assert doc["states_expanded"] > 0 and "wall_time_ms" in doc

    def test_pairs_prophet(self, pairs_file, capsys):
        code, out, _ = run(capsys, "exact", "--instance", pairs_file,
                           "--mode", "prophet")
        assert code == 0
        assert json.loads(out)["value"] == pytest.approx(91.0 / 216.0)

    def test_unaware_needs_orders(self, tmp_path, capsys):
        path = tmp_path / "part.json"
        run(capsys, "gen", "--construction", "partition-scaled", "--blocks", "2",
            "--block-size", "2", "--p", "0.5", "--seed", "0", "--out", str(path))
        code, _, err = run(capsys, "exact", "--instance", str(path),
                           "--mode", "unaware")
        assert code == USAGE_ERROR and "orders" in err


class TestConstantsAndVerify:
    def test_constants_check_passes(self, capsys):
        code, out, _ = run(capsys, "constants", "--check")
        assert code == 0
        assert len(json.loads(out)["rows"]) == 16

    def test_constants_csv(self, capsys):
        code, out, _ = run(capsys, "constants", "--format", "csv")
        assert code == 0
        rows = list(csv.reader(out.splitlines()))
        assert rows[0] == ["name", "value", "reference_value", "abs_err", "method"]
        assert len(rows) == 17

    def test_verify_ufamily(self, capsys):
        code, out, _ = run(capsys, "verify", "--what", "ufamily", "--check",
                           "--n", str(2 ** 16), "--alpha", "10", "--k1", "4",
                           "--k3", "64", "--seed", "1")
        assert code == 0
        doc = json.loads(out)
        assert doc["size_ok"] and doc["membership_ok"] and doc["intersection_ok"]


class TestExitCodes:
    def test_usage_error_on_unknown_policy(self, multiunit_file, capsys):
        code, _, err = run(capsys, "simulate", "--instance", multiunit_file,
                           "--policy", "mystery", "--trials", "100", "--seed", "0")
        assert code == USAGE_ERROR and "unknown policy" in err

    def test_usage_error_on_bad_order_index(self, multiunit_file, capsys):
        code, _, _ = run(capsys, "simulate", "--instance", multiunit_file,
                         "--policy", "greedy", "--order", "9",
                         "--trials", "100", "--seed", "0")
        assert code == USAGE_ERROR

    def test_resource_error_on_impossible_family(self, tmp_path, capsys):
        code, _, err = run(capsys, "gen", "--construction", "nested", "--x", "2",
                           "--seed", "0", "--out", str(tmp_path / "n.json"))
        assert code == RESOURCE_ERROR and "distinct" in err

    def test_resource_error_on_scaled_capacity(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen", "--construction", "nested-scaled",
                         "--k1", "2", "--k2", "8", "--k3", "8", "--usize", "3",
                         "--seed", "0", "--out", str(tmp_path / "n.json"))
        assert code == RESOURCE_ERROR

    def test_gen_nested_scaled_k3_12_works(self, tmp_path, capsys):
        code, out, _ = run(capsys, "gen", "--construction", "nested-scaled",
                           "--k1", "2", "--k2", "8", "--k3", "12", "--usize", "3",
                           "--seed", "0", "--out", str(tmp_path / "n.json"))
        assert code == 0
        summary = json.loads(out)
        assert summary["n"] == 22 and summary["orders"] == 4
