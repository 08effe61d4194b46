import csv
import json
import subprocess
import sys

import pytest

from riskbound.cli import main, resolve, UsageError


def run_json(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out


def report(tmp_path, name, *argv):
    path = tmp_path / name
    assert main([*argv, "-o", str(path)]) == 0
    return json.loads(path.read_text())


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestMinSamples:
    @pytest.mark.parametrize(
        "gamma,eps,n", [("0.95", "0.02", "149"), ("0", "0.5", "1"), ("0.99", "0.01", "459")]
    )
    def test_prints_count(self, capsys, gamma, eps, n):
        code, out = run_json(capsys, "min-samples", "--gamma", gamma, "--epsilon", eps)
        assert code == 0 and out.out.strip() == n

    def test_json_report(self, capsys):
        code, out = run_json(capsys, "min-samples", "--gamma", "0.95", "--epsilon", "0.01", "--json")
        rep = json.loads(out.out)
        assert rep["outputs"]["n"] == 299 and rep["command"] == "min-samples"
        assert set(rep["provenance"]) >= {"version", "seed", "timestamp"}

    def test_bad_epsilon_exit_2(self, capsys):
        code, out = run_json(capsys, "min-samples", "--gamma", "0.95", "--epsilon", "1.5")
        assert code == 2 and "error" in out.err

    def test_missing_flag(self, capsys):
        assert run_json(capsys, "min-samples", "--gamma", "0.95")[0] == 2

    def test_console_script(self):
        out = subprocess.run(
            [sys.executable, "-m", "riskbound.cli", "min-samples", "--gamma", "0.95", "--epsilon", "0.02"],
            capture_output=True, text=True, check=True,
        )
        assert out.stdout.strip() == "149"


class TestBound:
    @pytest.fixture
    def samples(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("value\n0.2\n1.0\n0.5\n")
        return path

    def test_cvar(self, tmp_path, samples):
        rep = report(tmp_path, "r.json", "bound", "cvar", "--samples", str(samples), "--ell", "5",
                     "--epsilon", "0.02", "--alpha", "0.1")
        assert rep["outputs"]["bound"] == pytest.approx(1.8, abs=1e-4)

    def test_var_and_expect(self, tmp_path, samples):
        rep = report(tmp_path, "v.json", "bound", "var", "--samples", str(samples), "--ell", "5", "--epsilon", "0.1")
        assert rep["outputs"]["bound"] == 1.0
        assert rep["outputs"]["confidence"] == pytest.approx(1 - 0.9**3)
        rep = report(tmp_path, "e.json", "bound", "expect", "--samples", str(samples), "--ell", "5", "--epsilon", "0.1")
        assert rep["outputs"]["bound"] == pytest.approx(0.9 + 0.5)

    def test_evar_constant(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("0.7\n0.7\n0.7\n")
        rep = report(tmp_path, "r.json", "bound", "evar", "--samples", str(path), "--ell", "0.7",
                     "--epsilon", "0.05", "--alpha", "0.2")
        assert rep["outputs"]["bound"] == pytest.approx(0.7, abs=1e-6)

    def test_ell_violation(self, capsys, samples):
        code, out = run_json(capsys, "bound", "cvar", "--samples", str(samples), "--ell", "0.6",
                             "--epsilon", "0.02", "--alpha", "0.1")
        assert code == 2 and "essential bound violated by sample 1" in out.err

    def test_alpha_required(self, capsys, samples):
        code, _ = run_json(capsys, "bound", "cvar", "--samples", str(samples), "--ell", "5", "--epsilon", "0.02")
        assert code == 2

    def test_search_failure_exit_3(self, capsys, samples, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"search": {"t_min": 5.0, "t_max": 1.0}}))
        code, out = run_json(capsys, "bound", "evar", "--config", str(cfg), "--samples", str(samples),
                             "--ell", "5", "--epsilon", "0.02", "--alpha", "0.1")
        assert code == 3 and "numerical failure" in out.err


class TestValidate:
    def test_constant_full_coverage(self, tmp_path):
        rows_path = tmp_path / "rows.csv"
        rep = report(tmp_path, "r.json", "validate", "--fixture", "constant", "--trials", "50",
                     "--oracle-draws", "2000", "--seed", "1", "--csv", str(rows_path))
        assert rep["outputs"]["covered"] == {"cvar": 50, "evar": 50}
        rows = read_csv(rows_path)
        assert rows[0] == ["trial", "measure", "bound", "truth", "covered"]
        assert len(rows) == 101

    def test_single_trial(self, tmp_path):
        rep = report(tmp_path, "r.json", "validate", "--trials", "1", "--oracle-draws", "1000", "--seed", "3")
        assert rep["outputs"]["trials"] == 1 and rep["outputs"]["n"] == 149

    def test_seed_required(self, capsys):
        code, out = run_json(capsys, "validate", "--trials", "1")
        assert code == 2 and "seed" in out.err

    def test_csv_round_trip(self, tmp_path):
        rows_path = tmp_path / "rows.csv"
        hist = tmp_path / "h.csv"
        report(tmp_path, "r.json", "validate", "--trials", "3", "--oracle-draws", "1000", "--seed", "3",
               "--csv", str(rows_path), "--histogram", str(hist))
        rows = read_csv(rows_path)
        again = tmp_path / "again.csv"
        with open(again, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        assert read_csv(again) == rows
        for r in rows[1:]:
            assert repr(float(r[2])) == r[2]
        assert read_csv(hist)[0] == ["value", "count"]


class TestTsp:
    def test_nine_node_demo(self, tmp_path):
        rep = report(tmp_path, "r.json", "tsp", "--seed", "5")
        out = rep["outputs"]
        assert out["samples_used"] == 299
        assert sorted(out["tour"]) == list(range(9))

    def test_exhaustive_audit(self, tmp_path):
        rep = report(tmp_path, "r.json", "tsp", "--nodes", "7", "--seed", "2", "--audit", "exhaustive")
        assert 0 <= rep["outputs"]["violation_fraction"] <= 1
        assert rep["outputs"]["percentile"] == pytest.approx(100 * (1 - rep["outputs"]["violation_fraction"]))

    def test_instance_file_rerun(self, tmp_path):
        inst = tmp_path / "inst.json"
        inst.write_text(json.dumps({"nodes": [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 2]]}))
        a = report(tmp_path, "a.json", "tsp", "--instance", str(inst), "--seed", "9")
        b = report(tmp_path, "b.json", "tsp", "--instance", str(inst), "--seed", "9")
        assert a["outputs"] == b["outputs"]

    def test_exhaustive_limit(self, capsys):
        assert run_json(capsys, "tsp", "--nodes", "12", "--seed", "1", "--audit", "exhaustive")[0] == 2


class TestCampaigns:
    def test_synthesize_surrogate(self, tmp_path):
        cands = tmp_path / "c.csv"
        rep = report(tmp_path, "r.json", "synthesize", "--surrogate", "--seed", "4", "--candidates-csv", str(cands))
        assert rep["outputs"]["candidates"] == 459
        rows = read_csv(cands)
        assert len(rows) == 460
        assert min(float(r[5]) for r in rows[1:]) == rep["outputs"]["riskmap"]

    def test_synthesize_single_candidate(self, tmp_path):
        rep = report(tmp_path, "r.json", "synthesize", "--surrogate", "--seed", "4", "--candidates", "1")
        assert rep["outputs"]["candidates"] == 1 and rep["outputs"]["best_index"] == 0

    def test_simulate_export(self, tmp_path):
        traj = tmp_path / "t.csv"
        rep = report(tmp_path, "r.json", "simulate", "--seed", "3", "--horizon", "1", "--trajectory", str(traj))
        rows = read_csv(traj)
        assert rep["outputs"]["steps"] == len(rows) - 2
        assert "robustness" not in rep["outputs"]

    def test_bad_params(self, capsys):
        assert run_json(capsys, "simulate", "--seed", "3", "--params", "9,1,1,1")[0] == 2

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"seed": 1, "bogus": 2}))
        code, out = run_json(capsys, "simulate", "--config", str(cfg))
        assert code == 2 and "bogus" in out.err

    def test_report_of_other_command(self, tmp_path, capsys):
        rep = tmp_path / "r.json"
        main(["min-samples", "--gamma", "0.9", "--epsilon", "0.1", "-o", str(rep)])
        assert run_json(capsys, "simulate", "--config", str(rep))[0] == 2


class TestReplay:
    @pytest.mark.parametrize(
        "argv",
        [
            ["validate", "--trials", "4", "--oracle-draws", "2000", "--seed", "11"],
            ["tsp", "--nodes", "7", "--seed", "3", "--audit", "mc", "--audit-trials", "500"],
            ["synthesize", "--surrogate", "--seed", "6", "--crn"],
            ["simulate", "--seed", "8", "--horizon", "2"],
        ],
    )
    def test_bitwise(self, tmp_path, argv):
        first = report(tmp_path, "first.json", *argv)
        replay = report(tmp_path, "replay.json", argv[0], "--config", str(tmp_path / "first.json"))
        assert replay["inputs"] == first["inputs"]
        assert json.dumps(replay["outputs"]) == json.dumps(first["outputs"])

    def test_flags_override_config(self, tmp_path):
        first = report(tmp_path, "first.json", "validate", "--trials", "2", "--oracle-draws", "1000", "--seed", "1")
        other = report(tmp_path, "other.json", "validate", "--config", str(tmp_path / "first.json"), "--seed", "2")
        assert other["inputs"]["seed"] == 2 and other["inputs"]["trials"] == 2
        assert other["outputs"] != first["outputs"]


class TestResolve:
    def test_defaults(self):
        cfg = resolve("verify", {}, {"seed": 1})
        assert cfg["gamma"] == 0.95 and cfg["params"] == {"p1": 1.0, "p2": 2.0, "p3": 1.0, "p4": 5.0}

    def test_missing_seed(self):
        with pytest.raises(UsageError):
            resolve("verify", {}, {})

    def test_workers_env(self, monkeypatch):
        from riskbound.cli import _workers

        monkeypatch.setenv("RISKBOUND_WORKERS", "3")
        assert _workers(None) == 3
        assert _workers(2) == 2
        monkeypatch.setenv("RISKBOUND_WORKERS", "many")
        with pytest.raises(UsageError):
            _workers(None)
