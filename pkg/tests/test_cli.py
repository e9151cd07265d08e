import csv
import io
import json

import pytest

from swapdec.cli import run_cli
from swapdec.config import parse_config


def write_config(tmp_path, body, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(body, indent=2))
    return path


def run(tmp_path, experiment, body, *extra, out="out"):
    cfg = write_config(tmp_path, body)
    code = run_cli([experiment, "--config", str(cfg), "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def header(path):
    return path.read_text().splitlines()[0]


DECAY = {"experiment": "decay", "seed": 3, "parameters": {"n": 3, "m": 4, "p_int": 0.2, "trials": 200}}


class TestExitCodes:
    def test_happy_path(self, tmp_path):
        code, out = run(tmp_path, "decay", DECAY)
        assert code == 0
        rows = list(csv.DictReader(io.StringIO((out / "decay.csv").read_text())))
        assert [int(r["cycle"]) for r in rows] == [1, 2, 3, 4]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["experiment"] == "decay" and summary["seed"] == 3
        assert summary["results"]["qubits_required"] == 1 + 1 + 1 + 8

    def test_invalid_n(self, tmp_path, capsys):
        body = {**DECAY, "parameters": {**DECAY["parameters"], "n": 0}}
        code, _ = run(tmp_path, "decay", body)
        assert code == 1
        err = capsys.readouterr().err
        assert "n must be ≥ 1" in err and "line" in err

    def test_unknown_field(self, tmp_path, capsys):
        body = {**DECAY, "parameters": {**DECAY["parameters"], "p_interaction": 0.2}}
        assert run(tmp_path, "decay", body)[0] == 1
        assert "p_interaction" in capsys.readouterr().err

    def test_wrong_experiment(self, tmp_path):
        assert run(tmp_path, "zeno", DECAY)[0] == 1

    def test_over_budget(self, tmp_path, capsys):
        body = {**DECAY, "parameters": {"n": 3, "m": 10, "p_int": 0.1, "trials": 10}}
        code, out = run(tmp_path, "decay", body)
        assert code == 2
        err = capsys.readouterr().err
        assert "23 qubits" in err and "20" in err
        assert not out.exists()

    def test_insufficient_data(self, tmp_path, capsys):
        body = {**DECAY, "parameters": {"n": 2, "m": 4, "p_int": 1.0, "trials": 20}}
        code, out = run(tmp_path, "decay", body)
        assert code == 3
        assert "insufficient data" in capsys.readouterr().err
        # the raw curve is still written
        assert (out / "decay.csv").exists()

    def test_missing_file(self, tmp_path):
        assert run_cli(["decay", "--config", str(tmp_path / "nope.json")]) == 1

    def test_missing_seed_warns(self, tmp_path, capsys):
        body = {k: v for k, v in DECAY.items() if k != "seed"}
        code, out = run(tmp_path, "decay", body)
        assert code == 0
        assert "no seed" in capsys.readouterr().err
        assert json.loads((out / "summary.json").read_text())["seed"] == 0


class TestOutputs:
    def test_config_echo_roundtrips(self, tmp_path):
        _, out = run(tmp_path, "decay", DECAY)
        echo = json.loads((out / "summary.json").read_text())["config"]
        again = parse_config(json.dumps(echo))
        assert again.model_dump(mode="json") == echo

    def test_overrides(self, tmp_path):
        _, out = run(tmp_path, "decay", DECAY, "--seed", "9", "--trials", "50", "--units", "natural")
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seed"] == 9
        assert summary["config"]["parameters"]["trials"] == 50
        assert summary["results"]["ledger"]["units"] == "natural"

    @pytest.mark.parametrize(
        "experiment, body, files",
        [
            ("decay", DECAY, {"decay.csv": "cycle,fraction_pure,mean_coherence,analytic_pure"}),
            (
                "swap-trace",
                {"experiment": "swap-trace", "seed": 0, "parameters": {"sequence": ["R", "P"]}},
                {"swap.csv": "step,label,negativity_or,negativity_op,separable_or,separable_op"},
            ),
            (
                "zeno",
                {"experiment": "zeno", "seed": 1, "parameters": {"m": 5, "trials": 4}},
                {"zeno.csv": "trial,first_outcome,constant_after_first,survived"},
            ),
            (
                "lg",
                {"experiment": "lg", "seed": 1, "parameters": {"trials": 50}},
                {
                    "lg.csv": "theta,c21,c32,c31,k_value,k_stderr",
                    "lg_control.csv": "theta,c21,c32,c31,k_value,k_stderr",
                },
            ),
            (
                "sieve-check",
                {
                    "experiment": "sieve-check",
                    "seed": 1,
                    "parameters": {
                        "catalog": [
                            {"id": "r1", "kind": "reference", "target": "a"},
                            {"id": "p1", "kind": "pointer", "target": "b"},
                        ],
                        "reference_spec": {"r1": 0},
                        "schedule": {"kind": "round-robin", "ticks": 4},
                    },
                },
                {"sieve.csv": "first,second,commutator_norm,violation", "memory.csv": "t,observable_id,kind,outcome"},
            ),
        ],
    )
    def test_schemas(self, tmp_path, experiment, body, files):
        code, out = run(tmp_path, experiment, body)
        assert code == 0
        for name, cols in files.items():
            assert header(out / name) == cols
        assert json.loads((out / "summary.json").read_text())["tool"] == "swapdec"

    def test_sieve_identification(self, tmp_path):
        body = {
            "experiment": "sieve-check",
            "seed": 1,
            "parameters": {
                "catalog": [
                    {"id": "r1", "kind": "reference", "target": "a"},
                    {"id": "p1", "kind": "pointer", "target": "a", "axis": [1, 0, 0]},
                ],
                "reference_spec": {"r1": 1},
                "initial_state": {"a": {"theta": 3.141592653589793}},
                "schedule": {"kind": "round-robin", "ticks": 2},
            },
        }
        _, out = run(tmp_path, "sieve-check", body)
        res = json.loads((out / "summary.json").read_text())["results"]
        assert not res["ok"] and res["violations"][0][:2] == ["r1", "p1"]
        assert res["coarse_grained"] == "RP"
        assert res["identification"] == "identified"


class TestDeterminism:
    def test_same_seed_same_bytes(self, tmp_path):
        a = run(tmp_path, "decay", DECAY, out="a")[1]
        b = run(tmp_path, "decay", DECAY, out="b")[1]
        assert (a / "decay.csv").read_bytes() == (b / "decay.csv").read_bytes()
        assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()

    def test_threads(self, tmp_path):
        a = run(tmp_path, "decay", DECAY, "--threads", "1", out="a")[1]
        b = run(tmp_path, "decay", DECAY, "--threads", "3", out="b")[1]
        assert (a / "decay.csv").read_bytes() == (b / "decay.csv").read_bytes()

    def test_threads_env(self, tmp_path, monkeypatch):
        a = run(tmp_path, "decay", DECAY, out="a")[1]
        monkeypatch.setenv("SWAPDEC_THREADS", "2")
        b = run(tmp_path, "decay", DECAY, out="b")[1]
        assert (a / "decay.csv").read_bytes() == (b / "decay.csv").read_bytes()


class TestScenarios:
    @pytest.mark.parametrize("experiment, name", [("swap-trace", "eq6-roundtrip"), ("zeno", "zeno")])
    def test_bundled(self, tmp_path, experiment, name):
        assert run_cli([experiment, "--scenario", name, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "summary.json").exists()

    def test_unknown_scenario(self, tmp_path):
        assert run_cli(["decay", "--scenario", "nope", "--out", str(tmp_path)]) == 1
