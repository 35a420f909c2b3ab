import json
import math
import subprocess
import sys

import numpy as np
import pytest

from reversim.cli import main
from reversim.formats import (
    dumps,
    family_document,
    parse_model,
    parse_state,
    state_document,
)
from reversim.operator_core import random_density

from conftest import spin_pair

LN4 = 1.3862943611198906
S = 1 / math.sqrt(2)


def _diag(values):
    return [[[v if i == j else 0.0, 0.0] for j in range(len(values))] for i, v in enumerate(values)]


@pytest.fixture
def files(tmp_path):
    docs = {
        "plus": {"format_version": 1, "kind": "pure", "dim": 2, "payload": {"amplitudes": [[S, 0], [S, 0]]}},
        "vac": {"format_version": 1, "kind": "fock", "dim": 2, "payload": {"n": 0}},
        "fock2": {"format_version": 1, "kind": "fock", "dim": 8, "payload": {"n": 2}},
        "spin": family_document(spin_pair()),
        "proj": {"format_version": 1, "kind": "family",
                 "payload": {"outcomes": [{"label": 0, "operator": _diag([1, 0])}, {"label": 1, "operator": _diag([0, 1])}]}},
        "kerr": {"format_version": 1, "kind": "kerr", "payload": {"epsilon": 0.5, "dim": 8}},
        "badgrid": {"format_version": 1, "kind": "kerr", "payload": {"epsilon": 0.5, "dim": 8, "grid": {"spacing_fraction": 0.9}}},
        "nocount": {"format_version": 1, "kind": "nocount", "payload": {"lambda_tau": 0.001, "dim": 4}},
    }
    out = {}
    for name, doc in docs.items():
        path = tmp_path / f"{name}.json"
        path.write_text(dumps(doc))
        out[name] = str(path)
    out["dir"] = tmp_path
    return out


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(argv, capsys):
    code, out, err = run(argv, capsys)
    assert code == 0, err
    return json.loads(out)


def test_photon_nocount_and_invert(files, capsys):
    doc = run_json(["photon", "--mode", "nocount", "--lambda-tau", str(LN4), "--state", files["plus"]], capsys)
    assert doc["meta"]["populations"] == pytest.approx([0.8, 0.2], abs=1e-15)
    after = files["dir"] / "after.json"
    after.write_text(dumps(doc))
    back = run_json(["photon", "--mode", "invert", "--lambda-tau", str(LN4), "--state", str(after), "--check", files["plus"]], capsys)
    assert back["meta"]["deviation"] < 1e-10


def test_photon_onecount_vacuum_exit_3(files, capsys):
    code, out, err = run(["photon", "--mode", "onecount", "--state", files["vac"]], capsys)
    assert code == 3 and out == ""
    line = json.loads(err)
    assert line["exit_code"] == 3 and line["error"] == "ImpossibleOutcomeError"
    assert err.count("\n") == 1


def test_photon_validation_exit_2(files, capsys):
    code, _, err = run(["photon", "--mode", "nocount", "--state", files["plus"]], capsys)
    assert code == 2 and json.loads(err)["exit_code"] == 2
    code, _, err = run(["photon", "--mode", "sideways", "--state", files["plus"]], capsys)
    assert code == 2 and json.loads(err)["exit_code"] == 2
    code, _, _ = run(["photon", "--mode", "nocount", "--lambda-tau", "-1", "--state", files["plus"]], capsys)
    assert code == 2


def test_bad_format_version(files, capsys, tmp_path):
    p = tmp_path / "v2.json"
    p.write_text(json.dumps({"format_version": 2, "kind": "fock", "dim": 2, "payload": {"n": 0}}))
    code, _, err = run(["photon", "--mode", "nocount", "--lambda-tau", "1", "--state", str(p)], capsys)
    assert code == 2 and "format_version" in err


def test_kerr_probabilities(files, capsys):
    doc = run_json(["kerr", "--model", files["kerr"], "--state", files["fock2"]], capsys)
    eps = 0.5
    dnu = doc["spacing"]
    oracle = [dnu * math.exp(-((2 - nu) ** 2) / (2 * eps**2)) / math.sqrt(2 * math.pi * eps**2) for nu in doc["grid"]]
    np.testing.assert_allclose(doc["probabilities"], oracle, rtol=1e-12, atol=1e-300)
    assert doc["completeness_deviation"] < 1e-6


def test_kerr_inline_and_sampling(files, capsys):
    doc = run_json(["kerr", "--epsilon", "0.5", "--dim", "8", "--state", files["fock2"], "--trials", "2000", "--seed", "4", "--check-post"], capsys)
    assert sum(doc["counts"]) == 2000
    assert doc["post_state_min_fidelity"] == pytest.approx(1, abs=1e-12)


def test_kerr_csv(files, capsys):
    code, out, _ = run(["kerr", "--epsilon", "0.5", "--dim", "8", "--state", files["fock2"], "--format", "csv"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "nu [photons],probability [probability]"


def test_kerr_grid_error_exit_2(files, capsys):
    code, _, err = run(["kerr", "--model", files["badgrid"], "--state", files["fock2"]], capsys)
    assert code == 2 and json.loads(err)["error"] == "GridConfigurationError"


def test_kerr_sampling_needs_seed(files, capsys):
    code, _, err = run(["kerr", "--model", files["kerr"], "--state", files["fock2"], "--trials", "10"], capsys)
    assert code == 2 and "seed" in err


def test_revcheck_examples(files, capsys):
    proj = run_json(["revcheck", "--model", files["proj"]], capsys)
    assert [o["verdict"]["reversible"] for o in proj["outcomes"]] == [False, False]
    assert proj["family_reversible"] is False
    spin = run_json(["revcheck", "--model", files["spin"]], capsys)
    assert [o["success_probability"] for o in spin["outcomes"]] == pytest.approx([0.25, 0.25])
    assert spin["family_reversible"] is True
    nc = run_json(["revcheck", "--model", files["nocount"]], capsys)
    verdicts = {o["label"]: o["verdict"]["reversible"] for o in nc["outcomes"]}
    assert verdicts == {"count": False, "nocount": True}


def test_revcheck_kerr_exact(files, capsys):
    doc = run_json(["revcheck", "--model", files["kerr"]], capsys)
    assert doc["family_reversible"] is True
    assert {o["verdict"]["method"] for o in doc["outcomes"]} == {"exact-spectral"}


def test_reverse_spin(files, capsys):
    doc = run_json(["reverse", "--model", files["spin"], "--outcome", "0", "--state", files["plus"],
                    "--trials", "100000", "--seed", "8"], capsys)
    assert doc["check"]["fidelity"] >= 1 - 1e-10
    assert doc["plan"]["success_probability"] == pytest.approx(0.25)
    s = doc["sampling"]
    sigma = math.sqrt(0.25 * 0.75 / 1e5)
    assert abs(s["joint_frequency"] - 0.25) <= 4 * sigma


def test_reverse_kerr_truncated(files, capsys):
    doc = run_json(["reverse", "--model", files["kerr"], "--outcome", "2", "--truncate", "4", "--state", files["fock2"]], capsys)
    assert doc["check"]["fidelity"] == pytest.approx(1, abs=1e-15)
    assert doc["plan"]["support_dim"] == 5


def test_reverse_irreversible_exit_4(files, capsys):
    code, _, err = run(["reverse", "--model", files["proj"], "--outcome", "0", "--state", files["plus"]], capsys)
    assert code == 4 and "sigma_min" in json.loads(err)["message"]
    code, _, _ = run(["reverse", "--model", files["nocount"], "--outcome", "count", "--state", files["fock2"]], capsys)
    assert code == 4


def test_reverse_unknown_label(files, capsys):
    code, _, _ = run(["reverse", "--model", files["spin"], "--outcome", "7", "--state", files["plus"]], capsys)
    assert code == 2


@pytest.mark.parametrize("name", ["joint-prob", "sharp-limit", "recovery"])
def test_experiment_defaults(name, files, capsys):
    out_dir = files["dir"] / name
    code, out, _ = run(["experiment", name, "--seed", "3", "--out-dir", str(out_dir)], capsys)
    assert code == 0
    assert all(line.startswith("PASS") for line in out.splitlines()[:-1])
    report = json.loads((out_dir / f"{name}.json").read_text())
    assert report["passed"]


def test_experiment_recovery_summary(files, capsys):
    out_dir = files["dir"] / "rec"
    run(["experiment", "recovery", "--seed", "3", "--out-dir", str(out_dir)], capsys)
    report = json.loads((out_dir / "recovery.json").read_text())
    main_cols = {c["name"]: c["values"][0] for c in report["tables"][0]["columns"]}
    assert main_cols["recovered_fidelity"] >= 1 - 1e-9
    assert main_cols["success_probability"] == pytest.approx(math.exp(-LN4), abs=1e-12)


def test_experiment_params(files, capsys):
    out_dir = files["dir"] / "p"
    code, _, _ = run(["experiment", "recovery", "--seed", "1", "--out-dir", str(out_dir),
                      "--param", "lambda_tau=0.5", "--param", "dim=4", "--param", "sweep_dims=2,3,5"], capsys)
    assert code == 0
    code, _, err = run(["experiment", "recovery", "--seed", "1", "--out-dir", str(out_dir), "--param", "bogus=1"], capsys)
    assert code == 2 and "bogus" in err
    code, _, _ = run(["experiment", "recovery", "--out-dir", str(out_dir)], capsys)
    assert code == 2


def test_experiment_failing_check_nonzero(files, capsys):
    # at theta = pi/4 the outcome operator is proportional to the identity, so marginals cannot differ
    code, out, _ = run(["experiment", "joint-prob", "--seed", "1", "--out-dir", str(files["dir"] / "f"),
                        "--param", "theta=0.7853981633974483", "--param", "n_states=2", "--param", "n_trials=1000"], capsys)
    assert code == 5
    assert "FAIL marginal_depends_on_state" in out


def test_deterministic_output(files, capsys):
    argv = ["reverse", "--model", files["spin"], "--outcome", "0", "--state", files["plus"], "--trials", "1000", "--seed", "8"]
    assert run(argv, capsys)[1] == run(argv, capsys)[1]


def test_out_file(files, capsys):
    target = files["dir"] / "o.json"
    code, out, _ = run(["revcheck", "--model", files["spin"], "--out", str(target)], capsys)
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["family_reversible"]


def test_state_round_trip(rng):
    for _ in range(10):
        rho = random_density(4, rng)
        again = parse_state(json.loads(dumps(state_document(rho))))
        np.testing.assert_array_equal(again.matrix, rho.matrix)


def test_model_round_trip():
    fam = spin_pair(0.3)
    again = parse_model(json.loads(dumps(family_document(fam)))).family
    assert again.labels == fam.labels
    np.testing.assert_array_equal(again.operators, fam.operators)


def test_dumps_format():
    assert dumps({"b": 0.1, "a": [1, 2.0, complex(1, -1)], "c": float("inf")}) == (
        '{"a": [1, 2.0, [1.0, -1.0]], "b": 0.10000000000000001, "c": "inf"}'
    )


def test_console_script_and_module(files):
    for cmd in (["reversim"], [sys.executable, "-m", "reversim"]):
        proc = subprocess.run(cmd + ["revcheck", "--model", files["spin"]], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["family_reversible"]
