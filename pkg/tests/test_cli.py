import json
import os

import numpy as np
import pytest

from geoxray.cli import main


def write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return str(path)


BASE = """
seed = 7
out_dir = "{out}"
[metric]
family = "euclidean"
[field]
kind = "constant"
[grid]
n_r = 10
n_phi = 20
n_alpha = 16
n_boundary = 16
n_dir = 6
[integrator]
step = 2e-3
"""


def test_transform_chord_sinogram(tmp_path):
    cfgp = write(tmp_path / "c.toml", BASE.format(out=tmp_path / "out"))
    assert main(["transform", "--config", cfgp]) == 0
    raw = np.loadtxt(tmp_path / "out" / "sinogram.csv", delimiter=",", skiprows=1)
    # chord length = 2 mu = 2 cos(sigma)
    np.testing.assert_allclose(raw[:, 2], 2 * np.cos(raw[:, 1]), atol=1e-8)
    meta = json.load(open(tmp_path / "out" / "sinogram.json"))
    assert meta["version"] and meta["config_hash"]
    assert meta["n_failed_rays"] == 0
    with open(tmp_path / "out" / "sinogram.csv") as fh:
        assert "config_hash" in fh.read()


def test_transform_potential_near_zero(tmp_path):
    text = BASE.format(out=tmp_path / "out") .replace(
        'kind = "constant"', 'kind = "potential_gradient"\norder = 2\ndegree = 2')
    cfgp = write(tmp_path / "c.toml", text)
    assert main(["transform", "--config", cfgp]) == 0
    meta = json.load(open(tmp_path / "out" / "sinogram.json"))
    assert meta["max_abs_value"] < 1e-8


def test_missing_config_exit_2(tmp_path):
    assert main(["transform", "--config", str(tmp_path / "nope.toml")]) == 2


def test_bad_toml_exit_2(tmp_path):
    cfgp = write(tmp_path / "c.toml", "seed = [unclosed")
    assert main(["transform", "--config", cfgp]) == 2


def test_unknown_check_exit_2(tmp_path):
    cfgp = write(tmp_path / "c.toml", BASE.format(out=tmp_path / "out"))
    assert main(["verify", "--config", cfgp, "--check", "bogus"]) == 2


def test_verify_pass_and_fail_exit_codes(tmp_path):
    cfgp = write(tmp_path / "c.toml", BASE.format(out=tmp_path / "out"))
    assert main(["verify", "--config", cfgp, "--check", "constant_bound"]) == 0
    rep = json.load(open(tmp_path / "out" / "report.json"))
    assert rep["all_ok"] is True
    assert rep["config_hash"]

    # absurd tolerance forces a failure -> exit 4
    text = BASE.format(out=tmp_path / "out2") + "\n[tolerances]\npestov = 1e-30\n"
    cfg2 = write(tmp_path / "c2.toml", text)
    assert main(["verify", "--config", cfg2, "--check", "pestov"]) == 4


def test_verify_expected_fail_records_ok(tmp_path):
    cfgp = write(tmp_path / "c.toml", BASE.format(out=tmp_path / "out"))
    assert main(["verify", "--config", cfgp, "--check", "pestov_ineq"]) == 0
    rep = json.load(open(tmp_path / "out" / "report.json"))
    controls = [r for r in rep["results"] if r["expected"] == "fail"]
    assert controls and all(r["verdict"] == "fail" for r in controls)


def test_decompose_ground_truth(tmp_path):
    text = BASE.format(out=tmp_path / "out").replace(
        'kind = "constant"', 'kind = "potential_gradient"\norder = 2\ndegree = 2')
    text += "\n[decompose]\nbasis_degree = 4\ntrials = 3\n"
    cfgp = write(tmp_path / "c.toml", text)
    assert main(["decompose", "--config", cfgp]) == 0
    doc = json.load(open(tmp_path / "out" / "decomposition.json"))
    assert doc["norm_f_s"] <= 1e-8 * max(doc["norm_f"], 1e-6)
    assert doc["version"] and doc["config_hash"]
    assert abs(doc["kernel_test"]["intercept"]) < 1e-6


def test_decompose_rank_deficient_exit_3(tmp_path):
    # oversized basis on a tiny quadrature grid: the design matrix is
    # rank deficient
    text = """
seed = 1
out_dir = "{out}"
[metric]
family = "euclidean"
[field]
kind = "random"
order = 2
degree = 2
[grid]
n_r = 3
n_phi = 4
n_alpha = 8
n_boundary = 8
n_dir = 4
[decompose]
basis_degree = 9
run_kernel_test = false
""".format(out=tmp_path / "out")
    cfgp = write(tmp_path / "c.toml", text)
    assert main(["decompose", "--config", cfgp]) == 3


def test_report_roundtrip(tmp_path, capsys):
    cfgp = write(tmp_path / "c.toml", BASE.format(out=tmp_path / "out"))
    assert main(["verify", "--config", cfgp, "--check", "constant_bound"]) == 0
    capsys.readouterr()
    code = main(["report", "--in", str(tmp_path / "out" / "report.json"),
                 "--config", cfgp, "--out", str(tmp_path / "out_rep")])
    assert code == 0
    out = capsys.readouterr().out
    assert "overall: ok" in out
    assert (tmp_path / "out_rep" / "summary.txt").exists()


def test_byte_identical_reruns(tmp_path):
    cfgp = write(tmp_path / "c.toml", BASE.format(out=tmp_path / "out"))
    assert main(["verify", "--config", cfgp, "--check", "degree_commutators"]) == 0
    first = open(tmp_path / "out" / "report.json", "rb").read()
    assert main(["verify", "--config", cfgp, "--check", "degree_commutators"]) == 0
    second = open(tmp_path / "out" / "report.json", "rb").read()
    assert first == second


def test_seed_override_changes_hash(tmp_path):
    cfgp = write(tmp_path / "c.toml", BASE.format(out=tmp_path / "out"))
    assert main(["verify", "--config", cfgp, "--check", "constant_bound"]) == 0
    h1 = json.load(open(tmp_path / "out" / "report.json"))["config_hash"]
    assert main(["verify", "--config", cfgp, "--check", "constant_bound",
                 "--seed", "9"]) == 0
    h2 = json.load(open(tmp_path / "out" / "report.json"))["config_hash"]
    assert h1 != h2


def test_grid_sampled_metric_config(tmp_path):
    from geoxray.metrics import MetricField

    csv = tmp_path / "metric.csv"
    MetricField.hyperbolic_like(0.5).to_grid_csv(csv, n=61)
    text = BASE.format(out=tmp_path / "out").replace(
        'family = "euclidean"', f'family = "grid_sampled"\ncsv = "{csv}"')
    cfgp = write(tmp_path / "c.toml", text)
    assert main(["transform", "--config", cfgp]) == 0
    meta = json.load(open(tmp_path / "out" / "sinogram.json"))
    assert meta["metric_id"] == "grid_sampled"


def test_transform_no_exit_flags_exit_3(tmp_path):
    text = BASE.format(out=tmp_path / "out") + "\n[integrator]\nt_cap = 0.05\n"
    # replace the duplicate integrator table: rebuild cleanly
    text = BASE.format(out=tmp_path / "out").replace(
        "[integrator]\nstep = 2e-3", "[integrator]\nstep = 2e-3\nt_cap = 0.05")
    cfgp = write(tmp_path / "c.toml", text)
    assert main(["transform", "--config", cfgp]) == 3
    meta = json.load(open(tmp_path / "out" / "sinogram.json"))
    assert meta["n_failed_rays"] > 0
    assert meta["failed_rays"]


def test_field_json_source(tmp_path, rng):
    from geoxray.tensors import field_to_json, random_poly_tensor

    fld = tmp_path / "field.json"
    with open(fld, "w") as fh:
        json.dump(field_to_json(random_poly_tensor(0, 2, rng)), fh)
    text = BASE.format(out=tmp_path / "out").replace(
        'kind = "constant"', f'source = "json"\npath = "{fld}"')
    cfgp = write(tmp_path / "c.toml", text)
    assert main(["transform", "--config", cfgp]) == 0
