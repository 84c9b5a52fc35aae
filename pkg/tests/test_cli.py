from __future__ import annotations

import csv
import filecmp
import json

import pytest

import jacobiloc.jacobian as jac
from jacobiloc.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_IO, EXIT_OK, main
from jacobiloc.config import DEFAULTS, ConfigError, ExperimentConfig
from jacobiloc.io import csv_text, format_value

SMALL = """
[model]
L = 12
samples = 16
master_seed = 3

[decay]
m_min = -12
m_max = 12
fit_min = 2
fit_max = 12

[detcheck]
instances = 20
eigen_samples = 10
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def same_tree(a, b) -> bool:
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors


# --- config ----------------------------------------------------------------


def test_defaults_validate():
    cfg = ExperimentConfig.from_mapping({})
    assert cfg["model.L"] == 50
    assert set(flat for flat in DEFAULTS) == set(cfg.values)


def test_dotted_and_nested_keys_agree():
    a = ExperimentConfig.from_mapping({"model": {"density": {"hi": 2.0}}})
    b = ExperimentConfig.from_mapping({"model.density.hi": 2.0})
    assert a.values == b.values


@pytest.mark.parametrize("tree, key", [
    ({"model": {"Lx": 3}}, "model.Lx"),
    ({"model": {"L": "ten"}}, "model.L"),
    ({"decay": {"fit_kind": "cubic"}}, "decay.fit_kind"),
    ({"model": {"density": {"kind": "cauchy"}}}, "model.density.kind"),
    ({"model": {"a": {"kind": "wavy"}}}, "model.a.kind"),
])
def test_config_errors_name_the_key(tree, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        ExperimentConfig.from_mapping(tree)


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[model]\nsamplez = 3\n")
    assert main(["decay", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "model.samplez" in capsys.readouterr().err
    assert main(["decay", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_zeta_out_of_range_is_config_error(tmp_path):
    cfg = write(tmp_path, SMALL + "\n[model.d]\nkind = \"power\"\nzeta = 0.6\n")
    assert main(["decay", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


# --- output formatting -----------------------------------------------------


def test_float_formatting_round_trips():
    for v in (0.1, 1 / 3, 2.0**-40, 1e300):
        assert float(format_value(v)) == v
    assert format_value(True) == "true"
    assert csv_text(("a", "b"), [(1, 0.5)]) == "a,b\n1,0.5\n"


# --- decay and manifest replay ---------------------------------------------


def test_decay_outputs_and_replay(tmp_path):
    cfg = write(tmp_path, SMALL)
    first = tmp_path / "first"
    assert main(["decay", "--config", str(cfg), "--out", str(first)]) == EXIT_OK
    rows = read_csv(first / "correlator.csv")
    assert len(rows) == 25
    assert float(next(r for r in rows if r["m"] == "0")["mean"]) == pytest.approx(1.0, abs=1e-10)
    fit = json.loads((first / "fit.json").read_text())["fits"][0]
    assert fit["kind"] == "exponential"
    manifest = json.loads((first / "manifest.json").read_text())
    assert manifest["command"] == "decay"
    assert manifest["config"]["model"]["samples"] == 16

    replay = tmp_path / "replay"
    assert main(["decay", "--config", str(first / "manifest.json"), "--out", str(replay), "--workers", "3"]) == EXIT_OK
    assert same_tree(first, replay)


def test_seed_override_changes_results(tmp_path):
    cfg = write(tmp_path, SMALL)
    main(["decay", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["decay", "--config", str(cfg), "--out", str(tmp_path / "b"), "--seed-override", "99"])
    assert (tmp_path / "a" / "correlator.csv").read_text() != (tmp_path / "b" / "correlator.csv").read_text()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["config"]["model"]["master_seed"] == 99


def test_unwritable_output_is_io_error(tmp_path):
    cfg = write(tmp_path, SMALL)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["decay", "--config", str(cfg), "--out", str(blocker / "sub")]) == EXIT_IO


# --- perturb ---------------------------------------------------------------


def test_perturb_distances_within_eps(tmp_path):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "p"
    assert main(["perturb", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "perturb.csv")
    assert len(rows) == 16
    assert all(float(r["max_distance"]) < 0.01 and r["within"] == "true" for r in rows)


def test_perturb_rejects_wide_density(tmp_path):
    cfg = write(tmp_path, SMALL + "\n[perturb]\nscale = 1.0\n")
    assert main(["perturb", "--config", str(cfg), "--out", str(tmp_path / "p")]) == EXIT_CONFIG


# --- detcheck --------------------------------------------------------------


def test_detcheck_passes(tmp_path):
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "d"
    assert main(["detcheck", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "detcheck.csv")
    assert {r["identity"] for r in rows} == {"det_recursive_vs_numeric", "det_vs_phi0", "partial_sums", "ratio_products"}
    assert all(r["verdict"] == "PASS" for r in rows)


def test_detcheck_sign_fault_is_invariant_violation(tmp_path, monkeypatch):
    monkeypatch.setattr(jac, "_inject_sign_fault", True)
    cfg = write(tmp_path, SMALL)
    out = tmp_path / "d"
    assert main(["detcheck", "--config", str(cfg), "--out", str(out)]) == EXIT_INVARIANT
    assert any(r["verdict"] == "FAIL" for r in read_csv(out / "detcheck.csv"))


def test_detcheck_degenerate_samples_are_skipped(tmp_path):
    # b == 1 on a 3-site window: the eigenvector at E = 1 is (1, 0, -1), so phi(0) = 0
    text = SMALL + """
[model.c]
value = 1.0

[model.density]
lo = 0.0
hi = 1e-300

[detcheck]
eigen_L = 1
eigen_samples = 3
instances = 5
"""
    cfg = write(tmp_path, text.replace("[detcheck]\ninstances = 20\neigen_samples = 10\n", ""))
    out = tmp_path / "d"
    assert main(["detcheck", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = {r["identity"]: r for r in read_csv(out / "detcheck.csv")}
    assert int(rows["det_vs_phi0"]["skipped"]) == 3
    assert int(rows["det_vs_phi0"]["checked"]) == 6


# --- kernel-norms and chain-check (small grids) -----------------------------


def test_kernel_norms_small(tmp_path):
    text = """
[kernel]
energies = 2
sites = [1]
hs = false

[kernel.grid]
X = 20.0
h = 0.1
grade_from = 2.0
"""
    out = tmp_path / "k"
    code = main(["kernel-norms", "--config", str(write(tmp_path, text)), "--out", str(out)])
    assert code in (EXIT_OK, 3)
    certs = read_csv(out / "certificates.csv")
    assert certs
    assert all(float(c["estimate"]) <= float(c["bound"]) + 1e-3 for c in certs)
    consts = json.loads((out / "constants.json").read_text())
    assert consts["C0"] == pytest.approx(0.0019825307135084083, rel=1e-12)
    assert all(r["product_ok"] == "true" for r in read_csv(out / "product.csv"))


def test_chain_check_small(tmp_path):
    text = """
[chain]
L = [1]
m = [1]
samples = 2000
panels = 16

[chain.grid]
X = 50.0
h = 0.2
"""
    out = tmp_path / "c"
    assert main(["chain-check", "--config", str(write(tmp_path, text)), "--out", str(out)]) == EXIT_OK
    row = read_csv(out / "chain.csv")[0]
    assert row["verdict"] == "PASS"
