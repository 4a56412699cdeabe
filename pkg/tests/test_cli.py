import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from hypgraph.cli import main
from hypgraph.config import parse_config
from hypgraph.errors import ConfigError
from hypgraph.expansion import ExpansionCoefficients

SPHERE = """\
[params]
n = 2
l = 1
sigma = {sigma}

[phi]
kind = sphere
alpha = 0.8

[truncation]
degree = 7

[grid]
r = 0.2
delta = 0.2
n_y = 21
n_t = 21
refinements = 2

[newton]
tol = 1e-10

[verify]
k_list = 1, 2, 3
derivative_list = 0:0, 0:1
checks = first_order, remainder, barrier, derivative_bounds

[output]
dir = {out}
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def sphere_config(tmp_path, out="out", sigma=0.6):
    return write(tmp_path, SPHERE.format(sigma=sigma, out=tmp_path / out))


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_expand_writes_coefficients(tmp_path):
    cfg = sphere_config(tmp_path)
    assert main(["expand", "--config", cfg]) == 0
    data = json.loads((tmp_path / "out" / "coefficients.json").read_text())
    assert data["order"] == 3
    coeffs = ExpansionCoefficients.from_dict(data)
    assert coeffs.c1.coefficient((0,)) == pytest.approx(-0.75)
    rows = read_rows(tmp_path / "out" / "residual_orders.csv")
    assert rows[0] == ["k", "max_abs_coeff_below_k"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
    assert all(float(r[1]) < 1e-12 for r in rows[1:])


def test_outputs_are_byte_identical(tmp_path):
    for out in ("a", "b"):
        cfg = write(tmp_path, SPHERE.format(sigma=0.6, out=tmp_path / out), f"{out}.ini")
        assert main(["expand", "--config", cfg, "--seed", "7"]) == 0
        assert main(["solve", "--config", cfg, "--seed", "7"]) == 0
        assert main(["verify", "--config", cfg, "--seed", "7"]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    assert {"coefficients.json", "solution_41x41.csv", "newton_21x21.csv", "refinement.csv", "report.txt", "fits.csv"} <= set(names)
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_solve_and_verify_outputs(tmp_path):
    cfg = sphere_config(tmp_path)
    assert main(["expand", "--config", cfg]) == 0
    assert main(["solve", "--config", cfg]) == 0
    out = tmp_path / "out"
    ref = read_rows(out / "refinement.csv")
    assert ref[0] == ["n_y", "n_t", "h_y", "h_t", "max_error", "order"]
    assert float(ref[2][5]) > 1.8
    sol = np.loadtxt(out / "solution_41x41.csv", delimiter=",", skiprows=1)
    assert sol.shape == (41 * 41, 3)
    newton = read_rows(out / "newton_41x41.csv")
    assert newton[0] == ["iter", "residual", "damping", "min_eig"]
    assert main(["verify", "--config", cfg]) == 0
    fits = read_rows(out / "fits.csv")
    remainder_rows = [r for r in fits if r[0].startswith("expansion_remainder")]
    # one row per (k, tau, m)
    assert len(remainder_rows) == 3 * 2
    assert (out / "report.txt").read_text().strip().endswith("overall: PASS")


def test_sphere_command(tmp_path):
    cfg = sphere_config(tmp_path)
    assert main(["sphere", "--config", cfg]) == 0
    data = np.genfromtxt(tmp_path / "out" / "barriers.csv", delimiter=",", skip_header=1)
    assert data.shape == (21 * 21, 4)
    ok = ~np.isnan(data[:, 3])
    assert np.all(data[ok, 2] <= data[ok, 3] + 1e-15)


def test_invalid_sigma_names_the_key(tmp_path, capsys):
    cfg = sphere_config(tmp_path, sigma=1.2)
    assert main(["expand", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "params.sigma" in err
    assert "line 4" in err


def test_unknown_key_reports_line():
    text = "[params]\nn = 2\nl = 0\nsigma = 0.6\nsigmaa = 0.5\n[phi]\nkind = sphere\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == 5
    assert info.value.key == "params.sigmaa"


def test_flat_data_expand(tmp_path):
    text = "[params]\nn = 2\nl = 0\nsigma = 0.6\n[phi]\nkind = poly\nterms = 0 : 0.0\n[output]\ndir = {}\n".format(tmp_path / "flat")
    assert main(["expand", "--config", write(tmp_path, text)]) == 0
    coeffs = ExpansionCoefficients.from_dict(json.loads((tmp_path / "flat" / "coefficients.json").read_text()))
    assert coeffs.c1.coefficient((0,)) == pytest.approx(-0.75)
    assert np.abs(coeffs.coefficient(2).coeffs).max() < 1e-14


def test_verify_without_expansion_is_a_config_error(tmp_path, capsys):
    cfg = sphere_config(tmp_path)
    assert main(["verify", "--config", cfg]) == 2
    assert "run 'expand' first" in capsys.readouterr().err


def test_k_beyond_order_is_a_config_error(tmp_path, capsys):
    cfg = sphere_config(tmp_path)
    assert main(["expand", "--config", cfg]) == 0
    text = SPHERE.format(sigma=0.6, out=tmp_path / "out").replace("k_list = 1, 2, 3", "k_list = 1, 4")
    assert main(["verify", "--config", write(tmp_path, text, "bad.ini")]) == 2
    assert "verify.k_list" in capsys.readouterr().err


def test_concave_data_fail_in_the_solver(tmp_path, capsys):
    text = (
        "[params]\nn = 2\nl = 1\nsigma = 0.6\n[phi]\nkind = poly\nterms = 2 : -4.0\n"
        "[grid]\nn_y = 21\nn_t = 21\n[solve]\nsource = expansion\ninitial = first_order\n[output]\ndir = {}\n"
    ).format(tmp_path / "concave")
    assert main(["solve", "--config", write(tmp_path, text)]) == 4
    assert "EllipticityLost" in capsys.readouterr().err
    rows = read_rows(tmp_path / "concave" / "newton_21x21.csv")
    assert float(rows[1][3]) <= 0.0


def test_missing_config_file(tmp_path):
    assert main(["expand", "--config", str(tmp_path / "nope.ini")]) == 2


def test_module_entry_point(tmp_path):
    cfg = sphere_config(tmp_path)
    proc = subprocess.run([sys.executable, "-m", "hypgraph", "expand", "--config", cfg], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "out" / "coefficients.json").exists()
